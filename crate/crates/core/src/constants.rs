//! A block that appends dyadic constants `y_i / 2^Δ` to its input.
//!
//! The first `Δ` matrices build powers `2^1..2^top` from the constant
//! channel by doubling and carry them forward; the next matrix sums the
//! binary digits of every target; the remaining `Δ` matrices halve.

use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::net::{QuintNet, QuintWeight, WeightMatrix};

/// Largest supported `Δ`; targets are stored as `u64`.
pub const MAX_DELTA: u32 = 63;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstantPlan {
    pub delta: u32,
    pub targets: Vec<u64>,
    /// Signs applied by whichever layer consumes the constants.
    pub signs: Vec<i8>,
}

impl ConstantPlan {
    pub fn new(delta: u32, targets: Vec<u64>) -> Result<Self> {
        let signs = vec![1; targets.len()];
        Self::with_signs(delta, targets, signs)
    }

    pub fn with_signs(delta: u32, targets: Vec<u64>, signs: Vec<i8>) -> Result<Self> {
        if delta > MAX_DELTA {
            return Err(Error::Domain(format!("delta {delta} exceeds {MAX_DELTA}")));
        }
        if signs.len() != targets.len() || signs.iter().any(|s| s.abs() != 1) {
            return Err(Error::Domain("one sign (+1 or -1) per target is required".into()));
        }
        let top = 1u64 << delta;
        if let Some(bad) = targets.iter().find(|&&y| y == 0 || y > top) {
            return Err(Error::Domain(format!("target {bad} is outside (0, 2^{delta}]")));
        }
        Ok(ConstantPlan { delta, targets, signs })
    }

    /// Emitted values `z_i = y_i / 2^Δ`.
    pub fn values(&self) -> Vec<Dyadic> {
        self.targets.iter().map(|&y| Dyadic::new(y, self.delta)).collect()
    }

    /// Signed values `s_i z_i`.
    pub fn signed_values(&self) -> Vec<Dyadic> {
        self.values()
            .into_iter()
            .zip(&self.signs)
            .map(|(z, &s)| if s < 0 { -z } else { z })
            .collect()
    }

    /// The bound `2(1 + d + D + Δ)Δ` with `1 + d` the passthrough width.
    pub fn l0_budget(&self, passthrough_width: usize) -> u64 {
        let delta = self.delta as u64;
        2 * (passthrough_width as u64 + self.targets.len() as u64 + delta) * delta
    }
}

/// Input `(1, x_2..x_P)`, output `(1, x_2..x_P, z_1..z_D)`, with `2Δ`
/// hidden layers and weights in `{0, 1/2, 1, 2}`. Channel 0 must carry the
/// constant 1 and all passthrough channels must be nonnegative.
pub fn build_const_net(plan: &ConstantPlan, passthrough_width: usize) -> Result<QuintNet> {
    use QuintWeight::{PlusHalf as H, PlusOne as P1, Two};

    if passthrough_width == 0 {
        return Err(Error::Width("the constant-1 channel is required".into()));
    }
    let p = passthrough_width;
    let d = plan.targets.len();
    let delta = plan.delta as usize;
    let full = 1u64 << plan.delta;
    let label = format!("Const_{}x{}", plan.delta, d);

    let pass = |m: &mut WeightMatrix| {
        for i in 0..p {
            m.set(i, i, P1);
        }
    };

    if delta == 0 {
        let mut w = WeightMatrix::zeros(p + d, p);
        pass(&mut w);
        for i in 0..d {
            w.set(p + i, 0, P1);
        }
        return QuintNet::new(vec![w], label);
    }

    let top = plan
        .targets
        .iter()
        .filter(|&&y| y != full)
        .map(|&y| 63 - y.leading_zeros() as usize)
        .max()
        .unwrap_or(0);

    let mut mats = Vec::with_capacity(2 * delta + 1);
    // Hidden layer j (1..=Δ) holds the passthrough then 2^1..2^min(j, top).
    for j in 1..=delta {
        let have = (j - 1).min(top);
        let next = j.min(top);
        let mut w = WeightMatrix::zeros(p + next, p + have);
        pass(&mut w);
        for k in 0..have {
            w.set(p + k, p + k, P1);
        }
        if j <= top {
            let src = if j == 1 { 0 } else { p + j - 2 };
            w.set(p + j - 1, src, Two);
        }
        mats.push(w);
    }
    // Digit sums: accumulator i holds y_i; 2^0 comes from channel 0.
    let mut sum = WeightMatrix::zeros(p + d, p + top);
    pass(&mut sum);
    for (i, &y) in plan.targets.iter().enumerate() {
        if y == full {
            continue;
        }
        for k in 0..=top {
            if y >> k & 1 == 1 {
                sum.set(p + i, if k == 0 { 0 } else { p + k - 1 }, P1);
            }
        }
    }
    mats.push(sum);
    for step in 1..=delta {
        let mut w = WeightMatrix::zeros(p + d, p + d);
        pass(&mut w);
        for (i, &y) in plan.targets.iter().enumerate() {
            if y != full {
                w.set(p + i, p + i, H);
            } else if step == delta {
                w.set(p + i, 0, P1);
            }
        }
        mats.push(w);
    }
    QuintNet::new(mats, label)
}
