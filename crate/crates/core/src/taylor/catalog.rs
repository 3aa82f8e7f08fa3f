//! Smooth target functions with analytic derivatives.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atoms::monomial_indices;
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};

/// A function on `[0,1]^d` together with its partial derivatives and the
/// Hölder ball `C^β_d(K)` it is declared to live in.
pub trait SmoothTarget: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn beta(&self) -> f64;
    fn radius(&self) -> f64;
    fn value(&self, x: &[f64]) -> f64;
    /// `∂^α f(x)` for `|α| <= ⌊β⌋` (or `β` when it is an integer).
    fn partial(&self, alpha: &[u32], x: &[f64]) -> f64;
    /// The exact value at a dyadic point, when it is itself dyadic.
    fn exact_value(&self, _x: &[Dyadic]) -> Option<Dyadic> {
        None
    }
}

pub const CATALOG: [&str; 5] = ["zero", "linear", "product", "sumsq", "bump"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Zero,
    Linear,
    Product,
    SumSquares,
    Bump,
}

/// A catalog entry with its smoothness declaration.
#[derive(Clone, Debug)]
pub struct Target {
    kind: Kind,
    name: String,
    d: usize,
    beta: f64,
    k: f64,
}

impl Kind {
    pub fn parse(name: &str) -> Option<Kind> {
        Some(match name {
            "zero" => Kind::Zero,
            "linear" => Kind::Linear,
            "product" => Kind::Product,
            "sumsq" => Kind::SumSquares,
            "bump" => Kind::Bump,
            _ => return None,
        })
    }

    pub fn default_beta(self) -> f64 {
        match self {
            Kind::SumSquares => 3.0,
            _ => 2.0,
        }
    }

    pub fn default_radius(self, d: usize) -> f64 {
        match self {
            Kind::Zero => 1.0,
            Kind::Linear => 4.0,
            Kind::Product => 1.0 + (d * d) as f64,
            Kind::SumSquares => 3.0,
            Kind::Bump => 4.0 * 2f64.powi(d as i32 - 1),
        }
    }
}

impl Target {
    pub fn new(kind: Kind, d: usize, beta: f64, k: f64) -> Result<Target> {
        if d == 0 || beta <= 0.0 || !beta.is_finite() || k <= 0.0 || !k.is_finite() {
            return Err(Error::Domain("targets need d >= 1, beta > 0 and K > 0".into()));
        }
        let name = match kind {
            Kind::Zero => "zero",
            Kind::Linear => "linear",
            Kind::Product => "product",
            Kind::SumSquares => "sumsq",
            Kind::Bump => "bump",
        };
        Ok(Target {
            kind,
            name: name.to_string(),
            d,
            beta,
            k,
        })
    }

    /// Looks up a catalog target, filling in the default `β` and `K`.
    pub fn named(name: &str, d: usize, beta: Option<f64>, k: Option<f64>) -> Result<Target> {
        let kind = Kind::parse(name)
            .ok_or_else(|| Error::Domain(format!("unknown target '{name}' (known: {})", CATALOG.join(", "))))?;
        Target::new(
            kind,
            d,
            beta.unwrap_or(kind.default_beta()),
            k.unwrap_or(kind.default_radius(d)),
        )
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }
}

fn hermite(n: u32, s: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * s);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = 2.0 * s * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `d^n/dt^n exp(-(t - 1/2)^2)`.
fn bump_derivative(n: u32, t: f64) -> f64 {
    let s = t - 0.5;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * hermite(n, s) * (-s * s).exp()
}

impl SmoothTarget for Target {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn beta(&self) -> f64 {
        self.beta
    }

    fn radius(&self) -> f64 {
        self.k
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = self.d as f64;
        match self.kind {
            Kind::Zero => 0.0,
            Kind::Linear => x.iter().sum::<f64>() / d,
            Kind::Product => x.iter().product(),
            Kind::SumSquares => x.iter().map(|v| v * v).sum::<f64>() / (2.0 * d),
            Kind::Bump => x.iter().map(|&t| bump_derivative(0, t)).product(),
        }
    }

    fn partial(&self, alpha: &[u32], x: &[f64]) -> f64 {
        let order: u32 = alpha.iter().sum();
        if order == 0 {
            return self.value(x);
        }
        let d = self.d as f64;
        match self.kind {
            Kind::Zero => 0.0,
            Kind::Linear => {
                if order == 1 {
                    1.0 / d
                } else {
                    0.0
                }
            }
            Kind::Product => {
                if alpha.iter().any(|&a| a > 1) {
                    return 0.0;
                }
                x.iter().zip(alpha).filter(|(_, &a)| a == 0).map(|(v, _)| v).product()
            }
            Kind::SumSquares => {
                let nonzero: Vec<usize> = (0..self.d).filter(|&j| alpha[j] > 0).collect();
                if nonzero.len() != 1 {
                    return 0.0;
                }
                let j = nonzero[0];
                match alpha[j] {
                    1 => x[j] / d,
                    2 => 1.0 / d,
                    _ => 0.0,
                }
            }
            Kind::Bump => x.iter().zip(alpha).map(|(&t, &a)| bump_derivative(a, t)).product(),
        }
    }

    fn exact_value(&self, x: &[Dyadic]) -> Option<Dyadic> {
        let d = self.d as u64;
        let shift = |div: u64| div.is_power_of_two().then(|| div.trailing_zeros() as i64);
        match self.kind {
            Kind::Zero => Some(Dyadic::ZERO),
            Kind::Linear => {
                let s: Dyadic = x.iter().sum();
                Some(s.scale_pow2(-shift(d)?))
            }
            Kind::Product => Some(x.iter().fold(Dyadic::ONE, |acc, v| acc * v)),
            Kind::SumSquares => {
                let s: Dyadic = x.iter().map(|v| v * v).sum();
                Some(s.scale_pow2(-shift(2 * d)?))
            }
            Kind::Bump => None,
        }
    }
}

fn indices_up_to(d: usize, max_order: u32) -> Vec<Vec<u32>> {
    monomial_indices(d, max_order as f64 + 1.0)
}

/// Lower estimate of the Hölder norm from random samples.
///
/// Sums `sup |∂^α f|` over `|α| < β` and the Hölder quotient of the top
/// derivatives (their oscillation when `β` is an integer).
pub fn estimate_ball_norm(target: &dyn SmoothTarget, samples: usize, seed: u64) -> f64 {
    let d = target.dim();
    let beta = target.beta();
    let top = beta.floor() as u32;
    let frac = beta - beta.floor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|i| {
            if i < 1 << d {
                (0..d).map(|j| ((i >> j) & 1) as f64).collect()
            } else if i == 1 << d {
                vec![0.5; d]
            } else {
                (0..d).map(|_| rng.random::<f64>()).collect()
            }
        })
        .collect();
    let mut total = 0.0;
    for alpha in monomial_indices(d, beta) {
        let sup = points
            .iter()
            .map(|x| target.partial(&alpha, x).abs())
            .fold(0.0, f64::max);
        total += sup;
    }
    for alpha in indices_up_to(d, top) {
        if alpha.iter().sum::<u32>() != top {
            continue;
        }
        let vals: Vec<f64> = points.iter().map(|x| target.partial(&alpha, x)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let dist = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if dist == 0.0 {
                    continue;
                }
                worst = worst.max((vals[i] - vals[j]).abs() / dist.powf(frac));
            }
        }
        total += worst;
    }
    total
}

/// Compares every declared partial derivative of order up to `⌊β⌋` against a
/// central difference of the next lower order.
pub fn check_derivatives(target: &dyn SmoothTarget, samples: usize, seed: u64) -> Result<()> {
    const STEP: f64 = 1e-5;
    const REL_TOL: f64 = 1e-4;
    let d = target.dim();
    let top = target.beta().floor() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(STEP..1.0 - STEP)).collect();
        for alpha in indices_up_to(d, top) {
            let Some(j) = alpha.iter().position(|&a| a > 0) else {
                continue;
            };
            let mut lower = alpha.clone();
            lower[j] -= 1;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += STEP;
            xm[j] -= STEP;
            let fd = (target.partial(&lower, &xp) - target.partial(&lower, &xm)) / (2.0 * STEP);
            let exact = target.partial(&alpha, &x);
            if (fd - exact).abs() > REL_TOL * exact.abs().max(1.0) {
                return Err(Error::BallMembership(format!(
                    "{}: derivative {alpha:?} at {x:?} is {exact}, finite difference gives {fd}",
                    target.name()
                )));
            }
        }
    }
    Ok(())
}

/// Spot-checks `f ∈ C^β_d(K)`: derivative consistency plus a sampled norm
/// estimate that must not exceed `K`.
pub fn check_ball(target: &dyn SmoothTarget, samples: usize, seed: u64) -> Result<()> {
    check_derivatives(target, samples.min(64), seed)?;
    let norm = estimate_ball_norm(target, samples, seed);
    if norm > target.radius() {
        return Err(Error::BallMembership(format!(
            "{}: sampled norm {norm:.6} exceeds K = {}",
            target.name(),
            target.radius()
        )));
    }
    Ok(())
}
