//! Product and monomial blocks built from composed triangle waves.
//!
//! `T^k(x) = (x/2)_+ - (x - 2^{1-2k})_+` and `R^k = T^k ∘ … ∘ T^1`.
//! The partial sums of `R^k` approximate `g(x) = x(1-x)` to within
//! `2^-m`, and the polarization identity
//! `xy = g((x-y+1)/2) - g((x+y)/2) + (x+y)/2 - 1/4`
//! turns that into a product network.

use crate::dyadic::{dy, Dyadic};
use crate::error::{Error, Result};
use crate::net::{QuintNet, QuintWeight, StageBuilder, WeightMatrix};

use QuintWeight::{MinusHalf as MH, MinusOne as M1, PlusHalf as H, PlusOne as P1, Zero as O};

/// Scalar `T^k(x)` for `x ∈ [0, 2^{2-2k}]`.
pub fn tee(k: u32, x: &Dyadic) -> Result<Dyadic> {
    if k == 0 {
        return Err(Error::Domain("triangle wave index starts at 1".into()));
    }
    let hi = Dyadic::pow2_inv(2 * k - 2);
    if x.is_negative() || x > &hi {
        return Err(Error::Domain(format!("T^{k} is defined on [0, {hi}], got {x}")));
    }
    Ok(x.half().relu() - (x - &Dyadic::pow2_inv(2 * k - 1)).relu())
}

/// Scalar `Σ_{k=1}^m R^k(x)` for `x ∈ [0, 1]`.
pub fn r_sum(m: u32, x: &Dyadic) -> Result<Dyadic> {
    if x.is_negative() || x > &Dyadic::ONE {
        return Err(Error::Domain(format!("R-sum is defined on [0, 1], got {x}")));
    }
    let mut r = x.clone();
    let mut total = Dyadic::ZERO;
    for k in 1..=m {
        r = tee(k, &r)?;
        total += &r;
    }
    Ok(total)
}

/// `g(x) = x(1 - x)`.
pub fn parabola(x: &Dyadic) -> Dyadic {
    x * &(Dyadic::ONE - x)
}

/// What `Mult_m(1, x, y)` computes, evaluated directly from [`r_sum`].
pub fn mult_reference(m: u32, x: &Dyadic, y: &Dyadic) -> Result<Dyadic> {
    let u = (x - y + Dyadic::ONE).half();
    let w = (x + y).half();
    let raw = r_sum(m + 1, &u)? - r_sum(m + 1, &w)? + &w - dy(1, 2);
    Ok(raw.relu().min(Dyadic::ONE))
}

fn block_a() -> [[QuintWeight; 4]; 4] {
    [[H, O, O, O], [O, H, O, MH], [O, P1, P1, M1], [MH, P1, O, M1]]
}

fn block_b() -> [[QuintWeight; 4]; 4] {
    [[H, O, O, O], [O, P1, O, O], [O, O, P1, O], [O, O, O, P1]]
}

/// Places copies of a 4x4 block on the diagonal after `lead` carried
/// channels (which get identity weights).
fn block_diag(lead: usize, block: &[[QuintWeight; 4]; 4], copies: usize) -> WeightMatrix {
    let n = lead + 4 * copies;
    let mut m = WeightMatrix::zeros(n, n);
    for i in 0..lead {
        m.set(i, i, P1);
    }
    for c in 0..copies {
        let off = lead + 4 * c;
        for (r, row) in block.iter().enumerate() {
            for (k, &w) in row.iter().enumerate() {
                m.set(off + r, off + k, w);
            }
        }
    }
    m
}

/// `N_m`: depth `2m`, width 4, maps `(1/4, T_+(u), h, T_-^1(u))` to
/// `Σ_{k=1}^{m+1} R^k(u) + h` for `u ∈ [0,1]`, `h ≥ 0`.
pub fn build_nm(m: u32) -> Result<QuintNet> {
    if m == 0 {
        return Err(Error::Domain("N_m needs m >= 1".into()));
    }
    let mut mats = Vec::with_capacity(2 * m as usize + 1);
    for _ in 0..m {
        mats.push(block_diag(0, &block_a(), 1));
        mats.push(block_diag(0, &block_b(), 1));
    }
    mats.push(WeightMatrix::from_rows(vec![vec![O, P1, P1, M1]]));
    QuintNet::new(mats, format!("N_{m}"))
}

/// `Mult_m`: input `(1, x, y)`, output within `2^-m` of `xy` on `[0,1]^2`,
/// clipped to `[0,1]`. Depth `2m + 4`, maximal width 9.
pub fn build_mult(m: u32) -> Result<QuintNet> {
    if m == 0 {
        return Err(Error::Domain("Mult_m needs m >= 1".into()));
    }
    let mut mats = Vec::with_capacity(2 * m as usize + 5);
    // σ of (1, 1/2, u, w, u - 1/2, w - 1/2) with u = (x-y+1)/2, w = (x+y)/2.
    mats.push(WeightMatrix::from_rows(vec![
        vec![P1, O, O],
        vec![H, O, O],
        vec![H, H, MH],
        vec![O, H, H],
        vec![O, H, MH],
        vec![MH, H, H],
    ]));
    // (1, 1/4, T+(u), w, T-^1(u), 1/4, T+(w), 1/4, T-^1(w))
    mats.push(WeightMatrix::from_rows(vec![
        vec![P1, O, O, O, O, O],
        vec![O, H, O, O, O, O],
        vec![O, O, H, O, O, O],
        vec![O, O, O, P1, O, O],
        vec![O, O, O, O, P1, O],
        vec![O, H, O, O, O, O],
        vec![O, O, O, H, O, O],
        vec![O, H, O, O, O, O],
        vec![O, O, O, O, O, P1],
    ]));
    for _ in 0..m {
        mats.push(block_diag(1, &block_a(), 2));
        mats.push(block_diag(1, &block_b(), 2));
    }
    // The closing (0 1 1 -1) rows of both N_m copies merge into the first
    // clipping layer: t = σ(1 - u' + v').
    mats.push(WeightMatrix::from_rows(vec![
        vec![P1, O, O, O, O, O, O, O, O],
        vec![P1, O, M1, M1, P1, O, P1, P1, M1],
    ]));
    mats.push(WeightMatrix::from_rows(vec![vec![P1, M1]]));
    mats.push(WeightMatrix::from_rows(vec![vec![P1]]));
    QuintNet::new(mats, format!("Mult_{m}"))
}

/// One pairing round over `(1, v_1..v_k)`: emits `(1, Mult(v1,v2), …,
/// leftover)` or, when `keep_one` is false, drops the constant channel.
fn pairing_round(k: usize, m: u32, keep_one: bool) -> Result<QuintNet> {
    let mult = build_mult(m)?;
    let depth = mult.depth();
    let mut st = StageBuilder::new(k + 1);
    if keep_one {
        st.part(QuintNet::identity(1).extend_depth(depth), vec![0]);
    }
    for p in 0..k / 2 {
        st.part(mult.clone(), vec![0, 1 + 2 * p, 2 + 2 * p]);
    }
    if k % 2 == 1 {
        st.part(QuintNet::identity(1).extend_depth(depth), vec![k]);
    }
    st.build()
}

/// `Mult^r_m`: input `(1, x_1..x_r)`, output within `r² 2^-m` of
/// `Π x_i`. Neighbours are paired for `⌈log2 r⌉` rounds; an unpaired
/// last entry is carried to the next round by an identity channel.
pub fn build_mult_r(r: usize, m: u32) -> Result<QuintNet> {
    if r == 0 || m == 0 {
        return Err(Error::Domain("Mult^r_m needs r >= 1 and m >= 1".into()));
    }
    if r == 1 {
        let mut w = WeightMatrix::zeros(1, 2);
        w.set(0, 1, P1);
        return QuintNet::new(vec![w], format!("Mult^1_{m}"));
    }
    let mut k = r;
    let mut net: Option<QuintNet> = None;
    while k > 1 {
        let next = k.div_ceil(2);
        let round = pairing_round(k, m, next > 1)?;
        net = Some(match net {
            None => round,
            Some(prev) => QuintNet::compose(&prev, &round)?,
        });
        k = next;
    }
    Ok(net.expect("at least one round").with_label(format!("Mult^{r}_{m}")))
}

/// `⌈log2 r⌉` for `r >= 1`.
pub fn ceil_log2(r: usize) -> u32 {
    if r <= 1 {
        0
    } else {
        usize::BITS - (r - 1).leading_zeros()
    }
}

/// Largest integer strictly below `gamma`, i.e. the top monomial degree.
pub fn max_degree_below(gamma: f64) -> u32 {
    let c = gamma.ceil();
    if c <= 0.0 {
        0
    } else {
        c as u32 - 1
    }
}

/// All multi-indices `α ∈ ℕ^d` with `|α| < gamma`, graded, and within
/// each degree lexicographically descending (`x_1` before `x_2`).
pub fn monomial_indices(d: usize, gamma: f64) -> Vec<Vec<u32>> {
    if gamma <= 0.0 {
        return Vec::new();
    }
    let top = max_degree_below(gamma);
    let mut out = Vec::new();
    for deg in 0..=top {
        let mut cur = vec![0u32; d];
        fill_degree(d, 0, deg, &mut cur, &mut out);
    }
    out
}

fn fill_degree(d: usize, pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == d {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for a in (0..=left).rev() {
        cur[pos] = a;
        fill_degree(d, pos + 1, left - a, cur, out);
    }
    cur[pos] = 0;
}

/// `C_{d,γ}`: the number of monomials of degree `< γ` in `d` variables.
pub fn monomial_count(d: usize, gamma: f64) -> usize {
    monomial_indices(d, gamma).len()
}

/// `Mon^d_{m,γ}`: input `(1, x_1..x_d)`, one output per multi-index of
/// [`monomial_indices`], each within `γ² 2^-m` of `x^α`.
///
/// Degrees 0 and 1 are carried exactly. Higher degrees go through
/// `Mult^r_m` with `r` the top degree, padding short monomials with the
/// constant channel. A leading fan-out layer gives every product its own
/// copy of the inputs.
pub fn build_mon(d: usize, gamma: f64, m: u32) -> Result<QuintNet> {
    if d == 0 || gamma <= 0.0 || m == 0 {
        return Err(Error::Domain("Mon needs d >= 1, gamma > 0, m >= 1".into()));
    }
    let alphas = monomial_indices(d, gamma);
    let top = max_degree_below(gamma) as usize;
    let label = format!("Mon^{d}_{{{m},{gamma}}}");

    // Which input channel feeds a degree-0/1 monomial directly.
    let direct = |alpha: &[u32]| -> Option<usize> {
        match alpha.iter().sum::<u32>() {
            0 => Some(0),
            1 => Some(1 + alpha.iter().position(|&a| a == 1).expect("degree one")),
            _ => None,
        }
    };

    if top <= 1 {
        let mut w = WeightMatrix::zeros(alphas.len(), d + 1);
        for (i, a) in alphas.iter().enumerate() {
            w.set(i, direct(a).expect("degree <= 1"), P1);
        }
        return QuintNet::new(vec![w], label);
    }

    let mult = build_mult_r(top, m)?;
    let depth = mult.depth();
    let mut fan_rows: Vec<usize> = Vec::new();
    let mut parts: Vec<(QuintNet, Vec<usize>)> = Vec::new();
    for a in &alphas {
        let start = fan_rows.len();
        match direct(a) {
            Some(ch) => {
                fan_rows.push(ch);
                parts.push((QuintNet::identity(1).extend_depth(depth), vec![start]));
            }
            None => {
                fan_rows.push(0);
                for (j, &e) in a.iter().enumerate() {
                    fan_rows.extend(std::iter::repeat_n(1 + j, e as usize));
                }
                let deg: usize = a.iter().map(|&e| e as usize).sum();
                fan_rows.extend(std::iter::repeat_n(0, top - deg));
                parts.push((mult.clone(), (start..fan_rows.len()).collect()));
            }
        }
    }
    let mut fan = WeightMatrix::zeros(fan_rows.len(), d + 1);
    for (r, &c) in fan_rows.iter().enumerate() {
        fan.set(r, c, P1);
    }
    let fan = QuintNet::new(vec![fan], "fanout")?;
    let refs: Vec<(&QuintNet, &[usize])> = parts.iter().map(|(n, r)| (n, r.as_slice())).collect();
    let bank = QuintNet::parallel_routed(fan.output_width(), &refs)?;
    Ok(QuintNet::compose(&fan, &bank)?.with_label(label))
}
