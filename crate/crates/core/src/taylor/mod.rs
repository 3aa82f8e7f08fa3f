//! Local Taylor approximation on a uniform grid with dyadic coefficients,
//! assembled into one network.
//!
//! The emitted network computes
//! `B 2^h (Σ_ℓ Mult(hat_ℓ, Q_ℓ) - ½ Σ_ℓ hat_ℓ)` where `hat_ℓ` is the tent
//! product at grid point `ℓ` and `Q_ℓ = ½ + P̃_ℓ / (B 2^h)` is the shifted,
//! rescaled local polynomial. Every intermediate channel stays in `[0, 1]`.

pub mod catalog;

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;

use crate::atoms::{build_mon, build_mult, build_mult_r, ceil_log2, monomial_count, monomial_indices};
use crate::constants::{build_const_net, ConstantPlan, MAX_DELTA};
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::net::{QuintNet, QuintWeight, StageBuilder, WeightMatrix};

pub use catalog::{check_ball, estimate_ball_norm, Kind, SmoothTarget, Target, CATALOG};

/// Parameters of one approximation run and the constants derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxConfig {
    pub d: usize,
    pub beta: f64,
    pub radius: f64,
    /// Requested size `N`.
    pub n: u64,
    pub m: u32,
    /// Smallest `(2^ν + 1)^d` that is at least `N`.
    pub n_tilde: u64,
    pub nu: u32,
    /// Grid resolution `M = 2^ν`.
    pub grid: u64,
    /// `B = ⌊2Ke^d⌋`.
    pub scale: u64,
    /// Smallest `b` with `2^b >= B M^β (β+1)^d`.
    pub bits: u32,
    /// `Δ = max(νd + 1, b)`.
    pub delta: u32,
    /// `D = M + (β(M+1))^d`.
    pub const_count: f64,
    /// Number of monomials of degree below `β`.
    pub monomials: usize,
    /// `h` with `2^h >= 2C`; local polynomials are divided by `B 2^h`.
    pub headroom: u32,
    /// Exponent of the constants block, `max(ν, b + h)`.
    pub const_delta: u32,
}

fn is_integer(x: f64) -> bool {
    x.fract() == 0.0 && x.abs() < 1e15
}

impl ApproxConfig {
    /// Derives every constant without checking the size precondition.
    pub fn derive(d: usize, beta: f64, radius: f64, n: u64, m: u32) -> Result<ApproxConfig> {
        if d == 0 || beta <= 0.0 || radius <= 0.0 || n == 0 || m == 0 {
            return Err(Error::Domain("need d >= 1, beta > 0, K > 0, N >= 1, m >= 1".into()));
        }
        let mut nu = 0u32;
        let n_tilde = loop {
            let side = (1u128 << nu) + 1;
            let total = side.checked_pow(d as u32).filter(|t| *t <= u64::MAX as u128);
            match total {
                Some(t) if t >= n as u128 => break t as u64,
                Some(_) if nu < 62 => nu += 1,
                _ => return Err(Error::Domain(format!("grid for N = {n}, d = {d} is too large"))),
            }
        };
        let grid = 1u64 << nu;
        let scale = (2.0 * radius * (d as f64).exp()).floor();
        if scale < 1.0 {
            return Err(Error::Precondition(format!("B = ⌊2Ke^d⌋ = {scale} must be positive")));
        }
        let scale = scale as u64;
        let bits = if is_integer(beta) {
            let b = beta as u32;
            let x = (BigUint::from(scale) * BigUint::from(b as u64 + 1).pow(d as u32)) << (nu as u64 * b as u64);
            let len = x.bits() as u32;
            if x == BigUint::from(1u8) << (len as u64 - 1) {
                len - 1
            } else {
                len
            }
        } else {
            let x = (scale as f64).log2() + nu as f64 * beta + d as f64 * (beta + 1.0).log2();
            (x + 1e-9).ceil().max(0.0) as u32
        };
        let monomials = monomial_count(d, beta);
        let headroom = ceil_log2(2 * monomials);
        let const_delta = nu.max(bits + headroom);
        if const_delta > MAX_DELTA - 1 {
            return Err(Error::Domain(format!(
                "coefficient resolution 2^-{const_delta} is too fine"
            )));
        }
        Ok(ApproxConfig {
            d,
            beta,
            radius,
            n,
            m,
            n_tilde,
            nu,
            grid,
            scale,
            bits,
            delta: (nu * d as u32 + 1).max(bits),
            const_count: grid as f64 + (beta * (grid + 1) as f64).powi(d as i32),
            monomials,
            headroom,
            const_delta,
        })
    }

    /// `N >= (β+1)^d ∨ (K+1)e^d`.
    pub fn check_precondition(d: usize, beta: f64, radius: f64, n: u64) -> Result<()> {
        let smooth = (beta + 1.0).powi(d as i32);
        if (n as f64) < smooth {
            return Err(Error::Precondition(format!("N = {n} < (β+1)^d = {smooth}")));
        }
        let size = (radius + 1.0) * (d as f64).exp();
        if (n as f64) < size {
            return Err(Error::Precondition(format!("N = {n} < (K+1)e^d = {size:.6}")));
        }
        Ok(())
    }

    /// Number of grid points `(M+1)^d`.
    pub fn anchors(&self) -> usize {
        self.n_tilde as usize
    }
}

/// Config for `target` with the size precondition enforced.
pub fn make_config(target: &dyn SmoothTarget, n: u64, m: u32) -> Result<ApproxConfig> {
    ApproxConfig::check_precondition(target.dim(), target.beta(), target.radius(), n)?;
    ApproxConfig::derive(target.dim(), target.beta(), target.radius(), n, m)
}

/// Grid indices `ℓ ∈ {0..M}^d` in lexicographic order.
pub fn grid_indices(cfg: &ApproxConfig) -> Vec<Vec<u64>> {
    let side = cfg.grid + 1;
    (0..cfg.anchors() as u64)
        .map(|mut flat| {
            let mut idx = vec![0; cfg.d];
            for slot in idx.iter_mut().rev() {
                *slot = flat % side;
                flat /= side;
            }
            idx
        })
        .collect()
}

/// Grid points `ℓ / M`.
pub fn grid_points(cfg: &ApproxConfig) -> Vec<Vec<Dyadic>> {
    grid_indices(cfg)
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| Dyadic::new(i, cfg.nu)).collect())
        .collect()
}

fn flat_index(cfg: &ApproxConfig, idx: &[u64]) -> usize {
    idx.iter().fold(0u64, |acc, &i| acc * (cfg.grid + 1) + i) as usize
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(alpha: &[u32]) -> f64 {
    alpha.iter().map(|&a| (1..=a).map(f64::from).product::<f64>()).product()
}

/// Coefficients `c_γ` of the Taylor polynomial at `anchor`, written in the
/// monomial basis `x^γ` and ordered like [`monomial_indices`].
pub fn taylor_coefficients(target: &dyn SmoothTarget, anchor: &[f64]) -> Vec<f64> {
    let alphas = monomial_indices(target.dim(), target.beta());
    let derivs: Vec<f64> = alphas
        .iter()
        .map(|a| target.partial(a, anchor) / factorial(a))
        .collect();
    alphas
        .iter()
        .map(|gamma| {
            alphas
                .iter()
                .zip(&derivs)
                .filter(|(alpha, _)| alpha.iter().zip(gamma).all(|(a, g)| a >= g))
                .map(|(alpha, &dv)| {
                    let weight: f64 = alpha
                        .iter()
                        .zip(gamma)
                        .zip(anchor)
                        .map(|((&a, &g), &x)| binomial(a, g) * (-x).powi((a - g) as i32))
                        .product();
                    dv * weight
                })
                .sum()
        })
        .collect()
}

/// `k = ⌊c 2^b / B⌋` and `c̃ = kB / 2^b`, computed exactly from the binary64
/// value of `c`.
pub fn quantize_coefficient(c: f64, scale: u64, bits: u32) -> Result<(i64, Dyadic)> {
    if !c.is_finite() || c.abs() > scale as f64 {
        return Err(Error::BallMembership(format!(
            "Taylor coefficient {c} lies outside [-{scale}, {scale}]"
        )));
    }
    let exact = Dyadic::from_f64(c)?;
    let num: BigInt = exact.mantissa() << bits;
    let den: BigInt = BigInt::from(scale) << exact.exponent();
    let k = num.div_floor(&den);
    let k: i64 = i64::try_from(k).map_err(|_| Error::Domain("quantized coefficient overflows".into()))?;
    Ok((k, Dyadic::new(k as i128 * scale as i128, bits)))
}

/// The local polynomial at one grid point with quantized coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedPolynomial {
    pub index: Vec<u64>,
    pub anchor: Vec<Dyadic>,
    pub alphas: Vec<Vec<u32>>,
    pub raw: Vec<f64>,
    pub ks: Vec<i64>,
    pub coefficients: Vec<Dyadic>,
}

impl QuantizedPolynomial {
    /// `Σ_γ c̃_γ x^γ`.
    pub fn eval(&self, x: &[Dyadic]) -> Dyadic {
        self.alphas
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, c)| !c.is_zero())
            .map(|(alpha, c)| {
                let mono = alpha
                    .iter()
                    .zip(x)
                    .fold(Dyadic::ONE, |acc, (&e, v)| (0..e).fold(acc, |a, _| a * v));
                c * &mono
            })
            .sum()
    }

    /// `Σ_γ |c_γ - c̃_γ|`, exact in the binary64 values of `c`.
    pub fn coefficient_gap(&self) -> Result<Dyadic> {
        let mut total = Dyadic::ZERO;
        for (c, q) in self.raw.iter().zip(&self.coefficients) {
            total += (Dyadic::from_f64(*c)? - q).abs();
        }
        Ok(total)
    }
}

pub fn quantize_taylor(target: &dyn SmoothTarget, cfg: &ApproxConfig, index: &[u64]) -> Result<QuantizedPolynomial> {
    let anchor: Vec<Dyadic> = index.iter().map(|&i| Dyadic::new(i, cfg.nu)).collect();
    let anchor_f: Vec<f64> = anchor.iter().map(Dyadic::to_f64).collect();
    let raw = taylor_coefficients(target, &anchor_f);
    let mut ks = Vec::with_capacity(raw.len());
    let mut coefficients = Vec::with_capacity(raw.len());
    for &c in &raw {
        let (k, q) = quantize_coefficient(c, cfg.scale, cfg.bits)?;
        ks.push(k);
        coefficients.push(q);
    }
    Ok(QuantizedPolynomial {
        index: index.to_vec(),
        anchor,
        alphas: monomial_indices(cfg.d, cfg.beta),
        raw,
        ks,
        coefficients,
    })
}

/// `Π_j (1 - M|x_j - ℓ_j/M|)_+`, exact.
pub fn hat_value(cfg: &ApproxConfig, index: &[u64], x: &[Dyadic]) -> Dyadic {
    let mut out = Dyadic::ONE;
    for (&i, xj) in index.iter().zip(x) {
        let dist = (xj.scale_pow2(cfg.nu as i64) - Dyadic::from_int(i as i64)).abs();
        let tent = (Dyadic::ONE - dist).relu();
        if tent.is_zero() {
            return Dyadic::ZERO;
        }
        out = out * tent;
    }
    out
}

/// Binary64 version of [`hat_value`] for non-dyadic points.
pub fn hat_value_f64(cfg: &ApproxConfig, index: &[u64], x: &[f64]) -> f64 {
    index
        .iter()
        .zip(x)
        .map(|(&i, &xj)| (1.0 - (cfg.grid as f64 * xj - i as f64).abs()).max(0.0))
        .product()
}

/// Grid points whose hat can be nonzero at `x`.
fn active_anchors(cfg: &ApproxConfig, x: &[Dyadic]) -> Vec<Vec<u64>> {
    let mut combos: Vec<Vec<u64>> = vec![Vec::new()];
    for xj in x {
        let lo = xj.scale_pow2(cfg.nu as i64).floor();
        let lo = u64::try_from(lo).unwrap_or(0).min(cfg.grid);
        let cands: Vec<u64> = if lo < cfg.grid { vec![lo, lo + 1] } else { vec![lo] };
        combos = combos
            .into_iter()
            .flat_map(|c| {
                cands.iter().map(move |&i| {
                    let mut next = c.clone();
                    next.push(i);
                    next
                })
            })
            .collect();
    }
    combos
}

/// The quantized surrogate `P̃^β f = Σ_ℓ P̃_ℓ hat_ℓ`.
#[derive(Clone, Debug)]
pub struct Surrogate {
    pub cfg: ApproxConfig,
    pub polys: Vec<QuantizedPolynomial>,
}

impl Surrogate {
    pub fn new(target: &dyn SmoothTarget, cfg: &ApproxConfig) -> Result<Surrogate> {
        let polys = grid_indices(cfg)
            .iter()
            .map(|idx| quantize_taylor(target, cfg, idx))
            .collect::<Result<Vec<_>>>()?;
        Ok(Surrogate {
            cfg: cfg.clone(),
            polys,
        })
    }

    pub fn eval(&self, x: &[Dyadic]) -> Dyadic {
        active_anchors(&self.cfg, x)
            .iter()
            .map(|idx| {
                let hat = hat_value(&self.cfg, idx, x);
                if hat.is_zero() {
                    Dyadic::ZERO
                } else {
                    hat * self.polys[flat_index(&self.cfg, idx)].eval(x)
                }
            })
            .sum()
    }

    /// Largest per-anchor `Σ_γ |c_γ - c̃_γ|`.
    pub fn max_coefficient_gap(&self) -> Result<Dyadic> {
        let mut worst = Dyadic::ZERO;
        for p in &self.polys {
            worst = worst.max(p.coefficient_gap()?);
        }
        Ok(worst)
    }
}

/// Exact evaluation of the surrogate at `x`.
pub fn p_tilde_eval(surrogate: &Surrogate, x: &[Dyadic]) -> Dyadic {
    surrogate.eval(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TentInput {
    /// Anchor 0; input `(1, x)`.
    Zero,
    /// Anchor 1; input `(1, x)`.
    One,
    /// Interior anchor read from a constant channel; input `(1, x, a)`.
    Shift,
}

/// `(1 - M|x - a|)` before the final ReLU, depth `ν + 1`.
fn tent_net(kind: TentInput, nu: u32) -> Result<QuintNet> {
    use QuintWeight::{MinusOne as M1, PlusOne as P1, Two, Zero as O};
    let first = match kind {
        TentInput::Zero => vec![vec![P1, O], vec![O, P1]],
        TentInput::One => vec![vec![P1, O], vec![P1, M1]],
        TentInput::Shift => vec![vec![P1, O, O], vec![O, P1, M1], vec![O, M1, P1]],
    };
    let spread = first.len() - 1;
    let dbl = if nu == 0 { P1 } else { Two };
    let mut gather = vec![vec![P1], vec![O]];
    gather[0].extend(std::iter::repeat_n(O, spread));
    gather[1].extend(std::iter::repeat_n(dbl, spread));
    let mut mats = vec![WeightMatrix::from_rows(first), WeightMatrix::from_rows(gather)];
    for _ in 1..nu {
        mats.push(WeightMatrix::from_rows(vec![vec![P1, O], vec![O, Two]]));
    }
    mats.push(WeightMatrix::from_rows(vec![vec![P1, M1]]));
    QuintNet::new(mats, "tent")
}

fn tent_kind(cfg: &ApproxConfig, i: u64) -> TentInput {
    if i == 0 {
        TentInput::Zero
    } else if i == cfg.grid {
        TentInput::One
    } else {
        TentInput::Shift
    }
}

/// Channel layout of the grid-shift constants `j/M`, `0 < j < M`.
fn shift_plan_targets(cfg: &ApproxConfig) -> Vec<u64> {
    let step = 1u64 << (cfg.const_delta - cfg.nu);
    (1..cfg.grid).map(|j| j * step).collect()
}

fn tent_route(cfg: &ApproxConfig, axis: usize, i: u64, shift_base: usize) -> Vec<usize> {
    match tent_kind(cfg, i) {
        TentInput::Shift => vec![0, 1 + axis, shift_base + i as usize - 1],
        _ => vec![0, 1 + axis],
    }
}

/// Input `(1, x)`, output the hat function at grid point `index`: tents are
/// exact, their product goes through `Mult^d_m`.
pub fn build_hat_net(cfg: &ApproxConfig, index: &[u64]) -> Result<QuintNet> {
    let d = cfg.d;
    let plan = ConstantPlan::new(cfg.const_delta, shift_plan_targets(cfg))?;
    let consts = build_const_net(&plan, 1 + d)?;
    let mut st = StageBuilder::new(consts.output_width());
    st.carry(0);
    for (axis, &i) in index.iter().enumerate() {
        st.part(tent_net(tent_kind(cfg, i), cfg.nu)?, tent_route(cfg, axis, i, 1 + d));
    }
    let tents = st.build()?;
    let product = if d == 1 {
        let mut w = WeightMatrix::zeros(1, 2);
        w.set(0, 1, QuintWeight::PlusOne);
        QuintNet::new(vec![w], "select")?
    } else {
        build_mult_r(d, cfg.m)?
    };
    let net = QuintNet::compose(&QuintNet::compose(&consts, &tents)?, &product)?;
    Ok(net.with_label(format!("hat{index:?}")))
}

/// The assembled network together with the surrogate it approximates.
#[derive(Clone, Debug)]
pub struct Approximant {
    pub net: QuintNet,
    pub surrogate: Surrogate,
}

/// Builds `f̃` for `target` under `cfg`. Input `(1, x_1..x_d)`, output 1.
pub fn assemble(target: &dyn SmoothTarget, cfg: &ApproxConfig) -> Result<Approximant> {
    use QuintWeight::{MinusHalf as MH, MinusOne as M1, PlusHalf as H, PlusOne as P1, Two, Zero as O};

    if target.dim() != cfg.d {
        return Err(Error::Dimension {
            expected: cfg.d,
            found: target.dim(),
        });
    }
    let surrogate = Surrogate::new(target, cfg)?;
    let d = cfg.d;
    let nu = cfg.nu;
    let grid = cfg.grid;
    let m = cfg.m;
    let polys = &surrogate.polys;
    let anchors = polys.len();
    let n_mono = cfg.monomials;

    // Stage 0: constants. Shifts j/M, then one channel per distinct |k|.
    let mags: Vec<u64> = {
        let mut v: Vec<u64> = polys
            .iter()
            .flat_map(|p| p.ks.iter())
            .filter(|&&k| k != 0)
            .map(|k| k.unsigned_abs())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mag_scale = cfg.const_delta - cfg.bits - cfg.headroom;
    let mut targets = shift_plan_targets(cfg);
    let shift_base = 1 + d;
    let mag_base = shift_base + targets.len();
    targets.extend(mags.iter().map(|&k| k << mag_scale));
    let s0 = build_const_net(&ConstantPlan::new(cfg.const_delta, targets)?, 1 + d)?;
    let mag_pos: BTreeMap<u64, usize> = mags.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    // Stage 1: tents, monomials, carried magnitudes.
    let mut st = StageBuilder::new(s0.output_width());
    let mut tents1 = vec![vec![0usize; grid as usize + 1]; d];
    for (axis, row) in tents1.iter_mut().enumerate() {
        for (i, slot) in row.iter_mut().enumerate() {
            let net = tent_net(tent_kind(cfg, i as u64), nu)?;
            *slot = st.part(net, tent_route(cfg, axis, i as u64, shift_base)).start;
        }
    }
    let mon = st.part(build_mon(d, cfg.beta, m)?, (0..=d).collect());
    let mags1: Vec<usize> = (0..mags.len()).map(|i| st.carry(mag_base + i)).collect();
    let s1 = st.build()?;

    // Stage 2: products of magnitudes with monomials.
    let mult = build_mult(m)?;
    let mut st = StageBuilder::new(s1.output_width());
    let one2 = st.carry(mon.start);
    let tents2: Vec<Vec<usize>> = tents1
        .iter()
        .map(|row| row.iter().map(|&c| st.carry(c)).collect())
        .collect();
    let mut constant_mags: BTreeMap<u64, usize> = BTreeMap::new();
    let mut prods: Vec<Vec<Option<usize>>> = vec![vec![None; n_mono]; anchors];
    for (l, p) in polys.iter().enumerate() {
        for (g, &k) in p.ks.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let src = mags1[mag_pos[&k.unsigned_abs()]];
            if g == 0 {
                constant_mags.entry(k.unsigned_abs()).or_insert_with(|| st.carry(src));
            } else {
                prods[l][g] = Some(st.part(mult.clone(), vec![mon.start, src, mon.start + g]).start);
            }
        }
    }
    let s2 = st.build()?;

    // Stage 3: clipped shifted polynomials Q_ℓ and hat products.
    let mut st = StageBuilder::new(s2.output_width());
    let one3 = st.carry(one2);
    let mut qs = Vec::with_capacity(anchors);
    for (l, p) in polys.iter().enumerate() {
        let mut route = vec![one2];
        let mut row = vec![H];
        for (g, &k) in p.ks.iter().enumerate() {
            if k == 0 {
                continue;
            }
            route.push(if g == 0 {
                constant_mags[&k.unsigned_abs()]
            } else {
                prods[l][g].expect("product channel")
            });
            row.push(if k > 0 { M1 } else { P1 });
        }
        let mut keep = vec![P1];
        keep.extend(std::iter::repeat_n(O, route.len() - 1));
        let clip = QuintNet::new(
            vec![
                WeightMatrix::from_rows(vec![keep, row]),
                WeightMatrix::from_rows(vec![vec![P1, M1]]),
            ],
            "clip",
        )?;
        qs.push(st.part(clip, route).start);
    }
    let hat_mult = if d > 1 { Some(build_mult_r(d, m)?) } else { None };
    let mut hats = Vec::with_capacity(anchors);
    for p in polys {
        let chans: Vec<usize> = p
            .index
            .iter()
            .enumerate()
            .map(|(axis, &i)| tents2[axis][i as usize])
            .collect();
        hats.push(match &hat_mult {
            None => st.carry(chans[0]),
            Some(net) => {
                let mut route = vec![one2];
                route.extend(chans);
                st.part(net.clone(), route).start
            }
        });
    }
    let s3 = st.build()?;

    // Stage 4: V_ℓ = Mult(hat_ℓ, Q_ℓ), hats carried.
    let mut st = StageBuilder::new(s3.output_width());
    let mut vs = Vec::with_capacity(anchors);
    let mut hats4 = Vec::with_capacity(anchors);
    for l in 0..anchors {
        vs.push(st.part(mult.clone(), vec![one3, hats[l], qs[l]]).start);
        hats4.push(st.carry(hats[l]));
    }
    let s4 = st.build()?;

    // Stage 5: split ΣV - ½Σhat by sign and multiply by B 2^h.
    let width = s4.output_width();
    let mut first = WeightMatrix::zeros(2, width);
    for l in 0..anchors {
        first.set(0, vs[l], P1);
        first.set(0, hats4[l], MH);
        first.set(1, vs[l], M1);
        first.set(1, hats4[l], H);
    }
    let factor = cfg.scale << cfg.headroom;
    let top = 63 - factor.leading_zeros();
    let mut mats = vec![first];
    // Per sign: channels (P, A) with P = 2^i T and A the bits below i.
    for i in 0..top {
        let bit = factor >> i & 1 == 1;
        let cols = if i == 0 { 2 } else { 4 };
        let mut w = WeightMatrix::zeros(4, cols);
        for s in 0..2 {
            let (p_in, a_in) = if i == 0 { (s, None) } else { (2 * s, Some(2 * s + 1)) };
            w.set(2 * s, p_in, Two);
            if let Some(a) = a_in {
                w.set(2 * s + 1, a, P1);
            }
            if bit {
                w.set(2 * s + 1, p_in, P1);
            }
        }
        mats.push(w);
    }
    mats.push(if top == 0 {
        WeightMatrix::from_rows(vec![vec![P1, M1]])
    } else {
        WeightMatrix::from_rows(vec![vec![P1, P1, M1, M1]])
    });
    let s5 = QuintNet::new(mats, format!("scale{factor}"))?;

    let mut net = s0;
    for stage in [s1, s2, s3, s4, s5] {
        net = QuintNet::compose(&net, &stage)?;
    }
    let label = format!("approx:{}:d{}:N{}:m{}", target.name(), d, cfg.n, m);
    Ok(Approximant {
        net: net.with_label(label),
        surrogate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::dy;

    #[test]
    fn config_examples() {
        let cfg = ApproxConfig::derive(1, 1.0, 1.0, 3, 1).unwrap();
        assert_eq!((cfg.n_tilde, cfg.nu, cfg.grid), (3, 1, 2));
        assert_eq!(cfg.scale, 5);
        assert_eq!(cfg.bits, 5);
        assert_eq!(cfg.delta, 5);
        assert!(ApproxConfig::check_precondition(1, 1.0, 1.0, 3).is_err());
        assert!(ApproxConfig::check_precondition(1, 1.0, 1.0, 6).is_ok());
    }

    #[test]
    fn config_invariants() {
        for d in 1..=2 {
            for n in [10, 17, 33, 50, 81, 100] {
                let cfg = ApproxConfig::derive(d, 2.0, 4.0, n, 4).unwrap();
                assert!(cfg.n_tilde >= n && cfg.n_tilde / (1 << d) <= n);
                let lhs = 1u128 << cfg.bits;
                let rhs = cfg.scale as u128 * (cfg.grid as u128).pow(2) * 3u128.pow(d as u32);
                assert!(lhs >= rhs && lhs / 2 < rhs);
            }
        }
    }

    #[test]
    fn grid_enumeration() {
        let cfg = ApproxConfig::derive(1, 1.0, 1.0, 3, 1).unwrap();
        assert_eq!(
            grid_points(&cfg),
            vec![vec![Dyadic::ZERO], vec![dy(1, 1)], vec![Dyadic::ONE]]
        );
        let cfg = ApproxConfig::derive(2, 1.0, 1.0, 9, 1).unwrap();
        let pts = grid_points(&cfg);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[1], vec![Dyadic::ZERO, dy(1, 1)]);
        assert!(pts.iter().flatten().all(|c| c.exponent() <= cfg.nu));
    }

    #[test]
    fn quantize_examples() {
        let (k, q) = quantize_coefficient(0.3, 5, 5).unwrap();
        assert_eq!(k, 1);
        assert_eq!(q, dy(5, 5));
        assert_eq!(quantize_coefficient(0.0, 5, 5).unwrap(), (0, Dyadic::ZERO));
        assert_eq!(quantize_coefficient(-0.3, 5, 5).unwrap().0, -2);
        assert!(matches!(quantize_coefficient(6.0, 5, 5), Err(Error::BallMembership(_))));
    }

    #[test]
    fn taylor_of_polynomial_is_exact() {
        let t = Target::named("sumsq", 1, None, None).unwrap();
        let c = taylor_coefficients(&t, &[0.25]);
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15 && (c[2] - 0.5).abs() < 1e-15);
        let t = Target::named("product", 2, None, None).unwrap();
        let c = taylor_coefficients(&t, &[0.5, 0.75]);
        assert_eq!(c, vec![-0.375, 0.75, 0.5]);
    }

    #[test]
    fn hat_examples() {
        let cfg = ApproxConfig::derive(1, 1.0, 1.0, 3, 1).unwrap();
        assert!((hat_value_f64(&cfg, &[1], &[0.3]) - 0.6).abs() < 1e-12);
        assert_eq!(hat_value(&cfg, &[1], &[dy(1, 1)]), Dyadic::ONE);
        let total: f64 = (0..=2).map(|i| hat_value_f64(&cfg, &[i], &[0.3])).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_of_unity_exact() {
        let cfg = ApproxConfig::derive(2, 2.0, 1.0, 25, 1).unwrap();
        let idx = grid_indices(&cfg);
        for a in 0..=16 {
            for b in 0..=16 {
                let x = [dy(a, 4), dy(b, 4)];
                let s: Dyadic = idx.iter().map(|i| hat_value(&cfg, i, &x)).sum();
                assert_eq!(s, Dyadic::ONE);
            }
        }
    }

    #[test]
    fn tent_nets_are_exact() {
        let cfg = ApproxConfig::derive(1, 2.0, 1.0, 17, 3).unwrap();
        for i in 0..=cfg.grid {
            let net = build_hat_net(&cfg, &[i]).unwrap();
            for j in 0..=64 {
                let x = dy(j, 6);
                let out = net.eval_exact(&[Dyadic::ONE, x.clone()]).unwrap()[0].clone();
                assert_eq!(out, hat_value(&cfg, &[i], &[x]));
            }
        }
    }

    #[test]
    fn zero_target_gives_zero() {
        let t = Target::named("zero", 1, None, None).unwrap();
        let cfg = make_config(&t, 6, 3).unwrap();
        let a = assemble(&t, &cfg).unwrap();
        for j in 0..=32 {
            assert_eq!(a.net.eval_exact(&[Dyadic::ONE, dy(j, 5)]).unwrap(), vec![Dyadic::ZERO]);
        }
    }

    #[test]
    fn linear_target_is_close() {
        let t = Target::named("linear", 1, None, None).unwrap();
        let cfg = make_config(&t, 17, 10).unwrap();
        let a = assemble(&t, &cfg).unwrap();
        a.net.validate().unwrap();
        for j in 0..=64 {
            let x = dy(j, 6);
            let out = a.net.eval_exact(&[Dyadic::ONE, x.clone()]).unwrap()[0].to_f64();
            assert!((out - x.to_f64()).abs() < 0.1, "x={x} out={out}");
        }
    }
}
