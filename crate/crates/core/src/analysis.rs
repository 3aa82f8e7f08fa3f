//! Bound calculators, network counting, sup-error measurement and the
//! plug-in regression simulation.

use num_bigint::BigUint;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::atoms::ceil_log2;
use crate::dyadic::Dyadic;
use crate::error::{Error, Result};
use crate::net::{NetStats, QuintNet};
use crate::taylor::{assemble, make_config, ApproxConfig, SmoothTarget};

/// `⌈log2 x⌉` for real `x >= 1`, exact on integers.
fn ceil_log2_real(x: f64) -> u32 {
    if x <= 1.0 {
        0
    } else if x.fract() == 0.0 && x < 1e15 {
        ceil_log2(x as usize)
    } else {
        x.log2().ceil() as u32
    }
}

/// The float-parameter network sizes and error bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RealWeightBounds {
    pub depth: u64,
    pub width: u64,
    pub sparsity: f64,
    pub error: f64,
}

/// The quintuple-parameter network sizes and error bound, with `Δ` and `R`
/// replaced by their stated upper bounds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuintBounds {
    pub delta: f64,
    pub r: f64,
    pub depth: f64,
    pub width: f64,
    /// `s̃` bound evaluated at the depth bound.
    pub sparsity: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub real: RealWeightBounds,
    pub quint: QuintBounds,
}

fn check_bound_args(beta: f64, d: usize, k: f64, n: u64, m: u32) -> Result<()> {
    if d == 0 || m == 0 || beta <= 0.0 || k <= 0.0 {
        return Err(Error::Domain("need d >= 1, m >= 1, beta > 0, K > 0".into()));
    }
    ApproxConfig::check_precondition(d, beta, k, n)
}

pub fn real_weight_bounds(beta: f64, d: usize, k: f64, n: u64, m: u32) -> Result<RealWeightBounds> {
    check_bound_args(beta, d, k, n, m)?;
    let (df, nf) = (d as f64, n as f64);
    let depth = 8 + (m as u64 + 5) * (1 + ceil_log2_real(df.max(beta)) as u64);
    let width = 6 * (d as u64 + beta.ceil() as u64) * n;
    let sparsity = 141.0 * (df + beta + 1.0).powi(3 + d as i32) * nf * (m as f64 + 6.0);
    let error = (2.0 * k + 1.0) * (1.0 + df * df + beta * beta) * 6f64.powi(d as i32) * nf * 2f64.powi(-(m as i32))
        + k * 3f64.powf(beta) * nf.powf(-beta / df);
    Ok(RealWeightBounds {
        depth,
        width,
        sparsity,
        error,
    })
}

pub fn quint_bounds(beta: f64, d: usize, k: f64, n: u64, m: u32) -> Result<QuintBounds> {
    let real = real_weight_bounds(beta, d, k, n, m)?;
    let (df, nf) = (d as f64, n as f64);
    let delta = 2.0 * ((beta + df) * nf.log2() + k.log2() + df * std::f64::consts::LOG2_E);
    let r = (2.0 * beta).powi(d as i32) * nf;
    let depth = 4.0 * delta + 2.0 * real.depth as f64;
    let width = (2.0 * (1.0 + df + r + delta)).max(2f64.powi(d as i32) * real.width as f64);
    let sparsity = quint_sparsity(beta, d, k, n, m, depth)?;
    let error = (2.0 * k + 1.0) * (1.0 + df * df + beta * beta) * 12f64.powi(d as i32) * nf * 2f64.powi(-(m as i32))
        + (k + 1.0) * 3f64.powf(beta) * nf.powf(-beta / df);
    Ok(QuintBounds {
        delta,
        r,
        depth,
        width,
        sparsity,
        error,
    })
}

/// `(1 + d + R + Δ) L̃ + 2^d s` for a given depth `L̃`.
pub fn quint_sparsity(beta: f64, d: usize, k: f64, n: u64, m: u32, depth: f64) -> Result<f64> {
    let real = real_weight_bounds(beta, d, k, n, m)?;
    let df = d as f64;
    let delta = 2.0 * ((beta + df) * (n as f64).log2() + k.log2() + df * std::f64::consts::LOG2_E);
    let r = (2.0 * beta).powi(d as i32) * n as f64;
    Ok((1.0 + df + r + delta) * depth + 2f64.powi(d as i32) * real.sparsity)
}

pub fn bound_report(beta: f64, d: usize, k: f64, n: u64, m: u32) -> Result<BoundReport> {
    Ok(BoundReport {
        real: real_weight_bounds(beta, d, k, n, m)?,
        quint: quint_bounds(beta, d, k, n, m)?,
    })
}

/// One structural comparison of a built network against its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureCheck {
    pub name: &'static str,
    pub actual: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Depth, width and sparsity of `stats` against the quintuple-parameter
/// bounds; the sparsity bound uses the actual depth.
pub fn check_structure(stats: &NetStats, beta: f64, d: usize, k: f64, n: u64, m: u32) -> Result<Vec<StructureCheck>> {
    let b = quint_bounds(beta, d, k, n, m)?;
    let s_bound = quint_sparsity(beta, d, k, n, m, stats.depth as f64)?;
    let row = |name, actual: f64, bound: f64| StructureCheck {
        name,
        actual,
        bound,
        pass: actual <= bound,
    };
    Ok(vec![
        row("depth", stats.depth as f64, b.depth),
        row("width", stats.max_width as f64, b.width),
        row("sparsity", stats.l0 as f64, s_bound),
    ])
}

/// `(5(L+1)p²)^{s+1}` together with the sum it bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkCount {
    pub base: BigUint,
    /// `Σ_{j=0}^{s} base^j`.
    pub partial_sum: BigUint,
    pub bound: BigUint,
}

impl NetworkCount {
    /// `log2` of the bound, from its bit length and leading bits.
    pub fn log2_bound(&self) -> f64 {
        big_log2(&self.bound)
    }
}

pub fn big_log2(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.iter_u64_digits().next().unwrap_or(0) as f64).log2();
    }
    let shift = bits - 64;
    let top: BigUint = x >> shift;
    (top.iter_u64_digits().next().unwrap_or(0) as f64).log2() + shift as f64
}

/// Exact counting bound for networks with depth `L`, maximal width `p` and
/// at most `s` nonzero parameters.
pub fn count_networks(depth: u64, width: u64, s: u64) -> Result<NetworkCount> {
    if width == 0 {
        return Err(Error::Domain("width must be positive".into()));
    }
    let base = BigUint::from(5u32) * BigUint::from(depth + 1) * BigUint::from(width) * BigUint::from(width);
    let exp = u32::try_from(s + 1).map_err(|_| Error::Domain("sparsity too large to count".into()))?;
    let bound = base.pow(exp);
    let partial_sum = if base.is_one() {
        BigUint::from(s + 1)
    } else {
        (&bound - BigUint::one()) / (&base - BigUint::one())
    };
    Ok(NetworkCount {
        base,
        partial_sum,
        bound,
    })
}

/// `4[a + F²(18 log2 𝒩 + 72)/n + 32δF + Δ_n]`. `δ = 0` is accepted for the
/// exact count of a discrete class.
pub fn oracle_inequality(
    approx_err_sq: f64,
    cover_log2: f64,
    n: u64,
    f_bound: f64,
    delta: f64,
    delta_n: f64,
) -> Result<f64> {
    let args = [approx_err_sq, cover_log2, f_bound, delta, delta_n];
    if args.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain(
            "oracle inequality arguments must be finite and nonnegative".into(),
        ));
    }
    if n == 0 || delta > 1.0 {
        return Err(Error::Domain("need n >= 1 and delta <= 1".into()));
    }
    let entropy = f_bound * f_bound * (18.0 * cover_log2 + 72.0) / n as f64;
    Ok(4.0 * (approx_err_sq + entropy + 32.0 * delta * f_bound + delta_n))
}

/// The `2^level + 1` point dyadic grid on `[0, 1]^d`, lexicographic.
pub fn dyadic_grid(d: usize, level: u32) -> Vec<Vec<Dyadic>> {
    let side = (1usize << level) + 1;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let mut p = vec![Dyadic::ZERO; d];
            for slot in p.iter_mut().rev() {
                *slot = Dyadic::new((flat % side) as i64, level);
                flat /= side;
            }
            p
        })
        .collect()
}

type ExactFn<'a> = dyn Fn(&[Dyadic]) -> Vec<Dyadic> + Sync + 'a;
type FloatFn<'a> = dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a;

/// Reference values per output channel.
pub enum Oracle<'a> {
    Exact(Box<ExactFn<'a>>),
    Float(Box<FloatFn<'a>>),
}

impl<'a> Oracle<'a> {
    pub fn exact(f: impl Fn(&[Dyadic]) -> Vec<Dyadic> + Sync + 'a) -> Self {
        Oracle::Exact(Box::new(f))
    }

    pub fn float(f: impl Fn(&[f64]) -> Vec<f64> + Sync + 'a) -> Self {
        Oracle::Float(Box::new(f))
    }

    /// A single-output scalar target.
    pub fn target(t: &'a dyn SmoothTarget) -> Self {
        Oracle::Float(Box::new(move |x| vec![t.value(x)]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EvalMode {
    /// Exact network, exact oracle.
    Exact,
    /// Exact network rounded to binary64, float oracle.
    Mixed,
    /// Binary64 network and oracle.
    Float,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupError {
    pub mode: EvalMode,
    pub value: f64,
    /// The exact maximum in [`EvalMode::Exact`].
    pub exact: Option<Dyadic>,
    pub argmax: Vec<Dyadic>,
    pub channel: usize,
    pub points: usize,
}

enum Gap {
    Exact(Dyadic),
    Float(f64),
}

impl Gap {
    fn as_f64(&self) -> f64 {
        match self {
            Gap::Exact(v) => v.to_f64(),
            Gap::Float(v) => *v,
        }
    }

    fn beats(&self, other: &Gap) -> bool {
        match (self, other) {
            (Gap::Exact(a), Gap::Exact(b)) => a > b,
            _ => self.as_f64() > other.as_f64(),
        }
    }
}

/// `max |net(1, x) - oracle(x)|` over the dyadic grid of level `level`,
/// taken over all output channels. Ties keep the first point in scan order.
pub fn sup_error(net: &QuintNet, oracle: &Oracle<'_>, d: usize, level: u32, mode: EvalMode) -> Result<SupError> {
    if net.input_width() != d + 1 {
        return Err(Error::Dimension {
            expected: net.input_width(),
            found: d + 1,
        });
    }
    if mode == EvalMode::Exact && matches!(oracle, Oracle::Float(_)) {
        return Err(Error::Domain("exact mode needs an exact oracle".into()));
    }
    let grid = dyadic_grid(d, level);
    let eval_point = |x: &Vec<Dyadic>| -> Result<(Gap, usize)> {
        let mut input = Vec::with_capacity(d + 1);
        input.push(Dyadic::ONE);
        input.extend(x.iter().cloned());
        let xf: Vec<f64> = x.iter().map(Dyadic::to_f64).collect();
        let gaps: Vec<Gap> = match (mode, oracle) {
            (EvalMode::Exact, Oracle::Exact(f)) => {
                let out = net.eval_exact(&input)?;
                out.iter().zip(f(x)).map(|(o, r)| Gap::Exact((o - &r).abs())).collect()
            }
            _ => {
                let out: Vec<f64> = if mode == EvalMode::Float {
                    let inf: Vec<f64> = input.iter().map(Dyadic::to_f64).collect();
                    net.eval_float(&inf)?
                } else {
                    net.eval_exact(&input)?.iter().map(Dyadic::to_f64).collect()
                };
                let reference: Vec<f64> = match oracle {
                    Oracle::Exact(f) => f(x).iter().map(Dyadic::to_f64).collect(),
                    Oracle::Float(f) => f(&xf),
                };
                out.iter()
                    .zip(reference)
                    .map(|(o, r)| Gap::Float((o - r).abs()))
                    .collect()
            }
        };
        let mut best = 0;
        for (c, g) in gaps.iter().enumerate() {
            if g.beats(&gaps[best]) {
                best = c;
            }
        }
        let mut gaps = gaps;
        Ok((gaps.swap_remove(best), best))
    };
    let results: Vec<(Gap, usize)> = grid.par_iter().map(eval_point).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (g, _)) in results.iter().enumerate() {
        if g.beats(&results[best].0) {
            best = i;
        }
    }
    let (gap, channel) = &results[best];
    Ok(SupError {
        mode,
        value: gap.as_f64(),
        exact: match gap {
            Gap::Exact(v) => Some(v.clone()),
            Gap::Float(_) => None,
        },
        argmax: grid[best].clone(),
        channel: *channel,
        points: grid.len(),
    })
}

/// One row of a regression sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub n: u64,
    #[serde(rename = "N")]
    pub big_n: u64,
    pub m: u32,
    pub depth: usize,
    pub max_width: usize,
    pub l0: usize,
    pub l1: f64,
    pub heldout_mse: f64,
    pub rate_bound: f64,
    pub seed: u64,
    #[serde(skip)]
    pub heldout_stderr: f64,
    #[serde(skip)]
    pub train_mse: f64,
    #[serde(skip)]
    pub sup_bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionOutcome {
    pub records: Vec<SweepRecord>,
    /// Sample sizes whose recipe violated the size precondition.
    pub skipped: Vec<(u64, String)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionOptions {
    pub heldout: usize,
    /// Standard deviation of the additive noise (1 for the standard model).
    pub noise: f64,
    pub f_bound: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            heldout: 10_000,
            noise: 1.0,
            f_bound: 1.0,
        }
    }
}

/// `N = ⌈n^{d/(2β+d)}⌉` and `m = ⌈log2 n⌉`.
pub fn regression_recipe(n: u64, d: usize, beta: f64) -> (u64, u32) {
    let df = d as f64;
    let big_n = ((n as f64).powf(df / (2.0 * beta + df)) - 1e-9).ceil().max(1.0) as u64;
    (big_n, ceil_log2(n as usize).max(1))
}

/// `n^{-2β/(2β+d)} log2² n`.
pub fn rate_bound(n: u64, d: usize, beta: f64) -> f64 {
    let nf = n as f64;
    nf.powf(-2.0 * beta / (2.0 * beta + d as f64)) * nf.log2().powi(2)
}

fn uniform_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Plug-in regression: for every `n`, the approximant built with the rate
/// recipe is the estimator. Held-out points come from one stream shared by
/// all `n`; training draws use a per-`n` stream of the same seed.
pub fn regression_simulate(
    target: &dyn SmoothTarget,
    n_values: &[u64],
    seed: u64,
    opts: RegressionOptions,
) -> Result<RegressionOutcome> {
    if opts.f_bound < target.radius().max(1.0) {
        return Err(Error::Precondition(format!(
            "F = {} must be at least max(K, 1) = {}",
            opts.f_bound,
            target.radius().max(1.0)
        )));
    }
    let d = target.dim();
    let beta = target.beta();
    let mut held = ChaCha8Rng::seed_from_u64(seed);
    held.set_stream(0);
    let heldout: Vec<Vec<f64>> = (0..opts.heldout).map(|_| uniform_point(&mut held, d)).collect();
    let truth: Vec<f64> = heldout.iter().map(|x| target.value(x)).collect();

    let rows: Vec<std::result::Result<SweepRecord, (u64, String)>> = n_values
        .par_iter()
        .map(|&n| {
            let (big_n, m) = regression_recipe(n, d, beta);
            let cfg = match make_config(target, big_n, m) {
                Ok(cfg) => cfg,
                Err(Error::Precondition(msg)) => return Err((n, msg)),
                Err(e) => return Err((n, e.to_string())),
            };
            let approx = assemble(target, &cfg).map_err(|e| (n, e.to_string()))?;
            let net = &approx.net;
            let predict = |x: &[f64]| -> std::result::Result<f64, (u64, String)> {
                let mut input = Vec::with_capacity(d + 1);
                input.push(1.0);
                input.extend_from_slice(x);
                Ok(net.eval_float(&input).map_err(|e| (n, e.to_string()))?[0])
            };

            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(n);
            let mut train = 0.0;
            for _ in 0..n {
                let x = uniform_point(&mut rng, d);
                let eps: f64 = rng.sample(StandardNormal);
                let y = target.value(&x) + opts.noise * eps;
                train += (y - predict(&x)?).powi(2);
            }

            let sq: Vec<f64> = heldout
                .iter()
                .zip(&truth)
                .map(|(x, t)| predict(x).map(|p| (p - t).powi(2)))
                .collect::<std::result::Result<_, _>>()?;
            let mean = sq.iter().sum::<f64>() / sq.len() as f64;
            let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sq.len().max(2) - 1) as f64;
            let stats = net.stats();
            let sup_bound = quint_bounds(beta, d, target.radius(), big_n, m)
                .map(|b| b.error)
                .unwrap_or(f64::NAN);
            Ok(SweepRecord {
                n,
                big_n,
                m,
                depth: stats.depth,
                max_width: stats.max_width,
                l0: stats.l0,
                l1: stats.l1.to_f64(),
                heldout_mse: mean,
                rate_bound: rate_bound(n, d, beta),
                seed,
                heldout_stderr: (var / sq.len() as f64).sqrt(),
                train_mse: train / n as f64,
                sup_bound,
            })
        })
        .collect();
    let mut out = RegressionOutcome {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    for r in rows {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(skip) => out.skipped.push(skip),
        }
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
