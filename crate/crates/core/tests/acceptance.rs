//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use quintnet::analysis::{
    check_structure, count_networks, dyadic_grid, log_log_slope, oracle_inequality, quint_bounds, regression_simulate,
    sup_error, EvalMode, Oracle, RegressionOptions,
};
use quintnet::atoms::{
    build_mon, build_mult, build_mult_r, build_nm, ceil_log2, monomial_count, monomial_indices, r_sum,
};
use quintnet::constants::{build_const_net, ConstantPlan};
use quintnet::taylor::{
    assemble, build_hat_net, grid_indices, hat_value, make_config, ApproxConfig, SmoothTarget, Surrogate, Target,
};
use quintnet::{dy, Dyadic, QuintNet, QuintWeight};

const MULT_TIME_LIMIT: Duration = Duration::from_secs(60);
const BUILD_TIME_LIMIT: Duration = Duration::from_secs(300);
const CONST_PAIRS: usize = 100;
const PARTITION_POINTS: usize = 1000;
const COUNT_TRIPLES: usize = 20;
const REGRESSION_SEEDS: u64 = 5;
const SEED: u64 = 20_241_016;
const PLATEAU_RTOL: f64 = 1e-12;
const MONOTONE_EXTRA_POINTS: usize = 400;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
/// `(a, log2 N, n, F, δ, Δ_n)`.
type OracleArgs = (f64, f64, u64, f64, f64, f64);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn product_oracle() -> Oracle<'static> {
    Oracle::exact(|x: &[Dyadic]| vec![x.iter().fold(Dyadic::ONE, |a, v| a * v)])
}

fn monomial_oracle(d: usize, gamma: f64) -> Oracle<'static> {
    let alphas = monomial_indices(d, gamma);
    Oracle::exact(move |x: &[Dyadic]| {
        alphas
            .iter()
            .map(|a| {
                a.iter()
                    .zip(x)
                    .fold(Dyadic::ONE, |acc, (&e, v)| (0..e).fold(acc, |p, _| p * v))
            })
            .collect()
    })
}

fn random_unit_dyadic(rng: &mut ChaCha8Rng, max_exp: u32) -> Dyadic {
    let j = rng.random_range(0..=max_exp);
    Dyadic::new(rng.random_range(0..=(1i64 << j)), j)
}

fn mult_bound() -> Check {
    let start = Instant::now();
    let mut worst = 0f64;
    for m in 1..=12u32 {
        let net = build_mult(m).map_err(fail)?;
        let e = sup_error(&net, &product_oracle(), 2, 7, EvalMode::Exact).map_err(fail)?;
        let exact = e.exact.expect("exact mode");
        ensure(exact <= Dyadic::pow2_inv(m), || {
            format!("m = {m}: error {exact} exceeds 2^-{m}")
        })?;
        worst = worst.max(e.value * 2f64.powi(m as i32));
    }
    let took = start.elapsed();
    ensure(took < MULT_TIME_LIMIT, || format!("took {took:?}"))?;
    Ok(format!("max error * 2^m = {worst:.4} over 129x129, {took:.1?}"))
}

fn mult_structure() -> Check {
    use QuintWeight::{MinusHalf, MinusOne, PlusHalf, PlusOne, Zero};
    for m in 1..=12u32 {
        let net = build_mult(m).map_err(fail)?;
        let s = net.stats();
        ensure(s.depth == 2 * m as usize + 4, || format!("m = {m}: depth {}", s.depth))?;
        ensure(s.max_width == 9, || format!("m = {m}: width {}", s.max_width))?;
        let allowed = [Zero, MinusHalf, PlusHalf, MinusOne, PlusOne];
        ensure(net.alphabet().iter().all(|w| allowed.contains(w)), || {
            format!("m = {m}: alphabet {:?}", net.alphabet())
        })?;
    }
    Ok("depth 2m+4, width 9, weights in {0, ±1/2, ±1} for m = 1..12".into())
}

fn r_sum_bound() -> Check {
    let points: Vec<Dyadic> = (0..=1024).map(|j| dy(j, 10)).collect();
    for m in 1..=12u32 {
        let bound = Dyadic::pow2_inv(m);
        // N_{m-1} outputs the same partial sum from (1/4, u/2, 0, (u - 1/2)_+).
        let net = if m >= 2 {
            Some(build_nm(m - 1).map_err(fail)?)
        } else {
            None
        };
        for x in &points {
            let s = r_sum(m, x).map_err(fail)?;
            let g = x * &(Dyadic::ONE - x);
            ensure((&g - &s).abs() <= bound, || {
                format!("m = {m}, x = {x}: gap {}", (&g - &s).abs())
            })?;
            if let Some(net) = &net {
                let input = [dy(1, 2), x.half(), Dyadic::ZERO, (x - &dy(1, 1)).relu()];
                let out = net.eval_exact(&input).map_err(fail)?;
                ensure(out[0] == s, || format!("N_{} at {x}: {} != {s}", m - 1, out[0]))?;
            }
        }
    }
    Ok("|x(1-x) - sum R^k| <= 2^-m on 1025 points, m = 1..12; network agrees".into())
}

fn mult_r_bound() -> Check {
    let mut rows = Vec::new();
    for r in 2..=5usize {
        for m in [4u32, 8] {
            let net = build_mult_r(r, m).map_err(fail)?;
            let level = match r {
                2 => 6,
                3 => 4,
                4 => 3,
                _ => 2,
            };
            let e = sup_error(&net, &product_oracle(), r, level, EvalMode::Exact).map_err(fail)?;
            let bound = Dyadic::pow2_inv(m) * Dyadic::from_int((r * r) as i64);
            let exact = e.exact.expect("exact mode");
            ensure(exact <= bound, || {
                format!("r = {r}, m = {m}: error {exact} exceeds {bound}")
            })?;
            let s = net.stats();
            let depth_bound = (2 * m as usize + 5) * ceil_log2(r) as usize;
            ensure(s.depth <= depth_bound, || {
                format!("r = {r}, m = {m}: depth {} > {depth_bound}", s.depth)
            })?;
            ensure(s.max_width <= 9 * r, || {
                format!("r = {r}, m = {m}: width {} > {}", s.max_width, 9 * r)
            })?;
            rows.push(format!("r{r}m{m}:{:.1e}", e.value));
        }
    }
    Ok(rows.join(" "))
}

fn mon_bound() -> Check {
    let mut rows = Vec::new();
    for (d, gamma, m) in [(1usize, 2.0f64, 6u32), (2, 2.0, 6), (2, 3.0, 8)] {
        let net = build_mon(d, gamma, m).map_err(fail)?;
        let level = if d == 1 { 10 } else { 6 };
        let e = sup_error(&net, &monomial_oracle(d, gamma), d, level, EvalMode::Exact).map_err(fail)?;
        let bound = gamma * gamma * 2f64.powi(-(m as i32));
        ensure(e.value <= bound, || {
            format!("(d, γ, m) = ({d}, {gamma}, {m}): error {} > {bound}", e.value)
        })?;
        let c = monomial_count(d, gamma);
        ensure(net.output_width() == c, || {
            format!("{} outputs, expected {c}", net.output_width())
        })?;
        ensure((c as f64) < (gamma + 1.0).powi(d as i32), || {
            format!("C = {c} not below (γ+1)^d")
        })?;
        rows.push(format!("({d},{gamma},{m}):C={c},err={:.1e}", e.value));
    }
    Ok(rows.join(" "))
}

fn constants_block() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let d = 1;
    for _ in 0..CONST_PAIRS {
        let delta = rng.random_range(1..=12u32);
        let y = rng.random_range(1..=(1u64 << delta));
        let plan = ConstantPlan::new(delta, vec![y]).map_err(fail)?;
        let net = build_const_net(&plan, 1 + d).map_err(fail)?;
        let x = random_unit_dyadic(&mut rng, 16);
        let out = net.eval_exact(&[Dyadic::ONE, x.clone()]).map_err(fail)?;
        let want = Dyadic::new(y, delta);
        ensure(out == vec![Dyadic::ONE, x, want.clone()], || {
            format!("Δ = {delta}, y = {y}: got {out:?}")
        })?;
        ensure(net.depth() == 2 * delta as usize, || {
            format!("Δ = {delta}: depth {}", net.depth())
        })?;
        let budget = plan.l0_budget(1 + d);
        let l0 = net.stats().l0 as u64;
        ensure(l0 <= budget, || format!("Δ = {delta}, y = {y}: l0 {l0} > {budget}"))?;
    }
    Ok(format!(
        "{CONST_PAIRS} random (Δ, y) pairs exact, depth 2Δ, l0 within budget"
    ))
}

fn partition_of_unity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    for (d, n) in [(1usize, 5u64), (2, 25)] {
        let cfg = ApproxConfig::derive(d, 2.0, 1.0, n, 4).map_err(fail)?;
        ensure(cfg.grid == 4, || format!("d = {d}: grid M = {}", cfg.grid))?;
        let anchors = grid_indices(&cfg);
        for _ in 0..PARTITION_POINTS {
            let x: Vec<Dyadic> = (0..d).map(|_| random_unit_dyadic(&mut rng, 24)).collect();
            let total: Dyadic = anchors.iter().map(|idx| hat_value(&cfg, idx, &x)).sum();
            ensure(total == Dyadic::ONE, || format!("d = {d}, x = {x:?}: sum {total}"))?;
        }
    }
    Ok(format!(
        "hat sum is exactly 1 at {PARTITION_POINTS} points for (d, M) = (1, 4), (2, 4)"
    ))
}

struct SweepCase {
    name: &'static str,
    d: usize,
    beta: Option<f64>,
    k: Option<f64>,
    ns: [u64; 3],
}

const SWEEP: [SweepCase; 5] = [
    SweepCase {
        name: "linear",
        d: 1,
        beta: None,
        k: None,
        ns: [14, 17, 33],
    },
    SweepCase {
        name: "sumsq",
        d: 1,
        beta: Some(3.0),
        k: None,
        ns: [11, 17, 33],
    },
    SweepCase {
        name: "bump",
        d: 1,
        beta: None,
        k: None,
        ns: [33, 65, 129],
    },
    SweepCase {
        name: "product",
        d: 2,
        beta: None,
        k: Some(5.0),
        ns: [45, 64, 81],
    },
    SweepCase {
        name: "zero",
        d: 2,
        beta: None,
        k: None,
        ns: [15, 25, 81],
    },
];
const SWEEP_M: [u32; 3] = [6, 10, 14];
const MONOTONE_M: [u32; 4] = [4, 6, 8, 10];

fn grid_level(d: usize) -> u32 {
    if d == 1 {
        10
    } else {
        5
    }
}

fn approximation_sweep() -> Check {
    let mut slowest = Duration::ZERO;
    let mut worst_ratio = 0f64;
    let mut gaps = Vec::new();
    for case in &SWEEP {
        let t = Target::named(case.name, case.d, case.beta, case.k).map_err(fail)?;
        let level = grid_level(case.d);
        for &n in &case.ns {
            for &m in &SWEEP_M {
                let tag = format!("{} d{} N{n} m{m}", case.name, case.d);
                let start = Instant::now();
                let cfg = make_config(&t, n, m).map_err(|e| format!("{tag}: {e}"))?;
                let approx = assemble(&t, &cfg).map_err(|e| format!("{tag}: {e}"))?;
                approx.net.validate().map_err(|e| format!("{tag}: {e}"))?;
                let checks = check_structure(&approx.net.stats(), t.beta(), t.dim(), t.radius(), n, m).map_err(fail)?;
                for c in &checks {
                    ensure(c.pass, || format!("{tag}: {} {} > {}", c.name, c.actual, c.bound))?;
                }
                let e = sup_error(&approx.net, &Oracle::target(&t), case.d, level, EvalMode::Mixed).map_err(fail)?;
                let bound = quint_bounds(t.beta(), t.dim(), t.radius(), n, m).map_err(fail)?.error;
                ensure(e.value <= bound, || format!("{tag}: error {} > bound {bound}", e.value))?;
                let took = start.elapsed();
                ensure(took < BUILD_TIME_LIMIT, || format!("{tag}: took {took:?}"))?;
                slowest = slowest.max(took);
                worst_ratio = worst_ratio.max(e.value / bound);
            }
        }
        if case.name == "zero" {
            continue;
        }
        let n = case.ns[1];
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
        let mut points = dyadic_grid(case.d, level);
        points.extend(
            (0..MONOTONE_EXTRA_POINTS).map(|_| (0..case.d).map(|_| random_unit_dyadic(&mut rng, 20)).collect()),
        );
        let mut prev: Option<Dyadic> = None;
        for &m in &MONOTONE_M {
            let cfg = make_config(&t, n, m).map_err(fail)?;
            let approx = assemble(&t, &cfg).map_err(fail)?;
            let mut gap = Dyadic::ZERO;
            for x in &points {
                let mut input = vec![Dyadic::ONE];
                input.extend(x.iter().cloned());
                let out = approx.net.eval_exact(&input).map_err(fail)?;
                gap = gap.max((&out[0] - &approx.surrogate.eval(x)).abs());
            }
            if let Some(p) = &prev {
                let ok = if p.is_zero() { gap.is_zero() } else { &gap < p };
                ensure(ok, || {
                    format!("{} N{n}: sup |f~ - P~| at m = {m} is {gap}, previous {p}", case.name)
                })?;
            }
            gaps.push(format!("{}:{:.1e}", case.name, gap.to_f64()));
            prev = Some(gap);
        }
    }
    Ok(format!(
        "45 builds valid and within bounds, max error/bound {worst_ratio:.2e}, slowest {slowest:.1?}; f~ - P~ decreasing over m = 4..10: {}",
        gaps.join(" ")
    ))
}

fn quantization() -> Check {
    let cases: [(&str, usize, u64); 7] = [
        ("zero", 1, 9),
        ("linear", 1, 17),
        ("sumsq", 1, 17),
        ("bump", 1, 33),
        ("product", 2, 81),
        ("linear", 2, 81),
        ("bump", 2, 81),
    ];
    let mut checked = 0usize;
    for (name, d, n) in cases {
        let t = Target::named(name, d, None, None).map_err(fail)?;
        let cfg = make_config(&t, n, 8).map_err(fail)?;
        let step = Dyadic::new(cfg.scale, cfg.bits);
        let beta = t.beta();
        ensure(beta.fract() == 0.0, || format!("{name}: non-integer β"))?;
        let limit = Dyadic::pow2_inv(cfg.nu * beta as u32);
        let surrogate = Surrogate::new(&t, &cfg).map_err(fail)?;
        for p in &surrogate.polys {
            for (c, q) in p.raw.iter().zip(&p.coefficients) {
                let gap = (Dyadic::from_f64(*c).map_err(fail)? - q).abs();
                ensure(gap < step, || {
                    format!("{name} at {:?}: |c - c~| = {gap} >= B/2^b = {step}", p.index)
                })?;
                checked += 1;
            }
            let total = p.coefficient_gap().map_err(fail)?;
            ensure(total <= limit, || {
                format!("{name} at {:?}: gap {total} > M^-β = {limit}", p.index)
            })?;
        }
    }
    Ok(format!(
        "{checked} coefficients within B/2^b, every polynomial gap <= M^-β"
    ))
}

fn built_nets() -> std::result::Result<Vec<QuintNet>, String> {
    let mut nets = Vec::new();
    for m in [1u32, 4, 9] {
        nets.push(build_mult(m).map_err(fail)?);
        nets.push(build_nm(m).map_err(fail)?);
        for r in 1..=5 {
            nets.push(build_mult_r(r, m).map_err(fail)?);
        }
        for (d, gamma) in [(1usize, 1.0f64), (1, 3.0), (2, 2.0), (2, 3.5), (3, 3.0)] {
            nets.push(build_mon(d, gamma, m).map_err(fail)?);
        }
    }
    for (delta, targets) in [
        (0u32, vec![1u64]),
        (3, vec![5]),
        (7, vec![1, 100, 128]),
        (12, vec![4095, 2048]),
    ] {
        nets.push(build_const_net(&ConstantPlan::new(delta, targets).map_err(fail)?, 3).map_err(fail)?);
    }
    for (name, d, n) in [
        ("linear", 1usize, 17u64),
        ("bump", 1, 33),
        ("product", 2, 45),
        ("zero", 2, 25),
    ] {
        let t = Target::named(name, d, None, None).map_err(fail)?;
        let cfg = make_config(&t, n, 6).map_err(fail)?;
        for idx in grid_indices(&cfg).iter().take(3) {
            nets.push(build_hat_net(&cfg, idx).map_err(fail)?);
        }
        nets.push(assemble(&t, &cfg).map_err(fail)?.net);
    }
    Ok(nets)
}

fn norm_equivalence() -> Check {
    let nets = built_nets()?;
    for net in &nets {
        let s = net.stats();
        let l0 = Dyadic::from_int(s.l0 as i64);
        ensure(l0.half() <= s.l1 && s.l1 <= l0.double(), || {
            format!("{}: l0 {} l1 {}", net.label(), s.l0, s.l1)
        })?;
    }
    Ok(format!("l0/2 <= l1 <= 2 l0 on {} networks", nets.len()))
}

fn reference_count(depth: u64, width: u64, s: u64) -> (BigUint, BigUint) {
    let mut base = BigUint::from(0u32);
    for _ in 0..5 * (depth + 1) {
        base += width * width;
    }
    let mut power = BigUint::from(1u32);
    let mut sum = BigUint::from(0u32);
    for _ in 0..=s {
        sum += &power;
        power *= &base;
    }
    (sum, power)
}

fn counting() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut largest = 0u64;
    for _ in 0..COUNT_TRIPLES {
        let depth = rng.random_range(0..=60u64);
        let width = rng.random_range(1..=300u64);
        let s = rng.random_range(0..=400u64);
        let c = count_networks(depth, width, s).map_err(fail)?;
        let (sum, bound) = reference_count(depth, width, s);
        ensure(c.partial_sum == sum, || {
            format!("({depth}, {width}, {s}): partial sum differs")
        })?;
        ensure(c.bound == bound, || format!("({depth}, {width}, {s}): bound differs"))?;
        ensure(c.partial_sum <= c.bound, || {
            format!("({depth}, {width}, {s}): partial sum exceeds bound")
        })?;
        largest = largest.max(c.bound.bits());
    }
    Ok(format!(
        "{COUNT_TRIPLES} triples match, largest bound has {largest} bits"
    ))
}

fn oracle_values() -> Check {
    // Expected values of 4[a + F²(18 log2 N + 72)/n + 32δF + Δ_n] worked by hand.
    let cases: [(OracleArgs, f64); 5] = [
        ((0.0, 0.0, 1, 1.0, 0.0, 0.0), 288.0),
        ((0.25, 10.0, 4, 2.0, 0.0, 0.5), 1011.0),
        ((0.125, 2.0, 1024, 1.0, 0.5, 0.0), 64.921875),
        ((1.0, 100.0, 1 << 20, 3.0, 1.0 / 1024.0, 0.0625), 4.68927001953125),
        ((0.5, 0.5, 8, 0.5, 1.0, 0.25), 77.125),
    ];
    for ((a, h, n, f, delta, dn), want) in cases {
        let got = oracle_inequality(a, h, n, f, delta, dn).map_err(fail)?;
        ensure(got.to_bits() == want.to_bits(), || {
            format!("({a}, {h}, {n}, {f}, {delta}, {dn}): {got} != {want}")
        })?;
    }
    Ok("5 tuples bit-identical to hand values".into())
}

fn regression_trend() -> Check {
    let t = Target::named("sumsq", 1, Some(1.0), Some(1.5)).map_err(fail)?;
    let ns: Vec<u64> = (8..=13).map(|k| 1u64 << k).collect();
    let opts = RegressionOptions {
        heldout: 10_000,
        noise: 1.0,
        f_bound: 1.5,
    };
    let mut means = vec![0f64; ns.len()];
    for seed in 0..REGRESSION_SEEDS {
        let out = regression_simulate(&t, &ns, seed, opts).map_err(fail)?;
        ensure(out.skipped.is_empty(), || {
            format!("seed {seed}: skipped {:?}", out.skipped)
        })?;
        for (i, r) in out.records.iter().enumerate() {
            ensure(r.heldout_mse <= r.sup_bound * r.sup_bound, || {
                format!(
                    "n = {}: mse {} > squared bound {}",
                    r.n,
                    r.heldout_mse,
                    r.sup_bound * r.sup_bound
                )
            })?;
            means[i] += r.heldout_mse / REGRESSION_SEEDS as f64;
        }
    }
    for w in means.windows(2) {
        ensure(w[1] <= w[0] * (1.0 + PLATEAU_RTOL), || {
            format!("mean held-out mse rises: {means:?}")
        })?;
    }
    let points: Vec<(f64, f64)> = ns.iter().zip(&means).map(|(&n, &e)| (n as f64, e)).collect();
    let slope = log_log_slope(&points).ok_or("slope undefined")?;
    let lo = -2.0 * t.beta() / (2.0 * t.beta() + t.dim() as f64) - 0.5;
    ensure((lo..=0.0).contains(&slope), || {
        format!("slope {slope} outside [{lo}, 0]")
    })?;
    Ok(format!(
        "mean mse non-increasing, within squared bound, slope {slope:.3} in [{lo:.3}, 0]"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("product error on 129x129 grid", mult_bound),
        ("product network structure", mult_structure),
        ("parabola partial sums", r_sum_bound),
        ("r-fold product", mult_r_bound),
        ("monomial block", mon_bound),
        ("constants block", constants_block),
        ("partition of unity", partition_of_unity),
        ("end-to-end approximation sweep", approximation_sweep),
        ("coefficient quantization", quantization),
        ("l0/l1 equivalence", norm_equivalence),
        ("network counting", counting),
        ("oracle inequality values", oracle_values),
        ("regression trend", regression_trend),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
