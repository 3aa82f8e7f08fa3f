use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use quintnet::analysis::{
    check_structure, count_networks, log_log_slope, quint_bounds, regression_simulate, sup_error, EvalMode, Oracle,
    RegressionOptions,
};
use quintnet::atoms::{build_mon, build_mult, build_mult_r, build_nm, monomial_indices};
use quintnet::constants::{build_const_net, ConstantPlan};
use quintnet::taylor::{assemble, check_ball, make_config, SmoothTarget, Target};
use quintnet::{Dyadic, Error, QuintNet};

/// Build and verify ReLU networks with weights in {0, ±1/2, ±1, 2}.
#[derive(Parser)]
#[command(name = "quintnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Block {
    Mult,
    Multr,
    Mon,
    Nm,
    Const,
}

#[derive(Subcommand)]
enum Command {
    /// Build one block and write it as JSON.
    Build {
        #[arg(long, value_enum)]
        block: Block,
        #[arg(long, default_value_t = 4)]
        m: u32,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        delta: Option<u32>,
        /// Comma-separated integer targets for the constants block.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check measured grid errors of product blocks against their bounds.
    Verify {
        #[arg(long, value_enum)]
        block: Block,
        /// Inclusive range such as `1..12`, or a single value.
        #[arg(long, default_value = "1..8")]
        m_range: String,
        #[arg(long, default_value_t = 2)]
        r: usize,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Grid points per axis, of the form 2^k + 1.
        #[arg(long)]
        grid: Option<u64>,
        /// Verify this network file instead of building the block.
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Build the smooth-function approximant and check it.
    Approx {
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long = "N")]
        n: u64,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        grid: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print statistics of a network file.
    Stats {
        #[arg(long)]
        net: PathBuf,
    },
    /// Count networks of a given size, or of the size of a network file.
    Count {
        #[arg(long = "L")]
        depth: Option<u64>,
        #[arg(long = "p")]
        width: Option<u64>,
        #[arg(long = "s")]
        sparsity: Option<u64>,
        #[arg(long)]
        net: Option<PathBuf>,
    },
    /// Plug-in regression sweep over sample sizes.
    Regress {
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "F")]
        f_bound: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        heldout: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Approximation error sweep over (N, m).
    Sweep {
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long = "K")]
        k: Option<f64>,
        #[arg(long = "N-list", value_delimiter = ',')]
        n_list: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        m_list: Vec<u32>,
        #[arg(long)]
        grid: Option<u64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Relative change below which consecutive errors count as equal.
const PLATEAU_RTOL: f64 = 1e-12;

enum Failure {
    Usage(String),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse_range(s: &str) -> Result<Vec<u32>, Failure> {
    let bad = || usage(format!("bad range '{s}', expected A..B or a single value"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().trim_start_matches('=').parse().map_err(|_| bad())?,
        ),
        None => {
            let v: u32 = s.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn grid_level(points: Option<u64>, d: usize) -> Result<u32, Failure> {
    match points {
        None => Ok(match d {
            1 => 10,
            2 => 7,
            3 => 4,
            _ => 2,
        }),
        Some(p) if p >= 2 && (p - 1).is_power_of_two() => Ok((p - 1).trailing_zeros()),
        Some(p) => Err(usage(format!("--grid {p} must be 2^k + 1 points per axis"))),
    }
}

fn print_stats(net: &QuintNet) {
    let s = net.stats();
    println!(
        "{}: depth {} max_width {} l0 {} l1 {} inputs {} outputs {}",
        net.label(),
        s.depth,
        s.max_width,
        s.l0,
        s.l1,
        net.input_width(),
        net.output_width()
    );
}

fn write_net(net: &QuintNet, out: Option<&Path>) -> Outcome {
    if let Some(path) = out {
        fs::write(path, net.to_json())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<QuintNet, Failure> {
    let text = fs::read_to_string(path)?;
    Ok(QuintNet::from_json(&text)?)
}

fn build(
    block: Block,
    m: u32,
    r: usize,
    gamma: f64,
    d: usize,
    delta: Option<u32>,
    targets: &[u64],
) -> Result<QuintNet, Failure> {
    if block != Block::Const && (delta.is_some() || !targets.is_empty()) {
        return Err(usage("--delta and --targets only apply to --block const"));
    }
    Ok(match block {
        Block::Mult => build_mult(m)?,
        Block::Multr => build_mult_r(r, m)?,
        Block::Mon => build_mon(d, gamma, m)?,
        Block::Nm => build_nm(m)?,
        Block::Const => {
            let delta = delta.ok_or_else(|| usage("--block const needs --delta"))?;
            let plan = ConstantPlan::new(delta, targets.to_vec())?;
            build_const_net(&plan, 1 + d)?
        }
    })
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

fn verify(block: Block, ms: &[u32], r: usize, gamma: f64, d: usize, grid: Option<u64>, file: Option<&Path>) -> Outcome {
    let (dim, oracle, bound_factor): (usize, Oracle<'static>, f64) = match block {
        Block::Mult => (2, Oracle::exact(|x: &[Dyadic]| vec![&x[0] * &x[1]]), 1.0),
        Block::Multr => (
            r,
            Oracle::exact(|x: &[Dyadic]| vec![x.iter().fold(Dyadic::ONE, |a, v| a * v)]),
            (r * r) as f64,
        ),
        Block::Mon => (d, monomial_oracle(d, gamma), gamma * gamma),
        _ => return Err(usage("verify supports --block mult, multr or mon")),
    };
    if file.is_some() && ms.len() != 1 {
        return Err(usage("--net needs a single --m-range value"));
    }
    let level = grid_level(grid, dim)?;
    println!("{:<8} {:>4} {:>14} {:>14}  result", "block", "m", "measured", "bound");
    let mut all = true;
    for &m in ms {
        let net = match file {
            Some(p) => load_net(p)?,
            None => build(block, m, r, gamma, d, None, &[])?,
        };
        let e = sup_error(&net, &oracle, dim, level, EvalMode::Exact)?;
        let bound = bound_factor * 2f64.powi(-(m as i32));
        let ok = e.value <= bound;
        all &= ok;
        println!(
            "{:<8} {:>4} {:>14.6e} {:>14.6e}  {}",
            format!("{block:?}").to_lowercase(),
            m,
            e.value,
            bound,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn target_from(name: &str, d: usize, beta: Option<f64>, k: Option<f64>) -> Result<Target, Failure> {
    let t = Target::named(name, d, beta, k)?;
    check_ball(&t, 256, 0)?;
    Ok(t)
}

struct ApproxRow {
    n: u64,
    m: u32,
    measured: f64,
    bound: f64,
    structure_ok: bool,
    depth: usize,
    width: usize,
    l0: usize,
}

fn run_approx(t: &Target, n: u64, m: u32, level: u32, verbose: bool) -> Result<(ApproxRow, QuintNet), Failure> {
    let cfg = make_config(t, n, m)?;
    let approx = assemble(t, &cfg)?;
    let net = approx.net;
    net.validate().map_err(Error::from)?;
    let oracle = Oracle::target(t);
    let e = sup_error(&net, &oracle, t.dim(), level, EvalMode::Mixed)?;
    let bounds = quint_bounds(t.beta(), t.dim(), t.radius(), n, m)?;
    let stats = net.stats();
    let checks = check_structure(&stats, t.beta(), t.dim(), t.radius(), n, m)?;
    if verbose {
        print_stats(&net);
        println!(
            "grid: M = {}, anchors = {}, B = {}, b = {}, h = {}, constants at 2^-{}",
            cfg.grid, cfg.n_tilde, cfg.scale, cfg.bits, cfg.headroom, cfg.const_delta
        );
        for c in &checks {
            println!(
                "{:<9} {:>14.1} <= {:>14.1}  {}",
                c.name,
                c.actual,
                c.bound,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        let argmax: Vec<String> = e.argmax.iter().map(|v| v.to_string()).collect();
        println!(
            "sup error {:.6e} at ({}) over {} points; bound {:.6e}  {}",
            e.value,
            argmax.join(", "),
            e.points,
            bounds.error,
            if e.value <= bounds.error { "PASS" } else { "FAIL" }
        );
    }
    Ok((
        ApproxRow {
            n,
            m,
            measured: e.value,
            bound: bounds.error,
            structure_ok: checks.iter().all(|c| c.pass),
            depth: stats.depth,
            width: stats.max_width,
            l0: stats.l0,
        },
        net,
    ))
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Build {
            block,
            m,
            r,
            gamma,
            d,
            delta,
            targets,
            out,
        } => {
            let net = build(block, m, r, gamma, d, delta, &targets)?;
            print_stats(&net);
            write_net(&net, out.as_deref())
        }
        Command::Verify {
            block,
            m_range,
            r,
            gamma,
            d,
            grid,
            net,
        } => verify(block, &parse_range(&m_range)?, r, gamma, d, grid, net.as_deref()),
        Command::Approx {
            target,
            d,
            beta,
            k,
            n,
            m,
            grid,
            out,
        } => {
            let t = target_from(&target, d, beta, k)?;
            let (row, net) = run_approx(&t, n, m, grid_level(grid, d)?, true)?;
            write_net(&net, out.as_deref())?;
            if row.structure_ok && row.measured <= row.bound {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
        Command::Stats { net } => {
            let net = load_net(&net)?;
            print_stats(&net);
            let alphabet: Vec<&str> = net.alphabet().iter().map(|w| w.symbol()).collect();
            println!("widths {:?}", net.widths());
            println!("alphabet {{{}}}", alphabet.join(", "));
            Ok(())
        }
        Command::Count {
            depth,
            width,
            sparsity,
            net,
        } => {
            let (l, p, s) = match (net, depth, width, sparsity) {
                (Some(path), None, None, None) => {
                    let s = load_net(&path)?.stats();
                    (s.depth as u64, s.max_width as u64, s.l0 as u64)
                }
                (None, Some(l), Some(p), Some(s)) => (l, p, s),
                _ => return Err(usage("give either --net or all of --L, --p, --s")),
            };
            let c = count_networks(l, p, s)?;
            println!("L = {l}, p = {p}, s = {s}");
            println!("base 5(L+1)p^2 = {}", c.base);
            println!("log2 bound = {:.6}", c.log2_bound());
            if c.bound.bits() <= 256 {
                println!("bound = {}", c.bound);
                println!("partial sum = {}", c.partial_sum);
            } else {
                println!("bound has {} bits", c.bound.bits());
            }
            Ok(())
        }
        Command::Regress {
            target,
            d,
            beta,
            k,
            n_list,
            seed,
            f_bound,
            heldout,
            noise,
            csv,
        } => {
            if n_list.is_empty() {
                return Err(usage("--n-list is required"));
            }
            let t = target_from(&target, d, beta, k)?;
            let opts = RegressionOptions {
                heldout,
                noise,
                f_bound: f_bound.unwrap_or(t.radius().max(1.0)),
            };
            let out = regression_simulate(&t, &n_list, seed, opts)?;
            for (n, why) in &out.skipped {
                println!("skipped n = {n}: {why}");
            }
            println!(
                "{:>7} {:>5} {:>3} {:>6} {:>6} {:>8} {:>13} {:>13}  trend",
                "n", "N", "m", "depth", "width", "l0", "heldout_mse", "rate_bound"
            );
            let mut prev = f64::INFINITY;
            let mut rising = false;
            for r in &out.records {
                let trend = if r.heldout_mse < prev * (1.0 - PLATEAU_RTOL) {
                    "down"
                } else if r.heldout_mse <= prev * (1.0 + PLATEAU_RTOL) {
                    "flat"
                } else {
                    "up"
                };
                rising |= trend == "up";
                prev = r.heldout_mse;
                println!(
                    "{:>7} {:>5} {:>3} {:>6} {:>6} {:>8} {:>13.6e} {:>13.6e}  {}",
                    r.n, r.big_n, r.m, r.depth, r.max_width, r.l0, r.heldout_mse, r.rate_bound, trend
                );
            }
            let pts: Vec<(f64, f64)> = out.records.iter().map(|r| (r.n as f64, r.heldout_mse)).collect();
            if let Some(slope) = log_log_slope(&pts) {
                println!("log-log slope {slope:.4}");
            }
            if let Some(path) = csv {
                let mut w = csv::Writer::from_path(&path)?;
                for r in &out.records {
                    w.serialize(r)?;
                }
                w.flush()?;
                println!("wrote {}", path.display());
            }
            if rising {
                println!("held-out error rises with n");
            }
            Ok(())
        }
        Command::Sweep {
            target,
            d,
            beta,
            k,
            n_list,
            m_list,
            grid,
            csv,
        } => {
            if n_list.is_empty() || m_list.is_empty() {
                return Err(usage("--N-list and --m-list are required"));
            }
            let t = target_from(&target, d, beta, k)?;
            let level = grid_level(grid, d)?;
            let mut rows = Vec::new();
            for &n in &n_list {
                for &m in &m_list {
                    rows.push(run_approx(&t, n, m, level, false)?.0);
                }
            }
            println!(
                "{:>6} {:>3} {:>6} {:>6} {:>8} {:>13} {:>13}  result",
                "N", "m", "depth", "width", "l0", "measured", "bound"
            );
            let mut all = true;
            for r in &rows {
                let ok = r.structure_ok && r.measured <= r.bound;
                all &= ok;
                println!(
                    "{:>6} {:>3} {:>6} {:>6} {:>8} {:>13.6e} {:>13.6e}  {}",
                    r.n,
                    r.m,
                    r.depth,
                    r.width,
                    r.l0,
                    r.measured,
                    r.bound,
                    if ok { "PASS" } else { "FAIL" }
                );
            }
            if let Some(path) = csv {
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["N", "m", "depth", "max_width", "l0", "measured", "bound", "pass"])?;
                for r in &rows {
                    let ok = r.structure_ok && r.measured <= r.bound;
                    w.write_record([
                        r.n.to_string(),
                        r.m.to_string(),
                        r.depth.to_string(),
                        r.width.to_string(),
                        r.l0.to_string(),
                        format!("{:e}", r.measured),
                        format!("{:e}", r.bound),
                        ok.to_string(),
                    ])?;
                }
                w.flush()?;
            }
            if all {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("QUINTNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
