use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use winmp::bench::timing::{bench_dp_vs_dfs, write_bench_csv};
use winmp::bench::{
    example1_strategies, gen_example1, gen_gadget, gen_ring3, optimal_ring_strategy, parse_dimacs, ring_eval,
    GadgetInstance,
};
use winmp::check::run_suite;
use winmp::synth::write_trace_csv;
use winmp::textfmt::fmt_g;
use winmp::{evaluate_strategy_file, synthesize, Error, Eval, EvalSpec, FrStrategy, Mdp, Method, SynthConfig};

#[derive(Parser)]
#[command(name = "winmp", version, about = "Strategy synthesis for multiple window mean payoffs in MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a finite-memory randomized strategy by gradient descent.
    Synth(SynthArgs),
    /// Evaluate a stored strategy.
    Eval(EvalArgs),
    /// Generate benchmark MDPs and strategies.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Timing benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Run a self-check suite (smoke, oracle, grad, rings).
    Check {
        #[arg(long)]
        suite: String,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Evaluation function, e.g. `l1target:1,1;penalty=5` or `threshold:4.4`.
    #[arg(long)]
    eval: String,
    /// Window length d.
    #[arg(long)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    memory: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    init_a: Option<f64>,
    #[arg(long)]
    init_b: Option<f64>,
    /// Where to write the best strategy.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the per-step trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    strategy: PathBuf,
    #[arg(long)]
    eval: String,
    #[arg(long)]
    window: usize,
    /// Use path enumeration instead of dynamic programming.
    #[arg(long)]
    dfs: bool,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Three-layer ring with ℓ positions per layer.
    Ring3 {
        #[arg(long)]
        ell: usize,
        /// Window length; records the matching threshold eval in the header.
        #[arg(long)]
        window: Option<usize>,
        /// Write the optimal cyclic strategy for (ell, window) here.
        #[arg(long, requires = "window")]
        strategy: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-vertex example with its reference strategies.
    Example1 {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for the reference strategy files.
        #[arg(long)]
        strategies: Option<PathBuf>,
    },
    /// Subset-sum gadget.
    Subsetsum {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        nums: Vec<i64>,
        #[arg(long, allow_hyphen_values = true)]
        target: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Knapsack gadget.
    Knapsack {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<i64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Vec<i64>,
        /// Required total value.
        #[arg(long)]
        value: i64,
        #[arg(long)]
        capacity: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SAT gadget from a DIMACS CNF file.
    Sat {
        #[arg(long)]
        cnf: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Per-step time of DP and DFS evaluation on rings with ℓ = d.
    DpVsDfs {
        /// Inclusive range `lo..hi`; odd values are skipped.
        #[arg(long, default_value = "4..30")]
        ell_range: String,
        /// Memory size or inclusive range `lo..hi`.
        #[arg(long, default_value = "1..5")]
        memory: String,
        /// Per-step timeout in seconds.
        #[arg(long, default_value_t = 20.0)]
        timeout: f64,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Bad input detected by the CLI itself.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidMdp(_)
            | Error::Parse { .. }
            | Error::EmptyAllocation(_)
            | Error::InvalidStrategy(_)
            | Error::StochasticConsistency { .. }
            | Error::Dimension(_)
            | Error::ZeroWindow
            | Error::EvalSpec { .. }
            | Error::Config(_)
            | Error::Instance(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("WINMP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("WINMP_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring thread pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(g) => cmd_gen(g),
        Command::Bench(BenchCommand::DpVsDfs {
            ell_range,
            memory,
            timeout,
            steps,
            seed,
            out,
        }) => cmd_bench(&ell_range, &memory, timeout, steps, seed, out),
        Command::Check { suite } => cmd_check(&suite),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_problem(mdp: &Path, eval: &str, window: usize) -> Result<(Mdp, Eval)> {
    let mdp = Mdp::parse(&read(mdp)?).with_context(|| format!("in {}", mdp.display()))?;
    let spec: EvalSpec = eval.parse()?;
    let eval = Eval::bind(spec, &mdp)?;
    if window == 0 {
        return Err(Error::ZeroWindow.into());
    }
    Ok((mdp, eval))
}

fn threads() -> usize {
    rayon::current_num_threads()
}

fn cmd_synth(a: SynthArgs) -> Result<u8> {
    let (mdp, eval) = load_problem(&a.mdp, &a.eval, a.window)?;
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        steps: a.steps,
        restarts: a.restarts,
        seed: a.seed,
        memory: a.memory,
        lr: a.lr.unwrap_or(defaults.lr),
        init_a: a.init_a.unwrap_or(defaults.init_a),
        init_b: a.init_b.unwrap_or(defaults.init_b),
        ..defaults
    };
    cfg.validate()?;
    eprintln!(
        "config: mdp={} eval={} window={} memory={} steps={} restarts={} seed={} lr={} betas=({}, {}) eps={:e} \
         init=loguniform[{}, {}] clip={} threads={}",
        a.mdp.display(),
        eval.spec(),
        a.window,
        cfg.memory,
        cfg.steps,
        cfg.restarts,
        cfg.seed,
        cfg.lr,
        cfg.beta1,
        cfg.beta2,
        cfg.eps,
        cfg.init_a,
        cfg.init_b,
        cfg.clip_norm,
        threads()
    );
    let r = synthesize(&mdp, &eval, a.window, &cfg)?;
    for e in &r.events {
        eprintln!("restart {} step {}: {}", e.restart, e.step, e.message);
    }
    if let Some(p) = &a.out {
        write(p, &r.strategy.to_text(&mdp))?;
    }
    if let Some(p) = &a.trace {
        let f = fs::File::create(p).with_context(|| format!("writing {}", p.display()))?;
        let mut w = BufWriter::new(f);
        write_trace_csv(&mut w, &r.trace)?;
        w.flush()?;
    }
    println!("wval {}", fmt_g(r.wval, 12));
    println!("restart {} step {}", r.restart, r.step);
    Ok(0)
}

fn cmd_eval(a: EvalArgs) -> Result<u8> {
    let (mdp, eval) = load_problem(&a.mdp, &a.eval, a.window)?;
    let sigma = FrStrategy::parse(&mdp, &read(&a.strategy)?).with_context(|| format!("in {}", a.strategy.display()))?;
    let method = if a.dfs { Method::Dfs } else { Method::Dp };
    eprintln!(
        "config: mdp={} strategy={} eval={} window={} method={}",
        a.mdp.display(),
        a.strategy.display(),
        eval.spec(),
        a.window,
        method.name()
    );
    let r = evaluate_strategy_file(&mdp, &sigma, &eval, a.window, method)?;
    for (i, b) in r.bsccs.iter().enumerate() {
        println!(
            "bscc {i} wval {} gval {} states {}",
            fmt_g(b.wval, 12),
            fmt_g(b.gval, 12),
            b.states.join(" ")
        );
    }
    println!("best {}", r.best);
    println!("wval {}", fmt_g(r.wval, 12));
    Ok(0)
}

fn gadget_text(inst: GadgetInstance) -> Result<String> {
    let g = gen_gadget(&inst)?;
    Ok(g.mdp.to_text_with_comments(&[format!("eval: {}", g.eval), format!("window: {}", g.d)]))
}

fn cmd_gen(g: GenCommand) -> Result<u8> {
    match g {
        GenCommand::Ring3 {
            ell,
            window,
            strategy,
            out,
        } => {
            eprintln!("config: gen ring3 ell={ell} window={window:?}");
            let mdp = gen_ring3(ell)?;
            let mut comments = vec![format!("three-layer ring, ell={ell}")];
            if let Some(d) = window {
                comments.push(format!("eval: {}", ring_eval(ell, d)?));
                comments.push(format!("window: {d}"));
                if let Some(p) = &strategy {
                    write(p, &optimal_ring_strategy(ell, d)?)?;
                }
            }
            emit(out.as_deref(), &mdp.to_text_with_comments(&comments))?;
        }
        GenCommand::Example1 { out, strategies } => {
            eprintln!("config: gen example1");
            let (mdp, spec, d) = gen_example1();
            if let Some(dir) = &strategies {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                for s in example1_strategies() {
                    let header = format!("# {}: memory {}, wval {}\n", s.name, s.memory, s.expected);
                    write(&dir.join(format!("{}.strategy", s.name)), &(header + &s.text))?;
                }
            }
            let comments = [format!("eval: {spec}"), format!("window: {d}")];
            emit(out.as_deref(), &mdp.to_text_with_comments(&comments))?;
        }
        GenCommand::Subsetsum { nums, target, out } => {
            eprintln!("config: gen subsetsum nums={nums:?} target={target}");
            emit(out.as_deref(), &gadget_text(GadgetInstance::SubsetSum { nums, target })?)?;
        }
        GenCommand::Knapsack {
            values,
            weights,
            value,
            capacity,
            out,
        } => {
            eprintln!("config: gen knapsack values={values:?} weights={weights:?} value={value} capacity={capacity}");
            if values.len() != weights.len() {
                return Err(usage(format!(
                    "{} values but {} weights",
                    values.len(),
                    weights.len()
                )));
            }
            let items = values.into_iter().zip(weights).collect();
            emit(
                out.as_deref(),
                &gadget_text(GadgetInstance::Knapsack {
                    items,
                    value,
                    capacity,
                })?,
            )?;
        }
        GenCommand::Sat { cnf, out } => {
            eprintln!("config: gen sat cnf={}", cnf.display());
            let inst = parse_dimacs(&read(&cnf)?)?;
            emit(out.as_deref(), &gadget_text(inst)?)?;
        }
    }
    Ok(0)
}

/// Parses `n` or an inclusive `lo..hi`.
fn parse_range(s: &str, what: &str) -> Result<Vec<usize>> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| usage(format!("bad {what} `{s}`: expected N or LO..HI")))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (num(lo)?, num(hi.trim_start_matches('='))?),
        None => {
            let n = num(s)?;
            (n, n)
        }
    };
    if lo > hi {
        return Err(usage(format!("empty {what} `{s}`")));
    }
    Ok((lo..=hi).collect())
}

fn cmd_bench(ell_range: &str, memory: &str, timeout: f64, steps: usize, seed: u64, out: Option<PathBuf>) -> Result<u8> {
    let ells = parse_range(ell_range, "ell range")?;
    let memories = parse_range(memory, "memory range")?;
    if memories.contains(&0) {
        return Err(usage("memory sizes must be positive"));
    }
    if !(timeout > 0.0 && timeout.is_finite()) {
        return Err(usage(format!("timeout must be positive, got {timeout}")));
    }
    eprintln!(
        "config: bench dp-vs-dfs ell={ell_range} memory={memory} timeout={timeout}s steps={steps} seed={seed} threads={}",
        threads()
    );
    let rows = bench_dp_vs_dfs(
        &ells,
        &memories,
        steps,
        Duration::from_secs_f64(timeout),
        seed,
        |r| {
            eprintln!(
                "ell={} K={} {} {:.4}s{}",
                r.ell,
                r.memory,
                r.method.name(),
                r.mean_step_seconds,
                if r.timed_out { " (timeout)" } else { "" }
            )
        },
    )?;
    let mut buf = Vec::new();
    write_bench_csv(&mut buf, &rows)?;
    emit(out.as_deref(), std::str::from_utf8(&buf)?)?;
    Ok(0)
}

fn cmd_check(suite: &str) -> Result<u8> {
    eprintln!("config: check suite={suite} threads={}", threads());
    let report = run_suite(suite)?;
    print!("{report}");
    if report.passed() {
        println!("suite {suite}: PASS");
        Ok(0)
    } else {
        println!("suite {suite}: FAIL");
        Ok(1)
    }
}
