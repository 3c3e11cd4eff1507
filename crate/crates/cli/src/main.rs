use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use nonsmooth::experiments::{
    gen_robust_instance, initial_point, pseudo_subgradient_run, run_lspar_experiment, run_recovery_experiment,
    KeyValues, LsparConfig, RecoveryConfig, RobustKind, RobustSpec,
};
use nonsmooth::expr::{ae_gradient, eval, parse_expr, Expr};
use nonsmooth::gallery::run_gallery;
use nonsmooth::lspar::{gen_lspar_data, planted_model};
use nonsmooth::polyhedra::{Ball, ConvexSetSpec};
use nonsmooth::solvers::{
    mm_lspar, projected_subgradient, subgradient_method, ExprOracle, MmParams, SolverOptions, SolverTrace,
    StepSchedule, SubgradOracle,
};
use nonsmooth::stationarity::{classify, DEFAULT_TOL};
use nonsmooth::subdiff::{bouligand, clarke, frechet, gradient_sampling, limiting, SamplingParams};

#[derive(Parser)]
#[command(name = "nonsmooth", version, about = "Subdifferentials, stationarity and subgradient solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate an expression at a point.
    Eval {
        #[arg(long)]
        expr: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
    },
    /// Compute a subdifferential as JSON.
    Subdiff {
        #[arg(long)]
        expr: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, value_enum, default_value = "clarke")]
        which: Which,
        /// Exact computation (default).
        #[arg(long, conflicts_with = "sampled")]
        exact: bool,
        /// Gradient sampling instead of the exact engine (Clarke only).
        #[arg(long)]
        sampled: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Classify a point as d-, l- or C-stationary.
    Classify {
        #[arg(long)]
        expr: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run a solver and optionally write its trace.
    Solve(SolveArgs),
    /// Run an experiment from a key = value configuration file.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
    /// Check every worked example against its expected result.
    Gallery {
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Frechet,
    Limiting,
    Clarke,
    Bouligand,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Subgrad,
    ProjSubgrad,
    Mm,
}

#[derive(clap::Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Objective given as an expression file.
    #[arg(long, conflicts_with = "problem")]
    expr: Option<PathBuf>,
    /// Built-in problem: lspar, matrix-recovery, sign-retrieval,
    /// amplitude-retrieval, blind-deconv or log-sum-ls.
    #[arg(long)]
    problem: Option<String>,
    /// `constant:a`, `diminishing:c`, `geometric:a0,q` or `polyak:fstar,margin`.
    #[arg(long, default_value = "diminishing:1")]
    schedule: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Starting point for expression objectives.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Feasible set for proj-subgrad: `box:lo,hi` or `ball:r`.
    #[arg(long)]
    set: Option<String>,
    /// Sample count (lspar) or signal length (recovery problems).
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Measurements for recovery problems.
    #[arg(long, default_value_t = 80)]
    m: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    outlier_frac: f64,
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentKind {
    Lspar {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Recovery {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad coordinate `{s}`")))
        .collect()
}

fn read_expr(path: &Path) -> Result<Expr> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_expr(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    // A closed pipe (e.g. `| head`) is not an error.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Eval { expr, point } => {
            let e = read_expr(&expr)?;
            println!("{}", eval(&e, &parse_point(&point)?)?);
        }
        Command::Subdiff {
            expr,
            point,
            which,
            sampled,
            seed,
            ..
        } => {
            let e = read_expr(&expr)?;
            let x = parse_point(&point)?;
            let set = if sampled {
                if !matches!(which, Which::Clarke) {
                    bail!("--sampled is only available for --which clarke");
                }
                e.check_dim(x.len())?;
                let params = SamplingParams {
                    seed,
                    ..Default::default()
                };
                gradient_sampling(|z| ae_gradient(&e, z).expect("dimension checked"), &x, &params)?.set
            } else {
                match which {
                    Which::Frechet => frechet(&e, &x)?,
                    Which::Limiting => limiting(&e, &x)?,
                    Which::Clarke => clarke(&e, &x)?,
                    Which::Bouligand => bouligand(&e, &x)?,
                }
            };
            print_json(&set)?;
            eprintln!("{}", set.summary());
        }
        Command::Classify { expr, point, tol } => {
            let e = read_expr(&expr)?;
            print_json(&classify(&e, &parse_point(&point)?, tol)?)?;
        }
        Command::Solve(args) => solve(args)?,
        Command::Experiment { which } => experiment(which)?,
        Command::Gallery { json } => {
            let out = run_gallery();
            let passed = out.iter().filter(|o| o.passed()).count();
            if json {
                print_json(&out)?;
            } else {
                for o in &out {
                    println!("{:<4} {:<10} {}", if o.passed() { "PASS" } else { "FAIL" }, o.id, o.title);
                    for c in &o.checks {
                        println!("       [{}] {}: {}", if c.passed { "ok" } else { "x" }, c.name, c.detail);
                    }
                    if let Some(n) = o.note {
                        println!("       note: {n}");
                    }
                }
                println!("{passed}/{} examples passing", out.len());
            }
            if passed != out.len() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_set(text: &str, dim: usize) -> Result<ConvexSetSpec> {
    let (kind, rest) = text.split_once(':').ok_or_else(|| anyhow!("set must look like box:lo,hi or ball:r"))?;
    let nums = parse_point(rest)?;
    match (kind, nums.as_slice()) {
        ("box", [lo, hi]) if lo <= hi => Ok(ConvexSetSpec::Box {
            lo: vec![*lo; dim],
            hi: vec![*hi; dim],
        }),
        ("ball", [r]) if *r > 0.0 => Ok(ConvexSetSpec::Ball(Ball {
            center: vec![0.0; dim],
            radius: *r,
        })),
        _ => bail!("unsupported set `{text}`"),
    }
}

fn write_trace(trace: &SolverTrace, path: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
        trace.write_csv(std::io::BufWriter::new(f))?;
    }
    Ok(())
}

fn report(trace: &SolverTrace) -> Result<()> {
    print_json(&json!({
        "iterations": trace.iterations(),
        "final_f": trace.final_objective(),
        "best_f": trace.best_objective(),
        "final_x": trace.final_x,
        "termination": trace.termination,
        "seed": trace.seed,
    }))
}

fn solve(args: SolveArgs) -> Result<()> {
    let schedule = StepSchedule::parse(&args.schedule)?;
    let opts = SolverOptions {
        max_iter: args.iters,
        keep_every: args.iters.max(1),
        seed: Some(args.seed),
        ..Default::default()
    };
    let run_oracle = |oracle: &dyn SubgradOracle, x0: &[f64]| -> Result<SolverTrace> {
        Ok(match args.method {
            Method::Subgrad => subgradient_method(oracle, x0, &schedule, &opts)?,
            Method::ProjSubgrad => {
                let set = args.set.as_deref().ok_or_else(|| anyhow!("proj-subgrad needs --set"))?;
                projected_subgradient(oracle, &parse_set(set, oracle.dim())?, x0, &schedule, &opts)?
            }
            Method::Mm => bail!("mm needs --problem lspar"),
        })
    };
    let trace = match (&args.expr, args.problem.as_deref()) {
        (Some(path), None) => {
            let e = read_expr(path)?;
            let x0 = parse_point(args.x0.as_deref().ok_or_else(|| anyhow!("--x0 is required with --expr"))?)?;
            let oracle = ExprOracle::new(e, x0.len())?;
            run_oracle(&oracle, &x0)?
        }
        (None, Some("lspar")) => {
            let data = gen_lspar_data(args.n, args.noise, args.seed);
            let w0 = nonsmooth::experiments::initial_weights(args.seed, planted_model().len(), 2);
            match args.method {
                Method::Mm => {
                    let r = mm_lspar(&data, &w0, &MmParams::default(), Some(args.seed))?;
                    eprintln!(
                        "certificate: stationary = {}, min f' = {:.3e}",
                        r.certificate.stationary, r.certificate.min_value
                    );
                    r.trace
                }
                Method::Subgrad => pseudo_subgradient_run(&data, &w0, &schedule, args.iters)?,
                Method::ProjSubgrad => bail!("proj-subgrad is not available for lspar"),
            }
        }
        (None, Some(kind)) => {
            let kind: RobustKind = kind.parse()?;
            let spec = RobustSpec::new(kind, args.n, args.m, args.outlier_frac, args.seed);
            let inst = gen_robust_instance(&spec)?;
            let x0 = match &args.x0 {
                Some(p) => parse_point(p)?,
                None => initial_point(&inst, args.noise),
            };
            let dist = |z: &[f64]| inst.orbit_distance(z);
            let opts = SolverOptions {
                distance: Some(&dist),
                max_iter: args.iters,
                keep_every: args.iters.max(1),
                seed: Some(args.seed),
                ..Default::default()
            };
            match args.method {
                Method::Subgrad => subgradient_method(&inst, &x0, &schedule, &opts)?,
                Method::ProjSubgrad => {
                    let set = args.set.as_deref().ok_or_else(|| anyhow!("proj-subgrad needs --set"))?;
                    projected_subgradient(&inst, &parse_set(set, inst.problem.dim())?, &x0, &schedule, &opts)?
                }
                Method::Mm => bail!("mm needs --problem lspar"),
            }
        }
        _ => bail!("give exactly one of --expr or --problem"),
    };
    write_trace(&trace, &args.trace)?;
    report(&trace)?;
    Ok(())
}

fn experiment(which: ExperimentKind) -> Result<()> {
    match which {
        ExperimentKind::Lspar { config, out } => {
            let kv = match &config {
                Some(p) => KeyValues::read(p)?,
                None => KeyValues::default(),
            };
            let cfg = LsparConfig::from_kv(&kv)?;
            let dir = out
                .or_else(|| kv.get_str("out_dir").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("lspar-out"));
            let summary = run_lspar_experiment(&cfg, &dir)?;
            print_json(&summary)?;
            eprintln!("results written to {}", dir.display());
        }
        ExperimentKind::Recovery { config, out } => {
            let kv = match &config {
                Some(p) => KeyValues::read(p)?,
                None => KeyValues::default(),
            };
            let cfg = RecoveryConfig::from_kv(&kv)?;
            let dir = out.or_else(|| kv.get_str("out_dir").map(PathBuf::from));
            let s = run_recovery_experiment(&cfg, dir.as_deref())?;
            print_json(&json!({
                "kind": s.kind,
                "iterations": s.trace.iterations(),
                "initial_dist": s.initial_dist,
                "final_dist": s.final_dist,
                "best_dist": s.best_dist,
                "slope": s.slope,
                "r2": s.r2,
            }))?;
        }
    }
    Ok(())
}
