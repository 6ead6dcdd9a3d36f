use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ciag_core::dataio::{synth_generate, write_libsvm};
use ciag_core::theory::{
    aciag_admissible_c, ciag_admissible_c, simulate_recursion_p5, simulate_recursion_p6,
    NegativeTerm, RateConstants, RecursionSpec, RecursionTerm,
};
use nalgebra::DVector;

use crate::config::{ConfigFile, DataSource, ExperimentConfig};
use crate::experiment::{load_problem, run_experiment};
use crate::reference::reference_solution;
use crate::{BenchError, Result};

#[derive(Debug, Parser)]
#[command(name = "ciag-bench", version, about = "Curvature-aided incremental gradient benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic logistic-regression dataset in LibSVM format.
    Synth(SynthArgs),
    /// Run a solver sweep and write trace and summary CSVs.
    Run(RunArgs),
    /// Print admissible step-size constants for a problem.
    Bounds(BoundsArgs),
    /// Simulate a delayed nonlinear recursion and check its envelope.
    Recursion(RecursionArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// LibSVM data file.
    #[arg(long, value_name = "PATH", conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic data instead of a file.
    #[arg(long, value_name = "M,D,SEED")]
    synth: Option<String>,
    /// Tuples per component function.
    #[arg(long, value_name = "B")]
    batch: Option<usize>,
}

impl DataArgs {
    fn source(&self) -> Result<Option<DataSource>> {
        match (&self.data, &self.synth) {
            (Some(p), _) => Ok(Some(DataSource::File(p.clone()))),
            (None, Some(s)) => Ok(Some(s.parse()?)),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_name = "M,D,SEED")]
    synth: String,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "data")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// key = value settings file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// NAME:gamma=..[,alpha=..|,c=..][,schedule=..]; repeatable.
    #[arg(long = "solver", value_name = "SPEC")]
    solvers: Vec<String>,
    /// Gradient-norm tolerance.
    #[arg(long, value_name = "T")]
    tol: Option<f64>,
    #[arg(long, value_name = "P")]
    max_passes: Option<f64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Iterations between trace records.
    #[arg(long, value_name = "N")]
    thin: Option<usize>,
    /// Seed for randomized schedules.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Initial squared distance ‖θ¹ − θ*‖²; computed from a reference solve when omitted.
    #[arg(long, value_name = "V")]
    v1: Option<f64>,
    /// Initial gap F(θ¹) − F*; defaults to (L/2)·v1 when only --v1 is given.
    #[arg(long, value_name = "H")]
    h1: Option<f64>,
    /// Staleness bound; defaults to the number of components.
    #[arg(long, value_name = "K")]
    k: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RecursionKind {
    P5,
    P6,
}

#[derive(Debug, Args)]
struct RecursionArgs {
    #[arg(long, value_enum, default_value = "p5")]
    kind: RecursionKind,
    /// Linear contraction factor.
    #[arg(long)]
    p: f64,
    /// Higher-order term COEF:EXPONENT; repeatable.
    #[arg(long = "term", value_name = "COEF:EXP")]
    terms: Vec<String>,
    /// Delay window length.
    #[arg(long, value_name = "M")]
    window: usize,
    /// Starting value.
    #[arg(long, value_name = "X")]
    initial: f64,
    /// Overshoot factor of the second recursion.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Negative feedback A1,A2,FBAR,D (constant D).
    #[arg(long, value_name = "A1,A2,FBAR,D")]
    negative: Option<String>,
    #[arg(long, value_name = "T", default_value_t = 10_000)]
    iters: usize,
    /// Write k,log_value rows here.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run_cmd(a),
        Command::Bounds(a) => bounds(a),
        Command::Recursion(a) => recursion(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn synth(a: SynthArgs) -> Result<i32> {
    let DataSource::Synth { m, d, seed } = a.synth.parse()? else {
        unreachable!("parsed from m,d,seed")
    };
    let data = synth_generate(m, d, seed)?;
    fs::create_dir_all(&a.out).map_err(|e| BenchError::io(&a.out, e))?;
    let path = a.out.join(format!("synth_m{m}_d{d}_s{seed}.svm"));
    let file = fs::File::create(&path).map_err(|e| BenchError::io(&path, e))?;
    write_libsvm(&data.dataset, io::BufWriter::new(file))?;
    println!("{}", path.display());
    Ok(0)
}

fn experiment_config(a: RunArgs) -> Result<ExperimentConfig> {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let source = a
        .data
        .source()?
        .or(file.source)
        .ok_or_else(|| BenchError::config("need --data, --synth or a config file naming one"))?;
    let mut cfg = ExperimentConfig::new(source);
    cfg.batch = a.data.batch.or(file.batch).unwrap_or(cfg.batch);
    cfg.solvers = if a.solvers.is_empty() {
        file.solvers
    } else {
        a.solvers.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    cfg.tol = a.tol.or(file.tol).unwrap_or(cfg.tol);
    cfg.max_passes = a.max_passes.or(file.max_passes).unwrap_or(cfg.max_passes);
    cfg.thin = a.thin.or(file.thin);
    cfg.seed = a.seed.or(file.seed).unwrap_or(cfg.seed);
    cfg.out = a.out.or(file.out).unwrap_or(cfg.out);
    Ok(cfg)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn run_cmd(a: RunArgs) -> Result<i32> {
    let cfg = experiment_config(a)?;
    let report = run_experiment(&cfg)?;
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "F* = {:.15e}", report.reference.value);
    let _ = writeln!(
        out,
        "{:<40} {:>11} {:>9} {:>10} {:>13} {:>12}",
        "solver", "gamma", "status", "passes", "passes_to_tol", "secs_to_tol"
    );
    for s in &report.summaries {
        let _ = writeln!(
            out,
            "{:<40} {:>11.4e} {:>9} {:>10} {:>13} {:>12}",
            s.spec.to_string(),
            s.gamma,
            s.status.label(),
            fmt_opt(s.passes),
            fmt_opt(s.passes_to_tol),
            fmt_opt(s.seconds_to_tol),
        );
    }
    let _ = writeln!(out, "summary: {}", report.summary_path.display());
    Ok(if report.any_diverged() { 2 } else { 0 })
}

fn bounds(a: BoundsArgs) -> Result<i32> {
    let source = a
        .data
        .source()?
        .ok_or_else(|| BenchError::config("need --data or --synth"))?;
    let problem = load_problem(&source, a.data.batch.unwrap_or(1))?;
    let (v1, h1) = match (a.v1, a.h1) {
        (Some(v), Some(h)) => (v, h),
        (Some(v), None) => (v, 0.5 * problem.big_l() * v),
        (None, h) => {
            let r = reference_solution(&problem, 1e-10)?;
            let origin = DVector::zeros(problem.dim());
            (r.theta.norm_squared(), h.unwrap_or(problem.value(&origin)? - r.value))
        }
    };
    let k = a.k.unwrap_or(problem.m());
    let rc = RateConstants::new(problem.mu(), problem.big_l(), problem.big_lh(), k, v1, h1)?;
    let c = ciag_admissible_c(&rc);
    let ac = aciag_admissible_c(&rc);
    println!(
        "m = {}  d = {}  mu = {:.6e}  L = {:.6e}  L_H = {:.6e}  kappa = {:.6e}",
        problem.m(),
        problem.dim(),
        rc.mu,
        rc.big_l,
        rc.big_lh,
        problem.kappa()
    );
    println!("K = {k}  V1 = {v1:.6e}  h1 = {h1:.6e}");
    println!("CIAG    c_max = {c:.6e}  gamma_max = {:.6e}", c / (rc.mu + rc.big_l));
    println!(
        "A-CIAG  c1 = {:.6e}  c2 = {:.6e}  c3 = {:.6e}  c_max = {:.6e}  gamma_max = {:.6e}",
        ac.c1,
        ac.c2,
        ac.c3,
        ac.c_max,
        ac.c_max / rc.big_l
    );
    Ok(0)
}

fn parse_floats<const N: usize>(what: &str, s: &str, sep: char) -> Result<[f64; N]> {
    let bad = || BenchError::config(format!("bad {what} {s:?}"));
    let v: Vec<f64> = s
        .split(sep)
        .map(|x| x.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    v.try_into().map_err(|_| bad())
}

fn recursion(a: RecursionArgs) -> Result<i32> {
    let terms = a
        .terms
        .iter()
        .map(|t| {
            let [coef, exponent] = parse_floats("term", t, ':')?;
            Ok(RecursionTerm { coef, exponent })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spec = RecursionSpec::new(a.p, terms, a.window, a.initial)?.with_b(a.b)?;
    if let Some(n) = &a.negative {
        let [a1, a2, f_bar, d] = parse_floats("negative term", n, ',')?;
        spec = spec.with_negative(NegativeTerm { a1, a2, f_bar, d: vec![d; a.iters] })?;
    }
    let verdict = match a.kind {
        RecursionKind::P5 => simulate_recursion_p5(&spec, a.iters)?,
        RecursionKind::P6 => simulate_recursion_p6(&spec, a.iters)?,
    };
    println!("delta = {:.6e}", verdict.delta);
    println!("condition_holds = {}", verdict.condition_holds);
    println!("envelope_holds = {}", verdict.envelope_holds);
    match verdict.tail_ratio {
        Some(r) => println!("tail_ratio = {r:.6e}"),
        None => println!("tail_ratio = -"),
    }
    println!("diverged = {}", verdict.diverged);
    if let Some(ok) = verdict.negative_coef_nonpositive {
        println!("negative_coef_nonpositive = {ok}");
    }
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "log_value"])?;
        for (k, l) in verdict.log_values.iter().enumerate() {
            w.write_record([(k + 1).to_string(), format!("{l:e}")])?;
        }
        w.flush().map_err(|e| BenchError::io(path, e))?;
    }
    Ok(0)
}
