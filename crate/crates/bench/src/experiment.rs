use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use ciag_core::dataio::{logistic_problem, parse_libsvm, synth_generate, Dataset};
use ciag_core::oracle::{ProblemInstance, Reference};
use ciag_core::optim::{run_with_reference, Outcome, Trace};
use ciag_core::Error as CoreError;

use crate::config::{DataSource, ExperimentConfig};
use crate::reference::reference_solution;
use crate::solver_spec::SolverSpec;
use crate::{BenchError, Result};

pub const TRACE_HEADER: [&str; 5] = ["k", "passes", "gap", "grad_norm", "elapsed_s"];

pub const SUMMARY_HEADER: [&str; 10] = [
    "solver",
    "gamma",
    "alpha",
    "status",
    "iterations",
    "passes",
    "passes_to_tol",
    "seconds_to_tol",
    "final_grad_norm",
    "final_gap",
];

/// The reference is solved this many times tighter than the experiment
/// tolerance (the reference solver itself aims another 10x lower).
pub const REFERENCE_TOL_FACTOR: f64 = 10.0;

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::File(path) => {
            let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
            parse_libsvm(BufReader::new(file), None)
                .map_err(|source| BenchError::Data { path: path.clone(), source })
        }
        DataSource::Synth { m, d, seed } => Ok(synth_generate(*m, *d, *seed)?.dataset),
    }
}

pub fn load_problem(source: &DataSource, batch: usize) -> Result<ProblemInstance> {
    let data = load_dataset(source)?;
    logistic_problem(&data, batch).map_err(|e| match source {
        DataSource::File(path) => BenchError::Data { path: path.clone(), source: e },
        DataSource::Synth { .. } => e.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Converged,
    BudgetExhausted,
    Diverged { iteration: usize, norm: f64 },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverSummary {
    pub spec: SolverSpec,
    pub gamma: f64,
    pub alpha: f64,
    pub status: RunStatus,
    pub iterations: usize,
    pub passes: Option<f64>,
    pub passes_to_tol: Option<f64>,
    pub seconds_to_tol: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub final_gap: Option<f64>,
    pub trace_path: PathBuf,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub reference: Reference,
    pub summaries: Vec<SolverSummary>,
    /// `None` where the solver diverged.
    pub traces: Vec<Option<Trace>>,
    pub summary_path: PathBuf,
}

impl ExperimentReport {
    pub fn any_diverged(&self) -> bool {
        self.summaries
            .iter()
            .any(|s| matches!(s.status, RunStatus::Diverged { .. }))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn plain(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_trace(path: &Path, trace: Option<&Trace>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in trace.map_or(&[][..], |t| &t.records) {
        w.write_record([
            r.k.to_string(),
            r.passes.to_string(),
            opt(r.gap),
            format!("{:e}", r.grad_norm),
            format!("{:e}", r.elapsed_s),
        ])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

fn write_summary(path: &Path, rows: &[SolverSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for s in rows {
        w.write_record([
            s.spec.to_string(),
            format!("{:e}", s.gamma),
            s.alpha.to_string(),
            s.status.label().to_string(),
            s.iterations.to_string(),
            plain(s.passes),
            plain(s.passes_to_tol),
            opt(s.seconds_to_tol),
            opt(s.final_grad_norm),
            opt(s.final_gap),
        ])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

/// Loads the problem, solves for a reference point, then runs every solver
/// in turn and writes one trace CSV per solver plus `summary.csv` to `out`.
/// A diverging solver is recorded and the remaining solvers still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let problem = load_problem(&config.source, config.batch)?;
    let solver_cfgs = config
        .solvers
        .iter()
        .map(|s| {
            let mut c = s
                .to_config(&problem)?
                .with_seed(config.seed)
                .with_stop(config.tol, config.max_passes);
            if let Some(t) = config.thin {
                c = c.with_thin(t);
            }
            c.validate(&problem)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;

    let reference = reference_solution(&problem, config.tol / REFERENCE_TOL_FACTOR)?;
    fs::create_dir_all(&config.out).map_err(|e| BenchError::io(&config.out, e))?;

    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for (idx, (spec, cfg)) in config.solvers.iter().zip(&solver_cfgs).enumerate() {
        let trace_path = config
            .out
            .join(format!("{idx:02}_{}.csv", spec.algorithm.name().to_ascii_lowercase()));
        let (trace, status) = match run_with_reference(&problem, cfg, &reference) {
            Ok(t) => {
                let status = match t.outcome {
                    Outcome::Converged => RunStatus::Converged,
                    Outcome::BudgetExhausted => RunStatus::BudgetExhausted,
                };
                (Some(t), status)
            }
            Err(CoreError::Divergence { iteration, norm }) => {
                (None, RunStatus::Diverged { iteration, norm })
            }
            Err(e) => return Err(e.into()),
        };
        write_trace(&trace_path, trace.as_ref())?;

        let last = trace.as_ref().map(Trace::last);
        summaries.push(SolverSummary {
            spec: spec.clone(),
            gamma: cfg.gamma,
            alpha: cfg.effective_alpha(problem.mu()),
            status,
            iterations: match status {
                RunStatus::Diverged { iteration, .. } => iteration,
                _ => last.map_or(0, |r| r.k),
            },
            passes: last.map(|r| r.passes),
            passes_to_tol: trace.as_ref().and_then(|t| t.passes_to_tol(config.tol)),
            seconds_to_tol: trace.as_ref().and_then(|t| t.seconds_to_tol(config.tol)),
            final_grad_norm: last.map(|r| r.grad_norm),
            final_gap: last.and_then(|r| r.gap),
            trace_path,
        });
        traces.push(trace);
    }

    let summary_path = config.out.join("summary.csv");
    write_summary(&summary_path, &summaries)?;
    Ok(ExperimentReport { reference, summaries, traces, summary_path })
}
