//! Iteration drivers: CIAG, A-CIAG and the FG, AFG, IAG, SAG baselines.
//!
//! Incremental methods touch one component per iteration, chosen by a
//! [`Schedule`]; full-gradient methods touch all of them. Effective passes
//! are therefore `k/m` for the former and `k` for the latter.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{check_dim, Error, Result};
use crate::oracle::{ProblemInstance, Reference};
use crate::theory::aciag_params;
use crate::tracker::{IagState, RefreshPolicy, Tracker, TrackerKind};

/// Iterates with norm above this abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

// ---------------------------------------------------------------------------
// schedules

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `i_k = (k − 1) mod m`
    Cyclic,
    /// A fresh random permutation every `m` iterations.
    ShuffledEpoch,
    /// Independent uniform draws.
    UniformRandom,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cyclic" => Ok(ScheduleKind::Cyclic),
            "shuffled" | "shuffled-epoch" => Ok(ScheduleKind::ShuffledEpoch),
            "uniform" | "uniform-random" | "random" => Ok(ScheduleKind::UniformRandom),
            other => Err(Error::config(format!("unknown schedule '{other}'"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Cyclic => "cyclic",
            ScheduleKind::ShuffledEpoch => "shuffled-epoch",
            ScheduleKind::UniformRandom => "uniform-random",
        })
    }
}

/// Uniform integer in `0..n` via a widening multiply.
fn bounded(rng: &mut Xoshiro256PlusPlus, n: usize) -> usize {
    ((u128::from(rng.next_u64()) * n as u128) >> 64) as usize
}

/// Component index generator.
#[derive(Debug, Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    m: usize,
    rng: Xoshiro256PlusPlus,
    perm: Vec<usize>,
    pos: usize,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("schedule needs m >= 1"));
        }
        Ok(Schedule {
            kind,
            m,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            perm: (0..m).collect(),
            pos: 0,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Worst-case `k − τ_i`: `m` for cyclic, `2m − 1` for shuffled epochs,
    /// unbounded (`None`) for uniform sampling.
    pub fn staleness_bound(&self) -> Option<usize> {
        match self.kind {
            ScheduleKind::Cyclic => Some(self.m),
            ScheduleKind::ShuffledEpoch => Some(2 * self.m - 1),
            ScheduleKind::UniformRandom => None,
        }
    }

    /// Next 0-based component index.
    pub fn next_index(&mut self) -> usize {
        match self.kind {
            ScheduleKind::Cyclic => {
                let i = self.pos;
                self.pos = (self.pos + 1) % self.m;
                i
            }
            ScheduleKind::ShuffledEpoch => {
                if self.pos == 0 {
                    for j in (1..self.m).rev() {
                        let r = bounded(&mut self.rng, j + 1);
                        self.perm.swap(j, r);
                    }
                }
                let i = self.perm[self.pos];
                self.pos = (self.pos + 1) % self.m;
                i
            }
            ScheduleKind::UniformRandom => bounded(&mut self.rng, self.m),
        }
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Fg,
    Afg,
    Iag,
    Sag,
    Ciag,
    Aciag,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Fg,
        Algorithm::Afg,
        Algorithm::Iag,
        Algorithm::Sag,
        Algorithm::Ciag,
        Algorithm::Aciag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fg => "FG",
            Algorithm::Afg => "AFG",
            Algorithm::Iag => "IAG",
            Algorithm::Sag => "SAG",
            Algorithm::Ciag => "CIAG",
            Algorithm::Aciag => "A-CIAG",
        }
    }

    pub fn is_incremental(self) -> bool {
        !matches!(self, Algorithm::Fg | Algorithm::Afg)
    }

    pub fn uses_momentum(self) -> bool {
        matches!(self, Algorithm::Afg | Algorithm::Aciag)
    }

    /// Components evaluated per iteration, relative to one pass.
    fn iterations_per_pass(self, m: usize) -> usize {
        if self.is_incremental() {
            m
        } else {
            1
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "FG" => Ok(Algorithm::Fg),
            "AFG" => Ok(Algorithm::Afg),
            "IAG" => Ok(Algorithm::Iag),
            "SAG" => Ok(Algorithm::Sag),
            "CIAG" => Ok(Algorithm::Ciag),
            "ACIAG" => Ok(Algorithm::Aciag),
            _ => Err(Error::config(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Stop when `‖∇F‖ ≤ grad_norm_tol` at a record point, or after `max_passes`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub grad_norm_tol: f64,
    pub max_passes: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { grad_norm_tol: 1e-10, max_passes: 100.0 }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    /// Extrapolation for A-CIAG/AFG. `None` derives it from `γ` and `μ` as
    /// `(1 − √(μγ))/(1 + √(μγ))`.
    pub alpha: Option<f64>,
    /// `None` picks cyclic, or uniform sampling for SAG.
    pub schedule: Option<ScheduleKind>,
    pub seed: u64,
    pub stop: StopRule,
    /// Record every `thin` iterations; `None` records once per pass.
    pub thin: Option<usize>,
    pub tracker: TrackerKind,
    pub refresh: RefreshPolicy,
    /// Starting point; zero when `None`.
    pub theta0: Option<DVector<f64>>,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, gamma: f64) -> Self {
        SolverConfig {
            algorithm,
            gamma,
            alpha: None,
            schedule: None,
            seed: 0,
            stop: StopRule::default(),
            thin: None,
            tracker: TrackerKind::default(),
            refresh: RefreshPolicy::default(),
            theta0: None,
        }
    }

    /// Step parameters from `c`: `γ = c/(μ+L)` for CIAG, FG, IAG and SAG;
    /// `γ = c/L` with the matching momentum for A-CIAG and AFG.
    pub fn from_c(algorithm: Algorithm, c: f64, problem: &ProblemInstance) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::config(format!("c must be positive, got {c}")));
        }
        let (mu, l) = (problem.mu(), problem.big_l());
        if algorithm.uses_momentum() {
            let p = aciag_params(c, mu, l)?;
            Ok(SolverConfig::new(algorithm, p.gamma).with_alpha(p.alpha))
        } else {
            Ok(SolverConfig::new(algorithm, c / (mu + l)))
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_schedule(mut self, schedule: ScheduleKind) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_stop(mut self, grad_norm_tol: f64, max_passes: f64) -> Self {
        self.stop = StopRule { grad_norm_tol, max_passes };
        self
    }

    pub fn with_thin(mut self, thin: usize) -> Self {
        self.thin = Some(thin);
        self
    }

    pub fn with_tracker(mut self, tracker: TrackerKind) -> Self {
        self.tracker = tracker;
        self
    }

    pub fn with_refresh(mut self, refresh: RefreshPolicy) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn with_theta0(mut self, theta0: DVector<f64>) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    pub fn schedule_kind(&self) -> ScheduleKind {
        self.schedule.unwrap_or(match self.algorithm {
            Algorithm::Sag => ScheduleKind::UniformRandom,
            _ => ScheduleKind::Cyclic,
        })
    }

    /// Momentum actually used (0 for methods without extrapolation).
    pub fn effective_alpha(&self, mu: f64) -> f64 {
        if !self.algorithm.uses_momentum() {
            return 0.0;
        }
        self.alpha.unwrap_or_else(|| {
            let r = (mu * self.gamma).sqrt();
            ((1.0 - r) / (1.0 + r)).max(0.0)
        })
    }

    pub fn validate(&self, problem: &ProblemInstance) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if let Some(a) = self.alpha {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::config(format!("alpha must lie in [0, 1), got {a}")));
            }
        }
        if self.algorithm == Algorithm::Sag
            && self.schedule.is_some_and(|s| s != ScheduleKind::UniformRandom)
        {
            return Err(Error::config("SAG requires the uniform-random schedule"));
        }
        let StopRule { grad_norm_tol, max_passes } = self.stop;
        if !(grad_norm_tol >= 0.0) {
            return Err(Error::config(format!("tolerance must be >= 0, got {grad_norm_tol}")));
        }
        if !(max_passes >= 0.0) {
            return Err(Error::config(format!("max passes must be >= 0, got {max_passes}")));
        }
        if self.thin == Some(0) {
            return Err(Error::config("record thinning must be at least 1"));
        }
        if let Some(t) = &self.theta0 {
            check_dim(problem.dim(), t.len())?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// steps

/// `θᵏ`, `θᵏ⁻¹` and the extrapolated point `θ̂ᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    theta: DVector<f64>,
    theta_prev: DVector<f64>,
    theta_ex: DVector<f64>,
    k: usize,
}

impl IterateState {
    /// `k = 1`, `θ⁰ = θ̂¹ = θ¹`.
    pub fn new(theta: DVector<f64>) -> Self {
        IterateState { theta_prev: theta.clone(), theta_ex: theta.clone(), theta, k: 1 }
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn theta_prev(&self) -> &DVector<f64> {
        &self.theta_prev
    }

    /// `θᵏ + α(θᵏ − θᵏ⁻¹)` for momentum methods, `θᵏ` otherwise.
    pub fn theta_ex(&self) -> &DVector<f64> {
        &self.theta_ex
    }

    /// Index of the current iterate; starts at 1.
    pub fn k(&self) -> usize {
        self.k
    }

    fn advance(&mut self, next: DVector<f64>, alpha: f64) {
        self.theta_prev = std::mem::replace(&mut self.theta, next);
        self.theta_ex = if alpha == 0.0 {
            self.theta.clone()
        } else {
            &self.theta + (&self.theta - &self.theta_prev) * alpha
        };
        self.k += 1;
    }
}

/// Folds component `i` at `θᵏ` into the tracker, then
/// `θᵏ⁺¹ = θᵏ − γ(b + Hθᵏ)`.
pub fn step_ciag(
    it: &mut IterateState,
    tracker: &mut Tracker,
    problem: &ProblemInstance,
    i: usize,
    gamma: f64,
) -> Result<()> {
    tracker.update(problem, i, &it.theta, it.k)?;
    let mut g = DVector::zeros(it.theta.len());
    tracker.surrogate_into(&it.theta, &mut g);
    let next = &it.theta - g * gamma;
    it.advance(next, 0.0);
    Ok(())
}

/// Folds component `i` at `θ̂ᵏ` into the tracker, then
/// `θᵏ⁺¹ = θ̂ᵏ − γ(b + Hθ̂ᵏ)`.
pub fn step_aciag(
    it: &mut IterateState,
    tracker: &mut Tracker,
    problem: &ProblemInstance,
    i: usize,
    gamma: f64,
    alpha: f64,
) -> Result<()> {
    tracker.update(problem, i, &it.theta_ex, it.k)?;
    let mut g = DVector::zeros(it.theta.len());
    tracker.surrogate_into(&it.theta_ex, &mut g);
    let next = &it.theta_ex - g * gamma;
    it.advance(next, alpha);
    Ok(())
}

/// `θᵏ⁺¹ = θᵏ − γ∇F(θᵏ)`
pub fn step_fg(it: &mut IterateState, problem: &ProblemInstance, gamma: f64) -> Result<()> {
    let g = problem.full_gradient(&it.theta)?;
    let next = &it.theta - g * gamma;
    it.advance(next, 0.0);
    Ok(())
}

/// `θᵏ⁺¹ = θ̂ᵏ − γ∇F(θ̂ᵏ)`
pub fn step_afg(
    it: &mut IterateState,
    problem: &ProblemInstance,
    gamma: f64,
    alpha: f64,
) -> Result<()> {
    let g = problem.full_gradient(&it.theta_ex)?;
    let next = &it.theta_ex - g * gamma;
    it.advance(next, alpha);
    Ok(())
}

/// Replaces component `i`'s stored gradient with `∇f_i(θᵏ)`, then
/// `θᵏ⁺¹ = θᵏ − γ Σ_j ∇f_j(θ_j)`.
pub fn step_iag(
    it: &mut IterateState,
    state: &mut IagState,
    problem: &ProblemInstance,
    i: usize,
    gamma: f64,
) -> Result<()> {
    if i >= problem.m() {
        return Err(Error::invalid(format!("component index {i} out of range")));
    }
    state.iag_update(i, problem.component(i), &it.theta, it.k)?;
    let next = &it.theta - state.iag_surrogate() * gamma;
    it.advance(next, 0.0);
    Ok(())
}

/// SAG shares the IAG update and unnormalized aggregate; only the index
/// distribution differs.
pub fn step_sag(
    it: &mut IterateState,
    state: &mut IagState,
    problem: &ProblemInstance,
    i: usize,
    gamma: f64,
) -> Result<()> {
    step_iag(it, state, problem, i, gamma)
}

// ---------------------------------------------------------------------------
// solver

#[derive(Debug, Clone)]
enum Memory {
    Full,
    Curvature(Tracker),
    FirstOrder(IagState),
}

/// Surrogate error at the point the last step evaluated, with the bound
/// `Σ_i (L_{H,i}/2)‖x − θ_i‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientError {
    pub error: f64,
    pub taylor_bound: f64,
}

/// A stepping driver for one configured method.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    problem: &'a ProblemInstance,
    algorithm: Algorithm,
    gamma: f64,
    alpha: f64,
    iterate: IterateState,
    memory: Memory,
    schedule: Option<Schedule>,
    last_eval: Option<DVector<f64>>,
}

impl<'a> Solver<'a> {
    pub fn new(problem: &'a ProblemInstance, config: &SolverConfig) -> Result<Self> {
        config.validate(problem)?;
        let algorithm = config.algorithm;
        let (d, m) = (problem.dim(), problem.m());
        let memory = match algorithm {
            Algorithm::Fg | Algorithm::Afg => Memory::Full,
            Algorithm::Ciag | Algorithm::Aciag => {
                Memory::Curvature(Tracker::new(problem, config.tracker, config.refresh)?)
            }
            Algorithm::Iag | Algorithm::Sag => Memory::FirstOrder(IagState::new(d, m)?),
        };
        let schedule = if algorithm.is_incremental() {
            Some(Schedule::new(config.schedule_kind(), m, config.seed)?)
        } else {
            None
        };
        let theta0 = config.theta0.clone().unwrap_or_else(|| DVector::zeros(d));
        Ok(Solver {
            problem,
            algorithm,
            gamma: config.gamma,
            alpha: config.effective_alpha(problem.mu()),
            iterate: IterateState::new(theta0),
            memory,
            schedule,
            last_eval: None,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn iterate(&self) -> &IterateState {
        &self.iterate
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.iterate.theta
    }

    /// Iterations performed so far.
    pub fn iterations(&self) -> usize {
        self.iterate.k - 1
    }

    pub fn passes(&self) -> f64 {
        self.iterations() as f64 / self.algorithm.iterations_per_pass(self.problem.m()) as f64
    }

    pub fn tracker(&self) -> Option<&Tracker> {
        match &self.memory {
            Memory::Curvature(t) => Some(t),
            _ => None,
        }
    }

    pub fn iag_state(&self) -> Option<&IagState> {
        match &self.memory {
            Memory::FirstOrder(s) => Some(s),
            _ => None,
        }
    }

    pub fn staleness_bound(&self) -> Option<usize> {
        self.schedule.as_ref().and_then(Schedule::staleness_bound)
    }

    /// `max_i (k − τ_i)` for the last executed iteration `k`.
    pub fn current_staleness(&self) -> Option<usize> {
        let k = self.iterations();
        if k == 0 {
            return None;
        }
        let m = self.problem.m();
        let last = |i| match &self.memory {
            Memory::Curvature(t) => Some(t.last_access(i)),
            Memory::FirstOrder(s) => Some(s.last_access(i)),
            Memory::Full => None,
        };
        (0..m).map(|i| last(i).map(|t| k - t)).max().flatten()
    }

    /// Runs one iteration and returns the component index used, if any.
    pub fn step(&mut self) -> Result<Option<usize>> {
        let (gamma, alpha) = (self.gamma, self.alpha);
        let index = self.schedule.as_mut().map(Schedule::next_index);
        let it = &mut self.iterate;
        match (&mut self.memory, index) {
            (Memory::Full, None) => {
                self.last_eval = Some(it.theta_ex.clone());
                match self.algorithm {
                    Algorithm::Afg => step_afg(it, self.problem, gamma, alpha)?,
                    _ => step_fg(it, self.problem, gamma)?,
                }
            }
            (Memory::Curvature(tracker), Some(i)) => {
                self.last_eval = Some(it.theta_ex.clone());
                match self.algorithm {
                    Algorithm::Aciag => step_aciag(it, tracker, self.problem, i, gamma, alpha)?,
                    _ => step_ciag(it, tracker, self.problem, i, gamma)?,
                }
            }
            (Memory::FirstOrder(state), Some(i)) => {
                self.last_eval = Some(it.theta.clone());
                step_iag(it, state, self.problem, i, gamma)?;
            }
            _ => unreachable!("memory and schedule are built together"),
        }
        let norm = self.iterate.theta.norm();
        if !(norm <= DIVERGENCE_THRESHOLD) {
            return Err(Error::Divergence { iteration: self.iterations(), norm });
        }
        Ok(index)
    }

    /// Surrogate error of the last curvature-aided step. Needs the dense
    /// tracker and every component initialized.
    pub fn gradient_error(&self) -> Option<GradientError> {
        let state = self.tracker()?.dense()?;
        if !state.all_initialized() {
            return None;
        }
        let x = self.last_eval.as_ref()?;
        let g = state.surrogate(x).ok()?;
        let error = (g - self.problem.full_gradient(x).ok()?).norm();
        let taylor_bound = self
            .problem
            .components()
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let a = state.anchor(i).expect("all components initialized");
                0.5 * c.lipschitz_hess() * (x - a).norm_squared()
            })
            .sum();
        Some(GradientError { error, taylor_bound })
    }
}

// ---------------------------------------------------------------------------
// traces

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// Iterations performed.
    pub k: usize,
    pub passes: f64,
    /// `F(θᵏ) − F(θ*)`, when a reference solution was supplied.
    pub gap: Option<f64>,
    pub grad_norm: f64,
    /// Wall-clock time spent stepping, excluding recording.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub alpha: f64,
    pub records: Vec<TraceRecord>,
    pub outcome: Outcome,
    pub final_theta: DVector<f64>,
}

/// Least-squares line through `(x, y)` with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r_squared, n })
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace holds at least the initial record")
    }

    /// First recorded pass count with `‖∇F‖ ≤ tol`.
    pub fn passes_to_tol(&self, tol: f64) -> Option<f64> {
        self.records.iter().find(|r| r.grad_norm <= tol).map(|r| r.passes)
    }

    pub fn seconds_to_tol(&self, tol: f64) -> Option<f64> {
        self.records.iter().find(|r| r.grad_norm <= tol).map(|r| r.elapsed_s)
    }

    /// Fit of `ln gap` against `k` over the second half of the records with a
    /// positive gap.
    pub fn log_gap_tail_fit(&self) -> Option<LinearFit> {
        let pts: Vec<(f64, f64)> = self
            .records
            .iter()
            .filter_map(|r| r.gap.filter(|g| *g > 0.0).map(|g| (r.k as f64, g.ln())))
            .collect();
        let tail = &pts[pts.len() / 2..];
        let (xs, ys): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
        linear_fit(&xs, &ys)
    }
}

/// Runs to the stop rule, recording `‖∇F‖` only.
pub fn run(problem: &ProblemInstance, config: &SolverConfig) -> Result<Trace> {
    run_inner(problem, config, None)
}

/// Runs to the stop rule, also recording the gap against `reference`.
pub fn run_with_reference(
    problem: &ProblemInstance,
    config: &SolverConfig,
    reference: &Reference,
) -> Result<Trace> {
    check_dim(problem.dim(), reference.theta.len())?;
    run_inner(problem, config, Some(reference))
}

fn run_inner(
    problem: &ProblemInstance,
    config: &SolverConfig,
    reference: Option<&Reference>,
) -> Result<Trace> {
    let mut solver = Solver::new(problem, config)?;
    let per_pass = config.algorithm.iterations_per_pass(problem.m());
    let thin = config.thin.unwrap_or(per_pass);
    let budget = config.stop.max_passes * per_pass as f64;
    let max_iters = if budget >= usize::MAX as f64 { usize::MAX } else { budget.floor() as usize };
    let tol = config.stop.grad_norm_tol;

    let mut records = Vec::new();
    let mut elapsed = Duration::ZERO;
    let mut record = |solver: &Solver, elapsed: Duration| -> Result<f64> {
        let theta = solver.theta();
        let grad_norm = problem.full_gradient(theta)?.norm();
        let gap = reference.map(|r| problem.gap(theta, r)).transpose()?;
        records.push(TraceRecord {
            k: solver.iterations(),
            passes: solver.passes(),
            gap,
            grad_norm,
            elapsed_s: elapsed.as_secs_f64(),
        });
        Ok(grad_norm)
    };

    let mut grad_norm = record(&solver, elapsed)?;
    let mut iters = 0;
    while grad_norm > tol && iters < max_iters {
        let start = Instant::now();
        loop {
            solver.step()?;
            iters += 1;
            if iters % thin == 0 || iters == max_iters {
                break;
            }
        }
        elapsed += start.elapsed();
        grad_norm = record(&solver, elapsed)?;
    }

    Ok(Trace {
        algorithm: config.algorithm,
        gamma: solver.gamma(),
        alpha: solver.alpha(),
        records,
        outcome: if grad_norm <= tol { Outcome::Converged } else { Outcome::BudgetExhausted },
        final_theta: solver.theta().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{assemble_problem, make_quadratic_component, ComponentOracle};
    use nalgebra::DMatrix;

    fn quad_problem() -> ProblemInstance {
        let comps: Vec<Box<dyn ComponentOracle>> = vec![
            Box::new(
                make_quadratic_component(
                    DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
                    DVector::from_column_slice(&[1.0, 0.0]),
                )
                .unwrap(),
            ),
            Box::new(
                make_quadratic_component(
                    DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]),
                    DVector::from_column_slice(&[0.0, -2.0]),
                )
                .unwrap(),
            ),
        ];
        assemble_problem(comps).unwrap()
    }

    #[test]
    fn cyclic_and_shuffled_indices() {
        let mut s = Schedule::new(ScheduleKind::Cyclic, 3, 0).unwrap();
        let idx: Vec<_> = (0..7).map(|_| s.next_index()).collect();
        assert_eq!(idx, [0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(s.staleness_bound(), Some(3));

        let mut s = Schedule::new(ScheduleKind::ShuffledEpoch, 5, 9).unwrap();
        for _ in 0..4 {
            let mut epoch: Vec<_> = (0..5).map(|_| s.next_index()).collect();
            epoch.sort_unstable();
            assert_eq!(epoch, [0, 1, 2, 3, 4]);
        }
        assert_eq!(s.staleness_bound(), Some(9));

        let mut s = Schedule::new(ScheduleKind::UniformRandom, 4, 1).unwrap();
        assert!((0..100).all(|_| s.next_index() < 4));
        assert_eq!(s.staleness_bound(), None);
    }

    #[test]
    fn parses_names() {
        assert_eq!("a-ciag".parse::<Algorithm>().unwrap(), Algorithm::Aciag);
        assert_eq!("ACIAG".parse::<Algorithm>().unwrap(), Algorithm::Aciag);
        assert_eq!("sag".parse::<Algorithm>().unwrap(), Algorithm::Sag);
        assert!("newton".parse::<Algorithm>().is_err());
        assert_eq!("shuffled".parse::<ScheduleKind>().unwrap(), ScheduleKind::ShuffledEpoch);
    }

    #[test]
    fn config_validation() {
        let p = quad_problem();
        assert!(SolverConfig::new(Algorithm::Fg, 0.0).validate(&p).is_err());
        assert!(SolverConfig::new(Algorithm::Afg, 0.1).with_alpha(1.0).validate(&p).is_err());
        let sag = SolverConfig::new(Algorithm::Sag, 0.1).with_schedule(ScheduleKind::Cyclic);
        assert!(matches!(Solver::new(&p, &sag), Err(Error::Config(_))));
        assert!(SolverConfig::new(Algorithm::Sag, 0.1).validate(&p).is_ok());
        let bad_theta = SolverConfig::new(Algorithm::Fg, 0.1).with_theta0(DVector::zeros(3));
        assert!(bad_theta.validate(&p).is_err());
    }

    #[test]
    fn fg_converges_on_quadratic() {
        let p = quad_problem();
        let cfg = SolverConfig::new(Algorithm::Fg, 1.0 / p.big_l()).with_stop(1e-10, 1e4);
        let t = run(&p, &cfg).unwrap();
        assert_eq!(t.outcome, Outcome::Converged);
        assert!(t.last().grad_norm <= 1e-10);
        assert_eq!(t.records[0].k, 0);
    }

    #[test]
    fn half_pass_budget_is_partial() {
        let p = quad_problem();
        let cfg = SolverConfig::new(Algorithm::Ciag, 0.1).with_stop(1e-10, 0.5);
        let t = run(&p, &cfg).unwrap();
        assert_eq!(t.outcome, Outcome::BudgetExhausted);
        assert_eq!(t.last().k, 1);
        assert_eq!(t.last().passes, 0.5);
    }

    #[test]
    fn divergence_is_reported() {
        let p = quad_problem();
        let cfg = SolverConfig::new(Algorithm::Fg, 10.0).with_stop(1e-10, 1e4);
        match run(&p, &cfg) {
            Err(Error::Divergence { iteration, norm }) => {
                assert!(iteration > 0);
                assert!(norm > DIVERGENCE_THRESHOLD);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn aciag_first_step_uses_theta() {
        let p = quad_problem();
        let cfg = SolverConfig::new(Algorithm::Aciag, 0.1).with_alpha(0.9);
        let mut s = Solver::new(&p, &cfg).unwrap();
        assert_eq!(s.iterate().theta_ex(), s.theta());
        s.step().unwrap();
        let it = s.iterate();
        let want = it.theta() + (it.theta() - it.theta_prev()) * 0.9;
        assert_eq!(it.theta_ex(), &want);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
