//! Curvature-aided gradient tracking.
//!
//! The aggregate state keeps
//!
//! ```text
//! b = Σ_i [∇f_i(θ_i) − ∇²f_i(θ_i) θ_i]      H = Σ_i ∇²f_i(θ_i)
//! ```
//!
//! over the components that have been visited, where `θ_i` is the anchor at
//! which component `i` was last evaluated. The surrogate `b + Hθ` is the sum
//! of first-order Taylor expansions of every `∇f_i` around its anchor.
//!
//! [`AggregateState`] stores full anchors and works for any oracle.
//! [`LinearAggregateState`] only stores the inner products `⟨θ_i, x_t⟩` of
//! linear-model components, which brings anchor storage down from `O(md)`
//! to one scalar per data tuple. [`IagState`] is the first-order counterpart
//! that aggregates stale gradients only.
//!
//! Long add/subtract chains drift in floating point; every state supports a
//! batch `refresh`, and [`Tracker`] triggers it on a [`RefreshPolicy`].

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::oracle::{ComponentOracle, ProblemInstance};

/// When to rebuild the aggregate sums from stored anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefreshPolicy {
    Never,
    /// Rebuild after this many updates.
    Every(usize),
    /// Rebuild every `50·m` updates.
    #[default]
    Default,
}

impl RefreshPolicy {
    fn interval(self, m: usize) -> Option<usize> {
        match self {
            RefreshPolicy::Never => None,
            RefreshPolicy::Every(n) => Some(n.max(1)),
            RefreshPolicy::Default => Some(50 * m),
        }
    }
}

fn check_index(i: usize, m: usize) -> Result<()> {
    if i < m {
        Ok(())
    } else {
        Err(Error::invalid(format!("component index {i} out of range for m = {m}")))
    }
}

/// `∇f(a) − ∇²f(a)·a`
fn linear_term(oracle: &dyn ComponentOracle, anchor: &DVector<f64>) -> DVector<f64> {
    oracle.grad(anchor) - oracle.hess_vec(anchor, anchor)
}

// ---------------------------------------------------------------------------
// dense path

/// Aggregate `(b, H)` with full anchor vectors.
#[derive(Debug, Clone)]
pub struct AggregateState {
    b: DVector<f64>,
    h: DMatrix<f64>,
    anchors: Vec<Option<DVector<f64>>>,
    last_access: Vec<usize>,
    scratch: DMatrix<f64>,
}

/// All-zero `(b, H)`, no component initialized, `τ_i = 0`.
pub fn init_state(d: usize, m: usize) -> Result<AggregateState> {
    if d == 0 || m == 0 {
        return Err(Error::invalid(format!("need d >= 1 and m >= 1, got d = {d}, m = {m}")));
    }
    Ok(AggregateState {
        b: DVector::zeros(d),
        h: DMatrix::zeros(d, d),
        anchors: vec![None; m],
        last_access: vec![0; m],
        scratch: DMatrix::zeros(d, d),
    })
}

impl AggregateState {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn m(&self) -> usize {
        self.anchors.len()
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn anchor(&self, i: usize) -> Option<&DVector<f64>> {
        self.anchors[i].as_ref()
    }

    pub fn is_initialized(&self, i: usize) -> bool {
        self.anchors[i].is_some()
    }

    pub fn all_initialized(&self) -> bool {
        self.anchors.iter().all(Option::is_some)
    }

    /// `τ_i`: iteration at which component `i` was last folded in (0 if never).
    pub fn last_access(&self, i: usize) -> usize {
        self.last_access[i]
    }

    /// First visit of component `i`: `b += ∇f_i(a) − ∇²f_i(a)a`, `H += ∇²f_i(a)`.
    pub fn self_init_update(
        &mut self,
        i: usize,
        oracle: &dyn ComponentOracle,
        anchor: &DVector<f64>,
        k: usize,
    ) -> Result<()> {
        check_index(i, self.m())?;
        check_dim(self.dim(), anchor.len())?;
        check_dim(self.dim(), oracle.dim())?;
        if self.anchors[i].is_some() {
            return Err(Error::ContractViolation(format!(
                "component {i} is already initialized"
            )));
        }
        self.b += linear_term(oracle, anchor);
        oracle.accumulate_hess(anchor, 1.0, &mut self.h);
        self.anchors[i] = Some(anchor.clone());
        self.last_access[i] = k;
        Ok(())
    }

    /// Replace the anchor of an initialized component, swapping its old
    /// contribution to `(b, H)` for the new one.
    pub fn incremental_update(
        &mut self,
        i: usize,
        oracle: &dyn ComponentOracle,
        new_anchor: &DVector<f64>,
        k: usize,
    ) -> Result<()> {
        check_index(i, self.m())?;
        check_dim(self.dim(), new_anchor.len())?;
        check_dim(self.dim(), oracle.dim())?;
        let old = self.anchors[i].take().ok_or_else(|| {
            Error::ContractViolation(format!("component {i} has not been initialized"))
        })?;
        if old == *new_anchor {
            self.anchors[i] = Some(old);
            self.last_access[i] = k;
            return Ok(());
        }

        let db = linear_term(oracle, new_anchor) - linear_term(oracle, &old);
        self.scratch.fill(0.0);
        oracle.accumulate_hess(new_anchor, 1.0, &mut self.scratch);
        oracle.accumulate_hess(&old, -1.0, &mut self.scratch);
        self.b += db;
        self.h += &self.scratch;

        self.anchors[i] = Some(new_anchor.clone());
        self.last_access[i] = k;
        Ok(())
    }

    /// Self-initializes or updates component `i`, whichever applies.
    pub fn update(
        &mut self,
        i: usize,
        oracle: &dyn ComponentOracle,
        anchor: &DVector<f64>,
        k: usize,
    ) -> Result<()> {
        if self.is_initialized(i) {
            self.incremental_update(i, oracle, anchor, k)
        } else {
            self.self_init_update(i, oracle, anchor, k)
        }
    }

    /// `b + Hθ`; sums run over initialized components only.
    pub fn surrogate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), theta.len())?;
        let mut out = DVector::zeros(self.dim());
        self.surrogate_into(theta, &mut out);
        Ok(out)
    }

    pub fn surrogate_into(&self, theta: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.b);
        out.gemv(1.0, &self.h, theta, 1.0);
    }

    /// Rebuilds `(b, H)` from the stored anchors.
    pub fn refresh(&mut self, components: &[Box<dyn ComponentOracle>]) -> Result<()> {
        check_dim(self.m(), components.len())?;
        self.b.fill(0.0);
        self.h.fill(0.0);
        for (anchor, oracle) in self.anchors.iter().zip(components) {
            if let Some(a) = anchor {
                self.b += linear_term(oracle.as_ref(), a);
                oracle.accumulate_hess(a, 1.0, &mut self.h);
            }
        }
        Ok(())
    }

    /// Scalars held for anchors (`d` per initialized component).
    pub fn anchor_storage_scalars(&self) -> usize {
        self.anchors.iter().flatten().map(|a| a.len()).sum()
    }
}

// ---------------------------------------------------------------------------
// linear-model path

/// Aggregate `(b, H)` for linear-model components, storing one inner product
/// per data tuple in place of each anchor.
///
/// For `f_i(θ) = Σ_t g_t(⟨θ, x_t⟩) + (ρ/2)‖θ‖²` the ridge cancels out of `b`
/// and contributes a constant `ρI` to `H`, so with `z = ⟨θ_i, x_t⟩`:
///
/// ```text
/// b_i = Σ_t (g_t'(z) − g_t''(z) z) x_t      H_i = Σ_t g_t''(z) x_t x_tᵀ + ρI
/// ```
#[derive(Debug, Clone)]
pub struct LinearAggregateState {
    b: DVector<f64>,
    h: DMatrix<f64>,
    margins: Vec<Option<Vec<f64>>>,
    last_access: Vec<usize>,
}

impl LinearAggregateState {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid(format!("need d >= 1 and m >= 1, got d = {d}, m = {m}")));
        }
        Ok(LinearAggregateState {
            b: DVector::zeros(d),
            h: DMatrix::zeros(d, d),
            margins: vec![None; m],
            last_access: vec![0; m],
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn m(&self) -> usize {
        self.margins.len()
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn is_initialized(&self, i: usize) -> bool {
        self.margins[i].is_some()
    }

    pub fn last_access(&self, i: usize) -> usize {
        self.last_access[i]
    }

    /// Stored inner products `⟨θ_i, x_t⟩` of component `i`.
    pub fn margins(&self, i: usize) -> Option<&[f64]> {
        self.margins[i].as_deref()
    }

    /// Moves component `i` to `new_anchor` (self-initializing on first visit).
    pub fn linear_update(
        &mut self,
        i: usize,
        oracle: &dyn ComponentOracle,
        new_anchor: &DVector<f64>,
        k: usize,
    ) -> Result<()> {
        check_index(i, self.m())?;
        check_dim(self.dim(), new_anchor.len())?;
        check_dim(self.dim(), oracle.dim())?;
        let model = oracle.as_linear_model().ok_or_else(|| {
            Error::UnsupportedStructure(format!("component {i} is not a linear model"))
        })?;

        let z_new: Vec<f64> = (0..model.num_terms())
            .map(|t| model.feature(t).dot(new_anchor))
            .collect();
        match self.margins[i].as_ref() {
            None => {
                for (t, &z) in z_new.iter().enumerate() {
                    let x = model.feature(t);
                    let (g1, g2) = model.link_derivs(t, z);
                    x.axpy_into(g1 - g2 * z, &mut self.b);
                    x.rank_one_into(g2, &mut self.h);
                }
                let rho = model.ridge();
                for j in 0..self.dim() {
                    self.h[(j, j)] += rho;
                }
            }
            Some(z_old) => {
                if z_old.len() != z_new.len() {
                    return Err(Error::ContractViolation(format!(
                        "component {i} changed its number of terms"
                    )));
                }
                for (t, (&zn, &zo)) in z_new.iter().zip(z_old).enumerate() {
                    if zn == zo {
                        continue;
                    }
                    let x = model.feature(t);
                    let (g1n, g2n) = model.link_derivs(t, zn);
                    let (g1o, g2o) = model.link_derivs(t, zo);
                    x.axpy_into((g1n - g2n * zn) - (g1o - g2o * zo), &mut self.b);
                    x.rank_one_into(g2n - g2o, &mut self.h);
                }
            }
        }
        self.margins[i] = Some(z_new);
        self.last_access[i] = k;
        Ok(())
    }

    pub fn surrogate(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), theta.len())?;
        let mut out = DVector::zeros(self.dim());
        self.surrogate_into(theta, &mut out);
        Ok(out)
    }

    pub fn surrogate_into(&self, theta: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.b);
        out.gemv(1.0, &self.h, theta, 1.0);
    }

    /// Rebuilds `(b, H)` from the stored inner products.
    pub fn refresh(&mut self, components: &[Box<dyn ComponentOracle>]) -> Result<()> {
        check_dim(self.m(), components.len())?;
        self.b.fill(0.0);
        self.h.fill(0.0);
        for (i, (margins, oracle)) in self.margins.iter().zip(components).enumerate() {
            let Some(zs) = margins else { continue };
            let model = oracle.as_linear_model().ok_or_else(|| {
                Error::UnsupportedStructure(format!("component {i} is not a linear model"))
            })?;
            for (t, &z) in zs.iter().enumerate() {
                let x = model.feature(t);
                let (g1, g2) = model.link_derivs(t, z);
                x.axpy_into(g1 - g2 * z, &mut self.b);
                x.rank_one_into(g2, &mut self.h);
            }
            let rho = model.ridge();
            for j in 0..self.dim() {
                self.h[(j, j)] += rho;
            }
        }
        Ok(())
    }

    /// Scalars held in place of anchors (one per data tuple of each initialized component).
    pub fn anchor_storage_scalars(&self) -> usize {
        self.margins.iter().flatten().map(Vec::len).sum()
    }
}

// ---------------------------------------------------------------------------
// first-order aggregate

/// IAG/SAG memory: `g = Σ_i ∇f_i(θ_i)` over visited components.
#[derive(Debug, Clone)]
pub struct IagState {
    g: DVector<f64>,
    grads: Vec<Option<DVector<f64>>>,
    last_access: Vec<usize>,
}

impl IagState {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid(format!("need d >= 1 and m >= 1, got d = {d}, m = {m}")));
        }
        Ok(IagState {
            g: DVector::zeros(d),
            grads: vec![None; m],
            last_access: vec![0; m],
        })
    }

    pub fn m(&self) -> usize {
        self.grads.len()
    }

    pub fn is_initialized(&self, i: usize) -> bool {
        self.grads[i].is_some()
    }

    pub fn last_access(&self, i: usize) -> usize {
        self.last_access[i]
    }

    pub fn stored_gradient(&self, i: usize) -> Option<&DVector<f64>> {
        self.grads[i].as_ref()
    }

    /// Replaces component `i`'s stored gradient with `∇f_i(point)`.
    pub fn iag_update(
        &mut self,
        i: usize,
        oracle: &dyn ComponentOracle,
        point: &DVector<f64>,
        k: usize,
    ) -> Result<()> {
        check_index(i, self.m())?;
        check_dim(self.g.len(), point.len())?;
        let new = oracle.grad(point);
        match self.grads[i].as_mut() {
            Some(old) => {
                self.g += &new - &*old;
                *old = new;
            }
            None => {
                self.g += &new;
                self.grads[i] = Some(new);
            }
        }
        self.last_access[i] = k;
        Ok(())
    }

    pub fn iag_surrogate(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn refresh(&mut self) {
        self.g.fill(0.0);
        for g in self.grads.iter().flatten() {
            self.g += g;
        }
    }
}

// ---------------------------------------------------------------------------
// driver-facing wrapper

/// Which aggregate-state implementation a curvature-aided solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackerKind {
    /// Linear-model path when every component supports it, dense otherwise.
    #[default]
    Auto,
    Dense,
    LinearModel,
}

/// A curvature-aided aggregate with its refresh schedule.
#[derive(Debug, Clone)]
pub struct Tracker {
    inner: TrackerState,
    refresh_every: Option<usize>,
    since_refresh: usize,
}

#[derive(Debug, Clone)]
enum TrackerState {
    Dense(AggregateState),
    Linear(LinearAggregateState),
}

impl Tracker {
    pub fn new(problem: &ProblemInstance, kind: TrackerKind, refresh: RefreshPolicy) -> Result<Self> {
        let (d, m) = (problem.dim(), problem.m());
        let linear = match kind {
            TrackerKind::Auto => problem.is_linear_model(),
            TrackerKind::Dense => false,
            TrackerKind::LinearModel => {
                if !problem.is_linear_model() {
                    return Err(Error::UnsupportedStructure(
                        "linear-model tracker requested for a problem without linear-model structure"
                            .into(),
                    ));
                }
                true
            }
        };
        let inner = if linear {
            TrackerState::Linear(LinearAggregateState::new(d, m)?)
        } else {
            TrackerState::Dense(init_state(d, m)?)
        };
        Ok(Tracker {
            inner,
            refresh_every: refresh.interval(m),
            since_refresh: 0,
        })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.inner, TrackerState::Linear(_))
    }

    /// The dense state, when that path is in use.
    pub fn dense(&self) -> Option<&AggregateState> {
        match &self.inner {
            TrackerState::Dense(s) => Some(s),
            TrackerState::Linear(_) => None,
        }
    }

    pub fn linear(&self) -> Option<&LinearAggregateState> {
        match &self.inner {
            TrackerState::Linear(s) => Some(s),
            TrackerState::Dense(_) => None,
        }
    }

    pub fn b(&self) -> &DVector<f64> {
        match &self.inner {
            TrackerState::Dense(s) => s.b(),
            TrackerState::Linear(s) => s.b(),
        }
    }

    pub fn h(&self) -> &DMatrix<f64> {
        match &self.inner {
            TrackerState::Dense(s) => s.h(),
            TrackerState::Linear(s) => s.h(),
        }
    }

    pub fn last_access(&self, i: usize) -> usize {
        match &self.inner {
            TrackerState::Dense(s) => s.last_access(i),
            TrackerState::Linear(s) => s.last_access(i),
        }
    }

    /// Folds component `i` at `anchor` into the aggregate at iteration `k`.
    pub fn update(
        &mut self,
        problem: &ProblemInstance,
        i: usize,
        anchor: &DVector<f64>,
        k: usize,
    ) -> Result<()> {
        check_index(i, problem.m())?;
        let oracle = problem.component(i);
        match &mut self.inner {
            TrackerState::Dense(s) => s.update(i, oracle, anchor, k)?,
            TrackerState::Linear(s) => s.linear_update(i, oracle, anchor, k)?,
        }
        self.since_refresh += 1;
        if self.refresh_every.is_some_and(|n| self.since_refresh >= n) {
            self.refresh(problem)?;
        }
        Ok(())
    }

    pub fn refresh(&mut self, problem: &ProblemInstance) -> Result<()> {
        self.since_refresh = 0;
        match &mut self.inner {
            TrackerState::Dense(s) => s.refresh(problem.components()),
            TrackerState::Linear(s) => s.refresh(problem.components()),
        }
    }

    pub fn surrogate_into(&self, theta: &DVector<f64>, out: &mut DVector<f64>) {
        match &self.inner {
            TrackerState::Dense(s) => s.surrogate_into(theta, out),
            TrackerState::Linear(s) => s.surrogate_into(theta, out),
        }
    }

    pub fn anchor_storage_scalars(&self) -> usize {
        match &self.inner {
            TrackerState::Dense(s) => s.anchor_storage_scalars(),
            TrackerState::Linear(s) => s.anchor_storage_scalars(),
        }
    }
}
