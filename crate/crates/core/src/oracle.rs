//! Component-function oracles and the finite-sum problem they assemble into.
//!
//! A [`ProblemInstance`] is `F(θ) = Σ_i f_i(θ)` over `m` components that each
//! implement [`ComponentOracle`]. Two families are provided:
//!
//! * [`LogisticComponent`]: one or more data tuples with the ridge-regularized
//!   logistic loss `Σ_t (ρ/2)‖θ‖² + log(1 + exp(−y_t⟨θ, x_t⟩))`. This family
//!   also exposes [`LinearModel`] structure so the tracker can store a single
//!   inner product per tuple instead of a full anchor vector.
//! * [`QuadraticComponent`]: `½θᵀAθ + bᵀθ` with a constant Hessian.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::sparse::SparseVec;

/// Hessian-Lipschitz factor of the logistic link: max |σ''| = 1/(6√3).
const MAX_SIGMOID_SECOND_DERIV: f64 = 0.096_225_044_864_937_63;

/// A single summand `f_i` of the finite-sum objective.
///
/// Oracles are immutable after construction and may be evaluated concurrently.
pub trait ComponentOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, theta: &DVector<f64>) -> f64;

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64>;

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    fn hess_vec(&self, theta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// `L_i`: Lipschitz constant of the gradient.
    fn lipschitz_grad(&self) -> f64;

    /// `L_{H,i}`: Lipschitz constant of the Hessian in the spectral norm.
    fn lipschitz_hess(&self) -> f64;

    /// A lower bound on the strong-convexity modulus of this component.
    fn strong_convexity(&self) -> f64;

    /// The Hessian, when it does not depend on `θ`.
    fn constant_hessian(&self) -> Option<&DMatrix<f64>> {
        None
    }

    fn as_linear_model(&self) -> Option<&dyn LinearModel> {
        None
    }

    /// Bregman divergence `f(θ) − f(θ') − ⟨∇f(θ'), θ − θ'⟩`.
    ///
    /// Families override this with a cancellation-free form so optimality gaps
    /// remain resolvable far below `ε·|F(θ*)|`.
    fn bregman(&self, theta: &DVector<f64>, reference: &DVector<f64>) -> f64 {
        let g = self.grad(reference);
        self.eval(theta) - self.eval(reference) - g.dot(&(theta - reference))
    }

    /// `out += weight · ∇f(θ)`
    fn accumulate_grad(&self, theta: &DVector<f64>, weight: f64, out: &mut DVector<f64>) {
        *out += self.grad(theta) * weight;
    }

    /// `out += weight · ∇²f(θ)`
    fn accumulate_hess(&self, theta: &DVector<f64>, weight: f64, out: &mut DMatrix<f64>) {
        *out += self.hess(theta) * weight;
    }
}

/// Components of the form `f(θ) = Σ_t g_t(⟨θ, x_t⟩) + (ρ/2)‖θ‖²`.
pub trait LinearModel {
    fn num_terms(&self) -> usize;

    fn feature(&self, t: usize) -> &SparseVec;

    /// `(g_t'(z), g_t''(z))`
    fn link_derivs(&self, t: usize, z: f64) -> (f64, f64);

    /// Total ridge weight `ρ` of the component.
    fn ridge(&self) -> f64;
}

// ---------------------------------------------------------------------------
// scalar numerics

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))`
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// `softplus(u + s) − softplus(u) − σ(u)·s`, accurate to a few ulps of the
/// result even when `s` is tiny.
pub fn softplus_bregman(u: f64, s: f64) -> f64 {
    // softplus(v) = v + softplus(−v) makes the divergence symmetric under (u,s) -> (−u,−s);
    // work on the side where σ(u) <= 1/2.
    let (u, s) = if u > 0.0 { (-u, -s) } else { (u, s) };
    let sig = sigmoid(u);
    if s.abs() < 1e-3 {
        let v = sig * (1.0 - sig);
        let d3 = v * (1.0 - 2.0 * sig);
        let d4 = v * (1.0 - 6.0 * sig + 6.0 * sig * sig);
        let d5 = d3 * (1.0 - 12.0 * sig + 12.0 * sig * sig);
        let s2 = s * s;
        s2 * (v / 2.0 + s * (d3 / 6.0 + s * (d4 / 24.0 + s * d5 / 120.0)))
    } else if s < 30.0 {
        (sig * s.exp_m1()).ln_1p() - sig * s
    } else {
        softplus(u + s) - softplus(u) - sig * s
    }
}

// ---------------------------------------------------------------------------
// logistic family

/// Ridge-regularized logistic loss over one or more `(x_t, y_t)` tuples.
///
/// Each tuple carries its own ridge term `(ρ_t/2)‖θ‖²`, so a mini-batch of `B`
/// tuples drawn from `m` total has `ρ = B/m` and the full problem `ρ = 1`.
#[derive(Debug, Clone)]
pub struct LogisticComponent {
    dim: usize,
    features: Vec<SparseVec>,
    labels: Vec<f64>,
    ridge_per_term: f64,
    lip_grad: f64,
    lip_hess: f64,
}

impl LogisticComponent {
    /// Builds a component from sparse tuples. `ridge_per_term` is usually `1/m_total`.
    pub fn new(
        dim: usize,
        features: Vec<SparseVec>,
        labels: Vec<f64>,
        ridge_per_term: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::invalid("logistic component needs at least one tuple"));
        }
        if !(ridge_per_term.is_finite() && ridge_per_term >= 0.0) {
            return Err(Error::invalid("ridge weight must be finite and non-negative"));
        }
        for (x, &y) in features.iter().zip(&labels) {
            if y != 1.0 && y != -1.0 {
                return Err(Error::invalid(format!("label {y} is not ±1")));
            }
            if x.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite feature value"));
            }
            if x.min_dim() > dim {
                return Err(Error::invalid(format!(
                    "feature index {} exceeds dimension {dim}",
                    x.min_dim()
                )));
            }
        }

        let mut lip_grad = 0.0;
        let mut lip_hess = 0.0;
        for x in &features {
            let nsq = x.norm_sq();
            lip_grad += nsq / 4.0 + ridge_per_term;
            lip_hess += (nsq / 4.0).max(nsq * nsq.sqrt() * MAX_SIGMOID_SECOND_DERIV);
        }

        Ok(LogisticComponent {
            dim,
            features,
            labels,
            ridge_per_term,
            lip_grad,
            lip_hess,
        })
    }

    pub fn num_tuples(&self) -> usize {
        self.features.len()
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    fn total_ridge(&self) -> f64 {
        self.ridge_per_term * self.features.len() as f64
    }
}

/// `f(θ) = (1/2m)‖θ‖² + log(1 + exp(−y⟨θ, x⟩))` for one data tuple.
pub fn make_logistic_component(x: &DVector<f64>, y: f64, m: usize) -> Result<LogisticComponent> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    if x.iter().any(|v| !v.is_finite()) || !y.is_finite() {
        return Err(Error::invalid("non-finite input to logistic component"));
    }
    LogisticComponent::new(x.len(), vec![SparseVec::from_dense(x)], vec![y], 1.0 / m as f64)
}

impl ComponentOracle for LogisticComponent {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &DVector<f64>) -> f64 {
        let loss: f64 = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(x, &y)| softplus(-y * x.dot(theta)))
            .sum();
        0.5 * self.total_ridge() * theta.norm_squared() + loss
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        self.accumulate_grad(theta, 1.0, &mut g);
        g
    }

    fn hess(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::from_diagonal_element(self.dim, self.dim, self.total_ridge());
        for x in &self.features {
            let s = sigmoid(x.dot(theta));
            x.rank_one_into(s * (1.0 - s), &mut h);
        }
        h
    }

    fn hess_vec(&self, theta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v * self.total_ridge();
        for x in &self.features {
            let s = sigmoid(x.dot(theta));
            x.axpy_into(s * (1.0 - s) * x.dot(v), &mut out);
        }
        out
    }

    fn lipschitz_grad(&self) -> f64 {
        self.lip_grad
    }

    fn lipschitz_hess(&self) -> f64 {
        self.lip_hess
    }

    fn strong_convexity(&self) -> f64 {
        self.total_ridge()
    }

    fn as_linear_model(&self) -> Option<&dyn LinearModel> {
        Some(self)
    }

    fn bregman(&self, theta: &DVector<f64>, reference: &DVector<f64>) -> f64 {
        let delta = theta - reference;
        let loss: f64 = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(x, &y)| softplus_bregman(-y * x.dot(reference), -y * x.dot(&delta)))
            .sum();
        loss + 0.5 * self.total_ridge() * delta.norm_squared()
    }

    fn accumulate_grad(&self, theta: &DVector<f64>, weight: f64, out: &mut DVector<f64>) {
        out.axpy(weight * self.total_ridge(), theta, 1.0);
        for (x, &y) in self.features.iter().zip(&self.labels) {
            x.axpy_into(-weight * y * sigmoid(-y * x.dot(theta)), out);
        }
    }

    fn accumulate_hess(&self, theta: &DVector<f64>, weight: f64, out: &mut DMatrix<f64>) {
        let r = weight * self.total_ridge();
        for i in 0..self.dim {
            out[(i, i)] += r;
        }
        for x in &self.features {
            let s = sigmoid(x.dot(theta));
            x.rank_one_into(weight * s * (1.0 - s), out);
        }
    }
}

impl LinearModel for LogisticComponent {
    fn num_terms(&self) -> usize {
        self.features.len()
    }

    fn feature(&self, t: usize) -> &SparseVec {
        &self.features[t]
    }

    fn link_derivs(&self, t: usize, z: f64) -> (f64, f64) {
        let y = self.labels[t];
        let s = sigmoid(z);
        // g(z) = log(1 + exp(−yz)): g' = −y σ(−yz), g'' = σ(z)(1 − σ(z))
        (-y * sigmoid(-y * z), s * (1.0 - s))
    }

    fn ridge(&self) -> f64 {
        self.total_ridge()
    }
}

// ---------------------------------------------------------------------------
// quadratic family

/// `f(θ) = ½θᵀAθ + bᵀθ` with `A` symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticComponent {
    a: DMatrix<f64>,
    b: DVector<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

/// Validates `A` (square, symmetric, PSD) and builds the component.
pub fn make_quadratic_component(a: DMatrix<f64>, b: DVector<f64>) -> Result<QuadraticComponent> {
    let d = a.nrows();
    if d == 0 || a.ncols() != d {
        return Err(Error::invalid(format!(
            "A must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_dim(d, b.len())?;
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite entry in quadratic component"));
    }
    let scale = a.amax().max(1.0);
    let asym = (&a - a.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::invalid(format!("A is not symmetric (max |A - Aᵀ| = {asym:e})")));
    }
    // store the exactly-symmetric part so every Hessian the tracker sees is symmetric bit-for-bit
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let lambda_min = eig.min();
    let lambda_max = eig.max();
    if lambda_min < -1e-10 * scale {
        return Err(Error::invalid(format!(
            "A is not positive semidefinite (λ_min = {lambda_min:e})"
        )));
    }
    Ok(QuadraticComponent {
        a,
        b,
        lambda_min: lambda_min.max(0.0),
        lambda_max: lambda_max.max(0.0),
    })
}

impl QuadraticComponent {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn linear_term(&self) -> &DVector<f64> {
        &self.b
    }
}

impl ComponentOracle for QuadraticComponent {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&self, theta: &DVector<f64>) -> f64 {
        0.5 * theta.dot(&(&self.a * theta)) + self.b.dot(theta)
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.a * theta + &self.b
    }

    fn hess(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn hess_vec(&self, _theta: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * v
    }

    fn accumulate_grad(&self, theta: &DVector<f64>, weight: f64, out: &mut DVector<f64>) {
        out.gemv(weight, &self.a, theta, 1.0);
        out.axpy(weight, &self.b, 1.0);
    }

    fn lipschitz_grad(&self) -> f64 {
        self.lambda_max
    }

    fn lipschitz_hess(&self) -> f64 {
        0.0
    }

    fn strong_convexity(&self) -> f64 {
        self.lambda_min
    }

    fn constant_hessian(&self) -> Option<&DMatrix<f64>> {
        Some(&self.a)
    }

    fn bregman(&self, theta: &DVector<f64>, reference: &DVector<f64>) -> f64 {
        let delta = theta - reference;
        0.5 * delta.dot(&(&self.a * &delta))
    }

    fn accumulate_hess(&self, _theta: &DVector<f64>, weight: f64, out: &mut DMatrix<f64>) {
        out.zip_apply(&self.a, |o, a| *o += weight * a);
    }
}

// ---------------------------------------------------------------------------
// problem instance

/// `F(θ) = Σ_i f_i(θ)` together with its smoothness and convexity constants.
#[derive(Debug)]
pub struct ProblemInstance {
    components: Vec<Box<dyn ComponentOracle>>,
    dim: usize,
    mu: f64,
    big_l: f64,
    big_lh: f64,
}

/// A minimizer `θ*` and `∇F(θ*)`, used to report optimality gaps.
#[derive(Debug, Clone)]
pub struct Reference {
    pub theta: DVector<f64>,
    pub grad: DVector<f64>,
    pub value: f64,
}

/// Collects components into a problem and derives `(μ, L, L_H)`.
///
/// When every component has a constant Hessian, `μ` and `L` are the extreme
/// eigenvalues of `Σ A_i`. Otherwise `μ = Σ μ_i` and `L = Σ L_i`; for the
/// logistic family this gives `μ = 1` and `L = 1 + ¼Σ‖x_i‖²`.
pub fn assemble_problem(components: Vec<Box<dyn ComponentOracle>>) -> Result<ProblemInstance> {
    let first = components
        .first()
        .ok_or_else(|| Error::invalid("a problem needs at least one component"))?;
    let dim = first.dim();
    for (i, c) in components.iter().enumerate() {
        if c.dim() != dim {
            return Err(Error::invalid(format!(
                "component {} has dimension {}, expected {dim}",
                i + 1,
                c.dim()
            )));
        }
    }

    let hessians: Option<Vec<&DMatrix<f64>>> =
        components.iter().map(|c| c.constant_hessian()).collect();
    let (mu, big_l) = match hessians {
        Some(hs) => {
            let mut sum = DMatrix::zeros(dim, dim);
            for h in hs {
                sum += h;
            }
            let eig = SymmetricEigen::new(sum).eigenvalues;
            (eig.min(), eig.max())
        }
        None => (
            components.iter().map(|c| c.strong_convexity()).sum(),
            components.iter().map(|c| c.lipschitz_grad()).sum(),
        ),
    };
    if !(mu > 0.0) {
        return Err(Error::invalid(format!(
            "objective is not strongly convex (μ = {mu:e})"
        )));
    }
    let big_lh = components.iter().map(|c| c.lipschitz_hess()).sum();

    Ok(ProblemInstance {
        components,
        dim,
        mu,
        big_l: big_l.max(mu),
        big_lh,
    })
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of components `m`.
    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn big_l(&self) -> f64 {
        self.big_l
    }

    pub fn big_lh(&self) -> f64 {
        self.big_lh
    }

    pub fn kappa(&self) -> f64 {
        self.big_l / self.mu
    }

    pub fn components(&self) -> &[Box<dyn ComponentOracle>] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &dyn ComponentOracle {
        self.components[i].as_ref()
    }

    /// True when every component exposes [`LinearModel`] structure.
    pub fn is_linear_model(&self) -> bool {
        self.components.iter().all(|c| c.as_linear_model().is_some())
    }

    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        Ok(self.components.iter().map(|c| c.eval(theta)).sum())
    }

    /// `∇F(θ) = Σ_i ∇f_i(θ)`
    pub fn full_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim, theta.len())?;
        Ok(self.full_gradient_unchecked(theta))
    }

    pub(crate) fn full_gradient_unchecked(&self, theta: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for c in &self.components {
            c.accumulate_grad(theta, 1.0, &mut g);
        }
        g
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim, theta.len())?;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            c.accumulate_hess(theta, 1.0, &mut h);
        }
        Ok(h)
    }

    /// `F(θ) − F(θ*)`, summed from per-component Bregman divergences plus the
    /// residual first-order term `⟨∇F(θ*), θ − θ*⟩`.
    pub fn gap(&self, theta: &DVector<f64>, reference: &Reference) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        let breg: f64 = self
            .components
            .iter()
            .map(|c| c.bregman(theta, &reference.theta))
            .sum();
        Ok(breg + reference.grad.dot(&(theta - &reference.theta)))
    }

    /// Builds a [`Reference`] from a candidate minimizer.
    pub fn reference_at(&self, theta: DVector<f64>) -> Result<Reference> {
        let grad = self.full_gradient(&theta)?;
        let value = self.value(&theta)?;
        Ok(Reference { theta, grad, value })
    }
}
