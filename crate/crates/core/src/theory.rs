//! Step-size admissibility bounds, parameter maps and rate targets for CIAG
//! and A-CIAG, plus simulators for the delayed nonlinear recursions that
//! drive their convergence proofs.

use crate::error::{Error, Result};
use crate::oracle::ProblemInstance;

/// Problem constants and initial conditions entering the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub mu: f64,
    pub big_l: f64,
    pub big_lh: f64,
    /// Staleness bound `K`.
    pub k: usize,
    /// `‖θ¹ − θ*‖²`
    pub v1: f64,
    /// `F(θ¹) − F(θ*)`
    pub h1: f64,
}

impl RateConstants {
    pub fn new(mu: f64, big_l: f64, big_lh: f64, k: usize, v1: f64, h1: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be positive and finite, got {mu}")));
        }
        if !(big_l >= mu && big_l.is_finite()) {
            return Err(Error::invalid(format!("need L >= mu, got L = {big_l}, mu = {mu}")));
        }
        if !(big_lh >= 0.0 && big_lh.is_finite()) {
            return Err(Error::invalid(format!("L_H must be non-negative, got {big_lh}")));
        }
        if k == 0 {
            return Err(Error::invalid("staleness bound K must be at least 1"));
        }
        for (name, x) in [("V1", v1), ("h1", h1)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {x}")));
            }
        }
        Ok(RateConstants { mu, big_l, big_lh, k, v1, h1 })
    }

    pub fn for_problem(problem: &ProblemInstance, k: usize, v1: f64, h1: f64) -> Result<Self> {
        Self::new(problem.mu(), problem.big_l(), problem.big_lh(), k, v1, h1)
    }
}

/// Largest admissible CIAG step parameter `c` (with `γ = c/(μ+L)`).
///
/// ```text
/// c < min{ 2,
///          (1/K) √( μL(μ+L) / (2L_H (L²V^½ + 4L_H²V^{3/2})) ),
///          ( μL(μ+L)⁴ / (K⁴ · 2L_H² (L⁴V + 16L_H⁴V³)) )^{1/5} }
/// ```
pub fn ciag_admissible_c(rc: &RateConstants) -> f64 {
    let RateConstants { mu, big_l: l, big_lh: lh, v1: v, .. } = *rc;
    if lh == 0.0 || v == 0.0 {
        return 2.0;
    }
    let k = rc.k as f64;
    let num = mu * l * (mu + l);
    let c2 = (num / (2.0 * lh * (l * l * v.sqrt() + 4.0 * lh * lh * v.powf(1.5)))).sqrt() / k;
    let c3 = (num * (mu + l).powi(3)
        / (k.powi(4) * 2.0 * lh * lh * (l.powi(4) * v + 16.0 * lh.powi(4) * v.powi(3))))
    .powf(0.2);
    2.0_f64.min(c2).min(c3)
}

/// The three A-CIAG thresholds and their combined bound `min{c̄₁, c̄₂, c̄₃, ½}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AciagBounds {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_max: f64,
}

/// Largest admissible A-CIAG step parameter `c` (with `γ = c/L`).
///
/// ```text
/// c̄₁ = ( √μ/(√18 K² L_H) · L² / (20L²/μ·(2h)^½ + (40L_H/μ)²(2h)^{3/2}) )^½
/// c̄₂ = ( 2μ/(81 K⁴ L_H²) · L⁴ / ((20L²/μ)²(2h) + (40L_H/μ)⁴(2h)³) )^¼
/// c̄₃ = L / ( √324 K² L_H √h/√μ + 1296 K⁴ L_H² h/μ² + μ )
/// ```
pub fn aciag_admissible_c(rc: &RateConstants) -> AciagBounds {
    let RateConstants { mu, big_l: l, big_lh: lh, h1: h, .. } = *rc;
    let k = rc.k as f64;
    let (c1, c2) = if lh == 0.0 || h == 0.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let a = 20.0 * l * l / mu;
        let b = 40.0 * lh / mu;
        let c1 = (mu.sqrt() / (18f64.sqrt() * k * k * lh) * l * l
            / (a * (2.0 * h).sqrt() + b * b * (2.0 * h).powf(1.5)))
        .sqrt();
        let c2 = (2.0 * mu / (81.0 * k.powi(4) * lh * lh) * l.powi(4)
            / (a * a * (2.0 * h) + b.powi(4) * (2.0 * h).powi(3)))
        .powf(0.25);
        (c1, c2)
    };
    let c3 = l
        / (324f64.sqrt() * k * k * lh * h.sqrt() / mu.sqrt()
            + 1296.0 * k.powi(4) * lh * lh * h / (mu * mu)
            + mu);
    AciagBounds { c1, c2, c3, c_max: c1.min(c2).min(c3).min(0.5) }
}

/// `(γ, α)` for A-CIAG and AFG from the step parameter `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AciagParams {
    pub gamma: f64,
    pub alpha: f64,
    /// Set when `c > ½`, outside the range the convergence guarantee covers.
    pub above_recommended: bool,
}

/// `γ = c/L`, `α = (1 − √(μγ))/(1 + √(μγ))`. When `μγ > 1` the momentum
/// would turn negative; it is clamped to zero.
pub fn aciag_params(c: f64, mu: f64, big_l: f64) -> Result<AciagParams> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("c must be positive and finite, got {c}")));
    }
    if !(mu > 0.0 && big_l >= mu && big_l.is_finite()) {
        return Err(Error::invalid(format!("need 0 < mu <= L, got mu = {mu}, L = {big_l}")));
    }
    let gamma = c / big_l;
    let r = (mu * gamma).sqrt();
    Ok(AciagParams {
        gamma,
        alpha: ((1.0 - r) / (1.0 + r)).max(0.0),
        above_recommended: c > 0.5,
    })
}

/// Asymptotic per-iteration contraction factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTargets {
    /// `1 − 2γμL/(μ+L)`
    pub rho_ciag: f64,
    /// `1 − √(μγ)`
    pub rho_aciag: f64,
}

pub fn rate_targets(rc: &RateConstants, gamma: f64) -> RateTargets {
    let (mu, l) = (rc.mu, rc.big_l);
    RateTargets {
        rho_ciag: 1.0 - 2.0 * gamma * mu * l / (mu + l),
        rho_aciag: 1.0 - (mu * gamma).sqrt(),
    }
}

// ---------------------------------------------------------------------------
// recursions

/// One higher-order term `coef · max_window(x)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionTerm {
    pub coef: f64,
    pub exponent: f64,
}

/// Negative-feedback data of the A-CIAG recursion: a non-decreasing map
/// `f(v) = a1·√v + a2·v`, the threshold `f̄` and the sequence `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeTerm {
    pub a1: f64,
    pub a2: f64,
    pub f_bar: f64,
    /// `D^(1), D^(2), …`; missing entries count as zero.
    pub d: Vec<f64>,
}

impl NegativeTerm {
    pub fn f(&self, v: f64) -> f64 {
        self.a1 * v.sqrt() + self.a2 * v
    }
}

/// Parameters of a delayed recursion
///
/// ```text
/// x⁽ᵏ⁺¹⁾ ≤ p·x⁽ᵏ⁾ + Σ_j coef_j · max_{(k−M+1)₊₊ ≤ q ≤ k} (x⁽q⁾)^{η_j}
/// ```
///
/// where `M` is the window length. The A-CIAG form additionally scales the
/// initial value by `b ≥ 1` and may carry a [`NegativeTerm`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionSpec {
    pub p: f64,
    pub b: f64,
    pub terms: Vec<RecursionTerm>,
    pub window: usize,
    pub initial: f64,
    pub negative: Option<NegativeTerm>,
}

impl RecursionSpec {
    pub fn new(p: f64, terms: Vec<RecursionTerm>, window: usize, initial: f64) -> Result<Self> {
        let spec = RecursionSpec { p, b: 1.0, terms, window, initial, negative: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_b(mut self, b: f64) -> Result<Self> {
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn with_negative(mut self, negative: NegativeTerm) -> Result<Self> {
        self.negative = Some(negative);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::invalid(format!("p must lie in [0, 1), got {}", self.p)));
        }
        if !(self.b >= 1.0 && self.b.is_finite()) {
            return Err(Error::invalid(format!("b must be >= 1, got {}", self.b)));
        }
        if self.window == 0 {
            return Err(Error::invalid("window length M must be at least 1"));
        }
        if !(self.initial >= 0.0 && self.initial.is_finite()) {
            return Err(Error::invalid(format!("initial value must be >= 0, got {}", self.initial)));
        }
        for t in &self.terms {
            if !(t.coef >= 0.0 && t.coef.is_finite()) {
                return Err(Error::invalid(format!("coefficients must be >= 0, got {}", t.coef)));
            }
            if !(t.exponent > 1.0 && t.exponent.is_finite()) {
                return Err(Error::invalid(format!("exponents must be > 1, got {}", t.exponent)));
            }
        }
        if let Some(n) = &self.negative {
            let ok = [n.a1, n.a2, n.f_bar].iter().all(|x| *x >= 0.0 && x.is_finite())
                && n.d.iter().all(|x| *x >= 0.0 && x.is_finite());
            if !ok {
                return Err(Error::invalid("negative-term data must be non-negative and finite"));
            }
        }
        Ok(())
    }

    /// `δ = p + Σ_j coef_j · (b·x¹)^{η_j − 1}`
    pub fn delta(&self) -> f64 {
        let x = self.b * self.initial;
        self.p
            + self
                .terms
                .iter()
                .map(|t| if t.coef == 0.0 { 0.0 } else { t.coef * x.powf(t.exponent - 1.0) })
                .sum::<f64>()
    }
}

/// Outcome of simulating a recursion for `T` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionVerdict {
    /// The contraction precondition (`δ < 1`, plus `f̄ ≥ f(b·x¹)` when a negative term is present).
    pub condition_holds: bool,
    pub delta: f64,
    /// Every simulated value respects `x⁽ᵏ⁺¹⁾ ≤ δ^⌈k/M⌉ · b·x¹`.
    pub envelope_holds: bool,
    /// `x⁽ᵀ⁾ / x⁽ᵀ⁻¹⁾`; `None` for an identically zero sequence or after divergence.
    pub tail_ratio: Option<f64>,
    /// The sequence overflowed `f64`; simulation stopped early.
    pub diverged: bool,
    /// `f(max_k x⁽ᵏ⁾) ≤ f̄`, i.e. the coefficient of `D` stayed non-positive.
    /// `None` unless a negative term with some `D > 0` was supplied.
    pub negative_coef_nonpositive: Option<bool>,
    /// `ln x⁽ᵏ⁾` for `k = 1, 2, …` (`-inf` for zeros).
    pub log_values: Vec<f64>,
}

impl RecursionVerdict {
    /// `x⁽ᵏ⁾` for `k = 1, 2, …`; tiny values may underflow to zero.
    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|l| l.exp()).collect()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `ln(p·x⁽ᵏ⁾ + Σ_j coef_j max_window(x)^{η_j})`, window ending at the last entry.
fn next_log(spec: &RecursionSpec, lx: &[f64], scratch: &mut Vec<f64>) -> f64 {
    let k = lx.len();
    let lo = k.saturating_sub(spec.window);
    let lmax = lx[lo..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scratch.clear();
    scratch.push(spec.p.ln() + lx[k - 1]);
    for t in &spec.terms {
        if t.coef > 0.0 {
            scratch.push(t.coef.ln() + t.exponent * lmax);
        }
    }
    log_sum_exp(scratch)
}

fn check_horizon(spec: &RecursionSpec, t: usize) -> Result<()> {
    spec.validate()?;
    if t < 2 * spec.window {
        return Err(Error::invalid(format!(
            "horizon T = {t} must be at least 2M = {}",
            2 * spec.window
        )));
    }
    Ok(())
}

fn finish(spec: &RecursionSpec, condition_holds: bool, delta: f64, lx: Vec<f64>, diverged: bool) -> RecursionVerdict {
    let ln_base = (spec.b * spec.initial).ln();
    let ln_delta = delta.ln();
    let m = spec.window;
    // entry j holds x^(j+1); the envelope bounds it by δ^⌈j/M⌉ · b·x¹ for j ≥ 1
    let envelope_holds = !diverged
        && lx.iter().enumerate().skip(1).all(|(j, &l)| {
            let bound = j.div_ceil(m) as f64 * ln_delta + ln_base;
            l == f64::NEG_INFINITY || l <= bound + 1e-12 * bound.abs().max(1.0)
        });
    let tail_ratio = match lx.as_slice() {
        [.., a, b] if !diverged && a.is_finite() && b.is_finite() => Some((b - a).exp()),
        _ => None,
    };
    let negative_coef_nonpositive = spec.negative.as_ref().and_then(|n| {
        if n.d.iter().any(|d| *d > 0.0) {
            let lmax = lx.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some(n.f(lmax.exp()) <= n.f_bar)
        } else {
            None
        }
    });
    RecursionVerdict {
        condition_holds,
        delta,
        envelope_holds,
        tail_ratio,
        diverged,
        negative_coef_nonpositive,
        log_values: lx,
    }
}

/// Iterates the CIAG recursion with equality for `T` values `x¹ … xᵀ`,
/// starting from `x¹ = initial` (`b` is ignored).
pub fn simulate_recursion_p5(spec: &RecursionSpec, t: usize) -> Result<RecursionVerdict> {
    check_horizon(spec, t)?;
    let spec = RecursionSpec { b: 1.0, ..spec.clone() };
    let delta = spec.delta();
    let condition_holds = delta < 1.0;
    let mut lx = Vec::with_capacity(t);
    lx.push(spec.initial.ln());
    let mut scratch = Vec::new();
    let mut diverged = false;
    while lx.len() < t {
        let next = next_log(&spec, &lx, &mut scratch);
        if next > f64::MAX.ln() {
            diverged = true;
            break;
        }
        lx.push(next);
    }
    Ok(finish(&spec, condition_holds, delta, lx, diverged))
}

/// Iterates the A-CIAG majorant sequence for `T` values:
///
/// ```text
/// V̄¹ = V¹,  V̄² = p·b·V¹ + Σ_j s_j (V¹)^{η_j},
/// V̄ᵏ⁺¹ = p·V̄ᵏ + Σ_j s_j max_{(k−M+1)₊₊ ≤ q ≤ k} (V̄^q)^{η_j}   (k ≥ 2)
/// ```
///
/// which dominates every non-negative sequence satisfying the recursion with
/// the negative term, provided the condition holds.
pub fn simulate_recursion_p6(spec: &RecursionSpec, t: usize) -> Result<RecursionVerdict> {
    check_horizon(spec, t)?;
    let delta = spec.delta();
    let gate = spec
        .negative
        .as_ref()
        .is_none_or(|n| n.f_bar >= n.f(spec.b * spec.initial));
    let condition_holds = gate && delta < 1.0;

    let mut lx = Vec::with_capacity(t);
    lx.push(spec.initial.ln());
    let mut scratch = Vec::new();
    let first = RecursionSpec { p: spec.p * spec.b, ..spec.clone() };
    lx.push(next_log(&first, &lx, &mut scratch));
    let mut diverged = lx[1] > f64::MAX.ln();
    if diverged {
        lx.pop();
    }
    while !diverged && lx.len() < t {
        let next = next_log(spec, &lx, &mut scratch);
        if next > f64::MAX.ln() {
            diverged = true;
            break;
        }
        lx.push(next);
    }
    Ok(finish(spec, condition_holds, delta, lx, diverged))
}

/// The CIAG recursion obtained with `R⁽ᵏ⁾ = ‖θᵏ − θ*‖²` at step size `γ`:
/// `p = 1 − 2γμL/(μ+L)`, `M = 2K+1`, and four higher-order terms.
pub fn ciag_recursion_spec(rc: &RateConstants, gamma: f64) -> Result<RecursionSpec> {
    let RateConstants { mu, big_l: l, big_lh: lh, .. } = *rc;
    let k = rc.k as f64;
    let g3 = gamma.powi(3);
    let g6 = gamma.powi(6);
    let terms = vec![
        RecursionTerm { coef: 2.0 * g3 * k * k * l * l * lh, exponent: 1.5 },
        RecursionTerm { coef: 8.0 * g3 * k * k * lh.powi(3), exponent: 2.5 },
        RecursionTerm { coef: 2.0 * g6 * k.powi(4) * lh * lh * l.powi(4), exponent: 2.0 },
        RecursionTerm { coef: 32.0 * g6 * k.powi(4) * lh.powi(6), exponent: 4.0 },
    ];
    let p = 1.0 - 2.0 * gamma * mu * l / (mu + l);
    RecursionSpec::new(p, terms, 2 * rc.k + 1, rc.v1)
}

/// The A-CIAG recursion obtained with `x⁽ᵏ⁾ = F(θᵏ) − F(θ*)` at step size `γ`:
/// `p = 1 − √(μγ)`, `b = 2`, `M = 2K+1`, and
/// `f(v) = γ(K²L_H√(9/2)·√v + 162K⁴L_H²/μ^{3/2}·v)`, `f̄ = (√μ/4)(1 − μγ)`.
pub fn aciag_recursion_spec(rc: &RateConstants, gamma: f64, d: Vec<f64>) -> Result<RecursionSpec> {
    let RateConstants { mu, big_l: l, big_lh: lh, .. } = *rc;
    let k = rc.k as f64;
    let a = 20.0 * l * l / mu;
    let b = 40.0 * lh / mu;
    let s_lo = gamma.powf(2.5) * 4.5f64.sqrt() * k * k * lh;
    let s_hi = gamma.powf(4.5) * 81.0 * k.powi(4) * lh * lh / (4.0 * mu.sqrt());
    let terms = vec![
        RecursionTerm { coef: s_lo * a, exponent: 1.5 },
        RecursionTerm { coef: s_lo * b * b, exponent: 2.5 },
        RecursionTerm { coef: s_hi * a * a, exponent: 2.0 },
        RecursionTerm { coef: s_hi * b.powi(4), exponent: 4.0 },
    ];
    let negative = NegativeTerm {
        a1: gamma * k * k * lh * 4.5f64.sqrt(),
        a2: gamma * 162.0 * k.powi(4) * lh * lh / mu.powf(1.5),
        f_bar: mu.sqrt() / 4.0 * (1.0 - mu * gamma),
        d,
    };
    RecursionSpec::new(1.0 - (mu * gamma).sqrt(), terms, 2 * rc.k + 1, rc.h1)?
        .with_b(2.0)?
        .with_negative(negative)
}
