use ciag_core::oracle::{ProblemInstance, Reference};
use ciag_core::optim::{run, Algorithm, SolverConfig};
use ciag_core::theory::aciag_params;
use nalgebra::DVector;

use crate::{BenchError, Result};

/// Largest dimension for which the Newton polish step factors the Hessian.
pub const NEWTON_MAX_DIM: usize = 2000;

/// Hard cap on accelerated full-gradient iterations.
pub const REFERENCE_MAX_ITERS: usize = 2_000_000;

const RECORD_EVERY: usize = 10;

/// High-accuracy minimizer: AFG with `γ = 1/L` down to `‖∇F‖ ≤ tol/10`, then
/// damped Newton when the Hessian is small enough to factor. Fails unless
/// the result has `‖∇F‖ ≤ tol`.
///
/// AFG runs in restarted rounds of about `5√κ` iterations and stops early
/// once a round no longer halves the gradient norm, which happens only at
/// the roundoff floor.
pub fn reference_solution(problem: &ProblemInstance, tol: f64) -> Result<Reference> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(BenchError::config(format!("reference tolerance must be positive, got {tol}")));
    }
    let p = aciag_params(1.0, problem.mu(), problem.big_l())?;
    let round = (5.0 * problem.kappa().sqrt()).ceil() as usize + 10;
    let target = tol / 10.0;

    let mut theta = DVector::zeros(problem.dim());
    let mut best = problem.full_gradient(&theta)?.norm();
    let mut spent = 0;
    while best > target && spent < REFERENCE_MAX_ITERS {
        let cfg = SolverConfig::new(Algorithm::Afg, p.gamma)
            .with_alpha(p.alpha)
            .with_stop(target, round as f64)
            .with_thin(RECORD_EVERY)
            .with_theta0(theta.clone());
        let trace = run(problem, &cfg)?;
        spent += round;
        let g = trace.last().grad_norm;
        if g < best {
            theta = trace.final_theta;
        }
        if !(g < 0.5 * best) {
            break;
        }
        best = g;
    }

    if problem.dim() <= NEWTON_MAX_DIM {
        theta = newton_polish(problem, theta)?;
    }

    let reference = problem.reference_at(theta)?;
    let grad_norm = reference.grad.norm();
    if !(grad_norm <= tol) {
        return Err(BenchError::ReferenceFailure { grad_norm, tol });
    }
    Ok(reference)
}

/// Newton steps, halved until the gradient norm drops; stops at the first
/// step that cannot improve it.
fn newton_polish(problem: &ProblemInstance, mut theta: DVector<f64>) -> Result<DVector<f64>> {
    let mut g = problem.full_gradient(&theta)?;
    for _ in 0..5 {
        let Some(chol) = problem.hessian(&theta)?.cholesky() else {
            break;
        };
        let dir = chol.solve(&g);
        let mut t = 1.0;
        let mut improved = false;
        while t >= 1.0 / 1024.0 {
            let cand = &theta - &dir * t;
            let gc = problem.full_gradient(&cand)?;
            if gc.norm() < g.norm() {
                theta = cand;
                g = gc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved || g.norm() == 0.0 {
            break;
        }
    }
    Ok(theta)
}
