#![allow(dead_code)]

use ciag_core::oracle::{
    assemble_problem, make_logistic_component, make_quadratic_component, ComponentOracle,
    LogisticComponent, ProblemInstance, Reference,
};
use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Uniform in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((u128::from(self.0.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn vector(&mut self, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.range(-scale, scale))
    }

    pub fn sign(&mut self) -> f64 {
        if self.unit() < 0.5 {
            -1.0
        } else {
            1.0
        }
    }
}

pub fn logistic_components(m: usize, d: usize, scale: f64, seed: u64) -> Vec<LogisticComponent> {
    let mut rng = Rng::new(seed);
    (0..m)
        .map(|_| {
            let x = rng.vector(d, scale);
            let y = rng.sign();
            make_logistic_component(&x, y, m).unwrap()
        })
        .collect()
}

pub fn logistic_problem(m: usize, d: usize, scale: f64, seed: u64) -> ProblemInstance {
    let comps = logistic_components(m, d, scale, seed)
        .into_iter()
        .map(|c| Box::new(c) as Box<dyn ComponentOracle>)
        .collect();
    assemble_problem(comps).unwrap()
}

/// `A_i = B Bᵀ/d + shift·I` with random `B`, random `b_i`.
pub fn quadratic_problem(m: usize, d: usize, shift: f64, seed: u64) -> ProblemInstance {
    let mut rng = Rng::new(seed);
    let comps = (0..m)
        .map(|_| {
            let b = DMatrix::from_fn(d, d, |_, _| rng.range(-1.0, 1.0));
            let a = &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * shift;
            let lin = rng.vector(d, 1.0);
            Box::new(make_quadratic_component(a, lin).unwrap()) as Box<dyn ComponentOracle>
        })
        .collect();
    assemble_problem(comps).unwrap()
}

/// Damped Newton to a tight gradient norm.
pub fn newton_reference(problem: &ProblemInstance) -> Reference {
    let mut theta = DVector::zeros(problem.dim());
    for _ in 0..100 {
        let g = problem.full_gradient(&theta).unwrap();
        if g.norm() <= 1e-13 * (1.0 + problem.big_l()) {
            break;
        }
        let h = problem.hessian(&theta).unwrap();
        let step = h.cholesky().unwrap().solve(&g);
        let f0 = problem.value(&theta).unwrap();
        let mut t = 1.0;
        loop {
            let cand = &theta - &step * t;
            if problem.value(&cand).unwrap() <= f0 - 1e-4 * t * g.dot(&step) || t < 1e-8 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    problem.reference_at(theta).unwrap()
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + a.norm().max(b.norm()))
}
