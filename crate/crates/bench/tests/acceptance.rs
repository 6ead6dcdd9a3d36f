//! Acceptance checks. Each criterion prints one PASS/FAIL line with its
//! measured values and wall time; the test fails if any criterion does.

mod common;

use std::time::{Duration, Instant};

use ciag_bench::config::{DataSource, ExperimentConfig};
use ciag_bench::experiment::run_experiment;
use ciag_bench::reference::reference_solution;
use ciag_core::dataio::{logistic_problem, parse_libsvm, synth_generate, write_libsvm, Dataset};
use ciag_core::oracle::{
    assemble_problem, make_logistic_component, make_quadratic_component, ComponentOracle,
    LogisticComponent, ProblemInstance,
};
use ciag_core::optim::{
    linear_fit, step_afg, step_fg, Algorithm, SolverConfig, Solver, TraceRecord,
};
use ciag_core::sparse::SparseVec;
use ciag_core::theory::{
    aciag_admissible_c, ciag_admissible_c, simulate_recursion_p5, simulate_recursion_p6,
    RateConstants, RecursionSpec, RecursionTerm,
};
use ciag_core::tracker::{init_state, LinearAggregateState};
use ciag_core::Error;
use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

struct Rng(Xoshiro256PlusPlus);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn log_range(&mut self, lo: f64, hi: f64) -> f64 {
        self.range(lo.ln(), hi.ln()).exp()
    }

    fn index(&mut self, n: usize) -> usize {
        ((u128::from(self.0.next_u64()) * n as u128) >> 64) as usize
    }

    fn vector(&mut self, d: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(d, |_, _| self.range(-scale, scale))
    }
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn rel_m(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn rel_s(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn criterion(n: usize, name: &str, limit: Duration, check: impl FnOnce() -> (bool, String)) -> bool {
    let start = Instant::now();
    let (ok, detail) = check();
    let elapsed = start.elapsed();
    let pass = ok && elapsed < limit;
    println!(
        "{} [{n}] {name}: {detail}; {:.3}s (limit {}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

// 1 ---------------------------------------------------------------------------

fn quadratic_exactness() -> (bool, String) {
    let (m, d) = (10, 8);
    let mut rng = Rng::new(101);
    let comps: Vec<Box<dyn ComponentOracle>> = (0..m)
        .map(|_| {
            let b = DMatrix::from_fn(d, d, |_, _| rng.range(-1.0, 1.0));
            let a = &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1;
            Box::new(make_quadratic_component(a, rng.vector(d, 1.0)).unwrap())
                as Box<dyn ComponentOracle>
        })
        .collect();
    let p = assemble_problem(comps).unwrap();
    let gamma = 1.0 / p.big_l();
    let mut worst = 0.0f64;
    for (alg, alpha) in [(Algorithm::Ciag, None), (Algorithm::Aciag, Some(0.8))] {
        let mut cfg = SolverConfig::new(alg, gamma).with_theta0(rng.vector(d, 3.0));
        if let Some(a) = alpha {
            cfg = cfg.with_alpha(a);
        }
        let mut s = Solver::new(&p, &cfg).unwrap();
        for _ in 0..m {
            s.step().unwrap();
        }
        let mut full = s.iterate().clone();
        for _ in 0..200 {
            s.step().unwrap();
            match alpha {
                Some(a) => step_afg(&mut full, &p, gamma, a).unwrap(),
                None => step_fg(&mut full, &p, gamma).unwrap(),
            }
            worst = worst.max(rel(s.theta(), full.theta()));
        }
    }
    (worst <= 1e-12, format!("max per-step relative difference {worst:.2e} (<= 1e-12)"))
}

// 2 ---------------------------------------------------------------------------

fn taylor_remainder() -> (bool, String) {
    let mut rng = Rng::new(202);
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = 2 + rng.index(20);
        let scale = rng.log_range(0.1, 5.0);
        let x = rng.vector(d, scale);
        let y = if rng.unit() < 0.5 { -1.0 } else { 1.0 };
        let c = make_logistic_component(&x, y, 1 + rng.index(100)).unwrap();
        let center = rng.vector(d, 3.0);
        let (s1, s2) = (rng.log_range(1e-3, 3.0), rng.log_range(1e-3, 3.0));
        let th = &center + rng.vector(d, s1);
        let th2 = &center + rng.vector(d, s2);
        let delta = &th - &th2;
        let lhs = (c.grad(&th) - c.grad(&th2) - c.hess(&th2) * &delta).norm();
        let bound = 0.5 * c.lipschitz_hess() * delta.norm_squared();
        worst = worst.max(lhs / bound);
        if lhs > bound * (1.0 + 1e-12) + 1e-14 {
            violations += 1;
        }
    }
    (
        violations == 0,
        format!("{violations} violations in 1000 triples, max ratio to bound {worst:.3}"),
    )
}

// 3 ---------------------------------------------------------------------------

fn aggregate_consistency() -> (bool, String) {
    let (m, d) = (10, 6);
    let mut rng = Rng::new(303);
    let comps: Vec<LogisticComponent> = (0..m)
        .map(|_| {
            let x = rng.vector(d, 1.5);
            make_logistic_component(&x, if rng.unit() < 0.5 { -1.0 } else { 1.0 }, m).unwrap()
        })
        .collect();
    let mut worst_batch = 0.0f64;
    let mut worst_paths = 0.0f64;
    for seq in 0..20 {
        let mut dense = init_state(d, m).unwrap();
        let mut linear = LinearAggregateState::new(d, m).unwrap();
        let mut anchors: Vec<Option<DVector<f64>>> = vec![None; m];
        for k in 1..=200 {
            let i = rng.index(m);
            let a = match (&anchors[i], rng.unit() < 0.3) {
                (Some(old), true) => old.clone(),
                (Some(old), false) if seq % 2 == 0 => old + rng.vector(d, 0.1),
                _ => rng.vector(d, 2.0),
            };
            dense.update(i, &comps[i], &a, k).unwrap();
            linear.linear_update(i, &comps[i], &a, k).unwrap();
            anchors[i] = Some(a);

            let mut b = DVector::zeros(d);
            let mut h = DMatrix::zeros(d, d);
            for (c, a) in comps.iter().zip(&anchors) {
                if let Some(a) = a {
                    let hi = c.hess(a);
                    b += c.grad(a) - &hi * a;
                    h += hi;
                }
            }
            worst_batch = worst_batch.max(rel(dense.b(), &b)).max(rel_m(dense.h(), &h));
            worst_batch = worst_batch.max(rel(linear.b(), &b)).max(rel_m(linear.h(), &h));
            worst_paths =
                worst_paths.max(rel(dense.b(), linear.b())).max(rel_m(dense.h(), linear.h()));
        }
    }
    (
        worst_batch <= 1e-9 && worst_paths <= 1e-10,
        format!(
            "vs batch {worst_batch:.2e} (<= 1e-9), dense vs linear {worst_paths:.2e} (<= 1e-10)"
        ),
    )
}

// 4 ---------------------------------------------------------------------------

fn tail_r2(records: &[TraceRecord]) -> f64 {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.gap.filter(|g| *g > 0.0).map(|g| (r.k as f64, g.ln())))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts[pts.len() / 2..].iter().copied().unzip();
    linear_fit(&xs, &ys).map_or(0.0, |f| f.r_squared)
}

fn synthetic_reproduction() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(DataSource::Synth { m: 1000, d: 51, seed: 2019 });
    cfg.solvers = ["CIAG:gamma=auto", "A-CIAG:gamma=auto,alpha=0.95", "IAG:gamma=auto"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    cfg.tol = 1e-10;
    cfg.max_passes = 200.0;
    cfg.thin = Some(100);
    cfg.out = dir.path().to_path_buf();
    let report = run_experiment(&cfg).unwrap();
    let passes: Vec<Option<f64>> = report.summaries.iter().map(|s| s.passes_to_tol).collect();
    let capped = |p: Option<f64>| p.unwrap_or(200.0);
    let (ciag, aciag, iag) = (passes[0], passes[1], passes[2]);
    let r2: Vec<f64> = report.traces[..2]
        .iter()
        .map(|t| tail_r2(&t.as_ref().unwrap().records))
        .collect();
    let ok = ciag.is_some()
        && aciag.is_some()
        && capped(aciag) < capped(ciag)
        && capped(ciag) < capped(iag)
        && r2.iter().all(|r| *r >= 0.95);
    (
        ok,
        format!(
            "passes to 1e-10: A-CIAG {aciag:?} < CIAG {ciag:?} < IAG {iag:?} (cap 200); \
             tail R2 CIAG {:.4}, A-CIAG {:.4} (>= 0.95)",
            r2[0], r2[1]
        ),
    )
}

// 5 ---------------------------------------------------------------------------

/// Per-iteration contraction of `metric` over the tail half of the stretch
/// between the end of the first pass and the point where it reaches `floor`.
fn tail_contraction(
    p: &ProblemInstance,
    cfg: &SolverConfig,
    floor: f64,
    metric: impl Fn(&DVector<f64>) -> f64,
) -> f64 {
    let mut s = Solver::new(p, cfg).unwrap();
    let mut seq = Vec::new();
    for k in 0..200_000 {
        s.step().unwrap();
        let e = metric(s.theta());
        if e <= floor {
            break;
        }
        if k >= 2 * p.m() {
            seq.push(e.ln());
        }
    }
    let tail = &seq[seq.len() / 2..];
    let xs: Vec<f64> = (0..tail.len()).map(|i| i as f64).collect();
    linear_fit(&xs, tail).unwrap().slope.exp()
}

fn rate_targets_check() -> (bool, String) {
    let data = synth_generate(20, 6, 55).unwrap().dataset;
    let p = logistic_problem(&data, 1).unwrap();
    let (mu, l) = (p.mu(), p.big_l());
    let star = reference_solution(&p, 1e-13).unwrap();
    let mut rng = Rng::new(505);
    let u = rng.vector(6, 1.0);
    let theta0 = &star.theta + u.normalize() * 1e-3;

    let gamma = 2.0 / (mu + l);
    let target_ciag = 1.0 - 2.0 * gamma * mu * l / (mu + l);
    let cfg = SolverConfig::new(Algorithm::Ciag, gamma).with_theta0(theta0.clone());
    let rate_ciag = tail_contraction(&p, &cfg, 1e-24, |th| (th - &star.theta).norm_squared());

    let cfg = SolverConfig::from_c(Algorithm::Aciag, 0.5, &p).unwrap().with_theta0(theta0);
    let target_aciag = 1.0 - (mu * cfg.gamma).sqrt();
    let rate_aciag = tail_contraction(&p, &cfg, 1e-24, |th| p.gap(th, &star).unwrap());

    let ok = p.kappa() <= 20.0
        && rate_ciag <= target_ciag * 1.15
        && rate_aciag <= target_aciag * 1.15;
    (
        ok,
        format!(
            "kappa {:.2}; CIAG {rate_ciag:.4} vs target {target_ciag:.4}; \
             A-CIAG {rate_aciag:.4} vs target {target_aciag:.4} (measured <= 1.15 x target)",
            p.kappa()
        ),
    )
}

// 6 ---------------------------------------------------------------------------

fn random_terms(rng: &mut Rng, budget: f64, base: f64) -> Vec<RecursionTerm> {
    let j = 1 + rng.index(4);
    (0..j)
        .map(|_| {
            let exponent = rng.range(1.25, 4.0);
            let share = budget / j as f64 * rng.unit();
            RecursionTerm { coef: share / base.powf(exponent - 1.0), exponent }
        })
        .collect()
}

fn recursion_simulators() -> (bool, String) {
    let mut rng = Rng::new(606);
    let mut fails = [0, 0];
    let mut worst = [0.0f64, 0.0];
    for _ in 0..50 {
        for (which, fail) in fails.iter_mut().enumerate() {
            let p = rng.range(0.05, 0.95);
            let b = if which == 0 { 1.0 } else { rng.range(1.0, 3.0) };
            let x1 = rng.log_range(1e-3, 2.0);
            let terms = random_terms(&mut rng, 0.95 * (1.0 - p), b * x1);
            let spec = RecursionSpec::new(p, terms, 1 + rng.index(8), x1)
                .and_then(|s| s.with_b(b))
                .unwrap();
            let v = if which == 0 {
                simulate_recursion_p5(&spec, 20_000)
            } else {
                simulate_recursion_p6(&spec, 20_000)
            }
            .unwrap();
            let err = v.tail_ratio.map_or(f64::INFINITY, |r| (r - p).abs());
            worst[which] = worst[which].max(err);
            if !(v.condition_holds && v.envelope_holds && err <= 1e-3) {
                *fail += 1;
            }
        }
    }
    (
        fails == [0, 0],
        format!(
            "first recursion {} / 50 ok (max |ratio - p| {:.1e}), second {} / 50 ok ({:.1e})",
            50 - fails[0],
            worst[0],
            50 - fails[1],
            worst[1]
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn ciag_c_dual(rc: &RateConstants) -> f64 {
    let RateConstants { mu, big_l: l, big_lh: lh, v1: v, .. } = *rc;
    let k = rc.k as f64;
    let r = mu * l / (mu + l);
    let g5 = (r / (2.0 * k.powi(4) * lh.powi(2) * (l.powi(4) * v + 16.0 * lh.powi(4) * v.powi(3))))
        .powf(0.2);
    let g2 = (r / (2.0 * k * k * lh * (l * l * v.sqrt() + 4.0 * lh * lh * v.powf(1.5)))).sqrt();
    2.0f64.min(g5 * (mu + l)).min(g2 * (mu + l))
}

fn aciag_c_dual(rc: &RateConstants) -> [f64; 3] {
    let RateConstants { mu, big_l: l, big_lh: lh, h1: h, .. } = *rc;
    let k = rc.k as f64;
    let x = 20.0 * l * l / mu * (2.0 * h).sqrt() + (40.0 * lh / mu).powi(2) * (2.0 * h).powf(1.5);
    let y = (20.0 * l * l / mu).powi(2) * (2.0 * h) + (40.0 * lh / mu).powi(4) * (2.0 * h).powi(3);
    let g1 = (mu.sqrt() / (18f64.sqrt() * k * k * lh) / x).sqrt();
    let g2 = (2.0 * mu / (81.0 * k.powi(4) * lh * lh) / y).powf(0.25);
    let g3 = mu.sqrt() / 4.0
        / (4.5 * k * k * lh * h.sqrt() + 324.0 * k.powi(4) * lh * lh * h / mu.powf(1.5)
            + mu.powf(1.5) / 4.0);
    [l * g1, l * g2, l * g3]
}

fn step_size_bounds() -> (bool, String) {
    let mut limits_ok = true;
    for lh in [1e-14, 1e-20, 0.0] {
        let rc = RateConstants::new(1.0, 5.0, lh, 10, 1.0, 1.0).unwrap();
        limits_ok &= ciag_admissible_c(&rc) == 2.0;
    }
    for (mu, l) in [(0.5, 20.0), (1.0, 1.0), (2.0, 3.0)] {
        for h in [1e-30, 0.0] {
            let rc = RateConstants::new(mu, l, 3.0, 4, 0.0, h).unwrap();
            limits_ok &= aciag_admissible_c(&rc).c_max == (l / mu).min(0.5);
        }
    }
    let mut rng = Rng::new(707);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mu = rng.log_range(1e-2, 10.0);
        let rc = RateConstants::new(
            mu,
            mu * rng.log_range(1.0, 1e3),
            rng.log_range(1e-3, 10.0),
            1 + rng.index(200),
            rng.log_range(1e-8, 10.0),
            rng.log_range(1e-8, 10.0),
        )
        .unwrap();
        worst = worst.max(rel_s(ciag_admissible_c(&rc), ciag_c_dual(&rc)));
        let b = aciag_admissible_c(&rc);
        let [c1, c2, c3] = aciag_c_dual(&rc);
        for (x, y) in [(b.c1, c1), (b.c2, c2), (b.c3, c3), (b.c_max, c1.min(c2).min(c3).min(0.5))] {
            worst = worst.max(rel_s(x, y));
        }
    }
    (
        limits_ok && worst <= 1e-12,
        format!("limits {}; 100-point grid max relative mismatch {worst:.1e} (<= 1e-12)", if limits_ok { "ok" } else { "broken" }),
    )
}

// 8 ---------------------------------------------------------------------------

fn parser() -> (bool, String) {
    let mut rng = Rng::new(808);
    let dim = 60;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..1000 {
        let idx: Vec<usize> = (0..dim).filter(|_| rng.unit() < 0.2).collect();
        let val: Vec<f64> = idx.iter().map(|_| rng.range(-1e3, 1e3) * rng.log_range(1e-9, 1.0)).collect();
        rows.push(SparseVec::new(idx, val).unwrap());
        labels.push(if rng.unit() < 0.5 { -1.0 } else { 1.0 });
    }
    let ds = Dataset::new(rows, labels, dim).unwrap();
    let mut buf = Vec::new();
    write_libsvm(&ds, &mut buf).unwrap();
    let back = parse_libsvm(buf.as_slice(), Some(dim)).unwrap();
    let same = back.dim() == dim
        && back.labels() == ds.labels()
        && back.rows().iter().zip(ds.rows()).all(|(a, b)| {
            a.indices() == b.indices()
                && a.values().iter().zip(b.values()).all(|(u, v)| u.to_bits() == v.to_bits())
        });

    let fixtures: [(&str, usize); 10] = [
        ("+1 1:0.5\nfoo 1:1\n", 2),
        ("+1 1:0.5 2\n", 1),
        ("+1 0:1.0\n", 1),
        ("-1 3:1 2:1\n", 1),
        ("-1 1:1\n\n+1 2:x\n", 3),
        ("+1 a:1\n", 1),
        ("+1 1:1 1:2\n", 1),
        ("# header\n-1 1:nan\n", 2),
        ("+1 1:1\n-1 2:1\ninf 1:1\n", 3),
        ("+1 1:1\n-1 -2:1\n", 2),
    ];
    let rejected = fixtures
        .iter()
        .filter(|(text, line)| {
            matches!(parse_libsvm(text.as_bytes(), None), Err(Error::Parse { line: l, .. }) if l == *line)
        })
        .count();
    (
        same && rejected == 10,
        format!(
            "1000-line round trip {}; {rejected} / 10 malformed fixtures rejected at the right line",
            if same { "exact" } else { "MISMATCH" }
        ),
    )
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "quadratic exactness", s(1), quadratic_exactness),
        criterion(2, "Taylor remainder bound", s(1), taylor_remainder),
        criterion(3, "aggregate-state consistency", s(5), aggregate_consistency),
        criterion(4, "synthetic reproduction", s(60), synthetic_reproduction),
        criterion(5, "asymptotic rate targets", s(30), rate_targets_check),
        criterion(6, "recursion simulators", s(5), recursion_simulators),
        criterion(7, "step-size bounds", s(1), step_size_bounds),
        criterion(8, "parser", s(1), parser),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("{passed} / {} acceptance criteria passed", results.len());
    assert!(results.iter().all(|r| *r));
}
