//! Datasets: LibSVM text I/O, the uniform synthetic generator, and grouping
//! of data tuples into mini-batch components.
//!
//! The LibSVM format is one tuple per line, `label idx:val idx:val ...`, with
//! 1-based strictly increasing feature indices. Blank lines and `#` comments
//! are ignored. Labels are mapped to ±1: any label `> 0` becomes `+1` and the
//! rest `−1`, except that a file whose labels take exactly two values, both
//! positive (e.g. `1`/`2`), maps the smaller value to `−1`.
//!
//! Synthetic data uses Xoshiro256++ seeded through SplitMix64
//! (`rand_xoshiro`'s `seed_from_u64`). Uniform draws on `[−1, 1)` take the top
//! 53 bits of each output: `u = −1 + 2·(x >> 11)·2⁻⁵³`.

use std::io::{BufRead, Write};
use std::ops::Range;

use nalgebra::DVector;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::oracle::{assemble_problem, ComponentOracle, LogisticComponent, ProblemInstance};
use crate::sparse::SparseVec;

/// A labelled sparse dataset. Feature vectors are stored 0-based; index `j`
/// here is feature `j + 1` in the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseVec>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseVec>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::invalid(format!("label {l} is not ±1")));
        }
        if let Some(r) = rows.iter().find(|r| r.min_dim() > dim) {
            return Err(Error::invalid(format!(
                "feature index {} exceeds dimension {dim}",
                r.min_dim()
            )));
        }
        Ok(Dataset { rows, labels, dim })
    }

    pub fn rows(&self) -> &[SparseVec] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a LibSVM stream. `dim_override` fixes the dimension (it must cover
/// every index present); otherwise `dim` is the largest index seen.
pub fn parse_libsvm<R: BufRead>(reader: R, dim_override: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(parse_err(lineno, format!("non-finite label {label_tok:?}")));
        }

        let mut idx = Vec::new();
        let mut val = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("expected idx:val, got {tok:?}")))?;
            let i: usize = i
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature index in {tok:?}")))?;
            if i == 0 {
                return Err(parse_err(lineno, "feature indices are 1-based"));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad feature value in {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, format!("non-finite feature value in {tok:?}")));
            }
            if let Some(&prev) = idx.last() {
                if i - 1 <= prev {
                    return Err(parse_err(
                        lineno,
                        format!("feature index {i} does not increase (previous {})", prev + 1),
                    ));
                }
            }
            idx.push(i - 1);
            val.push(v);
        }
        max_index = max_index.max(idx.last().map_or(0, |i| i + 1));
        rows.push(SparseVec::new(idx, val).expect("indices checked above"));
        raw_labels.push(label);
    }

    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(Error::invalid(format!(
                "dimension override {d} is smaller than the largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    Dataset::new(rows, map_labels(&raw_labels), dim)
}

fn map_labels(raw: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = raw.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() == 2 && distinct[0] > 0.0 {
        let low = distinct[0];
        return raw.iter().map(|&l| if l == low { -1.0 } else { 1.0 }).collect();
    }
    raw.iter().map(|&l| if l > 0.0 { 1.0 } else { -1.0 }).collect()
}

/// Writes the dataset in LibSVM format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for (row, &y) in dataset.rows.iter().zip(&dataset.labels) {
        write!(out, "{}", if y > 0.0 { "+1" } else { "-1" })?;
        for (i, v) in row.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// A synthetic dataset together with the parameter that labelled it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub theta_true: DVector<f64>,
}

fn uniform_pm1(rng: &mut Xoshiro256PlusPlus) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    -1.0 + 2.0 * ((rng.next_u64() >> 11) as f64 * SCALE)
}

/// `θ_true ~ U[−1,1)^d`, `x_i = [x̃_i; 1]` with `x̃_i ~ U[−1,1)^{d−1}`, and
/// `y_i = sign(⟨x_i, θ_true⟩)` with `sign(0) = +1`.
pub fn synth_generate(m: usize, d: usize, seed: u64) -> Result<SyntheticData> {
    if d < 2 {
        return Err(Error::invalid(format!("synthetic data needs d >= 2, got {d}")));
    }
    if m < 1 {
        return Err(Error::invalid("synthetic data needs m >= 1"));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let theta_true = DVector::from_fn(d, |_, _| uniform_pm1(&mut rng));

    let mut rows = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let mut val: Vec<f64> = (0..d - 1).map(|_| uniform_pm1(&mut rng)).collect();
        val.push(1.0);
        let margin: f64 = val.iter().zip(theta_true.iter()).map(|(a, b)| a * b).sum();
        labels.push(if margin >= 0.0 { 1.0 } else { -1.0 });
        rows.push(SparseVec::new((0..d).collect(), val).expect("dense indices are increasing"));
    }

    Ok(SyntheticData {
        dataset: Dataset::new(rows, labels, d)?,
        theta_true,
    })
}

/// Splits `0..count` into consecutive groups of `batch`; the last group holds
/// the remainder.
pub fn minibatch(count: usize, batch: usize) -> Result<Vec<Range<usize>>> {
    if batch == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    Ok((0..count)
        .step_by(batch)
        .map(|start| start..(start + batch).min(count))
        .collect())
}

/// Ridge-regularized logistic regression over `dataset`, one component per
/// mini-batch of `batch` tuples. Every tuple carries `(1/2N)‖θ‖²` with `N` the
/// dataset size, so the total ridge is `½‖θ‖²` regardless of batching.
pub fn logistic_problem(dataset: &Dataset, batch: usize) -> Result<ProblemInstance> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if dataset.dim == 0 {
        return Err(Error::invalid("dataset has no features"));
    }
    let ridge = 1.0 / dataset.count() as f64;
    let components = minibatch(dataset.count(), batch)?
        .into_iter()
        .map(|g| {
            LogisticComponent::new(
                dataset.dim,
                dataset.rows[g.clone()].to_vec(),
                dataset.labels[g].to_vec(),
                ridge,
            )
            .map(|c| Box::new(c) as Box<dyn ComponentOracle>)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_problem(components)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_libsvm(text.as_bytes(), None)
    }

    #[test]
    fn parses_basic_file() {
        let ds = parse("+1 1:0.5 3:2.0\n-1 2:1.0").unwrap();
        assert_eq!(ds.count(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.rows()[0].indices(), &[0, 2]);
        assert_eq!(ds.rows()[0].values(), &[0.5, 2.0]);
        assert_eq!(ds.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn empty_stream_is_empty_dataset() {
        let ds = parse("").unwrap();
        assert_eq!(ds.count(), 0);
        assert!(logistic_problem(&ds, 1).is_err());
    }

    #[test]
    fn label_mapping() {
        let ds = parse("0 1:1\n1 1:1\n0 2:1").unwrap();
        assert_eq!(ds.labels(), &[-1.0, 1.0, -1.0]);
        let ds = parse("2 1:1\n1 1:1\n2 2:1").unwrap();
        assert_eq!(ds.labels(), &[1.0, -1.0, 1.0]);
        let ds = parse("3 1:1\n-2 1:1\n0.5 2:1").unwrap();
        assert_eq!(ds.labels(), &[1.0, -1.0, 1.0]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let ds = parse("# header\n\n+1 1:1 # trailing\n   \n-1 2:3\n").unwrap();
        assert_eq!(ds.count(), 2);
    }

    #[test]
    fn dim_override() {
        let ds = parse_libsvm("+1 1:1 2:1".as_bytes(), Some(5)).unwrap();
        assert_eq!(ds.dim(), 5);
        assert!(parse_libsvm("+1 1:1 7:1".as_bytes(), Some(5)).is_err());
    }

    #[test]
    fn rejects_with_line_numbers() {
        let cases = [
            ("+1 1:1\n-1 2:1 2:3\n", 2),
            ("+1 1:1\n+1 1:1\n-1 3:1 2:1", 3),
            ("x 1:1", 1),
            ("+1 1:1\n+1 0:1", 2),
            ("+1 1-1", 1),
            ("+1 a:1", 1),
            ("+1 1:b", 1),
            ("\n\n+1 1:nan", 3),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_small() {
        let text = "+1 1:0.1 4:-3.25e-7\n-1 2:1\n+1\n";
        let ds = parse(text).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        assert_eq!(parse_libsvm(&buf[..], Some(ds.dim())).unwrap(), ds);
    }

    #[test]
    fn synthetic_shape_and_labels() {
        let s = synth_generate(1000, 51, 3).unwrap();
        assert_eq!(s.dataset.count(), 1000);
        assert_eq!(s.dataset.dim(), 51);
        for (x, &y) in s.dataset.rows().iter().zip(s.dataset.labels()) {
            assert_eq!(x.nnz(), 51);
            assert_eq!(x.values()[50], 1.0);
            assert!(x.values()[..50].iter().all(|v| (-1.0..1.0).contains(v)));
            assert!(y * x.dot(&s.theta_true) >= 0.0);
        }
    }

    #[test]
    fn synthetic_determinism() {
        let a = synth_generate(1, 2, 42).unwrap();
        let b = synth_generate(1, 2, 42).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.theta_true, b.theta_true);
        let c = synth_generate(1, 2, 43).unwrap();
        assert_ne!(a.dataset, c.dataset);
        assert!(synth_generate(5, 1, 0).is_err());
    }

    #[test]
    fn minibatch_partitions() {
        assert_eq!(minibatch(10, 5).unwrap(), vec![0..5, 5..10]);
        assert_eq!(minibatch(10, 1).unwrap().len(), 10);
        let g = minibatch(11, 5).unwrap();
        assert_eq!(g.iter().map(|r| r.len()).collect::<Vec<_>>(), vec![5, 5, 1]);
        assert_eq!(g.into_iter().flatten().collect::<Vec<_>>(), (0..11).collect::<Vec<_>>());
        assert!(minibatch(3, 0).is_err());
        assert!(minibatch(0, 4).unwrap().is_empty());
    }

    #[test]
    fn batched_problem_keeps_total_ridge() {
        let s = synth_generate(11, 4, 9).unwrap();
        let single = logistic_problem(&s.dataset, 1).unwrap();
        let batched = logistic_problem(&s.dataset, 5).unwrap();
        assert_eq!(batched.m(), 3);
        assert!((single.mu() - 1.0).abs() < 1e-12);
        assert!((batched.mu() - 1.0).abs() < 1e-12);
        assert!((single.big_l() - batched.big_l()).abs() < 1e-12);
        let th = DVector::from_fn(4, |i, _| 0.3 * i as f64 - 0.4);
        let (f1, f2) = (single.value(&th).unwrap(), batched.value(&th).unwrap());
        assert!((f1 - f2).abs() < 1e-12 * f1.abs());
    }
}
