use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::solver_spec::SolverSpec;
use crate::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synth { m: usize, d: usize, seed: u64 },
}

impl FromStr for DataSource {
    type Err = BenchError;

    /// Parses the `m,d,seed` triple of a synthetic source.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || BenchError::config(format!("expected m,d,seed, got {s:?}"));
        let [m, d, seed] = parts[..] else {
            return Err(bad());
        };
        Ok(DataSource::Synth {
            m: m.parse().map_err(|_| bad())?,
            d: d.parse().map_err(|_| bad())?,
            seed: seed.parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::File(p) => write!(f, "{}", p.display()),
            DataSource::Synth { m, d, seed } => write!(f, "synth {m},{d},{seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Tuples per component.
    pub batch: usize,
    pub solvers: Vec<SolverSpec>,
    /// Stop once `‖∇F‖` falls to this value.
    pub tol: f64,
    pub max_passes: f64,
    /// Iterations between trace records; one pass when unset.
    pub thin: Option<usize>,
    /// Seed for randomized schedules.
    pub seed: u64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn new(source: DataSource) -> Self {
        ExperimentConfig {
            source,
            batch: 1,
            solvers: Vec::new(),
            tol: 1e-10,
            max_passes: 100.0,
            thin: None,
            seed: 0,
            out: PathBuf::from("results"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(BenchError::config("no solvers configured"));
        }
        if self.batch == 0 {
            return Err(BenchError::config("batch size must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(BenchError::config(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.max_passes > 0.0) {
            return Err(BenchError::config(format!(
                "max passes must be positive, got {}",
                self.max_passes
            )));
        }
        if self.thin == Some(0) {
            return Err(BenchError::config("thin must be at least 1"));
        }
        if let DataSource::Synth { m, d, .. } = self.source {
            if m == 0 || d < 2 {
                return Err(BenchError::config(format!(
                    "synthetic data needs m >= 1 and d >= 2, got m = {m}, d = {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Settings read from a flat `key = value` file. Every field is optional so
/// command-line flags can fill in or override them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub source: Option<DataSource>,
    pub batch: Option<usize>,
    pub solvers: Vec<SolverSpec>,
    pub tol: Option<f64>,
    pub max_passes: Option<f64>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| BenchError::config(format!("line {line}: bad value {v:?} for {key}")))
}

impl ConfigFile {
    /// Recognized keys: `data`, `synth`, `batch`, `solver` (repeatable), `tol`,
    /// `max_passes`, `thin`, `seed`, `out`. `#` starts a comment. Relative
    /// `data` and `out` paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| BenchError::config(format!("line {line}: expected key = value")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "data" => cfg.set_source(line, DataSource::File(base.join(v)))?,
                "synth" => cfg.set_source(line, v.parse()?)?,
                "batch" => cfg.batch = Some(parse_value(line, k, v)?),
                "solver" => cfg.solvers.push(v.parse()?),
                "tol" => cfg.tol = Some(parse_value(line, k, v)?),
                "max_passes" | "max-passes" => cfg.max_passes = Some(parse_value(line, k, v)?),
                "thin" => cfg.thin = Some(parse_value(line, k, v)?),
                "seed" => cfg.seed = Some(parse_value(line, k, v)?),
                "out" => cfg.out = Some(base.join(v)),
                other => {
                    return Err(BenchError::config(format!("line {line}: unknown key {other:?}")))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ConfigFile::parse(&text, base).map_err(|e| match e {
            BenchError::Config(msg) => BenchError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn set_source(&mut self, line: usize, src: DataSource) -> Result<()> {
        if self.source.replace(src).is_some() {
            return Err(BenchError::config(format!("line {line}: data source given twice")));
        }
        Ok(())
    }
}
