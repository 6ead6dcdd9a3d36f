use std::fmt;
use std::str::FromStr;

use ciag_core::oracle::ProblemInstance;
use ciag_core::optim::{Algorithm, ScheduleKind, SolverConfig};

use crate::{BenchError, Result};

/// Step size as written on the command line, resolved once `L` and `m` are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    /// `1/L` for full-gradient and curvature-aided methods, `50/(mL)` for IAG and SAG.
    Auto,
    Value(f64),
    /// `x/L`
    OverL(f64),
    /// `x/(mL)`
    OverML(f64),
    /// `x/max_i L_i`, relative to the smoothest-bound component.
    OverLmax(f64),
}

impl GammaSpec {
    pub fn resolve(self, algorithm: Algorithm, problem: &ProblemInstance) -> f64 {
        let (m, l) = (problem.m() as f64, problem.big_l());
        match self {
            GammaSpec::Auto => match algorithm {
                Algorithm::Iag | Algorithm::Sag => 50.0 / (m * l),
                _ => 1.0 / l,
            },
            GammaSpec::Value(g) => g,
            GammaSpec::OverL(x) => x / l,
            GammaSpec::OverML(x) => x / (m * l),
            GammaSpec::OverLmax(x) => {
                let lmax = problem
                    .components()
                    .iter()
                    .map(|c| c.lipschitz_grad())
                    .fold(0.0, f64::max);
                x / lmax
            }
        }
    }
}

impl FromStr for GammaSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(GammaSpec::Auto);
        }
        let (num, ctor): (&str, fn(f64) -> GammaSpec) = if let Some(n) = s.strip_suffix("/Lmax") {
            (n, GammaSpec::OverLmax)
        } else if let Some(n) = s.strip_suffix("/mL") {
            (n, GammaSpec::OverML)
        } else if let Some(n) = s.strip_suffix("/(mL)") {
            (n, GammaSpec::OverML)
        } else if let Some(n) = s.strip_suffix("/L") {
            (n, GammaSpec::OverL)
        } else {
            (s, GammaSpec::Value)
        };
        let x = parse_positive("gamma", num)?;
        Ok(ctor(x))
    }
}

impl fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSpec::Auto => write!(f, "auto"),
            GammaSpec::Value(g) => write!(f, "{g}"),
            GammaSpec::OverL(x) => write!(f, "{x}/L"),
            GammaSpec::OverML(x) => write!(f, "{x}/mL"),
            GammaSpec::OverLmax(x) => write!(f, "{x}/Lmax"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSpec {
    Gamma { gamma: GammaSpec, alpha: Option<f64> },
    /// Step and momentum both derived from the admissibility constant `c`.
    C(f64),
}

/// One `--solver NAME:gamma=..[,alpha=..|,c=..][,schedule=..]` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub algorithm: Algorithm,
    pub step: StepSpec,
    pub schedule: Option<ScheduleKind>,
}

fn parse_positive(key: &str, v: &str) -> Result<f64> {
    match v.trim().parse::<f64>() {
        Ok(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => Err(BenchError::config(format!("{key} must be a positive number, got {v:?}"))),
    }
}

impl FromStr for SolverSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let algorithm: Algorithm = name
            .parse()
            .map_err(|_| BenchError::config(format!("unknown solver {name:?}")))?;

        let mut gamma = None;
        let mut alpha = None;
        let mut c = None;
        let mut schedule = None;
        for kv in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| BenchError::config(format!("expected key=value in {kv:?}")))?;
            let dup = || BenchError::config(format!("{} given twice in {s:?}", k.trim()));
            match k.trim() {
                "gamma" => {
                    if gamma.replace(v.parse::<GammaSpec>()?).is_some() {
                        return Err(dup());
                    }
                }
                "alpha" => {
                    let a: f64 = v.trim().parse().map_err(|_| {
                        BenchError::config(format!("alpha must be a number, got {v:?}"))
                    })?;
                    if !(0.0..1.0).contains(&a) {
                        return Err(BenchError::config(format!("alpha must lie in [0, 1), got {a}")));
                    }
                    if alpha.replace(a).is_some() {
                        return Err(dup());
                    }
                }
                "c" => {
                    if c.replace(parse_positive("c", v)?).is_some() {
                        return Err(dup());
                    }
                }
                "schedule" => {
                    let kind = v.trim().parse().map_err(BenchError::Core)?;
                    if schedule.replace(kind).is_some() {
                        return Err(dup());
                    }
                }
                other => {
                    return Err(BenchError::config(format!("unknown solver option {other:?}")))
                }
            }
        }

        if alpha.is_some() && !algorithm.uses_momentum() {
            return Err(BenchError::config(format!("{algorithm} takes no alpha")));
        }
        let step = match (gamma, alpha, c) {
            (Some(_), _, Some(_)) | (None, Some(_), Some(_)) => {
                return Err(BenchError::config(format!(
                    "{s:?}: c replaces gamma and alpha, give one or the other"
                )))
            }
            (None, None, Some(c)) => StepSpec::C(c),
            (g, alpha, None) => StepSpec::Gamma { gamma: g.unwrap_or(GammaSpec::Auto), alpha },
        };
        Ok(SolverSpec { algorithm, step, schedule })
    }
}

impl fmt::Display for SolverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.algorithm)?;
        match self.step {
            StepSpec::Gamma { gamma, alpha } => {
                write!(f, "gamma={gamma}")?;
                if let Some(a) = alpha {
                    write!(f, ",alpha={a}")?;
                }
            }
            StepSpec::C(c) => write!(f, "c={c}")?,
        }
        if let Some(s) = self.schedule {
            write!(f, ",schedule={s}")?;
        }
        Ok(())
    }
}

impl SolverSpec {
    /// Solver configuration for `problem`; stop rule, seed and thinning are
    /// left at their defaults for the caller to fill in.
    pub fn to_config(&self, problem: &ProblemInstance) -> Result<SolverConfig> {
        let mut cfg = match self.step {
            StepSpec::Gamma { gamma, alpha } => {
                let cfg = SolverConfig::new(self.algorithm, gamma.resolve(self.algorithm, problem));
                match alpha {
                    Some(a) => cfg.with_alpha(a),
                    None => cfg,
                }
            }
            StepSpec::C(c) => SolverConfig::from_c(self.algorithm, c, problem)?,
        };
        if let Some(s) = self.schedule {
            cfg = cfg.with_schedule(s);
        }
        Ok(cfg)
    }
}
