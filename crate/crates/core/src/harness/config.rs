//! Experiment configuration: a flat TOML document whose keys mirror the CLI
//! flags. Flags override file values.
//!
//! ```toml
//! problem = "bilinear:n=1,m=1,a=1"
//! schedule = "anchored-new:gamma=2"
//! z0 = "ones"
//! steps = 100000
//! record_every = 100
//! checks = "all"
//! seed = 0
//! out = "bilinear-2d.csv"
//! report = "bilinear-2d.json"
//! ```
//!
//! `problem` may instead be an inline table with row-major matrices:
//!
//! ```toml
//! [problem]
//! kind = "quadratic-saddle"
//! a = [[1.0]]
//! p = [[1.0]]
//! q = [[1.0]]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::problems::{Point, ProblemKind, ProblemSpec};
use crate::schedules::Schedule;
use crate::verify::names;

/// Environment variable naming the directory that relative output paths
/// are resolved against.
pub const OUT_DIR_ENV: &str = "AGDA_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemConfig {
    Descriptor(String),
    Inline(InlineProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub kind: ProblemKind,
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    /// Declared K; defaults to the operator norm.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Z0Config {
    /// `ones`, `e1` or `saddle`, or a comma-separated list of numbers.
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChecksConfig {
    /// `all` or a comma-separated list.
    Named(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Option<ProblemConfig>,
    pub schedule: Option<String>,
    pub z0: Option<Z0Config>,
    pub steps: Option<usize>,
    pub record_every: Option<usize>,
    pub checks: Option<ChecksConfig>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Fields set in `overrides` replace those in `self`.
    pub fn merged(self, overrides: ExperimentConfig) -> Self {
        Self {
            problem: overrides.problem.or(self.problem),
            schedule: overrides.schedule.or(self.schedule),
            z0: overrides.z0.or(self.z0),
            steps: overrides.steps.or(self.steps),
            record_every: overrides.record_every.or(self.record_every),
            checks: overrides.checks.or(self.checks),
            seed: overrides.seed.or(self.seed),
            out: overrides.out.or(self.out),
            report: overrides.report.or(self.report),
        }
    }

    pub fn resolve(&self) -> Result<Experiment> {
        let problem = match &self.problem {
            None => return Err(Error::usage("no problem given")),
            Some(p) => p.build()?,
        };
        let schedule = self
            .schedule
            .as_deref()
            .ok_or_else(|| Error::usage("no schedule given"))?;
        let schedule = Schedule::parse(schedule, problem.lipschitz())?;
        let z0 = self
            .z0
            .clone()
            .unwrap_or(Z0Config::Named("ones".into()))
            .resolve(&problem)?;
        let steps = self.steps.unwrap_or(1000);
        if steps == 0 {
            return Err(Error::usage("steps must be at least 1"));
        }
        let record_every = self.record_every.unwrap_or(1);
        if record_every == 0 {
            return Err(Error::usage("record_every must be at least 1"));
        }
        let checks = match &self.checks {
            None => Vec::new(),
            Some(c) => c.resolve()?,
        };
        Ok(Experiment {
            problem,
            schedule,
            z0,
            steps,
            record_every,
            checks,
            seed: self.seed.unwrap_or(0),
            out: self.out.clone(),
            report: self.report.clone(),
        })
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        match self {
            ProblemConfig::Descriptor(s) => ProblemSpec::parse(s),
            ProblemConfig::Inline(p) => {
                let mat = |rows: &[Vec<f64>], name: &str| {
                    Matrix::from_rows(rows).ok_or_else(|| {
                        Error::usage(format!("matrix '{name}' must be non-empty and rectangular"))
                    })
                };
                let a = mat(&p.a, "a")?;
                let mut problem = match p.kind {
                    ProblemKind::Bilinear => {
                        if p.p.is_some() || p.q.is_some() {
                            return Err(Error::usage("bilinear problems take no 'p' or 'q'"));
                        }
                        ProblemSpec::bilinear(a)?
                    }
                    ProblemKind::QuadraticSaddle => {
                        let (n, m) = (a.rows(), a.cols());
                        let pm = match &p.p {
                            Some(rows) => mat(rows, "p")?,
                            None => Matrix::zeros(n, n),
                        };
                        let qm = match &p.q {
                            Some(rows) => mat(rows, "q")?,
                            None => Matrix::zeros(m, m),
                        };
                        ProblemSpec::quadratic_saddle(pm, qm, a)?
                    }
                };
                if let Some(k) = p.lipschitz {
                    problem = problem.with_declared_lipschitz(k)?;
                }
                if let Some(id) = &p.id {
                    problem = problem.with_id(id.clone());
                }
                Ok(problem)
            }
        }
    }
}

impl Z0Config {
    pub fn resolve(&self, problem: &ProblemSpec) -> Result<Point> {
        let d = problem.dim();
        let coords = match self {
            Z0Config::Named(s) => match s.trim() {
                "ones" => vec![1.0; d],
                "e1" => (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
                "saddle" => problem.saddle().coords().to_vec(),
                list => list
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::usage(format!("bad z0 '{s}'; expected ones, e1, saddle or numbers")))
                    })
                    .collect::<Result<_>>()?,
            },
            Z0Config::Values(v) => v.clone(),
        };
        if coords.len() != d {
            return Err(Error::usage(format!(
                "z0 has {} coordinates, problem dimension is {d}",
                coords.len()
            )));
        }
        Point::new(coords, problem.n())
    }
}

impl ChecksConfig {
    pub fn resolve(&self) -> Result<Vec<String>> {
        let list: Vec<String> = match self {
            ChecksConfig::Named(s) if s.trim() == "all" => return Ok(Vec::new()),
            ChecksConfig::Named(s) => s.split(',').map(|c| c.trim().to_string()).collect(),
            ChecksConfig::List(v) => v.clone(),
        };
        for c in &list {
            if !names::ALL.contains(&c.as_str()) {
                return Err(Error::usage(format!(
                    "unknown check '{c}'; known: {}",
                    names::ALL.join(", ")
                )));
            }
        }
        Ok(list)
    }
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: ProblemSpec,
    pub schedule: Schedule,
    pub z0: Point,
    pub steps: usize,
    pub record_every: usize,
    /// Empty means all checks.
    pub checks: Vec<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Sweep axes; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub steps: Vec<usize>,
    pub parallelism: Option<usize>,
    pub cap: Option<usize>,
}

pub const DEFAULT_SWEEP_CAP: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub base: ExperimentConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::usage(format!("sweep config: {e}")))
    }

    pub fn cell_count(&self) -> usize {
        [self.sweep.gamma.len(), self.sweep.p.len(), self.sweep.steps.len()]
            .iter()
            .map(|&n| n.max(1))
            .product()
    }
}

/// Resolve a relative output path against `$AGDA_OUT_DIR` when set.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_resolves() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            problem = "bilinear:n=1,m=1,a=1"
            schedule = "anchored-new:gamma=2"
            z0 = "ones"
            steps = 10
            record_every = 2
            checks = "one_step,bounded_iterates"
            "#,
        )
        .unwrap();
        let e = cfg.resolve().unwrap();
        assert_eq!(e.z0.coords(), &[1.0, 1.0]);
        assert_eq!(e.checks, vec!["one_step", "bounded_iterates"]);
        assert_eq!(e.schedule.lipschitz(), 1.0);
    }

    #[test]
    fn inline_problem_resolves() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            schedule = "anchored-new:gamma=2"
            z0 = [1.0, 2.0]
            [problem]
            kind = "quadratic-saddle"
            a = [[1.0]]
            p = [[1.0]]
            q = [[1.0]]
            "#,
        )
        .unwrap();
        let e = cfg.resolve().unwrap();
        let g = e.problem.eval_operator(&e.z0).unwrap();
        assert_eq!(g.coords(), &[3.0, 1.0]);
    }

    #[test]
    fn flags_override_file() {
        let file = ExperimentConfig {
            steps: Some(10),
            seed: Some(1),
            ..Default::default()
        };
        let flags = ExperimentConfig {
            steps: Some(20),
            ..Default::default()
        };
        let m = file.merged(flags);
        assert_eq!(m.steps, Some(20));
        assert_eq!(m.seed, Some(1));
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let base = ExperimentConfig {
            problem: Some(ProblemConfig::Descriptor("bilinear:n=1,m=1,a=1".into())),
            schedule: Some("anchored-new:gamma=2".into()),
            ..Default::default()
        };
        for bad in [
            ExperimentConfig { steps: Some(0), ..base.clone() },
            ExperimentConfig { record_every: Some(0), ..base.clone() },
            ExperimentConfig { z0: Some(Z0Config::Values(vec![1.0])), ..base.clone() },
            ExperimentConfig { checks: Some(ChecksConfig::Named("bogus".into())), ..base.clone() },
            ExperimentConfig { schedule: Some("anchored-new:gamma=1".into()), ..base.clone() },
        ] {
            assert!(matches!(bad.resolve(), Err(Error::Usage(_))), "{bad:?}");
        }
        assert!(ExperimentConfig::from_toml("stepz = 3").is_err());
    }

    #[test]
    fn z0_presets() {
        let p = ProblemSpec::parse("bilinear:n=2,m=1,a=1").unwrap();
        let named = |s: &str| Z0Config::Named(s.into()).resolve(&p).unwrap().into_coords();
        assert_eq!(named("ones"), vec![1.0; 3]);
        assert_eq!(named("e1"), vec![1.0, 0.0, 0.0]);
        assert_eq!(named("saddle"), vec![0.0; 3]);
        assert_eq!(named("1, 2,3"), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sweep_cell_count() {
        let s = SweepConfig::from_toml(
            r#"
            problem = "bilinear:n=1,m=1,a=1"
            schedule = "anchored-ryu:p=0.75,gamma=2"
            [sweep]
            gamma = [2.0, 4.0]
            p = [0.6, 0.75, 0.9]
            "#,
        )
        .unwrap();
        assert_eq!(s.cell_count(), 6);
        assert_eq!(SweepConfig::default().cell_count(), 1);
    }
}
