//! TOML run configuration.
//!
//! ```toml
//! [flow]
//! kind = "mmd_wgf"
//! tau = 0.1
//! steps = 200
//! seed = 7
//!
//! [kernel]
//! family = "gaussian"
//! sigma = 1.0
//!
//! [target]
//! kind = "empirical"
//! path = "target.csv"
//!
//! [init]
//! kind = "gaussian"
//! n = 100
//! mean = [2.0]
//! covariance = [[1.0]]
//!
//! [output]
//! record_every = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowKind};
use crate::kernel::KernelSpec;
use crate::measure::{ensemble_from_sampler, DiscreteMeasure, Ensemble, Target};
use crate::points::Points;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowSection,
    pub kernel: KernelSpec,
    pub target: TargetSpec,
    pub init: InitSpec,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub kind: FlowKind,
    pub tau: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub injection: usize,
    #[serde(default = "default_max_particles")]
    pub max_particles: usize,
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
    #[serde(default)]
    pub score_only_reaction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "one_usize")]
    pub record_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { record_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Mixture {
        components: Vec<GaussianSpec>,
        weights: Vec<f64>,
    },
    /// Atoms read from a CSV file with a header row; every column except
    /// `mass_column` is a coordinate. Relative paths resolve against the
    /// config file's directory.
    Empirical {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass_column: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Gaussian {
        n: usize,
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// `n` draws from the target itself.
    Target { n: usize },
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weight_column: Option<String>,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_max_particles() -> usize {
    5000
}

fn default_reference_samples() -> usize {
    500
}

/// A validated configuration with its target and initial ensemble built.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub flow: FlowConfig,
    pub target: Target,
    pub init: Ensemble,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let de = toml::Deserializer::parse(text).map_err(|e| parse_err(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            parse_err(format!("at `{field}`: {}", e.into_inner().message()))
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn flow_config(&self) -> FlowConfig {
        let f = &self.flow;
        FlowConfig {
            kind: f.kind,
            tau: f.tau,
            alpha: f.alpha,
            beta: f.beta,
            steps: f.steps,
            kernel: self.kernel,
            seed: f.seed,
            injection: f.injection,
            max_particles: f.max_particles,
            reference_samples: f.reference_samples,
            record_every: self.output.record_every,
            score_only_reaction: f.score_only_reaction,
        }
    }

    /// Builds the target; CSV paths resolve against `base`.
    pub fn build_target(&self, base: &Path) -> Result<Target> {
        match &self.target {
            TargetSpec::Gaussian { mean, covariance } => {
                Target::gaussian(mean.clone(), covariance.clone())
            }
            TargetSpec::Mixture {
                components,
                weights,
            } => Target::mixture(
                components
                    .iter()
                    .map(|c| (c.mean.clone(), c.covariance.clone()))
                    .collect(),
                weights.clone(),
            ),
            TargetSpec::Empirical { path, mass_column } => {
                let (atoms, masses) = read_weighted_csv(&base.join(path), mass_column.as_deref())?;
                let masses = masses.unwrap_or_else(|| vec![1.0; atoms.len()]);
                Ok(Target::empirical(DiscreteMeasure::new(atoms, masses)?))
            }
        }
    }

    pub fn build_init(&self, target: &Target, base: &Path) -> Result<Ensemble> {
        let seed = self.flow.seed;
        match &self.init {
            InitSpec::Gaussian {
                n,
                mean,
                covariance,
            } => ensemble_from_sampler(
                &Target::gaussian(mean.clone(), covariance.clone())?,
                *n,
                seed,
            ),
            InitSpec::Target { n } => ensemble_from_sampler(target, *n, seed),
            InitSpec::Csv {
                path,
                weight_column,
            } => {
                let (positions, weights) =
                    read_weighted_csv(&base.join(path), weight_column.as_deref())?;
                match weights {
                    Some(w) => Ensemble::from_unnormalized(positions, w),
                    None => Ensemble::uniform(positions),
                }
            }
        }
    }
}

/// Reads, validates and materializes a run configuration.
pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path)?;
    let config = RunConfig::from_toml(&text, path)?;
    let flow = config.flow_config();
    flow.validate()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let target = config.build_target(base)?;
    flow.validate_for(&target)?;
    let init = config.build_init(&target, base)?;
    if init.dim() != target.dim() {
        return Err(Error::Config(format!(
            "init has dimension {} but the target has dimension {}",
            init.dim(),
            target.dim()
        )));
    }
    Ok(LoadedConfig {
        config,
        flow,
        target,
        init,
    })
}

fn read_weighted_csv(
    path: &Path,
    weight_column: Option<&str>,
) -> Result<(Points, Option<Vec<f64>>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let weight_idx = match weight_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("no column named `{name}`"),
                })?,
        ),
        None => None,
    };
    let dim = headers.len() - usize::from(weight_idx.is_some());
    if dim == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "no coordinate columns".into(),
        });
    }
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("row {}: `{field}` is not a number", line + 1),
            })?;
            if Some(j) == weight_idx {
                weights.push(v);
            } else {
                coords.push(v);
            }
        }
    }
    let points = Points::from_flat(coords, dim)?;
    Ok((points, weight_idx.map(|_| weights)))
}
