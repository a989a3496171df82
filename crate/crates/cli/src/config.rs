//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use cmjvax::policy::DEFAULT_RESOLUTION;
use cmjvax::{Functional, PolicyFamily, PolicyQuery, PolicyTarget, ReproductionLaw, SimCaps, TimeUnit, VaccinationFunction};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub law: ReproductionLaw,
    #[serde(default)]
    pub caps: SimCaps,
    #[serde(default = "one")]
    pub initials: usize,
    pub functional: Option<Functional>,
    #[serde(default)]
    pub unit: TimeUnit,
    pub replicates: usize,
    /// Overridden by `--seed`.
    pub seed: Option<u64>,
    #[serde(default)]
    pub alphas: Vec<VaccinationFunction>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    /// Confidence level `1 - delta` of the reported CDF band.
    #[serde(default = "default_band_delta")]
    pub band_delta: f64,
    pub policy: Option<PolicyConfig>,
    pub sensitivity: Option<SensitivityConfig>,
    /// Overridden by `--out`.
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub dump_trees: bool,
    #[serde(default = "yes")]
    pub cache_trees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "constant_family")]
    pub family: PolicyFamily,
    pub target: PolicyTarget,
    #[serde(default = "one_u32")]
    pub z: u32,
    #[serde(default = "default_resolution")]
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub means: Vec<f64>,
    pub shapes: Vec<f64>,
    #[serde(default = "default_window")]
    pub window: [f64; 2],
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

fn yes() -> bool {
    true
}

fn default_quantiles() -> Vec<f64> {
    vec![0.5, 0.9, 0.99]
}

fn default_band_delta() -> f64 {
    0.05
}

fn constant_family() -> PolicyFamily {
    PolicyFamily::Constant
}

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

fn default_window() -> [f64; 2] {
    [12.0, 25.0]
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CliError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked before simulating.
    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &str, r: cmjvax::Result<()>| r.map_err(|e| CliError::Config(format!("`{key}`: {e}")));
        wrap("law", self.law.validate())?;
        wrap("caps", self.caps.validate())?;
        if self.initials == 0 {
            return invalid("`initials` must be >= 1");
        }
        if self.replicates == 0 {
            return invalid("`replicates` must be >= 1");
        }
        for (j, alpha) in self.alphas.iter().enumerate() {
            wrap(&format!("alphas[{j}]"), alpha.validate())?;
        }
        if let Some(p) = self.quantiles.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return invalid(format!("`quantiles`: order {p} not in (0, 1)"));
        }
        if !(self.band_delta > 0.0 && self.band_delta < 1.0) {
            return invalid("`band_delta` must lie in (0, 1)");
        }
        if let Some(f) = self.functional {
            match f {
                Functional::DurationExclIncubation if self.initials != 1 => {
                    return invalid("`functional = \"Ttilde\"` requires `initials = 1`");
                }
                Functional::BirthsBy(t) if t > self.caps.horizon => {
                    return invalid(format!("`functional`: N(t) at t = {t} lies beyond `caps.horizon` = {}", self.caps.horizon));
                }
                _ => {}
            }
        }
        if let Some(policy) = &self.policy {
            if !(policy.resolution > 0.0 && policy.resolution.is_finite()) {
                return invalid("`policy.resolution` must be > 0");
            }
            if policy.z > 1 && self.initials != 1 {
                return invalid("`policy.z` > 1 is computed from single-initial samples; set `initials = 1`");
            }
            if let Some(functional) = self.functional {
                wrap("policy", self.query_with(policy, functional).validate())?;
            }
            wrap("policy.family", policy.family.index_range(&self.law).map(|_| ()))?;
        }
        if let Some(s) = &self.sensitivity {
            if s.means.is_empty() || s.shapes.is_empty() {
                return invalid("`sensitivity` needs nonempty `means` and `shapes`");
            }
            if s.means.iter().chain(&s.shapes).any(|x| !(*x > 0.0 && x.is_finite())) {
                return invalid("`sensitivity` means and shapes must be > 0");
            }
            if !(s.window[0] >= 0.0 && s.window[1] > s.window[0]) {
                return invalid("`sensitivity.window` must satisfy 0 <= lo < hi");
            }
        }
        Ok(())
    }

    pub fn require_functional(&self) -> Result<Functional> {
        self.functional.ok_or_else(|| CliError::Config("missing key `functional`".into()))
    }

    pub fn require_policy(&self) -> Result<&PolicyConfig> {
        self.policy.as_ref().ok_or_else(|| CliError::Config("missing table `[policy]`".into()))
    }

    pub fn query(&self) -> Result<PolicyQuery> {
        Ok(self.query_with(self.require_policy()?, self.require_functional()?))
    }

    fn query_with(&self, policy: &PolicyConfig, functional: Functional) -> PolicyQuery {
        PolicyQuery { family: policy.family.clone(), target: policy.target.clone(), functional, z: policy.z, unit: self.unit }
    }
}
