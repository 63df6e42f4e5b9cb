//! Experiment configuration files.

use std::fmt;
use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density::{MethodChoice, Perturbation, QuerySpec};
use crate::error::{Error, Result};
use crate::euler::SECOND_VARIATION_CAP;
use crate::models::ModelSpec;
use crate::weights::CutoffSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    StrongRate,
    DerivativeRate,
    IbpCheck,
    DensityRate,
    HolderNorm,
    EllipticityCheck,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::StrongRate,
        Self::DerivativeRate,
        Self::IbpCheck,
        Self::DensityRate,
        Self::HolderNorm,
        Self::EllipticityCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::StrongRate => "strong-rate",
            Self::DerivativeRate => "derivative-rate",
            Self::IbpCheck => "ibp-check",
            Self::DensityRate => "density-rate",
            Self::HolderNorm => "holder-norm",
            Self::EllipticityCheck => "ellipticity-check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pass/fail thresholds for `--check`; unset fields take per-experiment
/// defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Admissible range of the fitted log-log slope.
    pub slope_range: Option<[f64; 2]>,
    pub min_r_squared: Option<f64>,
    /// Admissible slope of the mean maximal squared cell increment.
    pub increment_slope_range: Option<[f64; 2]>,
    /// Largest admissible standardized deviation of a density estimate.
    pub max_z: Option<f64>,
    /// Relative tolerance of the density at the mean.
    pub center_rel_tol: Option<f64>,
    pub min_theta: Option<f64>,
    /// `min det Sigma` must exceed this multiple of `c T`.
    pub det_factor: Option<f64>,
}

/// One experiment. Which optional fields are required depends on
/// `experiment`; see the schema in `schema/experiment.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelSpec,
    /// Time horizon `T`.
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    pub num_paths: u64,
    /// Coarse step counts (strong-rate, derivative-rate, holder-norm ladder)
    /// or levels `n` with `4^n` steps (density-rate).
    #[serde(default)]
    pub levels: Vec<u64>,
    /// Reference step count of the strong and derivative studies, or the
    /// fine grid of the holder-norm ladder.
    #[serde(default)]
    pub fine_n: Option<usize>,
    #[serde(default)]
    pub reference_level: Option<u32>,
    /// Grid for ibp-check, ellipticity-check and shift perturbations.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub query: QuerySpec,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub cross_check_paths: u64,
    #[serde(default = "default_cap")]
    pub second_variation_cap: usize,
    /// Paths for the high-precision density at the mean in ibp-check.
    #[serde(default)]
    pub center_paths: Option<u64>,
    /// Perturbations `eps` for a shifted holder-norm ladder; when absent the
    /// ladder compares `X_fine` with `X_n` for `n` in `levels`.
    #[serde(default)]
    pub shifts: Option<Vec<f64>>,
    #[serde(default)]
    pub cutoff: CutoffSpec,
    #[serde(default)]
    pub check: Thresholds,
    /// Not part of the config hash.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Not part of the config hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_p() -> f64 {
    2.0
}

fn default_betas() -> Vec<f64> {
    vec![0.0]
}

fn default_cap() -> usize {
    SECOND_VARIATION_CAP
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON form without `workers` and `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = None;
        canonical.output_dir = None;
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub(crate) fn fine_n(&self) -> Result<usize> {
        self.fine_n
            .ok_or_else(|| Error::Config(format!("{} needs \"fine_n\"", self.experiment)))
    }

    pub(crate) fn steps(&self) -> Result<usize> {
        self.steps
            .ok_or_else(|| Error::Config(format!("{} needs \"steps\"", self.experiment)))
    }

    pub(crate) fn scalar_x0(&self) -> Result<f64> {
        match self.x0.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Config(format!(
                "{} needs a scalar initial value, got {} components",
                self.experiment,
                self.x0.len()
            ))),
        }
    }

    pub(crate) fn levels_usize(&self) -> Result<Vec<usize>> {
        if self.levels.is_empty() {
            return Err(Error::Config(format!("{} needs \"levels\"", self.experiment)));
        }
        self.levels
            .iter()
            .map(|&l| usize::try_from(l).map_err(|_| Error::Config(format!("level {l} is too large"))))
            .collect()
    }

    pub(crate) fn perturbation(&self) -> Result<Perturbation> {
        match &self.shifts {
            Some(shifts) => Ok(Perturbation::Shift {
                steps: self.steps()?,
                shifts: shifts.clone(),
            }),
            None => Ok(Perturbation::Ladder {
                fine_n: self.fine_n()?,
                coarse: self.levels_usize()?,
            }),
        }
    }
}

/// JSON schema of [`ExperimentConfig`].
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ExperimentConfig)).expect("schema serializes")
}
