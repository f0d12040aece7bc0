use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emptywave_core::circuit::CoherenceMode;
use emptywave_core::experiments::{ExperimentName, Model, Params, SweepParam};

pub const SAMPLES_ENV: &str = "EMPTYWAVE_SAMPLES";
pub const DEFAULT_SAMPLES: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// `delta_theta` is either a number or the word `uniform`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSetting {
    Value(f64),
    Named(ThetaName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaName {
    Uniform,
}

impl ThetaSetting {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("uniform") {
            return Ok(Self::Named(ThetaName::Uniform));
        }
        s.parse::<f64>()
            .map(Self::Value)
            .map_err(|_| format!("expected a number or \"uniform\", got {s:?}"))
    }

    pub fn mode(self) -> CoherenceMode {
        match self {
            Self::Value(v) => CoherenceMode::Fixed(v),
            Self::Named(ThetaName::Uniform) => CoherenceMode::UniformRandom,
        }
    }
}

impl fmt::Display for ThetaSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Value(v) => write!(f, "{v}"),
            Self::Named(ThetaName::Uniform) => f.write_str("uniform"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamConfig {
    pub delta_theta: ThetaSetting,
    pub delta_phi: f64,
    pub tau: f64,
    pub alpha: f64,
    pub sigma: f64,
}

impl Default for ParamConfig {
    fn default() -> Self {
        let p = Params::default();
        Self {
            delta_theta: ThetaSetting::Value(0.0),
            delta_phi: p.delta_phi,
            tau: p.tau,
            alpha: p.alpha,
            sigma: p.sigma,
        }
    }
}

impl ParamConfig {
    pub fn params(&self) -> Params {
        Params {
            delta_theta: self.delta_theta.mode(),
            delta_phi: self.delta_phi,
            tau: self.tau,
            alpha: self.alpha,
            sigma: self.sigma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

/// Everything a run needs. Files are TOML; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentName,
    #[serde(default = "all_models")]
    pub models: Vec<Model>,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analytic: bool,
    #[serde(default = "csv_format")]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: ParamConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn all_models() -> Vec<Model> {
    Model::ALL.to_vec()
}

fn csv_format() -> Format {
    Format::Csv
}

impl RunConfig {
    pub fn new(experiment: ExperimentName) -> Self {
        Self {
            experiment,
            models: all_models(),
            samples: None,
            seed: 0,
            analytic: false,
            format: Format::Csv,
            out: None,
            params: ParamConfig::default(),
            sweep: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Explicit value, else the environment override, else the default.
    pub fn resolve_samples(&mut self) -> Result<u64, String> {
        let n = match self.samples {
            Some(n) => n,
            None => match std::env::var(SAMPLES_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| format!("{SAMPLES_ENV}={v:?} is not a sample count"))?,
                Err(_) => DEFAULT_SAMPLES,
            },
        };
        if n == 0 {
            return Err("samples must be at least 1".into());
        }
        self.samples = Some(n);
        Ok(n)
    }
}
