use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::data::{ColumnRoles, Dataset};
use crate::encoders::{EncoderKind, EncoderSpec, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::glm::{Family, LikelihoodSpec, RegularizationSpec};
use crate::nonparametric::PseudoConfig;
use crate::training::TrainConfig;

/// Where the training data lives: one combined CSV with role lists, or
/// separate context / predictor / outcome files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub context: Vec<String>,
    #[serde(default)]
    pub predictors: Vec<String>,
    #[serde(default)]
    pub outcome: Option<String>,
    #[serde(default)]
    pub context_csv: Option<PathBuf>,
    #[serde(default)]
    pub predictors_csv: Option<PathBuf>,
    #[serde(default)]
    pub outcome_csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    #[serde(alias = "encoder_type")]
    pub kind: EncoderKind,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub archetypes: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Mlp,
            hidden_layers: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Relu,
            archetypes: 0,
        }
    }
}

impl EncoderConfig {
    pub fn spec(&self, context_dim: usize, output_dim: usize) -> EncoderSpec {
        EncoderSpec {
            kind: self.kind,
            context_dim,
            output_dim,
            hidden_layers: if self.kind == EncoderKind::Linear { Vec::new() } else { self.hidden_layers.clone() },
            activation: self.activation,
            archetypes: self.archetypes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LikelihoodConfig {
    pub family: Family,
    pub mixture_count: usize,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            family: Family::Gaussian,
            mixture_count: 2,
        }
    }
}

impl LikelihoodConfig {
    pub fn spec(&self) -> LikelihoodSpec {
        let mut s = LikelihoodSpec::new(self.family);
        if self.family == Family::MixtureGaussian {
            s.mixture_count = self.mixture_count;
        }
        s
    }
}

/// A complete `fit` / `atoms` run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub likelihood: LikelihoodConfig,
    #[serde(default)]
    pub regularization: RegularizationSpec,
    #[serde(default)]
    pub training: TrainConfig,
    /// Enables pseudo-sampled noise context (forces `hetero_gaussian`).
    #[serde(default)]
    pub pseudo: Option<PseudoConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Directory relative paths are resolved against (the config file's).
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        let triplet = [&d.context_csv, &d.predictors_csv, &d.outcome_csv];
        match (&d.csv, triplet.iter().filter(|p| p.is_some()).count()) {
            (Some(_), 0) => {
                if d.context.is_empty() || d.predictors.is_empty() || d.outcome.is_none() {
                    return Err(Error::Config(
                        "data.csv requires non-empty data.context, data.predictors and data.outcome".into(),
                    ));
                }
            }
            (None, 3) => {}
            _ => {
                return Err(Error::Config(
                    "data needs either `csv` with role lists or all of context_csv, predictors_csv, outcome_csv".into(),
                ))
            }
        }
        self.regularization.validate()?;
        self.training.validate()?;
        self.likelihood.spec().validate()
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        match &d.csv {
            Some(csv) => {
                let roles = ColumnRoles {
                    context: d.context.clone(),
                    predictors: d.predictors.clone(),
                    outcome: d.outcome.clone().unwrap_or_default(),
                };
                Dataset::from_csv(&self.resolve(csv), &roles)
            }
            None => {
                let get = |p: &Option<PathBuf>| self.resolve(p.as_deref().unwrap_or(Path::new("")));
                Dataset::from_csv_triplet(&get(&d.context_csv), &get(&d.predictors_csv), &get(&d.outcome_csv))
            }
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.as_deref().map(|p| self.resolve(p)).unwrap_or_else(|| PathBuf::from("."))
    }
}
