use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, ParamStore};
use crate::data::ColumnRoles;
use crate::encoders::EncoderSpec;
use crate::error::{Error, Result};
use crate::glm::{LikelihoodSpec, RegularizationSpec};
use crate::nonparametric::{Coupling, PseudoContext};
use crate::training::{BootstrapEnsemble, FitReport, FittedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl ParamRecord {
    fn from_matrix(name: &str, m: &Matrix) -> Self {
        Self {
            name: name.into(),
            shape: [m.rows(), m.cols()],
            values: m.data().to_vec(),
        }
    }

    fn to_matrix(&self) -> Result<Matrix> {
        Matrix::new(self.shape[0], self.shape[1], self.values.clone())
            .map_err(|_| Error::Data(format!("parameter `{}` values do not match shape {:?}", self.name, self.shape)))
    }
}

/// Deterministic subset of [`FitReport`] (wall time excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSummary {
    pub stopping_epoch: usize,
    pub best_epoch: usize,
    pub initial_train_nll: f64,
    pub final_train_nll: f64,
    pub final_penalty: f64,
    pub final_train_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
}

impl ReportSummary {
    fn from_report(r: &FitReport) -> Self {
        Self {
            stopping_epoch: r.stopping_epoch,
            best_epoch: r.best_epoch,
            initial_train_nll: r.initial_train_nll,
            final_train_nll: r.final_train_nll,
            final_penalty: r.final_penalty,
            final_train_loss: r.train_loss.last().copied(),
            best_val_loss: r.val_loss.iter().copied().reduce(f64::min),
        }
    }

    /// Loss curves are not stored; the summarised endpoints come back as
    /// one-entry curves so a reloaded model saves to the same file.
    fn to_report(&self) -> FitReport {
        FitReport {
            train_loss: self.final_train_loss.into_iter().collect(),
            val_loss: self.best_val_loss.into_iter().collect(),
            stopping_epoch: self.stopping_epoch,
            best_epoch: self.best_epoch,
            initial_train_nll: self.initial_train_nll,
            final_train_nll: self.final_train_nll,
            final_penalty: self.final_penalty,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoRecord {
    pub d_z: usize,
    pub base_context_dim: usize,
    pub coupling: Coupling,
    pub draws: ParamRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub encoder: EncoderSpec,
    pub likelihood: LikelihoodSpec,
    pub regularization: RegularizationSpec,
    pub roles: ColumnRoles,
    pub seed: u64,
    pub report: ReportSummary,
    pub params: Vec<ParamRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo: Option<PseudoRecord>,
}

impl ModelRecord {
    pub fn from_model(m: &FittedModel) -> Self {
        Self {
            encoder: m.encoder.clone(),
            likelihood: m.likelihood.clone(),
            regularization: m.regularization.clone(),
            roles: m.roles.clone(),
            seed: m.seed,
            report: ReportSummary::from_report(&m.report),
            params: m.params.ids().map(|id| ParamRecord::from_matrix(m.params.name(id), m.params.value(id))).collect(),
            pseudo: m.pseudo.as_ref().map(|p| PseudoRecord {
                d_z: p.d_z,
                base_context_dim: p.base_context_dim,
                coupling: p.coupling,
                draws: ParamRecord::from_matrix("draws", &p.draws),
            }),
        }
    }

    pub fn to_model(&self) -> Result<FittedModel> {
        let mut params = ParamStore::new();
        for r in &self.params {
            params.insert(r.name.clone(), r.to_matrix()?);
        }
        // shapes must match what the encoder expects
        let template = self.encoder.init_params(0)?;
        for id in template.ids() {
            let name = template.name(id);
            match params.get(name) {
                Some(v) if v.shape() == template.value(id).shape() => {}
                _ => return Err(Error::Data(format!("model file lacks a well-shaped parameter `{name}`"))),
            }
        }
        let pseudo = match &self.pseudo {
            Some(p) => Some(PseudoContext {
                d_z: p.d_z,
                base_context_dim: p.base_context_dim,
                coupling: p.coupling,
                draws: p.draws.to_matrix()?,
            }),
            None => None,
        };
        Ok(FittedModel {
            encoder: self.encoder.clone(),
            likelihood: self.likelihood.clone(),
            regularization: self.regularization.clone(),
            params,
            report: self.report.to_report(),
            roles: self.roles.clone(),
            seed: self.seed,
            pseudo,
        })
    }
}

/// Versioned JSON model file holding one model or a bootstrap ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub members: Vec<ModelRecord>,
    /// `[lower, upper]` percentiles; present for ensembles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
}

/// What a model file deserializes into.
#[derive(Clone, Debug)]
pub enum LoadedModel {
    Single(FittedModel),
    Ensemble(BootstrapEnsemble),
}

impl LoadedModel {
    pub fn primary(&self) -> &FittedModel {
        match self {
            LoadedModel::Single(m) => m,
            LoadedModel::Ensemble(e) => &e.members[0],
        }
    }
}

impl ModelFile {
    pub fn from_model(m: &FittedModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            members: vec![ModelRecord::from_model(m)],
            interval: None,
        }
    }

    pub fn from_ensemble(e: &BootstrapEnsemble) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            members: e.members.iter().map(ModelRecord::from_model).collect(),
            interval: Some([e.lower_percentile, e.upper_percentile]),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("model file is not valid JSON: {e}")))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Data("model file has no format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                supported: FORMAT_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Data(format!("malformed model file: {e}")))?;
        if file.members.is_empty() {
            return Err(Error::Data("model file holds no models".into()));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<LoadedModel> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read model file {}: {e}", path.display())))?;
        Self::from_json(&text)?.into_model()
    }

    pub fn into_model(self) -> Result<LoadedModel> {
        let members = self.members.iter().map(ModelRecord::to_model).collect::<Result<Vec<_>>>()?;
        Ok(match self.interval {
            Some([lo, hi]) => LoadedModel::Ensemble(BootstrapEnsemble::from_members(members, lo, hi)?),
            None if members.len() == 1 => LoadedModel::Single(members.into_iter().next().expect("one member")),
            None => return Err(Error::Data("multiple models without an interval specification".into())),
        })
    }
}
