//! End-to-end gradient training of encoder and likelihood.

mod adam;
mod bootstrap;
mod fit;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use bootstrap::{bootstrap_fit, percentile, BootstrapEnsemble, EnsemblePrediction};
pub use fit::{fit, mean_nll, FitReport, FittedModel, Prediction, LOG_VARIANCE_PARAM};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Minibatch size used when the training set is larger than `FULL_BATCH_LIMIT`.
pub const DEFAULT_BATCH_SIZE: usize = 256;
pub const FULL_BATCH_LIMIT: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// Fraction of rows held out for early stopping.
    pub val_split: f64,
    /// `None` picks full-batch up to 1024 training rows, else 256.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub patience: usize,
    pub early_stopping: bool,
    /// Probability of zeroing each context coordinate during training.
    pub context_dropout: f64,
    pub n_bootstraps: usize,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
    /// Worker threads for bootstrap trajectories.
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            learning_rate: 1e-3,
            val_split: 0.2,
            batch_size: None,
            seed: 0,
            patience: 10,
            early_stopping: true,
            context_dropout: 0.0,
            n_bootstraps: 1,
            lower_percentile: 5.0,
            upper_percentile: 95.0,
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.val_split > 0.0 && self.val_split < 1.0) {
            return bad(format!("val_split must lie in (0, 1), got {}", self.val_split));
        }
        if !(0.0..1.0).contains(&self.context_dropout) {
            return bad(format!("context_dropout must lie in [0, 1), got {}", self.context_dropout));
        }
        if self.n_bootstraps == 0 {
            return bad("n_bootstraps must be >= 1".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be >= 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        let (lo, hi) = (self.lower_percentile, self.upper_percentile);
        if !(0.0 <= lo && lo <= hi && hi <= 100.0) {
            return bad(format!("interval percentiles must satisfy 0 <= {lo} <= {hi} <= 100"));
        }
        Ok(())
    }

    pub(crate) fn batch_size_for(&self, n_train: usize) -> usize {
        match self.batch_size {
            Some(b) => b,
            None if n_train <= FULL_BATCH_LIMIT => n_train.max(1),
            None => DEFAULT_BATCH_SIZE,
        }
    }
}

/// Independent random stream `stream` derived from `seed`.
pub(crate) fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const STREAM_SPLIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_DROPOUT: u64 = 3;
pub(crate) const STREAM_BOOTSTRAP: u64 = 4;
pub(crate) const STREAM_ANCHORS: u64 = 5;
pub(crate) const STREAM_KMEANS: u64 = 6;
pub(crate) const STREAM_PSEUDO: u64 = 7;

/// Seeded disjoint `(train, validation)` row indices, each in ascending order.
pub fn split_indices(n: usize, val_split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 rows to split, got {n}")));
    }
    if !(val_split > 0.0 && val_split < 1.0) {
        return Err(Error::Config(format!("val_split must lie in (0, 1), got {val_split}")));
    }
    let n_val = ((n as f64 * val_split).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_stream(seed, STREAM_SPLIT));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

pub fn split(dataset: &Dataset, val_split: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(dataset.n(), val_split, seed)?;
    Ok((dataset.select(&train), dataset.select(&val)))
}
