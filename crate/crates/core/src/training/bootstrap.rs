use rand::Rng;
use rayon::prelude::*;

use super::{fit, rng_stream, FittedModel, TrainConfig, STREAM_BOOTSTRAP};
use crate::autodiff::Matrix;
use crate::data::Dataset;
use crate::encoders::EncoderSpec;
use crate::error::{Error, Result};
use crate::glm::{LikelihoodSpec, RegularizationSpec};

/// Independently fitted resampled models sharing one specification.
#[derive(Clone, Debug)]
pub struct BootstrapEnsemble {
    pub members: Vec<FittedModel>,
    /// Training row indices of each trajectory (with replacement).
    pub resample_indices: Vec<Vec<usize>>,
    pub lower_percentile: f64,
    pub upper_percentile: f64,
}

/// Pointwise ensemble summaries. Parameter matrices have one row per sample
/// and one column per flattened sample-model entry.
#[derive(Clone, Debug)]
pub struct EnsemblePrediction {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub param_mean: Matrix,
    pub param_lower: Matrix,
    pub param_upper: Matrix,
}

/// Percentile `q` in [0, 100] with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn resample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_stream(seed, STREAM_BOOTSTRAP);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fits `cfg.n_bootstraps` trajectories; trajectory `t` uses seed `seed + t`.
/// With `resample = false` every trajectory sees the original rows.
pub fn bootstrap_fit(
    dataset: &Dataset,
    encoder: &EncoderSpec,
    likelihood: &LikelihoodSpec,
    reg: &RegularizationSpec,
    cfg: &TrainConfig,
    resample_rows: bool,
) -> Result<BootstrapEnsemble> {
    cfg.validate()?;
    let n = dataset.n();
    let runs: Vec<(u64, Vec<usize>)> = (0..cfg.n_bootstraps as u64)
        .map(|t| {
            let seed = cfg.seed.wrapping_add(t);
            let idx = if resample_rows { resample(n, seed) } else { (0..n).collect() };
            (seed, idx)
        })
        .collect();
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()).min(runs.len()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let members = pool.install(|| {
        runs.par_iter()
            .map(|(seed, idx)| {
                let data = if resample_rows { dataset.select(idx) } else { dataset.clone() };
                let c = TrainConfig { seed: *seed, ..cfg.clone() };
                let mut m = fit(&data, encoder, likelihood, reg, &c)?;
                m.roles = dataset.roles.clone();
                Ok(m)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(BootstrapEnsemble {
        members,
        resample_indices: runs.into_iter().map(|(_, i)| i).collect(),
        lower_percentile: cfg.lower_percentile,
        upper_percentile: cfg.upper_percentile,
    })
}

impl BootstrapEnsemble {
    pub fn from_members(members: Vec<FittedModel>, lower_percentile: f64, upper_percentile: f64) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Config("an ensemble needs at least one member".into()))?;
        if members
            .iter()
            .any(|m| m.encoder != first.encoder || m.likelihood.family != first.likelihood.family)
        {
            return Err(Error::Config("ensemble members must share encoder and likelihood specs".into()));
        }
        Ok(Self {
            resample_indices: Vec::new(),
            members,
            lower_percentile,
            upper_percentile,
        })
    }

    pub fn predict(&self, context: &Matrix, predictors: &Matrix) -> Result<EnsemblePrediction> {
        let preds = self
            .members
            .iter()
            .map(|m| m.predict(context, predictors))
            .collect::<Result<Vec<_>>>()?;
        let n = context.rows();
        let width = preds[0].models.first().map_or(0, |s| s.flatten().len());
        let flat: Vec<Vec<Vec<f64>>> = preds
            .iter()
            .map(|p| p.models.iter().map(|s| s.flatten()).collect())
            .collect();
        let (lo, hi) = (self.lower_percentile, self.upper_percentile);
        let summarize = |vals: &[f64]| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (mean, percentile(vals, lo), percentile(vals, hi))
        };
        let mut out = EnsemblePrediction {
            mean: Vec::with_capacity(n),
            lower: Vec::with_capacity(n),
            upper: Vec::with_capacity(n),
            param_mean: Matrix::zeros(n, width),
            param_lower: Matrix::zeros(n, width),
            param_upper: Matrix::zeros(n, width),
        };
        for i in 0..n {
            let vals: Vec<f64> = preds.iter().map(|p| p.mean[i]).collect();
            let (m, l, u) = summarize(&vals);
            out.mean.push(m);
            out.lower.push(l);
            out.upper.push(u);
            for j in 0..width {
                let vals: Vec<f64> = flat.iter().map(|f| f[i][j]).collect();
                let (m, l, u) = summarize(&vals);
                out.param_mean.set(i, j, m);
                out.param_lower.set(i, j, l);
                out.param_upper.set(i, j, u);
            }
        }
        Ok(out)
    }

    /// The named trained parameter of every member.
    pub fn member_params(&self, name: &str) -> Result<Vec<Matrix>> {
        self.members
            .iter()
            .map(|m| {
                m.params
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::State(format!("no parameter named `{name}`")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 5.0);
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert!((percentile(&v, 10.0) - 1.4).abs() < 1e-12);
        assert_eq!(percentile(&[7.0], 95.0), 7.0);
    }

    #[test]
    fn resample_is_seeded() {
        assert_eq!(resample(20, 3), resample(20, 3));
        assert_ne!(resample(20, 3), resample(20, 4));
        assert!(resample(20, 3).iter().all(|&i| i < 20));
    }
}
