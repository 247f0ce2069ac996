use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng_stream, split_indices, Adam, TrainConfig, STREAM_DROPOUT, STREAM_SHUFFLE};
use crate::autodiff::{Matrix, ParamStore, Tape, Var};
use crate::data::{ColumnRoles, Dataset};
use crate::encoders::EncoderSpec;
use crate::error::{Error, Result};
use crate::glm::{self, Family, LikelihoodSpec, RegularizationSpec, SampleModel};
use crate::nonparametric::PseudoContext;

pub const LOG_VARIANCE_PARAM: &str = "likelihood.log_variance";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean minibatch objective (nll + penalty) per epoch.
    pub train_loss: Vec<f64>,
    /// Validation nll per epoch (penalty excluded); empty without a validation set.
    pub val_loss: Vec<f64>,
    pub stopping_epoch: usize,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub final_penalty: f64,
    pub initial_train_nll: f64,
    pub final_train_nll: f64,
    #[serde(default)]
    pub wall_time_secs: f64,
}

/// A trained contextualized model. Immutable after [`fit`].
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub encoder: EncoderSpec,
    pub likelihood: LikelihoodSpec,
    pub regularization: RegularizationSpec,
    pub params: ParamStore,
    pub report: FitReport,
    pub roles: ColumnRoles,
    pub seed: u64,
    pub pseudo: Option<PseudoContext>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    /// `E[Y | x, c]` per row.
    pub mean: Vec<f64>,
    pub models: Vec<SampleModel>,
}

struct Batch<'a> {
    context: Matrix,
    predictors: &'a Matrix,
    outcome: &'a [f64],
}

fn record_loss(
    tape: &mut Tape,
    encoder: &EncoderSpec,
    likelihood: &LikelihoodSpec,
    store: &ParamStore,
    batch: &Batch<'_>,
    reg: Option<&RegularizationSpec>,
) -> Result<(Var, Option<Var>)> {
    let c = tape.constant(batch.context.clone());
    let out = encoder.forward(tape, store, c)?;
    let lv = match store.id(LOG_VARIANCE_PARAM) {
        Some(id) if likelihood.has_global_variance() => Some(tape.param(store, id)),
        _ => None,
    };
    let per_sample = glm::nll_tape(tape, out.output, batch.predictors, batch.outcome, likelihood, lv)?;
    let mean = tape.mean(per_sample);
    let pen = match reg {
        Some(r) => glm::penalty_tape(tape, out.output, batch.predictors.cols(), likelihood, r)?,
        None => None,
    };
    let total = match pen {
        Some(p) => tape.add(mean, p)?,
        None => mean,
    };
    Ok((total, pen))
}

/// Mean negative log-likelihood of `data` under the given parameters.
pub fn mean_nll(encoder: &EncoderSpec, likelihood: &LikelihoodSpec, store: &ParamStore, data: &Dataset) -> Result<f64> {
    let mut tape = Tape::new();
    let batch = Batch {
        context: data.context.clone(),
        predictors: &data.predictors,
        outcome: &data.outcome,
    };
    let (loss, _) = record_loss(&mut tape, encoder, likelihood, store, &batch, None)?;
    Ok(tape.value(loss).get(0, 0))
}

fn check_compatible(data: &Dataset, encoder: &EncoderSpec, likelihood: &LikelihoodSpec) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::Data("dataset has no rows".into()));
    }
    if data.context_dim() != encoder.context_dim {
        return Err(Error::Config(format!(
            "encoder expects {} context columns, dataset has {}",
            encoder.context_dim,
            data.context_dim()
        )));
    }
    let want = likelihood.output_dim(data.predictor_dim());
    if encoder.output_dim != want {
        return Err(Error::Config(format!(
            "encoder output_dim is {}, the likelihood needs {want} for {} predictors",
            encoder.output_dim,
            data.predictor_dim()
        )));
    }
    if likelihood.family == Family::Bernoulli {
        if let Some((i, y)) = data.outcome.iter().enumerate().find(|(_, &y)| y != 0.0 && y != 1.0) {
            return Err(Error::Data(format!("row {}: bernoulli outcome must be 0 or 1, got {y}", i + 1)));
        }
    }
    Ok(())
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn apply_dropout(context: &mut Matrix, rate: f64, rng: &mut impl Rng) {
    if rate <= 0.0 {
        return;
    }
    let keep = 1.0 / (1.0 - rate);
    for v in context.data_mut() {
        if rng.random::<f64>() < rate {
            *v = 0.0;
        } else {
            *v *= keep;
        }
    }
}

/// Trains an encoder end to end on mean nll plus penalty with Adam.
///
/// With early stopping (the default) a seeded validation split is held out
/// and the parameters with the lowest validation nll are returned. Fewer than
/// two rows disables the split.
pub fn fit(
    dataset: &Dataset,
    encoder: &EncoderSpec,
    likelihood: &LikelihoodSpec,
    reg: &RegularizationSpec,
    cfg: &TrainConfig,
) -> Result<FittedModel> {
    encoder.validate()?;
    likelihood.validate()?;
    reg.validate()?;
    cfg.validate()?;
    check_compatible(dataset, encoder, likelihood)?;
    let started = Instant::now();

    let (train, val) = if cfg.early_stopping && dataset.n() >= 2 {
        let (t, v) = split_indices(dataset.n(), cfg.val_split, cfg.seed)?;
        (dataset.select(&t), Some(dataset.select(&v)))
    } else {
        (dataset.clone(), None)
    };

    let mut store = encoder.init_params(cfg.seed)?;
    let mut likelihood = likelihood.clone();
    if likelihood.has_global_variance() {
        let lv = variance(&train.outcome).max(1e-12).ln().clamp(glm::LOG_VARIANCE_MIN, glm::LOG_VARIANCE_MAX);
        likelihood.log_variance = lv;
        store.insert(LOG_VARIANCE_PARAM, Matrix::scalar(lv));
    }

    let initial_train_nll = mean_nll(encoder, &likelihood, &store, &train)?;
    let mut report = FitReport {
        initial_train_nll,
        ..Default::default()
    };

    let mut best = store.clone();
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut shuffle_rng = rng_stream(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = rng_stream(cfg.seed, STREAM_DROPOUT);
    let batch_size = cfg.batch_size_for(train.n());
    let mut order: Vec<usize> = (0..train.n()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let mut context = train.context.select_rows(chunk);
            apply_dropout(&mut context, cfg.context_dropout, &mut dropout_rng);
            let x = train.predictors.select_rows(chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| train.outcome[i]).collect();
            let batch = Batch {
                context,
                predictors: &x,
                outcome: &y,
            };
            let mut tape = Tape::new();
            let (loss, _) = record_loss(&mut tape, encoder, &likelihood, &store, &batch, Some(reg))?;
            let value = tape.value(loss).get(0, 0);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("training loss is {value}"),
                });
            }
            tape.backward(loss, &mut store)?;
            adam.step(&mut store).map_err(|e| Error::Divergence {
                epoch,
                detail: e.to_string(),
            })?;
            if !store.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: "parameters became non-finite".into(),
                });
            }
            total += value * chunk.len() as f64;
        }
        report.train_loss.push(total / train.n() as f64);
        report.stopping_epoch = epoch;

        match &val {
            Some(v) => {
                let vl = mean_nll(encoder, &likelihood, &store, v)?;
                if !vl.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        detail: format!("validation loss is {vl}"),
                    });
                }
                report.val_loss.push(vl);
                if vl < best_val {
                    best_val = vl;
                    best.copy_values_from(&store);
                    report.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.patience {
                        break;
                    }
                }
            }
            None => report.best_epoch = epoch,
        }
    }
    if val.is_some() && report.stopping_epoch > 0 {
        store = best;
    }
    if let Some(id) = store.id(LOG_VARIANCE_PARAM) {
        likelihood.log_variance = store.value(id).get(0, 0);
    }
    report.final_train_nll = mean_nll(encoder, &likelihood, &store, &train)?;
    report.final_penalty = {
        let mut tape = Tape::new();
        let c = tape.constant(train.context.clone());
        let out = encoder.forward(&mut tape, &store, c)?;
        match glm::penalty_tape(&mut tape, out.output, train.predictor_dim(), &likelihood, reg)? {
            Some(p) => tape.value(p).get(0, 0),
            None => 0.0,
        }
    };
    report.wall_time_secs = started.elapsed().as_secs_f64();

    Ok(FittedModel {
        encoder: encoder.clone(),
        likelihood,
        regularization: reg.clone(),
        params: store,
        report,
        roles: dataset.roles.clone(),
        seed: cfg.seed,
        pseudo: None,
    })
}

impl FittedModel {
    pub fn context_dim(&self) -> usize {
        self.roles.context.len()
    }

    pub fn predictor_dim(&self) -> usize {
        self.roles.predictors.len()
    }

    fn check_columns(&self, what: &str, expected: usize, found: usize) -> Result<()> {
        if expected != found {
            return Err(Error::Data(format!(
                "{what}: expected {expected} columns, found {found}"
            )));
        }
        Ok(())
    }

    /// Raw encoder output rows. For pseudo-sampled models given only the
    /// original context, the output is averaged over the stored noise draws.
    pub fn encode(&self, context: &Matrix) -> Result<Matrix> {
        match &self.pseudo {
            Some(ps) if context.cols() == self.context_dim() => ps.integrate(&self.encoder, &self.params, context),
            _ => {
                self.check_columns("context", self.encoder.context_dim, context.cols())?;
                Ok(self.encoder.encode(&self.params, context)?.output)
            }
        }
    }

    /// Softmax archetype weights per row, when the encoder has an archetype head.
    pub fn archetype_weights(&self, context: &Matrix) -> Result<Option<Matrix>> {
        self.check_columns("context", self.encoder.context_dim, context.cols())?;
        Ok(self.encoder.encode(&self.params, context)?.weights)
    }

    pub fn sample_models(&self, context: &Matrix) -> Result<Vec<SampleModel>> {
        let out = self.encode(context)?;
        let p = self.predictor_dim();
        (0..out.rows()).map(|r| self.likelihood.sample_model(out.row(r), p)).collect()
    }

    pub fn predict(&self, context: &Matrix, predictors: &Matrix) -> Result<Prediction> {
        self.check_columns("predictors", self.predictor_dim(), predictors.cols())?;
        if context.rows() != predictors.rows() {
            return Err(Error::Data(format!(
                "{} context rows but {} predictor rows",
                context.rows(),
                predictors.rows()
            )));
        }
        let models = self.sample_models(context)?;
        let mean = models
            .iter()
            .enumerate()
            .map(|(i, m)| glm::predict_mean(predictors.row(i), m, &self.likelihood))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prediction { mean, models })
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Prediction> {
        self.predict(&data.context, &data.predictors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Matrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let x = Matrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        let y = (0..n)
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (1.0 + c.get(i, 0)) * x.get(i, 0) + 0.1 * e
            })
            .collect();
        Dataset::from_parts(c, x, y).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let d = toy(30, 1);
        let enc = EncoderSpec::mlp(1, 2);
        let cfg = TrainConfig { max_epochs: 0, ..Default::default() };
        let m = fit(&d, &enc, &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg).unwrap();
        let init = enc.init_params(cfg.seed).unwrap();
        for id in init.ids() {
            assert_eq!(init.value(id), m.params.get(init.name(id)).unwrap());
        }
        assert_eq!(m.report.stopping_epoch, 0);
        assert!(m.report.train_loss.is_empty());
    }

    #[test]
    fn fit_is_bit_reproducible() {
        let d = toy(80, 2);
        let enc = EncoderSpec::mlp(1, 2).with_hidden(vec![8]);
        let cfg = TrainConfig {
            max_epochs: 30,
            learning_rate: 0.01,
            context_dropout: 0.1,
            batch_size: Some(16),
            ..Default::default()
        };
        let reg = RegularizationSpec::new(0.01, 0.5, 0.5);
        let a = fit(&d, &enc, &LikelihoodSpec::gaussian(), &reg, &cfg).unwrap();
        let b = fit(&d, &enc, &LikelihoodSpec::gaussian(), &reg, &cfg).unwrap();
        for id in a.params.ids() {
            assert_eq!(a.params.value(id), b.params.value(id));
        }
        assert_eq!(a.report.train_loss, b.report.train_loss);
    }

    #[test]
    fn early_stopping_keeps_best_validation() {
        let d = toy(60, 3);
        let enc = EncoderSpec::mlp(1, 2).with_hidden(vec![16, 16]);
        let cfg = TrainConfig {
            max_epochs: 300,
            learning_rate: 0.05,
            patience: 5,
            ..Default::default()
        };
        let m = fit(&d, &enc, &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg).unwrap();
        let best = m.report.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        let (_, v) = split_indices(d.n(), cfg.val_split, cfg.seed).unwrap();
        let val = d.select(&v);
        let got = mean_nll(&m.encoder, &m.likelihood, &m.params, &val).unwrap();
        assert!((got - best).abs() < 1e-12, "{got} vs {best}");
        assert_eq!(m.report.val_loss[m.report.best_epoch - 1], best);
        assert!(m.report.stopping_epoch <= cfg.max_epochs);
    }

    #[test]
    fn training_reduces_loss() {
        let d = toy(200, 4);
        let enc = EncoderSpec::linear(1, 2);
        let cfg = TrainConfig { max_epochs: 200, learning_rate: 0.02, ..Default::default() };
        let m = fit(&d, &enc, &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg).unwrap();
        assert!(m.report.final_train_nll < m.report.initial_train_nll);
        let mut best = f64::INFINITY;
        for &l in &m.report.train_loss {
            let next = best.min(l);
            assert!(next <= best + 1e-6);
            best = next;
        }
    }

    #[test]
    fn mismatched_specs_rejected() {
        let d = toy(10, 5);
        let r = fit(
            &d,
            &EncoderSpec::linear(2, 2),
            &LikelihoodSpec::gaussian(),
            &RegularizationSpec::default(),
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = fit(
            &d,
            &EncoderSpec::linear(1, 3),
            &LikelihoodSpec::gaussian(),
            &RegularizationSpec::default(),
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
        let r = fit(
            &d,
            &EncoderSpec::linear(1, 2),
            &LikelihoodSpec::new(Family::Bernoulli),
            &RegularizationSpec::default(),
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut d = toy(20, 6);
        d.outcome.iter_mut().for_each(|y| *y *= 1e160);
        let cfg = TrainConfig { max_epochs: 5, ..Default::default() };
        let r = fit(&d, &EncoderSpec::linear(1, 2), &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg);
        match r {
            Err(Error::Divergence { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn predict_checks_columns() {
        let d = toy(20, 7);
        let cfg = TrainConfig { max_epochs: 1, ..Default::default() };
        let m = fit(&d, &EncoderSpec::linear(1, 2), &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg)
            .unwrap();
        let err = m.predict(&Matrix::zeros(3, 2), &Matrix::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("expected 1"), "{err}");
        assert!(m.predict(&Matrix::zeros(3, 1), &Matrix::zeros(3, 4)).is_err());
    }

    #[test]
    fn linear_prediction_is_analytic_composition() {
        let d = toy(5, 8);
        let cfg = TrainConfig { max_epochs: 0, ..Default::default() };
        let mut m = fit(&d, &EncoderSpec::linear(1, 2), &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg)
            .unwrap();
        // coefficient = 2c + 0.5, offset = -c + 1
        let w = m.params.id("linear.weight").unwrap();
        *m.params.value_mut(w) = Matrix::row_vector(&[2.0, -1.0]);
        let b = m.params.id("linear.bias").unwrap();
        *m.params.value_mut(b) = Matrix::row_vector(&[0.5, 1.0]);
        let c = Matrix::column_vector(&[0.0, 1.0, -2.0]);
        let x = Matrix::column_vector(&[3.0, -1.0, 0.5]);
        let p = m.predict(&c, &x).unwrap();
        for i in 0..3 {
            let (cv, xv) = (c.get(i, 0), x.get(i, 0));
            assert!((p.mean[i] - (xv * (2.0 * cv + 0.5) + (1.0 - cv))).abs() < 1e-12);
        }
    }
}
