//! Likelihood families and the elastic-net penalty for sample-specific GLMs.
//!
//! Each family fixes how an encoder output row is laid out:
//!
//! | family             | row layout                                   |
//! |--------------------|----------------------------------------------|
//! | `gaussian`         | `p` coefficients, offset                     |
//! | `bernoulli`        | `p` coefficients, offset                     |
//! | `hetero_gaussian`  | `p` coefficients, offset, log-variance       |
//! | `mixture_gaussian` | `K` blocks of (`p` coefficients, offset)     |
//!
//! Homoskedastic and mixture families share one global log-variance, trained
//! alongside the encoder.


use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, softplus, Matrix, Tape, Var};
use crate::error::{Error, Result};

pub const LOG_VARIANCE_MIN: f64 = -10.0;
pub const LOG_VARIANCE_MAX: f64 = 10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    HeteroGaussian,
    MixtureGaussian,
    Bernoulli,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSpec {
    pub family: Family,
    /// Number of heads for `mixture_gaussian`; ignored otherwise.
    #[serde(default)]
    pub mixture_count: usize,
    /// Trained global log-variance (`gaussian`, `mixture_gaussian`).
    #[serde(default)]
    pub log_variance: f64,
}

impl LikelihoodSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            mixture_count: if family == Family::MixtureGaussian { 2 } else { 0 },
            log_variance: 0.0,
        }
    }

    pub fn gaussian() -> Self {
        Self::new(Family::Gaussian)
    }

    pub fn mixture(k: usize) -> Self {
        Self {
            mixture_count: k,
            ..Self::new(Family::MixtureGaussian)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::MixtureGaussian && self.mixture_count < 2 {
            return Err(Error::Config(format!(
                "mixture_gaussian needs mixture_count >= 2, got {}",
                self.mixture_count
            )));
        }
        if !self.log_variance.is_finite() {
            return Err(Error::Config("log_variance must be finite".into()));
        }
        Ok(())
    }

    /// Whether the family carries a trainable global log-variance.
    pub fn has_global_variance(&self) -> bool {
        matches!(self.family, Family::Gaussian | Family::MixtureGaussian)
    }

    /// Encoder output width for `p` predictors.
    pub fn output_dim(&self, p: usize) -> usize {
        match self.family {
            Family::Gaussian | Family::Bernoulli => p + 1,
            Family::HeteroGaussian => p + 2,
            Family::MixtureGaussian => self.mixture_count * (p + 1),
        }
    }

    /// Splits one encoder output row into a [`SampleModel`].
    pub fn sample_model(&self, row: &[f64], p: usize) -> Result<SampleModel> {
        let want = self.output_dim(p);
        if row.len() != want {
            return Err(Error::Shape {
                op: "sample_model",
                left: format!("row of {}", row.len()),
                right: format!("{want} outputs for p = {p}"),
            });
        }
        Ok(match self.family {
            Family::Gaussian | Family::Bernoulli => SampleModel {
                coefficients: row[..p].to_vec(),
                offset: row[p],
                aux: None,
            },
            Family::HeteroGaussian => SampleModel {
                coefficients: row[..p].to_vec(),
                offset: row[p],
                aux: Some(Aux::LogVariance(row[p + 1].clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX))),
            },
            Family::MixtureGaussian => {
                let heads: Vec<Head> = row
                    .chunks(p + 1)
                    .map(|c| Head {
                        coefficients: c[..p].to_vec(),
                        offset: c[p],
                    })
                    .collect();
                let k = heads.len() as f64;
                let coefficients = (0..p)
                    .map(|j| heads.iter().map(|h| h.coefficients[j]).sum::<f64>() / k)
                    .collect();
                let offset = heads.iter().map(|h| h.offset).sum::<f64>() / k;
                SampleModel {
                    coefficients,
                    offset,
                    aux: Some(Aux::Heads(heads)),
                }
            }
        })
    }
}

/// One mixture component's linear predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

/// Family-specific extras attached to a sample model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aux {
    /// Per-sample log-variance (already clamped).
    LogVariance(f64),
    /// Mixture heads; `coefficients`/`offset` on the model hold their average.
    Heads(Vec<Head>),
}

/// Sample-specific GLM parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleModel {
    pub coefficients: Vec<f64>,
    pub offset: f64,
    pub aux: Option<Aux>,
}

impl SampleModel {
    pub fn linear(coefficients: Vec<f64>, offset: f64) -> Self {
        Self {
            coefficients,
            offset,
            aux: None,
        }
    }

    /// `x · coefficients + offset`.
    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        dot_offset(x, &self.coefficients, self.offset)
    }

    /// All scalar parameters in output-row order (coefficients, offset, aux).
    pub fn flatten(&self) -> Vec<f64> {
        match &self.aux {
            Some(Aux::Heads(heads)) => heads
                .iter()
                .flat_map(|h| h.coefficients.iter().copied().chain(std::iter::once(h.offset)))
                .collect(),
            other => {
                let mut v = self.coefficients.clone();
                v.push(self.offset);
                if let Some(Aux::LogVariance(lv)) = other {
                    v.push(*lv);
                }
                v
            }
        }
    }

    fn penalized_parts(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.aux {
            Some(Aux::Heads(heads)) => (
                heads.iter().flat_map(|h| h.coefficients.iter().copied()).collect(),
                heads.iter().map(|h| h.offset).collect(),
            ),
            _ => (self.coefficients.clone(), vec![self.offset]),
        }
    }
}

fn dot_offset(x: &[f64], coef: &[f64], offset: f64) -> Result<f64> {
    if x.len() != coef.len() {
        return Err(Error::Shape {
            op: "linear_predictor",
            left: format!("x of length {}", x.len()),
            right: format!("{} coefficients", coef.len()),
        });
    }
    Ok(offset + x.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>())
}

fn heads_of<'a>(theta: &'a SampleModel, spec: &LikelihoodSpec) -> Result<&'a [Head]> {
    match &theta.aux {
        Some(Aux::Heads(h)) if h.len() == spec.mixture_count => Ok(h),
        _ => Err(Error::Config(format!(
            "mixture_gaussian expects {} heads on the sample model",
            spec.mixture_count
        ))),
    }
}

/// `E[Y | x, θ]` under the family.
pub fn predict_mean(x: &[f64], theta: &SampleModel, spec: &LikelihoodSpec) -> Result<f64> {
    match spec.family {
        Family::Gaussian => theta.linear_predictor(x),
        Family::Bernoulli => Ok(sigmoid(theta.linear_predictor(x)?)),
        Family::HeteroGaussian => match theta.aux {
            Some(Aux::LogVariance(_)) => theta.linear_predictor(x),
            _ => Err(Error::Config("hetero_gaussian expects a log-variance on the sample model".into())),
        },
        Family::MixtureGaussian => {
            let heads = heads_of(theta, spec)?;
            let mut total = 0.0;
            for h in heads {
                total += dot_offset(x, &h.coefficients, h.offset)?;
            }
            Ok(total / heads.len() as f64)
        }
    }
}

fn clamp_lv(lv: f64) -> f64 {
    lv.clamp(LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)
}

fn gaussian_nll(y: f64, mean: f64, lv: f64) -> f64 {
    let r = y - mean;
    HALF_LN_2PI + 0.5 * lv + 0.5 * r * r * (-lv).exp()
}

/// Exact negative log-density (or log-mass for `bernoulli`) of `y`.
pub fn nll(y: f64, x: &[f64], theta: &SampleModel, spec: &LikelihoodSpec) -> Result<f64> {
    match spec.family {
        Family::Gaussian => Ok(gaussian_nll(y, theta.linear_predictor(x)?, clamp_lv(spec.log_variance))),
        Family::HeteroGaussian => match theta.aux {
            Some(Aux::LogVariance(lv)) => Ok(gaussian_nll(y, theta.linear_predictor(x)?, clamp_lv(lv))),
            _ => Err(Error::Config("hetero_gaussian expects a log-variance on the sample model".into())),
        },
        Family::MixtureGaussian => {
            let heads = heads_of(theta, spec)?;
            let lv = clamp_lv(spec.log_variance);
            let mut terms = Vec::with_capacity(heads.len());
            for h in heads {
                let r = y - dot_offset(x, &h.coefficients, h.offset)?;
                terms.push(-0.5 * r * r * (-lv).exp());
            }
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
            Ok(-lse + (heads.len() as f64).ln() + HALF_LN_2PI + 0.5 * lv)
        }
        Family::Bernoulli => {
            check_binary(y)?;
            let eta = theta.linear_predictor(x)?;
            Ok(softplus(eta) - y * eta)
        }
    }
}

fn check_binary(y: f64) -> Result<()> {
    if y == 0.0 || y == 1.0 {
        Ok(())
    } else {
        Err(Error::Data(format!("bernoulli outcome must be 0 or 1, got {y}")))
    }
}

/// Elastic-net regularization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizationSpec {
    pub alpha: f64,
    /// Share of the penalty on coefficients; the rest goes to offsets.
    pub mu_ratio: f64,
    /// Share of ℓ₁ versus ½ℓ₂².
    pub l1_ratio: f64,
}

impl Default for RegularizationSpec {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            mu_ratio: 0.5,
            l1_ratio: 0.0,
        }
    }
}

impl RegularizationSpec {
    pub fn new(alpha: f64, mu_ratio: f64, l1_ratio: f64) -> Self {
        Self {
            alpha,
            mu_ratio,
            l1_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        for (name, v) in [("mu_ratio", self.mu_ratio), ("l1_ratio", self.l1_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    fn elastic_net(&self, v: &[f64]) -> f64 {
        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        let l2: f64 = v.iter().map(|x| x * x).sum();
        self.l1_ratio * l1 + (1.0 - self.l1_ratio) * 0.5 * l2
    }
}

/// Batch-averaged elastic-net penalty on coefficients and offsets.
pub fn penalty(models: &[SampleModel], reg: &RegularizationSpec) -> Result<f64> {
    reg.validate()?;
    if reg.alpha == 0.0 || models.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = models
        .iter()
        .map(|m| {
            let (coefs, offsets) = m.penalized_parts();
            reg.mu_ratio * reg.elastic_net(&coefs) + (1.0 - reg.mu_ratio) * reg.elastic_net(&offsets)
        })
        .sum();
    Ok(reg.alpha * total / models.len() as f64)
}

/// Column ranges of the coefficient and offset entries in an output row.
fn penalized_columns(spec: &LikelihoodSpec, p: usize) -> (Vec<(usize, usize)>, Vec<usize>) {
    match spec.family {
        Family::MixtureGaussian => (
            (0..spec.mixture_count).map(|k| (k * (p + 1), k * (p + 1) + p)).collect(),
            (0..spec.mixture_count).map(|k| k * (p + 1) + p).collect(),
        ),
        _ => (vec![(0, p)], vec![p]),
    }
}

fn linear_predictor_tape(tape: &mut Tape, theta: Var, x: Var, start: usize, p: usize) -> Result<Var> {
    let coefs = tape.slice_cols(theta, start, start + p)?;
    let offset = tape.slice_cols(theta, start + p, start + p + 1)?;
    let prod = tape.mul(x, coefs)?;
    let eta = tape.row_sum(prod);
    tape.add(eta, offset)
}

/// Broadcasts a `1 x 1` node to `n x cols`.
fn broadcast_scalar(tape: &mut Tape, s: Var, n: usize, cols: usize) -> Result<Var> {
    let row = if cols == 1 {
        s
    } else {
        tape.concat_cols(&vec![s; cols])?
    };
    let z = tape.constant(Matrix::zeros(n, cols));
    tape.add_row_bias(z, row)
}

/// Per-sample negative log-likelihood as an `n x 1` tape node.
///
/// `theta` is the `n x output_dim` encoder output, `x` the `n x p` predictors.
/// `log_variance` is the global `1 x 1` node for families that use one.
pub fn nll_tape(
    tape: &mut Tape,
    theta: Var,
    x: &Matrix,
    y: &[f64],
    spec: &LikelihoodSpec,
    log_variance: Option<Var>,
) -> Result<Var> {
    let (n, p) = x.shape();
    if y.len() != n || tape.shape(theta) != (n, spec.output_dim(p)) {
        return Err(Error::Shape {
            op: "nll",
            left: format!("theta {:?}, y {}", tape.shape(theta), y.len()),
            right: format!("x {n}x{p} with output_dim {}", spec.output_dim(p)),
        });
    }
    let xv = tape.constant(x.clone());
    let global_lv = |tape: &mut Tape, cols: usize| -> Result<Var> {
        let lv = log_variance
            .ok_or_else(|| Error::State("family requires a global log-variance parameter".into()))?;
        let b = broadcast_scalar(tape, lv, n, cols)?;
        Ok(tape.clamp(b, LOG_VARIANCE_MIN, LOG_VARIANCE_MAX))
    };
    match spec.family {
        Family::Gaussian | Family::HeteroGaussian => {
            let eta = linear_predictor_tape(tape, theta, xv, 0, p)?;
            let lv = if spec.family == Family::Gaussian {
                global_lv(tape, 1)?
            } else {
                let raw = tape.slice_cols(theta, p + 1, p + 2)?;
                tape.clamp(raw, LOG_VARIANCE_MIN, LOG_VARIANCE_MAX)
            };
            let yv = tape.constant(Matrix::column_vector(y));
            let r = tape.sub(yv, eta)?;
            let r2 = tape.square(r);
            let neg = tape.scale(lv, -1.0);
            let prec = tape.exp(neg);
            let quad = tape.mul(r2, prec)?;
            let s = tape.add(quad, lv)?;
            let half = tape.scale(s, 0.5);
            Ok(tape.shift(half, HALF_LN_2PI))
        }
        Family::MixtureGaussian => {
            let k = spec.mixture_count;
            let mut etas = Vec::with_capacity(k);
            for h in 0..k {
                etas.push(linear_predictor_tape(tape, theta, xv, h * (p + 1), p)?);
            }
            let eta = tape.concat_cols(&etas)?;
            let yk = tape.constant(Matrix::from_fn(n, k, |r, _| y[r]));
            let r = tape.sub(yk, eta)?;
            let r2 = tape.square(r);
            let lvk = global_lv(tape, k)?;
            let neg = tape.scale(lvk, -1.0);
            let prec = tape.exp(neg);
            let quad = tape.mul(r2, prec)?;
            let logits = tape.scale(quad, -0.5);
            let lse = tape.log_sum_exp_rows(logits);
            let lv1 = tape.slice_cols(lvk, 0, 1)?;
            let half_lv = tape.scale(lv1, 0.5);
            let out = tape.sub(half_lv, lse)?;
            Ok(tape.shift(out, (k as f64).ln() + HALF_LN_2PI))
        }
        Family::Bernoulli => {
            for &v in y {
                check_binary(v)?;
            }
            let eta = linear_predictor_tape(tape, theta, xv, 0, p)?;
            let sp = tape.softplus(eta);
            let yv = tape.constant(Matrix::column_vector(y));
            let ye = tape.mul(yv, eta)?;
            tape.sub(sp, ye)
        }
    }
}

/// The penalty as a `1 x 1` tape node over an `n x output_dim` batch.
pub fn penalty_tape(
    tape: &mut Tape,
    theta: Var,
    p: usize,
    spec: &LikelihoodSpec,
    reg: &RegularizationSpec,
) -> Result<Option<Var>> {
    reg.validate()?;
    if reg.alpha == 0.0 {
        return Ok(None);
    }
    let (n, _) = tape.shape(theta);
    let (coef_ranges, offset_cols) = penalized_columns(spec, p);
    let mut coef_parts = Vec::new();
    for (s, e) in coef_ranges {
        if e > s {
            coef_parts.push(tape.slice_cols(theta, s, e)?);
        }
    }
    let mut offset_parts = Vec::new();
    for c in offset_cols {
        offset_parts.push(tape.slice_cols(theta, c, c + 1)?);
    }
    let en = |tape: &mut Tape, parts: &[Var], weight: f64| -> Result<Option<Var>> {
        if parts.is_empty() || weight == 0.0 {
            return Ok(None);
        }
        let v = tape.concat_cols(parts)?;
        let a = tape.abs(v);
        let l1 = tape.sum(a);
        let sq = tape.square(v);
        let l2 = tape.sum(sq);
        let l1 = tape.scale(l1, reg.l1_ratio);
        let l2 = tape.scale(l2, 0.5 * (1.0 - reg.l1_ratio));
        let s = tape.add(l1, l2)?;
        Ok(Some(tape.scale(s, weight)))
    };
    let c = en(tape, &coef_parts, reg.mu_ratio)?;
    let o = en(tape, &offset_parts, 1.0 - reg.mu_ratio)?;
    let total = match (c, o) {
        (Some(a), Some(b)) => tape.add(a, b)?,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Ok(None),
    };
    Ok(Some(tape.scale(total, reg.alpha / n.max(1) as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ParamStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mixture_model(means: &[f64]) -> SampleModel {
        LikelihoodSpec::mixture(means.len())
            .sample_model(
                &means.iter().flat_map(|&m| [0.0, m]).collect::<Vec<_>>(),
                1,
            )
            .unwrap()
    }

    #[test]
    fn predict_mean_examples() {
        let t = SampleModel::linear(vec![2.0, -1.0], 0.7);
        assert_eq!(predict_mean(&[0.0, 0.0], &t, &LikelihoodSpec::gaussian()).unwrap(), 0.7);
        let t = SampleModel::linear(vec![1.0], -2.0);
        assert_eq!(predict_mean(&[2.0], &t, &LikelihoodSpec::new(Family::Bernoulli)).unwrap(), 0.5);
        let m = mixture_model(&[-1.0, 1.0]);
        assert_eq!(predict_mean(&[3.0], &m, &LikelihoodSpec::mixture(2)).unwrap(), 0.0);
        assert!(matches!(
            predict_mean(&[1.0], &SampleModel::linear(vec![1.0], 0.0), &LikelihoodSpec::new(Family::HeteroGaussian)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            predict_mean(&[1.0], &SampleModel::linear(vec![1.0], 0.0), &LikelihoodSpec::mixture(2)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn nll_examples() {
        let g = LikelihoodSpec::gaussian();
        let t = SampleModel::linear(vec![1.0], 0.5);
        assert!((nll(1.5, &[1.0], &t, &g).unwrap() - 0.918939).abs() < 1e-6);
        assert!((nll(2.5, &[1.0], &t, &g).unwrap() - 1.418939).abs() < 1e-6);

        let same = mixture_model(&[1.5, 1.5, 1.5]);
        let single = SampleModel::linear(vec![0.0], 1.5);
        for y in [-1.0, 0.3, 4.0] {
            let a = nll(y, &[0.2], &same, &LikelihoodSpec::mixture(3)).unwrap();
            let b = nll(y, &[0.2], &single, &g).unwrap();
            assert!((a - b).abs() < 1e-12);
        }

        let b = LikelihoodSpec::new(Family::Bernoulli);
        let t = SampleModel::linear(vec![0.0], 3f64.ln());
        assert!((nll(1.0, &[0.0], &t, &b).unwrap() - 0.287682).abs() < 1e-6);
        assert!(matches!(nll(0.5, &[0.0], &t, &b), Err(Error::Data(_))));
    }

    #[test]
    fn penalty_examples() {
        let models = [SampleModel::linear(vec![3.0, -4.0], 10.0)];
        assert_eq!(penalty(&models, &RegularizationSpec::new(0.0, 0.5, 0.5)).unwrap(), 0.0);
        assert_eq!(penalty(&models, &RegularizationSpec::new(1.0, 1.0, 1.0)).unwrap(), 7.0);
        assert_eq!(penalty(&models, &RegularizationSpec::new(1.0, 1.0, 0.0)).unwrap(), 12.5);
        assert!(penalty(&models, &RegularizationSpec::new(-1.0, 0.5, 0.5)).is_err());
        assert!(penalty(&models, &RegularizationSpec::new(1.0, 1.5, 0.5)).is_err());
        assert!(penalty(&models, &RegularizationSpec::new(1.0, 0.5, -0.1)).is_err());
    }

    #[test]
    fn gaussian_nll_minimized_at_observation() {
        let g = LikelihoodSpec::gaussian();
        let y = 0.37;
        let mut best = (f64::INFINITY, 0.0);
        for i in -2000..=2000 {
            let mu = i as f64 * 0.001;
            let v = nll(y, &[0.0], &SampleModel::linear(vec![0.0], mu), &g).unwrap();
            if v < best.0 {
                best = (v, mu);
            }
        }
        assert!((best.1 - y).abs() < 1e-3 + 1e-12);
    }

    fn random_model(rng: &mut ChaCha8Rng, spec: &LikelihoodSpec, p: usize) -> SampleModel {
        let row: Vec<f64> = (0..spec.output_dim(p)).map(|_| rng.random_range(-1.0..1.0)).collect();
        spec.sample_model(&row, p).unwrap()
    }

    #[test]
    fn densities_integrate_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for family in [Family::Gaussian, Family::HeteroGaussian, Family::MixtureGaussian] {
            for _ in 0..5 {
                let mut spec = LikelihoodSpec::new(family);
                if family == Family::MixtureGaussian {
                    spec.mixture_count = 3;
                }
                spec.log_variance = rng.random_range(-1.0..1.0);
                let t = random_model(&mut rng, &spec, 2);
                let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let h = 0.001;
                let total: f64 = (-30_000..=30_000)
                    .map(|i| (-nll(i as f64 * h, &x, &t, &spec).unwrap()).exp() * h)
                    .sum();
                assert!((total - 1.0).abs() < 1e-3, "{family:?}: {total}");
            }
        }
        let spec = LikelihoodSpec::new(Family::Bernoulli);
        for _ in 0..5 {
            let t = random_model(&mut rng, &spec, 2);
            let mass: f64 = [0.0, 1.0].iter().map(|&y| (-nll(y, &[0.4, -0.2], &t, &spec).unwrap()).exp()).sum();
            assert!((mass - 1.0).abs() < 1e-12);
        }
    }

    fn all_specs() -> Vec<LikelihoodSpec> {
        vec![
            LikelihoodSpec { log_variance: 0.3, ..LikelihoodSpec::gaussian() },
            LikelihoodSpec::new(Family::HeteroGaussian),
            LikelihoodSpec { log_variance: -0.2, ..LikelihoodSpec::mixture(3) },
            LikelihoodSpec::new(Family::Bernoulli),
        ]
    }

    #[test]
    fn tape_and_direct_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = 2;
        for spec in all_specs() {
            let n = 7;
            let theta = Matrix::from_fn(n, spec.output_dim(p), |_, _| rng.random_range(-1.5..1.5));
            let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    if spec.family == Family::Bernoulli {
                        f64::from(rng.random_bool(0.5))
                    } else {
                        rng.random_range(-2.0..2.0)
                    }
                })
                .collect();
            let reg = RegularizationSpec::new(0.7, 0.3, 0.4);
            let mut tape = Tape::new();
            let tv = tape.constant(theta.clone());
            let lv = tape.constant(Matrix::scalar(spec.log_variance));
            let out = nll_tape(&mut tape, tv, &x, &y, &spec, Some(lv)).unwrap();
            let pen = penalty_tape(&mut tape, tv, p, &spec, &reg).unwrap().unwrap();
            let models: Vec<SampleModel> =
                (0..n).map(|i| spec.sample_model(theta.row(i), p).unwrap()).collect();
            for i in 0..n {
                let direct = nll(y[i], x.row(i), &models[i], &spec).unwrap();
                assert!((direct - tape.value(out).get(i, 0)).abs() < 1e-12, "{:?}", spec.family);
            }
            let direct = penalty(&models, &reg).unwrap();
            assert!((direct - tape.value(pen).get(0, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn losses_pass_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = 3;
        for spec in all_specs() {
            for reg in [RegularizationSpec::new(0.0, 0.5, 0.5), RegularizationSpec::new(0.8, 0.6, 0.3)] {
                let n = 10;
                let x = Matrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
                let y: Vec<f64> = (0..n)
                    .map(|_| {
                        if spec.family == Family::Bernoulli {
                            f64::from(rng.random_bool(0.5))
                        } else {
                            rng.random_range(-2.0..2.0)
                        }
                    })
                    .collect();
                let mut store = ParamStore::new();
                let th = store.insert("theta", Matrix::from_fn(n, spec.output_dim(p), |_, _| rng.random_range(-2.0..2.0)));
                let lv = store.insert("lv", Matrix::scalar(0.4));
                let err = grad_check(
                    |t, s| {
                        let tv = t.param(s, th);
                        let lvv = t.param(s, lv);
                        let l = nll_tape(t, tv, &x, &y, &spec, Some(lvv))?;
                        let m = t.mean(l);
                        match penalty_tape(t, tv, p, &spec, &reg)? {
                            Some(pen) => t.add(m, pen),
                            None => Ok(m),
                        }
                    },
                    &mut store,
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-4, "{:?}: {err}", spec.family);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn penalty_is_convex(seed in 0u64..1000, alpha in 0.0f64..3.0, mu in 0.0f64..=1.0, l1 in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reg = RegularizationSpec::new(alpha, mu, l1);
            let mut draw = || -> Vec<SampleModel> {
                (0..4).map(|_| SampleModel::linear(
                    (0..3).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    rng.random_range(-3.0..3.0),
                )).collect()
            };
            let (a, b) = (draw(), draw());
            let mid: Vec<SampleModel> = a.iter().zip(&b).map(|(u, v)| SampleModel::linear(
                u.coefficients.iter().zip(&v.coefficients).map(|(x, y)| 0.5 * (x + y)).collect(),
                0.5 * (u.offset + v.offset),
            )).collect();
            let pm = penalty(&mid, &reg).unwrap();
            let pa = penalty(&a, &reg).unwrap();
            let pb = penalty(&b, &reg).unwrap();
            proptest::prop_assert!(pm <= 0.5 * (pa + pb) + 1e-12);
        }
    }

    #[test]
    fn mixture_requires_two_heads() {
        assert!(LikelihoodSpec::mixture(1).validate().is_err());
        assert!(LikelihoodSpec::mixture(2).validate().is_ok());
    }
}
