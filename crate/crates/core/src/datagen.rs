//! Seeded synthetic datasets with known sample-specific models, and the
//! binned cohort baseline they are compared against.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::data::{fmt_f64, Dataset};
use crate::error::{Error, Result};
use crate::glm::{Aux, SampleModel};
use crate::linalg::ols_with_intercept;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `θ_j(c) = sin(2πc) / (j + 1)`, `c ~ U[0, 1]`.
    SmoothVc,
    /// Cluster-specific coefficients, context a noisy one-hot of the cluster.
    LatentClusters,
    /// Smooth VC data with a context interval held out for testing.
    HoldoutInterval,
    /// `Y ~ ½N(μ₁, s²) + ½N(μ₂, s²)` regardless of `X` and `C`.
    BimodalOutcome,
    /// One global linear model; context is irrelevant noise.
    Homogeneous,
    /// `θ(c) = β c` with Gaussian context and predictors.
    LinearVc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    /// Context dimension; defaults per kind (cluster count for latent clusters, else 1 or 2).
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// Standard deviation of Gaussian blur added to the one-hot context.
    #[serde(default)]
    pub context_noise: f64,
    /// Probability that a sample's one-hot points at a wrong cluster.
    #[serde(default)]
    pub flip_prob: f64,
    #[serde(default = "default_holdout")]
    pub holdout: [f64; 2],
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_means")]
    pub component_means: [f64; 2],
    #[serde(default = "default_component_sd")]
    pub component_sd: f64,
    /// Linear VC coefficient matrix (p rows, m columns); drawn N(0, 1) when absent.
    #[serde(default)]
    pub beta: Option<Vec<Vec<f64>>>,
}

fn default_p() -> usize {
    1
}
fn default_noise() -> f64 {
    0.1
}
fn default_clusters() -> usize {
    2
}
fn default_holdout() -> [f64; 2] {
    [0.4, 0.6]
}
fn default_n_test() -> usize {
    200
}
fn default_means() -> [f64; 2] {
    [-2.0, 2.0]
}
fn default_component_sd() -> f64 {
    0.5
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            m: None,
            p: default_p(),
            noise: default_noise(),
            seed,
            clusters: default_clusters(),
            context_noise: 0.0,
            flip_prob: 0.0,
            holdout: default_holdout(),
            n_test: default_n_test(),
            component_means: default_means(),
            component_sd: default_component_sd(),
            beta: None,
        }
    }

    pub fn context_dim(&self) -> usize {
        self.m.unwrap_or(match self.kind {
            GeneratorKind::LatentClusters => self.clusters,
            GeneratorKind::LinearVc | GeneratorKind::Homogeneous => 2,
            _ => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise must be a finite value >= 0, got {}", self.noise));
        }
        let m = self.context_dim();
        if m == 0 {
            return bad("m must be >= 1".into());
        }
        match self.kind {
            GeneratorKind::SmoothVc | GeneratorKind::HoldoutInterval if m != 1 => {
                return bad(format!("{:?} requires m = 1, got {m}", self.kind));
            }
            GeneratorKind::LatentClusters => {
                if self.clusters < 2 {
                    return bad("latent clusters need at least 2 clusters".into());
                }
                if m != self.clusters {
                    return bad(format!("latent clusters require m = clusters ({}), got {m}", self.clusters));
                }
                if !(self.context_noise >= 0.0) || !(0.0..=1.0).contains(&self.flip_prob) {
                    return bad("context_noise must be >= 0 and flip_prob in [0, 1]".into());
                }
            }
            GeneratorKind::HoldoutInterval => {
                let [lo, hi] = self.holdout;
                if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                    return bad(format!("holdout bounds must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"));
                }
                if lo == 0.0 && hi == 1.0 {
                    return bad("holdout covers the whole context range; no training region remains".into());
                }
                if self.n_test == 0 {
                    return bad("holdout needs n_test >= 1".into());
                }
            }
            GeneratorKind::BimodalOutcome => {
                if !(self.component_sd > 0.0) {
                    return bad("component_sd must be > 0".into());
                }
            }
            GeneratorKind::LinearVc => {
                if let Some(b) = &self.beta {
                    if b.len() != self.p || b.iter().any(|r| r.len() != m) {
                        return bad(format!("beta must have {} rows of {m} entries", self.p));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// The analytic outcome density of the bimodal generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueDensity {
    pub means: Vec<f64>,
    pub sd: f64,
}

impl TrueDensity {
    pub fn pdf(&self, y: f64) -> f64 {
        let norm = 1.0 / (self.sd * (2.0 * PI).sqrt());
        self.means
            .iter()
            .map(|m| norm * (-0.5 * ((y - m) / self.sd).powi(2)).exp())
            .sum::<f64>()
            / self.means.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// True sample model per generated row.
    pub models: Vec<SampleModel>,
    pub labels: Option<Vec<usize>>,
    pub density: Option<TrueDensity>,
    /// Linear VC coefficient matrix, p × m.
    pub beta: Option<Matrix>,
}

impl GroundTruth {
    pub fn coefficients(&self) -> Matrix {
        let p = self.models.first().map_or(0, |m| m.coefficients.len());
        Matrix::from_fn(self.models.len(), p, |i, j| self.models[i].coefficients[j])
    }

    /// `sample_id, coef_0.., offset, cluster` (cluster empty when unlabeled).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let p = self.models.first().map_or(0, |m| m.coefficients.len());
        let mut header = vec!["sample_id".to_string()];
        header.extend((0..p).map(|j| format!("coef_{j}")));
        header.push("offset".into());
        header.push("cluster".into());
        w.write_record(&header)?;
        for (i, m) in self.models.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(m.coefficients.iter().map(|&v| fmt_f64(v)));
            rec.push(fmt_f64(m.offset));
            rec.push(self.labels.as_ref().map_or(String::new(), |l| l[i].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub data: Dataset,
    pub truth: GroundTruth,
    /// Held-out rows for the holdout-interval kind.
    pub test: Option<(Dataset, GroundTruth)>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn smooth_theta(c: f64, p: usize) -> Vec<f64> {
    (0..p).map(|j| (2.0 * PI * c).sin() / (j + 1) as f64).collect()
}

/// Draws `X ~ N(0, I)` and `Y = X·θ + offset + σε` for the given per-row models.
fn respond(rng: &mut ChaCha8Rng, models: &[SampleModel], p: usize, noise: f64) -> (Matrix, Vec<f64>) {
    let n = models.len();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for (i, m) in models.iter().enumerate() {
        for j in 0..p {
            x.set(i, j, normal(rng));
        }
        let mean = m.linear_predictor(x.row(i)).expect("generator widths agree");
        y.push(mean + noise * normal(rng));
    }
    (x, y)
}

fn smooth_rows(rng: &mut ChaCha8Rng, contexts: Vec<f64>, p: usize, noise: f64) -> Result<(Dataset, GroundTruth)> {
    let models: Vec<SampleModel> = contexts.iter().map(|&c| SampleModel::linear(smooth_theta(c, p), 0.0)).collect();
    let (x, y) = respond(rng, &models, p, noise);
    let data = Dataset::from_parts(Matrix::column_vector(&contexts), x, y)?;
    Ok((data, GroundTruth { models, labels: None, density: None, beta: None }))
}

/// Coefficient vector of latent cluster `k` of `k_total`: entries ±(2k − (K − 1)).
pub fn cluster_coefficients(k: usize, k_total: usize, p: usize) -> Vec<f64> {
    let level = 2.0 * k as f64 - (k_total as f64 - 1.0);
    (0..p).map(|j| if j % 2 == 0 { level } else { -level }).collect()
}

/// Runs the generator described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, p, m) = (spec.n, spec.p, spec.context_dim());
    let no_test = |(data, truth)| Generated { data, truth, test: None };
    Ok(match spec.kind {
        GeneratorKind::SmoothVc => {
            let cs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            no_test(smooth_rows(&mut rng, cs, p, spec.noise)?)
        }
        GeneratorKind::HoldoutInterval => {
            let [lo, hi] = spec.holdout;
            let width = hi - lo;
            let cs: Vec<f64> = (0..n)
                .map(|_| {
                    let u = rng.random::<f64>() * (1.0 - width);
                    if u < lo {
                        u
                    } else {
                        u + width
                    }
                })
                .collect();
            let train = smooth_rows(&mut rng, cs, p, spec.noise)?;
            let ts: Vec<f64> = (0..spec.n_test).map(|_| lo + width * rng.random::<f64>()).collect();
            let test = smooth_rows(&mut rng, ts, p, spec.noise)?;
            Generated {
                data: train.0,
                truth: train.1,
                test: Some(test),
            }
        }
        GeneratorKind::LatentClusters => {
            let k_total = spec.clusters;
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_total)).collect();
            let mut context = Matrix::zeros(n, m);
            for (i, &k) in labels.iter().enumerate() {
                let shown = if spec.flip_prob > 0.0 && rng.random::<f64>() < spec.flip_prob {
                    (k + 1 + rng.random_range(0..k_total - 1)) % k_total
                } else {
                    k
                };
                for j in 0..m {
                    let base = if j == shown { 1.0 } else { 0.0 };
                    let blur = if spec.context_noise > 0.0 { spec.context_noise * normal(&mut rng) } else { 0.0 };
                    context.set(i, j, base + blur);
                }
            }
            let models: Vec<SampleModel> = labels
                .iter()
                .map(|&k| SampleModel::linear(cluster_coefficients(k, k_total, p), 0.0))
                .collect();
            let (x, y) = respond(&mut rng, &models, p, spec.noise);
            Generated {
                data: Dataset::from_parts(context, x, y)?,
                truth: GroundTruth {
                    models,
                    labels: Some(labels),
                    density: None,
                    beta: None,
                },
                test: None,
            }
        }
        GeneratorKind::BimodalOutcome => {
            let context = Matrix::filled(n, m, 1.0);
            let sd = spec.component_sd;
            let mut x = Matrix::zeros(n, p);
            let mut y = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for i in 0..n {
                for j in 0..p {
                    x.set(i, j, normal(&mut rng));
                }
                let k = usize::from(rng.random::<bool>());
                labels.push(k);
                y.push(spec.component_means[k] + sd * normal(&mut rng));
            }
            let models = labels
                .iter()
                .map(|&k| SampleModel {
                    coefficients: vec![0.0; p],
                    offset: spec.component_means[k],
                    aux: Some(Aux::LogVariance(2.0 * sd.ln())),
                })
                .collect();
            Generated {
                data: Dataset::from_parts(context, x, y)?,
                truth: GroundTruth {
                    models,
                    labels: Some(labels),
                    density: Some(TrueDensity {
                        means: spec.component_means.to_vec(),
                        sd,
                    }),
                    beta: None,
                },
                test: None,
            }
        }
        GeneratorKind::Homogeneous => {
            let coef: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
            let offset = normal(&mut rng);
            let context = Matrix::from_fn(n, m, |_, _| normal(&mut rng));
            let models = vec![SampleModel::linear(coef, offset); n];
            let (x, y) = respond(&mut rng, &models, p, spec.noise);
            Generated {
                data: Dataset::from_parts(context, x, y)?,
                truth: GroundTruth { models, labels: None, density: None, beta: None },
                test: None,
            }
        }
        GeneratorKind::LinearVc => {
            let beta = match &spec.beta {
                Some(rows) => Matrix::from_rows(rows)?,
                None => Matrix::from_fn(p, m, |_, _| normal(&mut rng)),
            };
            let context = Matrix::from_fn(n, m, |_, _| normal(&mut rng));
            let models: Vec<SampleModel> = (0..n)
                .map(|i| {
                    let c = context.row(i);
                    let coef = (0..p).map(|j| beta.row(j).iter().zip(c).map(|(b, v)| b * v).sum()).collect();
                    SampleModel::linear(coef, 0.0)
                })
                .collect();
            let (x, y) = respond(&mut rng, &models, p, spec.noise);
            Generated {
                data: Dataset::from_parts(context, x, y)?,
                truth: GroundTruth {
                    models,
                    labels: None,
                    density: None,
                    beta: Some(beta),
                },
                test: None,
            }
        }
    })
}

/// Root mean squared coefficient error over all samples and predictors.
pub fn coefficient_rmse(estimated: &[SampleModel], truth: &[SampleModel]) -> Result<f64> {
    if estimated.len() != truth.len() || estimated.is_empty() {
        return Err(Error::Data(format!(
            "cannot compare {} estimated models with {} true models",
            estimated.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (e, t) in estimated.iter().zip(truth) {
        if e.coefficients.len() != t.coefficients.len() {
            return Err(Error::Data("coefficient lengths differ".into()));
        }
        for (a, b) in e.coefficients.iter().zip(&t.coefficients) {
            total += (a - b).powi(2);
            count += 1;
        }
    }
    Ok((total / count as f64).sqrt())
}

pub const DEFAULT_COHORT_BINS: usize = 5;
pub const COHORT_ROWS_PER_PARAM: usize = 5;

/// Independent least-squares models on equal-width bins of the first
/// context column; queries use the nearest fitted bin. Bins with fewer than
/// [`COHORT_ROWS_PER_PARAM`] rows per parameter are left unfitted.
#[derive(Clone, Debug)]
pub struct CohortBaseline {
    pub lo: f64,
    pub hi: f64,
    pub models: Vec<Option<SampleModel>>,
}

impl CohortBaseline {
    pub fn fit(data: &Dataset, bins: usize) -> Result<Self> {
        if bins == 0 || data.n() == 0 || data.context_dim() == 0 {
            return Err(Error::Config("cohort baseline needs bins >= 1 and a non-empty context".into()));
        }
        let c = data.context.column(0);
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut members = vec![Vec::new(); bins];
        for (i, &v) in c.iter().enumerate() {
            members[bin_of(v, lo, hi, bins)].push(i);
        }
        let models = members
            .iter()
            .map(|rows| {
                if rows.len() < COHORT_ROWS_PER_PARAM * (data.predictor_dim() + 1) {
                    return Ok(None);
                }
                let x = data.predictors.select_rows(rows);
                let y: Vec<f64> = rows.iter().map(|&i| data.outcome[i]).collect();
                let (w, b) = ols_with_intercept(&x, &y)?;
                Ok(Some(SampleModel::linear(w, b)))
            })
            .collect::<Result<Vec<_>>>()?;
        if models.iter().all(Option::is_none) {
            return Err(Error::Data("no cohort bin holds enough rows to fit".into()));
        }
        Ok(Self { lo, hi, models })
    }

    pub fn bins(&self) -> usize {
        self.models.len()
    }

    fn center(&self, b: usize) -> f64 {
        let width = (self.hi - self.lo) / self.bins() as f64;
        self.lo + width * (b as f64 + 0.5)
    }

    /// The model of the fitted bin whose center is nearest to `c`.
    pub fn model_for(&self, c: f64) -> &SampleModel {
        let mut best: Option<(f64, &SampleModel)> = None;
        for (b, m) in self.models.iter().enumerate() {
            if let Some(m) = m {
                let d = (c - self.center(b)).abs();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, m));
                }
            }
        }
        best.expect("at least one bin holds data").1
    }

    pub fn sample_models(&self, context: &Matrix) -> Vec<SampleModel> {
        (0..context.rows()).map(|i| self.model_for(context.get(i, 0)).clone()).collect()
    }
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: GeneratorKind, n: usize) -> GeneratorSpec {
        GeneratorSpec::new(kind, n, 11)
    }

    #[test]
    fn smooth_vc_noiseless_is_exact() {
        let mut s = spec(GeneratorKind::SmoothVc, 50);
        s.noise = 0.0;
        s.p = 2;
        let g = generate(&s).unwrap();
        for i in 0..50 {
            let c = g.data.context.get(i, 0);
            let x = g.data.predictors.row(i);
            let want = x[0] * (2.0 * PI * c).sin() + x[1] * (2.0 * PI * c).sin() / 2.0;
            assert!((g.data.outcome[i] - want).abs() < 1e-12);
        }
        assert!((smooth_theta(0.25, 1)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generators_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [
            GeneratorKind::SmoothVc,
            GeneratorKind::LatentClusters,
            GeneratorKind::HoldoutInterval,
            GeneratorKind::BimodalOutcome,
            GeneratorKind::Homogeneous,
            GeneratorKind::LinearVc,
        ] {
            let s = spec(kind, 40);
            let a = generate(&s).unwrap();
            let b = generate(&s).unwrap();
            assert_eq!(a.data, b.data, "{kind:?}");
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.truth.models.len(), a.data.n());
            let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
            a.data.write_csv(&pa).unwrap();
            b.data.write_csv(&pb).unwrap();
            assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
            a.truth.write_csv(&pa).unwrap();
            b.truth.write_csv(&pb).unwrap();
            assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        }
    }

    #[test]
    fn latent_clusters_contexts_and_sizes() {
        let mut s = spec(GeneratorKind::LatentClusters, 1000);
        s.clusters = 3;
        let g = generate(&s).unwrap();
        let labels = g.truth.labels.as_ref().unwrap();
        for (i, &k) in labels.iter().enumerate() {
            for j in 0..3 {
                assert_eq!(g.data.context.get(i, j), if j == k { 1.0 } else { 0.0 });
            }
        }
        for k in 0..3 {
            let size = labels.iter().filter(|&&l| l == k).count() as f64;
            assert!((size - 1000.0 / 3.0).abs() <= 0.2 * 1000.0 / 3.0, "{size}");
        }
        for a in 0..3 {
            for b in a + 1..3 {
                let d: f64 = cluster_coefficients(a, 3, 2)
                    .iter()
                    .zip(cluster_coefficients(b, 3, 2))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= 2.0);
            }
        }
        s.m = Some(2);
        assert!(matches!(generate(&s), Err(Error::Config(_))));
    }

    #[test]
    fn holdout_interval_respects_gap() {
        let g = generate(&spec(GeneratorKind::HoldoutInterval, 500)).unwrap();
        assert!(g.data.context.data().iter().all(|&c| !(c > 0.4 && c < 0.6)));
        let (test, truth) = g.test.unwrap();
        assert!(test.context.data().iter().all(|&c| (0.4..=0.6).contains(&c)));
        assert_eq!(truth.models.len(), test.n());
        let mut s = spec(GeneratorKind::HoldoutInterval, 10);
        s.holdout = [0.0, 1.0];
        assert!(matches!(generate(&s), Err(Error::Config(_))));
        s.holdout = [0.6, 0.4];
        assert!(generate(&s).is_err());
    }

    #[test]
    fn bimodal_mean_and_density() {
        let g = generate(&spec(GeneratorKind::BimodalOutcome, 10_000)).unwrap();
        let mean = g.data.outcome.iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.1, "{mean}");
        let d = g.truth.density.unwrap();
        // ½·2·N(0; 2, 0.25)
        let want = (-8.0f64).exp() / (0.5 * (2.0 * PI).sqrt());
        assert!((d.pdf(0.0) - want).abs() < 1e-15);
        assert!((d.pdf(0.0) - 0.000268).abs() < 1e-6);
    }

    #[test]
    fn residuals_are_centred() {
        for kind in [GeneratorKind::SmoothVc, GeneratorKind::LinearVc, GeneratorKind::Homogeneous] {
            let mut s = spec(kind, 2000);
            s.noise = 0.5;
            let g = generate(&s).unwrap();
            let r: f64 = (0..2000)
                .map(|i| g.data.outcome[i] - g.truth.models[i].linear_predictor(g.data.predictors.row(i)).unwrap())
                .sum::<f64>()
                / 2000.0;
            assert!(r.abs() < 3.0 * 0.5 / (2000f64).sqrt(), "{kind:?}: {r}");
        }
    }

    #[test]
    fn homogeneous_truth_identical() {
        let g = generate(&spec(GeneratorKind::Homogeneous, 30)).unwrap();
        assert!(g.truth.models.iter().all(|m| m == &g.truth.models[0]));
    }

    #[test]
    fn cohort_baseline_uses_nearest_bin() {
        // ten rows near each end with slopes +1 / -1, and a lone row in the
        // middle bin that is too small to fit
        let mut c = Vec::new();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            let v = 1.0 + i as f64;
            c.extend([0.01 * i as f64, 1.0 - 0.01 * i as f64]);
            x.extend([v, v]);
            y.extend([v, -v]);
        }
        c.push(0.5);
        x.push(1.0);
        y.push(9.0);
        let d = Dataset::from_parts(Matrix::column_vector(&c), Matrix::column_vector(&x), y).unwrap();
        let b = CohortBaseline::fit(&d, 5).unwrap();
        assert!(b.models[1].is_none() && b.models[2].is_none() && b.models[3].is_none());
        assert!((b.model_for(0.35).coefficients[0] - 1.0).abs() < 1e-12);
        assert!((b.model_for(0.45).coefficients[0] - 1.0).abs() < 1e-12);
        assert!((b.model_for(0.65).coefficients[0] + 1.0).abs() < 1e-12);
        assert!((b.model_for(0.05).coefficients[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_values() {
        let a = vec![SampleModel::linear(vec![1.0, 2.0], 0.0)];
        let b = vec![SampleModel::linear(vec![1.0, 0.0], 5.0)];
        assert!((coefficient_rmse(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(coefficient_rmse(&a, &[]).is_err());
    }
}
