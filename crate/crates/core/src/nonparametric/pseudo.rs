use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Matrix, ParamStore};
use crate::data::Dataset;
use crate::encoders::{EncoderKind, EncoderSpec, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::glm::{Aux, Family, LikelihoodSpec, RegularizationSpec};
use crate::linalg::ols_with_intercept;
use crate::training::{fit, rng_stream, FittedModel, TrainConfig, STREAM_PSEUDO};

/// How the fixed noise draws are paired with training rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Sorted draws follow the rank of each row's residual under a
    /// population least-squares fit, so Z indexes the conditional quantile.
    #[default]
    ResidualRank,
    /// Draws are paired with rows in sampling order.
    Independent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PseudoConfig {
    pub d_z: usize,
    pub coupling: Coupling,
    pub encoder: EncoderKind,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
}

impl Default for PseudoConfig {
    fn default() -> Self {
        Self {
            d_z: 1,
            coupling: Coupling::ResidualRank,
            encoder: EncoderKind::Mlp,
            hidden_layers: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Relu,
        }
    }
}

/// Noise coordinates appended to the context, one fixed draw per training row.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoContext {
    pub d_z: usize,
    pub base_context_dim: usize,
    pub coupling: Coupling,
    /// n × d_z, row-aligned with the training data.
    pub draws: Matrix,
}

impl PseudoContext {
    pub fn names(&self) -> Vec<String> {
        pseudo_names(self.d_z)
    }

    /// `[c | z]` for every stored draw `z`.
    pub fn extend(&self, c: &[f64]) -> Result<Matrix> {
        if c.len() != self.base_context_dim {
            return Err(Error::Data(format!(
                "context: expected {} columns, found {}",
                self.base_context_dim,
                c.len()
            )));
        }
        let n = self.draws.rows();
        let width = self.base_context_dim + self.d_z;
        Ok(Matrix::from_fn(n, width, |i, j| {
            if j < self.base_context_dim {
                c[j]
            } else {
                self.draws.get(i, j - self.base_context_dim)
            }
        }))
    }

    /// Encoder outputs averaged over the stored draws, one row per context row.
    pub fn integrate(&self, encoder: &EncoderSpec, params: &ParamStore, context: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(context.rows(), encoder.output_dim);
        for r in 0..context.rows() {
            let ext = self.extend(context.row(r))?;
            let enc = encoder.encode(params, &ext)?.output;
            let means = enc.column_sums().scale(1.0 / ext.rows() as f64);
            out.row_mut(r).copy_from_slice(means.data());
        }
        Ok(out)
    }
}

pub fn pseudo_names(d_z: usize) -> Vec<String> {
    (0..d_z).map(|j| format!("pseudo_z{j}")).collect()
}

fn draw_noise(dataset: &Dataset, d_z: usize, coupling: Coupling, seed: u64) -> Result<Matrix> {
    let n = dataset.n();
    let mut rng = rng_stream(seed, STREAM_PSEUDO);
    let raw = Matrix::from_fn(n, d_z, |_, _| StandardNormal.sample(&mut rng));
    match coupling {
        Coupling::Independent => Ok(raw),
        Coupling::ResidualRank => {
            let (w, b) = ols_with_intercept(&dataset.predictors, &dataset.outcome)?;
            let resid: Vec<f64> = (0..n)
                .map(|i| {
                    let fitted: f64 = b + dataset.predictors.row(i).iter().zip(&w).map(|(x, c)| x * c).sum::<f64>();
                    dataset.outcome[i] - fitted
                })
                .collect();
            let mut by_resid: Vec<usize> = (0..n).collect();
            by_resid.sort_by(|&a, &b| resid[a].total_cmp(&resid[b]).then(a.cmp(&b)));
            let mut by_draw: Vec<usize> = (0..n).collect();
            by_draw.sort_by(|&a, &b| raw.get(a, 0).total_cmp(&raw.get(b, 0)).then(a.cmp(&b)));
            let mut z = Matrix::zeros(n, d_z);
            for (&row, &draw) in by_resid.iter().zip(&by_draw) {
                z.row_mut(row).copy_from_slice(raw.row(draw));
            }
            Ok(z)
        }
    }
}

/// Fits a heteroskedastic contextualized model on `[C | Z]` with fixed
/// standard-normal draws `Z`. `d_z = 0` is a plain fit on `C`.
pub fn fit_pseudo(dataset: &Dataset, pseudo: &PseudoConfig, reg: &RegularizationSpec, cfg: &TrainConfig) -> Result<FittedModel> {
    let m = dataset.context_dim();
    let p = dataset.predictor_dim();
    let likelihood = LikelihoodSpec::new(Family::HeteroGaussian);
    let encoder = |context_dim| EncoderSpec {
        kind: pseudo.encoder,
        context_dim,
        output_dim: likelihood.output_dim(p),
        hidden_layers: pseudo.hidden_layers.clone(),
        activation: pseudo.activation,
        archetypes: 0,
    };
    if pseudo.d_z == 0 {
        return fit(dataset, &encoder(m), &likelihood, reg, cfg);
    }
    let draws = draw_noise(dataset, pseudo.d_z, pseudo.coupling, cfg.seed)?;
    let extended = dataset.with_extra_context(&draws, pseudo_names(pseudo.d_z))?;
    let mut model = fit(&extended, &encoder(m + pseudo.d_z), &likelihood, reg, cfg)?;
    model.roles = dataset.roles.clone();
    model.pseudo = Some(PseudoContext {
        d_z: pseudo.d_z,
        base_context_dim: m,
        coupling: pseudo.coupling,
        draws,
    });
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Density {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// Trapezoid integral of `density` over `grid`.
    pub integral: f64,
    /// The grid does not reach ±4σ around every component.
    pub narrow_grid: bool,
    pub component_means: Vec<f64>,
    pub component_sds: Vec<f64>,
}

/// Per-draw Gaussian components `(means, sds)` at one `(c, x)`.
pub fn pseudo_components(model: &FittedModel, c: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ps = model
        .pseudo
        .as_ref()
        .ok_or_else(|| Error::NotPseudo("density evaluation needs pseudo-sampled noise draws".into()))?;
    if x.len() != model.predictor_dim() {
        return Err(Error::Data(format!(
            "predictors: expected {} columns, found {}",
            model.predictor_dim(),
            x.len()
        )));
    }
    let ext = ps.extend(c)?;
    let out = model.encoder.encode(&model.params, &ext)?.output;
    let mut means = Vec::with_capacity(out.rows());
    let mut sds = Vec::with_capacity(out.rows());
    for r in 0..out.rows() {
        let s = model.likelihood.sample_model(out.row(r), x.len())?;
        let lv = match s.aux {
            Some(Aux::LogVariance(lv)) => lv,
            _ => model.likelihood.log_variance,
        };
        means.push(s.linear_predictor(x)?);
        sds.push((0.5 * lv).exp());
    }
    Ok((means, sds))
}

fn normal_pdf(y: f64, mean: f64, sd: f64) -> f64 {
    let z = (y - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Trapezoid rule.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Mixture density over the model's stored noise draws at `(c, x)`.
pub fn pseudo_density(model: &FittedModel, c: &[f64], x: &[f64], y_grid: &[f64]) -> Result<Density> {
    if y_grid.len() < 2 || y_grid.iter().any(|v| !v.is_finite()) || y_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("y grid must hold at least two finite, strictly increasing values".into()));
    }
    let (means, sds) = pseudo_components(model, c, x)?;
    Ok(mixture_density(means, sds, y_grid))
}

pub(crate) fn mixture_density(means: Vec<f64>, sds: Vec<f64>, y_grid: &[f64]) -> Density {
    let k = means.len() as f64;
    let density: Vec<f64> = y_grid
        .par_iter()
        .map(|&y| means.iter().zip(&sds).map(|(&m, &s)| normal_pdf(y, m, s)).sum::<f64>() / k)
        .collect();
    let lo = y_grid[0];
    let hi = y_grid[y_grid.len() - 1];
    let narrow_grid = means.iter().zip(&sds).any(|(m, s)| m - 4.0 * s < lo || m + 4.0 * s > hi);
    Density {
        integral: trapezoid(y_grid, &density),
        grid: y_grid.to_vec(),
        density,
        narrow_grid,
        component_means: means,
        component_sds: sds,
    }
}

/// A grid of `points` values covering ±6σ around every component at `(c, x)`.
pub fn adaptive_grid(model: &FittedModel, c: &[f64], x: &[f64], points: usize) -> Result<Vec<f64>> {
    let (means, sds) = pseudo_components(model, c, x)?;
    let lo = means.iter().zip(&sds).map(|(m, s)| m - 6.0 * s).fold(f64::INFINITY, f64::min);
    let hi = means.iter().zip(&sds).map(|(m, s)| m + 6.0 * s).fold(f64::NEG_INFINITY, f64::max);
    Ok(super::linspace(lo, hi, points.max(2)))
}

/// `½ ∫ |p − q|` by the trapezoid rule on a shared grid.
pub fn total_variation(grid: &[f64], p: &[f64], q: &[f64]) -> Result<f64> {
    if grid.len() != p.len() || grid.len() != q.len() {
        return Err(Error::Data("density arrays must match the grid length".into()));
    }
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    Ok(0.5 * trapezoid(grid, &diff))
}
