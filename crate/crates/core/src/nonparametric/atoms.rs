use rand::seq::index;

use crate::autodiff::Matrix;
use crate::data::Dataset;
use crate::encoders::EncoderSpec;
use crate::error::{Error, Result};
use crate::glm::{LikelihoodSpec, RegularizationSpec, SampleModel};
use crate::training::{fit, rng_stream, FittedModel, TrainConfig, STREAM_ANCHORS};

/// Hidden widths of the deliberately over-parameterized atom encoder.
pub const ATOM_HIDDEN: [usize; 2] = [64, 64];

/// Sample models evaluated at anchor training rows of one fitted model.
#[derive(Clone, Debug)]
pub struct AtomSet {
    pub atoms: Vec<SampleModel>,
    /// Training row of each atom, ascending.
    pub anchors: Vec<usize>,
    pub anchor_context: Matrix,
    pub anchor_predictors: Matrix,
    pub model: FittedModel,
}

impl AtomSet {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Coefficients followed by the offset, one vector per atom.
    pub fn parameter_vectors(&self) -> Vec<Vec<f64>> {
        self.atoms.iter().map(atom_vector).collect()
    }
}

pub(crate) fn atom_vector(m: &SampleModel) -> Vec<f64> {
    let mut v = m.coefficients.clone();
    v.push(m.offset);
    v
}

/// Seeded uniform subsample of `l` distinct rows out of `n`, ascending.
pub fn choose_anchors(n: usize, l: usize, seed: u64) -> Result<Vec<usize>> {
    if l == 0 || l > n {
        return Err(Error::Config(format!("atom count must lie in 1..={n}, got {l}")));
    }
    let mut idx = index::sample(&mut rng_stream(seed, STREAM_ANCHORS), n, l).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Fits a high-capacity mlp-encoded linear model without regularization and
/// reads off `l` atoms at anchor rows.
pub fn fit_atoms(dataset: &Dataset, l: usize, cfg: &TrainConfig) -> Result<AtomSet> {
    let encoder = EncoderSpec::mlp(dataset.context_dim(), dataset.predictor_dim() + 1).with_hidden(ATOM_HIDDEN.to_vec());
    fit_atoms_with(dataset, l, &encoder, cfg)
}

pub fn fit_atoms_with(dataset: &Dataset, l: usize, encoder: &EncoderSpec, cfg: &TrainConfig) -> Result<AtomSet> {
    let anchors = choose_anchors(dataset.n(), l, cfg.seed)?;
    let model = fit(dataset, encoder, &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), cfg)?;
    atoms_from_model(model, dataset, anchors)
}

/// Evaluates an existing model at the given training rows.
pub fn atoms_from_model(model: FittedModel, dataset: &Dataset, anchors: Vec<usize>) -> Result<AtomSet> {
    if let Some(&bad) = anchors.iter().find(|&&i| i >= dataset.n()) {
        return Err(Error::Config(format!("anchor row {bad} is out of range for {} rows", dataset.n())));
    }
    let anchor_context = dataset.context.select_rows(&anchors);
    let anchor_predictors = dataset.predictors.select_rows(&anchors);
    let atoms = model.sample_models(&anchor_context)?;
    Ok(AtomSet {
        atoms,
        anchors,
        anchor_context,
        anchor_predictors,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_are_seeded_distinct_sorted() {
        let a = choose_anchors(100, 10, 4).unwrap();
        assert_eq!(a, choose_anchors(100, 10, 4).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(choose_anchors(7, 7, 1).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(matches!(choose_anchors(5, 6, 0), Err(Error::Config(_))));
        assert!(choose_anchors(5, 0, 0).is_err());
    }
}
