use std::f64::consts::PI;

use contextualized::autodiff::Matrix;
use contextualized::data::Dataset;
use contextualized::datagen::{generate, GeneratorKind, GeneratorSpec};
use contextualized::encoders::EncoderSpec;
use contextualized::glm::{LikelihoodSpec, RegularizationSpec};
use contextualized::nonparametric::{
    adaptive_grid, cluster_atoms, fit_atoms, fit_pseudo, linspace, pseudo_components, pseudo_density,
    stitch_transmission, KMeansOptions, PseudoConfig,
};
use contextualized::training::{fit, TrainConfig};

fn cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 300,
        learning_rate: 5e-3,
        patience: 30,
        seed,
        ..Default::default()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn homogeneous_atoms_agree() {
    let g = generate(&GeneratorSpec::new(GeneratorKind::Homogeneous, 400, 3)).unwrap();
    let atoms = fit_atoms(&g.data, 10, &cfg(3)).unwrap();
    let vs = atoms.parameter_vectors();
    for a in &vs {
        for b in &vs {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            assert!(norm(&d) < 0.1, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn one_atom_per_row_when_l_is_n() {
    let g = generate(&GeneratorSpec::new(GeneratorKind::SmoothVc, 30, 4)).unwrap();
    let small = TrainConfig { max_epochs: 5, ..cfg(4) };
    let atoms = fit_atoms(&g.data, 30, &small).unwrap();
    assert_eq!(atoms.anchors, (0..30).collect::<Vec<_>>());
    assert_eq!(atoms.len(), 30);
    assert!(fit_atoms(&g.data, 31, &small).is_err());
    assert!(fit_atoms(&g.data, 0, &small).is_err());
}

#[test]
fn two_component_atoms_are_bimodal() {
    let mut spec = GeneratorSpec::new(GeneratorKind::LatentClusters, 400, 5);
    spec.clusters = 2;
    let g = generate(&spec).unwrap();
    let atoms = fit_atoms(&g.data, 16, &cfg(5)).unwrap();
    let labels = g.truth.labels.unwrap();
    for (atom, &row) in atoms.atoms.iter().zip(&atoms.anchors) {
        let want = if labels[row] == 0 { -1.0 } else { 1.0 };
        assert!((atom.coefficients[0] - want).abs() < 0.1, "row {row}: {:?}", atom.coefficients);
    }
    let c = cluster_atoms(&atoms, 2, &KMeansOptions::default()).unwrap();
    for (a, &row) in atoms.anchors.iter().enumerate() {
        for (b, &other) in atoms.anchors.iter().enumerate() {
            assert_eq!(c.assignments[a] == c.assignments[b], labels[row] == labels[other]);
        }
    }
}

#[test]
fn stitched_sine_tracks_truth() {
    let n = 600;
    let xs: Vec<f64> = (0..n).map(|i| 2.0 * PI * (i as f64 + 0.5) / n as f64).collect();
    // small deterministic jitter stands in for noise
    let y: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + 0.02 * ((i * 7919) % 13) as f64 / 13.0 - 0.01).collect();
    let data = Dataset::from_parts(Matrix::column_vector(&xs), Matrix::column_vector(&xs), y).unwrap();
    let train = TrainConfig {
        max_epochs: 1500,
        learning_rate: 3e-3,
        patience: 100,
        seed: 6,
        ..Default::default()
    };
    let atoms = fit_atoms(&data, 50, &train).unwrap();
    // With context equal to the predictor only each line's value at its own
    // anchor is identified, so the curve is checked across the anchors' span.
    let lo = xs[atoms.anchors[0]];
    let hi = xs[*atoms.anchors.last().unwrap()];
    let grid = linspace(lo, hi, 200);
    let comp = stitch_transmission(&atoms, &[0; 50], 0, &grid, 0).unwrap();
    let worst = grid.iter().zip(&comp.yhat).map(|(x, y)| (x.sin() - y).abs()).fold(0.0, f64::max);
    assert!(hi - lo > 0.8 * 2.0 * PI, "anchors span [{lo}, {hi}]");
    assert!(worst < 0.1, "max error {worst}");
}

fn bimodal(n: usize, seed: u64) -> Dataset {
    generate(&GeneratorSpec::new(GeneratorKind::BimodalOutcome, n, seed)).unwrap().data
}

#[test]
fn zero_noise_dimensions_is_plain_fit() {
    let data = bimodal(60, 7);
    let c = TrainConfig { max_epochs: 20, ..cfg(7) };
    let pseudo = PseudoConfig {
        d_z: 0,
        ..Default::default()
    };
    let a = fit_pseudo(&data, &pseudo, &RegularizationSpec::default(), &c).unwrap();
    let lik = LikelihoodSpec::new(contextualized::glm::Family::HeteroGaussian);
    let enc = EncoderSpec::mlp(1, lik.output_dim(1));
    let b = fit(&data, &enc, &lik, &RegularizationSpec::default(), &c).unwrap();
    assert!(a.pseudo.is_none());
    for id in b.params.ids() {
        assert_eq!(b.params.value(id), a.params.get(b.params.name(id)).unwrap());
    }
}

#[test]
fn single_sample_gives_single_gaussian() {
    let data = Dataset::from_parts(Matrix::filled(1, 1, 1.0), Matrix::filled(1, 1, 0.3), vec![1.7]).unwrap();
    let c = TrainConfig {
        max_epochs: 500,
        learning_rate: 1e-2,
        seed: 8,
        ..Default::default()
    };
    let model = fit_pseudo(&data, &PseudoConfig::default(), &RegularizationSpec::default(), &c).unwrap();
    let (means, sds) = pseudo_components(&model, &[1.0], &[0.3]).unwrap();
    assert_eq!(means.len(), 1);
    assert!((means[0] - 1.7).abs() < 0.1, "{means:?}");
    let grid = adaptive_grid(&model, &[1.0], &[0.3], 801).unwrap();
    let d = pseudo_density(&model, &[1.0], &[0.3], &grid).unwrap();
    let peak = d.grid[d.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0];
    assert!((peak - means[0]).abs() < 2.0 * (grid[1] - grid[0]), "peak {peak}, sd {}", sds[0]);
}

#[test]
fn bimodal_outcome_yields_separate_means() {
    let data = bimodal(400, 9);
    let model = fit_pseudo(&data, &PseudoConfig::default(), &RegularizationSpec::default(), &cfg(9)).unwrap();
    let (means, _) = pseudo_components(&model, &[1.0], &[0.0]).unwrap();
    assert!(means.iter().any(|&m| m < -1.0), "no component near -2");
    assert!(means.iter().any(|&m| m > 1.0), "no component near +2");

    let grid = adaptive_grid(&model, &[1.0], &[0.0], 2001).unwrap();
    let d = pseudo_density(&model, &[1.0], &[0.0], &grid).unwrap();
    assert!(d.density.iter().all(|&v| v >= 0.0));
    assert!((d.integral - 1.0).abs() < 1e-2, "integral {}", d.integral);
    assert!(!d.narrow_grid);
}

#[test]
fn density_requires_pseudo_model() {
    let data = bimodal(40, 10);
    let lik = LikelihoodSpec::gaussian();
    let plain = fit(&data, &EncoderSpec::mlp(1, 2), &lik, &RegularizationSpec::default(), &TrainConfig {
        max_epochs: 3,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(
        pseudo_density(&plain, &[1.0], &[0.0], &[0.0, 1.0]),
        Err(contextualized::Error::NotPseudo(_))
    ));
}
