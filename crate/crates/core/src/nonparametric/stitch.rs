use serde::Serialize;

use super::atoms::AtomSet;
use crate::error::{Error, Result};

/// One cluster's smoothed transmission function sampled on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentModel {
    pub cluster: usize,
    pub members: Vec<usize>,
    pub grid: Vec<f64>,
    pub yhat: Vec<f64>,
    pub bandwidth: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median distance from each distinct location to its nearest neighbour.
fn nearest_neighbour_bandwidth(locations: &[f64]) -> f64 {
    let mut u = locations.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() < 2 {
        return 1.0;
    }
    let gaps: Vec<f64> = (0..u.len())
        .map(|i| {
            let left = if i > 0 { u[i] - u[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < u.len() { u[i + 1] - u[i] } else { f64::INFINITY };
            left.min(right)
        })
        .collect();
    median(gaps)
}

/// Kernel-smooths the member atoms of cluster `k` along predictor `predictor`.
///
/// Each atom predicts a line through its anchor; at grid value `x` the lines
/// are averaged with Gaussian weights on the distance between `x` and the
/// atom's anchor value of that predictor. Other predictors stay at each
/// atom's anchor values. Exact duplicate atoms count once.
pub fn stitch_transmission(
    atoms: &AtomSet,
    assignments: &[usize],
    k: usize,
    x_grid: &[f64],
    predictor: usize,
) -> Result<ComponentModel> {
    if assignments.len() != atoms.len() {
        return Err(Error::Data(format!(
            "{} assignments for {} atoms",
            assignments.len(),
            atoms.len()
        )));
    }
    let p = atoms.anchor_predictors.cols();
    if predictor >= p {
        return Err(Error::Config(format!("predictor index {predictor} out of range for {p} predictors")));
    }
    if x_grid.windows(2).any(|w| !(w[0] < w[1])) || x_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("x grid must be finite and strictly increasing".into()));
    }
    let members: Vec<usize> = (0..atoms.len()).filter(|&i| assignments[i] == k).collect();
    if members.is_empty() {
        return Err(Error::Data(format!("cluster {k} has no member atoms")));
    }

    // (anchor location, value of the line at x excluding the stitched term, slope)
    let mut lines: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &members {
        let m = &atoms.atoms[i];
        let x = atoms.anchor_predictors.row(i);
        let rest: f64 = m.offset
            + (0..p)
                .filter(|&j| j != predictor)
                .map(|j| m.coefficients[j] * x[j])
                .sum::<f64>();
        let line = (x[predictor], rest, m.coefficients[predictor]);
        if !lines.contains(&line) {
            lines.push(line);
        }
    }
    let locations: Vec<f64> = lines.iter().map(|l| l.0).collect();
    let h = nearest_neighbour_bandwidth(&locations);

    let yhat = x_grid
        .iter()
        .map(|&x| {
            let logw: Vec<f64> = lines.iter().map(|l| -0.5 * ((x - l.0) / h).powi(2)).collect();
            let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut num = 0.0;
            let mut den = 0.0;
            for (l, lw) in lines.iter().zip(&logw) {
                let w = (lw - top).exp();
                num += w * (l.1 + l.2 * x);
                den += w;
            }
            num / den
        })
        .collect();
    Ok(ComponentModel {
        cluster: k,
        members,
        grid: x_grid.to_vec(),
        yhat,
        bandwidth: h,
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;
    use crate::data::Dataset;
    use crate::encoders::EncoderSpec;
    use crate::glm::{LikelihoodSpec, RegularizationSpec, SampleModel};
    use crate::nonparametric::atoms::atoms_from_model;
    use crate::training::{fit, TrainConfig};

    fn handmade(lines: &[(f64, f64, f64)]) -> AtomSet {
        // atoms with coefficient `slope`, offset `offset`, anchored at x = loc
        let n = lines.len();
        let d = Dataset::from_parts(
            Matrix::from_fn(n, 1, |i, _| lines[i].0),
            Matrix::from_fn(n, 1, |i, _| lines[i].0),
            vec![0.0; n],
        )
        .unwrap();
        let cfg = TrainConfig { max_epochs: 0, ..Default::default() };
        let model = fit(&d, &EncoderSpec::linear(1, 2), &LikelihoodSpec::gaussian(), &RegularizationSpec::default(), &cfg)
            .unwrap();
        let mut set = atoms_from_model(model, &d, (0..n).collect()).unwrap();
        set.atoms = lines.iter().map(|&(_, s, o)| SampleModel::linear(vec![s], o)).collect();
        set
    }

    #[test]
    fn single_atom_reproduces_its_line() {
        let set = handmade(&[(0.5, 2.0, -1.0)]);
        let grid = linspace(-1.0, 3.0, 9);
        let c = stitch_transmission(&set, &[0], 0, &grid, 0).unwrap();
        for (x, y) in grid.iter().zip(&c.yhat) {
            assert!((y - (2.0 * x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicates_do_not_change_output() {
        let base = [(0.0, 1.0, 0.0), (1.0, -1.0, 2.0), (2.5, 0.5, 0.3)];
        let grid = linspace(0.0, 2.5, 11);
        let a = stitch_transmission(&handmade(&base), &[0, 0, 0], 0, &grid, 0).unwrap();
        let mut dup = base.to_vec();
        dup.push(base[1]);
        dup.push(base[1]);
        let b = stitch_transmission(&handmade(&dup), &[0; 5], 0, &grid, 0).unwrap();
        assert_eq!(a.yhat, b.yhat);

        let same = stitch_transmission(&handmade(&[base[0], base[0]]), &[0, 0], 0, &grid, 0).unwrap();
        let one = stitch_transmission(&handmade(&[base[0]]), &[0], 0, &grid, 0).unwrap();
        assert_eq!(same.yhat, one.yhat);
    }

    #[test]
    fn only_cluster_members_contribute() {
        let set = handmade(&[(0.0, 1.0, 0.0), (1.0, 5.0, 5.0)]);
        let grid = linspace(0.0, 1.0, 5);
        let c = stitch_transmission(&set, &[0, 1], 0, &grid, 0).unwrap();
        assert_eq!(c.members, vec![0]);
        for (x, y) in grid.iter().zip(&c.yhat) {
            assert!((y - x).abs() < 1e-12);
        }
        assert!(matches!(stitch_transmission(&set, &[0, 0], 1, &grid, 0), Err(Error::Data(_))));
        assert!(stitch_transmission(&set, &[0, 0], 0, &[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn output_is_continuous() {
        let set = handmade(&[(0.0, 1.0, 0.0), (1.0, -1.0, 2.0), (2.0, 0.0, 1.0)]);
        let grid = linspace(0.0, 2.0, 2001);
        let c = stitch_transmission(&set, &[0, 0, 0], 0, &grid, 0).unwrap();
        let jump = c.yhat.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(jump < 1e-2, "{jump}");
    }

    #[test]
    fn bandwidth_is_median_nearest_gap() {
        assert_eq!(nearest_neighbour_bandwidth(&[0.0, 1.0, 3.0, 3.0]), 1.0);
        assert_eq!(nearest_neighbour_bandwidth(&[0.0, 1.0, 1.5, 4.0]), 0.75);
        assert_eq!(nearest_neighbour_bandwidth(&[2.0]), 1.0);
    }
}
