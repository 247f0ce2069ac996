use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::atoms::AtomSet;
use crate::error::{Error, Result};
use crate::training::{rng_stream, STREAM_KMEANS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Scale each coordinate to unit variance before clustering.
    pub standardize: bool,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            seed: 0,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Cluster id per point, numbered in order of first appearance.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Set when all points coincide and more than one cluster was requested.
    pub degenerate: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if u < d {
                        pick = i;
                        break;
                    }
                    u -= d;
                }
            }
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (k, _) = nearest(p, &centroids);
            if assign[i] != k {
                assign[i] = k;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &k) in points.iter().zip(&assign) {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (k, c) in centroids.iter_mut().enumerate() {
            if counts[k] > 0 {
                *c = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, &k)| sq_dist(p, &centroids[k])).sum();
    (assign, centroids, inertia)
}

fn relabel(assign: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &a in assign {
        if map[a] == usize::MAX {
            map[a] = next;
            next += 1;
        }
    }
    assign.iter().map(|&a| map[a]).collect()
}

fn standardized(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let dim = points[0].len();
    let mut scale = vec![1.0; dim];
    let mut mean = vec![0.0; dim];
    for j in 0..dim {
        mean[j] = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean[j]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    points
        .iter()
        .map(|p| p.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]).collect())
        .collect()
}

/// k-means with k-means++ seeding; the restart with the lowest inertia wins.
pub fn kmeans(points: &[Vec<f64>], k: usize, opts: &KMeansOptions) -> Result<Clustering> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cluster count must lie in 1..={n}, got {k}")));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Data("points have differing dimensions".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("points contain non-finite values".into()));
    }
    let work = if opts.standardize { standardized(points) } else { points.to_vec() };
    if k > 1 && work.iter().all(|p| p == &work[0]) {
        return Ok(Clustering {
            assignments: vec![0; n],
            centroids: vec![points[0].clone()],
            inertia: 0.0,
            degenerate: true,
        });
    }
    let mut rng = rng_stream(opts.seed, STREAM_KMEANS);
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64)> = None;
    for _ in 0..opts.restarts.max(1) {
        let init = plus_plus(&work, k, &mut rng);
        let run = lloyd(&work, init, opts.max_iter);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (assign, _, _) = best.expect("at least one restart");
    let assignments = relabel(&assign, k);
    // centroids and inertia are reported in the original coordinates
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(&assignments) {
        counts[a] += 1;
        for (c, v) in centroids[a].iter_mut().zip(p) {
            *c += v;
        }
    }
    for (c, &m) in centroids.iter_mut().zip(&counts) {
        if m > 0 {
            c.iter_mut().for_each(|v| *v /= m as f64);
        }
    }
    let inertia = points.iter().zip(&assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
    Ok(Clustering {
        assignments,
        centroids,
        inertia,
        degenerate: false,
    })
}

/// k-means on atom parameter vectors (coefficients + offset).
pub fn cluster_atoms(atoms: &AtomSet, k: usize, opts: &KMeansOptions) -> Result<Clustering> {
    kmeans(&atoms.parameter_vectors(), k, opts)
}

fn choose2(v: f64) -> f64 {
    v * (v - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Data(format!("labelings differ in length: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&i, &j) in a.iter().zip(b) {
        table[i][j] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c as f64)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum::<usize>() as f64)).sum();
    let cols: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|r| r[j]).sum::<usize>() as f64))
        .sum();
    let total = choose2(n as f64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn two_groups(seed: u64, per: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * per {
            let g = i % 2;
            let centre = if g == 0 { [-1.0, 0.0] } else { [1.0, 0.0] };
            pts.push(centre.iter().map(|c| c + noise.sample(&mut rng)).collect());
            labels.push(g);
        }
        (pts, labels)
    }

    /// Minimum-inertia 2-partition by enumerating every labeling.
    fn brute_force_two(points: &[Vec<f64>]) -> Vec<usize> {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![0; n]);
        for mask in 1u32..(1 << (n - 1)) {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut inertia = 0.0;
            for g in 0..2 {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == g).map(|(p, _)| p).collect();
                let dim = members[0].len();
                let c: Vec<f64> = (0..dim).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
                inertia += members.iter().map(|p| sq_dist(p, &c)).sum::<f64>();
            }
            if inertia < best.0 {
                best = (inertia, labels);
            }
        }
        best.1
    }

    #[test]
    fn recovers_brute_force_partition() {
        let (pts, truth) = two_groups(3, 6, 0.1);
        let c = kmeans(&pts, 2, &KMeansOptions::default()).unwrap();
        let brute = brute_force_two(&pts);
        assert_eq!(adjusted_rand_index(&c.assignments, &brute).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&c.assignments, &truth).unwrap(), 1.0);
    }

    #[test]
    fn k_equals_n_and_k_one() {
        let (pts, _) = two_groups(1, 4, 0.3);
        let c = kmeans(&pts, pts.len(), &KMeansOptions::default()).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut sorted = c.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..pts.len()).collect::<Vec<_>>());

        let c = kmeans(&pts, 1, &KMeansOptions::default()).unwrap();
        assert!(c.assignments.iter().all(|&a| a == 0));
        for j in 0..2 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64;
            assert!((c.centroids[0][j] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_input_is_flagged() {
        let pts = vec![vec![1.0, 2.0]; 5];
        let c = kmeans(&pts, 3, &KMeansOptions::default()).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.assignments, vec![0; 5]);
        assert!(!kmeans(&pts, 1, &KMeansOptions::default()).unwrap().degenerate);
    }

    #[test]
    fn deterministic_and_permutation_equivariant() {
        let (pts, _) = two_groups(9, 10, 0.1);
        let opts = KMeansOptions { seed: 5, ..Default::default() };
        let a = kmeans(&pts, 2, &opts).unwrap();
        assert_eq!(a, kmeans(&pts, 2, &opts).unwrap());
        let perm: Vec<usize> = (0..pts.len()).rev().collect();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
        let b = kmeans(&permuted, 2, &opts).unwrap();
        let back: Vec<usize> = perm.iter().map(|&i| a.assignments[i]).collect();
        assert_eq!(adjusted_rand_index(&back, &b.assignments).unwrap(), 1.0);
    }

    #[test]
    fn standardize_flag_rescales() {
        // the second coordinate dominates raw distances but carries no group structure
        let second = [0.0, 100.0, 33.0, 66.0, 100.0, 0.0, 66.0, 33.0];
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![if i < 4 { 0.0 } else { 1.0 }, second[i]]).collect();
        let truth = [0, 0, 0, 0, 1, 1, 1, 1];
        let raw = kmeans(&pts, 2, &KMeansOptions::default()).unwrap();
        assert!(adjusted_rand_index(&raw.assignments, &truth).unwrap() < 1.0);
        let opts = KMeansOptions { standardize: true, ..Default::default() };
        let scaled = kmeans(&pts, 2, &opts).unwrap();
        assert_eq!(adjusted_rand_index(&scaled.assignments, &truth).unwrap(), 1.0);
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        // sklearn.metrics.adjusted_rand_score([0,0,1,1],[0,1,0,1]) = -0.5
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-12);
        // adjusted_rand_score([0,0,0,1,1,1],[0,0,1,1,2,2]) = 0.24242424...
        let v = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap();
        assert!((v - 0.242_424_242_424_242_4).abs() < 1e-12, "{v}");
        assert!(adjusted_rand_index(&[0], &[0, 1]).is_err());
    }
}
