//! Event clustering from posterior allocations: pairwise co-allocation
//! frequencies, least-squares draw selection, and spectral clustering on the
//! similarity matrix with an eigengap-chosen cluster count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::draws::PosteriorDraws;
use crate::relabel::flatten_allocations;
use crate::{Error, Result};

/// Symmetric matrix of pairwise posterior co-allocation frequencies with unit
/// diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Dense text dump, one row of comma-separated frequencies per line.
    pub fn to_dense_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Fraction of draws in which each event pair shares a component.
pub fn similarity_matrix(draws: &PosteriorDraws) -> Result<SimilarityMatrix> {
    if draws.is_empty() {
        return Err(Error::Data("no draws for similarity".into()));
    }
    let flat: Vec<Vec<usize>> = draws
        .draws
        .iter()
        .map(|d| flatten_allocations(&d.state))
        .collect();
    let n = flat[0].len();
    if flat.iter().any(|z| z.len() != n) {
        return Err(Error::Data("draws disagree on event count".into()));
    }
    let mut counts = vec![0u32; n * n];
    for z in &flat {
        for i in 0..n {
            let zi = z[i];
            let row = i * n;
            for j in (i + 1)..n {
                if z[j] == zi {
                    counts[row + j] += 1;
                }
            }
        }
    }
    let d = flat.len() as f64;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let s = counts[i * n + j] as f64 / d;
            data[i * n + j] = s;
            data[j * n + i] = s;
        }
    }
    Ok(SimilarityMatrix { n, data })
}

/// Least-squares loss of one allocation against the similarity matrix, summed
/// over unordered pairs.
pub fn coallocation_loss(z: &[usize], sim: &SimilarityMatrix) -> f64 {
    let n = z.len();
    let mut loss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let ind = if z[i] == z[j] { 1.0 } else { 0.0 };
            let d = ind - sim.get(i, j);
            loss += d * d;
        }
    }
    loss
}

/// The retained draw whose co-allocation pattern is closest (least squares)
/// to the posterior similarity matrix; ties break to the lowest index.
pub fn dahl_select(
    draws: &PosteriorDraws,
    sim: &SimilarityMatrix,
) -> Result<(usize, Vec<usize>, f64)> {
    if draws.is_empty() {
        return Err(Error::Data("no draws to select from".into()));
    }
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for (idx, d) in draws.draws.iter().enumerate() {
        let z = flatten_allocations(&d.state);
        if z.len() != sim.n() {
            return Err(Error::Data("draw allocation length differs from similarity".into()));
        }
        let loss = coallocation_loss(&z, sim);
        if best.as_ref().map_or(true, |(_, _, b)| loss < *b) {
            best = Some((idx, z, loss));
        }
    }
    Ok(best.unwrap())
}

/// Ascending eigenvalues of the symmetric normalized Laplacian
/// `I - D^{-1/2} A D^{-1/2}` together with the matching eigenvectors.
fn laplacian_eigen(sim: &SimilarityMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = sim.n();
    let mut degree = vec![0.0; n];
    for i in 0..n {
        let mut d = 0.0;
        for j in 0..n {
            d += sim.get(i, j);
        }
        // unit self-similarity keeps every degree positive
        degree[i] = d;
    }
    let d_inv_sqrt: Vec<f64> = degree.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut l = DMatrix::from_fn(n, n, |i, j| {
        let norm = -d_inv_sqrt[i] * sim.get(i, j) * d_inv_sqrt[j];
        if i == j {
            1.0 + norm
        } else {
            norm
        }
    });
    // enforce exact symmetry before the eigensolve
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (l[(i, j)] + l[(j, i)]);
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Cluster count by the largest gap in the ascending Laplacian spectrum,
/// scanning `k = 1 .. k_max-1`; flat spectra fall back to 1.
pub fn eigengap_k(sim: &SimilarityMatrix, k_max: usize) -> Result<usize> {
    if k_max < 2 {
        return Err(Error::Config("eigengap needs k_max >= 2".into()));
    }
    let (values, _) = laplacian_eigen(sim);
    let upper = (k_max - 1).min(values.len().saturating_sub(1));
    let mut best_k = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 1..=upper {
        let gap = values[k] - values[k - 1];
        if gap > best_gap {
            best_gap = gap;
            best_k = k;
        }
    }
    Ok(best_k)
}

/// Normalized spectral clustering: rows of the bottom-`k` eigenvectors of the
/// normalized Laplacian, row-normalized, partitioned by seeded k-means.
pub fn spectral_cluster(sim: &SimilarityMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = sim.n();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cluster count {k} outside 1..={n}")));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let (_, vectors) = laplacian_eigen(sim);
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|c| vectors[(i, c)]).collect())
        .collect();
    for row in rows.iter_mut() {
        let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    Ok(kmeans(&rows, k, seed))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd iterations from a deterministic farthest-point start.
fn kmeans(rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let n = rows.len();
    let dim = rows[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(rows[rng.gen_range(0..n)].clone());
    while centers.len() < k {
        let (mut far_idx, mut far_dist) = (0, f64::NEG_INFINITY);
        for (i, row) in rows.iter().enumerate() {
            let d = centers
                .iter()
                .map(|c| sq_dist(row, c))
                .fold(f64::INFINITY, f64::min);
            if d > far_dist {
                far_dist = d;
                far_idx = i;
            }
        }
        centers.push(rows[far_idx].clone());
    }
    let mut labels = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let (mut best, mut best_d) = (0, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(row, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (row, &lab) in rows.iter().zip(&labels) {
            counts[lab] += 1;
            for (s, v) in sums[lab].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its center
                let (mut far_idx, mut far_dist) = (0, f64::NEG_INFINITY);
                for (i, row) in rows.iter().enumerate() {
                    let d = sq_dist(row, &centers[labels[i]]);
                    if d > far_dist {
                        far_dist = d;
                        far_idx = i;
                    }
                }
                centers[c] = rows[far_idx].clone();
                changed = true;
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Laplacian spectrum (ascending), exposed for spectrum diagnostics.
pub fn laplacian_spectrum(sim: &SimilarityMatrix) -> Vec<f64> {
    laplacian_eigen(sim).0
}
