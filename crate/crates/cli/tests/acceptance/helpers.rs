//! Independent oracles for the acceptance suite: plain quadrature, moment
//! utilities, a clustering agreement index, and the joint-distribution test
//! harness. Nothing here reuses the library's factorized evaluation paths.
#![allow(dead_code)]

use bgintensity::catalog::TimePartition;
use bgintensity::model::{sample_categorical, LatentState, PartitionedData};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            let half = (0.5 * tol).max(1e-13);
            recurse(f, a, m, left, half, depth - 1) + recurse(f, m, b, right, half, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, b, simpson(f, a, m, b), tol.max(1e-12), 18)
}

pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    tol: f64,
) -> f64 {
    let inner = (tol / (x1 - x0).abs().max(1.0)).max(1e-11);
    adaptive_simpson(&|x| adaptive_simpson(&|y| f(x, y), y0, y1, inner), x0, x1, tol)
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let per = xs.len() / batches;
    assert!(per >= 2);
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let (_, var) = mean_var(&means);
    (var / batches as f64).sqrt()
}

pub fn z_score(mean_a: f64, se_a: f64, mean_b: f64, se_b: f64) -> f64 {
    (mean_a - mean_b) / (se_a * se_a + se_b * se_b).sqrt()
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |n: u64| (n * n.saturating_sub(1)) / 2;
    let sum_ij: u64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let sum_a: u64 = table
        .iter()
        .map(|row| choose2(row.iter().sum::<u64>()))
        .sum();
    let sum_b: u64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum::<u64>()))
        .sum();
    let total = choose2(a.len() as u64);
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max_index = 0.5 * (sum_a + sum_b) as f64;
    (sum_ij as f64 - expected) / (max_index - expected)
}

/// Redraws the observation side of the joint model given the current state:
/// per-period counts from the rate, allocations from the weights, locations
/// from the allocated components. The state's allocations are replaced.
pub fn resample_data<R: Rng>(
    state: &mut LatentState,
    partition: &TimePartition,
    rng: &mut R,
) -> PartitionedData {
    let mut points = Vec::new();
    let mut zs = Vec::new();
    for p in 0..state.periods() {
        let mean = state.gamma[p] * partition.interval_len(p);
        let n = Poisson::new(mean)
            .map(|d: Poisson<f64>| d.sample(rng) as usize)
            .unwrap_or(0);
        let mut pts = Vec::with_capacity(n);
        let mut zp = Vec::with_capacity(n);
        for _ in 0..n {
            let lab = sample_categorical(rng, &state.beta[p]);
            zp.push(lab);
            pts.push(state.psi[lab].sample(rng));
        }
        points.push(pts);
        zs.push(zp);
    }
    state.z = zs;
    PartitionedData::from_points(partition.clone(), points).unwrap()
}
