//! Shared oracles for integration tests. Everything here is deliberately
//! independent of the library's factorized evaluation paths: plain adaptive
//! quadrature and direct summation only.
#![allow(dead_code)] // each test target links only the helpers it uses

/// Recursive adaptive Simpson with Richardson acceptance. The tolerance is
/// floored and the depth capped so float-noise plateaus terminate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, m: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, 0.5 * (a + m), m);
        let right = simpson(f, m, 0.5 * (m + b), b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            let half_tol = (0.5 * tol).max(1e-13);
            recurse(f, a, m, left, half_tol, depth - 1)
                + recurse(f, m, b, right, half_tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    recurse(f, a, b, simpson(f, a, m, b), tol.max(1e-12), 18)
}

/// 2-d integral over a rectangle by nested adaptive Simpson.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: &F,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    tol: f64,
) -> f64 {
    let inner_tol = (tol / (x1 - x0).abs().max(1.0)).max(1e-11);
    adaptive_simpson(
        &|x| adaptive_simpson(&|y| f(x, y), y0, y1, inner_tol),
        x0,
        x1,
        tol,
    )
}

/// Sample mean and (sample) variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Batch-means standard error of the mean for an autocorrelated sequence.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let per = xs.len() / batches;
    assert!(per >= 2, "too few samples per batch");
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * per..(b + 1) * per].iter().sum::<f64>() / per as f64)
        .collect();
    let (_, var) = mean_var(&means);
    (var / batches as f64).sqrt()
}

/// Two-sample z statistic with independent standard errors.
pub fn z_score(mean_a: f64, se_a: f64, mean_b: f64, se_b: f64) -> f64 {
    (mean_a - mean_b) / (se_a * se_a + se_b * se_b).sqrt()
}
