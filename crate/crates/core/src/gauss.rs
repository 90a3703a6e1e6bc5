//! Bivariate Gaussian components with cached precision and normalizer.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::SpatialWindow;
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A bivariate Gaussian density with symmetric positive-definite covariance.
///
/// The precision matrix and log normalizing constant are cached at
/// construction; covariance edits go through [`Gaussian2::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Gaussian2Repr", into = "Gaussian2Repr")]
pub struct Gaussian2 {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
    precision: Matrix2<f64>,
    ln_norm: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct Gaussian2Repr {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl From<Gaussian2> for Gaussian2Repr {
    fn from(g: Gaussian2) -> Self {
        Gaussian2Repr {
            mean: [g.mean.x, g.mean.y],
            cov: [[g.cov[(0, 0)], g.cov[(0, 1)]], [g.cov[(1, 0)], g.cov[(1, 1)]]],
        }
    }
}

impl TryFrom<Gaussian2Repr> for Gaussian2 {
    type Error = Error;
    fn try_from(r: Gaussian2Repr) -> Result<Self> {
        Gaussian2::new(
            Vector2::new(r.mean[0], r.mean[1]),
            Matrix2::new(r.cov[0][0], r.cov[0][1], r.cov[1][0], r.cov[1][1]),
        )
    }
}

/// Symmetrizes a nearly-symmetric matrix to suppress round-off drift.
pub fn symmetrize(m: Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

/// Checks symmetric positive-definiteness of a 2x2 matrix.
pub fn is_spd(m: &Matrix2<f64>) -> bool {
    m[(0, 0)].is_finite()
        && m[(1, 1)].is_finite()
        && m[(0, 1)].is_finite()
        && m[(0, 0)] > 0.0
        && m.determinant() > 0.0
}

/// Lower Cholesky factor of a 2x2 SPD matrix, closed form.
pub fn cholesky2(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if !is_spd(m) {
        return Err(Error::Numeric("matrix not positive definite".into()));
    }
    let l11 = m[(0, 0)].sqrt();
    let l21 = m[(1, 0)] / l11;
    let inner = m[(1, 1)] - l21 * l21;
    if inner <= 0.0 {
        return Err(Error::Numeric("matrix not positive definite".into()));
    }
    Ok(Matrix2::new(l11, 0.0, l21, inner.sqrt()))
}

impl Gaussian2 {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self> {
        if !(mean.x.is_finite() && mean.y.is_finite()) {
            return Err(Error::Numeric("gaussian mean must be finite".into()));
        }
        let cov = symmetrize(cov);
        if !is_spd(&cov) {
            return Err(Error::Numeric(
                "gaussian covariance must be symmetric positive definite".into(),
            ));
        }
        let det = cov.determinant();
        let precision = symmetrize(cov.try_inverse().ok_or_else(|| {
            Error::Numeric("gaussian covariance is numerically singular".into())
        })?);
        Ok(Self {
            mean,
            cov,
            precision,
            ln_norm: -LN_2PI - 0.5 * det.ln(),
        })
    }

    pub fn standard() -> Self {
        Self::new(Vector2::zeros(), Matrix2::identity()).unwrap()
    }

    pub fn mean(&self) -> Vector2<f64> {
        self.mean
    }

    pub fn cov(&self) -> Matrix2<f64> {
        self.cov
    }

    pub fn precision(&self) -> Matrix2<f64> {
        self.precision
    }

    pub fn log_density(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean.x;
        let dy = y - self.mean.y;
        let q = self.precision[(0, 0)] * dx * dx
            + 2.0 * self.precision[(0, 1)] * dx * dy
            + self.precision[(1, 1)] * dy * dy;
        self.ln_norm - 0.5 * q
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.log_density(x, y).exp()
    }

    /// Density value at the mean, an upper bound over the plane.
    pub fn peak_density(&self) -> f64 {
        self.ln_norm.exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        let l = cholesky2(&self.cov).expect("covariance validated at construction");
        let z = Vector2::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        self.mean + l * z
    }

    /// Probability mass inside `window`, by 1-d quadrature of the conditional
    /// normal over x. Used as a leakage diagnostic, not for renormalization.
    pub fn mass_in_window(&self, window: &SpatialWindow) -> f64 {
        use statrs::function::erf::erf;
        let normal_cdf = |z: f64| 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        let sx = self.cov[(0, 0)].sqrt();
        let rho = self.cov[(0, 1)] / (sx * self.cov[(1, 1)].sqrt());
        let sy_cond = (self.cov[(1, 1)] * (1.0 - rho * rho)).max(1e-300).sqrt();
        // composite Simpson over x, conditional Gaussian CDF over y
        let n = 400;
        let h = (window.x_max - window.x_min) / n as f64;
        let integrand = |x: f64| {
            let zx = (x - self.mean.x) / sx;
            let mu_cond = self.mean.y + rho * (self.cov[(1, 1)].sqrt()) * zx;
            let fy = normal_cdf((window.y_max - mu_cond) / sy_cond)
                - normal_cdf((window.y_min - mu_cond) / sy_cond);
            (-0.5 * zx * zx).exp() / (sx * (2.0 * std::f64::consts::PI).sqrt()) * fy
        };
        let mut sum = integrand(window.x_min) + integrand(window.x_max);
        for i in 1..n {
            let x = window.x_min + i as f64 * h;
            sum += integrand(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        (sum * h / 3.0).clamp(0.0, 1.0)
    }
}
