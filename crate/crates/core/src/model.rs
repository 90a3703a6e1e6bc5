//! Hierarchical model state, priors, and density evaluations.
//!
//! Within period `p` the event intensity is `gamma_p * f_p(x, y)` with
//! `f_p(x,y) = sum_l beta_{p,l} phi_{psi_l}(x, y)`: one shared set of `L`
//! Gaussian components whose weights evolve along a Dirichlet chain
//! `beta_1 ~ Dir(alpha_1/L, ...)`, `beta_p | beta_{p-1} ~ Dir(alpha_p
//! beta_{p-1})`, with concentrations chained as `alpha_p ~
//! Gamma(alpha_{p-1}, 1)`. Component parameters carry a Normal-Inverse-Wishart
//! prior, period rates an independent Gamma prior, and per-event allocation
//! labels a categorical draw from their period's weights.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::catalog::{Catalog, SpatialWindow, TimePartition};
use crate::gauss::{cholesky2, is_spd, symmetrize, Gaussian2};
use crate::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_2: f64 = std::f64::consts::LN_2;

/// Cap for log-weights whose true magnitude exceeds the double range; keeps
/// every stored log finite while staying far beyond any density that matters.
pub const LN_WEIGHT_MIN: f64 = -1e300;

/// Rejection cap for domain-truncated Normal-Inverse-Wishart draws.
const TRUNCATION_CAP: usize = 100_000;

/// `ln(sum(exp(values)))` with the usual max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln(1 + exp(t))`, stable across the whole line.
pub fn softplus(t: f64) -> f64 {
    if t > 35.0 {
        t + (-t).exp()
    } else if t < -35.0 {
        t.exp()
    } else {
        (1.0 + t.exp()).ln()
    }
}

/// `ln Gamma(exp(ln_a))`; below float resolution the small-argument
/// asymptote `ln Gamma(a) ~ -ln a` takes over.
pub fn ln_gamma_of_exp(ln_a: f64) -> f64 {
    if ln_a > -690.0 {
        ln_gamma(ln_a.exp())
    } else {
        -ln_a
    }
}

/// `exp(ln_a) * v` for `v <= 0`, evaluated without the `0 * -huge`
/// indeterminate that a linear product would produce for deep concentrations
/// against deep log-weights.
pub fn scaled_neg_product(ln_a: f64, v: f64) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let ln_mag = ln_a + (-v).ln();
    if ln_mag > 690.0 {
        f64::NEG_INFINITY
    } else {
        -ln_mag.exp()
    }
}

/// Normal-Inverse-Wishart base measure: `Sigma ~ IW(nu, sigma0)`,
/// `mu | Sigma ~ N(mu0, Sigma / eta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NiwRepr", into = "NiwRepr")]
pub struct NiwParams {
    pub mu0: Vector2<f64>,
    pub eta: f64,
    pub sigma0: Matrix2<f64>,
    pub nu: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct NiwRepr {
    mu0: [f64; 2],
    eta: f64,
    sigma0: [[f64; 2]; 2],
    nu: f64,
}

impl From<NiwParams> for NiwRepr {
    fn from(p: NiwParams) -> Self {
        NiwRepr {
            mu0: [p.mu0.x, p.mu0.y],
            eta: p.eta,
            sigma0: [
                [p.sigma0[(0, 0)], p.sigma0[(0, 1)]],
                [p.sigma0[(1, 0)], p.sigma0[(1, 1)]],
            ],
            nu: p.nu,
        }
    }
}

impl TryFrom<NiwRepr> for NiwParams {
    type Error = Error;
    fn try_from(r: NiwRepr) -> Result<Self> {
        let p = NiwParams {
            mu0: Vector2::new(r.mu0[0], r.mu0[1]),
            eta: r.eta,
            sigma0: Matrix2::new(
                r.sigma0[0][0],
                r.sigma0[0][1],
                r.sigma0[1][0],
                r.sigma0[1][1],
            ),
            nu: r.nu,
        };
        p.validate()?;
        Ok(p)
    }
}

impl NiwParams {
    pub fn new(mu0: Vector2<f64>, eta: f64, sigma0: Matrix2<f64>, nu: f64) -> Result<Self> {
        let p = Self {
            mu0,
            eta,
            sigma0: symmetrize(sigma0),
            nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config("niw.eta must be positive".into()));
        }
        if !(self.nu.is_finite() && self.nu > 1.0) {
            return Err(Error::Config("niw.nu must exceed 1 for planar data".into()));
        }
        if !is_spd(&self.sigma0) {
            return Err(Error::Config("niw.sigma0 must be positive definite".into()));
        }
        if !(self.mu0.x.is_finite() && self.mu0.y.is_finite()) {
            return Err(Error::Config("niw.mu0 must be finite".into()));
        }
        Ok(())
    }

    /// Log density at a component (mean, covariance) pair.
    pub fn log_density(&self, g: &Gaussian2) -> f64 {
        let ldet_sigma = g.cov().determinant().ln();
        let dm = g.mean() - self.mu0;
        let q = (g.precision() * dm).dot(&dm);
        let ln_normal = -LN_2PI + self.eta.ln() - 0.5 * ldet_sigma - 0.5 * self.eta * q;
        let half_nu = 0.5 * self.nu;
        // bivariate multivariate-gamma normalizer
        let ln_gamma2 = 0.5 * std::f64::consts::PI.ln() + ln_gamma(half_nu) + ln_gamma(half_nu - 0.5);
        let tr = (self.sigma0 * g.precision()).trace();
        let ln_iw = half_nu * self.sigma0.determinant().ln() - self.nu * LN_2 - ln_gamma2
            - 0.5 * (self.nu + 3.0) * ldet_sigma
            - 0.5 * tr;
        ln_normal + ln_iw
    }

    /// Ancestral draw: covariance from the inverse Wishart via Bartlett
    /// decomposition, then the mean given the covariance.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Gaussian2> {
        let s0_inv = symmetrize(self.sigma0.try_inverse().ok_or_else(|| {
            Error::Numeric("sigma0 numerically singular".into())
        })?);
        let l = cholesky2(&s0_inv)?;
        let c1 = sample_chi2(rng, self.nu)?;
        let c2 = sample_chi2(rng, self.nu - 1.0)?;
        let n21: f64 = rng.sample(StandardNormal);
        let a = Matrix2::new(c1.sqrt(), 0.0, n21, c2.sqrt());
        let la = l * a;
        let w = la * la.transpose();
        let sigma = symmetrize(w.try_inverse().ok_or_else(|| {
            Error::Numeric("degenerate Wishart draw".into())
        })?);
        let l_mu = cholesky2(&(sigma / self.eta))?;
        let z = Vector2::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        Gaussian2::new(self.mu0 + l_mu * z, sigma)
    }

    /// Draw rejected until the component mean falls inside `domain`; errors
    /// after a fixed cap.
    pub fn sample_truncated<R: Rng + ?Sized>(
        &self,
        domain: Option<&SpatialWindow>,
        rng: &mut R,
    ) -> Result<Gaussian2> {
        match domain {
            None => self.sample(rng),
            Some(w) => {
                for _ in 0..TRUNCATION_CAP {
                    let g = self.sample(rng)?;
                    if w.contains(g.mean().x, g.mean().y) {
                        return Ok(g);
                    }
                }
                Err(Error::Numeric(format!(
                    "mean-domain rejection cap ({TRUNCATION_CAP}) exceeded"
                )))
            }
        }
    }
}

/// Full prior configuration for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub niw: NiwParams,
    /// Seed concentration for the Dirichlet chain.
    pub alpha0: f64,
    /// Prior rate level: `gamma_p ~ Gamma(gamma0 * k, rate k)`.
    pub gamma0: f64,
    pub k: f64,
    /// Mixture truncation (component count).
    pub components: usize,
    /// Period count; must match the partition used for fitting.
    pub periods: usize,
    /// Optional truncation region for component means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_domain: Option<SpatialWindow>,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        self.niw.validate()?;
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(Error::Config("hyperparams.alpha0 must be positive".into()));
        }
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::Config("hyperparams.gamma0 must be positive".into()));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::Config("hyperparams.k must be positive".into()));
        }
        if self.components == 0 {
            return Err(Error::Config("hyperparams.components must be at least 1".into()));
        }
        if self.periods == 0 {
            return Err(Error::Config("hyperparams.periods must be at least 1".into()));
        }
        Ok(())
    }
}

/// Event coordinates grouped by time period, the layout inference runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedData {
    partition: TimePartition,
    points: Vec<Vec<Vector2<f64>>>,
}

impl PartitionedData {
    pub fn from_catalog(catalog: &Catalog, partition: &TimePartition) -> Result<Self> {
        let by_period = crate::catalog::partition_events(catalog, partition)?;
        let points = by_period
            .iter()
            .map(|evs| evs.iter().map(|e| Vector2::new(e.x, e.y)).collect())
            .collect();
        Ok(Self {
            partition: partition.clone(),
            points,
        })
    }

    pub fn from_points(partition: TimePartition, points: Vec<Vec<Vector2<f64>>>) -> Result<Self> {
        if points.len() != partition.periods() {
            return Err(Error::Data(format!(
                "{} point groups for {} periods",
                points.len(),
                partition.periods()
            )));
        }
        Ok(Self { partition, points })
    }

    pub fn partition(&self) -> &TimePartition {
        &self.partition
    }

    pub fn periods(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self, p: usize) -> &[Vector2<f64>] {
        &self.points[p]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.points.iter().map(Vec::len).collect()
    }

    pub fn total(&self) -> usize {
        self.points.iter().map(Vec::len).sum()
    }
}

/// One complete latent configuration of the sampler.
///
/// Weight rows are carried in both linear (`beta`) and log (`ln_beta`) form.
/// The log form is authoritative inside the sampler: chained Dirichlet draws
/// at small concentrations produce weights far below the linear double range,
/// and density terms like `a * ln beta` have order-one values exactly there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    /// Chain concentrations, length P.
    pub alpha: Vec<f64>,
    /// Mixture weights, P rows on the L-simplex (linear view; deep corners
    /// underflow to zero here).
    pub beta: Vec<Vec<f64>>,
    /// Log mixture weights, elementwise `ln` of the exact rows.
    pub ln_beta: Vec<Vec<f64>>,
    /// Period rates in events per day, length P.
    pub gamma: Vec<f64>,
    /// Shared Gaussian components, length L.
    pub psi: Vec<Gaussian2>,
    /// Per-period, per-event allocation labels in `0..L`.
    pub z: Vec<Vec<usize>>,
}

/// Elementwise logs of linear simplex rows, for building states from linear
/// weights.
pub fn ln_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&b| b.ln().max(LN_WEIGHT_MIN)).collect())
        .collect()
}

impl LatentState {
    pub fn components(&self) -> usize {
        self.psi.len()
    }

    pub fn periods(&self) -> usize {
        self.alpha.len()
    }

    /// Installs a weight row from its log form: renormalizes in log space,
    /// clamps round-off positives, and refreshes the linear view.
    pub fn set_ln_beta_row(&mut self, p: usize, mut ln_row: Vec<f64>) {
        let lse = log_sum_exp(&ln_row);
        for v in ln_row.iter_mut() {
            *v = (*v - lse).min(0.0).max(LN_WEIGHT_MIN);
        }
        self.beta[p] = ln_row.iter().map(|&v| v.exp()).collect();
        self.ln_beta[p] = ln_row;
    }

    /// Structural validity: positivity, simplex rows, log/linear weight
    /// agreement, label ranges.
    pub fn validate(&self) -> Result<()> {
        let p = self.periods();
        let l = self.components();
        if self.beta.len() != p
            || self.ln_beta.len() != p
            || self.gamma.len() != p
            || self.z.len() != p
        {
            return Err(Error::Data("state field lengths disagree on P".into()));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::Data("alpha entries must be positive".into()));
        }
        if self.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::Data("gamma entries must be positive".into()));
        }
        for (row, ln_row) in self.beta.iter().zip(&self.ln_beta) {
            if row.len() != l || ln_row.len() != l {
                return Err(Error::Data("beta row length differs from L".into()));
            }
            if row.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
                return Err(Error::Data("beta entries must be nonnegative".into()));
            }
            if ln_row.iter().any(|&v| v.is_nan() || v > 1e-9) {
                return Err(Error::Data("log weights must be finite and nonpositive".into()));
            }
            for (&b, &v) in row.iter().zip(ln_row) {
                if (b - v.exp()).abs() > 1e-12 {
                    return Err(Error::Data("linear and log weights disagree".into()));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Data(format!("beta row sums to {sum}, not 1")));
            }
        }
        for zs in &self.z {
            if zs.iter().any(|&lab| lab >= l) {
                return Err(Error::Data("allocation label out of range".into()));
            }
        }
        Ok(())
    }

    /// Applies a component relabeling jointly to weights, components, and
    /// allocations. `perm[old] = new`.
    pub fn permuted(&self, perm: &[usize]) -> LatentState {
        let l = self.components();
        assert_eq!(perm.len(), l);
        let mut beta = vec![vec![0.0; l]; self.periods()];
        let mut ln_beta = vec![vec![0.0; l]; self.periods()];
        let mut psi = self.psi.clone();
        for (p, row) in self.beta.iter().enumerate() {
            for (old, &b) in row.iter().enumerate() {
                beta[p][perm[old]] = b;
                ln_beta[p][perm[old]] = self.ln_beta[p][old];
            }
        }
        for (old, g) in self.psi.iter().enumerate() {
            psi[perm[old]] = g.clone();
        }
        let z = self
            .z
            .iter()
            .map(|zs| zs.iter().map(|&lab| perm[lab]).collect())
            .collect();
        LatentState {
            alpha: self.alpha.clone(),
            beta,
            ln_beta,
            gamma: self.gamma.clone(),
            psi,
            z,
        }
    }
}

/// Integer allocation counts kept in lockstep with `z`.
///
/// Counts update incrementally and exactly; the floating-point component
/// moments are always accumulated fresh in period-major event order (see
/// [`component_moments`]), so incremental and from-scratch paths agree
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStats {
    /// Total allocations per component, length L.
    pub m_l: Vec<usize>,
    /// Allocations per period and component, P x L.
    pub m_pl: Vec<Vec<usize>>,
    /// Events per period, length P.
    pub n_p: Vec<usize>,
}

impl SufficientStats {
    pub fn compute(data: &PartitionedData, z: &[Vec<usize>], components: usize) -> Self {
        let periods = data.periods();
        let mut m_l = vec![0usize; components];
        let mut m_pl = vec![vec![0usize; components]; periods];
        let mut n_p = vec![0usize; periods];
        for p in 0..periods {
            n_p[p] = data.points(p).len();
            for &lab in &z[p] {
                m_l[lab] += 1;
                m_pl[p][lab] += 1;
            }
        }
        Self { m_l, m_pl, n_p }
    }

    /// Applies a single allocation change for an event in period `p`.
    pub fn move_event(&mut self, p: usize, from: usize, to: usize) {
        if from == to {
            return;
        }
        self.m_l[from] -= 1;
        self.m_l[to] += 1;
        self.m_pl[p][from] -= 1;
        self.m_pl[p][to] += 1;
    }

    pub fn total(&self) -> usize {
        self.n_p.iter().sum()
    }
}

/// Per-component allocation count, mean, and centered scatter matrix,
/// accumulated in period-major event order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMoments {
    pub m: usize,
    pub ybar: Vector2<f64>,
    pub scatter: Matrix2<f64>,
}

pub fn component_moments(
    data: &PartitionedData,
    z: &[Vec<usize>],
    components: usize,
) -> Vec<ComponentMoments> {
    let mut m = vec![0usize; components];
    let mut sums = vec![Vector2::zeros(); components];
    for p in 0..data.periods() {
        for (pt, &lab) in data.points(p).iter().zip(&z[p]) {
            m[lab] += 1;
            sums[lab] += pt;
        }
    }
    let ybar: Vec<Vector2<f64>> = sums
        .iter()
        .zip(&m)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { Vector2::zeros() })
        .collect();
    let mut scatter = vec![Matrix2::zeros(); components];
    for p in 0..data.periods() {
        for (pt, &lab) in data.points(p).iter().zip(&z[p]) {
            let d = pt - ybar[lab];
            scatter[lab] += d * d.transpose();
        }
    }
    (0..components)
        .map(|l| ComponentMoments {
            m: m[l],
            ybar: ybar[l],
            scatter: symmetrize(scatter[l]),
        })
        .collect()
}

/// Conjugate Normal-Inverse-Wishart update for one component's moments.
pub fn niw_posterior(prior: &NiwParams, mom: &ComponentMoments) -> NiwParams {
    let m = mom.m as f64;
    if mom.m == 0 {
        return prior.clone();
    }
    let eta_n = prior.eta + m;
    let mu_n = (prior.eta * prior.mu0 + m * mom.ybar) / eta_n;
    let dm = mom.ybar - prior.mu0;
    let sigma_n = symmetrize(
        prior.sigma0 + mom.scatter + (prior.eta * m / eta_n) * (dm * dm.transpose()),
    );
    NiwParams {
        mu0: mu_n,
        eta: eta_n,
        sigma0: sigma_n,
        nu: prior.nu + m,
    }
}

/// Mixture spatial density of period `p` at a point.
pub fn mixture_density(state: &LatentState, p: usize, x: f64, y: f64) -> f64 {
    state.beta[p]
        .iter()
        .zip(&state.psi)
        .map(|(b, g)| b * g.density(x, y))
        .sum()
}

/// Factorized log likelihood with allocations marginalized out:
/// per period `-gamma_p |I_p| + n_p ln gamma_p + sum_i ln f_p(x_i, y_i)`.
pub fn log_likelihood(state: &LatentState, data: &PartitionedData) -> Result<f64> {
    if state.gamma.iter().any(|&g| g <= 0.0) {
        return Err(Error::Numeric("nonpositive gamma in likelihood".into()));
    }
    let mut total = 0.0;
    for p in 0..data.periods() {
        let n_p = data.points(p).len() as f64;
        total += -state.gamma[p] * data.partition().interval_len(p) + n_p * state.gamma[p].ln();
        for pt in data.points(p) {
            total += mixture_density(state, p, pt.x, pt.y).ln();
        }
    }
    Ok(total)
}

/// Factorized log likelihood under the current allocations: each event
/// contributes its own component's log density.
pub fn log_likelihood_allocated(state: &LatentState, data: &PartitionedData) -> Result<f64> {
    if state.gamma.iter().any(|&g| g <= 0.0) {
        return Err(Error::Numeric("nonpositive gamma in likelihood".into()));
    }
    let mut total = 0.0;
    for p in 0..data.periods() {
        let n_p = data.points(p).len() as f64;
        total += -state.gamma[p] * data.partition().interval_len(p) + n_p * state.gamma[p].ln();
        for (pt, &lab) in data.points(p).iter().zip(&state.z[p]) {
            total += state.psi[lab].log_density(pt.x, pt.y);
        }
    }
    Ok(total)
}

/// Log Dirichlet parameter vector conditioning row `p` on its predecessor:
/// `ln(alpha_1/L)` repeated for the first row, `ln alpha_p + ln beta_{p-1,l}`
/// after. Log form keeps deep-corner concentrations meaningful.
pub fn ln_dirichlet_prior_row(state: &LatentState, p: usize) -> Vec<f64> {
    let l = state.components();
    if p == 0 {
        vec![(state.alpha[0] / l as f64).ln(); l]
    } else {
        state.ln_beta[p - 1]
            .iter()
            .map(|&v| state.alpha[p].ln() + v)
            .collect()
    }
}

/// Linear view of [`ln_dirichlet_prior_row`]; deep concentrations underflow.
pub fn dirichlet_prior_row(state: &LatentState, p: usize) -> Vec<f64> {
    ln_dirichlet_prior_row(state, p)
        .iter()
        .map(|&v| v.exp())
        .collect()
}

/// `ln Dir(x; a)` with both the point and the parameters supplied in logs,
/// including the normalizer.
pub fn ln_dirichlet_ln(ln_x: &[f64], ln_a: &[f64]) -> f64 {
    let mut total = ln_gamma_of_exp(log_sum_exp(ln_a));
    for (&lx, &la) in ln_x.iter().zip(ln_a) {
        // (a - 1) ln x = a ln x - ln x, with the first product computed in logs
        total += scaled_neg_product(la, lx) - lx - ln_gamma_of_exp(la);
    }
    total
}

/// `ln Dir(x; a)` for linear arguments.
pub fn ln_dirichlet(x: &[f64], a: &[f64]) -> f64 {
    let ln_x: Vec<f64> = x.iter().map(|&v| v.ln().max(LN_WEIGHT_MIN)).collect();
    let ln_a: Vec<f64> = a.iter().map(|&v| v.ln()).collect();
    ln_dirichlet_ln(&ln_x, &ln_a)
}

fn state_in_support(state: &LatentState, hyper: &Hyperparams) -> bool {
    if state.alpha.iter().any(|&a| !a.is_finite() || a <= 0.0) {
        return false;
    }
    if state.gamma.iter().any(|&g| !g.is_finite() || g <= 0.0) {
        return false;
    }
    for (row, ln_row) in state.beta.iter().zip(&state.ln_beta) {
        // interior means the log weights are finite; the linear view may
        // underflow to zero in deep corners
        if ln_row.iter().any(|&v| v.is_nan() || v > 1e-9) {
            return false;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return false;
        }
    }
    if let Some(w) = &hyper.mu_domain {
        if state
            .psi
            .iter()
            .any(|g| !w.contains(g.mean().x, g.mean().y))
        {
            return false;
        }
    }
    true
}

/// Joint log posterior density (up to the normalizing constant) of a state
/// under the allocated likelihood. Support violations yield `-inf` so
/// Metropolis proposals can simply reject.
pub fn log_unnormalized_posterior(
    state: &LatentState,
    data: &PartitionedData,
    hyper: &Hyperparams,
) -> f64 {
    if !state_in_support(state, hyper) {
        return f64::NEG_INFINITY;
    }
    let periods = state.periods();
    let mut total = 0.0;

    // concentration seed and chain
    total += (hyper.alpha0 - 1.0) * state.alpha[0].ln() - state.alpha[0];
    for p in 0..periods - 1 {
        total += (state.alpha[p] - 1.0) * state.alpha[p + 1].ln() - state.alpha[p + 1]
            - ln_gamma(state.alpha[p]);
    }

    // weight rows along the Dirichlet chain
    for p in 0..periods {
        let ln_a = ln_dirichlet_prior_row(state, p);
        total += ln_dirichlet_ln(&state.ln_beta[p], &ln_a);
    }

    // components, rates, allocations
    for g in &state.psi {
        total += hyper.niw.log_density(g);
    }
    for &g in &state.gamma {
        total += (hyper.gamma0 * hyper.k - 1.0) * g.ln() - g * hyper.k;
    }
    for p in 0..periods {
        for &lab in &state.z[p] {
            total += state.ln_beta[p][lab];
        }
    }

    total + log_likelihood_allocated(state, data).expect("gamma positivity checked")
}

/// Mixture probability mass lying inside `window` for period `p`; `1 -` this
/// is the leakage the factorized likelihood neglects.
pub fn window_mass(state: &LatentState, p: usize, window: &SpatialWindow) -> f64 {
    state.beta[p]
        .iter()
        .zip(&state.psi)
        .map(|(b, g)| b * g.mass_in_window(window))
        .sum()
}

/// Gamma(shape, rate) sampling via `rand_distr` (scale = 1/rate).
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let dist = GammaDist::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numeric(format!("gamma({shape}, rate {rate}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Dirichlet draw by normalized Gamma variates with log-scale concentrations,
/// returning the normalized log weights. The shape boost
/// `G_a = G_{a+1} U^{1/a}` keeps arbitrarily small concentrations exact; when
/// every concentration sits beyond the double range the draw falls back to
/// the one-hot limit law with winner probabilities proportional to the
/// concentrations.
pub fn sample_dirichlet_ln<R: Rng + ?Sized>(rng: &mut R, ln_alphas: &[f64]) -> Result<Vec<f64>> {
    if ln_alphas.is_empty() {
        return Err(Error::Numeric("empty Dirichlet parameter vector".into()));
    }
    if ln_alphas.iter().any(|&la| la.is_nan() || la == f64::INFINITY) {
        return Err(Error::Numeric(
            "Dirichlet log concentrations must be finite or -inf-bounded".into(),
        ));
    }
    let dim = ln_alphas.len();
    if dim == 1 {
        return Ok(vec![0.0]);
    }
    if ln_alphas.iter().all(|&la| la < -680.0) {
        // all concentrations below resolution: Dir(eps * w) one-hot limit
        let max = ln_alphas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = ln_alphas.iter().map(|&la| (la - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let winner = sample_categorical(rng, &probs);
        let mut out = vec![LN_WEIGHT_MIN; dim];
        out[winner] = 0.0;
        return Ok(out);
    }
    let mut ln_g = Vec::with_capacity(dim);
    for &la in ln_alphas {
        let a = la.exp();
        let boosted = GammaDist::new(a + 1.0, 1.0)
            .map_err(|e| Error::Numeric(format!("gamma({a}): {e}")))?
            .sample(rng);
        let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        // ln(U)/a in logs of magnitude, so deep concentrations stay ordered
        let ln_mag = (-u.ln()).ln() - la;
        let tail = if ln_mag > 690.0 { LN_WEIGHT_MIN } else { -ln_mag.exp() };
        ln_g.push(boosted.ln() + tail);
    }
    let lse = log_sum_exp(&ln_g);
    Ok(ln_g
        .iter()
        .map(|&lg| (lg - lse).min(0.0).max(LN_WEIGHT_MIN))
        .collect())
}

/// Linear-argument Dirichlet draw returning linear weights (deep corners
/// underflow to zero).
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alphas: &[f64]) -> Result<Vec<f64>> {
    if alphas.iter().any(|&a| !a.is_finite() || a <= 0.0) {
        return Err(Error::Numeric(
            "Dirichlet parameters must be positive".into(),
        ));
    }
    let ln_alphas: Vec<f64> = alphas.iter().map(|&a| a.ln()).collect();
    Ok(sample_dirichlet_ln(rng, &ln_alphas)?
        .iter()
        .map(|&v| v.exp())
        .collect())
}

/// Log concentrations of a conditional row: `counts + prior`, where the prior
/// part arrives in logs.
pub fn ln_conc_with_counts(ln_prior: &[f64], counts: &[usize]) -> Vec<f64> {
    ln_prior
        .iter()
        .zip(counts)
        .map(|(&la, &m)| {
            if m == 0 {
                la
            } else {
                (m as f64 + la.exp()).ln()
            }
        })
        .collect()
}

fn sample_chi2<R: Rng + ?Sized>(rng: &mut R, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::Numeric(format!("chi-square dof {df} must be positive")));
    }
    let dist = GammaDist::new(0.5 * df, 2.0)
        .map_err(|e| Error::Numeric(format!("chi2({df}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Ancestral draw of a full latent state given per-period event counts.
pub fn draw_prior_state<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    counts: &[usize],
    rng: &mut R,
) -> Result<LatentState> {
    hyper.validate()?;
    if counts.len() != hyper.periods {
        return Err(Error::Data(format!(
            "{} counts for {} periods",
            counts.len(),
            hyper.periods
        )));
    }
    let periods = hyper.periods;
    let l = hyper.components;

    let mut alpha = Vec::with_capacity(periods);
    // floor keeps a deeply collapsed chain samplable; well below any moment
    // the sampler can resolve
    alpha.push(sample_gamma(rng, hyper.alpha0, 1.0)?.max(1e-12));
    for p in 1..periods {
        alpha.push(sample_gamma(rng, alpha[p - 1], 1.0)?.max(1e-12));
    }

    let mut ln_beta: Vec<Vec<f64>> = Vec::with_capacity(periods);
    ln_beta.push(sample_dirichlet_ln(
        rng,
        &vec![(alpha[0] / l as f64).ln(); l],
    )?);
    for p in 1..periods {
        let ln_a: Vec<f64> = ln_beta[p - 1]
            .iter()
            .map(|&v| alpha[p].ln() + v)
            .collect();
        ln_beta.push(sample_dirichlet_ln(rng, &ln_a)?);
    }
    let beta: Vec<Vec<f64>> = ln_beta
        .iter()
        .map(|row| row.iter().map(|&v| v.exp()).collect())
        .collect();

    let mut psi = Vec::with_capacity(l);
    for _ in 0..l {
        psi.push(hyper.niw.sample_truncated(hyper.mu_domain.as_ref(), rng)?);
    }

    let mut gamma = Vec::with_capacity(periods);
    for _ in 0..periods {
        gamma.push(sample_gamma(rng, hyper.gamma0 * hyper.k, hyper.k)?);
    }

    let mut z = Vec::with_capacity(periods);
    for p in 0..periods {
        let mut zs = Vec::with_capacity(counts[p]);
        for _ in 0..counts[p] {
            zs.push(sample_categorical(rng, &beta[p]));
        }
        z.push(zs);
    }

    Ok(LatentState {
        alpha,
        beta,
        ln_beta,
        gamma,
        psi,
        z,
    })
}

/// Draws an index proportionally to nonnegative weights (assumed normalized).
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}
