//! Hybrid MCMC kernel: conjugate Gibbs updates for rates, components,
//! allocations, and the terminal weight row; Metropolis random walks for the
//! chain concentrations (log scale) and for interior weight rows (one-at-a-
//! time logit moves on the simplex with exact proposal corrections).
//!
//! Sweep order is fixed: allocations, components, rates, weight rows
//! (interior first, terminal last), concentrations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::draws::{AcceptanceRates, Draw, PosteriorDraws};
use crate::model::{
    component_moments, draw_prior_state, ln_conc_with_counts, ln_dirichlet_ln,
    ln_dirichlet_prior_row, ln_gamma_of_exp, log_sum_exp, niw_posterior, sample_categorical,
    sample_dirichlet_ln, sample_gamma, softplus, Hyperparams, LatentState, PartitionedData,
    SufficientStats,
};
use crate::{Error, Result};

/// How interior weight rows (all but the last) are updated.
///
/// `ExactMh` targets the full conditional including the factor contributed by
/// the next row's Dirichlet prior. `ApproxGibbs` draws from the conjugate
/// Dirichlet that ignores that downstream factor — cheaper, but its stationary
/// law differs from the joint posterior; the first row is always exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InteriorBetaMode {
    #[default]
    ExactMh,
    ApproxGibbs,
}

/// Sweep schedule and proposal tuning for one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial log-scale random-walk sd for concentration moves.
    pub alpha_step: f64,
    /// Initial logit-scale sd for interior weight-row moves.
    pub beta_step: f64,
    /// Robbins-Monro step-size adaptation during burn-in.
    pub adapt: bool,
    pub target_accept: f64,
    pub seed: u64,
    #[serde(default)]
    pub interior_beta_mode: InteriorBetaMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sweeps: 20_000,
            burn_in: 10_000,
            thin: 10,
            alpha_step: 0.5,
            beta_step: 0.5,
            adapt: true,
            target_accept: 0.44,
            seed: 0,
            interior_beta_mode: InteriorBetaMode::ExactMh,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.sweeps {
            return Err(Error::Config("sampler.burn_in must be below sweeps".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("sampler.thin must be at least 1".into()));
        }
        if !(self.alpha_step > 0.0) || !(self.beta_step > 0.0) {
            return Err(Error::Config("sampler step sizes must be positive".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("sampler.target_accept must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Number of retained draws for this schedule.
    pub fn retained(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// Redraws every period rate from its conjugate conditional
/// `Gamma(gamma0 k + n_p, rate k + |I_p|)`.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &mut LatentState,
    stats: &SufficientStats,
    data: &PartitionedData,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    for p in 0..state.periods() {
        let shape = hyper.gamma0 * hyper.k + stats.n_p[p] as f64;
        let rate = hyper.k + data.partition().interval_len(p);
        state.gamma[p] = sample_gamma(rng, shape, rate)?;
    }
    Ok(())
}

/// Redraws every component from its conjugate Normal-Inverse-Wishart
/// conditional, rejection-truncated to the mean domain when one is set.
pub fn update_psi<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &PartitionedData,
    hyper: &Hyperparams,
    rng: &mut R,
) -> Result<()> {
    let moments = component_moments(data, &state.z, state.components());
    for (l, mom) in moments.iter().enumerate() {
        let post = niw_posterior(&hyper.niw, mom);
        state.psi[l] = post.sample_truncated(hyper.mu_domain.as_ref(), rng)?;
    }
    Ok(())
}

/// Allocation probabilities for one event: `beta_{p,l} * phi_l(x, y)`
/// normalized, computed in log space.
pub fn z_probabilities(state: &LatentState, p: usize, x: f64, y: f64) -> Result<Vec<f64>> {
    let mut ln_w: Vec<f64> = state.ln_beta[p]
        .iter()
        .zip(&state.psi)
        .map(|(&lb, g)| lb + g.log_density(x, y))
        .collect();
    let max = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numeric(
            "all allocation weights vanished (non-finite inputs)".into(),
        ));
    }
    let mut sum = 0.0;
    for w in &mut ln_w {
        *w = (*w - max).exp();
        sum += *w;
    }
    for w in &mut ln_w {
        *w /= sum;
    }
    Ok(ln_w)
}

/// Redraws every allocation label from its categorical conditional, keeping
/// the count statistics in sync incrementally.
pub fn update_z<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &PartitionedData,
    stats: &mut SufficientStats,
    rng: &mut R,
) -> Result<()> {
    for p in 0..state.periods() {
        for i in 0..data.points(p).len() {
            let pt = data.points(p)[i];
            let probs = z_probabilities(state, p, pt.x, pt.y)?;
            let new = sample_categorical(rng, &probs);
            let old = state.z[p][i];
            state.z[p][i] = new;
            stats.move_event(p, old, new);
        }
    }
    Ok(())
}

/// Redraws the last weight row from its conjugate Dirichlet conditional
/// `Dir(m_{P,l} + prior weight)`.
pub fn update_beta_terminal<R: Rng + ?Sized>(
    state: &mut LatentState,
    stats: &SufficientStats,
    rng: &mut R,
) -> Result<()> {
    let p = state.periods() - 1;
    let ln_params = ln_conc_with_counts(&ln_dirichlet_prior_row(state, p), &stats.m_pl[p]);
    let ln_row = sample_dirichlet_ln(rng, &ln_params)?;
    state.set_ln_beta_row(p, ln_row);
    Ok(())
}

/// Proposal-correction term for a one-coordinate logit move between simplex
/// points with the chosen coordinate going `from_j -> to_j`. Exactly
/// antisymmetric under swapping the two points.
pub fn simplex_move_correction(from_j: f64, to_j: f64, dim: usize) -> f64 {
    // grouped so the reverse move evaluates to the exact negation
    (to_j.ln() - from_j.ln()) + (dim as f64 - 1.0) * ((1.0 - to_j).ln() - (1.0 - from_j).ln())
}

/// One-coordinate logit random walk on the log-scale simplex: perturbs the
/// logit of a uniformly chosen coordinate by a centered Gaussian step and
/// shifts the remaining log weights by the complement change. Returns the
/// normalized log proposal and the log correction to add to the Metropolis
/// acceptance.
pub fn propose_simplex_ln<R: Rng + ?Sized>(
    ln_current: &[f64],
    scale: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let dim = ln_current.len();
    if dim < 2 {
        return Err(Error::Numeric(
            "simplex proposal needs at least two coordinates".into(),
        ));
    }
    if ln_current.iter().any(|&v| v.is_nan() || v > 0.0) {
        return Err(Error::Numeric(
            "simplex proposal requires normalized log weights".into(),
        ));
    }
    let j = rng.gen_range(0..dim);
    let ln_yj = ln_current[j];
    // exact complement in log space from the other coordinates
    let others: Vec<f64> = ln_current
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != j)
        .map(|(_, &v)| v)
        .collect();
    let ln_1m_yj = log_sum_exp(&others).min(0.0);
    let eps: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
    if eps == 0.0 {
        return Ok((ln_current.to_vec(), 0.0));
    }
    let logit_x = (ln_yj - ln_1m_yj) + eps;
    let ln_xj = -softplus(-logit_x);
    let ln_1m_xj = -softplus(logit_x);
    let shift = ln_1m_xj - ln_1m_yj;
    let mut proposal: Vec<f64> = ln_current.iter().map(|&v| v + shift).collect();
    proposal[j] = ln_xj;
    // renormalize in log space
    let lse = log_sum_exp(&proposal);
    for v in proposal.iter_mut() {
        *v = (*v - lse).min(0.0);
    }
    let correction =
        (ln_xj - ln_yj) + (dim as f64 - 1.0) * (ln_1m_xj - ln_1m_yj);
    Ok((proposal, correction))
}

/// Linear-argument wrapper over [`propose_simplex_ln`]: takes a strictly
/// interior simplex point, returns the linear proposal and the correction.
pub fn propose_simplex<R: Rng + ?Sized>(
    current: &[f64],
    scale: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if current.iter().any(|&b| !(b > 0.0) || b >= 1.0) {
        return Err(Error::Numeric(
            "simplex proposal requires a strictly interior point".into(),
        ));
    }
    let ln_current: Vec<f64> = current.iter().map(|&b| b.ln()).collect();
    let (ln_prop, correction) = propose_simplex_ln(&ln_current, scale, rng)?;
    Ok((ln_prop.iter().map(|&v| v.exp()).collect(), correction))
}

/// The next row's Dirichlet prior seen as a function of row `p` (in logs):
/// the factor the conjugate draw ignores. Products of concentrations against
/// deep log weights are computed in logs to keep their order-one values.
pub fn log_downstream_factor(state: &LatentState, p: usize, ln_row: &[f64]) -> f64 {
    if p + 1 >= state.periods() {
        return 0.0;
    }
    let ln_a_next = state.alpha[p + 1].ln();
    let mut total = ln_gamma(state.alpha[p + 1]);
    for (&lb, &lb_next) in ln_row.iter().zip(&state.ln_beta[p + 1]) {
        let ln_conc = ln_a_next + lb;
        total += crate::model::scaled_neg_product(ln_conc, lb_next) - ln_gamma_of_exp(ln_conc);
    }
    total
}

/// Log conditional of weight row `p` evaluated at the log row `ln_row`,
/// holding everything else fixed: the Dirichlet-with-counts factor plus, for
/// non-terminal rows, the next row's prior seen as a function of this row.
pub fn log_beta_row_conditional(
    state: &LatentState,
    stats: &SufficientStats,
    p: usize,
    ln_row: &[f64],
) -> f64 {
    let ln_prior = ln_dirichlet_prior_row(state, p);
    let mut total = 0.0;
    for ((&la, &m), &lb) in ln_prior.iter().zip(&stats.m_pl[p]).zip(ln_row) {
        // (a + m - 1) ln b with the concentration part in logs
        total += crate::model::scaled_neg_product(la, lb) + (m as f64 - 1.0) * lb;
    }
    total + log_downstream_factor(state, p, ln_row)
}

/// Metropolis (or approximate Gibbs) update of an interior weight row.
///
/// The exact update composes two reversible kernels for the same
/// conditional: a logit random walk (good locally) and an independence
/// proposal from the Dirichlet that ignores the downstream factor. For the
/// latter the Dirichlet kernels cancel in the Metropolis ratio, leaving only
/// the downstream factor; it reaches the simplex corners the random walk
/// cannot. Returns the two acceptance indicators `(walk, independence)`.
pub fn update_beta_interior<R: Rng + ?Sized>(
    state: &mut LatentState,
    stats: &SufficientStats,
    p: usize,
    mode: InteriorBetaMode,
    scale: f64,
    rng: &mut R,
) -> Result<(bool, bool)> {
    assert!(p + 1 < state.periods(), "interior rows exclude the last");
    if state.components() == 1 {
        return Ok((true, true));
    }
    if mode == InteriorBetaMode::ApproxGibbs && p >= 1 {
        let ln_params = ln_conc_with_counts(&ln_dirichlet_prior_row(state, p), &stats.m_pl[p]);
        let ln_row = sample_dirichlet_ln(rng, &ln_params)?;
        state.set_ln_beta_row(p, ln_row);
        return Ok((true, true));
    }

    // logit random-walk step
    let (proposal, correction) = propose_simplex_ln(&state.ln_beta[p], scale, rng)?;
    let mut walk_accepted = false;
    if proposal.iter().all(|&v| v.is_finite()) {
        let delta = log_beta_row_conditional(state, stats, p, &proposal)
            - log_beta_row_conditional(state, stats, p, &state.ln_beta[p])
            + correction;
        if accept(rng, delta) {
            state.set_ln_beta_row(p, proposal);
            walk_accepted = true;
        }
    }

    // independence step from Dir(counts + prior weight); the Dirichlet
    // kernels cancel, leaving only the downstream factor in the ratio
    let ln_params = ln_conc_with_counts(&ln_dirichlet_prior_row(state, p), &stats.m_pl[p]);
    let candidate = sample_dirichlet_ln(rng, &ln_params)?;
    let delta = log_downstream_factor(state, p, &candidate)
        - log_downstream_factor(state, p, &state.ln_beta[p]);
    let indep_accepted = accept(rng, delta);
    if indep_accepted {
        state.set_ln_beta_row(p, candidate);
    }
    Ok((walk_accepted, indep_accepted))
}

/// Every joint-posterior term that depends on the weight rows: the Dirichlet
/// chain densities and the allocation counts.
fn log_beta_chain_terms(state: &LatentState, stats: &SufficientStats) -> f64 {
    let mut total = 0.0;
    for p in 0..state.periods() {
        let ln_a = ln_dirichlet_prior_row(state, p);
        total += ln_dirichlet_ln(&state.ln_beta[p], &ln_a);
        for (l, &m) in stats.m_pl[p].iter().enumerate() {
            total += m as f64 * state.ln_beta[p][l];
        }
    }
    total
}

/// Metropolis move shifting one component's log weight jointly across every
/// period: a shared logit-scale increment applied to coordinate `l` of each
/// row (with the usual per-row corrections composed). Lifting a column in
/// one shot is what lets an unused component with corner-deep weights in the
/// later rows re-enter, which no single-row move can do against the chained
/// prior. Returns acceptance.
pub fn update_beta_column<R: Rng + ?Sized>(
    state: &mut LatentState,
    stats: &SufficientStats,
    component: usize,
    scale: f64,
    rng: &mut R,
) -> bool {
    let dim = state.components();
    if dim < 2 {
        return true;
    }
    let delta: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
    if delta == 0.0 {
        return true;
    }
    let mut candidate = state.clone();
    let mut correction = 0.0;
    for p in 0..state.periods() {
        let ln_row = &state.ln_beta[p];
        let ln_yl = ln_row[component];
        let others: Vec<f64> = ln_row
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != component)
            .map(|(_, &v)| v)
            .collect();
        let ln_1m_yl = log_sum_exp(&others).min(0.0);
        let logit_x = (ln_yl - ln_1m_yl) + delta;
        let ln_xl = -softplus(-logit_x);
        let ln_1m_xl = -softplus(logit_x);
        let shift = ln_1m_xl - ln_1m_yl;
        let mut new_row: Vec<f64> = ln_row.iter().map(|&v| v + shift).collect();
        new_row[component] = ln_xl;
        candidate.set_ln_beta_row(p, new_row);
        correction +=
            (ln_xl - ln_yl) + (dim as f64 - 1.0) * (ln_1m_xl - ln_1m_yl);
    }
    let delta_target =
        log_beta_chain_terms(&candidate, stats) - log_beta_chain_terms(state, stats);
    if accept(rng, delta_target + correction) {
        for p in 0..state.periods() {
            state.beta[p] = candidate.beta[p].clone();
            state.ln_beta[p] = candidate.ln_beta[p].clone();
        }
        true
    } else {
        false
    }
}

/// Log conditional of concentration `p` evaluated at `value`, holding the
/// rest of the state fixed. Collects every joint-posterior term that depends
/// on `alpha_p`: its Gamma link from the previous concentration, its role as
/// the shape for the next one, and its own weight row's Dirichlet prior.
pub fn log_alpha_conditional(
    state: &LatentState,
    hyper: &Hyperparams,
    p: usize,
    value: f64,
) -> f64 {
    if !(value > 0.0) || !value.is_finite() {
        return f64::NEG_INFINITY;
    }
    let shape_prev = if p == 0 {
        hyper.alpha0
    } else {
        state.alpha[p - 1]
    };
    let mut total = (shape_prev - 1.0) * value.ln() - value;
    if p + 1 < state.periods() {
        total += (value - 1.0) * state.alpha[p + 1].ln() - ln_gamma(value);
    }
    let l = state.components();
    let ln_prior_row: Vec<f64> = if p == 0 {
        vec![(value / l as f64).ln(); l]
    } else {
        state.ln_beta[p - 1].iter().map(|&v| value.ln() + v).collect()
    };
    total + ln_dirichlet_ln(&state.ln_beta[p], &ln_prior_row)
}

/// Random-walk Metropolis update of one concentration on the log scale (the
/// proposal Jacobian appears as `ln alpha' - ln alpha`). Returns acceptance.
pub fn update_alpha<R: Rng + ?Sized>(
    state: &mut LatentState,
    hyper: &Hyperparams,
    p: usize,
    scale: f64,
    rng: &mut R,
) -> bool {
    let current = state.alpha[p];
    let eps: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
    let proposal = (current.ln() + eps).exp();
    if !(proposal > 0.0) || !proposal.is_finite() {
        return false;
    }
    let delta = log_alpha_conditional(state, hyper, p, proposal)
        - log_alpha_conditional(state, hyper, p, current)
        + proposal.ln()
        - current.ln();
    if accept(rng, delta) {
        state.alpha[p] = proposal;
        true
    } else {
        false
    }
}

/// `ln B(a)` for a Dirichlet parameter vector given in logs.
fn ln_multi_beta_ln(ln_a: &[f64]) -> f64 {
    ln_a.iter().map(|&x| ln_gamma_of_exp(x)).sum::<f64>() - ln_gamma_of_exp(log_sum_exp(ln_a))
}

/// Joint Metropolis move of `(alpha_p, beta_p)`: a log walk on the
/// concentration with the weight row refreshed from its conjugate given the
/// proposal. The row's Dirichlet kernels cancel, so the acceptance works on
/// the conditional with the row integrated out; this is what lets the chain
/// cross between small concentrations and cornered weight rows, a region the
/// coordinate-wise walks reach only at geometric-in-precision cost.
pub fn update_alpha_collapsed<R: Rng + ?Sized>(
    state: &mut LatentState,
    stats: &SufficientStats,
    hyper: &Hyperparams,
    p: usize,
    scale: f64,
    rng: &mut R,
) -> Result<bool> {
    let periods = state.periods();
    let l = state.components();
    let current = state.alpha[p];
    let eps: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
    let proposal = (current.ln() + eps).exp();
    if !(proposal > 0.0) || !proposal.is_finite() {
        return Ok(false);
    }
    let ln_prior_row = |a: f64| -> Vec<f64> {
        if p == 0 {
            vec![(a / l as f64).ln(); l]
        } else {
            state.ln_beta[p - 1].iter().map(|&v| a.ln() + v).collect()
        }
    };
    let ln_a_cur = ln_prior_row(current);
    let ln_a_prop = ln_prior_row(proposal);
    let candidate = sample_dirichlet_ln(rng, &ln_conc_with_counts(&ln_a_prop, &stats.m_pl[p]))?;

    let shape_prev = if p == 0 {
        hyper.alpha0
    } else {
        state.alpha[p - 1]
    };
    let mut delta = (shape_prev - 1.0) * (proposal.ln() - current.ln()) - (proposal - current);
    delta += ln_multi_beta_ln(&ln_conc_with_counts(&ln_a_prop, &stats.m_pl[p]))
        - ln_multi_beta_ln(&ln_a_prop)
        - ln_multi_beta_ln(&ln_conc_with_counts(&ln_a_cur, &stats.m_pl[p]))
        + ln_multi_beta_ln(&ln_a_cur);
    if p + 1 < periods {
        delta += (proposal - current) * state.alpha[p + 1].ln() - ln_gamma(proposal)
            + ln_gamma(current);
        let down = |ln_row: &[f64]| -> f64 {
            let ln_a_next: Vec<f64> = ln_row
                .iter()
                .map(|&v| state.alpha[p + 1].ln() + v)
                .collect();
            ln_dirichlet_ln(&state.ln_beta[p + 1], &ln_a_next)
        };
        delta += down(&candidate) - down(&state.ln_beta[p]);
    }
    delta += proposal.ln() - current.ln();

    if accept(rng, delta) {
        state.alpha[p] = proposal;
        state.set_ln_beta_row(p, candidate);
        Ok(true)
    } else {
        Ok(false)
    }
}

fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio == f64::NEG_INFINITY || log_ratio.is_nan() {
        return false;
    }
    rng.gen::<f64>().ln() < log_ratio
}

/// Per-sweep acceptance indicators used for step-size adaptation.
#[derive(Debug, Clone)]
pub struct SweepAccepts {
    pub alpha: Vec<bool>,
    /// Logit-walk indicators, the ones the step size adapts on.
    pub beta: Vec<bool>,
    pub beta_independence: Vec<bool>,
}

/// One full cycle over all conditionals in fixed order.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut LatentState,
    stats: &mut SufficientStats,
    data: &PartitionedData,
    hyper: &Hyperparams,
    mode: InteriorBetaMode,
    alpha_scales: &[f64],
    beta_scales: &[f64],
    rng: &mut R,
) -> Result<SweepAccepts> {
    let periods = state.periods();
    update_z(state, data, stats, rng)?;
    update_psi(state, data, hyper, rng)?;
    update_gamma(state, stats, data, hyper, rng)?;
    let mut beta_acc = Vec::with_capacity(periods.saturating_sub(1));
    let mut beta_indep = Vec::with_capacity(periods.saturating_sub(1));
    for p in 0..periods - 1 {
        let (walk, indep) = update_beta_interior(state, stats, p, mode, beta_scales[p], rng)?;
        beta_acc.push(walk);
        beta_indep.push(indep);
    }
    update_beta_terminal(state, stats, rng)?;
    if mode == InteriorBetaMode::ExactMh {
        for l in 0..state.components() {
            update_beta_column(state, stats, l, 1.0, rng);
        }
    }
    let mut alpha_acc = Vec::with_capacity(periods);
    for p in 0..periods {
        alpha_acc.push(update_alpha(state, hyper, p, alpha_scales[p], rng));
        update_alpha_collapsed(state, stats, hyper, p, alpha_scales[p], rng)?;
    }
    Ok(SweepAccepts {
        alpha: alpha_acc,
        beta: beta_acc,
        beta_independence: beta_indep,
    })
}

/// Post-burn-in Metropolis bookkeeping, carried across checkpoints.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptCounters {
    pub alpha_attempts: u64,
    pub alpha_accepts: u64,
    pub beta_attempts: u64,
    pub beta_accepts: u64,
}

impl AcceptCounters {
    fn absorb(&mut self, acc: &SweepAccepts) {
        self.alpha_attempts += acc.alpha.len() as u64;
        self.alpha_accepts += acc.alpha.iter().filter(|&&a| a).count() as u64;
        self.beta_attempts += acc.beta.len() as u64;
        self.beta_accepts += acc.beta.iter().filter(|&&a| a).count() as u64;
    }

    pub fn rates(&self) -> AcceptanceRates {
        let ratio = |a: u64, n: u64| if n == 0 { f64::NAN } else { a as f64 / n as f64 };
        AcceptanceRates {
            alpha: ratio(self.alpha_accepts, self.alpha_attempts),
            beta_interior: ratio(self.beta_accepts, self.beta_attempts),
        }
    }
}

/// Resumable snapshot of a running chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub hyper_hash: String,
    pub config_hash: String,
    /// Completed sweeps.
    pub sweep: usize,
    pub state: LatentState,
    pub rng: ChaCha8Rng,
    pub alpha_scales: Vec<f64>,
    pub beta_scales: Vec<f64>,
    pub counters: AcceptCounters,
}

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

fn hash_json<T: Serialize>(value: &T) -> String {
    crate::sha256_hex(serde_json::to_string(value).expect("serializable").as_bytes())
}

/// A single chain: owns its state, statistics, RNG, and adapted step sizes.
pub struct ChainRunner<'a> {
    data: &'a PartitionedData,
    hyper: &'a Hyperparams,
    config: SamplerConfig,
    state: LatentState,
    stats: SufficientStats,
    rng: ChaCha8Rng,
    sweep_done: usize,
    alpha_scales: Vec<f64>,
    beta_scales: Vec<f64>,
    counters: AcceptCounters,
}

impl<'a> ChainRunner<'a> {
    pub fn new(
        data: &'a PartitionedData,
        hyper: &'a Hyperparams,
        config: SamplerConfig,
    ) -> Result<Self> {
        config.validate()?;
        hyper.validate()?;
        if hyper.periods != data.periods() {
            return Err(Error::Config(format!(
                "hyperparams.periods = {} but the partition has {}",
                hyper.periods,
                data.periods()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = draw_prior_state(hyper, &data.counts(), &mut rng)?;
        let stats = SufficientStats::compute(data, &state.z, hyper.components);
        let periods = data.periods();
        Ok(Self {
            data,
            hyper,
            alpha_scales: vec![config.alpha_step; periods],
            beta_scales: vec![config.beta_step; periods.saturating_sub(1)],
            config,
            state,
            stats,
            rng,
            sweep_done: 0,
            counters: AcceptCounters::default(),
        })
    }

    pub fn resume(
        data: &'a PartitionedData,
        hyper: &'a Hyperparams,
        config: SamplerConfig,
        cp: Checkpoint,
    ) -> Result<Self> {
        config.validate()?;
        if cp.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "checkpoint schema {} unsupported",
                cp.schema_version
            )));
        }
        if cp.hyper_hash != hash_json(hyper) {
            return Err(Error::Config(
                "checkpoint hyperparams differ from the requested run".into(),
            ));
        }
        if cp.config_hash != hash_json(&config) {
            return Err(Error::Config(
                "checkpoint sampler config differs from the requested run".into(),
            ));
        }
        cp.state.validate()?;
        let stats = SufficientStats::compute(data, &cp.state.z, hyper.components);
        if stats.n_p != data.counts() {
            return Err(Error::Data(
                "checkpoint allocations do not match the catalog".into(),
            ));
        }
        Ok(Self {
            data,
            hyper,
            config,
            state: cp.state,
            stats,
            rng: cp.rng,
            sweep_done: cp.sweep,
            alpha_scales: cp.alpha_scales,
            beta_scales: cp.beta_scales,
            counters: cp.counters,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            hyper_hash: hash_json(self.hyper),
            config_hash: hash_json(&self.config),
            sweep: self.sweep_done,
            state: self.state.clone(),
            rng: self.rng.clone(),
            alpha_scales: self.alpha_scales.clone(),
            beta_scales: self.beta_scales.clone(),
            counters: self.counters.clone(),
        }
    }

    pub fn finished(&self) -> bool {
        self.sweep_done >= self.config.sweeps
    }

    pub fn completed_sweeps(&self) -> usize {
        self.sweep_done
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn acceptance(&self) -> AcceptanceRates {
        self.counters.rates()
    }

    /// Runs one sweep; returns the retained draw if this sweep's index is
    /// collected under the burn-in/thinning schedule.
    pub fn step(&mut self) -> Result<Option<Draw>> {
        let accepts = sweep(
            &mut self.state,
            &mut self.stats,
            self.data,
            self.hyper,
            self.config.interior_beta_mode,
            &self.alpha_scales,
            &self.beta_scales,
            &mut self.rng,
        )?;
        self.sweep_done += 1;
        let s = self.sweep_done;
        if s <= self.config.burn_in {
            if self.config.adapt {
                self.adapt_scales(s, &accepts);
            }
        } else {
            self.counters.absorb(&accepts);
        }
        if s > self.config.burn_in && (s - self.config.burn_in) % self.config.thin == 0 {
            let log_post =
                crate::model::log_unnormalized_posterior(&self.state, self.data, self.hyper);
            return Ok(Some(Draw {
                sweep: s,
                log_post,
                state: self.state.clone(),
            }));
        }
        Ok(None)
    }

    /// Robbins-Monro step toward the target acceptance, burn-in only.
    fn adapt_scales(&mut self, sweep_idx: usize, accepts: &SweepAccepts) {
        let gain = (sweep_idx as f64).powf(-0.6);
        let target = self.config.target_accept;
        for (scale, &acc) in self.alpha_scales.iter_mut().zip(&accepts.alpha) {
            let step = gain * (if acc { 1.0 } else { 0.0 } - target);
            *scale = (scale.ln() + step).clamp(-20.0, 10.0).exp();
        }
        for (scale, &acc) in self.beta_scales.iter_mut().zip(&accepts.beta) {
            let step = gain * (if acc { 1.0 } else { 0.0 } - target);
            *scale = (scale.ln() + step).clamp(-20.0, 10.0).exp();
        }
    }
}

/// Runs a full chain to completion and collects the retained draws.
pub fn run_chain(
    data: &PartitionedData,
    hyper: &Hyperparams,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    let mut runner = ChainRunner::new(data, hyper, config.clone())?;
    let mut draws = Vec::with_capacity(config.retained());
    let report_every = (config.sweeps / 20).max(1);
    while !runner.finished() {
        if let Some(draw) = runner.step()? {
            draws.push(draw);
        }
        let s = runner.completed_sweeps();
        if s % report_every == 0 {
            let rates = runner.acceptance();
            log::info!(
                "sweep {s}/{}: accept alpha {:.2} beta {:.2}",
                config.sweeps,
                rates.alpha,
                rates.beta_interior
            );
        }
    }
    Ok(PosteriorDraws {
        header: crate::draws::DrawsHeader {
            schema_version: crate::draws::DRAWS_SCHEMA_VERSION,
            seed: config.seed,
            config_hash: hash_json(config),
            hyper: hyper.clone(),
            partition: data.partition().clone(),
            n_events: data.total(),
            catalog_hash: None,
            chain: 0,
        },
        draws,
        acceptance: Some(runner.acceptance()),
        relabeling: None,
    })
}
