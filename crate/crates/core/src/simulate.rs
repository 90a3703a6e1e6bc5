//! Evaluable ground-truth intensities and thinning-based simulation of
//! non-homogeneous Poisson processes.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Event, OutOfWindowPolicy, SpatialWindow};
use crate::gauss::Gaussian2;
use crate::{Error, Result};

/// A weighted finite mixture of planar Gaussians; weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialMixture {
    pub weights: Vec<f64>,
    pub components: Vec<Gaussian2>,
}

impl SpatialMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian2>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::Config(
                "mixture weights and components must be non-empty and equal-length".into(),
            ));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Config("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "mixture weights must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.density(x, y))
            .sum()
    }

    /// Pointwise upper bound: sum of weighted component peaks.
    pub fn peak_bound(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.peak_density())
            .sum()
    }
}

/// Piecewise-constant temporal rate in events per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseRate {
    /// Left edges of the constant pieces; the first must be 0.
    pub breaks: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PiecewiseRate {
    pub fn constant(rate: f64) -> Self {
        Self {
            breaks: vec![0.0],
            rates: vec![rate],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.breaks.len() != self.rates.len() || self.breaks.is_empty() {
            return Err(Error::Config(
                "rate schedule needs matching non-empty breaks and rates".into(),
            ));
        }
        if self.breaks[0] != 0.0 {
            return Err(Error::Config("rate schedule must start at t=0".into()));
        }
        if self.breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "rate breaks must be strictly increasing".into(),
            ));
        }
        if self.rates.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(Error::Config("rates must be nonnegative and finite".into()));
        }
        Ok(())
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let idx = self.breaks.partition_point(|&b| b <= t);
        self.rates[idx.saturating_sub(1)]
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }
}

/// Logistic blend weight `h(t) = 1 / (1 + exp(-(t - midpoint)/scale))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticWeight {
    pub midpoint: f64,
    pub scale: f64,
}

impl LogisticWeight {
    pub fn eval(&self, t: f64) -> f64 {
        1.0 / (1.0 + (-(t - self.midpoint) / self.scale).exp())
    }
}

/// Ground-truth intensity `rate(t) * (h(t) g1(x,y) + (1 - h(t)) g2(x,y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIntensity {
    pub rate: PiecewiseRate,
    pub weight: LogisticWeight,
    pub g1: SpatialMixture,
    pub g2: SpatialMixture,
}

impl SyntheticIntensity {
    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        if !(self.weight.scale.is_finite() && self.weight.scale != 0.0) {
            return Err(Error::Config(
                "logistic scale must be finite and nonzero".into(),
            ));
        }
        Ok(())
    }

    /// The two-regime, four-component benchmark intensity over
    /// `D = (-5,10)^2`, `T = 10`: rate 50 before t=5 and 100 after, with the
    /// spatial blend shifting from `g2` toward `g1` as t approaches T.
    pub fn benchmark() -> Self {
        let unit =
            |x: f64, y: f64| Gaussian2::new(Vector2::new(x, y), nalgebra::Matrix2::identity());
        Self {
            rate: PiecewiseRate {
                breaks: vec![0.0, 5.0],
                rates: vec![50.0, 100.0],
            },
            weight: LogisticWeight {
                midpoint: 10.0,
                scale: 2.0,
            },
            g1: SpatialMixture::new(
                vec![2.0 / 3.0, 1.0 / 3.0],
                vec![unit(0.0, 0.0).unwrap(), unit(2.0, 2.0).unwrap()],
            )
            .unwrap(),
            g2: SpatialMixture::new(
                vec![2.0 / 3.0, 1.0 / 3.0],
                vec![unit(6.0, 2.0).unwrap(), unit(4.0, 6.0).unwrap()],
            )
            .unwrap(),
        }
    }

    /// True means of the benchmark's four spatial components.
    pub fn benchmark_means() -> [(f64, f64); 4] {
        [(0.0, 0.0), (2.0, 2.0), (6.0, 2.0), (4.0, 6.0)]
    }
}

/// Anything evaluable as a space-time intensity (events per day per unit
/// area) with an upper bound over a window.
pub trait IntensityFn {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64;
    /// An upper bound for the intensity over `window x [0, horizon]`.
    fn upper_bound(&self, window: &SpatialWindow, horizon: f64) -> f64;
}

impl IntensityFn for SyntheticIntensity {
    fn eval(&self, x: f64, y: f64, t: f64) -> f64 {
        let h = self.weight.eval(t);
        self.rate.rate_at(t) * (h * self.g1.density(x, y) + (1.0 - h) * self.g2.density(x, y))
    }

    fn upper_bound(&self, _window: &SpatialWindow, _horizon: f64) -> f64 {
        // The temporal blend is convex, so the spatial factor is bounded by the
        // larger of the two mixture peak bounds; 1.05 covers round-off slack.
        1.05 * self.rate.max_rate() * self.g1.peak_bound().max(self.g2.peak_bound())
    }
}

/// Evaluates a synthetic intensity, rejecting times outside the horizon.
pub fn eval_intensity(
    spec: &SyntheticIntensity,
    x: f64,
    y: f64,
    t: f64,
    horizon: f64,
) -> Result<f64> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Data(format!("t={t} outside horizon [0, {horizon}]")));
    }
    Ok(spec.eval(x, y, t))
}

/// Dominating bound used by the thinning simulator.
pub fn upper_bound(spec: &SyntheticIntensity, window: &SpatialWindow, horizon: f64) -> f64 {
    spec.upper_bound(window, horizon)
}

/// A simulated catalog plus the latent mixture component that generated each
/// retained event (indices into `g1`'s components followed by `g2`'s).
#[derive(Debug, Clone)]
pub struct SimulatedCatalog {
    pub catalog: Catalog,
    pub component_labels: Vec<usize>,
}

/// Simulates an NHPP restricted to `window x [0, horizon]` by thinning a
/// homogeneous dominating process of rate `bound`. Deterministic given `seed`.
pub fn simulate_thinning_fn<F: IntensityFn>(
    intensity: &F,
    window: &SpatialWindow,
    horizon: f64,
    seed: u64,
) -> Result<Catalog> {
    let bound = intensity.upper_bound(window, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    for (x, y, t) in thinning_candidates(&mut rng, window, horizon, bound)? {
        let lambda = intensity.eval(x, y, t);
        if lambda > bound {
            return Err(Error::Numeric(format!(
                "thinning bound {bound} below intensity {lambda} at ({x}, {y}, {t})"
            )));
        }
        let u: f64 = rng.gen();
        if u * bound < lambda {
            events.push(Event {
                x,
                y,
                t,
                magnitude: None,
            });
        }
    }
    Catalog::from_events(events, *window, horizon, OutOfWindowPolicy::Error)
}

/// As [`simulate_thinning_fn`] for a [`SyntheticIntensity`], additionally
/// drawing the generating mixture component of each retained event.
pub fn simulate_thinning(
    spec: &SyntheticIntensity,
    window: &SpatialWindow,
    horizon: f64,
    seed: u64,
) -> Result<SimulatedCatalog> {
    spec.validate()?;
    let bound = spec.upper_bound(window, horizon);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut labels = Vec::new();
    for (x, y, t) in thinning_candidates(&mut rng, window, horizon, bound)? {
        let h = spec.weight.eval(t);
        let rate = spec.rate.rate_at(t);
        // per-component contributions; their total is the intensity here
        let mut contrib = Vec::with_capacity(spec.g1.weights.len() + spec.g2.weights.len());
        for (w, c) in spec.g1.weights.iter().zip(&spec.g1.components) {
            contrib.push(rate * h * w * c.density(x, y));
        }
        for (w, c) in spec.g2.weights.iter().zip(&spec.g2.components) {
            contrib.push(rate * (1.0 - h) * w * c.density(x, y));
        }
        let lambda: f64 = contrib.iter().sum();
        if lambda > bound {
            return Err(Error::Numeric(format!(
                "thinning bound {bound} below intensity {lambda} at ({x}, {y}, {t})"
            )));
        }
        let u: f64 = rng.gen();
        if u * bound < lambda {
            // attribute the event to a component in proportion to its share
            let pick: f64 = rng.gen::<f64>() * lambda;
            let mut acc = 0.0;
            let mut label = contrib.len() - 1;
            for (i, c) in contrib.iter().enumerate() {
                acc += c;
                if pick < acc {
                    label = i;
                    break;
                }
            }
            events.push(Event {
                x,
                y,
                t,
                magnitude: None,
            });
            labels.push(label);
        }
    }
    // co-sort events and labels by time
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].t.partial_cmp(&events[b].t).unwrap());
    let sorted_events: Vec<Event> = order.iter().map(|&i| events[i]).collect();
    let component_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let catalog = Catalog::from_events(sorted_events, *window, horizon, OutOfWindowPolicy::Error)?;
    Ok(SimulatedCatalog {
        catalog,
        component_labels,
    })
}

/// Candidate points of the dominating homogeneous process, in draw order.
fn thinning_candidates<R: Rng>(
    rng: &mut R,
    window: &SpatialWindow,
    horizon: f64,
    bound: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    if !(bound.is_finite() && bound >= 0.0) {
        return Err(Error::Numeric(format!("invalid thinning bound {bound}")));
    }
    let volume = window.area() * horizon;
    let mean = bound * volume;
    let n = if mean == 0.0 {
        0
    } else {
        Poisson::new(mean)
            .map_err(|e| Error::Numeric(format!("candidate count: {e}")))?
            .sample(rng) as usize
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen_range(window.x_min..window.x_max);
        let y = rng.gen_range(window.y_min..window.y_max);
        let t = rng.gen_range(0.0..horizon);
        out.push((x, y, t));
    }
    Ok(out)
}
