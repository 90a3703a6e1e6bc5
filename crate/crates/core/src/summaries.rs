//! Posterior summaries: per-period intensity grids (mean, standard deviation,
//! coefficient of variation, transparency) and per-period rate tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::SpatialWindow;
use crate::draws::PosteriorDraws;
use crate::model::{mixture_density, LatentState};
use crate::{Error, Result};

/// Evaluation lattice over a window, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub window: SpatialWindow,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(window: SpatialWindow, nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config("grid needs at least 2 nodes per axis".into()));
        }
        Ok(Self { window, nx, ny })
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn coords(&self, ix: usize, iy: usize) -> (f64, f64) {
        let fx = ix as f64 / (self.nx - 1) as f64;
        let fy = iy as f64 / (self.ny - 1) as f64;
        (
            self.window.x_min + fx * (self.window.x_max - self.window.x_min),
            self.window.y_min + fy * (self.window.y_max - self.window.y_min),
        )
    }
}

/// Posterior intensity fields over a grid, one layer per period, stored
/// row-major per period (`index = p * nodes + iy * nx + ix`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityField {
    pub grid: GridSpec,
    pub periods: usize,
    pub draws: usize,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub cv: Vec<f64>,
    pub transparency: Vec<f64>,
}

impl IntensityField {
    pub fn index(&self, p: usize, ix: usize, iy: usize) -> usize {
        p * self.grid.nodes() + iy * self.grid.nx + ix
    }
}

/// Intensity of one posterior draw at a point: `gamma_p * f_p(x, y)`.
pub fn intensity_draw(state: &LatentState, p: usize, x: f64, y: f64) -> f64 {
    state.gamma[p] * mixture_density(state, p, x, y)
}

/// Accumulates mean/sd/CV/transparency grids over a stream of states in a
/// single pass (Welford), so draw files larger than memory are fine.
pub fn summarize_fields<I>(states: I, grid: &GridSpec) -> Result<IntensityField>
where
    I: IntoIterator<Item = Result<LatentState>>,
{
    let nodes = grid.nodes();
    let mut count = 0usize;
    let mut periods = 0usize;
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    for state in states {
        let state = state?;
        if count == 0 {
            periods = state.periods();
            mean = vec![0.0; periods * nodes];
            m2 = vec![0.0; periods * nodes];
        } else if state.periods() != periods {
            return Err(Error::Data("draws disagree on period count".into()));
        }
        count += 1;
        let n = count as f64;
        for p in 0..periods {
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    let (x, y) = grid.coords(ix, iy);
                    let value = intensity_draw(&state, p, x, y);
                    let idx = p * nodes + iy * grid.nx + ix;
                    let delta = value - mean[idx];
                    mean[idx] += delta / n;
                    m2[idx] += delta * (value - mean[idx]);
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::Data("no draws to summarize".into()));
    }
    let sd: Vec<f64> = m2
        .iter()
        .map(|&s| {
            if count > 1 {
                (s / (count as f64 - 1.0)).max(0.0).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let cv: Vec<f64> = sd
        .iter()
        .zip(&mean)
        .map(|(&s, &m)| if s == 0.0 { 0.0 } else { s / m })
        .collect();
    let cv_min = cv.iter().cloned().fold(f64::INFINITY, f64::min);
    let transparency: Vec<f64> = cv
        .iter()
        .map(|&c| if c == 0.0 { 1.0 } else { 1.0 - (c - cv_min) / c })
        .collect();
    Ok(IntensityField {
        grid: *grid,
        periods,
        draws: count,
        mean,
        sd,
        cv,
        transparency,
    })
}

/// In-memory convenience wrapper over [`summarize_fields`].
pub fn summarize_posterior(draws: &PosteriorDraws, grid: &GridSpec) -> Result<IntensityField> {
    if draws.is_empty() {
        return Err(Error::Data("no draws to summarize".into()));
    }
    summarize_fields(draws.states().map(|s| Ok(s.clone())), grid)
}

/// Plot-ready delimited text: `period,x,y,mean,sd,cv,transparency`, periods
/// reported 1-based.
pub fn field_to_delimited(field: &IntensityField) -> String {
    let mut out = String::from("period,x,y,mean,sd,cv,transparency\n");
    for p in 0..field.periods {
        for iy in 0..field.grid.ny {
            for ix in 0..field.grid.nx {
                let (x, y) = field.grid.coords(ix, iy);
                let i = field.index(p, ix, iy);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    p + 1,
                    x,
                    y,
                    field.mean[i],
                    field.sd[i],
                    field.cv[i],
                    field.transparency[i]
                );
            }
        }
    }
    out
}

/// Central credible interval bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Marginal posterior summary of one period's rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    /// 1-based period index.
    pub period: usize,
    pub mean: f64,
    pub sd: f64,
    pub intervals: Vec<CredibleInterval>,
    pub histogram: Histogram,
}

/// Linear-interpolation quantile of an ascending-sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Histograms, moments, and 50/90/95% central credible intervals per period.
pub fn gamma_summaries(draws: &PosteriorDraws, bins: usize) -> Result<Vec<GammaSummary>> {
    if draws.is_empty() {
        return Err(Error::Data("no draws to summarize".into()));
    }
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let periods = draws.draws[0].state.periods();
    let mut out = Vec::with_capacity(periods);
    for p in 0..periods {
        let mut values: Vec<f64> = draws.draws.iter().map(|d| d.state.gamma[p]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let intervals = [0.5, 0.9, 0.95]
            .iter()
            .map(|&level| CredibleInterval {
                level,
                lower: quantile_sorted(&values, (1.0 - level) / 2.0),
                upper: quantile_sorted(&values, (1.0 + level) / 2.0),
            })
            .collect();
        let (lo, hi) = (values[0], values[values.len() - 1]);
        let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &v in &values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        out.push(GammaSummary {
            period: p + 1,
            mean,
            sd,
            intervals,
            histogram: Histogram { edges, counts },
        });
    }
    Ok(out)
}
