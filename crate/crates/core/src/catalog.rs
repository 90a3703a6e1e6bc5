//! Event catalogs: ingestion, validation, and partitioning in time.
//!
//! Times are day offsets from the start of the observation window; calendar
//! handling is left to callers. Period intervals are half-open `[S_p, S_{p+1})`
//! with the final interval closed at the horizon, so partitioning conserves
//! every event.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A single observed event: planar coordinates plus occurrence time in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    /// Parsed and preserved when present; unused by inference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude: Option<f64>,
}

/// Axis-aligned observation region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialWindow {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SpatialWindow {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && y_min.is_finite() && y_max.is_finite()) {
            return Err(Error::Config("spatial window bounds must be finite".into()));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::Config(
                "spatial window requires x_min < x_max and y_min < y_max".into(),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Ordered breakpoints `0 = S_1 < S_2 < ... < S_{P+1} = T` splitting `(0, T)`
/// into `P` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePartition {
    breakpoints: Vec<f64>,
}

impl TimePartition {
    pub fn new(breakpoints: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Config("partition needs at least two breakpoints".into()));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::Config("partition must start at 0".into()));
        }
        for w in breakpoints.windows(2) {
            if !(w[1].is_finite() && w[1] > w[0]) {
                return Err(Error::Config(
                    "partition breakpoints must be finite and strictly increasing".into(),
                ));
            }
        }
        Ok(Self { breakpoints })
    }

    /// Equally spaced partition of `(0, horizon)` into `periods` intervals.
    pub fn regular(horizon: f64, periods: usize) -> Result<Self> {
        if periods == 0 {
            return Err(Error::Config("period count must be at least 1".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        let mut breakpoints = Vec::with_capacity(periods + 1);
        for i in 0..=periods {
            let b = if i == periods {
                horizon
            } else {
                horizon * i as f64 / periods as f64
            };
            breakpoints.push(b);
        }
        Self::new(breakpoints)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Number of periods P.
    pub fn periods(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Total horizon T.
    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Length of interval `I_p` (0-based period index).
    pub fn interval_len(&self, p: usize) -> f64 {
        self.breakpoints[p + 1] - self.breakpoints[p]
    }

    /// Period containing `t`, intervals `[S_p, S_{p+1})` and the last closed
    /// at T. `None` outside `[0, T]`.
    pub fn period_of(&self, t: f64) -> Option<usize> {
        if !(t >= 0.0 && t <= self.horizon()) {
            return None;
        }
        if t == self.horizon() {
            return Some(self.periods() - 1);
        }
        // partition_point: first breakpoint strictly greater than t
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        Some(idx - 1)
    }
}

/// Policy for events that fall outside the spatial window at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfWindowPolicy {
    /// Fail loudly (default): the model assumes mass inside the window dominates.
    #[default]
    Error,
    /// Drop the event and log a warning.
    DropWithWarning,
}

/// A validated, time-sorted event catalog over a spatial window and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub events: Vec<Event>,
    pub window: SpatialWindow,
    pub horizon: f64,
}

impl Catalog {
    /// Validates and time-sorts raw events into a catalog. Out-of-horizon
    /// events error; out-of-window handling follows `policy`.
    pub fn from_events(
        mut events: Vec<Event>,
        window: SpatialWindow,
        horizon: f64,
        policy: OutOfWindowPolicy,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        for e in &events {
            if !(e.x.is_finite() && e.y.is_finite() && e.t.is_finite()) {
                return Err(Error::Data("event coordinates must be finite".into()));
            }
            if e.t < 0.0 || e.t > horizon {
                return Err(Error::Data(format!(
                    "time out of range: t={}, horizon={horizon}",
                    e.t
                )));
            }
        }
        let before = events.len();
        events.retain(|e| window.contains(e.x, e.y));
        let dropped = before - events.len();
        if dropped > 0 {
            match policy {
                OutOfWindowPolicy::Error => {
                    return Err(Error::Data(format!(
                        "{dropped} event(s) outside the spatial window"
                    )))
                }
                OutOfWindowPolicy::DropWithWarning => {
                    log::warn!("dropped {dropped} event(s) outside the spatial window");
                }
            }
        }
        events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        Ok(Self {
            events,
            window,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Loads a catalog from delimited text: one `x,y,t[,magnitude]` row per line,
/// `#` comments and an optional header ignored.
pub fn load_catalog(
    path: &Path,
    window: SpatialWindow,
    horizon: f64,
    policy: OutOfWindowPolicy,
) -> Result<Catalog> {
    let text = fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut events = Vec::new();
    let mut saw_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::Parse {
                path: path_str,
                line: line_no,
                msg: format!("expected 3 or 4 columns, found {}", fields.len()),
            });
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if !saw_data => continue, // header line
            Err(e) => {
                return Err(Error::Parse {
                    path: path_str,
                    line: line_no,
                    msg: e.to_string(),
                })
            }
        };
        saw_data = true;
        let (x, y, t) = (values[0], values[1], values[2]);
        if !(x.is_finite() && y.is_finite() && t.is_finite()) {
            return Err(Error::Parse {
                path: path_str,
                line: line_no,
                msg: "non-finite value".into(),
            });
        }
        if t < 0.0 || t > horizon {
            return Err(Error::TimeOutOfRange {
                path: path_str,
                line: line_no,
                t,
                horizon,
            });
        }
        if !window.contains(x, y) {
            match policy {
                OutOfWindowPolicy::Error => {
                    return Err(Error::OutsideWindow {
                        path: path_str,
                        line: line_no,
                        x,
                        y,
                    })
                }
                OutOfWindowPolicy::DropWithWarning => {
                    log::warn!("{path_str}:{line_no}: dropping event outside window");
                    continue;
                }
            }
        }
        events.push(Event {
            x,
            y,
            t,
            magnitude: values.get(3).copied(),
        });
    }
    Catalog::from_events(events, window, horizon, OutOfWindowPolicy::Error)
}

/// Serializes a catalog to the on-disk format; `comments` become leading
/// `#`-prefixed provenance lines.
pub fn catalog_to_string(catalog: &Catalog, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("x,y,t,magnitude\n");
    for e in &catalog.events {
        match e.magnitude {
            Some(m) => {
                let _ = writeln!(out, "{},{},{},{}", e.x, e.y, e.t, m);
            }
            None => {
                let _ = writeln!(out, "{},{},{}", e.x, e.y, e.t);
            }
        }
    }
    out
}

pub fn save_catalog(path: &Path, catalog: &Catalog, comments: &[String]) -> Result<()> {
    fs::write(path, catalog_to_string(catalog, comments))?;
    Ok(())
}

/// Splits a catalog's events into per-period lists.
pub fn partition_events(catalog: &Catalog, partition: &TimePartition) -> Result<Vec<Vec<Event>>> {
    if partition.horizon() != catalog.horizon {
        return Err(Error::Data(format!(
            "partition horizon {} does not match catalog horizon {}",
            partition.horizon(),
            catalog.horizon
        )));
    }
    let mut periods = vec![Vec::new(); partition.periods()];
    for e in &catalog.events {
        // t validated within [0, T] at load
        let p = partition.period_of(e.t).unwrap();
        periods[p].push(*e);
    }
    Ok(periods)
}
