//! Activity-index baseline: an hourly activity level `γ` compared against the
//! same hour on the three previous days.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::detect::{group_verdicts, DayVerdict};
use super::EstrusError;
use crate::ingest::Behavior;
use crate::summarize::{HourlySummary, MS_PER_HOUR};

pub const HIGH_WEIGHT: f64 = 0.9;
pub const MEDIUM_WEIGHT: f64 = 0.1;
/// Lags, in hours, the current hour is compared against.
pub const LAGS: [usize; 3] = [72, 48, 24];

/// `γ = others·0.9 + feeding·0.1`; resting behaviours carry no weight.
pub fn shahriar_gamma(hour: &HourlySummary) -> f64 {
    hour.minutes_of(Behavior::Others) * HIGH_WEIGHT + hour.minutes_of(Behavior::Feeding) * MEDIUM_WEIGHT
}

/// `δ_t = (3γ_t − Σ lags) / (γ_t + Σ lags)`, which lies in `[-1, 3]` for
/// nonnegative `γ`; the result is clamped so rounding cannot leave that range.
pub fn shahriar_delta(gammas: &[f64], t: usize) -> Result<f64, EstrusError> {
    if t < 72 || t >= gammas.len() {
        return Err(EstrusError::InsufficientHistory {
            needed: 73,
            available: gammas.len().min(t + 1),
        });
    }
    let g = gammas[t];
    let lagged: f64 = LAGS.iter().map(|&l| gammas[t - l]).sum();
    let denom = g + lagged;
    if denom == 0.0 {
        return Err(EstrusError::ZeroDenominator);
    }
    Ok(((3.0 * g - lagged) / denom).clamp(-1.0, 3.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityIndexPoint {
    pub day: NaiveDate,
    pub hour: u8,
    pub gamma: f64,
    /// `None` where history is missing, under-covered, or the denominator is 0.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivityIndexSeries {
    pub points: Vec<ActivityIndexPoint>,
}

/// Computes `γ` and `δ` for every row. The lag rows must be exactly 24, 48
/// and 72 clock hours earlier and all four hours must meet `min_coverage_s`.
pub fn activity_index(rows: &[HourlySummary], min_coverage_s: f64) -> ActivityIndexSeries {
    let gammas: Vec<f64> = rows.iter().map(shahriar_gamma).collect();
    let points = rows
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let usable = t >= 72
                && r.coverage_s >= min_coverage_s
                && LAGS.iter().all(|&l| {
                    let p = &rows[t - l];
                    p.coverage_s >= min_coverage_s && r.start_ms() - p.start_ms() == l as i64 * MS_PER_HOUR
                });
            ActivityIndexPoint {
                day: r.day,
                hour: r.hour,
                gamma: gammas[t],
                delta: if usable { shahriar_delta(&gammas, t).ok() } else { None },
            }
        })
        .collect();
    ActivityIndexSeries { points }
}

impl ActivityIndexSeries {
    /// Drops points before `day`.
    pub fn from_day(mut self, day: NaiveDate) -> Self {
        self.points.retain(|p| p.day >= day);
        self
    }
}

/// An hour is anomalous when `δ > delta_threshold`; masked hours never are.
pub fn shahriar_detect(series: &ActivityIndexSeries, delta_threshold: f64, min_hours: usize) -> Vec<DayVerdict> {
    group_verdicts(
        series
            .points
            .iter()
            .map(|p| (p.day, p.delta.is_some_and(|d| d > delta_threshold))),
        min_hours,
    )
}

pub const ACTIVITY_HEADER: &str = "day,hour,gamma,delta,is_anomaly";

/// Writes the hourly index; masked `δ` is an empty field.
pub fn write_activity_csv(
    series: &ActivityIndexSeries,
    delta_threshold: f64,
    path: impl AsRef<Path>,
) -> Result<(), EstrusError> {
    let path = path.as_ref();
    let io = |source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{ACTIVITY_HEADER}").map_err(io)?;
    for p in &series.points {
        let delta = p.delta.map(|d| d.to_string()).unwrap_or_default();
        let flag = p.delta.is_some_and(|d| d > delta_threshold);
        writeln!(w, "{},{},{},{},{}", p.day, p.hour, p.gamma, delta, flag).map_err(io)?;
    }
    w.flush().map_err(io)
}
