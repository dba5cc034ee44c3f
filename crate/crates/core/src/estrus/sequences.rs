use std::f64::consts::TAU;

use super::{EstrusError, MinMaxScaler};
use crate::ingest::Behavior;
use crate::summarize::{HourlySummary, MS_PER_HOUR};

/// Physical input columns per hour. Hour of day is one logical input encoded
/// as a point on the unit circle so 23:00 and 00:00 are neighbours.
pub const HOURLY_FEATURES: [&str; 5] = ["hour_sin", "hour_cos", "ruminating_min", "feeding_min", "others_min"];
/// Column of the predicted quantity.
pub const OTHERS_COL: usize = 4;
pub const DEFAULT_LOOKBACK: usize = 72;
/// Hours with less coverage than this are masked.
pub const DEFAULT_MIN_COVERAGE_S: f64 = 1800.0;

pub fn hour_features(h: &HourlySummary) -> Vec<f64> {
    let angle = TAU * h.hour as f64 / 24.0;
    vec![
        angle.sin(),
        angle.cos(),
        h.minutes_of(Behavior::Ruminating),
        h.minutes_of(Behavior::Feeding),
        h.minutes_of(Behavior::Others),
    ]
}

pub fn hourly_feature_rows(rows: &[HourlySummary]) -> Vec<Vec<f64>> {
    rows.iter().map(hour_features).collect()
}

/// Lookback windows of scaled hourly features with the next hour's scaled
/// `others_min` as target.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub targets: Vec<f64>,
    /// Index into the source rows of each sequence's target hour.
    pub target_rows: Vec<usize>,
    pub lookback: usize,
}

impl SequenceSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Builds one sequence per target hour `t >= lookback`. A sequence is dropped
/// when any hour in `t - lookback ..= t` is under-covered or when the rows are
/// not consecutive clock hours across that span.
pub fn make_sequences(
    rows: &[HourlySummary],
    scaler: &MinMaxScaler,
    lookback: usize,
    min_coverage_s: f64,
) -> Result<SequenceSet, EstrusError> {
    if rows.len() < lookback + 1 {
        return Err(EstrusError::InsufficientHistory {
            needed: lookback + 1,
            available: rows.len(),
        });
    }
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply_row(&hour_features(r))).collect();
    // bad[k]: row k is masked or does not follow row k-1 by exactly one hour
    let bad: Vec<bool> = rows
        .iter()
        .enumerate()
        .map(|(k, r)| r.coverage_s < min_coverage_s || (k > 0 && r.start_ms() - rows[k - 1].start_ms() != MS_PER_HOUR))
        .collect();

    let mut set = SequenceSet {
        inputs: Vec::new(),
        targets: Vec::new(),
        target_rows: Vec::new(),
        lookback,
    };
    for t in lookback..rows.len() {
        let first = t - lookback;
        // contiguity of row `first` with its predecessor is irrelevant
        if rows[first].coverage_s < min_coverage_s || bad[first + 1..=t].iter().any(|&b| b) {
            continue;
        }
        set.inputs.push(scaled[first..t].to_vec());
        set.targets.push(scaled[t][OTHERS_COL]);
        set.target_rows.push(t);
    }
    Ok(set)
}
