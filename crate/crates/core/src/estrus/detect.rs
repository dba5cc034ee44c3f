use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{lstm_forward, lstm_train, LstmConfig, LstmModel};
use super::sequences::{hourly_feature_rows, make_sequences, SequenceSet, OTHERS_COL};
use super::{minmax_fit, EstrusError, MinMaxScaler};
use crate::ingest::Behavior;
use crate::summarize::HourlySummary;

/// A trained predictor of next-hour "others" minutes together with the
/// preprocessing it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub model: LstmModel,
    pub scaler: MinMaxScaler,
    pub lookback: usize,
    pub min_coverage_s: f64,
}

impl Forecaster {
    /// Sequences over the last `lookback` history rows followed by `rows`;
    /// only targets inside `rows` are kept.
    pub fn sequences(
        &self,
        history: &[HourlySummary],
        rows: &[HourlySummary],
    ) -> Result<(Vec<HourlySummary>, SequenceSet, usize), EstrusError> {
        let tail = &history[history.len().saturating_sub(self.lookback)..];
        let combined: Vec<HourlySummary> = tail.iter().chain(rows).cloned().collect();
        let mut set = make_sequences(&combined, &self.scaler, self.lookback, self.min_coverage_s)?;
        let offset = tail.len();
        let keep: Vec<bool> = set.target_rows.iter().map(|&t| t >= offset).collect();
        let mut k = keep.iter();
        set.inputs.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        set.targets.retain(|_| *k.next().unwrap());
        set.target_rows.retain(|&t| t >= offset);
        Ok((combined, set, offset))
    }

    /// Scaled predictions for every sequence.
    pub fn predict(&self, set: &SequenceSet) -> Result<Vec<f64>, EstrusError> {
        set.inputs
            .par_iter()
            .map(|x| lstm_forward(&self.model, x).map(|(y, _)| y))
            .collect()
    }
}

/// Fits the scaler on the training rows, builds sequences and trains the LSTM.
pub fn train_forecaster(
    train: &[HourlySummary],
    lookback: usize,
    min_coverage_s: f64,
    config: &LstmConfig,
) -> Result<(Forecaster, f64), EstrusError> {
    let scaler = minmax_fit(&hourly_feature_rows(train))?;
    let set = make_sequences(train, &scaler, lookback, min_coverage_s)?;
    if set.is_empty() {
        return Err(EstrusError::NoSequences);
    }
    let outcome = lstm_train(&set.inputs, &set.targets, config)?;
    Ok((
        Forecaster {
            model: outcome.model,
            scaler,
            lookback,
            min_coverage_s,
        },
        outcome.final_loss,
    ))
}

/// Per-hour prediction outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourAnomaly {
    pub day: NaiveDate,
    pub hour: u8,
    pub predicted_others_min: f64,
    pub actual_others_min: f64,
    /// Squared error of the scaled prediction.
    pub sq_error: f64,
    pub is_anomaly: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayVerdict {
    pub day: NaiveDate,
    pub anomaly_hours: usize,
    pub is_heat: bool,
}

/// Flags hours whose squared error exceeds `threshold` with the actual value
/// above the prediction. Only upward deviations count.
pub fn detect_anomalies(
    forecaster: &Forecaster,
    history: &[HourlySummary],
    rows: &[HourlySummary],
    threshold: f64,
) -> Result<Vec<HourAnomaly>, EstrusError> {
    let (combined, set, _) = forecaster.sequences(history, rows)?;
    let predicted = forecaster.predict(&set)?;
    Ok(set
        .target_rows
        .iter()
        .zip(&set.targets)
        .zip(&predicted)
        .map(|((&t, &actual), &pred)| {
            let sq_error = (actual - pred) * (actual - pred);
            let row = &combined[t];
            HourAnomaly {
                day: row.day,
                hour: row.hour,
                predicted_others_min: forecaster.scaler.unscale(OTHERS_COL, pred),
                actual_others_min: row.minutes_of(Behavior::Others),
                sq_error,
                is_anomaly: sq_error > threshold && actual > pred,
            }
        })
        .collect())
}

/// Linear-interpolation quantile (`(n - 1) q` positioning) of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// `q`-quantile of squared errors over normal validation hours.
pub fn calibrate_threshold(
    forecaster: &Forecaster,
    history: &[HourlySummary],
    validation: &[HourlySummary],
    q: f64,
) -> Result<f64, EstrusError> {
    let errors: Vec<f64> = detect_anomalies(forecaster, history, validation, f64::INFINITY)?
        .iter()
        .map(|a| a.sq_error)
        .collect();
    quantile(&errors, q).ok_or(EstrusError::NoSequences)
}

/// Groups hourly flags by day; a day is heat when it has at least
/// `min_anomaly_hours` flagged hours.
pub fn group_verdicts(flags: impl IntoIterator<Item = (NaiveDate, bool)>, min_anomaly_hours: usize) -> Vec<DayVerdict> {
    let mut out: Vec<DayVerdict> = Vec::new();
    for (day, flagged) in flags {
        if out.last().is_none_or(|v| v.day != day) {
            out.push(DayVerdict {
                day,
                anomaly_hours: 0,
                is_heat: false,
            });
        }
        let v = out.last_mut().expect("pushed above");
        v.anomaly_hours += flagged as usize;
    }
    for v in &mut out {
        v.is_heat = v.anomaly_hours >= min_anomaly_hours;
    }
    out
}

pub fn flag_estrus(anomalies: &[HourAnomaly], min_anomaly_hours: usize) -> Vec<DayVerdict> {
    group_verdicts(anomalies.iter().map(|a| (a.day, a.is_anomaly)), min_anomaly_hours)
}

/// A calibrated detector, as persisted to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstrusDetector {
    pub forecaster: Forecaster,
    pub threshold: f64,
    pub min_anomaly_hours: usize,
    pub quantile: f64,
    pub train_loss: f64,
}

impl EstrusDetector {
    pub fn detect(
        &self,
        history: &[HourlySummary],
        rows: &[HourlySummary],
    ) -> Result<(Vec<HourAnomaly>, Vec<DayVerdict>), EstrusError> {
        let anomalies = detect_anomalies(&self.forecaster, history, rows, self.threshold)?;
        let verdicts = flag_estrus(&anomalies, self.min_anomaly_hours);
        Ok((anomalies, verdicts))
    }
}

pub const DETECTOR_FORMAT_VERSION: u32 = 1;
const DETECTOR_FORMAT_NAME: &str = "herdpipe-lstm";

#[derive(Serialize, Deserialize)]
struct DetectorFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    detector: EstrusDetector,
}

pub fn detector_to_json(detector: &EstrusDetector) -> String {
    serde_json::to_string_pretty(&DetectorFile {
        format: DETECTOR_FORMAT_NAME.into(),
        version: DETECTOR_FORMAT_VERSION,
        detector: detector.clone(),
    })
    .expect("detector serialises")
}

pub fn detector_from_json(text: &str) -> Result<EstrusDetector, EstrusError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| EstrusError::CorruptModel(e.to_string()))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == DETECTOR_FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(EstrusError::VersionMismatch {
                found: v,
                expected: DETECTOR_FORMAT_VERSION,
            })
        }
        None => return Err(EstrusError::CorruptModel("missing version".into())),
    }
    let file: DetectorFile = serde_json::from_value(value).map_err(|e| EstrusError::CorruptModel(e.to_string()))?;
    if file.format != DETECTOR_FORMAT_NAME {
        return Err(EstrusError::CorruptModel(format!(
            "unexpected format {:?}",
            file.format
        )));
    }
    let d = file.detector;
    let f = &d.forecaster;
    if !f.model.check_shapes() || !f.model.is_finite() || f.scaler.n_features() != f.model.input_size {
        return Err(EstrusError::CorruptModel("inconsistent shapes".into()));
    }
    Ok(d)
}

pub fn save_detector(detector: &EstrusDetector, path: impl AsRef<Path>) -> Result<(), EstrusError> {
    let path = path.as_ref();
    std::fs::write(path, detector_to_json(detector)).map_err(|source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_detector(path: impl AsRef<Path>) -> Result<EstrusDetector, EstrusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    detector_from_json(&text)
}

pub const ANOMALY_HEADER: &str = "day,hour,predicted_others_min,actual_others_min,sq_error,is_anomaly";
pub const VERDICT_HEADER: &str = "day,anomaly_hours,is_heat";

fn writer(path: &Path) -> Result<BufWriter<File>, EstrusError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| EstrusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_anomaly_csv(anomalies: &[HourAnomaly], path: impl AsRef<Path>) -> Result<(), EstrusError> {
    let path = path.as_ref();
    let io = |source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = writer(path)?;
    writeln!(w, "{ANOMALY_HEADER}").map_err(io)?;
    for a in anomalies {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            a.day, a.hour, a.predicted_others_min, a.actual_others_min, a.sq_error, a.is_anomaly
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_verdict_csv(verdicts: &[DayVerdict], path: impl AsRef<Path>) -> Result<(), EstrusError> {
    let path = path.as_ref();
    let io = |source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = writer(path)?;
    writeln!(w, "{VERDICT_HEADER}").map_err(io)?;
    for v in verdicts {
        writeln!(w, "{},{},{}", v.day, v.anomaly_hours, v.is_heat).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_verdict_csv(path: impl AsRef<Path>) -> Result<Vec<DayVerdict>, EstrusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(VERDICT_HEADER) {
        return Err(EstrusError::CorruptModel(format!(
            "{}: expected header {VERDICT_HEADER}",
            path.display()
        )));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.trim().split(',').collect();
            let bad = || EstrusError::CorruptModel(format!("{}: bad verdict row {l:?}", path.display()));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(DayVerdict {
                day: f[0].parse().map_err(|_| bad())?,
                anomaly_hours: f[1].parse().map_err(|_| bad())?,
                is_heat: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn read_anomaly_csv(path: impl AsRef<Path>) -> Result<Vec<HourAnomaly>, EstrusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EstrusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(ANOMALY_HEADER) {
        return Err(EstrusError::CorruptModel(format!(
            "{}: expected header {ANOMALY_HEADER}",
            path.display()
        )));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.trim().split(',').collect();
            let bad = || EstrusError::CorruptModel(format!("{}: bad anomaly row {l:?}", path.display()));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(HourAnomaly {
                day: f[0].parse().map_err(|_| bad())?,
                hour: f[1].parse().map_err(|_| bad())?,
                predicted_others_min: f[2].parse().map_err(|_| bad())?,
                actual_others_min: f[3].parse().map_err(|_| bad())?,
                sq_error: f[4].parse().map_err(|_| bad())?,
                is_anomaly: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, d).unwrap()
    }

    #[test]
    fn quantile_rule() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), Some(2.5));
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 1.0), Some(4.0));
        assert_eq!(quantile(&[0.7; 9], 0.99), Some(0.7));
        assert_eq!(quantile(&[], 0.5), None);
    }

    #[test]
    fn verdict_boundaries() {
        let flags = [
            (day(1), false),
            (day(1), false),
            (day(2), true),
            (day(2), true),
            (day(2), true),
            (day(3), true),
            (day(3), true),
        ];
        let v = group_verdicts(flags, 3);
        assert_eq!(v.len(), 3);
        assert_eq!((v[0].anomaly_hours, v[0].is_heat), (0, false));
        assert_eq!((v[1].anomaly_hours, v[1].is_heat), (3, true));
        assert_eq!((v[2].anomaly_hours, v[2].is_heat), (2, false));
    }

    #[test]
    fn verdict_csv_roundtrip() {
        let v = vec![
            DayVerdict {
                day: day(4),
                anomaly_hours: 5,
                is_heat: true,
            },
            DayVerdict {
                day: day(5),
                anomaly_hours: 0,
                is_heat: false,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_verdict_csv(&v, f.path()).unwrap();
        assert_eq!(read_verdict_csv(f.path()).unwrap(), v);
    }
}
