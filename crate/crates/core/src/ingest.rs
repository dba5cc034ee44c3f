//! Sensor and label file ingestion.
//!
//! Raw collar data arrives as a 2 Hz stream of six inertial channels. Labels
//! arrive as half-open `[start, end)` behaviour intervals; any sample not
//! covered by an interval belongs to [`Behavior::Others`].

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal sampling rate of the collar.
pub const NOMINAL_RATE_HZ: f64 = 2.0;
/// Nominal spacing between samples at [`NOMINAL_RATE_HZ`].
pub const NOMINAL_SPACING_MS: i64 = 500;
/// Accepted spacing band; anything wider is a gap.
pub const CADENCE_BAND_MS: (i64, i64) = (400, 600);

pub const SENSOR_HEADER: [&str; 7] = ["timestamp", "ax", "ay", "az", "gx", "gy", "gz"];
pub const LABEL_HEADER: [&str; 3] = ["start_ms", "end_ms", "behavior"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: csv error: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    BadHeader { found: Vec<String>, expected: Vec<String> },
    #[error("malformed row at line {0}")]
    MalformedRow(u64),
    #[error("non-monotonic timestamp {timestamp} at line {line}")]
    NonMonotonicTimestamp { line: u64, timestamp: i64 },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("label segments {0} and {1} overlap")]
    OverlappingSegments(usize, usize),
    #[error("unknown behavior {0:?}")]
    UnknownBehavior(String),
    #[error("label segment at line {0} has start >= end")]
    InvalidSegment(u64),
}

/// The four behaviour classes, in the fixed order used for class indices and
/// prediction tie-breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Feeding,
    Ruminating,
    Lying,
    Others,
}

impl Behavior {
    pub const ALL: [Behavior; 4] = [
        Behavior::Feeding,
        Behavior::Ruminating,
        Behavior::Lying,
        Behavior::Others,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Behavior> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Feeding => "feeding",
            Behavior::Ruminating => "ruminating",
            Behavior::Lying => "lying",
            Behavior::Others => "others",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Behavior {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = s.trim();
        Behavior::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(token))
            .ok_or_else(|| IngestError::UnknownBehavior(token.to_string()))
    }
}

/// One timestamped reading of the six inertial channels.
///
/// Accelerometer in g, gyroscope in deg/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub timestamp: i64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

impl SensorSample {
    pub fn new(timestamp: i64, channels: [f64; 6]) -> Self {
        let [ax, ay, az, gx, gy, gz] = channels;
        Self {
            timestamp,
            ax,
            ay,
            az,
            gx,
            gy,
            gz,
        }
    }

    pub fn channels(&self) -> [f64; 6] {
        [self.ax, self.ay, self.az, self.gx, self.gy, self.gz]
    }

    pub fn with_channels(&self, channels: [f64; 6]) -> Self {
        Self::new(self.timestamp, channels)
    }

    pub fn is_finite(&self) -> bool {
        self.channels().iter().all(|v| v.is_finite())
    }
}

/// Samples ordered by strictly increasing timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    samples: Vec<SensorSample>,
    nominal_rate_hz: f64,
}

impl SampleSeries {
    /// Builds a series, rejecting any non-increasing timestamp.
    pub fn new(samples: Vec<SensorSample>) -> Result<Self, IngestError> {
        if let Some(i) = samples.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(IngestError::NonMonotonicTimestamp {
                line: i as u64 + 2,
                timestamp: samples[i + 1].timestamp,
            });
        }
        Ok(Self {
            samples,
            nominal_rate_hz: NOMINAL_RATE_HZ,
        })
    }

    pub fn samples(&self) -> &[SensorSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nominal_rate_hz(&self) -> f64 {
        self.nominal_rate_hz
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.samples.iter().map(|s| s.timestamp)
    }

    /// Applies `f` to every sample's channel vector, keeping timestamps.
    pub fn map_channels(&self, f: impl Fn([f64; 6]) -> [f64; 6]) -> SampleSeries {
        SampleSeries {
            samples: self.samples.iter().map(|s| s.with_channels(f(s.channels()))).collect(),
            nominal_rate_hz: self.nominal_rate_hz,
        }
    }

    pub fn into_samples(self) -> Vec<SensorSample> {
        self.samples
    }
}

/// Half-open `[start, end)` behaviour interval in epoch milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSegment {
    pub start: i64,
    pub end: i64,
    pub behavior: Behavior,
}

impl LabelSegment {
    pub fn contains(&self, timestamp: i64) -> bool {
        self.start <= timestamp && timestamp < self.end
    }
}

/// A series together with one behaviour per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub series: SampleSeries,
    pub labels: Vec<Behavior>,
}

impl LabeledSeries {
    pub fn new(series: SampleSeries, labels: Vec<Behavior>) -> Self {
        assert_eq!(series.len(), labels.len(), "one label per sample");
        Self { series, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Collapses the per-sample labels into maximal runs of one behaviour.
    /// Runs of `Others` are omitted since it is the default class.
    pub fn to_segments(&self) -> Vec<LabelSegment> {
        let samples = self.series.samples();
        let mut out = Vec::new();
        let mut i = 0;
        while i < samples.len() {
            let behavior = self.labels[i];
            let mut j = i + 1;
            while j < samples.len() && self.labels[j] == behavior {
                j += 1;
            }
            if behavior != Behavior::Others {
                let end = if j < samples.len() {
                    samples[j].timestamp
                } else {
                    samples[j - 1].timestamp + NOMINAL_SPACING_MS
                };
                out.push(LabelSegment {
                    start: samples[i].timestamp,
                    end,
                    behavior,
                });
            }
            i = j;
        }
        out
    }
}

/// Plausibility bounds for the noise-removal pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFilter {
    pub max_abs_acc_g: f64,
    pub max_abs_gyro_dps: f64,
}

impl Default for NoiseFilter {
    fn default() -> Self {
        Self {
            max_abs_acc_g: 16.0,
            max_abs_gyro_dps: 2000.0,
        }
    }
}

impl NoiseFilter {
    pub fn accepts(&self, channels: &[f64; 6]) -> bool {
        channels.iter().all(|v| v.is_finite())
            && channels[..3].iter().all(|v| v.abs() <= self.max_abs_acc_g)
            && channels[3..].iter().all(|v| v.abs() <= self.max_abs_gyro_dps)
    }
}

/// Result of a filtered sensor read.
#[derive(Debug, Clone)]
pub struct SensorRead {
    pub series: SampleSeries,
    /// Rows dropped by the noise filter.
    pub dropped: usize,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
    path: &Path,
) -> Result<(), IngestError> {
    let header = reader.headers().map_err(|source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let found: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Err(IngestError::EmptyFile);
    }
    if found != expected {
        return Err(IngestError::BadHeader {
            found,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        });
    }
    Ok(())
}

/// Parses an epoch-millisecond integer or an RFC 3339 timestamp.
pub fn parse_timestamp(field: &str) -> Option<i64> {
    let field = field.trim();
    if let Ok(ms) = field.parse::<i64>() {
        return Some(ms);
    }
    chrono::DateTime::parse_from_rfc3339(field)
        .ok()
        .map(|dt| dt.timestamp_millis())
}

/// Reads a sensor CSV with the default noise filter.
pub fn read_sensor_csv(path: impl AsRef<Path>) -> Result<SampleSeries, IngestError> {
    read_sensor_csv_filtered(path, &NoiseFilter::default()).map(|r| r.series)
}

/// Reads a sensor CSV, dropping rows that fail `filter`.
///
/// Rows may appear in any order; the result is sorted. Two rows sharing a
/// timestamp are rejected.
pub fn read_sensor_csv_filtered(path: impl AsRef<Path>, filter: &NoiseFilter) -> Result<SensorRead, IngestError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(open(path)?);
    check_header(&mut reader, &SENSOR_HEADER, path)?;

    // (line, sample)
    let mut rows: Vec<(u64, SensorSample)> = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != SENSOR_HEADER.len() {
            return Err(IngestError::MalformedRow(line));
        }
        let timestamp = parse_timestamp(&record[0]).ok_or(IngestError::MalformedRow(line))?;
        let mut channels = [0.0; 6];
        for (slot, field) in channels.iter_mut().zip(record.iter().skip(1)) {
            *slot = field
                .trim()
                .parse::<f64>()
                .map_err(|_| IngestError::MalformedRow(line))?;
        }
        if !filter.accepts(&channels) {
            dropped += 1;
            continue;
        }
        rows.push((line, SensorSample::new(timestamp, channels)));
    }
    if rows.is_empty() && dropped == 0 {
        return Err(IngestError::EmptyFile);
    }

    rows.sort_by_key(|(_, s)| s.timestamp);
    if let Some(w) = rows.windows(2).find(|w| w[0].1.timestamp == w[1].1.timestamp) {
        return Err(IngestError::NonMonotonicTimestamp {
            line: w[1].0.max(w[0].0),
            timestamp: w[1].1.timestamp,
        });
    }
    let series = SampleSeries::new(rows.into_iter().map(|(_, s)| s).collect())?;
    Ok(SensorRead { series, dropped })
}

/// Reads a label CSV; the result is sorted by start and non-overlapping.
pub fn read_label_csv(path: impl AsRef<Path>) -> Result<Vec<LabelSegment>, IngestError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(open(path)?);
    check_header(&mut reader, &LABEL_HEADER, path)?;

    let mut segments = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != LABEL_HEADER.len() {
            return Err(IngestError::MalformedRow(line));
        }
        let start = parse_timestamp(&record[0]).ok_or(IngestError::MalformedRow(line))?;
        let end = parse_timestamp(&record[1]).ok_or(IngestError::MalformedRow(line))?;
        let behavior: Behavior = record[2].parse()?;
        if start >= end {
            return Err(IngestError::InvalidSegment(line));
        }
        segments.push(LabelSegment { start, end, behavior });
    }
    check_segments(&mut segments)?;
    Ok(segments)
}

/// Sorts `segments` by start and rejects overlaps. Touching intervals are fine.
pub fn check_segments(segments: &mut [LabelSegment]) -> Result<(), IngestError> {
    segments.sort_by_key(|s| (s.start, s.end));
    for (i, w) in segments.windows(2).enumerate() {
        if w[1].start < w[0].end {
            return Err(IngestError::OverlappingSegments(i, i + 1));
        }
    }
    Ok(())
}

/// Labels every sample by the segment containing its timestamp, else `Others`.
///
/// Segments must not overlap; their input order does not matter.
pub fn attach_labels(series: SampleSeries, segments: &[LabelSegment]) -> LabeledSeries {
    let mut sorted = segments.to_vec();
    sorted.sort_by_key(|s| s.start);
    let labels = series
        .samples()
        .iter()
        .map(|s| {
            // last segment starting at or before the timestamp
            let idx = sorted.partition_point(|seg| seg.start <= s.timestamp);
            match idx.checked_sub(1).map(|i| sorted[i]) {
                Some(seg) if seg.contains(s.timestamp) => seg.behavior,
                _ => Behavior::Others,
            }
        })
        .collect();
    LabeledSeries::new(series, labels)
}

/// An inter-sample spacing wider than the accepted cadence band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapReport {
    /// Timestamp of the last sample before the hole.
    pub start: i64,
    /// Timestamp of the first sample after the hole.
    pub end: i64,
}

impl GapReport {
    pub fn duration_ms(&self) -> i64 {
        self.end - self.start
    }
}

/// Lists every gap exceeding the upper cadence bound. Gaps are reported,
/// never filled.
pub fn validate_cadence(series: &SampleSeries) -> Vec<GapReport> {
    series
        .samples()
        .windows(2)
        .filter(|w| w[1].timestamp - w[0].timestamp > CADENCE_BAND_MS.1)
        .map(|w| GapReport {
            start: w[0].timestamp,
            end: w[1].timestamp,
        })
        .collect()
}
