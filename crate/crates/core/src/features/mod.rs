//! Preprocessing and feature extraction.
//!
//! Samples are z-score normalised per channel, cut into 10-sample rolling
//! windows, and each window becomes one feature row. Three row layouts are
//! available:
//!
//! * [`ParamMode::Raw6`]: per-window mean of the six channels.
//! * [`ParamMode::Stats24`]: `{min, max, std, mean}` for each channel, in the
//!   order `min_ax,max_ax,std_ax,mean_ax,min_ay,...,mean_gz`.
//! * [`ParamMode::Stats24PlusFft`]: the 24 statistics followed by
//!   `fft_domfreq,fft_dommag,band_e1..band_eN` computed on `acc_x` over the
//!   64-sample block enclosing the window.
//!
//! Standard deviations are population (divide by `n`) everywhere.

mod spectrum;
mod window;
mod zscore;

pub use spectrum::{dft, fft, fft_features, FftFeatures, Spectrum, MIN_FFT_BLOCK};
pub use window::{majority_label, rolling_windows, window_count, Window};
pub use zscore::{apply_zscore, apply_zscore_labeled, fit_zscore, invert_zscore, ZScoreStats};

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Behavior, LabeledSeries};

pub const CHANNEL_NAMES: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot fit normalisation on an empty series")]
    EmptySeries,
    #[error("fft block of {len} samples is shorter than {min}")]
    BlockTooShort { len: usize, min: usize },
    #[error("feature csv: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Feature vector with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFeatures {
    pub values: Vec<f64>,
    pub schema: Vec<String>,
}

pub fn stats24_schema() -> Vec<String> {
    CHANNEL_NAMES
        .iter()
        .flat_map(|c| ["min", "max", "std", "mean"].map(|s| format!("{s}_{c}")))
        .collect()
}

pub fn raw6_schema() -> Vec<String> {
    CHANNEL_NAMES.iter().map(|c| c.to_string()).collect()
}

fn stats_values(window: &Window<'_>) -> Vec<f64> {
    let n = window.samples.len() as f64;
    let mut out = Vec::with_capacity(24);
    for c in 0..6 {
        let vals = window.samples.iter().map(|s| s.channels()[c]);
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for v in vals.clone() {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        let mean = sum / n;
        let var = vals.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        out.extend_from_slice(&[lo, hi, var.sqrt(), mean]);
    }
    out
}

/// `{min, max, std, mean}` for each of the six channels.
pub fn window_stats(window: &Window<'_>) -> WindowFeatures {
    WindowFeatures {
        values: stats_values(window),
        schema: stats24_schema(),
    }
}

fn raw6_values(window: &Window<'_>) -> Vec<f64> {
    let n = window.samples.len() as f64;
    let mut sums = [0.0; 6];
    for s in window.samples {
        for (acc, v) in sums.iter_mut().zip(s.channels()) {
            *acc += v;
        }
    }
    sums.iter().map(|s| s / n).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    Raw6,
    Stats24,
    #[serde(rename = "stats24fft")]
    Stats24PlusFft,
}

impl fmt::Display for ParamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamMode::Raw6 => "raw6",
            ParamMode::Stats24 => "stats24",
            ParamMode::Stats24PlusFft => "stats24fft",
        })
    }
}

impl FromStr for ParamMode {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw6" => Ok(ParamMode::Raw6),
            "stats24" => Ok(ParamMode::Stats24),
            "stats24fft" | "stats24+fft" => Ok(ParamMode::Stats24PlusFft),
            other => Err(FeatureError::Format(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub window_size: usize,
    pub stride: usize,
    pub fft_block: usize,
    pub fft_bands: usize,
    pub rate_hz: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_size: 10,
            stride: 1,
            fft_block: 64,
            fft_bands: 3,
            rate_hz: crate::ingest::NOMINAL_RATE_HZ,
        }
    }
}

impl FeatureConfig {
    pub fn schema(&self, mode: ParamMode) -> Vec<String> {
        match mode {
            ParamMode::Raw6 => raw6_schema(),
            ParamMode::Stats24 => stats24_schema(),
            ParamMode::Stats24PlusFft => {
                let mut s = stats24_schema();
                s.extend(FftFeatures::names(self.fft_bands));
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// Index of the window's first sample in the source series.
    pub start: usize,
    pub values: Vec<f64>,
    pub label: Behavior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub schema: Vec<String>,
    pub mode: ParamMode,
    pub rows: Vec<FeatureRow>,
}

impl FeatureDataset {
    pub fn empty(mode: ParamMode, config: &FeatureConfig) -> Self {
        Self {
            schema: config.schema(mode),
            mode,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = Behavior> + '_ {
        self.rows.iter().map(|r| r.label)
    }

    pub fn features(&self, i: usize) -> WindowFeatures {
        WindowFeatures {
            values: self.rows[i].values.clone(),
            schema: self.schema.clone(),
        }
    }

    /// Appends rows of another dataset with the same schema.
    pub fn extend(&mut self, other: FeatureDataset) {
        assert_eq!(self.schema, other.schema, "schema mismatch");
        self.rows.extend(other.rows);
    }

    /// Chronological split: the first `floor(len * fraction)` rows and the rest.
    pub fn split_chronological(&self, fraction: f64) -> (FeatureDataset, FeatureDataset) {
        let cut = ((self.rows.len() as f64) * fraction).floor() as usize;
        let head = FeatureDataset {
            schema: self.schema.clone(),
            mode: self.mode,
            rows: self.rows[..cut].to_vec(),
        };
        let tail = FeatureDataset {
            schema: self.schema.clone(),
            mode: self.mode,
            rows: self.rows[cut..].to_vec(),
        };
        (head, tail)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let path = path.as_ref();
        let io = |source| FeatureError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(w, "{},label", self.schema.join(",")).map_err(io)?;
        for row in &self.rows {
            for v in &row.values {
                write!(w, "{v},").map_err(io)?;
            }
            writeln!(w, "{}", row.label).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a feature CSV. The mode is inferred from the header; row
    /// `start` is the row index since the file does not carry offsets.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<FeatureDataset, FeatureError> {
        let path = path.as_ref();
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| FeatureError::Format(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| FeatureError::Format(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let (_, schema) = header
            .split_last()
            .filter(|(l, _)| l.as_str() == "label")
            .ok_or_else(|| FeatureError::Format("last column must be `label`".into()))?;
        let schema = schema.to_vec();
        let mode = if schema == raw6_schema() {
            ParamMode::Raw6
        } else if schema == stats24_schema() {
            ParamMode::Stats24
        } else if schema.len() > 24 && schema[..24] == stats24_schema()[..] {
            ParamMode::Stats24PlusFft
        } else {
            return Err(FeatureError::Format("unrecognised feature schema".into()));
        };
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| FeatureError::Format(e.to_string()))?;
            if rec.len() != schema.len() + 1 {
                return Err(FeatureError::Format(format!("row {} has {} fields", i + 1, rec.len())));
            }
            let values = rec
                .iter()
                .take(schema.len())
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| FeatureError::Format(format!("row {}: {e}", i + 1)))?;
            let label: Behavior = rec[schema.len()]
                .parse()
                .map_err(|e: crate::ingest::IngestError| FeatureError::Format(e.to_string()))?;
            rows.push(FeatureRow {
                start: i,
                values,
                label,
            });
        }
        Ok(FeatureDataset { schema, mode, rows })
    }
}

/// FFT features for every `block`-sample block of `acc_x`. A trailing partial
/// block is not transformed; windows there reuse the last full block.
fn block_fft_features(labeled: &LabeledSeries, config: &FeatureConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    let ax: Vec<f64> = labeled.series.samples().iter().map(|s| s.ax).collect();
    let block = config.fft_block.min(ax.len());
    if block < MIN_FFT_BLOCK {
        return Err(FeatureError::BlockTooShort {
            len: block,
            min: MIN_FFT_BLOCK,
        });
    }
    ax.par_chunks_exact(block)
        .map(|chunk| fft_features(chunk, config.rate_hz, config.fft_bands).map(|f| f.to_vec()))
        .collect()
}

/// Turns a normalised labelled series into one feature row per rolling window.
pub fn build_feature_dataset(
    labeled: &LabeledSeries,
    mode: ParamMode,
    config: &FeatureConfig,
) -> Result<FeatureDataset, FeatureError> {
    let windows = rolling_windows(labeled, config.window_size, config.stride);
    let blocks = match mode {
        ParamMode::Stats24PlusFft if !windows.is_empty() => block_fft_features(labeled, config)?,
        _ => Vec::new(),
    };
    let block_len = config.fft_block.min(labeled.len()).max(1);
    let rows = windows
        .par_iter()
        .map(|w| {
            let values = match mode {
                ParamMode::Raw6 => raw6_values(w),
                ParamMode::Stats24 => stats_values(w),
                ParamMode::Stats24PlusFft => {
                    let mut v = stats_values(w);
                    let b = (w.start / block_len).min(blocks.len() - 1);
                    v.extend_from_slice(&blocks[b]);
                    v
                }
            };
            FeatureRow {
                start: w.start,
                values,
                label: w.label,
            }
        })
        .collect();
    Ok(FeatureDataset {
        schema: config.schema(mode),
        mode,
        rows,
    })
}
