//! Stage glue shared by the command line and the examples.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ForestError, RandomForestModel};
use crate::estrus::{DayVerdict, EstrusError};
use crate::features::{
    apply_zscore, build_feature_dataset, fit_zscore, FeatureConfig, FeatureDataset, FeatureError, ParamMode,
    ZScoreStats,
};
use crate::ingest::{Behavior, IngestError, LabeledSeries, SampleSeries};
use crate::summarize::{labels_per_sample, summarize_hourly, HourlySummary, SummaryError, WindowVote};
use crate::synth::{CalendarEntry, SynthError, MS_PER_DAY, SYNTH_EPOCH_MS};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("feature schema mismatch: {0}")]
    Schema(String),
    #[error("calendar mismatch: {0}")]
    CalendarMismatch(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error(transparent)]
    Estrus(#[from] EstrusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration or missing files, 3 for schema
    /// mismatches, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingInput(_) => 2,
            PipelineError::Synth(SynthError::InvalidSpec(_) | SynthError::InvalidSchedule(_)) => 2,
            PipelineError::Schema(_) | PipelineError::Forest(ForestError::SchemaMismatch { .. }) => 3,
            PipelineError::Ingest(IngestError::Io { source, .. })
            | PipelineError::Feature(FeatureError::Io { source, .. })
            | PipelineError::Forest(ForestError::Io { source, .. })
            | PipelineError::Summary(SummaryError::Io { source, .. })
            | PipelineError::Estrus(EstrusError::Io { source, .. })
            | PipelineError::Io { source, .. }
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                2
            }
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Normalisation and windowing a classifier was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub zscore: ZScoreStats,
    pub mode: ParamMode,
    pub features: FeatureConfig,
}

const PREP_FORMAT: &str = "herdpipe-preprocessing";

#[derive(Serialize, Deserialize)]
struct PrepFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    prep: Preprocessing,
}

impl Preprocessing {
    /// Fits the z-score on `series`.
    pub fn fit(series: &SampleSeries, mode: ParamMode, features: FeatureConfig) -> Result<Self, PipelineError> {
        Ok(Self {
            zscore: fit_zscore(series)?,
            mode,
            features,
        })
    }

    pub fn features(&self, labeled: &LabeledSeries) -> Result<FeatureDataset, PipelineError> {
        let normalised = LabeledSeries::new(apply_zscore(&labeled.series, &self.zscore), labeled.labels.clone());
        Ok(build_feature_dataset(&normalised, self.mode, &self.features)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(&PrepFile {
            format: PREP_FORMAT.into(),
            version: 1,
            prep: self.clone(),
        })
        .expect("preprocessing serialises");
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let file: PrepFile =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if file.format != PREP_FORMAT || file.version != 1 {
            return Err(PipelineError::Config(format!(
                "{}: unsupported preprocessing file {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        Ok(file.prep)
    }
}

/// Predicts one behaviour per sample of `series`. Windows are classified
/// with the preprocessing's stride and each sample takes the majority vote of
/// the windows covering it.
pub fn classify_series(
    model: &RandomForestModel,
    prep: &Preprocessing,
    series: &SampleSeries,
) -> Result<Vec<Behavior>, PipelineError> {
    let schema = prep.features.schema(prep.mode);
    if schema != model.schema {
        return Err(PipelineError::Schema(format!(
            "model expects {} features ({}), preprocessing produces {} ({})",
            model.schema.len(),
            model.schema.join(","),
            schema.len(),
            schema.join(",")
        )));
    }
    if series.len() < prep.features.window_size {
        return Ok(vec![Behavior::Others; series.len()]);
    }
    let unlabeled = LabeledSeries::new(series.clone(), vec![Behavior::Others; series.len()]);
    let dataset = prep.features(&unlabeled)?;
    let predictions = model.predict_dataset(&dataset)?;
    let votes: Vec<WindowVote> = dataset
        .rows
        .iter()
        .zip(&predictions)
        .map(|(row, p)| WindowVote {
            start: row.start,
            len: prep.features.window_size,
            behavior: p.behavior,
        })
        .collect();
    Ok(labels_per_sample(series.len(), &votes))
}

/// Classifies and summarises consecutive series (for example one per day)
/// into a single hourly table.
pub fn hourly_from_series<'a>(
    model: &RandomForestModel,
    prep: &Preprocessing,
    series: impl IntoIterator<Item = &'a SampleSeries>,
    tz_offset_ms: i64,
) -> Result<Vec<HourlySummary>, PipelineError> {
    let mut timestamps = Vec::new();
    let mut labels = Vec::new();
    for s in series {
        labels.extend(classify_series(model, prep, s)?);
        timestamps.extend(s.timestamps());
    }
    Ok(summarize_hourly(&timestamps, &labels, tz_offset_ms))
}

/// Rows of `hourly` whose day lies in `[from, to)`, counted in distinct days
/// from the first row.
pub fn day_slice(hourly: &[HourlySummary], from: usize, to: usize) -> Vec<HourlySummary> {
    let mut out = Vec::new();
    let mut index = 0;
    let mut current = None;
    for h in hourly {
        if current.is_some_and(|d| d != h.day) {
            index += 1;
        }
        current = Some(h.day);
        if index >= from && index < to {
            out.push(h.clone());
        }
    }
    out
}

/// Calendar date of a synthetic day index.
pub fn synth_day_date(day_index: usize) -> chrono::NaiveDate {
    chrono::DateTime::from_timestamp_millis(SYNTH_EPOCH_MS + day_index as i64 * MS_PER_DAY)
        .expect("in range")
        .date_naive()
}

/// Day-level detection quality against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayMetrics {
    pub heat_days: usize,
    pub normal_days: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

/// Scores verdicts against the calendar entries of one cow. Every verdict day
/// must appear in the calendar.
pub fn score_verdicts(
    verdicts: &[DayVerdict],
    calendar: &[CalendarEntry],
    cow: usize,
) -> Result<DayMetrics, PipelineError> {
    if verdicts.is_empty() {
        return Err(PipelineError::CalendarMismatch("no predicted days".into()));
    }
    let (mut heat, mut normal, mut tp, mut fp) = (0, 0, 0, 0);
    for v in verdicts {
        let entry = calendar
            .iter()
            .find(|e| e.cow_id == cow && synth_day_date(e.day_index) == v.day)
            .ok_or_else(|| PipelineError::CalendarMismatch(format!("{} (cow {cow}) not in calendar", v.day)))?;
        if entry.is_estrus {
            heat += 1;
            tp += v.is_heat as usize;
        } else {
            normal += 1;
            fp += v.is_heat as usize;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    Ok(DayMetrics {
        heat_days: heat,
        normal_days: normal,
        true_positives: tp,
        false_positives: fp,
        sensitivity: ratio(tp, heat),
        specificity: ratio(normal - fp, normal),
        accuracy: ratio(tp + normal - fp, heat + normal),
    })
}
