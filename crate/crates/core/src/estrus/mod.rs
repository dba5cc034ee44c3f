//! Estrus detection from hourly behaviour summaries.
//!
//! The primary detector trains a single-layer LSTM to predict the next hour's
//! "others" minutes from the previous 72 hours, then flags hours whose actual
//! activity exceeds the prediction by more than a calibrated squared-error
//! threshold. Days with enough flagged hours are reported as heat. A simpler
//! activity-index detector is provided for comparison.

mod detect;
mod lstm;
mod scaler;
mod sequences;
mod shahriar;

pub use detect::{
    calibrate_threshold, detect_anomalies, detector_from_json, detector_to_json, flag_estrus, group_verdicts,
    load_detector, quantile, read_anomaly_csv, read_verdict_csv, save_detector, train_forecaster, write_anomaly_csv,
    write_verdict_csv, DayVerdict, EstrusDetector, Forecaster, HourAnomaly, ANOMALY_HEADER, DETECTOR_FORMAT_VERSION,
    VERDICT_HEADER,
};
pub use lstm::{
    gradient_check, gradient_check_with, lstm_forward, lstm_gradient, lstm_train, mean_squared_error, LstmConfig,
    LstmGradients, LstmModel, LstmState, TrainOutcome,
};
pub use scaler::{minmax_apply, minmax_fit, minmax_invert, MinMaxScaler};
pub use sequences::{
    hour_features, hourly_feature_rows, make_sequences, SequenceSet, DEFAULT_LOOKBACK, DEFAULT_MIN_COVERAGE_S,
    HOURLY_FEATURES, OTHERS_COL,
};
pub use shahriar::{
    activity_index, shahriar_delta, shahriar_detect, shahriar_gamma, write_activity_csv, ActivityIndexPoint,
    ActivityIndexSeries, ACTIVITY_HEADER,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstrusError {
    #[error("insufficient history: need {needed} hourly rows, have {available}")]
    InsufficientHistory { needed: usize, available: usize },
    #[error("shape mismatch: expected {expected} input columns, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("no usable sequences")]
    NoSequences,
    #[error("cannot fit a scaler on zero rows")]
    EmptyFit,
    #[error("activity index denominator is zero")]
    ZeroDenominator,
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
