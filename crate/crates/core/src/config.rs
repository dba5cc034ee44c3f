//! Pipeline configuration.
//!
//! Values come from built-in defaults, then an optional TOML file, then
//! `HERDPIPE_*` environment variables, then command-line flags. Environment
//! names are the upper-cased key path joined by `_`, for example
//! `HERDPIPE_FOREST_N_TREES` or `HERDPIPE_SEED`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::ForestParams;
use crate::estrus::{LstmConfig, DEFAULT_LOOKBACK, DEFAULT_MIN_COVERAGE_S};
use crate::features::{FeatureConfig, ParamMode};
use crate::pipeline::PipelineError;

pub const ENV_PREFIX: &str = "HERDPIPE_";
/// Environment variable naming a config file; not itself a config key.
pub const ENV_CONFIG_FILE: &str = "HERDPIPE_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            model_dir: "models".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub mode: ParamMode,
    pub window_size: usize,
    pub stride: usize,
    pub fft_block: usize,
    pub fft_bands: usize,
    pub rate_hz: f64,
}

impl Default for FeatureSection {
    fn default() -> Self {
        let c = FeatureConfig::default();
        Self {
            mode: ParamMode::Stats24,
            window_size: c.window_size,
            stride: c.stride,
            fft_block: c.fft_block,
            fft_bands: c.fft_bands,
            rate_hz: c.rate_hz,
        }
    }
}

impl FeatureSection {
    pub fn config(&self) -> FeatureConfig {
        FeatureConfig {
            window_size: self.window_size,
            stride: self.stride,
            fft_block: self.fft_block,
            fft_bands: self.fft_bands,
            rate_hz: self.rate_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstrusSection {
    /// Hours of history per prediction.
    pub lookback: usize,
    pub min_coverage_s: f64,
    /// Quantile of validation squared errors used as threshold.
    pub quantile: f64,
    pub min_anomaly_hours: usize,
    /// Activity-index threshold for the baseline detector.
    pub delta_threshold: f64,
    /// Leading days of the hourly table used for training.
    pub train_days: usize,
    /// Days after the training days used for threshold calibration.
    pub val_days: usize,
}

impl Default for EstrusSection {
    fn default() -> Self {
        Self {
            lookback: DEFAULT_LOOKBACK,
            min_coverage_s: DEFAULT_MIN_COVERAGE_S,
            quantile: 0.99,
            min_anomaly_hours: 3,
            delta_threshold: 1.0,
            train_days: 30,
            val_days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Local time = UTC + this many minutes, for hourly buckets.
    pub tz_offset_min: i64,
    pub paths: Paths,
    pub features: FeatureSection,
    pub forest: ForestParams,
    pub lstm: LstmConfig,
    pub estrus: EstrusSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|_| PipelineError::MissingInput(path.to_path_buf()))?;
        Self::from_toml(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies `HERDPIPE_*` overrides from `vars`. Unknown names are errors.
    pub fn apply_env<I, K, V>(&self, vars: I) -> Result<Self, PipelineError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table = toml::Value::try_from(self).expect("config serialises");
        let root = table.as_table_mut().expect("config is a table");
        for (name, raw) in vars {
            let name = name.as_ref();
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            if name == ENV_CONFIG_FILE {
                continue;
            }
            let key = rest.to_ascii_lowercase();
            let bad = || PipelineError::Config(format!("{name}: cannot parse {:?}", raw.as_ref()));
            // optional keys are absent from the serialised defaults
            if key == "forest_features_per_split" {
                let v = raw.as_ref().trim().parse::<i64>().map_err(|_| bad())?;
                root.get_mut("forest")
                    .and_then(toml::Value::as_table_mut)
                    .expect("forest section")
                    .insert("features_per_split".into(), toml::Value::Integer(v));
                continue;
            }
            let slot = find_slot(root, &key)
                .ok_or_else(|| PipelineError::Config(format!("unknown environment override {name}")))?;
            *slot = parse_like(slot, raw.as_ref()).ok_or_else(bad)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))
    }

    /// Defaults, then `file` if given, then the process environment.
    pub fn load(file: Option<&Path>) -> Result<Self, PipelineError> {
        let env_file = std::env::var_os(ENV_CONFIG_FILE).map(PathBuf::from);
        let base = match file.map(Path::to_path_buf).or(env_file) {
            Some(p) => Self::from_file(&p)?,
            None => Self::default(),
        };
        base.apply_env(std::env::vars())
    }

    pub fn tz_offset_ms(&self) -> i64 {
        self.tz_offset_min * 60_000
    }
}

/// Finds the value addressed by `key`, where nested table names and the leaf
/// key are joined by `_` (names may themselves contain `_`).
fn find_slot<'a>(table: &'a mut toml::Table, key: &str) -> Option<&'a mut toml::Value> {
    if table.get(key).is_some_and(|v| !v.is_table()) {
        return table.get_mut(key);
    }
    let section = table
        .iter()
        .filter(|(name, v)| v.is_table() && key.starts_with(&format!("{name}_")))
        .map(|(name, _)| name.clone())
        .next()?;
    let rest = &key[section.len() + 1..];
    find_slot(table.get_mut(&section)?.as_table_mut()?, rest)
}

fn parse_like(current: &toml::Value, raw: &str) -> Option<toml::Value> {
    use toml::Value;
    Some(match current {
        Value::String(_) => Value::String(raw.to_string()),
        Value::Integer(_) => Value::Integer(raw.trim().parse().ok()?),
        Value::Float(_) => Value::Float(raw.trim().parse().ok()?),
        Value::Boolean(_) => Value::Boolean(raw.trim().parse().ok()?),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(PipelineConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn file_values_and_unknown_keys() {
        let c = PipelineConfig::from_toml("seed = 9\n[forest]\nn_trees = 12\n[features]\nmode = \"raw6\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.forest.n_trees, 12);
        assert_eq!(c.features.mode, ParamMode::Raw6);
        assert!(PipelineConfig::from_toml("sede = 9").is_err());
        assert!(PipelineConfig::from_toml("[forest]\ntrees = 3").is_err());
    }

    #[test]
    fn env_overrides() {
        let c = PipelineConfig::default()
            .apply_env([
                ("HERDPIPE_FOREST_N_TREES", "7"),
                ("HERDPIPE_SEED", "3"),
                ("HERDPIPE_ESTRUS_MIN_COVERAGE_S", "900"),
                ("HERDPIPE_PATHS_OUT_DIR", "/tmp/x"),
                ("HERDPIPE_FEATURES_MODE", "raw6"),
                ("PATH", "/bin"),
            ])
            .unwrap();
        assert_eq!(c.forest.n_trees, 7);
        assert_eq!(c.seed, 3);
        assert_eq!(c.estrus.min_coverage_s, 900.0);
        assert_eq!(c.paths.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.features.mode, ParamMode::Raw6);
        assert!(PipelineConfig::default().apply_env([("HERDPIPE_NOPE", "1")]).is_err());
        assert!(PipelineConfig::default().apply_env([("HERDPIPE_SEED", "x")]).is_err());
    }
}
