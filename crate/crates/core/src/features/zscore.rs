use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::ingest::{LabeledSeries, SampleSeries};

/// Relative spread below which a channel is treated as constant.
const CONSTANT_EPS: f64 = 1e-12;

/// Per-channel population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl ZScoreStats {
    pub fn is_constant(&self, channel: usize) -> bool {
        self.std[channel] <= CONSTANT_EPS * self.mean[channel].abs().max(1.0)
    }

    pub fn constant_channels(&self) -> Vec<usize> {
        (0..6).filter(|&c| self.is_constant(c)).collect()
    }

    pub fn transform(&self, x: [f64; 6]) -> [f64; 6] {
        std::array::from_fn(|c| {
            if self.is_constant(c) {
                0.0
            } else {
                (x[c] - self.mean[c]) / self.std[c]
            }
        })
    }

    /// Constant channels come back as their mean.
    pub fn inverse(&self, z: [f64; 6]) -> [f64; 6] {
        std::array::from_fn(|c| {
            if self.is_constant(c) {
                self.mean[c]
            } else {
                z[c] * self.std[c] + self.mean[c]
            }
        })
    }
}

/// Two-pass population moments per channel.
pub fn fit_zscore(series: &SampleSeries) -> Result<ZScoreStats, FeatureError> {
    if series.is_empty() {
        return Err(FeatureError::EmptySeries);
    }
    let n = series.len() as f64;
    let mut mean = [0.0; 6];
    for s in series.samples() {
        for (m, v) in mean.iter_mut().zip(s.channels()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    // second pass removes the rounding left in the naive mean
    let mut residual = [0.0; 6];
    for s in series.samples() {
        for ((r, v), m) in residual.iter_mut().zip(s.channels()).zip(mean) {
            *r += v - m;
        }
    }
    mean.iter_mut().zip(residual).for_each(|(m, r)| *m += r / n);
    let mut var = [0.0; 6];
    for s in series.samples() {
        for ((acc, v), m) in var.iter_mut().zip(s.channels()).zip(mean) {
            *acc += (v - m) * (v - m);
        }
    }
    Ok(ZScoreStats {
        mean,
        std: var.map(|v| (v / n).sqrt()),
    })
}

pub fn apply_zscore(series: &SampleSeries, stats: &ZScoreStats) -> SampleSeries {
    series.map_channels(|x| stats.transform(x))
}

pub fn apply_zscore_labeled(labeled: &LabeledSeries, stats: &ZScoreStats) -> LabeledSeries {
    LabeledSeries::new(apply_zscore(&labeled.series, stats), labeled.labels.clone())
}

pub fn invert_zscore(series: &SampleSeries, stats: &ZScoreStats) -> SampleSeries {
    series.map_channels(|z| stats.inverse(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SensorSample;

    fn series_of(ax: &[f64]) -> SampleSeries {
        SampleSeries::new(
            ax.iter()
                .enumerate()
                .map(|(i, &v)| SensorSample::new(i as i64 * 500 + 1, [v, 0.0, 0.0, 0.0, 0.0, 0.0]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_channel_flagged() {
        let st = fit_zscore(&series_of(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(st.mean[0], 5.0);
        assert_eq!(st.std[0], 0.0);
        assert!(st.is_constant(0));
        assert_eq!(st.transform([5.0; 6])[0], 0.0);
    }

    #[test]
    fn population_std() {
        let st = fit_zscore(&series_of(&[1.0, 3.0])).unwrap();
        assert_eq!(st.mean[0], 2.0);
        assert_eq!(st.std[0], 1.0);
        assert_eq!(st.transform([2.0; 6])[0], 0.0);
        assert_eq!(st.transform([3.0; 6])[0], 1.0);
    }

    #[test]
    fn empty_series_errors() {
        let empty = SampleSeries::new(vec![]).unwrap();
        assert!(matches!(fit_zscore(&empty), Err(FeatureError::EmptySeries)));
    }

    #[test]
    fn inverse_roundtrip() {
        let s = series_of(&[0.3, -7.25, 12.0, 4.5, 1e-3]);
        let st = fit_zscore(&s).unwrap();
        let back = invert_zscore(&apply_zscore(&s, &st), &st);
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert!((a.ax - b.ax).abs() <= 1e-12 * a.ax.abs().max(1.0));
        }
    }
}
