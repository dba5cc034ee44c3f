//! Time budgets per hour and per day.
//!
//! Window predictions are first reduced to one behaviour per sample, then
//! every 2 Hz sample adds half a second to its behaviour in its hour bucket.
//! Hours without data are still emitted, with zero minutes and zero
//! `coverage_s`, so downstream consumers can mask them.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Behavior;

pub const MS_PER_HOUR: i64 = 3_600_000;
/// Seconds contributed by one sample at the nominal rate.
pub const SECONDS_PER_SAMPLE: f64 = 0.5;

pub const HOURLY_HEADER: &str = "day,hour,feeding_min,ruminating_min,lying_min,others_min,coverage_s";
pub const DAILY_HEADER: &str = "day,feeding_min,ruminating_min,lying_min,others_min,coverage_s";

#[derive(Debug, Error)]
pub enum SummaryError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("hourly csv line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// A predicted window reduced to what relabelling needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowVote {
    pub start: usize,
    pub len: usize,
    pub behavior: Behavior,
}

/// One behaviour per sample from overlapping window votes.
///
/// Each sample takes the majority of the windows covering it; ties go to the
/// tied class whose covering window starts latest. Samples after the last
/// window take the last window's label, samples before the first take the
/// first window's label. With no windows at all every sample is `Others`.
pub fn labels_per_sample(n_samples: usize, windows: &[WindowVote]) -> Vec<Behavior> {
    let Some(last) = windows.last() else {
        return vec![Behavior::Others; n_samples];
    };
    debug_assert!(windows.windows(2).all(|w| w[0].start <= w[1].start));

    let mut out = Vec::with_capacity(n_samples);
    // covering windows of sample i are those with start <= i < start + len
    let mut lo = 0;
    let mut hi = 0;
    for i in 0..n_samples {
        while hi < windows.len() && windows[hi].start <= i {
            hi += 1;
        }
        while lo < hi && windows[lo].start + windows[lo].len <= i {
            lo += 1;
        }
        if lo == hi {
            out.push(if i < windows[0].start {
                windows[0].behavior
            } else {
                last.behavior
            });
            continue;
        }
        let mut counts = [0usize; Behavior::COUNT];
        // windows may differ in length; skip any in range that ended
        for w in &windows[lo..hi] {
            if i < w.start + w.len {
                counts[w.behavior.index()] += 1;
            }
        }
        let best = *counts.iter().max().expect("four classes");
        let label = windows[lo..hi]
            .iter()
            .rev()
            .find(|w| i < w.start + w.len && counts[w.behavior.index()] == best)
            .map(|w| w.behavior)
            .expect("at least one covering window");
        out.push(label);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySummary {
    pub day: NaiveDate,
    pub hour: u8,
    /// Minutes per behaviour in [`Behavior::ALL`] order.
    pub minutes: [f64; 4],
    pub coverage_s: f64,
}

impl HourlySummary {
    pub fn minutes_of(&self, b: Behavior) -> f64 {
        self.minutes[b.index()]
    }

    pub fn total_minutes(&self) -> f64 {
        self.minutes.iter().sum()
    }

    /// Start of the hour in epoch ms (bucket time, before any offset shift).
    pub fn start_ms(&self) -> i64 {
        self.day
            .and_hms_opt(self.hour as u32, 0, 0)
            .expect("valid hour")
            .and_utc()
            .timestamp_millis()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub day: NaiveDate,
    pub minutes: [f64; 4],
    pub coverage_s: f64,
}

fn bucket_of(timestamp_ms: i64, tz_offset_ms: i64) -> i64 {
    (timestamp_ms + tz_offset_ms).div_euclid(MS_PER_HOUR)
}

fn bucket_date_hour(bucket: i64) -> (NaiveDate, u8) {
    let dt = DateTime::from_timestamp_millis(bucket * MS_PER_HOUR).expect("timestamp in range");
    let naive = dt.naive_utc();
    (naive.date(), chrono::Timelike::hour(&naive) as u8)
}

/// Buckets per-sample behaviours into clock hours. `tz_offset_ms` shifts the
/// bucket edges (local = UTC + offset); totals are unchanged by it.
pub fn summarize_hourly(timestamps: &[i64], labels: &[Behavior], tz_offset_ms: i64) -> Vec<HourlySummary> {
    assert_eq!(timestamps.len(), labels.len());
    let (Some(&first), Some(&last)) = (timestamps.first(), timestamps.last()) else {
        return Vec::new();
    };
    let b0 = bucket_of(first, tz_offset_ms);
    let b1 = bucket_of(last, tz_offset_ms);
    let mut counts = vec![[0u64; 4]; (b1 - b0 + 1) as usize];
    for (&t, &b) in timestamps.iter().zip(labels) {
        counts[(bucket_of(t, tz_offset_ms) - b0) as usize][b.index()] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let (day, hour) = bucket_date_hour(b0 + k as i64);
            HourlySummary {
                day,
                hour,
                minutes: c.map(|n| n as f64 * SECONDS_PER_SAMPLE / 60.0),
                coverage_s: c.iter().sum::<u64>() as f64 * SECONDS_PER_SAMPLE,
            }
        })
        .collect()
}

/// Per-day sums of the hourly entries, in order of first appearance.
pub fn summarize_daily(hourly: &[HourlySummary]) -> Vec<DailySummary> {
    let mut out: Vec<DailySummary> = Vec::new();
    for h in hourly {
        match out.last_mut() {
            Some(d) if d.day == h.day => {
                d.minutes.iter_mut().zip(h.minutes).for_each(|(a, b)| *a += b);
                d.coverage_s += h.coverage_s;
            }
            _ => out.push(DailySummary {
                day: h.day,
                minutes: h.minutes,
                coverage_s: h.coverage_s,
            }),
        }
    }
    out
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> SummaryError + '_ {
    move |source| SummaryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_hourly_csv(hourly: &[HourlySummary], path: impl AsRef<Path>) -> Result<(), SummaryError> {
    let path = path.as_ref();
    let err = io(path);
    let mut w = BufWriter::new(File::create(path).map_err(&err)?);
    writeln!(w, "{HOURLY_HEADER}").map_err(&err)?;
    for h in hourly {
        let [f, r, l, o] = h.minutes;
        writeln!(w, "{},{},{f},{r},{l},{o},{}", h.day, h.hour, h.coverage_s).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_daily_csv(daily: &[DailySummary], path: impl AsRef<Path>) -> Result<(), SummaryError> {
    let path = path.as_ref();
    let err = io(path);
    let mut w = BufWriter::new(File::create(path).map_err(&err)?);
    writeln!(w, "{DAILY_HEADER}").map_err(&err)?;
    for d in daily {
        let [f, r, l, o] = d.minutes;
        writeln!(w, "{},{f},{r},{l},{o},{}", d.day, d.coverage_s).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn read_hourly_csv(path: impl AsRef<Path>) -> Result<Vec<HourlySummary>, SummaryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HOURLY_HEADER => {}
        _ => {
            return Err(SummaryError::Format {
                line: 1,
                reason: format!("expected header {HOURLY_HEADER}"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| SummaryError::Format { line: i + 1, reason };
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", f.len())));
        }
        let day = f[0].parse::<NaiveDate>().map_err(|e| bad(e.to_string()))?;
        let hour = f[1]
            .parse::<u8>()
            .ok()
            .filter(|h| *h < 24)
            .ok_or_else(|| bad("hour".into()))?;
        let mut nums = [0.0; 5];
        for (slot, s) in nums.iter_mut().zip(&f[2..]) {
            *slot = s.parse::<f64>().map_err(|e| bad(e.to_string()))?;
        }
        out.push(HourlySummary {
            day,
            hour,
            minutes: [nums[0], nums[1], nums[2], nums[3]],
            coverage_s: nums[4],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Behavior::*;

    const T0: i64 = 1_704_067_200_000;

    fn votes(labels: &[Behavior], len: usize, stride: usize) -> Vec<WindowVote> {
        labels
            .iter()
            .enumerate()
            .map(|(k, &behavior)| WindowVote {
                start: k * stride,
                len,
                behavior,
            })
            .collect()
    }

    #[test]
    fn non_overlapping_windows_copy_labels() {
        let v = votes(&[Feeding, Lying, Others], 4, 4);
        let l = labels_per_sample(14, &v);
        assert_eq!(&l[..4], &[Feeding; 4]);
        assert_eq!(&l[4..8], &[Lying; 4]);
        assert_eq!(&l[8..12], &[Others; 4]);
        // trailing uncovered samples take the last window's label
        assert_eq!(&l[12..], &[Others; 2]);
    }

    #[test]
    fn majority_over_covering_windows() {
        // sample 3 is covered by windows starting at 0..=3
        let v = votes(&[Feeding, Feeding, Lying, Feeding], 4, 1);
        assert_eq!(labels_per_sample(7, &v)[3], Feeding);
    }

    #[test]
    fn tie_goes_to_latest_window() {
        let v = votes(&[Feeding, Lying], 2, 1);
        // sample 1 covered by both
        assert_eq!(labels_per_sample(3, &v)[1], Lying);
    }

    #[test]
    fn full_hour_of_rumination() {
        let ts: Vec<i64> = (0..7200).map(|i| T0 + i * 500).collect();
        let h = summarize_hourly(&ts, &vec![Ruminating; 7200], 0);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].minutes, [0.0, 60.0, 0.0, 0.0]);
        assert_eq!(h[0].coverage_s, 3600.0);
        assert_eq!(h[0].hour, 0);
    }

    #[test]
    fn split_hour() {
        let ts: Vec<i64> = (0..7200).map(|i| T0 + i * 500).collect();
        let mut labels = vec![Feeding; 3600];
        labels.extend(vec![Lying; 3600]);
        let h = summarize_hourly(&ts, &labels, 0);
        assert_eq!(h[0].minutes_of(Feeding), 30.0);
        assert_eq!(h[0].minutes_of(Lying), 30.0);
    }

    #[test]
    fn gap_reduces_coverage() {
        // ten-minute hole = 1200 samples missing
        let ts: Vec<i64> = (0..7200)
            .filter(|i| !(1200..2400).contains(i))
            .map(|i| T0 + i * 500)
            .collect();
        let h = summarize_hourly(&ts, &vec![Others; ts.len()], 0);
        assert_eq!(h[0].total_minutes(), 50.0);
    }

    #[test]
    fn empty_hours_are_emitted() {
        let ts = vec![T0, T0 + 3 * MS_PER_HOUR];
        let h = summarize_hourly(&ts, &[Lying, Lying], 0);
        assert_eq!(h.len(), 4);
        assert_eq!(h[1].coverage_s, 0.0);
        assert_eq!(h[1].total_minutes(), 0.0);
    }

    #[test]
    fn daily_sums_hours() {
        let hourly: Vec<HourlySummary> = (0..24)
            .map(|hour| HourlySummary {
                day: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                hour,
                minutes: [0.0, 0.0, 60.0, 0.0],
                coverage_s: 3600.0,
            })
            .collect();
        let d = summarize_daily(&hourly);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].minutes[Lying.index()], 1440.0);
        assert!(summarize_daily(&[]).is_empty());
    }

    #[test]
    fn tz_offset_shifts_edges_not_totals() {
        let ts: Vec<i64> = (0..20_000).map(|i| T0 + i * 500).collect();
        let labels: Vec<Behavior> = (0..20_000).map(|i| Behavior::ALL[(i / 977) % 4]).collect();
        let utc = summarize_hourly(&ts, &labels, 0);
        let shifted = summarize_hourly(&ts, &labels, 5 * MS_PER_HOUR + 30 * 60_000);
        let total = |h: &[HourlySummary]| h.iter().map(|x| x.coverage_s).sum::<f64>();
        assert_eq!(total(&utc), total(&shifted));
        assert_eq!(shifted[0].hour, 5);
    }

    #[test]
    fn hourly_csv_roundtrip() {
        let ts: Vec<i64> = (0..9000).map(|i| T0 + i * 500).collect();
        let labels: Vec<Behavior> = (0..9000).map(|i| Behavior::ALL[(i / 311) % 4]).collect();
        let h = summarize_hourly(&ts, &labels, 0);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_hourly_csv(&h, f.path()).unwrap();
        assert_eq!(read_hourly_csv(f.path()).unwrap(), h);
    }
}
