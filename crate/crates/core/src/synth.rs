//! Synthetic collar data.
//!
//! Signals follow the qualitative signatures of each behaviour: rumination
//! oscillates around a negative `acc_x` centre, feeding oscillates more widely
//! around a positive centre, lying is flat with occasional head-movement
//! spikes, and everything else is a bounded random walk. Multi-day herds can
//! carry estrus days on which time is moved from lying/rumination into
//! "others" activity.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Behavior, LabeledSeries, SampleSeries, SensorSample, NOMINAL_SPACING_MS};

pub const MINUTES_PER_DAY: u32 = 1440;
pub const SAMPLES_PER_DAY: usize = 24 * 3600 * 2;
/// 2024-01-01T00:00:00Z; day 0 of every generated herd.
pub const SYNTH_EPOCH_MS: i64 = 1_704_067_200_000;
pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid herd spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Shape of the `acc_x` signal for one behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pattern {
    /// `centre + amplitude * sin(2 pi f t + phase)`
    Oscillating,
    /// `centre` plus sparse spikes.
    FlatWithSpikes,
    /// Reflecting random walk within `[-bound, bound]`.
    RandomWalk { step_std: f64, bound: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub behavior: Behavior,
    pub pattern: Pattern,
    /// Range the per-segment `acc_x` centre is drawn from (g).
    pub center_range: (f64, f64),
    /// Oscillation half-range (g).
    pub amplitude: f64,
    pub freq_hz: (f64, f64),
    pub noise_std: f64,
    pub spike_rate_hz: f64,
    pub spike_amplitude: f64,
    /// Multiplier turning the acc pattern into gyroscope deg/s.
    pub gyro_scale: f64,
}

impl BehaviorProfile {
    fn validate(&self) -> Result<(), SynthError> {
        let ok = self.center_range.0 <= self.center_range.1
            && self.amplitude >= 0.0
            && self.noise_std >= 0.0
            && self.spike_rate_hz >= 0.0
            && self.freq_hz.0 <= self.freq_hz.1;
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidSpec(format!(
                "profile for {} violates its invariants",
                self.behavior
            )))
        }
    }
}

pub type ProfileMap = BTreeMap<Behavior, BehaviorProfile>;

pub fn default_profiles() -> ProfileMap {
    let rumination = BehaviorProfile {
        behavior: Behavior::Ruminating,
        pattern: Pattern::Oscillating,
        center_range: (-3.0, -2.0),
        amplitude: 0.4,
        freq_hz: (0.4, 0.7),
        noise_std: 0.08,
        spike_rate_hz: 0.0,
        spike_amplitude: 0.0,
        gyro_scale: 8.0,
    };
    let feeding = BehaviorProfile {
        behavior: Behavior::Feeding,
        pattern: Pattern::Oscillating,
        center_range: (3.5, 5.0),
        amplitude: 1.5,
        freq_hz: (0.4, 0.7),
        noise_std: 0.15,
        spike_rate_hz: 0.0,
        spike_amplitude: 0.0,
        gyro_scale: 8.0,
    };
    let lying = BehaviorProfile {
        behavior: Behavior::Lying,
        pattern: Pattern::FlatWithSpikes,
        center_range: (0.0, 0.0),
        amplitude: 0.0,
        freq_hz: (0.0, 0.0),
        noise_std: 0.02,
        spike_rate_hz: 0.02,
        spike_amplitude: 0.6,
        gyro_scale: 8.0,
    };
    let others = BehaviorProfile {
        behavior: Behavior::Others,
        pattern: Pattern::RandomWalk {
            step_std: 1.5,
            bound: 3.0,
        },
        center_range: (-1.0, 1.0),
        amplitude: 0.0,
        freq_hz: (0.0, 0.0),
        noise_std: 0.5,
        spike_rate_hz: 0.0,
        spike_amplitude: 0.0,
        gyro_scale: 8.0,
    };
    [rumination, feeding, lying, others]
        .into_iter()
        .map(|p| (p.behavior, p))
        .collect()
}

/// One `[start_min, end_min)` block of a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBlock {
    pub start_min: u32,
    pub end_min: u32,
    pub behavior: Behavior,
}

/// Ordered, non-overlapping behaviour blocks within one day. Uncovered
/// minutes are `Others`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DaySchedule {
    pub blocks: Vec<ScheduleBlock>,
}

impl DaySchedule {
    pub fn new(blocks: Vec<ScheduleBlock>) -> Result<Self, SynthError> {
        let s = Self { blocks };
        s.validate()?;
        Ok(s)
    }

    pub fn full_day(behavior: Behavior) -> Self {
        Self {
            blocks: vec![ScheduleBlock {
                start_min: 0,
                end_min: MINUTES_PER_DAY,
                behavior,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let mut prev_end = 0;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.start_min >= b.end_min || b.end_min > MINUTES_PER_DAY {
                return Err(SynthError::InvalidSchedule(format!(
                    "block {i} [{}, {}) outside the day or empty",
                    b.start_min, b.end_min
                )));
            }
            if b.start_min < prev_end {
                return Err(SynthError::InvalidSchedule(format!(
                    "block {i} overlaps its predecessor"
                )));
            }
            prev_end = b.end_min;
        }
        Ok(())
    }

    /// Expands to one behaviour per minute of the day.
    pub fn minutes(&self) -> Vec<Behavior> {
        let mut out = vec![Behavior::Others; MINUTES_PER_DAY as usize];
        for b in &self.blocks {
            out[b.start_min as usize..b.end_min as usize].fill(b.behavior);
        }
        out
    }

    /// Collapses a per-minute plan back into blocks.
    pub fn from_minutes(minutes: &[Behavior]) -> Self {
        assert_eq!(minutes.len(), MINUTES_PER_DAY as usize);
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < minutes.len() {
            let mut j = i + 1;
            while j < minutes.len() && minutes[j] == minutes[i] {
                j += 1;
            }
            if minutes[i] != Behavior::Others {
                blocks.push(ScheduleBlock {
                    start_min: i as u32,
                    end_min: j as u32,
                    behavior: minutes[i],
                });
            }
            i = j;
        }
        Self { blocks }
    }

    pub fn minutes_of(&self, behavior: Behavior) -> u32 {
        self.minutes().iter().filter(|&&b| b == behavior).count() as u32
    }
}

/// Draws a jittered daily routine: rumination through the night
/// (18:00 to 05:00), two daytime feeding bouts, a midday rest, and short
/// restless interruptions. With `others_boost > 1` extra "others" time is
/// carved out of lying and rumination until the day's "others" total reaches
/// `others_boost` times its base value.
pub fn sample_schedule(rng: &mut impl Rng, others_boost: f64) -> DaySchedule {
    let mut jitter = |m: i32| -> u32 { (m + rng.gen_range(-15..=15)).clamp(0, 1440) as u32 };
    let night_end = jitter(300);
    let feed1 = (jitter(360), jitter(480));
    let lying = (jitter(600), jitter(780));
    let feed2 = (jitter(900), jitter(1020));
    let night_start = jitter(1080);

    let mut minutes = vec![Behavior::Others; MINUTES_PER_DAY as usize];
    minutes[..night_end as usize].fill(Behavior::Ruminating);
    minutes[feed1.0 as usize..feed1.1 as usize].fill(Behavior::Feeding);
    minutes[lying.0 as usize..lying.1 as usize].fill(Behavior::Lying);
    minutes[feed2.0 as usize..feed2.1 as usize].fill(Behavior::Feeding);
    minutes[night_start as usize..].fill(Behavior::Ruminating);

    let resting = |b: Behavior| matches!(b, Behavior::Ruminating | Behavior::Lying);

    // ordinary restlessness: a few short bouts on every day
    let bouts = rng.gen_range(1..=4);
    for _ in 0..bouts {
        let at = rng.gen_range(0..MINUTES_PER_DAY as usize);
        let len = rng.gen_range(2..=8);
        for m in minutes.iter_mut().skip(at).take(len) {
            if resting(*m) {
                *m = Behavior::Others;
            }
        }
    }

    if others_boost > 1.0 {
        let base = minutes.iter().filter(|&&b| b == Behavior::Others).count();
        let target = (base as f64 * others_boost).round() as usize;
        let mut current = base;
        while current < target {
            let candidates: Vec<usize> = (0..minutes.len()).filter(|&i| resting(minutes[i])).collect();
            if candidates.is_empty() {
                break;
            }
            let at = candidates[rng.gen_range(0..candidates.len())];
            let len = rng.gen_range(10..=30).min(target - current);
            for m in minutes.iter_mut().skip(at).take(len) {
                if resting(*m) && current < target {
                    *m = Behavior::Others;
                    current += 1;
                }
            }
        }
    }

    DaySchedule::from_minutes(&minutes)
}

struct ChannelState {
    center: f64,
    phase: f64,
    walk: f64,
}

/// Generates one 24 h day at 2 Hz starting at `day_start_ms`, labelled
/// exactly per `schedule`.
pub fn generate_day(
    seed: u64,
    schedule: &DaySchedule,
    profiles: &ProfileMap,
    day_start_ms: i64,
) -> Result<LabeledSeries, SynthError> {
    schedule.validate()?;
    for b in Behavior::ALL {
        profiles
            .get(&b)
            .ok_or_else(|| SynthError::InvalidSpec(format!("missing profile for {b}")))?
            .validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_minute = schedule.minutes();
    let mut samples = Vec::with_capacity(SAMPLES_PER_DAY);
    let mut labels = Vec::with_capacity(SAMPLES_PER_DAY);

    let mut i = 0;
    while i < SAMPLES_PER_DAY {
        // one contiguous run of a behaviour
        let behavior = per_minute[i / 120];
        let mut j = i + 1;
        while j < SAMPLES_PER_DAY && per_minute[j / 120] == behavior {
            j += 1;
        }
        let profile = &profiles[&behavior];
        emit_run(&mut rng, profile, day_start_ms, i..j, &mut samples);
        labels.extend(std::iter::repeat_n(behavior, j - i));
        i = j;
    }

    let series = SampleSeries::new(samples).expect("generated timestamps are increasing");
    Ok(LabeledSeries::new(series, labels))
}

fn emit_run(
    rng: &mut ChaCha8Rng,
    profile: &BehaviorProfile,
    day_start_ms: i64,
    range: std::ops::Range<usize>,
    out: &mut Vec<SensorSample>,
) {
    let noise = Normal::new(0.0, profile.noise_std.max(0.0)).expect("finite std");
    let draw_center = |rng: &mut ChaCha8Rng| {
        let (lo, hi) = profile.center_range;
        if lo < hi {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let x_center = draw_center(rng);
    let freq = {
        let (lo, hi) = profile.freq_hz;
        if lo < hi {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    };
    let mut channels: Vec<ChannelState> = (0..6)
        .map(|c| {
            let center = match profile.pattern {
                Pattern::RandomWalk { .. } => 0.0,
                _ if c == 0 => x_center,
                _ => x_center * rng.gen_range(0.85..=1.15),
            };
            ChannelState {
                center,
                phase: rng.gen_range(0.0..TAU),
                walk: draw_center(rng),
            }
        })
        .collect();

    let spike_p = profile.spike_rate_hz / 2.0;
    let mut spike_left = 0u32;
    let mut spike_sign = [0.0; 6];

    for k in range.clone() {
        let t = (k - range.start) as f64 * 0.5;
        if profile.pattern == Pattern::FlatWithSpikes && spike_left == 0 && rng.gen::<f64>() < spike_p {
            spike_left = rng.gen_range(1..=2);
            for s in spike_sign.iter_mut() {
                *s = if rng.gen::<bool>() { 1.0 } else { -1.0 } * rng.gen_range(0.5..=1.0);
            }
        }
        let mut values = [0.0; 6];
        for (c, (v, st)) in values.iter_mut().zip(channels.iter_mut()).enumerate() {
            let base = match profile.pattern {
                Pattern::Oscillating => st.center + profile.amplitude * (TAU * freq * t + st.phase).sin(),
                Pattern::FlatWithSpikes => {
                    st.center
                        + if spike_left > 0 {
                            spike_sign[c] * profile.spike_amplitude
                        } else {
                            0.0
                        }
                }
                Pattern::RandomWalk { step_std, bound } => {
                    let step: f64 = Normal::new(0.0, step_std).expect("finite std").sample(rng);
                    let mut next = st.walk + step;
                    if next > bound {
                        next = 2.0 * bound - next;
                    } else if next < -bound {
                        next = -2.0 * bound - next;
                    }
                    st.walk = next.clamp(-bound, bound);
                    st.walk
                }
            };
            let scale = if c >= 3 { profile.gyro_scale } else { 1.0 };
            *v = (base + noise.sample(rng)) * scale;
        }
        spike_left = spike_left.saturating_sub(1);
        out.push(SensorSample::new(day_start_ms + k as i64 * NOMINAL_SPACING_MS, values));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HerdSpec {
    pub n_cows: usize,
    pub n_days: usize,
    /// `(cow, day)` pairs that are estrus days.
    pub estrus_days: BTreeSet<(usize, usize)>,
    pub estrus_others_boost: f64,
    pub seed: u64,
}

impl HerdSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_cows == 0 || self.n_days == 0 {
            return Err(SynthError::InvalidSpec("herd must have cows and days".into()));
        }
        if let Some(&(c, d)) = self
            .estrus_days
            .iter()
            .find(|&&(c, d)| c >= self.n_cows || d >= self.n_days)
        {
            return Err(SynthError::InvalidSpec(format!(
                "estrus day (cow {c}, day {d}) outside {} cows x {} days",
                self.n_cows, self.n_days
            )));
        }
        if self.estrus_others_boost.is_nan() || self.estrus_others_boost < 1.0 {
            return Err(SynthError::InvalidSpec(format!(
                "estrus_others_boost {} must be >= 1",
                self.estrus_others_boost
            )));
        }
        Ok(())
    }

    pub fn is_estrus(&self, cow: usize, day: usize) -> bool {
        self.estrus_days.contains(&(cow, day))
    }

    /// Seed for one cow-day, independent of generation order.
    pub fn day_seed(&self, cow: usize, day: usize) -> u64 {
        splitmix64(splitmix64(self.seed ^ (cow as u64).wrapping_mul(0x9E37_79B9)) ^ day as u64)
    }

    pub fn schedule(&self, cow: usize, day: usize) -> DaySchedule {
        let mut rng = ChaCha8Rng::seed_from_u64(self.day_seed(cow, day));
        let boost = if self.is_estrus(cow, day) {
            self.estrus_others_boost
        } else {
            1.0
        };
        sample_schedule(&mut rng, boost)
    }

    /// Generates a single cow-day; identical to the matching entry of
    /// [`generate_herd`].
    pub fn generate_cow_day(&self, profiles: &ProfileMap, cow: usize, day: usize) -> Result<LabeledSeries, SynthError> {
        let schedule = self.schedule(cow, day);
        generate_day(
            splitmix64(self.day_seed(cow, day)),
            &schedule,
            profiles,
            SYNTH_EPOCH_MS + day as i64 * MS_PER_DAY,
        )
    }

    pub fn calendar(&self) -> Vec<CalendarEntry> {
        (0..self.n_cows)
            .flat_map(|cow| {
                (0..self.n_days).map(move |day| CalendarEntry {
                    cow_id: cow,
                    day_index: day,
                    is_estrus: self.is_estrus(cow, day),
                })
            })
            .collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarEntry {
    pub cow_id: usize,
    pub day_index: usize,
    pub is_estrus: bool,
}

#[derive(Debug, Clone)]
pub struct Herd {
    /// `days[cow][day]`
    pub days: Vec<Vec<LabeledSeries>>,
    pub calendar: Vec<CalendarEntry>,
}

/// Generates every cow-day of the herd. Days are generated in parallel; each
/// draws from its own `(seed, cow, day)` stream.
pub fn generate_herd(spec: &HerdSpec, profiles: &ProfileMap) -> Result<Herd, SynthError> {
    use rayon::prelude::*;
    spec.validate()?;
    let days = (0..spec.n_cows)
        .map(|cow| {
            (0..spec.n_days)
                .into_par_iter()
                .map(|day| spec.generate_cow_day(profiles, cow, day))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Herd {
        days,
        calendar: spec.calendar(),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, SynthError> {
    File::create(path).map(BufWriter::new).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decimal places written per channel value.
pub const CSV_DECIMALS: usize = 6;

/// Writes the sensor CSV and the label-segment CSV for one labelled series.
/// `Others` is never written as a segment.
pub fn write_sensor_csv(
    series: &LabeledSeries,
    data_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<(), SynthError> {
    let data_path = data_path.as_ref();
    let mut w = create(data_path)?;
    let err = io_err(data_path);
    writeln!(w, "timestamp,ax,ay,az,gx,gy,gz").map_err(&err)?;
    for s in series.series.samples() {
        write!(w, "{}", s.timestamp).map_err(&err)?;
        for v in s.channels() {
            write!(w, ",{:.*}", CSV_DECIMALS, v).map_err(&err)?;
        }
        writeln!(w).map_err(&err)?;
    }
    w.flush().map_err(&err)?;

    let label_path = label_path.as_ref();
    let mut w = create(label_path)?;
    let err = io_err(label_path);
    writeln!(w, "start_ms,end_ms,behavior").map_err(&err)?;
    for seg in series.to_segments() {
        writeln!(w, "{},{},{}", seg.start, seg.end, seg.behavior).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub fn write_calendar_csv(calendar: &[CalendarEntry], path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let err = io_err(path);
    writeln!(w, "{CALENDAR_HEADER}").map_err(&err)?;
    for e in calendar {
        writeln!(w, "{},{},{}", e.cow_id, e.day_index, e.is_estrus).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

pub const CALENDAR_HEADER: &str = "cow_id,day_index,is_estrus";

pub fn read_calendar_csv(path: impl AsRef<Path>) -> Result<Vec<CalendarEntry>, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CALENDAR_HEADER) {
        return Err(SynthError::InvalidSpec(format!(
            "{}: expected header {CALENDAR_HEADER}",
            path.display()
        )));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let bad = || SynthError::InvalidSpec(format!("{}: bad calendar row {l:?}", path.display()));
            let f: Vec<&str> = l.trim().split(',').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(CalendarEntry {
                cow_id: f[0].parse().map_err(|_| bad())?,
                day_index: f[1].parse().map_err(|_| bad())?,
                is_estrus: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
