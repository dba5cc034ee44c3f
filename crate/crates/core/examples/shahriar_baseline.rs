//! The activity-index detector on ground-truth hourly minutes: prints the
//! index for the afternoon of a heat day and the daily verdicts.

use std::collections::BTreeSet;

use herdpipe::estrus::{activity_index, shahriar_detect};
use herdpipe::summarize::summarize_hourly;
use herdpipe::synth::{default_profiles, HerdSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = HerdSpec {
        n_cows: 1,
        n_days: 8,
        estrus_days: BTreeSet::from([(0, 6)]),
        estrus_others_boost: 2.5,
        seed: 21,
    };
    let profiles = default_profiles();
    let mut hourly = Vec::new();
    for day in 0..spec.n_days {
        let d = spec.generate_cow_day(&profiles, 0, day)?;
        let ts: Vec<i64> = d.series.timestamps().collect();
        hourly.extend(summarize_hourly(&ts, &d.labels, 0));
    }

    let index = activity_index(&hourly, 1800.0);
    let heat_day = hourly[6 * 24].day;
    for p in index
        .points
        .iter()
        .filter(|p| p.day == heat_day && (12..20).contains(&p.hour))
    {
        let delta = p.delta.map_or("-".to_string(), |d| format!("{d:+.2}"));
        println!("{} {:02}:00  gamma {:>5.1}  delta {delta}", p.day, p.hour, p.gamma);
    }
    for v in shahriar_detect(&index.from_day(hourly[3 * 24].day), 1.0, 3) {
        println!(
            "{}: {} hours above 1.0{}",
            v.day,
            v.anomaly_hours,
            if v.is_heat { "  HEAT" } else { "" }
        );
    }
    Ok(())
}
