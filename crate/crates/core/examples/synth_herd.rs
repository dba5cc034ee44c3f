//! Generates a small labelled herd, writes it as CSV and prints how each
//! cow-day splits between behaviours.
//!
//!     cargo run --release --example synth_herd -- [out_dir]

use std::collections::BTreeSet;

use herdpipe::ingest::Behavior;
use herdpipe::synth::{default_profiles, generate_herd, write_calendar_csv, write_sensor_csv, HerdSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "herd_example".into());
    std::fs::create_dir_all(&out)?;

    let spec = HerdSpec {
        n_cows: 2,
        n_days: 3,
        estrus_days: BTreeSet::from([(1, 2)]),
        estrus_others_boost: 2.0,
        seed: 7,
    };
    let herd = generate_herd(&spec, &default_profiles())?;

    println!("cow day estrus  feeding ruminating lying others (minutes)");
    for (cow, days) in herd.days.iter().enumerate() {
        for (day, series) in days.iter().enumerate() {
            let minutes = Behavior::ALL.map(|b| series.labels.iter().filter(|&&l| l == b).count() as f64 / 120.0);
            println!(
                "{cow:>3} {day:>3} {:>6}  {:>7.0} {:>10.0} {:>5.0} {:>6.0}",
                spec.is_estrus(cow, day),
                minutes[0],
                minutes[1],
                minutes[2],
                minutes[3]
            );
            let stem = format!("{out}/cow{cow}_day{day:03}");
            write_sensor_csv(series, format!("{stem}.csv"), format!("{stem}_labels.csv"))?;
        }
    }
    write_calendar_csv(&herd.calendar, format!("{out}/calendar.csv"))?;
    println!("wrote {out}/");
    Ok(())
}
