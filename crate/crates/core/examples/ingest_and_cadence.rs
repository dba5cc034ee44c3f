//! Reads a sensor file with an implausible reading and a dropout, attaches
//! label segments and reports the cadence gaps.

use std::io::Write;

use herdpipe::ingest::{
    attach_labels, read_label_csv, read_sensor_csv_filtered, validate_cadence, Behavior, NoiseFilter,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("collar.csv");
    let labels = dir.path().join("collar_labels.csv");

    let mut f = std::fs::File::create(&data)?;
    writeln!(f, "timestamp,ax,ay,az,gx,gy,gz")?;
    let start: i64 = 1_704_067_200_000;
    for i in 0..40i64 {
        // ten missing samples in the middle
        if (15..25).contains(&i) {
            continue;
        }
        let ax = if i == 30 { 99.0 } else { (i as f64 * 0.4).sin() };
        writeln!(f, "{},{ax},0.1,-0.9,3.0,1.0,0.5", start + i * 500)?;
    }
    // RFC 3339 timestamps are accepted too
    writeln!(f, "2024-01-01T00:00:20.000Z,0.2,0.1,-0.9,3.0,1.0,0.5")?;
    drop(f);

    std::fs::write(
        &labels,
        format!(
            "start_ms,end_ms,behavior\n{},{},feeding\n{},{},lying\n",
            start,
            start + 5_000,
            start + 12_500,
            start + 20_500
        ),
    )?;

    let read = read_sensor_csv_filtered(&data, &NoiseFilter::default())?;
    println!(
        "{} samples kept, {} dropped by the noise filter",
        read.series.len(),
        read.dropped
    );
    for gap in validate_cadence(&read.series) {
        println!("gap of {} ms after {}", gap.duration_ms(), gap.start);
    }

    let labeled = attach_labels(read.series, &read_label_csv(&labels)?);
    for b in Behavior::ALL {
        println!(
            "{b:>10}: {} samples",
            labeled.labels.iter().filter(|&&l| l == b).count()
        );
    }
    Ok(())
}
