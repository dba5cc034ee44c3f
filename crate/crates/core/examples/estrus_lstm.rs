//! Trains the LSTM forecaster on ground-truth hourly minutes of a synthetic
//! cow, calibrates the anomaly threshold and flags heat days.
//!
//!     cargo run --release --example estrus_lstm

use std::collections::BTreeSet;

use herdpipe::estrus::{
    calibrate_threshold, detect_anomalies, flag_estrus, gradient_check, train_forecaster, LstmConfig, LstmModel,
};
use herdpipe::pipeline::day_slice;
use herdpipe::summarize::summarize_hourly;
use herdpipe::synth::{default_profiles, HerdSpec};
use rand::SeedableRng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let probe = LstmModel::random(5, 4, &mut rng);
    let seq = vec![vec![0.1, -0.2, 0.3, 0.0, 0.5]; 6];
    println!(
        "gradient check: max relative error {:.2e}",
        gradient_check(&probe, &seq, 0.4, 1e-3)?
    );

    let spec = HerdSpec {
        n_cows: 1,
        n_days: 24,
        estrus_days: BTreeSet::from([(0, 19), (0, 22)]),
        estrus_others_boost: 2.0,
        seed: 11,
    };
    let profiles = default_profiles();
    let mut hourly = Vec::new();
    for day in 0..spec.n_days {
        // ground-truth labels stand in for classifier output here
        let d = spec.generate_cow_day(&profiles, 0, day)?;
        let ts: Vec<i64> = d.series.timestamps().collect();
        hourly.extend(summarize_hourly(&ts, &d.labels, 0));
    }

    let train = day_slice(&hourly, 0, 14);
    let val = day_slice(&hourly, 14, 17);
    let history = day_slice(&hourly, 0, 17);
    let test = day_slice(&hourly, 17, 24);

    let config = LstmConfig {
        hidden_size: 16,
        epochs: 300,
        ..LstmConfig::default()
    };
    let (forecaster, loss) = train_forecaster(&train, 72, 1800.0, &config)?;
    let threshold = calibrate_threshold(&forecaster, &train, &val, 0.99)?;
    println!("training loss {loss:.5}, threshold {threshold:.5} (squared error on the scaled target)");

    let anomalies = detect_anomalies(&forecaster, &history, &test, threshold)?;
    for v in flag_estrus(&anomalies, 3) {
        println!(
            "{}  {:>2} anomalous hours  {}",
            v.day,
            v.anomaly_hours,
            if v.is_heat { "HEAT" } else { "" }
        );
    }
    println!("(true heat days: 2024-01-20 and 2024-01-23)");
    Ok(())
}
