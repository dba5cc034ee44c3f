//! Classifies two days with a forest trained on a third and rolls the
//! per-sample predictions into hourly and daily minutes.

use herdpipe::classify::{train_forest, ForestParams};
use herdpipe::features::{FeatureConfig, ParamMode};
use herdpipe::ingest::Behavior;
use herdpipe::pipeline::{classify_series, Preprocessing};
use herdpipe::summarize::{summarize_daily, summarize_hourly};
use herdpipe::synth::{default_profiles, generate_herd, HerdSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = HerdSpec {
        n_cows: 1,
        n_days: 3,
        estrus_days: Default::default(),
        estrus_others_boost: 2.0,
        seed: 5,
    };
    let herd = generate_herd(&spec, &default_profiles())?;
    let days = &herd.days[0];

    let config = FeatureConfig {
        stride: 10,
        ..FeatureConfig::default()
    };
    let prep = Preprocessing::fit(&days[0].series, ParamMode::Stats24, config)?;
    let params = ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    };
    let model = train_forest(&prep.features(&days[0])?, &params)?;

    let mut timestamps = Vec::new();
    let mut predicted = Vec::new();
    let mut correct = 0;
    for day in &days[1..] {
        let labels = classify_series(&model, &prep, &day.series)?;
        correct += labels.iter().zip(&day.labels).filter(|(a, b)| a == b).count();
        timestamps.extend(day.series.timestamps());
        predicted.extend(labels);
    }
    println!("per-sample accuracy {:.4}", correct as f64 / predicted.len() as f64);

    let hourly = summarize_hourly(&timestamps, &predicted, 0);
    println!("day        hour  feeding rumin. lying others");
    for h in hourly.iter().step_by(4) {
        let [f, r, l, o] = h.minutes;
        println!("{} {:>4}  {f:>7.1} {r:>6.1} {l:>5.1} {o:>6.1}", h.day, h.hour);
    }
    for d in summarize_daily(&hourly) {
        let total: f64 = d.minutes.iter().sum();
        println!(
            "{}: {:.1} min others, {:.1} min total",
            d.day,
            d.minutes[Behavior::Others.index()],
            total
        );
    }
    Ok(())
}
