//! Trains the behaviour forest on four synthetic days, reports held-out
//! accuracy against the majority-class baseline, and round-trips the model.

use herdpipe::classify::{
    evaluate, feature_importance, majority_baseline, model_from_json, model_to_json, train_forest, ForestParams,
};
use herdpipe::features::{FeatureConfig, ParamMode};
use herdpipe::ingest::{LabeledSeries, SampleSeries};
use herdpipe::pipeline::Preprocessing;
use herdpipe::synth::{default_profiles, generate_herd, HerdSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = HerdSpec {
        n_cows: 1,
        n_days: 4,
        estrus_days: Default::default(),
        estrus_others_boost: 2.0,
        seed: 42,
    };
    let herd = generate_herd(&spec, &default_profiles())?;
    let samples = herd.days[0].iter().flat_map(|d| d.series.samples().to_vec()).collect();
    let labels = herd.days[0].iter().flat_map(|d| d.labels.clone()).collect();
    let all = LabeledSeries::new(SampleSeries::new(samples)?, labels);

    let config = FeatureConfig {
        stride: 20,
        ..FeatureConfig::default()
    };
    let prep = Preprocessing::fit(&all.series, ParamMode::Stats24, config)?;
    let (train, test) = prep.features(&all)?.split_chronological(0.7);

    let params = ForestParams {
        n_trees: 40,
        ..ForestParams::default()
    };
    let model = train_forest(&train, &params)?;
    let report = evaluate(&model, &test)?;
    println!("{}", report.table());
    println!(
        "majority baseline accuracy {:.4}",
        majority_baseline(&train, &test).accuracy
    );

    println!("most informative features:");
    for (name, weight) in feature_importance(&model).iter().take(5) {
        println!("  {name:<12} {weight:.3}");
    }

    let restored = model_from_json(&model_to_json(&model))?;
    assert_eq!(restored, model);
    println!("model JSON round trip ok ({} trees)", restored.trees.len());
    Ok(())
}
