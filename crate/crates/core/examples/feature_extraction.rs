//! Normalises one synthetic day and extracts windowed features in each mode,
//! then looks at the spectrum of a rumination window.

use herdpipe::features::{
    apply_zscore_labeled, build_feature_dataset, fft_features, fit_zscore, FeatureConfig, ParamMode,
};
use herdpipe::ingest::Behavior;
use herdpipe::synth::{default_profiles, HerdSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = HerdSpec {
        n_cows: 1,
        n_days: 1,
        estrus_days: Default::default(),
        estrus_others_boost: 2.0,
        seed: 3,
    };
    let day = spec.generate_cow_day(&default_profiles(), 0, 0)?;
    let stats = fit_zscore(&day.series)?;
    println!("channel means {:.3?}", stats.mean);
    println!("channel stds  {:.3?}", stats.std);
    let normalised = apply_zscore_labeled(&day, &stats);

    let config = FeatureConfig {
        stride: 20,
        ..FeatureConfig::default()
    };
    for mode in [ParamMode::Raw6, ParamMode::Stats24, ParamMode::Stats24PlusFft] {
        let ds = build_feature_dataset(&normalised, mode, &config)?;
        println!("{mode:>10}: {} windows x {} features", ds.len(), ds.n_features());
    }

    let start = day
        .labels
        .iter()
        .position(|&l| l == Behavior::Ruminating)
        .expect("a day contains rumination");
    let ax: Vec<f64> = day.series.samples()[start..start + 64].iter().map(|s| s.ax).collect();
    let spectrum = fft_features(&ax, 2.0, 4)?;
    println!(
        "rumination block: dominant {:.3} Hz, band energies {:.3?}",
        spectrum.dominant_freq_hz, spectrum.band_energies
    );
    Ok(())
}
