//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use herdpipe::classify::{evaluate, train_forest, ForestParams, RandomForestModel};
use herdpipe::estrus::{
    activity_index, calibrate_threshold, detect_anomalies, flag_estrus, gradient_check, gradient_check_with,
    shahriar_delta, shahriar_detect, train_forecaster, LstmConfig, LstmModel,
};
use herdpipe::features::{apply_zscore, build_feature_dataset, fft, fit_zscore, FeatureConfig, ParamMode};
use herdpipe::ingest::{Behavior, LabeledSeries, SampleSeries, SensorSample};
use herdpipe::pipeline::{day_slice, hourly_from_series, score_verdicts, DayMetrics, Preprocessing};
use herdpipe::summarize::{summarize_hourly, HourlySummary};
use herdpipe::synth::{default_profiles, generate_herd, HerdSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Hourly tables produced anywhere in the suite, checked for conservation.
#[derive(Default)]
struct Ledger {
    tables: Vec<(String, usize, Vec<HourlySummary>)>,
}

struct Classifier {
    model: RandomForestModel,
    prep: Preprocessing,
}

fn concat(days: &[LabeledSeries]) -> LabeledSeries {
    let samples: Vec<SensorSample> = days.iter().flat_map(|d| d.series.samples().to_vec()).collect();
    let labels = days.iter().flat_map(|d| d.labels.clone()).collect();
    LabeledSeries::new(SampleSeries::new(samples).unwrap(), labels)
}

fn classifier_accuracy(ledger: &mut Ledger) -> (Outcome, Classifier) {
    let start = Instant::now();
    let spec = HerdSpec {
        n_cows: 1,
        n_days: 10,
        estrus_days: BTreeSet::new(),
        estrus_others_boost: 2.0,
        seed: 42,
    };
    let herd = generate_herd(&spec, &default_profiles()).unwrap();
    let all = concat(&herd.days[0]);
    let ts: Vec<i64> = all.series.timestamps().collect();
    ledger.tables.push((
        "10-day ground truth".into(),
        ts.len(),
        summarize_hourly(&ts, &all.labels, 0),
    ));

    let config = FeatureConfig {
        stride: 10,
        ..FeatureConfig::default()
    };
    let prep = Preprocessing::fit(&all.series, ParamMode::Stats24, config).unwrap();
    let dataset = prep.features(&all).unwrap();
    let (train, test) = dataset.split_chronological(0.7);
    let model = train_forest(&train, &ForestParams::default()).unwrap();
    let report = evaluate(&model, &test).unwrap();
    let elapsed = start.elapsed();
    let pass = report.accuracy >= 0.90 && elapsed < Duration::from_secs(300);
    (
        outcome(
            pass,
            format!(
                "accuracy {:.4} on {} held-out windows (>= 0.90), {:.1}s (< 300s)",
                report.accuracy,
                test.len(),
                elapsed.as_secs_f64()
            ),
        ),
        Classifier { model, prep },
    )
}

fn feature_counts() -> Outcome {
    let series = SampleSeries::new(
        (0..200)
            .map(|i| SensorSample::new(i * 500, [(i as f64).sin(), 1.0, 0.0, 2.0, (i as f64 * 0.3).cos(), 0.5]))
            .collect(),
    )
    .unwrap();
    let labeled = LabeledSeries::new(series, vec![Behavior::Lying; 200]);
    let config = FeatureConfig::default();
    let raw = build_feature_dataset(&labeled, ParamMode::Raw6, &config).unwrap();
    let stats = build_feature_dataset(&labeled, ParamMode::Stats24, &config).unwrap();
    let raw_ok = raw.n_features() == 6 && raw.rows.iter().all(|r| r.values.len() == 6);
    let stats_ok = stats.n_features() == 24 && stats.rows.iter().all(|r| r.values.len() == 24);
    outcome(
        raw_ok && stats_ok,
        format!("raw6 -> {}, stats24 -> {}", raw.n_features(), stats.n_features()),
    )
}

fn fft_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_bin, mut worst_parseval) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let len = rng.gen_range(1..=1024);
        let signal: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = fft(&signal);
        let slow = common::naive_dft(&signal, fast.n);
        for (a, b) in fast.bins.iter().zip(&slow) {
            worst_bin = worst_bin.max((a - b).norm());
        }
        let time = fast.n as f64 * signal.iter().map(|v| v * v).sum::<f64>();
        if time > 0.0 {
            worst_parseval = worst_parseval.max((fast.energy() - time).abs() / time);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_bin < 1e-9 && worst_parseval < 1e-9 && elapsed < Duration::from_secs(60),
        format!(
            "max bin error {worst_bin:.2e}, max Parseval error {worst_parseval:.2e} over 1000 signals, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn zscore_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_mean, mut worst_std, mut checked) = (0.0f64, 0.0f64, 0);
    for _ in 0..200 {
        let n = rng.gen_range(2..2000);
        let constant = rng.gen_range(0..6);
        let offsets: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1e3..1e3));
        let scales: [f64; 6] = std::array::from_fn(|_| 10f64.powf(rng.gen_range(-3.0..3.0)));
        let series = SampleSeries::new(
            (0..n)
                .map(|i| {
                    let v = std::array::from_fn(|c| {
                        if c == constant {
                            offsets[c]
                        } else {
                            offsets[c] + scales[c] * rng.gen_range(-1.0..1.0)
                        }
                    });
                    SensorSample::new(i as i64 * 500, v)
                })
                .collect(),
        )
        .unwrap();
        let stats = fit_zscore(&series).unwrap();
        let z = apply_zscore(&series, &stats);
        for c in (0..6).filter(|&c| !stats.is_constant(c)) {
            let col: Vec<f64> = z.samples().iter().map(|s| s.channels()[c]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            worst_mean = worst_mean.max(mean.abs());
            worst_std = worst_std.max((std - 1.0).abs());
            checked += 1;
        }
    }
    outcome(
        worst_mean < 1e-9 && worst_std < 1e-9,
        format!("max |mean| {worst_mean:.2e}, max |std-1| {worst_std:.2e} over {checked} channels"),
    )
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut weakest_mutant) = (0.0f64, f64::INFINITY);
    for _ in 0..20 {
        let input = rng.gen_range(1..=5);
        let hidden = rng.gen_range(1..=6);
        let steps = rng.gen_range(1..=8);
        let model = LstmModel::random(input, hidden, &mut rng);
        let seq: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let target = rng.gen_range(-1.0..1.0);
        worst = worst.max(gradient_check(&model, &seq, target, 1e-3).unwrap());
        let mutant = gradient_check_with(&model, &seq, target, 1e-3, |g| {
            for t in g.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= 2.0);
            }
        })
        .unwrap();
        weakest_mutant = weakest_mutant.min(mutant);
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && weakest_mutant > 1e-2 && elapsed < Duration::from_secs(60),
        format!(
            "max relative error {worst:.2e} (< 1e-4); doubled gradient detected at >= {weakest_mutant:.2e} (> 1e-2), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn delta_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out_of_range = 0;
    let mut evaluated = 0;
    for _ in 0..100_000 {
        let history: Vec<f64> = (0..73)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.0..60.0)
                }
            })
            .collect();
        if let Ok(d) = shahriar_delta(&history, 72) {
            evaluated += 1;
            if !(-1.0..=3.0).contains(&d) {
                out_of_range += 1;
            }
        }
    }
    let steady = (0..1000).all(|i| {
        let g = i as f64 * 0.37 + 0.01;
        shahriar_delta(&vec![g; 73], 72).unwrap() == 0.0
    });
    let mut hand = vec![0.0; 73];
    hand[0] = 1.0;
    hand[24] = 1.0;
    hand[48] = 1.0;
    hand[72] = 3.0;
    let hand_case = shahriar_delta(&hand, 72).unwrap();
    outcome(
        out_of_range == 0 && steady && hand_case == 1.0,
        format!("{evaluated} random histories all in [-1, 3]; steady -> 0: {steady}; hand case -> {hand_case}"),
    )
}

const ESTRUS_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const HEAT_DAYS: [usize; 4] = [40, 45, 51, 57];
const TRAIN_DAYS: usize = 30;
const VAL_DAYS: usize = 7;
const TOTAL_DAYS: usize = 61;

struct SeedResult {
    seed: u64,
    lstm: DayMetrics,
    shahriar: DayMetrics,
}

fn estrus_run(classifier: &Classifier, seed: u64, ledger: &mut Ledger) -> SeedResult {
    let profiles = default_profiles();
    let spec = HerdSpec {
        n_cows: 1,
        n_days: TOTAL_DAYS,
        estrus_days: HEAT_DAYS.iter().map(|&d| (0, d)).collect(),
        estrus_others_boost: 2.0,
        seed,
    };
    let mut hourly = Vec::new();
    let mut samples = 0;
    for day in 0..TOTAL_DAYS {
        let series = spec.generate_cow_day(&profiles, 0, day).unwrap().series;
        samples += series.len();
        hourly.extend(hourly_from_series(&classifier.model, &classifier.prep, [&series], 0).unwrap());
    }
    ledger
        .tables
        .push((format!("seed {seed} predicted"), samples, hourly.clone()));

    let train = day_slice(&hourly, 0, TRAIN_DAYS);
    let val = day_slice(&hourly, TRAIN_DAYS, TRAIN_DAYS + VAL_DAYS);
    let history = day_slice(&hourly, 0, TRAIN_DAYS + VAL_DAYS);
    let test = day_slice(&hourly, TRAIN_DAYS + VAL_DAYS, TOTAL_DAYS);
    let lstm = LstmConfig {
        hidden_size: 16,
        epochs: 300,
        seed,
        ..LstmConfig::default()
    };
    let (forecaster, _) = train_forecaster(&train, 72, 1800.0, &lstm).unwrap();
    let threshold = calibrate_threshold(&forecaster, &train, &val, 0.99).unwrap();
    let anomalies = detect_anomalies(&forecaster, &history, &test, threshold).unwrap();
    let verdicts = flag_estrus(&anomalies, 3);
    let calendar = spec.calendar();

    let index = activity_index(&hourly, 1800.0).from_day(test[0].day);
    let baseline = shahriar_detect(&index, 1.0, 3);
    SeedResult {
        seed,
        lstm: score_verdicts(&verdicts, &calendar, 0).unwrap(),
        shahriar: score_verdicts(&baseline, &calendar, 0).unwrap(),
    }
}

fn estrus_detection(results: &[SeedResult], elapsed: Duration) -> Outcome {
    let every_seed = results.iter().all(|r| {
        r.lstm.heat_days == 4 && r.lstm.normal_days == 20 && r.lstm.true_positives >= 3 && r.lstm.false_positives <= 2
    });
    let matching: Vec<u64> = results
        .iter()
        .filter(|r| r.lstm.true_positives == 4 && r.lstm.false_positives <= 1)
        .map(|r| r.seed)
        .collect();
    let per_seed: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "seed {}: {}/4 heat, {} FP",
                r.seed, r.lstm.true_positives, r.lstm.false_positives
            )
        })
        .collect();
    outcome(
        every_seed && !matching.is_empty() && elapsed < Duration::from_secs(900),
        format!(
            "{}; 4/4 with <= 1 FP on seeds {:?}; {:.0}s",
            per_seed.join("; "),
            matching,
            elapsed.as_secs_f64()
        ),
    )
}

fn shahriar_comparison(results: &[SeedResult]) -> Outcome {
    let per_seed: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "seed {}: index {:.3} ({}/4, {} FP) vs lstm {:.3}",
                r.seed, r.shahriar.accuracy, r.shahriar.true_positives, r.shahriar.false_positives, r.lstm.accuracy
            )
        })
        .collect();
    let reported = results.iter().all(|r| r.shahriar.accuracy.is_finite());
    outcome(reported, per_seed.join("; "))
}

fn conservation(ledger: &Ledger) -> Outcome {
    let mut failures = Vec::new();
    let mut worst_float = 0.0f64;
    for (name, samples, table) in &ledger.tables {
        let counted: u64 = table
            .iter()
            .flat_map(|h| h.minutes)
            .map(|m| {
                let k = m * 120.0;
                assert_eq!(k, k.round(), "{name}: minutes are not whole half-seconds");
                k as u64
            })
            .sum();
        let coverage: f64 = table.iter().map(|h| h.coverage_s).sum();
        let minutes: f64 = table.iter().map(|h| h.total_minutes()).sum();
        worst_float = worst_float.max((minutes - *samples as f64 * 0.5 / 60.0).abs());
        if counted != *samples as u64 || coverage != *samples as f64 * 0.5 {
            failures.push(name.clone());
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} tables; sample counts exact; largest float drift in summed minutes {worst_float:.1e}{}",
            ledger.tables.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; mismatched: {failures:?}")
            }
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_herdpipe"));
    cmd.current_dir(dir).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("HERDPIPE_")) {
        cmd.env_remove(k);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline_once(dir: &Path) -> Result<(), String> {
    let steps: &[&[&str]] = &[
        &[
            "synth",
            "--days",
            "12",
            "--estrus-days",
            "10",
            "--seed",
            "9",
            "--out",
            "data",
        ],
        &[
            "features",
            "--data",
            "data",
            "--days",
            "0..3",
            "--stride",
            "10",
            "--out",
            "work/features.csv",
        ],
        &[
            "train-classifier",
            "--features",
            "work/features.csv",
            "--trees",
            "20",
            "--model-dir",
            "models",
        ],
        &[
            "classify",
            "--model-dir",
            "models",
            "--data",
            "data",
            "--out",
            "work/pred",
        ],
        &["summarize", "--predictions", "work/pred", "--out", "work/summary"],
        &[
            "train-estrus",
            "--hourly",
            "work/summary/cow0_hourly.csv",
            "--model-dir",
            "models",
            "--train-days",
            "6",
            "--val-days",
            "2",
            "--hidden",
            "8",
            "--epochs",
            "30",
        ],
        &[
            "detect",
            "--hourly",
            "work/summary/cow0_hourly.csv",
            "--model-dir",
            "models",
            "--skip-days",
            "8",
            "--out",
            "work/detect",
        ],
        &[
            "eval",
            "--verdicts",
            "work/detect/verdicts.csv",
            "--calendar",
            "data/calendar.csv",
            "--hourly",
            "work/summary/cow0_hourly.csv",
            "--anomalies",
            "work/detect/anomalies.csv",
            "--out",
            "work/eval",
        ],
    ];
    steps.iter().try_for_each(|args| run_cli(dir, args))
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = pipeline_once(a.path()).and_then(|_| pipeline_once(b.path())) {
        return outcome(false, e);
    }
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<&PathBuf> = fa
        .iter()
        .filter(|p| std::fs::read(a.path().join(p)).ok() != std::fs::read(b.path().join(p)).ok())
        .collect();
    outcome(
        fa == fb && differing.is_empty() && fa.iter().any(|p| p.ends_with("metrics.csv")),
        format!("{} files compared, {} differ", fa.len(), differing.len()),
    )
}

fn cart_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..50 {
        let n = rng.gen_range(2..=200);
        let d = rng.gen_range(1..=4);
        let max_depth = rng.gen_range(1..=10);
        let min_leaf = rng.gen_range(1..=4);
        let rows = common::random_rows(&mut rng, n, d);
        let params = ForestParams {
            n_trees: 1,
            max_depth,
            min_samples_leaf: min_leaf,
            features_per_split: Some(d),
            bootstrap: false,
            ..ForestParams::default()
        };
        let model = train_forest(&common::to_dataset(&rows), &params).unwrap();
        if !common::same_tree(&model.trees[0], &common::cart_oracle(&rows, 0, max_depth, min_leaf)) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches}/50 trees differ from the exhaustive oracle"),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut ledger = Ledger::default();
    let report = |name: &'static str, o: Outcome, results: &mut Vec<(&str, Outcome)>| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    let (o, classifier) = classifier_accuracy(&mut ledger);
    report("classifier_accuracy", o, &mut results);
    report("feature_counts", feature_counts(), &mut results);
    report("fft_oracle", fft_oracle(), &mut results);
    report("zscore_moments", zscore_moments(), &mut results);
    report("lstm_gradient_check", gradient_checks(), &mut results);
    report("delta_properties", delta_properties(), &mut results);

    let start = Instant::now();
    let runs: Vec<SeedResult> = ESTRUS_SEEDS
        .iter()
        .map(|&s| estrus_run(&classifier, s, &mut ledger))
        .collect();
    report(
        "estrus_detection",
        estrus_detection(&runs, start.elapsed()),
        &mut results,
    );
    report("activity_index_comparison", shahriar_comparison(&runs), &mut results);
    report("conservation", conservation(&ledger), &mut results);
    report("determinism", determinism(), &mut results);
    report("cart_oracle", cart_oracle(), &mut results);

    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
