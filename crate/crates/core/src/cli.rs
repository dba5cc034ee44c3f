//! Command-line front end. Each subcommand reads and writes plain files so
//! stages can be run, inspected and re-run independently.
//!
//! Flags override `HERDPIPE_*` environment variables, which override the
//! config file, which overrides built-in defaults. Exit codes: 0 success,
//! 1 runtime failure, 2 configuration error or missing input, 3 feature
//! schema mismatch.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classify::{evaluate, load_model, majority_baseline, save_model, train_forest, ClassWeight};
use crate::config::PipelineConfig;
use crate::estrus::{
    activity_index, calibrate_threshold, load_detector, read_anomaly_csv, read_verdict_csv, save_detector,
    shahriar_detect, train_forecaster, write_activity_csv, write_anomaly_csv, write_verdict_csv, DayVerdict,
    EstrusDetector,
};
use crate::features::{FeatureDataset, ParamMode};
use crate::ingest::{attach_labels, read_label_csv, read_sensor_csv, Behavior, LabeledSeries, SampleSeries};
use crate::pipeline::{classify_series, day_slice, io_err, score_verdicts, PipelineError, Preprocessing};
use crate::summarize::{read_hourly_csv, summarize_daily, summarize_hourly, write_daily_csv, write_hourly_csv};
use crate::synth::{default_profiles, read_calendar_csv, write_calendar_csv, write_sensor_csv, HerdSpec};

#[derive(Debug, Parser)]
#[command(
    name = "herdpipe",
    version,
    about = "Cattle behaviour classification and estrus detection"
)]
pub struct Cli {
    /// Config file (TOML). Also read from HERDPIPE_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic herd and its estrus calendar.
    Synth(SynthArgs),
    /// Normalise sensor files and extract windowed features.
    Features(FeaturesArgs),
    /// Train the behaviour forest on a feature CSV.
    TrainClassifier(TrainClassifierArgs),
    /// Predict behaviours for a feature CSV or for raw sensor files.
    Classify(ClassifyArgs),
    /// Roll per-sample predictions up into hourly and daily minutes.
    Summarize(SummarizeArgs),
    /// Train and calibrate the LSTM estrus detector on an hourly table.
    TrainEstrus(TrainEstrusArgs),
    /// Flag heat days in an hourly table.
    Detect(DetectArgs),
    /// Score heat verdicts against a ground-truth calendar.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory [default: paths.data_dir]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub cows: usize,
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    /// Estrus days as `day` (every cow) or `cow:day`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub estrus_days: Vec<String>,
    /// Multiplier on "others" minutes during estrus days.
    #[arg(long, default_value_t = 2.0)]
    pub boost: f64,
    /// Random seed [default: seed]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataSelection {
    /// Directory of `cow<C>_day<DDD>.csv` sensor files [default: paths.data_dir]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Only this cow.
    #[arg(long)]
    pub cow: Option<usize>,
    /// Day range `A..B` (half-open); all days when absent.
    #[arg(long)]
    pub days: Option<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub select: DataSelection,
    /// Feature set [default: features.mode = stats24]
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<ParamMode>,
    /// Window length in samples [default: features.window_size = 10]
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride in samples [default: features.stride = 1]
    #[arg(long)]
    pub stride: Option<usize>,
    /// Reuse an existing preprocessing file instead of fitting one.
    #[arg(long)]
    pub prep: Option<PathBuf>,
    /// Feature CSV; preprocessing goes next to it as `<stem>.prep.json`
    /// [default: <paths.out_dir>/features.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainClassifierArgs {
    /// Feature CSV [default: <paths.out_dir>/features.csv]
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Preprocessing file [default: <features stem>.prep.json]
    #[arg(long)]
    pub prep: Option<PathBuf>,
    /// Model directory [default: paths.model_dir]
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Trailing fraction held out for evaluation (chronological).
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
    /// Trees [default: forest.n_trees = 100]
    #[arg(long)]
    pub trees: Option<usize>,
    /// Maximum depth [default: forest.max_depth = 16]
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Minimum samples per leaf [default: forest.min_samples_leaf = 5]
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Weight classes inversely to frequency [default: forest.class_weight = none]
    #[arg(long)]
    pub balanced: bool,
    /// Random seed [default: forest.seed = 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Model directory [default: paths.model_dir]
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Classify a feature CSV (window predictions) instead of sensor files.
    #[arg(long, conflicts_with_all = ["data", "cow", "days"])]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub select: DataSelection,
    /// Output: a CSV for `--features`, otherwise a directory of
    /// `<stem>_pred.csv` files [default: <paths.out_dir>/predictions]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Directory of `<stem>_pred.csv` files [default: <paths.out_dir>/predictions]
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Output directory for `cow<C>_hourly.csv` and `cow<C>_daily.csv`
    /// [default: <paths.out_dir>/summaries]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Local time offset from UTC in minutes [default: tz_offset_min = 0]
    #[arg(long, allow_hyphen_values = true)]
    pub tz_offset_min: Option<i64>,
}

#[derive(Debug, Args)]
pub struct TrainEstrusArgs {
    /// Hourly summary CSV
    #[arg(long)]
    pub hourly: PathBuf,
    /// Model directory [default: paths.model_dir]
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Leading days used for training [default: estrus.train_days = 30]
    #[arg(long)]
    pub train_days: Option<usize>,
    /// Following days used for threshold calibration [default: estrus.val_days = 7]
    #[arg(long)]
    pub val_days: Option<usize>,
    /// Hidden units [default: lstm.hidden_size = 32]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Maximum epochs [default: lstm.epochs = 2000]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [default: lstm.learning_rate = 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Threshold quantile of validation errors [default: estrus.quantile = 0.99]
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Anomalous hours that make a heat day [default: estrus.min_anomaly_hours = 3]
    #[arg(long)]
    pub min_anomaly_hours: Option<usize>,
    /// Random seed [default: lstm.seed = 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Lstm,
    Shahriar,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Hourly summary CSV
    #[arg(long)]
    pub hourly: PathBuf,
    /// Model directory holding `estrus.json` [default: paths.model_dir]
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Leading days used only as history
    /// [default: estrus.train_days + estrus.val_days = 37]
    #[arg(long)]
    pub skip_days: Option<usize>,
    /// Detector
    #[arg(long, value_enum, default_value_t = Baseline::Lstm)]
    pub baseline: Baseline,
    /// Activity-index threshold for `shahriar` [default: estrus.delta_threshold = 1.0]
    #[arg(long)]
    pub delta_threshold: Option<f64>,
    /// Anomalous hours that make a heat day [default: from the model, or
    /// estrus.min_anomaly_hours = 3 for `shahriar`]
    #[arg(long)]
    pub min_anomaly_hours: Option<usize>,
    /// Output directory [default: <paths.out_dir>/detect]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Daily verdict CSV from `detect`
    #[arg(long)]
    pub verdicts: PathBuf,
    /// Ground-truth calendar CSV from `synth`
    #[arg(long)]
    pub calendar: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub cow: usize,
    /// Hourly summary CSV, for the others-minutes and activity-index series
    #[arg(long)]
    pub hourly: Option<PathBuf>,
    /// Anomaly CSV from `detect`, for the squared-error series
    #[arg(long)]
    pub anomalies: Option<PathBuf>,
    /// Labelled feature CSV to report the classifier confusion matrix (needs
    /// the model directory)
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Model directory [default: paths.model_dir]
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Output directory [default: <paths.out_dir>/eval]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<ParamMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

pub const FOREST_FILE: &str = "forest.json";
pub const PREP_FILE: &str = "preprocessing.json";
pub const ESTRUS_FILE: &str = "estrus.json";

/// Parses arguments from the process, runs, and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), PipelineError> {
    let config = PipelineConfig::load(cli.config.as_deref())?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Synth(a) => cmd_synth(&config, a, &mut out),
        Command::Features(a) => cmd_features(&config, a, &mut out),
        Command::TrainClassifier(a) => cmd_train_classifier(&config, a, &mut out),
        Command::Classify(a) => cmd_classify(&config, a, &mut out),
        Command::Summarize(a) => cmd_summarize(&config, a, &mut out),
        Command::TrainEstrus(a) => cmd_train_estrus(&config, a, &mut out),
        Command::Detect(a) => cmd_detect(&config, a, &mut out),
        Command::Eval(a) => cmd_eval(&config, a, &mut out),
    }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn create_parent(file: &Path) -> Result<(), PipelineError> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn require(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

fn stdout_err(e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: "<stdout>".into(),
        source: e,
    }
}

pub fn cmd_synth(config: &PipelineConfig, a: SynthArgs, out: &mut impl Write) -> Result<(), PipelineError> {
    let dir = a.out.unwrap_or_else(|| config.paths.data_dir.clone());
    let mut estrus_days = std::collections::BTreeSet::new();
    for item in a.estrus_days.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
        let bad = || PipelineError::Config(format!("bad estrus day {item:?}"));
        match item.split_once(':') {
            Some((c, d)) => {
                estrus_days.insert((c.parse().map_err(|_| bad())?, d.parse().map_err(|_| bad())?));
            }
            None => {
                let d: usize = item.parse().map_err(|_| bad())?;
                estrus_days.extend((0..a.cows).map(|c| (c, d)));
            }
        }
    }
    let spec = HerdSpec {
        n_cows: a.cows,
        n_days: a.days,
        estrus_days,
        estrus_others_boost: a.boost,
        seed: a.seed.unwrap_or(config.seed),
    };
    spec.validate()?;
    create_dir(&dir)?;
    let profiles = default_profiles();
    for cow in 0..spec.n_cows {
        for day in 0..spec.n_days {
            let series = spec.generate_cow_day(&profiles, cow, day)?;
            let stem = day_stem(cow, day);
            write_sensor_csv(
                &series,
                dir.join(format!("{stem}.csv")),
                dir.join(format!("{stem}_labels.csv")),
            )?;
        }
    }
    write_calendar_csv(&spec.calendar(), dir.join("calendar.csv"))?;
    writeln!(
        out,
        "wrote {} cow-days ({} estrus) to {}",
        spec.n_cows * spec.n_days,
        spec.estrus_days.len(),
        dir.display()
    )
    .map_err(stdout_err)
}

pub fn day_stem(cow: usize, day: usize) -> String {
    format!("cow{cow}_day{day:03}")
}

/// `(cow, day)` of a `cow<C>_day<D>` stem.
pub fn parse_stem(stem: &str) -> Option<(usize, usize)> {
    let rest = stem.strip_prefix("cow")?;
    let (c, d) = rest.split_once("_day")?;
    Some((c.parse().ok()?, d.parse().ok()?))
}

fn parse_range(s: &str) -> Result<(usize, usize), PipelineError> {
    let bad = || PipelineError::Config(format!("bad day range {s:?}, expected A..B"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let (a, b) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a > b {
        return Err(bad());
    }
    Ok((a, b))
}

/// `((cow, day), path)` of one sensor file.
type DayFile = ((usize, usize), PathBuf);

/// Sensor files of the selection, ordered by cow then day.
fn select_files(config: &PipelineConfig, sel: &DataSelection) -> Result<Vec<DayFile>, PipelineError> {
    let dir = sel.data.clone().unwrap_or_else(|| config.paths.data_dir.clone());
    require(&dir)?;
    let range = sel.days.as_deref().map(parse_range).transpose()?;
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = entry.map_err(io_err(&dir))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(key) = path.file_stem().and_then(|s| s.to_str()).and_then(parse_stem) else {
            continue;
        };
        if sel.cow.is_some_and(|c| c != key.0) || range.is_some_and(|(a, b)| key.1 < a || key.1 >= b) {
            continue;
        }
        files.insert(key, path);
    }
    if files.is_empty() {
        return Err(PipelineError::MissingInput(dir.join("cow*_day*.csv")));
    }
    Ok(files.into_iter().collect())
}

/// Reads one sensor file and its `_labels.csv` sibling when present.
fn read_labeled(path: &Path) -> Result<LabeledSeries, PipelineError> {
    let series = read_sensor_csv(path)?;
    let labels = path.with_file_name(format!(
        "{}_labels.csv",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or_default()
    ));
    let segments = if labels.exists() {
        read_label_csv(&labels)?
    } else {
        Vec::new()
    };
    Ok(attach_labels(series, &segments))
}

fn concat(parts: Vec<LabeledSeries>) -> Result<LabeledSeries, PipelineError> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for p in parts {
        labels.extend(p.labels);
        samples.extend(p.series.into_samples());
    }
    Ok(LabeledSeries::new(SampleSeries::new(samples)?, labels))
}

fn prep_path_for(features: &Path) -> PathBuf {
    let stem = features.file_stem().and_then(|s| s.to_str()).unwrap_or("features");
    features.with_file_name(format!("{stem}.prep.json"))
}

pub fn cmd_features(config: &PipelineConfig, a: FeaturesArgs, out: &mut impl Write) -> Result<(), PipelineError> {
    let files = select_files(config, &a.select)?;
    let out_path = a.out.unwrap_or_else(|| config.paths.out_dir.join("features.csv"));
    // windows never span file boundaries
    let parts = files
        .iter()
        .map(|(_, p)| read_labeled(p))
        .collect::<Result<Vec<_>, _>>()?;
    let prep = match &a.prep {
        Some(p) => {
            require(p)?;
            Preprocessing::load(p)?
        }
        None => {
            let mut fc = config.features.config();
            fc.window_size = a.window.unwrap_or(fc.window_size);
            fc.stride = a.stride.unwrap_or(fc.stride);
            let all = concat(parts.clone())?;
            Preprocessing::fit(&all.series, a.mode.unwrap_or(config.features.mode), fc)?
        }
    };
    if prep.features.window_size < 2 || prep.features.stride < 1 {
        return Err(PipelineError::Config("window must be >= 2 and stride >= 1".into()));
    }
    let mut dataset = FeatureDataset::empty(prep.mode, &prep.features);
    let mut offset = 0;
    for part in &parts {
        let mut ds = prep.features(part)?;
        ds.rows.iter_mut().for_each(|r| r.start += offset);
        offset += part.len();
        dataset.extend(ds);
    }
    create_parent(&out_path)?;
    dataset.write_csv(&out_path)?;
    prep.save(&prep_path_for(&out_path))?;
    writeln!(
        out,
        "{} windows x {} features ({}) from {} files -> {}",
        dataset.len(),
        dataset.n_features(),
        prep.mode,
        files.len(),
        out_path.display()
    )
    .map_err(stdout_err)
}

pub fn cmd_train_classifier(
    config: &PipelineConfig,
    a: TrainClassifierArgs,
    out: &mut impl Write,
) -> Result<(), PipelineError> {
    let features = a.features.unwrap_or_else(|| config.paths.out_dir.join("features.csv"));
    require(&features)?;
    let prep_path = a.prep.unwrap_or_else(|| prep_path_for(&features));
    require(&prep_path)?;
    let prep = Preprocessing::load(&prep_path)?;
    let dataset = FeatureDataset::read_csv(&features)?;
    if dataset.schema != prep.features.schema(prep.mode) {
        return Err(PipelineError::Schema(format!(
            "{} does not match preprocessing {}",
            features.display(),
            prep_path.display()
        )));
    }
    if !(0.0..1.0).contains(&a.test_fraction) {
        return Err(PipelineError::Config("test fraction must be in [0, 1)".into()));
    }
    let mut params = config.forest;
    params.n_trees = a.trees.unwrap_or(params.n_trees);
    params.max_depth = a.max_depth.unwrap_or(params.max_depth);
    params.min_samples_leaf = a.min_leaf.unwrap_or(params.min_samples_leaf);
    params.seed = a.seed.unwrap_or(params.seed);
    if a.balanced {
        params.class_weight = ClassWeight::Balanced;
    }
    let (train, test) = dataset.split_chronological(1.0 - a.test_fraction);
    let model = train_forest(&train, &params)?;
    let dir = a.model_dir.unwrap_or_else(|| config.paths.model_dir.clone());
    create_dir(&dir)?;
    save_model(&model, dir.join(FOREST_FILE))?;
    prep.save(&dir.join(PREP_FILE))?;
    let w = |e| stdout_err(e);
    writeln!(out, "trained {} trees on {} windows", params.n_trees, train.len()).map_err(w)?;
    if !test.is_empty() {
        let report = evaluate(&model, &test)?;
        let base = majority_baseline(&train, &test);
        write!(out, "held-out ({} windows):\n{}", test.len(), report.table()).map_err(w)?;
        writeln!(out, "majority baseline accuracy {:.4}", base.accuracy).map_err(w)?;
    }
    let mut imp = crate::classify::feature_importance(&model);
    imp.sort_by(|x, y| y.1.total_cmp(&x.1));
    let top: Vec<String> = imp.iter().take(5).map(|(n, v)| format!("{n}={v:.3}")).collect();
    writeln!(out, "top features: {}", top.join(" ")).map_err(w)?;
    writeln!(out, "model -> {}", dir.display()).map_err(w)
}

fn load_classifier(dir: &Path) -> Result<(crate::classify::RandomForestModel, Preprocessing), PipelineError> {
    let (m, p) = (dir.join(FOREST_FILE), dir.join(PREP_FILE));
    require(&m)?;
    require(&p)?;
    Ok((load_model(&m)?, Preprocessing::load(&p)?))
}

pub fn cmd_classify(config: &PipelineConfig, a: ClassifyArgs, out: &mut impl Write) -> Result<(), PipelineError> {
    let dir = a.model_dir.unwrap_or_else(|| config.paths.model_dir.clone());
    let (model, prep) = load_classifier(&dir)?;
    let w = |e| stdout_err(e);
    if let Some(features) = a.features {
        require(&features)?;
        let dataset = FeatureDataset::read_csv(&features)?;
        let predictions = model.predict_dataset(&dataset)?;
        let path = a
            .out
            .unwrap_or_else(|| config.paths.out_dir.join("window_predictions.csv"));
        create_parent(&path)?;
        let mut text = String::from("start,predicted,label\n");
        for (row, p) in dataset.rows.iter().zip(&predictions) {
            text.push_str(&format!("{},{},{}\n", row.start, p.behavior, row.label));
        }
        fs::write(&path, text).map_err(io_err(&path))?;
        let report =
            crate::classify::EvalReport::from_pairs(dataset.labels().zip(predictions.iter().map(|p| p.behavior)));
        write!(out, "{}", report.table()).map_err(w)?;
        return writeln!(out, "{} window predictions -> {}", predictions.len(), path.display()).map_err(w);
    }
    let files = select_files(config, &a.select)?;
    let out_dir = a.out.unwrap_or_else(|| config.paths.out_dir.join("predictions"));
    create_dir(&out_dir)?;
    for ((cow, day), path) in &files {
        let series = read_sensor_csv(path)?;
        let labels = classify_series(&model, &prep, &series)?;
        let target = out_dir.join(format!("{}_pred.csv", day_stem(*cow, *day)));
        let mut text = String::with_capacity(series.len() * 24);
        text.push_str("timestamp,behavior\n");
        for (t, b) in series.timestamps().zip(&labels) {
            text.push_str(&format!("{t},{b}\n"));
        }
        fs::write(&target, text).map_err(io_err(&target))?;
    }
    writeln!(out, "classified {} files -> {}", files.len(), out_dir.display()).map_err(w)
}

fn read_predictions(path: &Path) -> Result<(Vec<i64>, Vec<Behavior>), PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut ts = Vec::new();
    let mut labels = Vec::new();
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("timestamp,behavior") {
        return Err(PipelineError::Config(format!(
            "{}: expected header timestamp,behavior",
            path.display()
        )));
    }
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || PipelineError::Config(format!("{} line {}: bad row", path.display(), k + 2));
        let (t, b) = line.trim().split_once(',').ok_or_else(bad)?;
        ts.push(t.parse().map_err(|_| bad())?);
        labels.push(b.parse().map_err(|_| bad())?);
    }
    Ok((ts, labels))
}

pub fn cmd_summarize(config: &PipelineConfig, a: SummarizeArgs, out: &mut impl Write) -> Result<(), PipelineError> {
    let dir = a
        .predictions
        .unwrap_or_else(|| config.paths.out_dir.join("predictions"));
    require(&dir)?;
    let out_dir = a.out.unwrap_or_else(|| config.paths.out_dir.join("summaries"));
    let tz = a.tz_offset_min.unwrap_or(config.tz_offset_min) * 60_000;
    let mut by_cow: BTreeMap<usize, BTreeMap<usize, PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = entry.map_err(io_err(&dir))?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some((cow, day)) = name.strip_suffix("_pred.csv").and_then(parse_stem) {
            by_cow.entry(cow).or_default().insert(day, path);
        }
    }
    if by_cow.is_empty() {
        return Err(PipelineError::MissingInput(dir.join("cow*_day*_pred.csv")));
    }
    create_dir(&out_dir)?;
    for (cow, days) in &by_cow {
        let mut ts = Vec::new();
        let mut labels = Vec::new();
        for path in days.values() {
            let (t, l) = read_predictions(path)?;
            ts.extend(t);
            labels.extend(l);
        }
        let hourly = summarize_hourly(&ts, &labels, tz);
        let daily = summarize_daily(&hourly);
        write_hourly_csv(&hourly, out_dir.join(format!("cow{cow}_hourly.csv")))?;
        write_daily_csv(&daily, out_dir.join(format!("cow{cow}_daily.csv")))?;
        writeln!(
            out,
            "cow {cow}: {} samples, {} hours, {} days",
            ts.len(),
            hourly.len(),
            daily.len()
        )
        .map_err(stdout_err)?;
    }
    writeln!(out, "summaries -> {}", out_dir.display()).map_err(stdout_err)
}

pub fn cmd_train_estrus(
    config: &PipelineConfig,
    a: TrainEstrusArgs,
    out: &mut impl Write,
) -> Result<(), PipelineError> {
    require(&a.hourly)?;
    let hourly = read_hourly_csv(&a.hourly)?;
    let e = &config.estrus;
    let train_days = a.train_days.unwrap_or(e.train_days);
    let val_days = a.val_days.unwrap_or(e.val_days);
    let mut lstm = config.lstm;
    lstm.hidden_size = a.hidden.unwrap_or(lstm.hidden_size);
    lstm.epochs = a.epochs.unwrap_or(lstm.epochs);
    lstm.learning_rate = a.lr.unwrap_or(lstm.learning_rate);
    lstm.seed = a.seed.unwrap_or(lstm.seed);
    let q = a.quantile.unwrap_or(e.quantile);
    if !(0.0..=1.0).contains(&q) {
        return Err(PipelineError::Config(format!("quantile {q} outside [0, 1]")));
    }
    let train = day_slice(&hourly, 0, train_days);
    let val = day_slice(&hourly, train_days, train_days + val_days);
    if val.is_empty() {
        return Err(PipelineError::Config(format!(
            "{} has no validation days after the first {train_days}",
            a.hourly.display()
        )));
    }
    let (forecaster, train_loss) = train_forecaster(&train, e.lookback, e.min_coverage_s, &lstm)?;
    let threshold = calibrate_threshold(&forecaster, &train, &val, q)?;
    let detector = EstrusDetector {
        forecaster,
        threshold,
        min_anomaly_hours: a.min_anomaly_hours.unwrap_or(e.min_anomaly_hours),
        quantile: q,
        train_loss,
    };
    let dir = a.model_dir.unwrap_or_else(|| config.paths.model_dir.clone());
    create_dir(&dir)?;
    save_detector(&detector, dir.join(ESTRUS_FILE))?;
    writeln!(
        out,
        "training loss {train_loss:.6}, threshold {threshold:.6} (q = {q}) -> {}",
        dir.join(ESTRUS_FILE).display()
    )
    .map_err(stdout_err)
}

fn print_verdicts(out: &mut impl Write, verdicts: &[DayVerdict]) -> Result<(), PipelineError> {
    let w = |e| stdout_err(e);
    writeln!(out, "{:<12}{:>14}{:>9}", "day", "anomaly_hours", "is_heat").map_err(w)?;
    for v in verdicts {
        writeln!(out, "{:<12}{:>14}{:>9}", v.day.to_string(), v.anomaly_hours, v.is_heat).map_err(w)?;
    }
    Ok(())
}

pub fn cmd_detect(config: &PipelineConfig, a: DetectArgs, out: &mut impl Write) -> Result<(), PipelineError> {
    require(&a.hourly)?;
    let hourly = read_hourly_csv(&a.hourly)?;
    let skip = a.skip_days.unwrap_or(config.estrus.train_days + config.estrus.val_days);
    let history = day_slice(&hourly, 0, skip);
    let rows = day_slice(&hourly, skip, usize::MAX);
    if rows.is_empty() {
        return Err(PipelineError::Config(format!(
            "{} has no days after the first {skip}",
            a.hourly.display()
        )));
    }
    let out_dir = a.out.unwrap_or_else(|| config.paths.out_dir.join("detect"));
    create_dir(&out_dir)?;
    let verdicts = match a.baseline {
        Baseline::Lstm => {
            let path = a
                .model_dir
                .unwrap_or_else(|| config.paths.model_dir.clone())
                .join(ESTRUS_FILE);
            require(&path)?;
            let mut detector = load_detector(&path)?;
            detector.min_anomaly_hours = a.min_anomaly_hours.unwrap_or(detector.min_anomaly_hours);
            let (anomalies, verdicts) = detector.detect(&history, &rows)?;
            write_anomaly_csv(&anomalies, out_dir.join("anomalies.csv"))?;
            verdicts
        }
        Baseline::Shahriar => {
            let threshold = a.delta_threshold.unwrap_or(config.estrus.delta_threshold);
            let lookback = &history[history.len().saturating_sub(72)..];
            let combined: Vec<_> = lookback.iter().chain(&rows).cloned().collect();
            let series = activity_index(&combined, config.estrus.min_coverage_s).from_day(rows[0].day);
            write_activity_csv(&series, threshold, out_dir.join("activity_index.csv"))?;
            shahriar_detect(
                &series,
                threshold,
                a.min_anomaly_hours.unwrap_or(config.estrus.min_anomaly_hours),
            )
        }
    };
    write_verdict_csv(&verdicts, out_dir.join("verdicts.csv"))?;
    print_verdicts(out, &verdicts)?;
    writeln!(out, "reports -> {}", out_dir.display()).map_err(stdout_err)
}

pub fn cmd_eval(config: &PipelineConfig, a: EvalArgs, out: &mut impl Write) -> Result<(), PipelineError> {
    require(&a.verdicts)?;
    require(&a.calendar)?;
    let verdicts = read_verdict_csv(&a.verdicts)?;
    let calendar = read_calendar_csv(&a.calendar)?;
    let m = score_verdicts(&verdicts, &calendar, a.cow)?;
    let out_dir = a.out.unwrap_or_else(|| config.paths.out_dir.join("eval"));
    create_dir(&out_dir)?;
    let w = |e| stdout_err(e);

    let mut metrics: Vec<(String, f64)> = [
        ("heat_days", m.heat_days as f64),
        ("normal_days", m.normal_days as f64),
        ("true_positives", m.true_positives as f64),
        ("false_positives", m.false_positives as f64),
        ("sensitivity", m.sensitivity),
        ("specificity", m.specificity),
        ("day_accuracy", m.accuracy),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    writeln!(out, "heat days detected   {}/{}", m.true_positives, m.heat_days).map_err(w)?;
    writeln!(
        out,
        "normal days cleared  {}/{}",
        m.normal_days - m.false_positives,
        m.normal_days
    )
    .map_err(w)?;
    writeln!(
        out,
        "sensitivity {:.3}  specificity {:.3}",
        m.sensitivity, m.specificity
    )
    .map_err(w)?;
    writeln!(out, "day-level accuracy {:.3} ({:.0}%)", m.accuracy, m.accuracy * 100.0).map_err(w)?;

    if let Some(features) = &a.features {
        require(features)?;
        let dir = a.model_dir.clone().unwrap_or_else(|| config.paths.model_dir.clone());
        let (model, _) = load_classifier(&dir)?;
        let report = evaluate(&model, &FeatureDataset::read_csv(features)?)?;
        write!(out, "classifier:\n{}", report.table()).map_err(w)?;
        metrics.push(("classifier_accuracy".into(), report.accuracy));
        for (a, row) in Behavior::ALL.iter().zip(report.confusion) {
            for (p, n) in Behavior::ALL.iter().zip(row) {
                metrics.push((format!("confusion_{a}_{p}"), n as f64));
            }
        }
    }

    let mut text = String::from("metric,value\n");
    for (k, v) in &metrics {
        text.push_str(&format!("{k},{v}\n"));
    }
    let path = out_dir.join("metrics.csv");
    fs::write(&path, text).map_err(io_err(&path))?;

    if let Some(hourly_path) = &a.hourly {
        require(hourly_path)?;
        let hourly = read_hourly_csv(hourly_path)?;
        let mut text = String::from("day,hour,others_min\n");
        for h in &hourly {
            text.push_str(&format!("{},{},{}\n", h.day, h.hour, h.minutes_of(Behavior::Others)));
        }
        let path = out_dir.join("plot_others_minutes.csv");
        fs::write(&path, text).map_err(io_err(&path))?;
        let series = activity_index(&hourly, config.estrus.min_coverage_s);
        write_activity_csv(&series, config.estrus.delta_threshold, out_dir.join("plot_delta.csv"))?;
    }
    if let Some(anomalies) = &a.anomalies {
        require(anomalies)?;
        let mut text = String::from("day,hour,sq_error,is_anomaly\n");
        for x in read_anomaly_csv(anomalies)? {
            text.push_str(&format!("{},{},{},{}\n", x.day, x.hour, x.sq_error, x.is_anomaly));
        }
        let path = out_dir.join("plot_sq_error.csv");
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    writeln!(out, "metrics -> {}", out_dir.display()).map_err(w)
}
