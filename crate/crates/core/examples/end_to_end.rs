//! Runs every command-line stage in-process over a scratch directory, from
//! synthetic data to evaluation metrics.

use clap::Parser;
use herdpipe::cli::{run, Cli};

fn stage(dir: &std::path::Path, args: &str) -> Result<(), Box<dyn std::error::Error>> {
    println!("$ herdpipe {args}");
    let argv = std::iter::once("herdpipe".to_string()).chain(args.split_whitespace().map(|a| {
        if a.contains('/') || a == "data" {
            dir.join(a).display().to_string()
        } else {
            a.to_string()
        }
    }));
    run(Cli::try_parse_from(argv)?)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let d = dir.path();
    stage(d, "synth --days 12 --estrus-days 10 --seed 4 --out data")?;
    stage(
        d,
        "features --data data --days 0..3 --stride 10 --out work/features.csv",
    )?;
    stage(
        d,
        "train-classifier --features work/features.csv --trees 20 --model-dir work/models",
    )?;
    stage(d, "classify --model-dir work/models --data data --out work/pred")?;
    stage(d, "summarize --predictions work/pred --out work/summary")?;
    stage(
        d,
        "train-estrus --hourly work/summary/cow0_hourly.csv --model-dir work/models \
         --train-days 6 --val-days 2 --hidden 16 --epochs 300",
    )?;
    stage(
        d,
        "detect --hourly work/summary/cow0_hourly.csv --model-dir work/models --skip-days 8 --out work/detect",
    )?;
    stage(
        d,
        "eval --verdicts work/detect/verdicts.csv --calendar data/calendar.csv \
         --hourly work/summary/cow0_hourly.csv --out work/eval",
    )?;
    println!("{}", std::fs::read_to_string(d.join("work/eval/metrics.csv"))?);
    Ok(())
}
