//! `eval`: standalone evaluation of a checkpoint against a dataset,
//! reporting overall accuracy plus the many/medium/few shot buckets the
//! checkpoint's training counts define.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use shapmix::data::ShotThresholds;
use shapmix::model::load_checkpoint;
use shapmix::train::evaluate;

use crate::artifacts::{self, write_json, write_per_class_csv};
use crate::train_cmd::format_summary;

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root (evaluates test/ when present) or a split directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for metrics.json and per_class.csv.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let (params, header) = load_checkpoint(&args.checkpoint)?;
    let resolved = artifacts::resolve_data_dir(&args.data)?;
    let eval_dir = resolved.test_dir.unwrap_or(resolved.train_dir);
    let dataset = artifacts::load_split(&eval_dir)?;

    let metrics = evaluate(
        &params,
        &dataset,
        &header.class_counts,
        ShotThresholds::default(),
    )?;

    // Outputs only materialize after a fully successful evaluation.
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_json(&args.out.join(artifacts::METRICS_NAME), &metrics)?;
    write_per_class_csv(
        &args.out.join(artifacts::PER_CLASS_CSV_NAME),
        &metrics.per_class,
    )?;

    println!("{}", format_summary(&metrics.summary()));
    Ok(())
}
