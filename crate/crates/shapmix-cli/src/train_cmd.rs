//! `train`: full training run with serialized configuration and artifacts.
//!
//! Configuration precedence: command-line flags > `--config` file >
//! built-in defaults. `--config` accepts either a bare training config or
//! a previously written run manifest; the latter also supplies the
//! dataset paths and partition, making `--config run_manifest.json` a
//! complete replay.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use shapmix::data::PartPartition;
use shapmix::model::{save_checkpoint, CheckpointHeader, LossMode};
use shapmix::saliency::saliency_export;
use shapmix::train::{train, EvalSummary, TrainConfig, TrainMode};

use crate::artifacts::{
    self, parse_f64_pair, parse_milestones, parse_usize_pair, read_json, write_json,
    write_per_class_csv, DatasetRef, RunManifest, RunOutputs,
};

/// Newtype so clap treats the milestone list as one comma-separated
/// value rather than a repeatable flag.
#[derive(Debug, Clone)]
struct MilestoneList(Vec<usize>);

impl std::str::FromStr for MilestoneList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<MilestoneList, String> {
        parse_milestones(s).map(MilestoneList)
    }
}

fn parse_loss(s: &str) -> std::result::Result<LossMode, String> {
    match s {
        "ce" => Ok(LossMode::Ce),
        "balanced-softmax" => Ok(LossMode::BalancedSoftmax),
        other => Err(format!(
            "unknown loss {other:?} (expected ce or balanced-softmax)"
        )),
    }
}

/// Flag-level numeric guards, so clap reports the offending flag by name.
fn parse_positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a positive finite number, got {s}"))
    }
}

fn parse_unit_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1], got {s}"))
    }
}

fn parse_momentum_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("must lie in [0, 1), got {s}"))
    }
}

fn parse_at_least_one(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset root (with train/ and optional test/) or a single split
    /// directory. May come from the --config manifest instead.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluation split override.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Run directory for all artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Training config JSON, or a run manifest to replay.
    #[arg(long)]
    config: Option<PathBuf>,
    /// baseline, st-mix, or shap-mix.
    #[arg(long)]
    mode: Option<TrainMode>,
    /// ce or balanced-softmax.
    #[arg(long, value_parser = parse_loss)]
    loss: Option<LossMode>,
    #[arg(long, value_parser = parse_at_least_one)]
    epochs: Option<usize>,
    /// Warm-up epochs before the mixed loss contributes.
    #[arg(long)]
    warmup: Option<usize>,
    /// Part-importance softmax temperature.
    #[arg(long, value_parser = parse_positive_f64)]
    tau: Option<f64>,
    /// Saliency EMA momentum.
    #[arg(long, value_parser = parse_momentum_f64)]
    ema: Option<f64>,
    /// Probability of global mixup instead of part cutmix.
    #[arg(long, value_parser = parse_unit_f64)]
    mixup_prob: Option<f64>,
    /// Part-count bounds for cutmix, e.g. 2,3.
    #[arg(long, value_parser = parse_usize_pair)]
    spatial: Option<(usize, usize)>,
    /// Pasted-segment length bounds as frame fractions, e.g. 0.4,0.7.
    #[arg(long, value_parser = parse_f64_pair)]
    temporal: Option<(f64, f64)>,
    /// Run saliency estimation every n-th iteration.
    #[arg(long, value_parser = parse_at_least_one)]
    estimate_every: Option<usize>,
    #[arg(long, value_parser = parse_at_least_one)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base learning rate.
    #[arg(long, value_parser = parse_positive_f64)]
    lr: Option<f64>,
    /// Hidden width of the classifier.
    #[arg(long, value_parser = parse_at_least_one)]
    hidden: Option<usize>,
    /// Learning-rate decay epochs, e.g. 60,80 ("none" to disable).
    #[arg(long)]
    milestones: Option<MilestoneList>,
    /// Body-part partition file.
    #[arg(long)]
    partition: Option<PathBuf>,
}

/// Fold `--config` (file) and flags into the final configuration plus any
/// paths the manifest contributes.
fn resolve_config(
    args: &TrainArgs,
) -> Result<(TrainConfig, Option<PathBuf>, Option<PathBuf>, Option<Vec<shapmix::data::Part>>)> {
    let mut config = TrainConfig::default();
    let mut data = args.data.clone();
    let mut eval = args.eval.clone();
    let mut manifest_parts = None;

    if let Some(path) = &args.config {
        let value: serde_json::Value = read_json(path)?;
        if value.get("tool_version").is_some() {
            let manifest: RunManifest = serde_json::from_value(value)
                .with_context(|| format!("parsing run manifest {}", path.display()))?;
            config = manifest.config;
            if data.is_none() {
                data = Some(manifest.dataset.path);
            }
            if eval.is_none() {
                eval = manifest.eval_dataset.map(|d| d.path);
            }
            manifest_parts = Some(manifest.partition);
        } else {
            config = serde_json::from_value(value)
                .with_context(|| format!("parsing training config {}", path.display()))?;
        }
    }

    if let Some(v) = args.mode {
        config.mode = v;
    }
    if let Some(v) = args.loss {
        config.loss = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.warmup {
        config.warmup_epochs = v;
    }
    if let Some(v) = args.tau {
        config.temperature = v;
    }
    if let Some(v) = args.ema {
        config.ema_momentum = v;
    }
    if let Some(v) = args.mixup_prob {
        config.mix.mixup_prob = v;
    }
    if let Some(v) = args.spatial {
        config.mix.spatial_bounds = v;
    }
    if let Some(v) = args.temporal {
        config.mix.temporal_bounds = v;
    }
    if let Some(v) = args.estimate_every {
        config.estimate_every = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.lr {
        config.optimizer.base_lr = v;
    }
    if let Some(v) = args.hidden {
        config.hidden = v;
    }
    if let Some(v) = &args.milestones {
        config.optimizer.milestones = v.0.clone();
    }
    Ok((config, data, eval, manifest_parts))
}

pub fn run(args: TrainArgs) -> Result<()> {
    let (config, data, eval, manifest_parts) = resolve_config(&args)?;
    config.validate()?;

    let data = data.ok_or_else(|| {
        shapmix::Error::Config("--data is required (or --config with a run manifest)".into())
    })?;
    let resolved = artifacts::resolve_data_dir(&data)?;
    let eval_dir = eval.or(resolved.test_dir);

    let train_set = artifacts::load_split(&resolved.train_dir)?;
    let eval_set = match &eval_dir {
        Some(dir) => Some(artifacts::load_split(dir)?),
        None => None,
    };
    let dims = train_set.dims();

    let partition = match (&args.partition, manifest_parts) {
        (Some(path), _) => PartPartition::from_json_file(path, dims.joints)?,
        (None, Some(parts)) => PartPartition::new(parts, dims.joints)?,
        (None, None) => artifacts::resolve_partition(None, &resolved.train_dir, dims.joints)?,
    };

    let dataset_ref = DatasetRef::of(&resolved.train_dir)?;
    let eval_ref = eval_dir.as_deref().map(DatasetRef::of).transpose()?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        dataset: dataset_ref,
        eval_dataset: eval_ref,
        partition: partition.parts().to_vec(),
        config: config.clone(),
        outputs: RunOutputs {
            checkpoint: artifacts::CHECKPOINT_NAME.to_string(),
            report: artifacts::REPORT_NAME.to_string(),
            timings: artifacts::TIMINGS_NAME.to_string(),
            per_class_csv: artifacts::PER_CLASS_CSV_NAME.to_string(),
            saliency: (config.mode == TrainMode::ShapMix)
                .then(|| artifacts::SALIENCY_NAME.to_string()),
        },
    };
    // The manifest lands before training so an interrupted run still
    // records exactly what it was doing.
    write_json(&args.out.join(artifacts::RUN_MANIFEST_NAME), &manifest)?;

    let output = train(&train_set, eval_set.as_ref(), &partition, &config)?;

    let header = CheckpointHeader::new(
        dims,
        config.hidden,
        train_set.num_classes(),
        train_set.class_names().to_vec(),
        config.loss,
        train_set.class_counts(),
        config.seed,
        config.epochs,
    );
    save_checkpoint(
        &args.out.join(artifacts::CHECKPOINT_NAME),
        &output.params,
        &header,
    )?;
    write_json(&args.out.join(artifacts::REPORT_NAME), &output.report)?;
    write_json(&args.out.join(artifacts::TIMINGS_NAME), &output.timings)?;
    write_per_class_csv(
        &args.out.join(artifacts::PER_CLASS_CSV_NAME),
        &output.report.per_class,
    )?;
    if let Some(table) = &output.table {
        let export = saliency_export(table, train_set.class_names())?;
        write_json(&args.out.join(artifacts::SALIENCY_NAME), &export)?;
    }

    println!(
        "trained {} for {} epochs on {} samples",
        config.mode,
        config.epochs,
        train_set.len()
    );
    if let Some(final_eval) = &output.report.final_eval {
        println!("final {}", format_summary(final_eval));
    }
    println!("artifacts in {}", args.out.display());
    Ok(())
}

/// One-line accuracy summary; absent buckets print as `-`.
pub fn format_summary(s: &EvalSummary) -> String {
    let f = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    format!(
        "overall {:.4}  many {}  medium {}  few {}",
        s.overall,
        f(s.many),
        f(s.medium),
        f(s.few)
    )
}
