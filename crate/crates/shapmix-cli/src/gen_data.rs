//! `gen-data`: synthetic dataset generation with an optional long-tail
//! training profile. The test split always stays balanced.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use shapmix::data::{
    dataset_content_hash, generate_synthetic_split, pareto_subsample, save_dataset, Dims,
    SyntheticConfig,
};

use crate::artifacts::{self, parse_dims};

#[derive(Args)]
pub struct GenDataArgs {
    /// Number of action classes.
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Training samples per class before any long-tail truncation.
    #[arg(long, default_value_t = 200)]
    per_class: usize,
    /// Dataset dimensions as channels,frames,joints,performers.
    #[arg(long, value_parser = parse_dims, default_value = "3,64,25,1")]
    dims: Dims,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives train/ and test/ splits.
    #[arg(long)]
    out: PathBuf,
    /// Head-to-tail count ratio; omit for a balanced training split.
    #[arg(long)]
    imbalance_factor: Option<f64>,
    /// Head-class size of the long-tail profile (defaults to --per-class).
    #[arg(long)]
    max_per_class: Option<usize>,
    /// Balanced test samples per class.
    #[arg(long, default_value_t = 50)]
    test_per_class: usize,
    /// Body-part partition file for non-25-joint skeletons.
    #[arg(long)]
    partition: Option<PathBuf>,
}

pub fn run(args: GenDataArgs) -> Result<()> {
    let partition =
        artifacts::resolve_partition(args.partition.as_deref(), &args.out, args.dims.joints)?;

    let train_config = SyntheticConfig {
        num_classes: args.classes,
        per_class: args.per_class,
        dims: args.dims,
        seed: args.seed,
    };
    let balanced = generate_synthetic_split(&train_config, &partition, 0)?;
    let train = match args.imbalance_factor {
        Some(factor) => {
            let max = args.max_per_class.unwrap_or(args.per_class);
            pareto_subsample(&balanced, max, factor, args.seed)?
        }
        None => balanced,
    };
    let test_config = SyntheticConfig {
        per_class: args.test_per_class,
        ..train_config
    };
    let test = generate_synthetic_split(&test_config, &partition, 1)?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let (train_dir, test_dir) = (args.out.join("train"), args.out.join("test"));
    save_dataset(&train, &train_dir)?;
    save_dataset(&test, &test_dir)?;
    fs::write(
        args.out.join(artifacts::PARTITION_NAME),
        partition.to_json_string() + "\n",
    )?;

    println!(
        "train: {} samples in {} ({})",
        train.len(),
        train_dir.display(),
        dataset_content_hash(&train_dir)?
    );
    println!(
        "test: {} samples in {} ({})",
        test.len(),
        test_dir.display(),
        dataset_content_hash(&test_dir)?
    );
    Ok(())
}
