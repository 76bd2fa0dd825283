//! Run artifacts: the manifest that pins a training run, shared dataset
//! resolution, and writers for the JSON/CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shapmix::data::{
    dataset_content_hash, load_dataset, LabeledDataset, Part, PartPartition,
};
use shapmix::train::{PerClassRecord, TrainConfig};

pub const RUN_MANIFEST_NAME: &str = "run_manifest.json";
pub const CHECKPOINT_NAME: &str = "checkpoint.bin";
pub const REPORT_NAME: &str = "report.json";
pub const TIMINGS_NAME: &str = "timings.json";
pub const PER_CLASS_CSV_NAME: &str = "per_class.csv";
pub const SALIENCY_NAME: &str = "saliency.json";
pub const METRICS_NAME: &str = "metrics.json";
pub const PARTITION_NAME: &str = "partition.json";

/// A dataset directory plus the content hash pinning its exact bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub content_hash: String,
}

impl DatasetRef {
    pub fn of(dir: &Path) -> Result<DatasetRef> {
        Ok(DatasetRef {
            path: dir.to_path_buf(),
            content_hash: dataset_content_hash(dir)
                .with_context(|| format!("hashing dataset {}", dir.display()))?,
        })
    }
}

/// File names (relative to the run directory) a training run writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutputs {
    pub checkpoint: String,
    pub report: String,
    pub timings: String,
    pub per_class_csv: String,
    /// Present in shap-mix mode only.
    pub saliency: Option<String>,
}

/// Everything needed to reproduce a training run. Written to the run
/// directory before training starts; feeding it back via `--config`
/// replays the run exactly (wall-clock timings aside).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub dataset: DatasetRef,
    pub eval_dataset: Option<DatasetRef>,
    /// Body-part partition as `{name, joints}` entries.
    pub partition: Vec<Part>,
    pub config: TrainConfig,
    pub outputs: RunOutputs,
}

/// Write a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Per-class accuracy CSV: `class_id,class_name,train_count,bucket,accuracy`
/// with an empty accuracy field for classes absent from the evaluation set.
pub fn write_per_class_csv(path: &Path, records: &[PerClassRecord]) -> Result<()> {
    let mut text = String::from("class_id,class_name,train_count,bucket,accuracy\n");
    for r in records {
        let accuracy = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.class_id,
            r.class_name,
            r.train_count,
            r.bucket.as_str(),
            accuracy
        ));
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// The two splits a command may resolve from a `--data` path: a directory
/// that itself is a split (contains `manifest.json`), or a dataset root
/// with `train/` and optionally `test/`.
pub struct ResolvedData {
    pub train_dir: PathBuf,
    pub test_dir: Option<PathBuf>,
}

pub fn resolve_data_dir(data: &Path) -> Result<ResolvedData> {
    if data.join(shapmix::data::MANIFEST_NAME).is_file() {
        return Ok(ResolvedData {
            train_dir: data.to_path_buf(),
            test_dir: None,
        });
    }
    let train_dir = data.join("train");
    if train_dir.join(shapmix::data::MANIFEST_NAME).is_file() {
        let test_dir = data.join("test");
        return Ok(ResolvedData {
            train_dir,
            test_dir: test_dir
                .join(shapmix::data::MANIFEST_NAME)
                .is_file()
                .then_some(test_dir),
        });
    }
    bail!(
        "no {} found in {} or {}",
        shapmix::data::MANIFEST_NAME,
        data.display(),
        data.join("train").display()
    );
}

/// Load a split, forwarding loader warnings to the log.
pub fn load_split(dir: &Path) -> Result<LabeledDataset> {
    let loaded =
        load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    Ok(loaded.dataset)
}

/// Resolve the body-part partition for a dataset, in precedence order:
/// explicit `--partition` file, a `partition.json` next to the dataset,
/// then the built-in 25-joint layout.
pub fn resolve_partition(
    flag: Option<&Path>,
    dataset_dir: &Path,
    num_joints: usize,
) -> Result<PartPartition> {
    if let Some(path) = flag {
        return Ok(PartPartition::from_json_file(path, num_joints)?);
    }
    // A split directory keeps partition.json at the dataset root.
    for dir in [dataset_dir, dataset_dir.parent().unwrap_or(dataset_dir)] {
        let candidate = dir.join(PARTITION_NAME);
        if candidate.is_file() {
            return Ok(PartPartition::from_json_file(&candidate, num_joints)?);
        }
    }
    Ok(PartPartition::default_for(num_joints)?)
}

/// Parse `"c,t,v,m"` into dataset dimensions.
pub fn parse_dims(s: &str) -> std::result::Result<shapmix::data::Dims, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err(format!("expected four comma-separated values, got {s:?}"));
    }
    let mut nums = [0usize; 4];
    for (slot, raw) in nums.iter_mut().zip(&parts) {
        *slot = raw
            .trim()
            .parse()
            .map_err(|e| format!("bad dimension {raw:?}: {e}"))?;
    }
    Ok(shapmix::data::Dims::new(nums[0], nums[1], nums[2], nums[3]))
}

/// Parse `"lo,hi"` into a usize pair.
pub fn parse_usize_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated values, got {s:?}"))?;
    Ok((
        lo.trim().parse().map_err(|e| format!("bad value {lo:?}: {e}"))?,
        hi.trim().parse().map_err(|e| format!("bad value {hi:?}: {e}"))?,
    ))
}

/// Parse `"lo,hi"` into an f64 pair.
pub fn parse_f64_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated values, got {s:?}"))?;
    Ok((
        lo.trim().parse().map_err(|e| format!("bad value {lo:?}: {e}"))?,
        hi.trim().parse().map_err(|e| format!("bad value {hi:?}: {e}"))?,
    ))
}

/// Parse a comma-separated milestone list; `"none"` clears the schedule.
pub fn parse_milestones(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|e| format!("bad milestone {x:?}: {e}"))
        })
        .collect()
}
