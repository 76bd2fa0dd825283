//! On-disk dataset layout.
//!
//! A dataset directory holds a `manifest.json` plus one little-endian `f32`
//! binary file per sample, each in `(C, T, V, M)` C-order (channel-major,
//! then frame, joint, performer). The manifest records the tensor
//! dimensions, class names, the sample list with labels, and optional
//! per-class ground-truth active parts.
//!
//! Loading is strict about payloads (truncated or oversized files and
//! non-finite values are hard errors) but tolerant of unknown manifest
//! fields, which are reported as warnings so newer writers stay readable.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{Dims, LabeledDataset, LabeledSample, PartName, PartSet, SkeletonSequence};

/// File name of the dataset manifest inside a dataset directory.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Manifest format version written by this crate.
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    channels: usize,
    frames: usize,
    joints: usize,
    performers: usize,
    num_classes: usize,
    class_names: Vec<String>,
    samples: Vec<ManifestSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ground_truth_parts: Option<Vec<Vec<String>>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSample {
    file: String,
    label: usize,
}

const KNOWN_FIELDS: [&str; 9] = [
    "version",
    "channels",
    "frames",
    "joints",
    "performers",
    "num_classes",
    "class_names",
    "samples",
    "ground_truth_parts",
];

/// A dataset loaded from disk plus non-fatal warnings (e.g. unknown
/// manifest fields written by a newer tool).
#[derive(Debug)]
pub struct LoadedDataset {
    pub dataset: LabeledDataset,
    pub warnings: Vec<String>,
}

/// Write a dataset directory: `manifest.json` plus one binary per sample.
///
/// Sample files are named `sample_000000.bin`, `sample_000001.bin`, ... in
/// dataset order. The directory is created if needed; existing files with
/// the same names are overwritten.
pub fn save_dataset(dataset: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dims = dataset.dims();
    let mut samples = Vec::with_capacity(dataset.len());
    for (i, sample) in dataset.samples().iter().enumerate() {
        let file = format!("sample_{i:06}.bin");
        let path = dir.join(&file);
        let mut bytes = Vec::with_capacity(dims.flat_len() * 4);
        for value in sample.sequence.as_flat() {
            bytes.extend_from_slice(&value.to_le_bytes());
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        samples.push(ManifestSample {
            file,
            label: sample.label,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        channels: dims.channels,
        frames: dims.frames,
        joints: dims.joints,
        performers: dims.performers,
        num_classes: dataset.num_classes(),
        class_names: dataset.class_names().to_vec(),
        samples,
        ground_truth_parts: dataset.ground_truth_parts().map(|sets| {
            sets.iter()
                .map(|set| set.iter().map(|p| p.as_str().to_string()).collect())
                .collect()
        }),
    };
    let path = dir.join(MANIFEST_NAME);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Load a dataset directory written by [`save_dataset`] (or any tool
/// following the same layout).
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;

    // Parse through a generic value first so unknown fields can be reported
    // without rejecting the file.
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::json(&manifest_path, e))?;
    let mut warnings = Vec::new();
    if let Some(map) = value.as_object() {
        for key in map.keys() {
            if !KNOWN_FIELDS.contains(&key.as_str()) {
                warnings.push(format!(
                    "ignoring unknown manifest field {key:?} in {}",
                    manifest_path.display()
                ));
            }
        }
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::json(&manifest_path, e))?;
    for w in &warnings {
        log::warn!("{w}");
    }

    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "unsupported manifest version {} (this build reads version {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    let dims = Dims::new(
        manifest.channels,
        manifest.frames,
        manifest.joints,
        manifest.performers,
    );
    dims.validate()?;

    let expected = dims.flat_len();
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let found = bytes.len() / 4;
        if bytes.len() % 4 != 0 {
            return Err(Error::Data(format!(
                "payload {} has {} bytes, not a multiple of 4",
                path.display(),
                bytes.len()
            )));
        }
        if found < expected {
            return Err(Error::TruncatedPayload {
                path,
                expected,
                found,
            });
        }
        if found > expected {
            return Err(Error::DimMismatch(format!(
                "payload {} holds {found} f32 values but dims {dims:?} require {expected}",
                path.display()
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let sequence = SkeletonSequence::from_flat(dims, values).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        samples.push(LabeledSample {
            sequence,
            label: entry.label,
        });
    }

    let dataset = LabeledDataset::new(
        dims,
        manifest.num_classes,
        samples,
        Some(manifest.class_names),
    )?;
    let dataset = match manifest.ground_truth_parts {
        Some(lists) => {
            let sets = lists
                .iter()
                .map(|names| {
                    let mut set = PartSet::EMPTY;
                    for name in names {
                        let part: PartName = name.parse()?;
                        set = set.with(part);
                    }
                    Ok(set)
                })
                .collect::<Result<Vec<_>>>()?;
            dataset.with_ground_truth(sets)?
        }
        None => dataset,
    };
    Ok(LoadedDataset { dataset, warnings })
}

/// Content hash of a dataset directory: SHA-256 over the manifest bytes
/// followed by every sample payload in manifest order. Returned as
/// `sha256:<hex>`. Two directories with identical logical content hash
/// identically regardless of when or where they were written.
pub fn dataset_content_hash(dir: &Path) -> Result<String> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let manifest_bytes = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::json(&manifest_path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&manifest_bytes);
    for entry in &manifest.samples {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(&bytes);
    }
    Ok(format!("sha256:{:x}", hasher.finalize()))
}
