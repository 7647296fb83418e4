//! Dataset layout, loading, hashing and subset sampling.
//!
//! A dataset is a directory of `root/<label>/<view>.pgm|png` files. The
//! content hash covers every image byte and the layout, so any change to
//! the data shows up in report provenance.

mod synth;

pub use synth::{generate, Family, SynthSpec, TransformRanges};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imgproc::{load_image, GrayImage};

/// An on-disk (or virtually subset) dataset: labels and their view files.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    /// Sorted instance labels.
    pub instances: Vec<String>,
    /// Ordered view paths per label.
    pub views: BTreeMap<String, Vec<PathBuf>>,
    /// 256-bit digest over layout and all image bytes, hex-encoded.
    pub content_hash: String,
}

/// Subset selection: the first `p` labels and `t` seeded views per label.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub p: usize,
    pub t: usize,
    pub seed: u64,
}

/// Views loaded into memory, ready for evaluation.
#[derive(Clone)]
pub struct ViewSet {
    pub entries: Vec<ViewEntry>,
    pub dataset_hash: String,
}

#[derive(Clone)]
pub struct ViewEntry {
    pub image: Arc<GrayImage>,
    pub label: String,
    /// Stable identifier (the file path) used for feature caching.
    pub source: String,
}

impl ViewSet {
    /// Distinct labels in sorted order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.entries.iter().map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Views per label, in entry order.
    pub fn views_per_label(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// A view set over a subset of entries (indices in ascending order).
    pub fn select(&self, indices: &[usize], hash: String) -> ViewSet {
        ViewSet {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            dataset_hash: hash,
        }
    }
}

fn hash_files(views: &BTreeMap<String, Vec<PathBuf>>) -> Result<String> {
    let mut hasher = Sha256::new();
    for (label, paths) in views {
        hasher.update(label.as_bytes());
        hasher.update([0u8]);
        for path in paths {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("pgm") | Some("png") | Some("PGM") | Some("PNG")
    )
}

/// Load a dataset from `root/<label>/*.pgm|png`. Labels are subdirectory
/// names in sorted order; views sort by filename. Stray files at the root
/// are ignored with a warning.
pub fn load(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let read_dir = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut labels = Vec::new();
    for entry in read_dir {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            labels.push(path);
        } else {
            eprintln!(
                "warning: ignoring stray file {} at dataset root",
                path.display()
            );
        }
    }
    if labels.is_empty() {
        return Err(Error::Dataset(format!(
            "no instance directories under {}",
            root.display()
        )));
    }
    labels.sort();

    let mut views = BTreeMap::new();
    let mut instances = Vec::new();
    for label_dir in labels {
        let label = label_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&label_dir)
            .map_err(|e| Error::io(&label_dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        if files.is_empty() {
            return Err(Error::Dataset(format!(
                "instance directory {} contains no images",
                label_dir.display()
            )));
        }
        files.sort();
        instances.push(label.clone());
        views.insert(label, files);
    }
    let content_hash = hash_files(&views)?;
    Ok(Dataset {
        root: root.to_path_buf(),
        instances,
        views,
        content_hash,
    })
}

/// Select the first `p` sorted labels and, per label, `t` views drawn
/// without replacement from a seeded per-label shuffle. The selection is
/// prefix-stable: growing `t` under the same seed only adds views.
pub fn subset(ds: &Dataset, spec: &SubsetSpec) -> Result<Dataset> {
    if spec.p < 2 {
        return Err(Error::InvalidParam(format!(
            "subset needs p >= 2, got {}",
            spec.p
        )));
    }
    if spec.t < 2 {
        return Err(Error::InvalidParam(format!(
            "subset needs t >= 2, got {}",
            spec.t
        )));
    }
    if spec.p > ds.instances.len() {
        return Err(Error::InvalidParam(format!(
            "subset p={} exceeds the {} instances available",
            spec.p,
            ds.instances.len()
        )));
    }
    let min_views = ds.views.values().map(|v| v.len()).min().unwrap_or(0);
    if spec.t > min_views {
        return Err(Error::InvalidParam(format!(
            "subset t={} exceeds the minimum of {min_views} views per instance",
            spec.t
        )));
    }

    let mut views = BTreeMap::new();
    let mut instances = Vec::new();
    for (li, label) in ds.instances.iter().take(spec.p).enumerate() {
        let all = &ds.views[label];
        let mut rng = crate::rng::Rng::derive(spec.seed, li as u64);
        let perm = rng.permutation(all.len());
        let mut chosen: Vec<usize> = perm[..spec.t].to_vec();
        chosen.sort_unstable();
        instances.push(label.clone());
        views.insert(
            label.clone(),
            chosen.iter().map(|&i| all[i].clone()).collect(),
        );
    }
    let content_hash = hash_files(&views)?;
    Ok(Dataset {
        root: ds.root.clone(),
        instances,
        views,
        content_hash,
    })
}

impl Dataset {
    pub fn total_views(&self) -> usize {
        self.views.values().map(|v| v.len()).sum()
    }

    /// Load every view into memory, label-major in sorted label order.
    pub fn load_views(&self) -> Result<ViewSet> {
        let mut entries = Vec::with_capacity(self.total_views());
        for label in &self.instances {
            for path in &self.views[label] {
                let image = Arc::new(load_image(path)?);
                entries.push(ViewEntry {
                    image,
                    label: label.clone(),
                    source: path.to_string_lossy().into_owned(),
                });
            }
        }
        Ok(ViewSet {
            entries,
            dataset_hash: self.content_hash.clone(),
        })
    }
}
