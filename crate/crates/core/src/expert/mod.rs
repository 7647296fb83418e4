//! The expert system: typology clustering over the F1 matrix and the
//! two-stage hierarchical recognizer.
//!
//! Stage 1 recognizes the *typology* of a view with the best-average
//! pipeline; stage 2 recognizes the *instance* with the predicted
//! typology's own best pipeline, against that typology's instances only.
//! The restriction is where the gain comes from: fewer candidate
//! instances mean fewer confusable features in the model.

mod kmeans;

pub use kmeans::{best_per_typology, choose_k, kmeans, silhouette_sweep, Typologies};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::ViewSet;
use crate::error::{Error, Result};
use crate::eval::{best_overall, f1_matrix_cached, F1Matrix, FeatureCache};
use crate::matching::{VoteTally, UNKNOWN_LABEL};
use crate::pipeline::{
    build_model_from_features, classify_features, extract_features, hex_sha256, ModelIndex,
    PipelineRegistry,
};

/// How many typologies to form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KChoice {
    /// Pick K by silhouette sweep.
    Auto,
    Fixed(usize),
}

/// How stage 1 turns good matches into a typology prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOneVote {
    /// Sum good matches over all model views of each typology (default).
    GroupPooling,
    /// Predict an instance first, then map it to its typology.
    InstanceThenMap,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainOptions {
    pub k: KChoice,
    pub seed: u64,
    pub vote_mode: StageOneVote,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            k: KChoice::Auto,
            seed: 0,
            vote_mode: StageOneVote::GroupPooling,
        }
    }
}

/// The trained hierarchical recognizer.
pub struct HierarchicalModel {
    /// Best pipeline on average over instances; drives stage 1.
    pub best_average: String,
    pub typologies: Typologies,
    /// Typology id -> its best pipeline (drives stage 2).
    pub typology_pipelines: BTreeMap<usize, String>,
    /// The training F1 matrix the clustering was computed from.
    pub f1: F1Matrix,
    pub vote_mode: StageOneVote,
    /// Stage-1 index: every training view, instance labels.
    stage1: ModelIndex,
    /// Stage-2 indexes: per typology, that typology's views only.
    stage2: BTreeMap<usize, ModelIndex>,
}

/// Outcome of a hierarchical recognition.
#[derive(Clone, Debug)]
pub struct HierRecognition {
    pub label: String,
    /// Predicted typology, absent when stage 1 fell back.
    pub typology: Option<usize>,
    /// Stage 1 produced no good matches; flat recognition answered instead.
    pub fallback: bool,
    pub stage1_tally: VoteTally,
    pub tally: VoteTally,
    pub stage1_secs: f64,
    pub stage2_secs: f64,
    pub elapsed_secs: f64,
}

/// Train the expert: inner LOOCV F1 matrix, best-average pipeline,
/// K-means typologies, per-typology best pipelines, then the stage-1 and
/// stage-2 model indexes.
pub fn train_expert(
    registry: &PipelineRegistry,
    views: &ViewSet,
    opts: TrainOptions,
) -> Result<HierarchicalModel> {
    let cache = FeatureCache::build(registry.specs(), views)?;
    train_expert_cached(registry, views, opts, &cache)
}

pub fn train_expert_cached(
    registry: &PipelineRegistry,
    views: &ViewSet,
    opts: TrainOptions,
    cache: &FeatureCache,
) -> Result<HierarchicalModel> {
    let labels = views.labels();
    if labels.len() < 2 {
        return Err(Error::Dataset(format!(
            "expert training needs at least 2 instances, got {}",
            labels.len()
        )));
    }

    let f1 = f1_matrix_cached(registry, views, opts.seed, cache)?;
    let best_average = best_overall(&f1);

    let k = match opts.k {
        KChoice::Auto => choose_k(&f1),
        KChoice::Fixed(k) => {
            if k == 0 || k >= labels.len() {
                return Err(Error::InvalidParam(format!(
                    "K must satisfy 1 <= K < {} instances, got {k}",
                    labels.len()
                )));
            }
            k
        }
    };
    let typologies = kmeans(&f1, k, opts.seed, 100)?;
    let typology_pipelines = best_per_typology(&f1, &typologies);

    let stage1 = build_stage_model(registry, &best_average, views, None, cache)?;
    let mut stage2 = BTreeMap::new();
    for (tid, members) in typologies.members().iter().enumerate() {
        let spec_id = &typology_pipelines[&tid];
        let model = build_stage_model(registry, spec_id, views, Some(members), cache)?;
        stage2.insert(tid, model);
    }

    Ok(HierarchicalModel {
        best_average,
        typologies,
        typology_pipelines,
        f1,
        vote_mode: opts.vote_mode,
        stage1,
        stage2,
    })
}

fn build_stage_model(
    registry: &PipelineRegistry,
    spec_id: &str,
    views: &ViewSet,
    member_filter: Option<&Vec<String>>,
    cache: &FeatureCache,
) -> Result<ModelIndex> {
    let spec = registry
        .get(spec_id)
        .ok_or_else(|| Error::InvalidParam(format!("unknown pipeline id {spec_id}")))?;
    let mut features = Vec::new();
    for entry in &views.entries {
        if let Some(members) = member_filter {
            if !members.contains(&entry.label) {
                continue;
            }
        }
        let cached = cache.get(spec, &entry.source).ok_or_else(|| {
            Error::InvalidParam(format!("feature cache is missing view {}", entry.source))
        })?;
        features.push((entry.label.clone(), cached.1.clone()));
    }
    build_model_from_features(spec, features)
}

impl HierarchicalModel {
    pub fn stage1(&self) -> &ModelIndex {
        &self.stage1
    }

    pub fn stage2(&self, typology: usize) -> Option<&ModelIndex> {
        self.stage2.get(&typology)
    }

    /// Instance label -> typology id.
    pub fn typology_of(&self, label: &str) -> Option<usize> {
        self.typologies.assignment.get(label).copied()
    }
}

/// Pool an instance-level tally into per-typology counts. Good-match
/// counts are additive, so pooling tallies equals pooling raw matches.
fn pool_by_typology(tally: &VoteTally, model: &HierarchicalModel) -> BTreeMap<usize, usize> {
    let mut pooled: BTreeMap<usize, usize> = BTreeMap::new();
    for (label, &count) in &tally.counts {
        if let Some(t) = model.typology_of(label) {
            *pooled.entry(t).or_insert(0) += count;
        }
    }
    pooled
}

/// Two-stage recognition: typology with the best-average pipeline, then
/// instance with that typology's best pipeline. A stage-1 UNKNOWN falls
/// back to flat instance recognition over all instances, flagged in the
/// result.
pub fn hierarchical_recognize(
    model: &HierarchicalModel,
    view: &crate::imgproc::GrayImage,
) -> Result<HierRecognition> {
    let start = Instant::now();

    // Stage 1: recognize the typology.
    let s1_start = Instant::now();
    let (_, instance_tally) = {
        let (_, descriptors) = extract_features(&model.stage1.spec, view)?;
        classify_features(&model.stage1, &descriptors)?
    };
    let predicted_typology: Option<usize> = if instance_tally.total_good == 0 {
        None
    } else {
        match model.vote_mode {
            StageOneVote::GroupPooling => {
                let pooled = pool_by_typology(&instance_tally, model);
                // Max count, ties to the smallest typology id.
                let mut best: Option<(usize, usize)> = None;
                for (&t, &count) in &pooled {
                    let better = match best {
                        None => count > 0,
                        Some((_, bc)) => count > bc,
                    };
                    if better {
                        best = Some((t, count));
                    }
                }
                best.map(|(t, _)| t)
            }
            StageOneVote::InstanceThenMap => model.typology_of(&instance_tally.winner),
        }
    };
    let stage1_secs = s1_start.elapsed().as_secs_f64();

    // Stage-1 tally rendered over typology pseudo-labels for reporting.
    let stage1_tally = {
        let pooled = pool_by_typology(&instance_tally, model);
        let counts: BTreeMap<String, usize> =
            pooled.iter().map(|(t, &c)| (format!("T{t}"), c)).collect();
        let winner = predicted_typology
            .map(|t| format!("T{t}"))
            .unwrap_or_else(|| UNKNOWN_LABEL.to_string());
        VoteTally {
            counts,
            winner,
            total_good: instance_tally.total_good,
        }
    };

    match predicted_typology {
        None => {
            // Fall back to flat recognition over all instances; the
            // stage-1 index holds every training view with instance
            // labels, so the instance tally already is the flat answer.
            Ok(HierRecognition {
                label: instance_tally.winner.clone(),
                typology: None,
                fallback: true,
                stage1_tally,
                tally: instance_tally,
                stage1_secs,
                stage2_secs: 0.0,
                elapsed_secs: start.elapsed().as_secs_f64(),
            })
        }
        Some(t) => {
            let s2_start = Instant::now();
            let stage2 = model.stage2.get(&t).ok_or_else(|| {
                Error::InvalidParam(format!("missing stage-2 model for typology {t}"))
            })?;
            let (_, descriptors) = extract_features(&stage2.spec, view)?;
            let (label, tally) = classify_features(stage2, &descriptors)?;
            let stage2_secs = s2_start.elapsed().as_secs_f64();
            Ok(HierRecognition {
                label,
                typology: Some(t),
                fallback: false,
                stage1_tally,
                tally,
                stage1_secs,
                stage2_secs,
                elapsed_secs: start.elapsed().as_secs_f64(),
            })
        }
    }
}

/// Serialized form of the model directory manifest.
#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    best_average: String,
    k: usize,
    assignments: BTreeMap<String, usize>,
    typology_pipelines: BTreeMap<usize, String>,
    vote_mode: StageOneVote,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    f1_matrix: F1Matrix,
    stage1_file: String,
    stage1_hash: String,
    stage2_files: BTreeMap<usize, String>,
    stage2_hashes: BTreeMap<usize, String>,
}

const MANIFEST_VERSION: u32 = 1;

impl HierarchicalModel {
    fn manifest(&self) -> Manifest {
        Manifest {
            format_version: MANIFEST_VERSION,
            best_average: self.best_average.clone(),
            k: self.typologies.k,
            assignments: self.typologies.assignment.clone(),
            typology_pipelines: self.typology_pipelines.clone(),
            vote_mode: self.vote_mode,
            centroids: self.typologies.centroids.clone(),
            inertia: self.typologies.inertia,
            f1_matrix: self.f1.clone(),
            stage1_file: "stage1.tplg".to_string(),
            stage1_hash: self.stage1.content_hash(),
            stage2_files: self
                .stage2
                .keys()
                .map(|&t| (t, format!("stage2_T{t}.tplg")))
                .collect(),
            stage2_hashes: self
                .stage2
                .iter()
                .map(|(&t, m)| (t, m.content_hash()))
                .collect(),
        }
    }

    /// Canonical manifest JSON (maps are ordered, field order is fixed).
    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes")
    }

    /// Content hash over the manifest and every stage container.
    pub fn model_hash(&self) -> String {
        let mut bytes = self.manifest_json().into_bytes();
        bytes.extend_from_slice(&self.stage1.to_bytes());
        for model in self.stage2.values() {
            bytes.extend_from_slice(&model.to_bytes());
        }
        hex_sha256(&bytes)
    }

    /// Write manifest.json plus one TPLG container per stage model.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = self.manifest();
        self.stage1.save(dir.join(&manifest.stage1_file))?;
        for (t, file) in &manifest.stage2_files {
            self.stage2[t].save(dir.join(file))?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest_json()).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Load a model directory written by [`save_dir`], verifying stage
    /// container hashes.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<HierarchicalModel> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let manifest_bytes =
            std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| Error::Container(format!("bad manifest: {e}")))?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Container(format!(
                "unsupported manifest version {}",
                manifest.format_version
            )));
        }
        let stage1 = ModelIndex::load(dir.join(&manifest.stage1_file))?;
        if stage1.content_hash() != manifest.stage1_hash {
            return Err(Error::Container("stage-1 container hash mismatch".into()));
        }
        let mut stage2 = BTreeMap::new();
        for (&t, file) in &manifest.stage2_files {
            let model = ModelIndex::load(dir.join(file))?;
            if model.content_hash() != manifest.stage2_hashes[&t] {
                return Err(Error::Container(format!(
                    "stage-2 container hash mismatch for typology {t}"
                )));
            }
            stage2.insert(t, model);
        }
        Ok(HierarchicalModel {
            best_average: manifest.best_average,
            typologies: Typologies {
                k: manifest.k,
                assignment: manifest.assignments,
                centroids: manifest.centroids,
                inertia: manifest.inertia,
            },
            typology_pipelines: manifest.typology_pipelines,
            f1: manifest.f1_matrix,
            vote_mode: manifest.vote_mode,
            stage1,
            stage2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ViewEntry, ViewSet};
    use crate::imgproc::GrayImage;
    use crate::pipeline::{default_registry, recognize};
    use crate::rng::Rng;
    use std::sync::Arc;

    /// Small in-memory view set: two distinct instances, three bitwise-
    /// identical views each.
    fn tiny_viewset() -> ViewSet {
        let mut entries = Vec::new();
        for (li, base_seed) in [(0u64, 40u64), (1, 41)] {
            let mut rng = Rng::seed_from(base_seed);
            let base = GrayImage::from_fn(128, 128, |_, _| (rng.next_u64() % 256) as u8);
            for v in 0..3u64 {
                entries.push(ViewEntry {
                    image: Arc::new(base.clone()),
                    label: format!("inst{li}"),
                    source: format!("mem://{li}/{v}"),
                });
            }
        }
        ViewSet {
            entries,
            dataset_hash: "tiny".into(),
        }
    }

    #[test]
    fn k1_collapse_to_flat_recognition() {
        let reg = default_registry();
        let views = tiny_viewset();
        let model = train_expert(
            &reg,
            &views,
            TrainOptions {
                k: KChoice::Fixed(1),
                seed: 3,
                vote_mode: StageOneVote::GroupPooling,
            },
        )
        .unwrap();
        assert_eq!(model.typologies.k, 1);
        // The single typology and the overall selection agree.
        assert_eq!(model.typology_pipelines[&0], model.best_average);

        // Flat reference: same pipeline, same training views.
        let spec = reg.get(&model.best_average).unwrap();
        let train: Vec<(GrayImage, String)> = views
            .entries
            .iter()
            .map(|e| ((*e.image).clone(), e.label.clone()))
            .collect();
        let flat = crate::pipeline::build_model(spec, &train).unwrap();

        for e in &views.entries {
            let h = hierarchical_recognize(&model, &e.image).unwrap();
            let f = recognize(&flat, &e.image).unwrap();
            assert_eq!(h.label, f.label, "collapse violated on {}", e.source);
        }
    }

    #[test]
    fn stage2_models_cover_exactly_their_typologies() {
        let reg = default_registry();
        let views = tiny_viewset();
        let model = train_expert(
            &reg,
            &views,
            TrainOptions {
                k: KChoice::Fixed(1),
                seed: 1,
                vote_mode: StageOneVote::GroupPooling,
            },
        )
        .unwrap();
        let mut covered: Vec<String> = Vec::new();
        for (tid, members) in model.typologies.members().iter().enumerate() {
            let stage2 = model.stage2(tid).unwrap();
            let mut labels: Vec<String> = stage2.labels().to_vec();
            labels.sort();
            labels.dedup();
            assert_eq!(&labels, members);
            covered.extend(labels);
        }
        covered.sort();
        assert_eq!(covered, views.labels());
    }

    #[test]
    fn constant_view_falls_back_flagged() {
        let reg = default_registry();
        let views = tiny_viewset();
        let model = train_expert(
            &reg,
            &views,
            TrainOptions {
                k: KChoice::Fixed(1),
                seed: 1,
                vote_mode: StageOneVote::GroupPooling,
            },
        )
        .unwrap();
        let flat_view = GrayImage::constant(128, 128, 50);
        let h = hierarchical_recognize(&model, &flat_view).unwrap();
        // The stage-1 pipeline may be LBP (always one descriptor) in which
        // case matches can exist; only assert the flagged path when stage 1
        // actually found nothing.
        if h.fallback {
            assert_eq!(h.typology, None);
        }
        assert!(h.elapsed_secs > 0.0);
    }

    #[test]
    fn retrain_same_seed_same_hash() {
        let reg = default_registry();
        let views = tiny_viewset();
        let opts = TrainOptions {
            k: KChoice::Fixed(1),
            seed: 9,
            vote_mode: StageOneVote::GroupPooling,
        };
        let m1 = train_expert(&reg, &views, opts).unwrap();
        let m2 = train_expert(&reg, &views, opts).unwrap();
        assert_eq!(m1.model_hash(), m2.model_hash());
    }

    #[test]
    fn save_load_roundtrip_preserves_behavior() {
        let reg = default_registry();
        let views = tiny_viewset();
        let model = train_expert(
            &reg,
            &views,
            TrainOptions {
                k: KChoice::Fixed(1),
                seed: 2,
                vote_mode: StageOneVote::GroupPooling,
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save_dir(dir.path()).unwrap();
        let restored = HierarchicalModel::load_dir(dir.path()).unwrap();
        assert_eq!(restored.best_average, model.best_average);
        assert_eq!(restored.typologies, model.typologies);
        assert_eq!(restored.model_hash(), model.model_hash());
        for e in &views.entries {
            let a = hierarchical_recognize(&model, &e.image).unwrap();
            let b = hierarchical_recognize(&restored, &e.image).unwrap();
            assert_eq!(a.label, b.label);
            assert_eq!(a.typology, b.typology);
        }
    }

    #[test]
    fn fixed_k_bounds_enforced() {
        let reg = default_registry();
        let views = tiny_viewset();
        for bad_k in [0usize, 2, 5] {
            // 2 instances: only K = 1 is valid (K < |Y|).
            let r = train_expert(
                &reg,
                &views,
                TrainOptions {
                    k: KChoice::Fixed(bad_k),
                    seed: 0,
                    vote_mode: StageOneVote::GroupPooling,
                },
            );
            assert!(r.is_err(), "K = {bad_k} should be rejected for 2 instances");
        }
    }
}
