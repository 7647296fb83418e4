//! Recognition pipelines: detector + descriptor + matcher triples, the
//! pipeline registry, per-pipeline model indexes and single-view
//! recognition.

mod container;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    brief_describe, dog_detect, fast_detect, gradhist_describe, lbp_describe, orient,
    steered_brief_describe, DescriptorConfig, DescriptorSet, DetectorConfig, Keypoint,
};
use crate::imgproc::GrayImage;
use crate::matching::{
    ratio_filter, vote, MatcherConfig, Metric, SearchIndex, VoteTally, UNKNOWN_LABEL,
};

/// Default cap on keypoints per view; bounds matching cost.
pub const DEFAULT_MAX_KEYPOINTS: usize = 500;

/// A complete recognition pipeline configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub id: String,
    pub detector: DetectorConfig,
    pub descriptor: DescriptorConfig,
    pub matcher: MatcherConfig,
    pub max_keypoints: usize,
}

impl PipelineSpec {
    pub fn validate(&self) -> Result<()> {
        self.descriptor.validate()?;
        self.matcher.validate()?;
        let global = self.descriptor.is_global();
        let no_detector = matches!(self.detector, DetectorConfig::None);
        if global != no_detector {
            return Err(Error::Incompatible(format!(
                "pipeline {}: a detector-less pipeline requires a global descriptor (and vice versa)",
                self.id
            )));
        }
        if !self.matcher.compatible_with(self.descriptor.kind()) {
            return Err(Error::Incompatible(format!(
                "pipeline {}: {:?} metric does not match {:?} descriptors",
                self.id,
                self.matcher.metric,
                self.descriptor.kind()
            )));
        }
        if self.max_keypoints == 0 {
            return Err(Error::InvalidParam(format!(
                "pipeline {}: max_keypoints must be >= 1",
                self.id
            )));
        }
        Ok(())
    }

    /// Canonical JSON form used for config files and hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("pipeline spec serializes")
    }

    pub fn config_hash(&self) -> String {
        hex_sha256(self.canonical_json().as_bytes())
    }

    /// Hash of everything that affects feature extraction (detector,
    /// descriptor, keypoint cap) but not matching. Pipelines that share
    /// this hash can share extracted features.
    pub fn extract_hash(&self) -> String {
        let key = serde_json::to_string(&(&self.detector, &self.descriptor, self.max_keypoints))
            .expect("extract key serializes");
        hex_sha256(key.as_bytes())
    }
}

pub(crate) fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Ordered collection of pipelines with unique ids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineRegistry {
    specs: Vec<PipelineSpec>,
}

impl PipelineRegistry {
    pub fn new(specs: Vec<PipelineSpec>) -> Result<Self> {
        if specs.len() < 2 {
            return Err(Error::InvalidParam(
                "a registry needs at least 2 pipelines".into(),
            ));
        }
        for spec in &specs {
            spec.validate()?;
        }
        let mut ids: Vec<&str> = specs.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != specs.len() {
            return Err(Error::InvalidParam(
                "registry pipeline ids must be unique".into(),
            ));
        }
        Ok(PipelineRegistry { specs })
    }

    pub fn specs(&self) -> &[PipelineSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&PipelineSpec> {
        self.specs.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.id.clone()).collect()
    }

    pub fn registry_hash(&self) -> String {
        let joined: String = self.specs.iter().map(|s| s.canonical_json()).collect();
        hex_sha256(joined.as_bytes())
    }

    /// Apply a uniform keypoint cap to every pipeline. Smaller caps trade
    /// recognition quality for matching speed.
    pub fn with_max_keypoints(mut self, max_keypoints: usize) -> Self {
        for spec in &mut self.specs {
            spec.max_keypoints = max_keypoints;
        }
        self
    }

    /// Apply a uniform Lowe ratio threshold to every pipeline.
    pub fn with_ratio_threshold(mut self, r: f32) -> Self {
        for spec in &mut self.specs {
            spec.matcher.ratio_threshold = r;
        }
        self
    }
}

/// The built-in six-pipeline registry: float, binary and global
/// descriptor families, brute-force and kd-tree matchers.
pub fn default_registry() -> PipelineRegistry {
    let fast = DetectorConfig::Fast {
        threshold: 20,
        nms: true,
    };
    let dog = DetectorConfig::Dog {
        contrast_threshold: 0.03,
        edge_ratio: 10.0,
        octaves: 4,
        scales_per_octave: 3,
    };
    let brief = DescriptorConfig::Brief {
        n_bits: 256,
        patch_size: 31,
        sampling_seed: 0x5eed_b41f,
    };
    let steered = DescriptorConfig::SteeredBrief {
        n_bits: 256,
        patch_size: 31,
        sampling_seed: 0x5eed_b41f,
    };
    let lbp = DescriptorConfig::Lbp {
        radius: 1,
        neighbors: 8,
        grid: 4,
    };
    let gradhist = DescriptorConfig::GradHist { grid: 4, bins: 8 };

    let spec =
        |id: &str, det: DetectorConfig, desc: DescriptorConfig, mat: MatcherConfig| PipelineSpec {
            id: id.to_string(),
            detector: det,
            descriptor: desc,
            matcher: mat,
            max_keypoints: DEFAULT_MAX_KEYPOINTS,
        };

    PipelineRegistry::new(vec![
        spec(
            "P0",
            dog.clone(),
            gradhist.clone(),
            MatcherConfig::brute(Metric::L2),
        ),
        spec(
            "P1",
            dog.clone(),
            brief.clone(),
            MatcherConfig::brute(Metric::Hamming),
        ),
        spec(
            "P2",
            fast.clone(),
            steered,
            MatcherConfig::brute(Metric::Hamming),
        ),
        spec(
            "P3",
            DetectorConfig::None,
            lbp,
            MatcherConfig::brute(Metric::L2),
        ),
        spec("P4", fast, brief, MatcherConfig::brute(Metric::Hamming)),
        spec("P5", dog, gradhist, MatcherConfig::kdtree(Metric::L2)),
    ])
    .expect("default registry is valid")
}

/// Detect and describe one view under a pipeline's configuration.
///
/// Orientation is assigned only when the descriptor consumes angles;
/// global descriptors skip detection entirely.
pub fn extract_features(
    spec: &PipelineSpec,
    img: &GrayImage,
) -> Result<(Vec<Keypoint>, DescriptorSet)> {
    spec.validate()?;
    let keypoints = match &spec.detector {
        DetectorConfig::Fast { threshold, nms } => {
            fast_detect(img, *threshold, *nms, spec.max_keypoints)?
        }
        DetectorConfig::Dog { .. } => dog_detect(img, &spec.detector, spec.max_keypoints)?,
        DetectorConfig::None => Vec::new(),
    };
    let keypoints = if spec.descriptor.needs_angle() {
        orient(img, &keypoints)
    } else {
        keypoints
    };
    let descriptors = match &spec.descriptor {
        DescriptorConfig::Brief { .. } => brief_describe(img, &keypoints, &spec.descriptor)?,
        DescriptorConfig::SteeredBrief { .. } => {
            steered_brief_describe(img, &keypoints, &spec.descriptor)?
        }
        DescriptorConfig::Lbp { .. } => lbp_describe(img, &spec.descriptor)?,
        DescriptorConfig::GradHist { .. } => gradhist_describe(img, &keypoints, &spec.descriptor)?,
    };
    let kept = descriptors.keypoints.clone();
    Ok((kept, descriptors))
}

/// Features of one training view inside a model.
#[derive(Clone, Debug)]
pub struct ViewRecord {
    pub label: String,
    pub descriptors: DescriptorSet,
}

/// A per-pipeline search structure over all training views.
pub struct ModelIndex {
    pub spec: PipelineSpec,
    pub views: Vec<ViewRecord>,
    /// Label of view i (parallel to `views`).
    labels: Vec<String>,
    /// Flat descriptor index -> view index.
    desc_to_view: Vec<usize>,
    index: Option<SearchIndex>,
    total_descriptors: usize,
}

impl ModelIndex {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn total_descriptors(&self) -> usize {
        self.total_descriptors
    }

    /// Views that contributed zero descriptors (kept for bookkeeping).
    pub fn empty_views(&self) -> usize {
        self.views
            .iter()
            .filter(|v| v.descriptors.is_empty())
            .count()
    }
}

/// Build a model index by extracting features from every training view.
pub fn build_model(spec: &PipelineSpec, train_views: &[(GrayImage, String)]) -> Result<ModelIndex> {
    if train_views.len() < 2 {
        return Err(Error::InvalidParam(format!(
            "pipeline {}: model building needs at least 2 training views, got {}",
            spec.id,
            train_views.len()
        )));
    }
    let mut distinct: Vec<&str> = train_views.iter().map(|(_, l)| l.as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        eprintln!(
            "warning: building model for pipeline {} with a single label; recognition can only ever answer {:?}",
            spec.id, distinct
        );
    }
    let mut features = Vec::with_capacity(train_views.len());
    for (img, label) in train_views {
        let (_, descriptors) = extract_features(spec, img)?;
        features.push((label.clone(), descriptors));
    }
    build_model_from_features(spec, features)
}

/// Assemble a model from already-extracted per-view descriptors.
pub(crate) fn build_model_from_features(
    spec: &PipelineSpec,
    features: Vec<(String, DescriptorSet)>,
) -> Result<ModelIndex> {
    use crate::features::DescriptorPayload;

    let total: usize = features.iter().map(|(_, d)| d.len()).sum();
    if total == 0 {
        return Err(Error::ModelBuild {
            pipeline: spec.id.clone(),
            reason: "every training view yielded zero descriptors".into(),
        });
    }

    let width = spec.descriptor.width();
    let mut desc_to_view = Vec::with_capacity(total);
    let payload = match spec.descriptor.kind() {
        crate::features::DescriptorKind::Binary => {
            let mut data = Vec::with_capacity(total * width / 8);
            for (vi, (_, set)) in features.iter().enumerate() {
                if let DescriptorPayload::Binary { data: d, .. } = &set.payload {
                    data.extend_from_slice(d);
                }
                desc_to_view.extend(std::iter::repeat_n(vi, set.len()));
            }
            DescriptorPayload::Binary { bits: width, data }
        }
        crate::features::DescriptorKind::Float => {
            let mut data = Vec::with_capacity(total * width);
            for (vi, (_, set)) in features.iter().enumerate() {
                if let DescriptorPayload::Float { data: d, .. } = &set.payload {
                    data.extend_from_slice(d);
                }
                desc_to_view.extend(std::iter::repeat_n(vi, set.len()));
            }
            DescriptorPayload::Float { dims: width, data }
        }
    };

    let index = if total >= 2 {
        Some(SearchIndex::build(&spec.matcher, &payload, total)?)
    } else {
        None
    };

    let labels: Vec<String> = features.iter().map(|(l, _)| l.clone()).collect();
    let views: Vec<ViewRecord> = features
        .into_iter()
        .map(|(label, descriptors)| ViewRecord { label, descriptors })
        .collect();

    Ok(ModelIndex {
        spec: spec.clone(),
        views,
        labels,
        desc_to_view,
        index,
        total_descriptors: total,
    })
}

/// Outcome of recognizing one view.
#[derive(Clone, Debug)]
pub struct Recognition {
    pub label: String,
    pub tally: VoteTally,
    /// Wall-clock seconds for the full detect/describe/match/vote chain.
    pub elapsed_secs: f64,
}

/// Classify already-extracted query descriptors against a model.
pub(crate) fn classify_features(
    model: &ModelIndex,
    query: &DescriptorSet,
) -> Result<(String, VoteTally)> {
    if query.is_empty() || model.total_descriptors < 2 {
        return Ok((UNKNOWN_LABEL.to_string(), VoteTally::empty()));
    }
    let index = model.index.as_ref().expect("index exists when total >= 2");
    let neighbors = index.knn2(query)?;
    let good = ratio_filter(
        &neighbors,
        model.spec.matcher.ratio_threshold,
        &model.desc_to_view,
    );
    let tally = vote(&good, &model.labels);
    Ok((tally.winner.clone(), tally))
}

/// Run the full recognition chain on one view: detect, describe, match
/// with two nearest neighbors, ratio-filter, vote.
pub fn recognize(model: &ModelIndex, view: &GrayImage) -> Result<Recognition> {
    let start = Instant::now();
    let (_, descriptors) = extract_features(&model.spec, view)?;
    let (label, tally) = classify_features(model, &descriptors)?;
    Ok(Recognition {
        label,
        tally,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn registry_has_six_compatible_pipelines() {
        let reg = default_registry();
        assert_eq!(reg.len(), 6);
        for spec in reg.specs() {
            spec.validate().unwrap();
        }
        // P3 is the detector-less global pipeline.
        let p3 = reg.get("P3").unwrap();
        assert!(matches!(p3.detector, DetectorConfig::None));
        assert!(p3.descriptor.is_global());
        // P2 matches binary descriptors under Hamming.
        let p2 = reg.get("P2").unwrap();
        assert_eq!(p2.matcher.metric, Metric::Hamming);
        // The good-match ratio threshold defaults to 0.8 everywhere.
        for spec in reg.specs() {
            assert_eq!(spec.matcher.ratio_threshold, 0.8, "pipeline {}", spec.id);
        }
        // P0 and P5 share extraction but not matching strategy.
        let p0 = reg.get("P0").unwrap();
        let p5 = reg.get("P5").unwrap();
        assert_eq!(p0.extract_hash(), p5.extract_hash());
        assert_ne!(p0.config_hash(), p5.config_hash());
    }

    #[test]
    fn invalid_combinations_rejected() {
        let mut spec = default_registry().get("P2").unwrap().clone();
        spec.matcher = MatcherConfig::brute(Metric::L2);
        assert!(spec.validate().is_err());

        let mut spec = default_registry().get("P3").unwrap().clone();
        spec.detector = DetectorConfig::Fast {
            threshold: 20,
            nms: true,
        };
        assert!(spec.validate().is_err());
    }

    fn textured_view(seed: u64, n: usize) -> GrayImage {
        let mut rng = Rng::seed_from(seed);
        GrayImage::from_fn(n, n, |_, _| (rng.next_u64() % 256) as u8)
    }

    fn train_pair() -> Vec<(GrayImage, String)> {
        vec![
            (textured_view(1, 160), "a".to_string()),
            (textured_view(2, 160), "a".to_string()),
            (textured_view(10, 160), "b".to_string()),
            (textured_view(11, 160), "b".to_string()),
        ]
    }

    #[test]
    fn recognize_identical_view_and_constant_view() {
        let reg = default_registry();
        for id in ["P2", "P3"] {
            let spec = reg.get(id).unwrap();
            let train = train_pair();
            let model = build_model(spec, &train).unwrap();

            // A training view must recognize as its own label.
            let rec = recognize(&model, &train[0].0).unwrap();
            assert_eq!(rec.label, "a", "pipeline {id}");
            assert!(rec.elapsed_secs > 0.0 && rec.elapsed_secs.is_finite());

            // A constant view has no features anywhere.
            let flat = GrayImage::constant(128, 128, 99);
            let rec = recognize(&model, &flat).unwrap();
            if id == "P2" {
                assert_eq!(rec.label, UNKNOWN_LABEL, "pipeline {id}");
                assert_eq!(rec.tally.total_good, 0);
            }
        }
    }

    #[test]
    fn blank_training_views_tolerated_until_all_blank() {
        let reg = default_registry();
        let spec = reg.get("P2").unwrap();
        let mut train = train_pair();
        train.push((GrayImage::constant(128, 128, 7), "a".to_string()));
        let model = build_model(spec, &train).unwrap();
        assert_eq!(model.empty_views(), 1);

        let all_blank: Vec<(GrayImage, String)> = (0..3)
            .map(|i| (GrayImage::constant(128, 128, 50), format!("l{i}")))
            .collect();
        assert!(matches!(
            build_model(spec, &all_blank),
            Err(Error::ModelBuild { .. })
        ));
    }

    #[test]
    fn model_capacity_bound() {
        let reg = default_registry();
        let spec = reg.get("P4").unwrap();
        let train = train_pair();
        let model = build_model(spec, &train).unwrap();
        assert!(model.total_descriptors() <= train.len() * spec.max_keypoints);
    }

    #[test]
    fn recognition_deterministic() {
        let reg = default_registry();
        let spec = reg.get("P2").unwrap();
        let train = train_pair();
        let probe = textured_view(1, 128);
        let m1 = build_model(spec, &train).unwrap();
        let m2 = build_model(spec, &train).unwrap();
        let r1 = recognize(&m1, &probe).unwrap();
        let r2 = recognize(&m2, &probe).unwrap();
        assert_eq!(r1.label, r2.label);
        assert_eq!(r1.tally, r2.tally);
    }
}
