//! Leave-one-out evaluation: confusion matrices, precision/recall/F1,
//! the instances x pipelines F1 matrix, and best-pipeline selection.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ViewSet;
use crate::error::{Error, Result};
use crate::features::{DescriptorSet, Keypoint};
use crate::matching::UNKNOWN_LABEL;
use crate::pipeline::{
    build_model_from_features, classify_features, extract_features, PipelineRegistry, PipelineSpec,
};

/// Confusion counts with predicted rows (labels plus an UNKNOWN row) and
/// actual columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// counts[predicted][actual]; the last predicted row is UNKNOWN.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n + 1],
        }
    }

    fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn add(&mut self, predicted: &str, actual: &str) {
        let col = self
            .label_index(actual)
            .expect("actual label belongs to the dataset");
        let row = self.label_index(predicted).unwrap_or(self.labels.len());
        self.counts[row][col] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn column_sum(&self, col: usize) -> usize {
        self.counts.iter().map(|row| row[col]).sum()
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.counts[row].iter().sum()
    }

    pub fn true_positives(&self, idx: usize) -> usize {
        self.counts[idx][idx]
    }

    /// Views predicted as UNKNOWN (no good matches anywhere).
    pub fn unknown_row(&self) -> &[usize] {
        &self.counts[self.labels.len()]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("predicted\\actual");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            let name = if i < self.labels.len() {
                self.labels[i].as_str()
            } else {
                UNKNOWN_LABEL
            };
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-label precision, recall and F1, plus their mean over labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub labels: Vec<String>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub mean_f1: f64,
}

/// Precision, recall and F1 from a confusion matrix.
///
/// Precision is tp over the predicted row sum (0 for an empty row),
/// recall is tp over the actual column sum, and F1 their harmonic mean
/// with the 0/0 case defined as 0. UNKNOWN predictions depress recall of
/// the true label and are excluded from the label set when averaging.
pub fn prf1(cm: &ConfusionMatrix) -> Prf1 {
    let n = cm.labels.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut f1 = Vec::with_capacity(n);
    for i in 0..n {
        let tp = cm.true_positives(i) as f64;
        let row = cm.row_sum(i) as f64;
        let col = cm.column_sum(i) as f64;
        let p = if row > 0.0 { tp / row } else { 0.0 };
        let r = if col > 0.0 { tp / col } else { 0.0 };
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        precision.push(p);
        recall.push(r);
        f1.push(f);
    }
    let mean_f1 = if n > 0 {
        f1.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    Prf1 {
        labels: cm.labels.clone(),
        precision,
        recall,
        f1,
        mean_f1,
    }
}

/// Report provenance: enough to reproduce the numbers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub registry_hash: String,
    pub seed: u64,
}

/// Instances x pipelines F1 values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Matrix {
    pub labels: Vec<String>,
    pub pipelines: Vec<String>,
    /// Row-major: values[label_idx * pipelines.len() + pipeline_idx].
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl F1Matrix {
    pub fn get(&self, label_idx: usize, pipeline_idx: usize) -> f64 {
        self.values[label_idx * self.pipelines.len() + pipeline_idx]
    }

    pub fn row(&self, label_idx: usize) -> &[f64] {
        let w = self.pipelines.len();
        &self.values[label_idx * w..(label_idx + 1) * w]
    }

    pub fn column_mean(&self, pipeline_idx: usize) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        let sum: f64 = (0..self.labels.len())
            .map(|r| self.get(r, pipeline_idx))
            .sum();
        sum / self.labels.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance");
        for p in &self.pipelines {
            out.push(',');
            out.push_str(p);
        }
        out.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            for j in 0..self.pipelines.len() {
                out.push_str(&format!(",{:.6}", self.get(i, j)));
            }
            out.push('\n');
        }
        out.push_str("MEAN_F1");
        for j in 0..self.pipelines.len() {
            out.push_str(&format!(",{:.6}", self.column_mean(j)));
        }
        out.push('\n');
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("f1 matrix serializes")
    }
}

/// Extracted features shared across LOOCV folds and benchmark cells.
///
/// Keyed by (view source, extraction hash); pipelines that share detector,
/// descriptor and keypoint cap share entries. Evaluation rebuilds only the
/// per-fold search index, never the features, and results are identical
/// with and without the cache.
pub struct FeatureCache {
    map: HashMap<(String, String), Arc<ViewFeatures>>,
}

/// Keypoints plus descriptors extracted from one view.
pub type ViewFeatures = (Vec<Keypoint>, DescriptorSet);

impl FeatureCache {
    pub fn empty() -> Self {
        FeatureCache {
            map: HashMap::new(),
        }
    }

    /// Extract features for every (distinct extraction config) x view.
    pub fn build(specs: &[PipelineSpec], views: &ViewSet) -> Result<FeatureCache> {
        let mut cache = FeatureCache::empty();
        cache.extend(specs, views)?;
        Ok(cache)
    }

    /// Add any missing (config, view) entries.
    pub fn extend(&mut self, specs: &[PipelineSpec], views: &ViewSet) -> Result<()> {
        for spec in specs {
            let ehash = spec.extract_hash();
            let missing: Vec<usize> = (0..views.len())
                .filter(|&i| {
                    !self
                        .map
                        .contains_key(&(views.entries[i].source.clone(), ehash.clone()))
                })
                .collect();
            let extracted: Vec<(usize, (Vec<Keypoint>, DescriptorSet))> = missing
                .par_iter()
                .map(|&i| {
                    let entry = &views.entries[i];
                    extract_features(spec, &entry.image).map(|f| (i, f))
                })
                .collect::<Result<Vec<_>>>()?;
            for (i, features) in extracted {
                self.map.insert(
                    (views.entries[i].source.clone(), ehash.clone()),
                    Arc::new(features),
                );
            }
        }
        Ok(())
    }

    pub fn get(&self, spec: &PipelineSpec, source: &str) -> Option<Arc<ViewFeatures>> {
        self.map
            .get(&(source.to_string(), spec.extract_hash()))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn validate_views_per_instance(views: &ViewSet) -> Result<()> {
    for (label, count) in views.views_per_label() {
        if count < 2 {
            return Err(Error::Dataset(format!(
                "instance {label} has {count} view(s); leave-one-out needs at least 2"
            )));
        }
    }
    Ok(())
}

/// Leave-one-out cross-validation of one pipeline: |X| folds, fold i
/// trains on X minus x_i and classifies x_i.
pub fn loocv_confusion(spec: &PipelineSpec, views: &ViewSet) -> Result<ConfusionMatrix> {
    let cache = FeatureCache::build(std::slice::from_ref(spec), views)?;
    loocv_confusion_cached(spec, views, &cache)
}

/// LOOCV over pre-extracted features; only the search index is rebuilt
/// per fold.
pub fn loocv_confusion_cached(
    spec: &PipelineSpec,
    views: &ViewSet,
    cache: &FeatureCache,
) -> Result<ConfusionMatrix> {
    validate_views_per_instance(views)?;
    let n = views.len();
    let features: Vec<Arc<ViewFeatures>> = views
        .entries
        .iter()
        .map(|e| {
            cache.get(spec, &e.source).ok_or_else(|| {
                Error::InvalidParam(format!("feature cache is missing view {}", e.source))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fold_results: Vec<(String, String)> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<(String, String)> {
            let train: Vec<(String, DescriptorSet)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (views.entries[j].label.clone(), features[j].1.clone()))
                .collect();
            let model = build_model_from_features(spec, train).map_err(|e| Error::EvalFold {
                pipeline: spec.id.clone(),
                fold: i,
                reason: e.to_string(),
            })?;
            let (predicted, _) = classify_features(&model, &features[i].1)?;
            Ok((predicted, views.entries[i].label.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cm = ConfusionMatrix::new(views.labels());
    for (predicted, actual) in fold_results {
        cm.add(&predicted, &actual);
    }
    Ok(cm)
}

/// Run LOOCV for every registry pipeline and collect per-instance F1.
pub fn f1_matrix(registry: &PipelineRegistry, views: &ViewSet, seed: u64) -> Result<F1Matrix> {
    let cache = FeatureCache::build(registry.specs(), views)?;
    f1_matrix_cached(registry, views, seed, &cache)
}

pub fn f1_matrix_cached(
    registry: &PipelineRegistry,
    views: &ViewSet,
    seed: u64,
    cache: &FeatureCache,
) -> Result<F1Matrix> {
    let labels = views.labels();
    let pipelines = registry.ids();
    let mut values = vec![0.0f64; labels.len() * pipelines.len()];
    for (j, spec) in registry.specs().iter().enumerate() {
        let cm = loocv_confusion_cached(spec, views, cache)?;
        let scores = prf1(&cm);
        debug_assert_eq!(scores.labels, labels);
        for (i, &f) in scores.f1.iter().enumerate() {
            values[i * pipelines.len() + j] = f;
        }
    }
    Ok(F1Matrix {
        labels,
        pipelines,
        values,
        provenance: Provenance {
            dataset_hash: views.dataset_hash.clone(),
            registry_hash: registry.registry_hash(),
            seed,
        },
    })
}

/// Best pipeline per instance: row-wise argmax, ties to the earlier
/// pipeline in registry order.
pub fn best_per_instance(m: &F1Matrix) -> std::collections::BTreeMap<String, String> {
    let mut out = std::collections::BTreeMap::new();
    for (i, label) in m.labels.iter().enumerate() {
        let row = m.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        out.insert(label.clone(), m.pipelines[best].clone());
    }
    out
}

/// Best pipeline overall: argmax of column means, ties to the earlier
/// pipeline in registry order.
pub fn best_overall(m: &F1Matrix) -> String {
    let mut best = 0usize;
    let mut best_mean = f64::NEG_INFINITY;
    for j in 0..m.pipelines.len() {
        let mean = m.column_mean(j);
        if mean > best_mean {
            best_mean = mean;
            best = j;
        }
    }
    m.pipelines[best].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ViewEntry, ViewSet};
    use crate::imgproc::GrayImage;
    use crate::pipeline::{build_model, default_registry, recognize};
    use crate::rng::Rng;

    /// The worked 3-instance confusion example: predicted rows
    /// [40,10,0], [0,30,25], [10,10,25] over 150 views.
    fn worked_example() -> ConfusionMatrix {
        let mut cm =
            ConfusionMatrix::new(vec!["object1".into(), "object2".into(), "object3".into()]);
        cm.counts[0] = vec![40, 10, 0];
        cm.counts[1] = vec![0, 30, 25];
        cm.counts[2] = vec![10, 10, 25];
        cm
    }

    #[test]
    fn prf1_on_worked_example() {
        let scores = prf1(&worked_example());
        assert!((scores.precision[0] - 0.8).abs() < 1e-12);
        assert!((scores.recall[0] - 0.8).abs() < 1e-12);
        assert!((scores.f1[0] - 0.8).abs() < 1e-12);
        // Exact fractions: F1_2 = 4/7, F1_3 = 10/19.
        assert!((scores.f1[1] - 4.0 / 7.0).abs() < 1e-12);
        assert!((scores.f1[2] - 10.0 / 19.0).abs() < 1e-12);
        let mean = (0.8 + 4.0 / 7.0 + 10.0 / 19.0) / 3.0;
        assert!((scores.mean_f1 - mean).abs() < 1e-12);
        assert!((scores.mean_f1 - 0.6326).abs() < 5e-5);
    }

    #[test]
    fn perfect_diagonal_gives_all_ones() {
        let mut cm = ConfusionMatrix::new(vec!["a".into(), "b".into()]);
        cm.counts[0] = vec![5, 0];
        cm.counts[1] = vec![0, 7];
        let scores = prf1(&cm);
        assert_eq!(scores.f1, vec![1.0, 1.0]);
        assert_eq!(scores.mean_f1, 1.0);
    }

    #[test]
    fn unknown_predictions_lower_recall_not_precision() {
        let mut cm = ConfusionMatrix::new(vec!["a".into(), "b".into()]);
        cm.add("a", "a");
        cm.add(UNKNOWN_LABEL, "a");
        cm.add("b", "b");
        cm.add("b", "b");
        let scores = prf1(&cm);
        assert_eq!(scores.precision[0], 1.0);
        assert_eq!(scores.recall[0], 0.5);
        assert_eq!(cm.unknown_row(), &[1, 0]);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn f1_zero_when_never_predicted() {
        let mut cm = ConfusionMatrix::new(vec!["a".into(), "b".into()]);
        // Everything predicted as b.
        cm.counts[1] = vec![3, 3];
        let scores = prf1(&cm);
        assert_eq!(scores.f1[0], 0.0);
        assert!(scores.f1[1] > 0.0);
    }

    fn noise_image(seed: u64, n: usize) -> GrayImage {
        let mut rng = Rng::seed_from(seed);
        GrayImage::from_fn(n, n, |_, _| (rng.next_u64() % 256) as u8)
    }

    /// Two strongly distinct instances; every view of an instance is a
    /// bitwise copy of the same image.
    fn copies_viewset(views_per: usize) -> ViewSet {
        let mut entries = Vec::new();
        for (li, base_seed) in [(0usize, 100u64), (1, 900)] {
            let base = noise_image(base_seed, 128);
            for v in 0..views_per {
                entries.push(ViewEntry {
                    image: std::sync::Arc::new(base.clone()),
                    label: format!("inst{li}"),
                    source: format!("mem://copies/{li}/{v}"),
                });
            }
        }
        ViewSet {
            entries,
            dataset_hash: "copies".into(),
        }
    }

    /// Two instances with per-view independent noise images.
    fn noise_viewset(views_per: usize) -> ViewSet {
        let mut entries = Vec::new();
        for li in 0..2usize {
            for v in 0..views_per {
                entries.push(ViewEntry {
                    image: std::sync::Arc::new(noise_image((li as u64 + 1) * 1000 + v as u64, 128)),
                    label: format!("inst{li}"),
                    source: format!("mem://noise/{li}/{v}"),
                });
            }
        }
        ViewSet {
            entries,
            dataset_hash: "noise".into(),
        }
    }

    #[test]
    fn loocv_fold_count_and_conservation() {
        let vs = copies_viewset(2);
        let reg = default_registry();
        let cm = loocv_confusion(reg.get("P3").unwrap(), &vs).unwrap();
        // 2 instances x 2 views = 4 folds.
        assert_eq!(cm.total(), 4);
        for (i, _) in cm.labels.iter().enumerate() {
            assert_eq!(cm.column_sum(i), 2);
        }
    }

    #[test]
    fn distinct_duplicated_instances_give_diagonal() {
        let vs = copies_viewset(3);
        let reg = default_registry();
        for id in ["P3", "P2"] {
            let cm = loocv_confusion(reg.get(id).unwrap(), &vs).unwrap();
            for i in 0..cm.labels.len() {
                assert_eq!(cm.true_positives(i), 3, "pipeline {id}:\n{}", cm.to_csv());
            }
        }
    }

    #[test]
    fn cached_loocv_matches_uncached_reference() {
        let vs = noise_viewset(3);
        let reg = default_registry();
        let spec = reg.get("P2").unwrap();
        let fast = loocv_confusion(spec, &vs).unwrap();

        // Reference path: public build_model + recognize per fold, all
        // features re-extracted from scratch.
        let mut reference = ConfusionMatrix::new(vs.labels());
        for i in 0..vs.len() {
            let train: Vec<(GrayImage, String)> = (0..vs.len())
                .filter(|&j| j != i)
                .map(|j| ((*vs.entries[j].image).clone(), vs.entries[j].label.clone()))
                .collect();
            let model = build_model(spec, &train).unwrap();
            let rec = recognize(&model, &vs.entries[i].image).unwrap();
            reference.add(&rec.label, &vs.entries[i].label);
        }
        assert_eq!(fast, reference);
    }

    #[test]
    fn f1_matrix_shape_and_duplicate_columns() {
        let vs = copies_viewset(2);
        let reg = default_registry();
        let m = f1_matrix(&reg, &vs, 7).unwrap();
        assert_eq!(m.labels.len(), 2);
        assert_eq!(m.pipelines.len(), 6);
        assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)));

        // A re-run is byte-identical.
        let m2 = f1_matrix(&reg, &vs, 7).unwrap();
        assert_eq!(m.to_json(), m2.to_json());
        assert_eq!(m.to_csv(), m2.to_csv());

        // P0 and P5 differ only in matcher strategy, and the kd-tree is
        // exact, so their columns are identical.
        let p0 = m.pipelines.iter().position(|p| p == "P0").unwrap();
        let p5 = m.pipelines.iter().position(|p| p == "P5").unwrap();
        for i in 0..m.labels.len() {
            assert_eq!(m.get(i, p0), m.get(i, p5), "row {i}");
        }
    }

    #[test]
    fn selection_rules() {
        let m = F1Matrix {
            labels: vec!["a".into(), "b".into(), "c".into()],
            pipelines: vec!["P0".into(), "P1".into(), "P2".into()],
            values: vec![
                0.2, 0.9, 0.9, // a: tie between P1 and P2 -> P1
                1.0, 0.0, 0.0, // b: P0
                0.5, 0.5, 0.5, // c: all equal -> P0
            ],
            provenance: Provenance {
                dataset_hash: "d".into(),
                registry_hash: "r".into(),
                seed: 0,
            },
        };
        let best = best_per_instance(&m);
        assert_eq!(best["a"], "P1");
        assert_eq!(best["b"], "P0");
        assert_eq!(best["c"], "P0");

        // Column means: P0 = 0.5666, P1 = 0.4666, P2 = 0.4666.
        assert_eq!(best_overall(&m), "P0");

        // Independent re-maximization of the column-mean objective.
        let oracle = {
            let mut best_j = 0;
            let mut best_v = f64::MIN;
            for j in 0..3 {
                let v: f64 = (0..3).map(|i| m.values[i * 3 + j]).sum::<f64>() / 3.0;
                if v > best_v {
                    best_v = v;
                    best_j = j;
                }
            }
            m.pipelines[best_j].clone()
        };
        assert_eq!(best_overall(&m), oracle);
    }

    #[test]
    fn csv_shapes() {
        let cm = worked_example();
        let csv = cm.to_csv();
        assert!(csv.starts_with("predicted\\actual,object1,object2,object3"));
        assert_eq!(csv.lines().count(), 5); // header + 3 labels + UNKNOWN
    }
}
