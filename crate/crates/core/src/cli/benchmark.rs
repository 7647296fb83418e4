//! The p x t benchmark grid: per cell, train the expert on a seeded
//! train split and compare hierarchical recognition against the flat
//! best-average pipeline on the held-out views.

use std::collections::{BTreeMap, HashMap};

use super::reports::{BenchmarkReport, CellResult, ReportProvenance, TimingReport};
use crate::data::{self, Dataset, SubsetSpec, ViewEntry, ViewSet};
use crate::error::{Error, Result};
use crate::eval::{prf1, ConfusionMatrix, F1Matrix, FeatureCache};
use crate::expert::{
    hierarchical_recognize, train_expert_cached, KChoice, StageOneVote, TrainOptions,
};
use crate::pipeline::{
    build_model_from_features, recognize, ModelIndex, PipelineRegistry, PipelineSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OuterProtocol {
    /// 80/20 per-instance seeded split (default): fast and leakage-free.
    Split,
    /// Nested leave-one-out around the full training procedure,
    /// clustering included. Faithful but O(|X|^3); for small datasets.
    Loocv,
}

impl OuterProtocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            OuterProtocol::Split => "split",
            OuterProtocol::Loocv => "loocv",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BenchmarkOptions {
    pub p_range: (usize, usize),
    /// (lo, hi, step)
    pub t_range: (usize, usize, usize),
    pub seed: u64,
    pub k: KChoice,
    pub vote_mode: StageOneVote,
    pub outer: OuterProtocol,
}

/// A full benchmark outcome: the rerun-stable report plus wall-clock
/// timing (kept separate so CSV/JSON artifacts stay byte-stable).
pub struct BenchmarkRun {
    pub report: BenchmarkReport,
    pub timing: TimingReport,
}

struct CellOutcome {
    result: CellResult,
    f1: Option<F1Matrix>,
    timing: CellTiming,
}

#[derive(Default)]
struct CellTiming {
    /// pipeline id -> (total secs, views)
    flat: BTreeMap<String, (f64, usize)>,
    /// Flat runs of the cell's own best-average pipeline (total secs, views).
    flat_best: (f64, usize),
    hierarchical_total: f64,
    stage1_total: f64,
    stage2_total: f64,
    hierarchical_views: usize,
    /// Stage-2 pipeline chosen per test view (absent on fallback).
    chosen: Vec<Option<String>>,
}

fn mix_cell_seed(seed: u64, p: usize, t: usize) -> u64 {
    seed ^ (p as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (t as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
}

/// Run the grid. Individual cell failures are recorded in the report and
/// the run continues; the call errors only if setup fails outright.
pub fn run_benchmark(
    registry: &PipelineRegistry,
    ds: &Dataset,
    opts: &BenchmarkOptions,
) -> Result<BenchmarkRun> {
    let (p_lo, p_hi) = opts.p_range;
    let (t_lo, t_hi, t_step) = opts.t_range;
    if p_lo < 2 || p_lo > p_hi || t_lo < 2 || t_lo > t_hi || t_step == 0 {
        return Err(Error::InvalidParam(format!(
            "bad grid ranges p={p_lo}..{p_hi}, t={t_lo}..{t_hi}:{t_step}"
        )));
    }
    if p_hi > ds.instances.len() {
        return Err(Error::InvalidParam(format!(
            "p range reaches {p_hi} but the dataset has {} instances",
            ds.instances.len()
        )));
    }
    let min_views = ds.views.values().map(|v| v.len()).min().unwrap_or(0);
    if t_hi > min_views {
        return Err(Error::InvalidParam(format!(
            "t range reaches {t_hi} but the smallest instance has {min_views} views"
        )));
    }

    // Subsets nest under one seed, so loading and extracting the largest
    // subset once covers every cell.
    let max_subset = data::subset(
        ds,
        &SubsetSpec {
            p: p_hi,
            t: t_hi,
            seed: opts.seed,
        },
    )?;
    let max_views = max_subset.load_views()?;
    let cache = FeatureCache::build(registry.specs(), &max_views)?;
    let by_source: HashMap<&str, &ViewEntry> = max_views
        .entries
        .iter()
        .map(|e| (e.source.as_str(), e))
        .collect();

    let mut cells = Vec::new();
    let mut timing_cells = Vec::new();
    let mut largest_f1: Option<(usize, usize, F1Matrix)> = None;
    for p in p_lo..=p_hi {
        let mut t = t_lo;
        while t <= t_hi {
            let outcome = match run_cell(registry, ds, p, t, opts, &cache, &by_source) {
                Ok(o) => o,
                Err(e) => CellOutcome {
                    result: CellResult::failed(p, t, e.to_string()),
                    f1: None,
                    timing: CellTiming::default(),
                },
            };
            if outcome.result.error.is_none() {
                if let Some(f1) = outcome.f1 {
                    let replace = match &largest_f1 {
                        None => true,
                        Some((bp, bt, _)) => (p, t) >= (*bp, *bt),
                    };
                    if replace {
                        largest_f1 = Some((p, t, f1));
                    }
                }
            }
            cells.push(outcome.result);
            timing_cells.push(outcome.timing);
            t += t_step;
        }
    }

    let timing = aggregate_timing(timing_cells);
    let report = BenchmarkReport {
        provenance: ReportProvenance {
            dataset_hash: ds.content_hash.clone(),
            registry_hash: registry.registry_hash(),
            seed: opts.seed,
            p_range: opts.p_range,
            t_range: opts.t_range,
            outer_protocol: opts.outer.as_str().to_string(),
            k_mode: match opts.k {
                KChoice::Auto => "auto".to_string(),
                KChoice::Fixed(k) => k.to_string(),
            },
            max_keypoints: registry
                .specs()
                .first()
                .map(|s| s.max_keypoints)
                .unwrap_or(0),
        },
        cells,
        largest_cell_f1: largest_f1.map(|(_, _, f1)| f1),
    };
    Ok(BenchmarkRun { report, timing })
}

/// True when every cell failed (the CLI exits nonzero then).
pub fn all_cells_failed(report: &BenchmarkReport) -> bool {
    !report.cells.is_empty() && report.cells.iter().all(|c| c.error.is_some())
}

fn cell_viewset(
    sub: &Dataset,
    by_source: &HashMap<&str, &ViewEntry>,
    hash: String,
) -> Result<ViewSet> {
    let mut entries = Vec::new();
    for label in &sub.instances {
        for path in &sub.views[label] {
            let key = path.to_string_lossy();
            let entry = by_source.get(key.as_ref()).ok_or_else(|| {
                Error::Dataset(format!("cell view {key} missing from the master subset"))
            })?;
            entries.push((*entry).clone());
        }
    }
    Ok(ViewSet {
        entries,
        dataset_hash: hash,
    })
}

fn build_flat_model(
    spec: &PipelineSpec,
    views: &ViewSet,
    cache: &FeatureCache,
) -> Result<ModelIndex> {
    let mut features = Vec::with_capacity(views.len());
    for entry in &views.entries {
        let cached = cache.get(spec, &entry.source).ok_or_else(|| {
            Error::InvalidParam(format!("feature cache is missing view {}", entry.source))
        })?;
        features.push((entry.label.clone(), cached.1.clone()));
    }
    build_model_from_features(spec, features)
}

fn run_cell(
    registry: &PipelineRegistry,
    ds: &Dataset,
    p: usize,
    t: usize,
    opts: &BenchmarkOptions,
    cache: &FeatureCache,
    by_source: &HashMap<&str, &ViewEntry>,
) -> Result<CellOutcome> {
    let sub = data::subset(
        ds,
        &SubsetSpec {
            p,
            t,
            seed: opts.seed,
        },
    )?;
    let views = cell_viewset(&sub, by_source, sub.content_hash.clone())?;
    match opts.outer {
        OuterProtocol::Split => run_cell_split(registry, &sub, views, p, t, opts, cache),
        OuterProtocol::Loocv => run_cell_loocv(registry, &sub, views, p, t, opts, cache),
    }
}

fn split_indices(views: &ViewSet, p: usize, t: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let cell_seed = mix_cell_seed(seed, p, t);
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in views.entries.iter().enumerate() {
        by_label.entry(e.label.as_str()).or_default().push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (li, (_, indices)) in by_label.iter().enumerate() {
        let mut rng = crate::rng::Rng::derive(cell_seed, li as u64);
        let perm = rng.permutation(indices.len());
        let n_test = (indices.len() / 5).max(1);
        for (rank, &pi) in perm.iter().enumerate() {
            if rank < n_test {
                test.push(indices[pi]);
            } else {
                train.push(indices[pi]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn run_cell_split(
    registry: &PipelineRegistry,
    sub: &Dataset,
    views: ViewSet,
    p: usize,
    t: usize,
    opts: &BenchmarkOptions,
    cache: &FeatureCache,
) -> Result<CellOutcome> {
    let (train_idx, test_idx) = split_indices(&views, p, t, opts.seed);
    let train = views.select(&train_idx, format!("{}:train", sub.content_hash));
    let test = views.select(&test_idx, format!("{}:test", sub.content_hash));

    let model = train_expert_cached(
        registry,
        &train,
        TrainOptions {
            k: opts.k,
            seed: opts.seed,
            vote_mode: opts.vote_mode,
        },
        cache,
    )?;

    // Flat models for every pipeline over the same training split: the
    // timing table needs all of them, the score needs the best-average one.
    let mut flat_models: BTreeMap<String, ModelIndex> = BTreeMap::new();
    for spec in registry.specs() {
        flat_models.insert(spec.id.clone(), build_flat_model(spec, &train, cache)?);
    }

    let labels = views.labels();
    let mut timing = CellTiming::default();
    let mut cm_flat = ConfusionMatrix::new(labels.clone());
    let mut cm_ups = ConfusionMatrix::new(labels);
    let mut fallbacks = 0usize;

    for entry in &test.entries {
        for (id, flat) in &flat_models {
            let rec = recognize(flat, &entry.image)?;
            let slot = timing.flat.entry(id.clone()).or_insert((0.0, 0));
            slot.0 += rec.elapsed_secs;
            slot.1 += 1;
            if *id == model.best_average {
                timing.flat_best.0 += rec.elapsed_secs;
                timing.flat_best.1 += 1;
                cm_flat.add(&rec.label, &entry.label);
            }
        }
        let h = hierarchical_recognize(&model, &entry.image)?;
        timing.hierarchical_total += h.elapsed_secs;
        timing.stage1_total += h.stage1_secs;
        timing.stage2_total += h.stage2_secs;
        timing.hierarchical_views += 1;
        if h.fallback {
            fallbacks += 1;
            timing.chosen.push(None);
        } else {
            timing
                .chosen
                .push(h.typology.map(|tid| model.typology_pipelines[&tid].clone()));
        }
        cm_ups.add(&h.label, &entry.label);
    }

    let f1_flat = prf1(&cm_flat).mean_f1;
    let f1_ups = prf1(&cm_ups).mean_f1;
    let winner = if f1_ups > f1_flat {
        "hierarchical"
    } else if f1_flat > f1_ups {
        "best_average"
    } else {
        "tie"
    };
    Ok(CellOutcome {
        result: CellResult {
            p,
            t,
            error: None,
            k: Some(model.typologies.k),
            best_average: Some(model.best_average.clone()),
            typology_pipelines: Some(model.typology_pipelines.clone()),
            f1_best_average: Some(f1_flat),
            f1_hierarchical: Some(f1_ups),
            winner: Some(winner.to_string()),
            fallback_rate: Some(fallbacks as f64 / test.len().max(1) as f64),
        },
        f1: Some(model.f1.clone()),
        timing,
    })
}

fn run_cell_loocv(
    registry: &PipelineRegistry,
    sub: &Dataset,
    views: ViewSet,
    p: usize,
    t: usize,
    opts: &BenchmarkOptions,
    cache: &FeatureCache,
) -> Result<CellOutcome> {
    let labels = views.labels();
    let mut timing = CellTiming::default();
    let mut cm_flat = ConfusionMatrix::new(labels.clone());
    let mut cm_ups = ConfusionMatrix::new(labels);
    let mut fallbacks = 0usize;
    let mut last_model_f1: Option<F1Matrix> = None;
    let mut last_best = String::new();
    let mut last_k = 0usize;
    let mut last_pst: BTreeMap<usize, String> = BTreeMap::new();

    for i in 0..views.len() {
        let train_idx: Vec<usize> = (0..views.len()).filter(|&j| j != i).collect();
        let train = views.select(&train_idx, format!("{}:fold{i}", sub.content_hash));
        let model = train_expert_cached(
            registry,
            &train,
            TrainOptions {
                k: opts.k,
                seed: opts.seed,
                vote_mode: opts.vote_mode,
            },
            cache,
        )
        .map_err(|e| Error::EvalFold {
            pipeline: "expert".into(),
            fold: i,
            reason: e.to_string(),
        })?;
        let entry = &views.entries[i];

        let flat = build_flat_model(
            registry
                .get(&model.best_average)
                .expect("the best-average id comes from the registry"),
            &train,
            cache,
        )?;
        let rec = recognize(&flat, &entry.image)?;
        let slot = timing
            .flat
            .entry(model.best_average.clone())
            .or_insert((0.0, 0));
        slot.0 += rec.elapsed_secs;
        slot.1 += 1;
        timing.flat_best.0 += rec.elapsed_secs;
        timing.flat_best.1 += 1;
        cm_flat.add(&rec.label, &entry.label);

        let h = hierarchical_recognize(&model, &entry.image)?;
        timing.hierarchical_total += h.elapsed_secs;
        timing.stage1_total += h.stage1_secs;
        timing.stage2_total += h.stage2_secs;
        timing.hierarchical_views += 1;
        if h.fallback {
            fallbacks += 1;
            timing.chosen.push(None);
        } else {
            timing
                .chosen
                .push(h.typology.map(|tid| model.typology_pipelines[&tid].clone()));
        }
        cm_ups.add(&h.label, &entry.label);

        last_best = model.best_average.clone();
        last_k = model.typologies.k;
        last_pst = model.typology_pipelines.clone();
        last_model_f1 = Some(model.f1.clone());
    }

    let f1_flat = prf1(&cm_flat).mean_f1;
    let f1_ups = prf1(&cm_ups).mean_f1;
    let winner = if f1_ups > f1_flat {
        "hierarchical"
    } else if f1_flat > f1_ups {
        "best_average"
    } else {
        "tie"
    };
    Ok(CellOutcome {
        result: CellResult {
            p,
            t,
            error: None,
            k: Some(last_k),
            best_average: Some(last_best),
            typology_pipelines: Some(last_pst),
            f1_best_average: Some(f1_flat),
            f1_hierarchical: Some(f1_ups),
            winner: Some(winner.to_string()),
            fallback_rate: Some(fallbacks as f64 / views.len().max(1) as f64),
        },
        f1: last_model_f1,
        timing,
    })
}

fn aggregate_timing(cells: Vec<CellTiming>) -> TimingReport {
    let mut flat_totals: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut flat_best = (0.0f64, 0usize);
    let mut hierarchical_total = 0.0;
    let mut stage1_total = 0.0;
    let mut stage2_total = 0.0;
    let mut views = 0usize;
    let mut chosen: Vec<Option<String>> = Vec::new();
    let mut stage2_used: Vec<String> = Vec::new();
    for cell in cells {
        for (id, (secs, n)) in cell.flat {
            let slot = flat_totals.entry(id).or_insert((0.0, 0));
            slot.0 += secs;
            slot.1 += n;
        }
        flat_best.0 += cell.flat_best.0;
        flat_best.1 += cell.flat_best.1;
        hierarchical_total += cell.hierarchical_total;
        stage1_total += cell.stage1_total;
        stage2_total += cell.stage2_total;
        views += cell.hierarchical_views;
        for c in cell.chosen {
            if let Some(id) = &c {
                stage2_used.push(id.clone());
            }
            chosen.push(c);
        }
    }
    let per_pipeline_mean_secs: BTreeMap<String, f64> = flat_totals
        .iter()
        .map(|(id, (secs, n))| (id.clone(), secs / (*n).max(1) as f64))
        .collect();
    let chosen_mean = {
        let picked: Vec<f64> = chosen
            .iter()
            .flatten()
            .filter_map(|id| per_pipeline_mean_secs.get(id).copied())
            .collect();
        if picked.is_empty() {
            0.0
        } else {
            picked.iter().sum::<f64>() / picked.len() as f64
        }
    };
    stage2_used.sort();
    stage2_used.dedup();
    let max_stage2 = stage2_used
        .iter()
        .filter_map(|id| per_pipeline_mean_secs.get(id).copied())
        .fold(0.0f64, f64::max);

    // The best-average pipeline can differ across cells; this is the
    // mean over every flat run of the owning cell's pick.
    let best_average_mean = if flat_best.1 > 0 {
        flat_best.0 / flat_best.1 as f64
    } else {
        0.0
    };

    TimingReport {
        per_pipeline_mean_secs,
        hierarchical_mean_secs: if views > 0 {
            hierarchical_total / views as f64
        } else {
            0.0
        },
        stage1_mean_secs: if views > 0 {
            stage1_total / views as f64
        } else {
            0.0
        },
        stage2_mean_secs: if views > 0 {
            stage2_total / views as f64
        } else {
            0.0
        },
        chosen_stage2_pipeline_mean_secs: chosen_mean,
        best_average_mean_secs: best_average_mean,
        max_stage2_pipeline_mean_secs: max_stage2,
        views_timed: views,
    }
}
