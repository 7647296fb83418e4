//! Benchmark report structures and emitters.
//!
//! Scores and provenance go into CSV and JSON, which must be byte-stable
//! across reruns with equal inputs. Wall-clock timing is inherently
//! unstable, so it only ever appears in the Markdown rendering and on
//! stdout, never in the CSV/JSON artifacts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::eval::F1Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub dataset_hash: String,
    pub registry_hash: String,
    pub seed: u64,
    pub p_range: (usize, usize),
    pub t_range: (usize, usize, usize),
    pub outer_protocol: String,
    pub k_mode: String,
    pub max_keypoints: usize,
}

/// One (p, t) grid cell: both recognizer scores on the held-out views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub p: usize,
    pub t: usize,
    /// Error text when the cell failed; scores are absent then.
    pub error: Option<String>,
    pub k: Option<usize>,
    pub best_average: Option<String>,
    pub typology_pipelines: Option<BTreeMap<usize, String>>,
    pub f1_best_average: Option<f64>,
    pub f1_hierarchical: Option<f64>,
    /// "hierarchical", "best_average" or "tie".
    pub winner: Option<String>,
    /// Share of test views where stage 1 fell back to flat recognition.
    pub fallback_rate: Option<f64>,
}

impl CellResult {
    pub fn failed(p: usize, t: usize, error: String) -> Self {
        CellResult {
            p,
            t,
            error: Some(error),
            k: None,
            best_average: None,
            typology_pipelines: None,
            f1_best_average: None,
            f1_hierarchical: None,
            winner: None,
            fallback_rate: None,
        }
    }
}

/// The deterministic part of a benchmark run (everything but timing).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub provenance: ReportProvenance,
    pub cells: Vec<CellResult>,
    /// Inner training F1 matrix of the largest successful cell: the
    /// per-pipeline, per-instance profile the typologies were built from.
    pub largest_cell_f1: Option<F1Matrix>,
}

/// Wall-clock summary, reported in Markdown/stdout only.
#[derive(Clone, Debug, Default)]
pub struct TimingReport {
    /// Mean seconds per view of flat recognition, per pipeline.
    pub per_pipeline_mean_secs: BTreeMap<String, f64>,
    pub hierarchical_mean_secs: f64,
    pub stage1_mean_secs: f64,
    pub stage2_mean_secs: f64,
    /// Mean flat time of the stage-2 pipeline actually chosen per view.
    pub chosen_stage2_pipeline_mean_secs: f64,
    /// Mean flat time of the stage-1 (best-average) pipeline.
    pub best_average_mean_secs: f64,
    /// Max over typologies of the mean flat time of the typology's pipeline.
    pub max_stage2_pipeline_mean_secs: f64,
    pub views_timed: usize,
}

impl TimingReport {
    /// Decomposition bound: mean hierarchical time should land in
    /// [max(stage-1 flat time, chosen stage-2 flat time),
    ///  1.25 * (stage-1 flat time + slowest stage-2 flat time)].
    pub fn bounds(&self) -> (f64, f64) {
        let lo = self
            .best_average_mean_secs
            .max(self.chosen_stage2_pipeline_mean_secs);
        let hi = 1.25 * (self.best_average_mean_secs + self.max_stage2_pipeline_mean_secs);
        (lo, hi)
    }

    pub fn within_bounds(&self) -> bool {
        let (lo, hi) = self.bounds();
        self.hierarchical_mean_secs >= lo && self.hierarchical_mean_secs <= hi
    }
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn provenance_comments(&self) -> String {
        let p = &self.provenance;
        format!(
            "# dataset_hash={}\n# registry_hash={}\n# seed={}\n# p_range={}..{}\n# t_range={}..{}:{}\n# outer={}\n# k={}\n# max_keypoints={}\n",
            p.dataset_hash,
            p.registry_hash,
            p.seed,
            p.p_range.0,
            p.p_range.1,
            p.t_range.0,
            p.t_range.1,
            p.t_range.2,
            p.outer_protocol,
            p.k_mode,
            p.max_keypoints,
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.provenance_comments();
        out.push_str(
            "p,t,k,best_average,f1_best_average,f1_hierarchical,winner,fallback_rate,error\n",
        );
        for c in &self.cells {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.p,
                c.t,
                c.k.map(|k| k.to_string()).unwrap_or_default(),
                c.best_average.clone().unwrap_or_default(),
                fmt(c.f1_best_average),
                fmt(c.f1_hierarchical),
                c.winner.clone().unwrap_or_default(),
                fmt(c.fallback_rate),
                c.error.clone().unwrap_or_default().replace(',', ";"),
            ));
        }
        out
    }

    fn t_values(&self) -> Vec<usize> {
        let (lo, hi, step) = self.provenance.t_range;
        let mut out = Vec::new();
        let mut t = lo;
        while t <= hi {
            out.push(t);
            t += step;
        }
        out
    }

    fn cell(&self, p: usize, t: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.p == p && c.t == t)
    }

    /// Markdown rendering: a pivot table with the per-cell winner in
    /// bold, optionally followed by the timing section.
    pub fn to_markdown(&self, timing: Option<&TimingReport>) -> String {
        let mut out = String::new();
        out.push_str("# Benchmark: flat best-average pipeline vs hierarchical recognizer\n\n");
        let p = &self.provenance;
        out.push_str(&format!(
            "- dataset `{}`\n- registry `{}`\n- seed {}\n- outer protocol: {}\n- K: {}\n- max keypoints: {}\n\n",
            p.dataset_hash, p.registry_hash, p.seed, p.outer_protocol, p.k_mode, p.max_keypoints
        ));

        let ts = self.t_values();
        out.push_str("| p \\ t |");
        for t in &ts {
            out.push_str(&format!(" {t} (flat) | {t} (hier) |"));
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &ts {
            out.push_str("---|---|");
        }
        out.push('\n');
        for pp in p.p_range.0..=p.p_range.1 {
            out.push_str(&format!("| {pp} |"));
            for t in &ts {
                match self.cell(pp, *t) {
                    Some(c) if c.error.is_none() => {
                        let flat = c.f1_best_average.unwrap_or(0.0);
                        let ups = c.f1_hierarchical.unwrap_or(0.0);
                        let (fs, us) = match c.winner.as_deref() {
                            Some("hierarchical") => (format!("{flat:.3}"), format!("**{ups:.3}**")),
                            Some("best_average") => (format!("**{flat:.3}**"), format!("{ups:.3}")),
                            _ => (format!("{flat:.3}"), format!("{ups:.3}")),
                        };
                        out.push_str(&format!(" {fs} | {us} |"));
                    }
                    Some(_) => out.push_str(" err | err |"),
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');

        let ok_cells: Vec<&CellResult> = self.cells.iter().filter(|c| c.error.is_none()).collect();
        if !ok_cells.is_empty() {
            let mean_flat: f64 = ok_cells
                .iter()
                .filter_map(|c| c.f1_best_average)
                .sum::<f64>()
                / ok_cells.len() as f64;
            let mean_ups: f64 = ok_cells
                .iter()
                .filter_map(|c| c.f1_hierarchical)
                .sum::<f64>()
                / ok_cells.len() as f64;
            out.push_str(&format!(
                "Grid means: flat best-average {mean_flat:.4}, hierarchical {mean_ups:.4}.\n\n"
            ));
        }
        for c in &self.cells {
            if let Some(e) = &c.error {
                out.push_str(&format!("- cell ({}, {}) failed: {e}\n", c.p, c.t));
            }
        }

        if let Some(t) = timing {
            out.push_str("\n## Timing (mean seconds per view; wall clock, not rerun-stable)\n\n");
            out.push_str("| pipeline | mean s/view |\n|---|---|\n");
            for (id, secs) in &t.per_pipeline_mean_secs {
                out.push_str(&format!("| {id} | {secs:.4} |\n"));
            }
            out.push_str(&format!(
                "| hierarchical (Y) | {:.4} |\n",
                t.hierarchical_mean_secs
            ));
            out.push_str(&format!(
                "\nStage split: stage1 {:.4}, stage2 {:.4}. ",
                t.stage1_mean_secs, t.stage2_mean_secs
            ));
            let (lo, hi) = t.bounds();
            out.push_str(&format!(
                "Decomposition bound [{lo:.4}, {hi:.4}]: {}.\n",
                if t.within_bounds() {
                    "within"
                } else {
                    "OUTSIDE"
                }
            ));
        }
        out
    }
}
