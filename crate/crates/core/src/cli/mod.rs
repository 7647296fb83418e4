//! Command-line surface: dataset generation, pipeline evaluation, expert
//! training, single-view recognition, grid benchmarking and report
//! re-rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 evaluation
//! failure.

mod benchmark;
pub mod reports;

pub use benchmark::{
    all_cells_failed, run_benchmark, BenchmarkOptions, BenchmarkRun, OuterProtocol,
};

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{self, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::{best_overall, best_per_instance, f1_matrix, loocv_confusion, prf1};
use crate::expert::{
    hierarchical_recognize, train_expert, HierarchicalModel, KChoice, StageOneVote, TrainOptions,
};
use crate::imgproc::load_image;
use crate::pipeline::{default_registry, PipelineRegistry};

#[derive(Parser)]
#[command(
    name = "typology",
    version,
    about = "Feature-based object recognition with per-typology pipeline selection"
)]
struct Cli {
    /// Master seed for every seeded operation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Cap on parallel worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// JSON file with registry-wide overrides
    /// (e.g. {"max_keypoints":150,"ratio_threshold":0.8}).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Md,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VoteMode {
    Group,
    Instance,
}

impl VoteMode {
    fn to_stage_one(self) -> StageOneVote {
        match self {
            VoteMode::Group => StageOneVote::GroupPooling,
            VoteMode::Instance => StageOneVote::InstanceThenMap,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Outer {
    Split,
    Loocv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a JSON spec.
    Generate {
        /// Path to a SynthSpec JSON file.
        config: PathBuf,
        /// Output dataset directory.
        out: PathBuf,
        /// Overwrite an existing non-empty directory.
        #[arg(long)]
        force: bool,
    },
    /// Leave-one-out evaluation of registry pipelines on a dataset.
    Eval {
        dataset: PathBuf,
        /// Pipeline id, or "all".
        #[arg(long, default_value = "all")]
        pipeline: String,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Train the hierarchical expert and write a model directory.
    Train {
        dataset: PathBuf,
        model_out: PathBuf,
        /// Typology count, or "auto" for the silhouette sweep.
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long, value_enum, default_value_t = VoteMode::Group)]
        vote_mode: VoteMode,
    },
    /// Recognize a single image with a trained model.
    Recognize {
        model: PathBuf,
        image: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
    /// Sweep the p x t subset grid comparing flat vs hierarchical.
    Benchmark {
        dataset: PathBuf,
        /// Output directory for report.{json,csv,md} and f1_matrix.csv.
        #[arg(long)]
        out: PathBuf,
        /// Instance-count range "lo..hi".
        #[arg(long, default_value = "3..7")]
        p_range: String,
        /// Views-per-instance range "lo..hi:step".
        #[arg(long, default_value = "10..50:10")]
        t_range: String,
        #[arg(long, default_value = "auto")]
        k: String,
        #[arg(long, value_enum, default_value_t = VoteMode::Group)]
        vote_mode: VoteMode,
        #[arg(long, value_enum, default_value_t = Outer::Split)]
        outer: Outer,
    },
    /// Re-render a benchmark report.json as Markdown or CSV.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Registry-wide knob overrides accepted via --config.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegistryOverrides {
    max_keypoints: Option<usize>,
    ratio_threshold: Option<f32>,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidParam(_) | Error::Incompatible(_) => 1,
        Error::MissingFile(_)
        | Error::UnsupportedFormat(_)
        | Error::CorruptImage { .. }
        | Error::ImageTooSmall(_)
        | Error::Dataset(_)
        | Error::Config(_)
        | Error::Container(_)
        | Error::Io { .. } => 2,
        Error::ModelBuild { .. } | Error::EvalFold { .. } => 3,
    }
}

/// CLI entry point used by the binary.
pub fn run() -> i32 {
    run_from(std::env::args().collect())
}

/// Testable entry point: parse the given argv and execute.
pub fn run_from(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        // Build the global pool once; later calls fail harmlessly.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn registry_with_overrides(config: Option<&Path>) -> Result<PipelineRegistry> {
    let mut registry = default_registry();
    if let Some(path) = config {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let overrides: RegistryOverrides = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(mk) = overrides.max_keypoints {
            registry = registry.with_max_keypoints(mk);
        }
        if let Some(r) = overrides.ratio_threshold {
            registry = registry.with_ratio_threshold(r);
        }
        for spec in registry.specs() {
            spec.validate()?;
        }
    }
    Ok(registry)
}

fn parse_k(s: &str) -> Result<KChoice> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(KChoice::Auto);
    }
    s.parse::<usize>()
        .map(KChoice::Fixed)
        .map_err(|_| Error::InvalidParam(format!("--k must be a number or \"auto\", got {s}")))
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let err = || Error::InvalidParam(format!("range must look like \"lo..hi\", got {s}"));
    let (lo, hi) = s.split_once("..").ok_or_else(err)?;
    Ok((
        lo.trim().parse().map_err(|_| err())?,
        hi.trim().parse().map_err(|_| err())?,
    ))
}

fn parse_stepped_range(s: &str) -> Result<(usize, usize, usize)> {
    let (range, step) = match s.split_once(':') {
        Some((r, st)) => (
            r,
            st.trim().parse().map_err(|_| {
                Error::InvalidParam(format!("range step must be a number, got {st}"))
            })?,
        ),
        None => (s, 10),
    };
    let (lo, hi) = parse_range(range)?;
    Ok((lo, hi, step))
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { config, out, force } => cmd_generate(config, out, *force, cli.seed),
        Command::Eval {
            dataset,
            pipeline,
            format,
        } => cmd_eval(cli, dataset, pipeline, *format),
        Command::Train {
            dataset,
            model_out,
            k,
            vote_mode,
        } => cmd_train(cli, dataset, model_out, k, *vote_mode),
        Command::Recognize {
            model,
            image,
            format,
        } => cmd_recognize(model, image, *format),
        Command::Benchmark {
            dataset,
            out,
            p_range,
            t_range,
            k,
            vote_mode,
            outer,
        } => cmd_benchmark(cli, dataset, out, p_range, t_range, k, *vote_mode, *outer),
        Command::Report {
            report,
            format,
            out,
        } => cmd_report(report, *format, out.as_deref()),
    }
}

fn cmd_generate(config: &Path, out: &Path, force: bool, seed: u64) -> Result<()> {
    let bytes = std::fs::read(config).map_err(|e| Error::io(config, e))?;
    let mut spec: SynthSpec = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    if seed != 0 {
        spec.seed = seed;
    }
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .map_err(|e| Error::io(out, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::Dataset(format!(
                "output directory {} is not empty (use --force to overwrite)",
                out.display()
            )));
        }
    }
    let ds = data::generate(&spec, out)?;
    println!(
        "generated {} instances, {} views",
        ds.instances.len(),
        ds.total_views()
    );
    println!("dataset_hash {}", ds.content_hash);
    Ok(())
}

fn cmd_eval(cli: &Cli, dataset: &Path, pipeline: &str, format: Format) -> Result<()> {
    let registry = registry_with_overrides(cli.config.as_deref())?;
    let ds = data::load(dataset)?;
    let views = ds.load_views()?;

    if pipeline != "all" {
        let spec = registry
            .get(pipeline)
            .ok_or_else(|| Error::InvalidParam(format!("unknown pipeline id {pipeline}")))?;
        let cm = loocv_confusion(spec, &views)?;
        let scores = prf1(&cm);
        match format {
            Format::Csv => {
                println!("# dataset_hash={}", views.dataset_hash);
                println!("# pipeline={pipeline}");
                print!("{}", cm.to_csv());
            }
            Format::Json => {
                let doc = serde_json::json!({
                    "dataset_hash": views.dataset_hash,
                    "pipeline": pipeline,
                    "confusion": cm,
                    "scores": scores,
                });
                println!(
                    "{}",
                    serde_json::to_string_pretty(&doc).expect("serializes")
                );
            }
            Format::Md => {
                println!("## LOOCV: pipeline {pipeline}\n");
                println!("```\n{}```", cm.to_csv());
                println!("\nmean F1: {:.4}", scores.mean_f1);
            }
        }
        return Ok(());
    }

    let m = f1_matrix(&registry, &views, cli.seed)?;
    let best_each = best_per_instance(&m);
    let best_average = best_overall(&m);
    match format {
        Format::Csv => {
            println!("# dataset_hash={}", m.provenance.dataset_hash);
            println!("# registry_hash={}", m.provenance.registry_hash);
            println!("# seed={}", m.provenance.seed);
            println!("# best_average={best_average}");
            print!("{}", m.to_csv());
        }
        Format::Json => {
            let doc = serde_json::json!({
                "f1_matrix": m,
                "best_per_instance": best_each,
                "best_average": best_average,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).expect("serializes")
            );
        }
        Format::Md => {
            println!("## Per-instance F1 by pipeline\n");
            print!("| instance |");
            for p in &m.pipelines {
                if *p == best_average {
                    print!(" {p} (best avg) |");
                } else {
                    print!(" {p} |");
                }
            }
            println!(" best |");
            print!("|---|");
            for _ in &m.pipelines {
                print!("---|");
            }
            println!("---|");
            for (i, label) in m.labels.iter().enumerate() {
                print!("| {label} |");
                for j in 0..m.pipelines.len() {
                    print!(" {:.3} |", m.get(i, j));
                }
                println!(" {} |", best_each[label]);
            }
            print!("| **mean** |");
            for j in 0..m.pipelines.len() {
                print!(" {:.3} |", m.column_mean(j));
            }
            println!(" |");
            println!("\nbest average pipeline: {best_average}");
            println!(
                "dataset {} registry {}",
                m.provenance.dataset_hash, m.provenance.registry_hash
            );
        }
    }
    Ok(())
}

fn cmd_train(
    cli: &Cli,
    dataset: &Path,
    model_out: &Path,
    k: &str,
    vote_mode: VoteMode,
) -> Result<()> {
    let registry = registry_with_overrides(cli.config.as_deref())?;
    let ds = data::load(dataset)?;
    let views = ds.load_views()?;
    let model = train_expert(
        &registry,
        &views,
        TrainOptions {
            k: parse_k(k)?,
            seed: cli.seed,
            vote_mode: vote_mode.to_stage_one(),
        },
    )?;
    model.save_dir(model_out)?;
    println!("best_average {}", model.best_average);
    println!("k {}", model.typologies.k);
    for (t, members) in model.typologies.members().iter().enumerate() {
        println!(
            "typology T{t}: pipeline {} instances {}",
            model.typology_pipelines[&t],
            members.join(",")
        );
    }
    println!("model_hash {}", model.model_hash());
    println!("written to {}", model_out.display());
    Ok(())
}

fn cmd_recognize(model_dir: &Path, image: &Path, format: Format) -> Result<()> {
    let model = HierarchicalModel::load_dir(model_dir)?;
    let img = load_image(image)?;
    let rec = hierarchical_recognize(&model, &img)?;
    match format {
        Format::Json => {
            let doc = serde_json::json!({
                "label": rec.label,
                "typology": rec.typology,
                "fallback": rec.fallback,
                "stage1_tally": rec.stage1_tally,
                "tally": rec.tally,
                "stage1_secs": rec.stage1_secs,
                "stage2_secs": rec.stage2_secs,
                "elapsed_secs": rec.elapsed_secs,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).expect("serializes")
            );
        }
        _ => {
            println!("label {}", rec.label);
            match rec.typology {
                Some(t) => println!("typology T{t} (pipeline {})", model.typology_pipelines[&t]),
                None => println!("typology none (fallback to flat best-average recognition)"),
            }
            println!(
                "elapsed {:.4}s (stage1 {:.4}s, stage2 {:.4}s)",
                rec.elapsed_secs, rec.stage1_secs, rec.stage2_secs
            );
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_benchmark(
    cli: &Cli,
    dataset: &Path,
    out: &Path,
    p_range: &str,
    t_range: &str,
    k: &str,
    vote_mode: VoteMode,
    outer: Outer,
) -> Result<()> {
    let registry = registry_with_overrides(cli.config.as_deref())?;
    let ds = data::load(dataset)?;
    let opts = BenchmarkOptions {
        p_range: parse_range(p_range)?,
        t_range: parse_stepped_range(t_range)?,
        seed: cli.seed,
        k: parse_k(k)?,
        vote_mode: vote_mode.to_stage_one(),
        outer: match outer {
            Outer::Split => OuterProtocol::Split,
            Outer::Loocv => OuterProtocol::Loocv,
        },
    };
    let run = run_benchmark(&registry, &ds, &opts)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let write = |name: &str, contents: String| -> Result<()> {
        let path = out.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    };
    write("report.json", run.report.to_json())?;
    write("report.csv", run.report.to_csv())?;
    write("report.md", run.report.to_markdown(Some(&run.timing)))?;
    if let Some(f1) = &run.report.largest_cell_f1 {
        let mut csv = format!(
            "# dataset_hash={}\n# registry_hash={}\n# seed={}\n",
            f1.provenance.dataset_hash, f1.provenance.registry_hash, f1.provenance.seed
        );
        csv.push_str(&f1.to_csv());
        write("f1_matrix.csv", csv)?;
    }

    println!("{}", run.report.to_markdown(Some(&run.timing)));
    println!("artifacts in {}", out.display());
    if all_cells_failed(&run.report) {
        return Err(Error::EvalFold {
            pipeline: "benchmark".into(),
            fold: 0,
            reason: "every grid cell failed".into(),
        });
    }
    Ok(())
}

fn cmd_report(report: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(report).map_err(|e| Error::io(report, e))?;
    let parsed = reports::BenchmarkReport::from_json(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", report.display())))?;
    let rendered = match format {
        Format::Md => parsed.to_markdown(None),
        Format::Csv => parsed.to_csv(),
        Format::Json => parsed.to_json(),
    };
    match out {
        Some(path) => std::fs::write(path, rendered).map_err(|e| Error::io(path, e))?,
        None => print!("{rendered}"),
    }
    Ok(())
}
