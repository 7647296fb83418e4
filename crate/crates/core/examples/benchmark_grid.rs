//! Sweep a small p x t subset grid and compare the flat best-average
//! pipeline against the hierarchical recognizer, mirroring the table
//! produced by the `benchmark` subcommand.
//!
//! Run with: cargo run --release --example benchmark_grid

use typology::cli::{run_benchmark, BenchmarkOptions, OuterProtocol};
use typology::data::{generate, Family, SynthSpec, TransformRanges};
use typology::expert::{KChoice, StageOneVote};
use typology::pipeline::default_registry;

fn main() {
    let out = std::env::temp_dir().join("typology_example_bench");
    let spec = SynthSpec {
        n_instances: 5,
        views_per_instance: 12,
        image_size: 160,
        families: vec![
            Family::Textured,
            Family::Shape,
            Family::Textured,
            Family::Shape,
            Family::Mixed,
        ],
        transforms: TransformRanges::default(),
        seed: 3,
    };
    let ds = generate(&spec, &out).expect("generation succeeds");

    let registry = default_registry().with_max_keypoints(120);
    let run = run_benchmark(
        &registry,
        &ds,
        &BenchmarkOptions {
            p_range: (3, 5),
            t_range: (6, 12, 6),
            seed: spec.seed,
            k: KChoice::Auto,
            vote_mode: StageOneVote::GroupPooling,
            outer: OuterProtocol::Split,
        },
    )
    .expect("benchmark runs");

    println!("{}", run.report.to_markdown(Some(&run.timing)));
}
