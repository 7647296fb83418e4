//! Leave-one-out evaluation of every registry pipeline: the per-instance
//! F1 matrix, the best pipeline per instance and the best on average.
//!
//! Run with: cargo run --release --example evaluate_pipelines

use typology::data::{generate, Family, SynthSpec, TransformRanges};
use typology::eval::{best_overall, best_per_instance, f1_matrix};
use typology::pipeline::default_registry;

fn main() {
    let out = std::env::temp_dir().join("typology_example_eval");
    let spec = SynthSpec {
        n_instances: 4,
        views_per_instance: 6,
        image_size: 160,
        families: vec![
            Family::Textured,
            Family::Shape,
            Family::Textured,
            Family::Shape,
        ],
        transforms: TransformRanges::default(),
        seed: 5,
    };
    let ds = generate(&spec, &out).expect("generation succeeds");
    let views = ds.load_views().expect("views load");

    let registry = default_registry().with_max_keypoints(150);
    let m = f1_matrix(&registry, &views, spec.seed).expect("evaluation runs");

    print!("{:>10}", "instance");
    for p in &m.pipelines {
        print!("{p:>8}");
    }
    println!();
    for (i, label) in m.labels.iter().enumerate() {
        print!("{label:>10}");
        for j in 0..m.pipelines.len() {
            print!("{:>8.3}", m.get(i, j));
        }
        println!();
    }
    print!("{:>10}", "mean");
    for j in 0..m.pipelines.len() {
        print!("{:>8.3}", m.column_mean(j));
    }
    println!("\n");
    for (label, pipeline) in best_per_instance(&m) {
        println!("best for {label}: {pipeline}");
    }
    println!("best on average: {}", best_overall(&m));
}
