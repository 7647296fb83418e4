//! Match one view against a small model: two-nearest-neighbor search,
//! Lowe ratio filtering, and good-match voting.
//!
//! Run with: cargo run --release --example match_views

use typology::data::{generate, Family, SynthSpec, TransformRanges};
use typology::imgproc::GrayImage;
use typology::pipeline::{build_model, default_registry, recognize};

fn main() {
    let out = std::env::temp_dir().join("typology_example_match");
    let spec = SynthSpec {
        n_instances: 3,
        views_per_instance: 5,
        image_size: 160,
        families: vec![Family::Shape, Family::Shape, Family::Textured],
        transforms: TransformRanges::default(),
        seed: 23,
    };
    let ds = generate(&spec, &out).expect("generation succeeds");
    let views = ds.load_views().expect("views load");

    // Hold the first view of each instance out of the model.
    let train: Vec<(GrayImage, String)> = views
        .entries
        .iter()
        .filter(|e| !e.source.ends_with("v000.pgm"))
        .map(|e| ((*e.image).clone(), e.label.clone()))
        .collect();

    let pipeline = default_registry().get("P2").unwrap().clone();
    let model = build_model(&pipeline, &train).expect("model builds");
    println!(
        "model: {} views, {} descriptors under {}",
        model.views.len(),
        model.total_descriptors(),
        pipeline.id
    );

    for entry in views
        .entries
        .iter()
        .filter(|e| e.source.ends_with("v000.pgm"))
    {
        let rec = recognize(&model, &entry.image).expect("recognition runs");
        println!(
            "query {:>7} -> {:>7} ({} good matches, {:.1} ms) tally {:?}",
            entry.label,
            rec.label,
            rec.tally.total_good,
            rec.elapsed_secs * 1e3,
            rec.tally.counts
        );
    }
}
