//! Two-stage recognition of held-out views: typology first with the best
//! average pipeline, then instance with that typology's own pipeline.
//!
//! Run with: cargo run --release --example hierarchical_recognize

use typology::data::{generate, Family, SynthSpec, TransformRanges};
use typology::expert::{hierarchical_recognize, train_expert, KChoice, StageOneVote, TrainOptions};
use typology::pipeline::default_registry;

fn main() {
    let out = std::env::temp_dir().join("typology_example_hier");
    let spec = SynthSpec {
        n_instances: 4,
        views_per_instance: 8,
        image_size: 160,
        families: vec![
            Family::Textured,
            Family::Shape,
            Family::Textured,
            Family::Shape,
        ],
        transforms: TransformRanges::default(),
        seed: 61,
    };
    let ds = generate(&spec, &out).expect("generation succeeds");
    let views = ds.load_views().expect("views load");

    // Train on everything except each instance's first view.
    let train_idx: Vec<usize> = (0..views.len())
        .filter(|&i| !views.entries[i].source.ends_with("v000.pgm"))
        .collect();
    let train = views.select(&train_idx, format!("{}:train", views.dataset_hash));

    let registry = default_registry().with_max_keypoints(150);
    let model = train_expert(
        &registry,
        &train,
        TrainOptions {
            k: KChoice::Auto,
            seed: spec.seed,
            vote_mode: StageOneVote::GroupPooling,
        },
    )
    .expect("training succeeds");
    println!(
        "best average pipeline {}, K = {}, stage-2 pipelines {:?}\n",
        model.best_average, model.typologies.k, model.typology_pipelines
    );

    for i in 0..views.len() {
        if train_idx.contains(&i) {
            continue;
        }
        let entry = &views.entries[i];
        let rec = hierarchical_recognize(&model, &entry.image).expect("recognition runs");
        let stage = match rec.typology {
            Some(t) => format!("T{t} via {}", model.typology_pipelines[&t]),
            None => "fallback to flat best-average".to_string(),
        };
        println!(
            "true {:>7} -> {:>7}  [{stage}]  stage1 {:.1} ms, stage2 {:.1} ms",
            entry.label,
            rec.label,
            rec.stage1_secs * 1e3,
            rec.stage2_secs * 1e3,
        );
    }
}
