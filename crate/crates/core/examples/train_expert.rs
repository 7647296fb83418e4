//! Train the hierarchical expert: cluster instances into typologies by
//! their pipeline-performance profiles, pick per-typology pipelines, and
//! save the two-stage model to disk.
//!
//! Run with: cargo run --release --example train_expert

use typology::data::{generate, Family, SynthSpec, TransformRanges};
use typology::expert::{train_expert, KChoice, StageOneVote, TrainOptions};
use typology::pipeline::default_registry;

fn main() {
    let out = std::env::temp_dir().join("typology_example_train");
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
        seed: 29,
    };
    let ds = generate(&spec, &out).expect("generation succeeds");
    let views = ds.load_views().expect("views load");

    let registry = default_registry().with_max_keypoints(150);
    let model = train_expert(
        &registry,
        &views,
        TrainOptions {
            k: KChoice::Auto,
            seed: spec.seed,
            vote_mode: StageOneVote::GroupPooling,
        },
    )
    .expect("training succeeds");

    println!("best average pipeline: {}", model.best_average);
    println!("typologies (K = {}):", model.typologies.k);
    for (t, members) in model.typologies.members().iter().enumerate() {
        println!(
            "  T{t} -> pipeline {:>3}, instances {}",
            model.typology_pipelines[&t],
            members.join(", ")
        );
    }

    let model_dir = std::env::temp_dir().join("typology_example_model");
    model.save_dir(&model_dir).expect("model saves");
    println!("model hash {}", model.model_hash());
    println!("saved to {}", model_dir.display());
}
