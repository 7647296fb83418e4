//! Detect keypoints and extract descriptors with each detector/descriptor
//! pairing from the default registry.
//!
//! Run with: cargo run --release --example detect_and_describe

use typology::data::{generate, Family, SynthSpec, TransformRanges};
use typology::features::DescriptorKind;
use typology::pipeline::{default_registry, extract_features};

fn main() {
    let out = std::env::temp_dir().join("typology_example_detect");
    let spec = SynthSpec {
        n_instances: 2,
        views_per_instance: 1,
        image_size: 192,
        families: vec![Family::Textured, Family::Shape],
        transforms: TransformRanges::default(),
        seed: 11,
    };
    let ds = generate(&spec, &out).expect("generation succeeds");
    let views = ds.load_views().expect("views load");

    for entry in &views.entries {
        println!("view {} ({})", entry.source, entry.label);
        for pipeline in default_registry().specs() {
            let (keypoints, descriptors) =
                extract_features(pipeline, &entry.image).expect("extraction succeeds");
            let kind = match descriptors.kind() {
                DescriptorKind::Binary => format!("{} bits", descriptors.width()),
                DescriptorKind::Float => format!("{} dims", descriptors.width()),
            };
            let strongest = keypoints
                .first()
                .map(|k| format!("strongest at ({:.0}, {:.0}) scale {:.1}", k.x, k.y, k.scale))
                .unwrap_or_else(|| "no keypoints".to_string());
            println!(
                "  {:>3}: {:>3} descriptors of {kind:>9}; {strongest}",
                pipeline.id,
                descriptors.len(),
            );
        }
    }
}
