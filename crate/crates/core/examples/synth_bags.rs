//! Generates a small synthetic dataset, writes it to disk and reads it back.
//!
//! cargo run --example synth_bags [out_dir]

use sevmil::bag::{read_dataset, write_dataset};
use sevmil::hierarchy::Hierarchy;
use sevmil::synth::{generate, CenterLayout, Centers, SynthSpec};

fn main() -> sevmil::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("sevmil-synth"), Into::into);
    let h = Hierarchy::chains(&[2, 3], &[vec![0, 0, 1]])?;
    let spec = SynthSpec {
        feature_dim: 8,
        instances_min: 4,
        instances_max: 12,
        class_centers: Centers::Generated(CenterLayout::Chain {
            spacing: 2.0,
            offset: 1.0,
        }),
        background_center: None,
        noise_sigma: 1.0,
        background_fraction: 0.5,
        bags_per_class: 4,
        seed: 3,
    };
    let bags = generate(&spec, &h)?;
    for bag in bags.iter().take(6) {
        let planted = bag
            .instance_labels
            .as_ref()
            .expect("synthetic bags are planted");
        println!(
            "{} labels {:?} instances {:>2} planted {:?}",
            bag.id,
            bag.labels,
            bag.len(),
            planted
        );
    }
    let manifest = write_dataset(&out, &bags)?;
    let back = read_dataset(&manifest, Some(&h))?;
    assert_eq!(back, bags);
    println!(
        "wrote and re-read {} bags via {}",
        back.len(),
        manifest.display()
    );
    Ok(())
}
