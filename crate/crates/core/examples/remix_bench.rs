//! Times SFR against random mixing over every priority pair of a corpus.
//!
//! cargo run --release --example remix_bench

use sevmil::hierarchy::Hierarchy;
use sevmil::remix::{bench_remix, RemixMethod, RemixSettings};
use sevmil::synth::{generate, CenterLayout, Centers, SynthSpec};

fn main() -> sevmil::Result<()> {
    let h = Hierarchy::single_chain(3);
    let spec = SynthSpec {
        feature_dim: 64,
        instances_min: 50,
        instances_max: 100,
        class_centers: Centers::Generated(CenterLayout::Chain {
            spacing: 1.0,
            offset: 2.0,
        }),
        background_center: None,
        noise_sigma: 1.0,
        background_fraction: 0.5,
        bags_per_class: 5,
        seed: 0,
    };
    let bags = generate(&spec, &h)?;
    let settings = RemixSettings::default();
    for method in [RemixMethod::RandomMix, RemixMethod::Sfr] {
        let r = bench_remix(&bags, &h, method, &settings, 3, 0)?;
        println!(
            "{method:?}: {} pairs, {:.3} ms/sample (sd {:.3})",
            r.pairs,
            r.timing.mean_seconds_per_sample * 1e3,
            r.timing.std_seconds_per_sample * 1e3
        );
    }
    Ok(())
}
