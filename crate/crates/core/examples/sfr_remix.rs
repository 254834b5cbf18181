//! Semantic Feature Remix on planted synthetic bags.
//!
//! Remixes a class-1 donor bag into a class-0 recipient bag and reports how
//! many of the selected donor instances carry the donor's planted class.
//!
//! cargo run --release --example sfr_remix

use sevmil::hierarchy::Hierarchy;
use sevmil::remix::{sfr, SfrParams};
use sevmil::synth::{generate, CenterLayout, Centers, SynthSpec};

fn main() -> sevmil::Result<()> {
    let h = Hierarchy::single_chain(2);
    println!("seed  k  selected  purity");
    for seed in 0..5u64 {
        let spec = SynthSpec {
            feature_dim: 16,
            instances_min: 20,
            instances_max: 40,
            class_centers: Centers::Generated(CenterLayout::Random { scale: 3.0 }),
            background_center: Some(vec![3.0; 16]),
            noise_sigma: 0.5,
            background_fraction: 0.5,
            bags_per_class: 1,
            seed,
        };
        let bags = generate(&spec, &h)?;
        let (donor, recipient) = (&bags[1], &bags[0]);
        for k in [1, 2, 3, 6] {
            let params = SfrParams {
                top_k: k,
                ..SfrParams::default()
            };
            let out = sfr(donor, recipient, &h, &params)?;
            let truth = donor.instance_labels.as_ref().expect("planted labels");
            let pure = out.selected.iter().filter(|&&i| truth[i] == 1).count();
            let purity = pure as f64 / out.selected.len().max(1) as f64;
            println!("{seed:>4} {k:>2} {:>9}  {purity:.3}", out.selected.len());
        }
    }
    Ok(())
}
