//! Plain cross-entropy versus MSCE + hierarchy alignment on an overlapping
//! three-class chain, scored on held-out bags.
//!
//! cargo run --release --example severity_training [seeds] [spacing] [epochs]

use sevmil::config::HierarchySpec;
use sevmil::losses::HyperParams;
use sevmil::metrics::{MetricReport, MetricSettings};
use sevmil::remix::RemixSettings;
use sevmil::synth::{generate, CenterLayout, Centers, SynthSpec};
use sevmil::trainer::{evaluate, train, AdamConfig, LossKind, TrainConfig};

fn spec(seed: u64, spacing: f64) -> SynthSpec {
    SynthSpec {
        feature_dim: 16,
        instances_min: 8,
        instances_max: 16,
        class_centers: Centers::Generated(CenterLayout::Chain {
            spacing,
            offset: 3.0,
        }),
        background_center: None,
        noise_sigma: 2.0,
        background_fraction: 0.5,
        bags_per_class: 300,
        seed,
    }
}

fn run(loss: LossKind, seed: u64, spacing: f64, epochs: usize) -> sevmil::Result<MetricReport> {
    let h = HierarchySpec::chains(&[2, 3], &[vec![0, 0, 1]]).build()?;
    let train_set = generate(&spec(seed, spacing), &h)?;
    // same centers, fresh bags
    let mut test_spec = spec(seed, spacing);
    test_spec.class_centers = Centers::Explicit(test_spec.class_centers.resolve(3, 16, seed)?);
    test_spec.seed = seed + 1_000_000;
    let test_set = generate(&test_spec, &h)?;
    let config = TrainConfig {
        epochs,
        batch_size: 32,
        loss,
        optimizer: AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        seed,
        ..TrainConfig::default()
    };
    let model = train(
        &train_set,
        &h,
        &HyperParams::default(),
        &RemixSettings::default(),
        &config,
    )?
    .model;
    let eval = evaluate(&model, &test_set, &h, &MetricSettings::default())?;
    Ok(eval.reports[h.finest()].clone())
}

fn main() -> sevmil::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let spacing: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(4.0);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    println!("seed  acc_ce  acc_msce  severe_ce  severe_msce  asmc_ce  asmc_msce");
    for seed in 0..seeds {
        let ce = run(LossKind::Ce, seed, spacing, epochs)?;
        let ms = run(LossKind::MsceHa, seed, spacing, epochs)?;
        let asmc = |r: &MetricReport| r.asmc.value().unwrap_or(f64::INFINITY);
        println!(
            "{seed:>4}  {:.3}   {:.3}     {:>5}      {:>5}       {:.4}   {:.4}",
            ce.accuracy,
            ms.accuracy,
            ce.severe_error_count,
            ms.severe_error_count,
            asmc(&ce),
            asmc(&ms)
        );
    }
    Ok(())
}
