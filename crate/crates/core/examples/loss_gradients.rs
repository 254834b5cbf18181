//! Evaluates every loss on random logits and compares its analytic gradient
//! against central differences.
//!
//! cargo run --example loss_gradients

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sevmil::hierarchy::Hierarchy;
use sevmil::losses::{
    build_loss_weights, cdw_ce, co2, combined_loss, cross_entropy, hierarchy_alignment, hxe, msce,
    weighted_ce, HyperParams, LossValueAndGrad,
};

type LossFn<'a> = Box<dyn Fn(&[Vec<f64>]) -> LossValueAndGrad + 'a>;

fn max_gap(f: &LossFn<'_>, z: &[Vec<f64>]) -> f64 {
    let analytic = f(z).grad;
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..z.len() {
        for c in 0..z[l].len() {
            let mut up = z.to_vec();
            up[l][c] += step;
            let mut down = z.to_vec();
            down[l][c] -= step;
            let numeric = (f(&up).value - f(&down).value) / (2.0 * step);
            worst = worst.max((numeric - analytic[l][c]).abs());
        }
    }
    worst
}

fn main() -> sevmil::Result<()> {
    let h = Hierarchy::chains(&[2, 3], &[vec![0, 0, 1]])?;
    let w = build_loss_weights(&h, 1.6)?;
    let hp = HyperParams::default();
    let class_w = vec![vec![1.0, 3.0], vec![1.0, 2.0, 4.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z: Vec<Vec<f64>> = h
        .class_counts()
        .iter()
        .map(|&n| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let t = h.labels_for(2)?;

    let finest = |g: LossValueAndGrad| LossValueAndGrad {
        value: g.value,
        grad: vec![vec![0.0; 2], g.grad.into_iter().next().unwrap()],
        clamped: g.clamped,
    };
    let losses: Vec<(&str, LossFn<'_>)> = vec![
        ("ce", Box::new(|z| cross_entropy(z, &t).unwrap())),
        ("msce", Box::new(|z| msce(z, &t, &w).unwrap())),
        (
            "alignment",
            Box::new(|z| hierarchy_alignment(z, &h).unwrap()),
        ),
        (
            "msce+ha",
            Box::new(|z| combined_loss(z, &t, &w, &h, &hp).unwrap()),
        ),
        (
            "weighted ce",
            Box::new(|z| weighted_ce(z, &t, &class_w).unwrap()),
        ),
        ("hxe", Box::new(|z| finest(hxe(&z[1], 2, &h, 0.5).unwrap()))),
        (
            "co2",
            Box::new(|z| finest(co2(&z[1], 2, 0.1, 1.0).unwrap())),
        ),
        (
            "cdw ce",
            Box::new(|z| finest(cdw_ce(&z[1], 2, 2.0).unwrap())),
        ),
    ];
    println!("{:<12} {:>10} {:>12}", "loss", "value", "max |gap|");
    for (name, f) in &losses {
        println!("{name:<12} {:>10.5} {:>12.2e}", f(&z).value, max_gap(f, &z));
    }
    Ok(())
}
