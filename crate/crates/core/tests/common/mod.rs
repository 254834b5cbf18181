#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sevmil::hierarchy::{Hierarchy, Level, PriorityMatrix};

/// Sizes for `levels` levels ending in `finest` classes, non-decreasing.
pub fn level_sizes(rng: &mut ChaCha8Rng, levels: usize, finest: usize) -> Vec<usize> {
    let mut sizes = vec![finest];
    for _ in 1..levels {
        let below = *sizes.last().unwrap();
        sizes.push(rng.random_range(1..=below));
    }
    sizes.reverse();
    sizes
}

/// Monotone surjective map from `fine` classes onto `coarse` classes.
pub fn monotone_parents(rng: &mut ChaCha8Rng, fine: usize, coarse: usize) -> Vec<usize> {
    // choose coarse-1 cut points among fine-1 gaps
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, fine - 1, coarse - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    (0..fine)
        .map(|i| cuts.iter().filter(|&&c| c <= i).count())
        .collect()
}

/// Random valid hierarchy: chains or fully incomparable levels.
pub fn random_hierarchy(rng: &mut ChaCha8Rng, levels: usize, finest: usize) -> Hierarchy {
    let sizes = level_sizes(rng, levels, finest);
    let chain = rng.random_bool(0.7);
    let built: Vec<Level> = sizes
        .iter()
        .enumerate()
        .map(|(h, &n)| {
            let parents = if h == 0 {
                Vec::new()
            } else {
                monotone_parents(rng, n, sizes[h - 1])
            };
            let priority = if chain {
                PriorityMatrix::chain(n)
            } else {
                PriorityMatrix::incomparable(n)
            };
            Level::unnamed(parents, priority)
        })
        .collect();
    Hierarchy::new(built).expect("generated hierarchy is valid")
}

pub fn random_logits(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Central differences of `f` at `x` for every coordinate.
pub fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = y[i];
            y[i] = orig + step;
            let up = f(&y);
            y[i] = orig - step;
            let down = f(&y);
            y[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `max |a - b| / max(max |a|, max |b|)`, with tiny gradients compared absolutely.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-8)
}

pub fn flatten(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

pub fn unflatten(flat: &[f64], shapes: &[usize]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for &n in shapes {
        out.push(flat[off..off + n].to_vec());
        off += n;
    }
    out
}
