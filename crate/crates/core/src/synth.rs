//! Synthetic MIL datasets with planted per-instance classes.
//!
//! Each bag of finest class `c` holds at least one instance drawn around the
//! center of `c`; the remaining instances come from a shared background center
//! or from classes strictly less urgent than `c`. The bag label is the most
//! urgent class present, so it is always `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bag::{Bag, BACKGROUND};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Class center placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Centers {
    Explicit(Vec<Vec<f64>>),
    Generated(CenterLayout),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterLayout {
    /// `origin + c * spacing * v` along a random unit direction `v`, with a
    /// random origin of norm `offset`. Adjacent classes overlap when `spacing`
    /// is small relative to the noise.
    Chain { spacing: f64, offset: f64 },
    /// Independent Gaussian entries with standard deviation `scale`.
    Random { scale: f64 },
}

impl Centers {
    pub fn resolve(&self, num_classes: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe_f00d_d00d);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let gauss = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| normal.sample(rng)).collect()
        };
        let centers = match self {
            Centers::Explicit(c) => c.clone(),
            Centers::Generated(CenterLayout::Random { scale }) => (0..num_classes)
                .map(|_| {
                    gauss(dim, &mut rng)
                        .into_iter()
                        .map(|v| v * scale)
                        .collect()
                })
                .collect(),
            Centers::Generated(CenterLayout::Chain { spacing, offset }) => {
                let unit = |v: Vec<f64>| {
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
                };
                let dir = unit(gauss(dim, &mut rng));
                let origin: Vec<f64> = unit(gauss(dim, &mut rng))
                    .into_iter()
                    .map(|x| x * offset)
                    .collect();
                (0..num_classes)
                    .map(|c| {
                        origin
                            .iter()
                            .zip(&dir)
                            .map(|(o, d)| o + c as f64 * spacing * d)
                            .collect()
                    })
                    .collect()
            }
        };
        if centers.len() != num_classes {
            return Err(Error::Config(format!(
                "{} class centers for {num_classes} finest classes",
                centers.len()
            )));
        }
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Config(format!(
                "class centers must have dimension {dim}"
            )));
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                if centers[i] == centers[j] {
                    return Err(Error::Config(format!("class centers {i} and {j} coincide")));
                }
            }
        }
        Ok(centers)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub feature_dim: usize,
    pub instances_min: usize,
    pub instances_max: usize,
    pub class_centers: Centers,
    /// Origin when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_center: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub background_fraction: f64,
    pub bags_per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.instances_min == 0 || self.instances_min > self.instances_max {
            return Err(Error::Config(format!(
                "instances per bag must satisfy 1 <= min <= max (got {}..{})",
                self.instances_min, self.instances_max
            )));
        }
        if !(self.noise_sigma > 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!(
                "noise_sigma must be > 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.background_fraction) {
            return Err(Error::Config(format!(
                "background_fraction must be in [0, 1], got {}",
                self.background_fraction
            )));
        }
        if let Some(bg) = &self.background_center {
            if bg.len() != self.feature_dim {
                return Err(Error::Config(
                    "background_center has the wrong dimension".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Derives an independent per-bag seed (splitmix64 finalizer).
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Most urgent planted class among non-background instances.
pub fn bag_label_from_instances(hierarchy: &Hierarchy, instance_labels: &[i64]) -> Option<usize> {
    let classes: Vec<usize> = instance_labels
        .iter()
        .filter(|&&l| l != BACKGROUND)
        .map(|&l| l as usize)
        .collect();
    hierarchy.most_urgent(hierarchy.finest(), &classes)
}

pub fn generate(spec: &SynthSpec, hierarchy: &Hierarchy) -> Result<Vec<Bag>> {
    spec.validate()?;
    let finest = hierarchy.finest();
    let num_classes = hierarchy.num_classes(finest)?;
    let centers = spec
        .class_centers
        .resolve(num_classes, spec.feature_dim, spec.seed)?;
    let background = spec
        .background_center
        .clone()
        .unwrap_or_else(|| vec![0.0; spec.feature_dim]);
    let rel = hierarchy.priority(finest)?;
    let lower: Vec<Vec<usize>> = (0..num_classes)
        .map(|c| {
            (0..num_classes)
                .filter(|&j| rel.is_more_urgent(c, j))
                .collect()
        })
        .collect();
    let noise =
        Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(format!("noise: {e}")))?;

    let total = num_classes * spec.bags_per_class;
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let class = idx / spec.bags_per_class;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, idx as u64));
            let n = rng.random_range(spec.instances_min..=spec.instances_max);
            let mut features = Vec::with_capacity(n * spec.feature_dim);
            let mut truth = Vec::with_capacity(n);
            for i in 0..n {
                let label = if i == 0 {
                    class as i64
                } else if rng.random_bool(spec.background_fraction) {
                    BACKGROUND
                } else {
                    let k = rng.random_range(0..=lower[class].len());
                    if k == lower[class].len() {
                        class as i64
                    } else {
                        lower[class][k] as i64
                    }
                };
                let center = if label == BACKGROUND {
                    &background
                } else {
                    &centers[label as usize]
                };
                features.extend(center.iter().map(|&m| (m + noise.sample(&mut rng)) as f32));
                truth.push(label);
            }
            let bag_class = bag_label_from_instances(hierarchy, &truth).ok_or_else(|| {
                Error::Precondition(format!("bag {idx}: no unique most urgent instance class"))
            })?;
            let labels = hierarchy.labels_for(bag_class)?;
            Bag::new(format!("bag{idx:05}"), spec.feature_dim, features, labels)?
                .with_instance_labels(truth)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            feature_dim: 4,
            instances_min: 3,
            instances_max: 8,
            class_centers: Centers::Generated(CenterLayout::Random { scale: 3.0 }),
            background_center: None,
            noise_sigma: 0.5,
            background_fraction: 0.3,
            bags_per_class: 5,
            seed: 9,
        }
    }

    #[test]
    fn noiseless_single_instance_bags_sit_on_centers() {
        let h = Hierarchy::single_chain(3);
        let s = SynthSpec {
            instances_min: 1,
            instances_max: 1,
            noise_sigma: 1e-300,
            class_centers: Centers::Explicit(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]),
            feature_dim: 2,
            ..spec()
        };
        let bags = generate(&s, &h).unwrap();
        for bag in &bags {
            let c = bag.finest_label();
            let expected = [[0.0f32, 1.0], [1.0, 0.0], [1.0, 1.0]][c];
            assert_eq!(bag.instance(0), &expected);
            assert_eq!(bag.instance_labels.as_ref().unwrap(), &vec![c as i64]);
        }
    }

    #[test]
    fn max_rule() {
        let h = Hierarchy::single_chain(3);
        assert_eq!(bag_label_from_instances(&h, &[0, 2, -1, 0]), Some(2));
        assert_eq!(bag_label_from_instances(&h, &[-1, 1]), Some(1));
        assert_eq!(bag_label_from_instances(&h, &[-1]), None);
    }

    #[test]
    fn generation_is_deterministic_and_sized() {
        let h = Hierarchy::chains(&[2, 3], &[vec![0, 0, 1]]).unwrap();
        let a = generate(&spec(), &h).unwrap();
        let b = generate(&spec(), &h).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 15);
        for bag in &a {
            assert!((3..=8).contains(&bag.len()));
            assert!(h.labels_consistent(&bag.labels));
        }
    }

    #[test]
    fn degenerate_specs_rejected() {
        let h = Hierarchy::single_chain(3);
        let s = SynthSpec {
            instances_min: 0,
            ..spec()
        };
        assert!(generate(&s, &h).is_err());
        let s = SynthSpec {
            noise_sigma: 0.0,
            ..spec()
        };
        assert!(generate(&s, &h).is_err());
        let s = SynthSpec {
            class_centers: Centers::Explicit(vec![vec![0.0; 4]; 3]),
            ..spec()
        };
        assert!(generate(&s, &h).is_err());
    }
}
