//! Bag remixing: Semantic Feature Remix (SFR) and the RandomMix baseline.
//!
//! Both methods take a donor bag `a` whose finest label is strictly more
//! urgent than the recipient bag `b`, keep every instance of `b`, add a subset
//! of `a`'s instances unchanged, and label the result with `a`'s labels.
//!
//! SFR clusters the union of both bags by cosine similarity and takes `a`'s
//! instances from the `k` clusters with the highest share of `a` members.
//! Clustering works on instance directions (unit-normalized features), so
//! rescaling any instance by a positive factor does not change the result.

use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bag::Bag;
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

const NORM_EPS: f64 = 1e-12;

/// How refinement picks a cluster for each instance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityRule {
    /// Most similar prototype.
    #[default]
    ArgMax,
    /// Least similar prototype; kept only to audit the alternative reading.
    ArgMin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfrParams {
    pub num_clusters: usize,
    pub refine_iters: usize,
    pub top_k: usize,
    pub rule: SimilarityRule,
}

impl Default for SfrParams {
    fn default() -> Self {
        Self {
            num_clusters: 11,
            refine_iters: 6,
            top_k: 6,
            rule: SimilarityRule::ArgMax,
        }
    }
}

impl SfrParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 clusters, got {}",
                self.num_clusters
            )));
        }
        if self.top_k == 0 || self.top_k >= self.num_clusters {
            return Err(Error::InvalidParameter(format!(
                "top_k must satisfy 1 <= k < L (k = {}, L = {})",
                self.top_k, self.num_clusters
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each instance of `a ++ b` (donor first).
    pub cluster_of: Vec<usize>,
    /// Last prototype direction per cluster; `None` if never populated.
    pub prototypes: Vec<Option<Vec<f64>>>,
    /// Whether each instance came from the donor bag.
    pub from_donor: Vec<bool>,
}

impl ClusterAssignment {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.prototypes.len()];
        for &c in &self.cluster_of {
            s[c] += 1;
        }
        s
    }

    pub fn donor_counts(&self) -> Vec<usize> {
        let mut s = vec![0; self.prototypes.len()];
        for (&c, &a) in self.cluster_of.iter().zip(&self.from_donor) {
            if a {
                s[c] += 1;
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemixOutcome {
    pub bag: Bag,
    /// Donor instance indices added to the recipient, ascending.
    pub selected: Vec<usize>,
    /// Clusters ordered by donor share (SFR only).
    pub cluster_order: Vec<usize>,
    pub assignment: Option<ClusterAssignment>,
    /// Instances with zero norm; their cosine similarity is undefined.
    pub zero_norm: Vec<usize>,
    /// The mean direction of both bags vanished and the donor mean was used
    /// as the binning reference.
    pub degenerate_reference: bool,
}

fn check_pair(donor: &Bag, recipient: &Bag, hierarchy: &Hierarchy) -> Result<()> {
    if donor.dim() != recipient.dim() {
        return Err(Error::Shape(format!(
            "feature dimensions differ ({} vs {})",
            donor.dim(),
            recipient.dim()
        )));
    }
    let finest = hierarchy.finest();
    let rel = hierarchy.priority(finest)?;
    let (a, b) = (donor.finest_label(), recipient.finest_label());
    if a >= rel.len() || b >= rel.len() || !rel.is_more_urgent(a, b) {
        return Err(Error::Precondition(format!(
            "donor label {a} must be strictly more urgent than recipient label {b}"
        )));
    }
    Ok(())
}

fn assemble(donor: &Bag, recipient: &Bag, selected: &[usize]) -> Result<Bag> {
    let mut features = recipient.features().to_vec();
    for &i in selected {
        features.extend_from_slice(donor.instance(i));
    }
    let mut bag = Bag::new(
        format!("{}+{}", donor.id, recipient.id),
        donor.dim(),
        features,
        donor.labels.clone(),
    )?;
    if let (Some(la), Some(lb)) = (&donor.instance_labels, &recipient.instance_labels) {
        let mut il = lb.clone();
        il.extend(selected.iter().map(|&i| la[i]));
        bag = bag.with_instance_labels(il)?;
    }
    Ok(bag)
}

fn direction(x: &[f32]) -> Option<Vec<f64>> {
    let norm = x
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    (norm > NORM_EPS).then(|| x.iter().map(|&v| v as f64 / norm).collect())
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > NORM_EPS).then(|| v.iter().map(|x| x / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mean_direction<'a>(dirs: impl Iterator<Item = &'a Vec<f64>>, dim: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut n = 0usize;
    for d in dirs {
        for (s, v) in sum.iter_mut().zip(d) {
            *s += v;
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    Some(sum)
}

/// Bin of similarity `s` among `l` equal-width bins over `[-1, 1]`:
/// half-open `[lo, hi)` with the last bin closed at 1.
pub fn similarity_bin(s: f64, l: usize) -> usize {
    let s = s.clamp(-1.0, 1.0);
    let b = ((s + 1.0) * l as f64 / 2.0).floor() as usize;
    b.min(l - 1)
}

/// Clusters the instances of `donor ++ recipient`.
pub fn cluster_instances(
    donor: &Bag,
    recipient: &Bag,
    params: &SfrParams,
) -> (ClusterAssignment, Vec<usize>, bool) {
    let l = params.num_clusters;
    let dim = donor.dim();
    let dirs: Vec<Option<Vec<f64>>> = donor
        .instances()
        .chain(recipient.instances())
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| direction(x))
        .collect();
    let from_donor: Vec<bool> = (0..dirs.len()).map(|i| i < donor.len()).collect();
    let zero_norm: Vec<usize> = dirs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_none())
        .map(|(i, _)| i)
        .collect();

    // reference direction for the initial binning
    let mut degenerate = false;
    let reference = mean_direction(dirs.iter().flatten(), dim)
        .and_then(|m| unit(&m))
        .or_else(|| {
            degenerate = true;
            mean_direction(dirs[..donor.len()].iter().flatten(), dim).and_then(|m| unit(&m))
        });

    let mut cluster_of: Vec<usize> = dirs
        .par_iter()
        .map(|d| match (d, &reference) {
            (Some(d), Some(r)) => similarity_bin(dot(d, r), l),
            // zero-norm instance: the reference's own bin (similarity 1)
            (None, _) => l - 1,
            (Some(_), None) => similarity_bin(0.0, l),
        })
        .collect();

    let mut prototypes: Vec<Option<Vec<f64>>> = vec![None; l];
    for _ in 0..params.refine_iters {
        for (c, proto) in prototypes.iter_mut().enumerate() {
            let members = dirs
                .iter()
                .zip(&cluster_of)
                .filter(|(_, &k)| k == c)
                .filter_map(|(d, _)| d.as_ref());
            if let Some(m) = mean_direction(members, dim) {
                *proto = Some(m);
            }
        }
        let unit_protos: Vec<Option<Vec<f64>>> = prototypes
            .iter()
            .map(|p| p.as_ref().and_then(|p| unit(p)))
            .collect();
        cluster_of = dirs
            .par_iter()
            .zip(cluster_of.par_iter())
            .map(|(d, &current)| {
                let Some(d) = d else { return current };
                let mut best: Option<(usize, f64)> = None;
                for (c, p) in unit_protos.iter().enumerate() {
                    let Some(p) = p else { continue };
                    let s = dot(d, p);
                    let better = match (best, params.rule) {
                        (None, _) => true,
                        (Some((_, b)), SimilarityRule::ArgMax) => s > b,
                        (Some((_, b)), SimilarityRule::ArgMin) => s < b,
                    };
                    if better {
                        best = Some((c, s));
                    }
                }
                best.map_or(current, |(c, _)| c)
            })
            .collect();
    }
    // final prototypes reflect the final assignment
    for (c, proto) in prototypes.iter_mut().enumerate() {
        let members = dirs
            .iter()
            .zip(&cluster_of)
            .filter(|(_, &k)| k == c)
            .filter_map(|(d, _)| d.as_ref());
        if let Some(m) = mean_direction(members, dim) {
            *proto = Some(m);
        }
    }
    (
        ClusterAssignment {
            cluster_of,
            prototypes,
            from_donor,
        },
        zero_norm,
        degenerate,
    )
}

/// Cluster indices sorted by donor share, highest first; ties keep the lower
/// index first. Empty clusters have share 0.
pub fn rank_clusters(assignment: &ClusterAssignment) -> Vec<usize> {
    let sizes = assignment.sizes();
    let donors = assignment.donor_counts();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // compare donors[x] / sizes[x] exactly via cross-multiplication
    order.sort_by(|&x, &y| {
        let lhs = donors[y] as u128 * sizes[x].max(1) as u128;
        let rhs = donors[x] as u128 * sizes[y].max(1) as u128;
        lhs.cmp(&rhs)
    });
    order
}

/// Semantic Feature Remix of donor `a` into recipient `b`.
pub fn sfr(a: &Bag, b: &Bag, hierarchy: &Hierarchy, params: &SfrParams) -> Result<RemixOutcome> {
    params.validate()?;
    check_pair(a, b, hierarchy)?;
    let (assignment, zero_norm, degenerate) = cluster_instances(a, b, params);
    let order = rank_clusters(&assignment);
    let mut chosen = vec![false; params.num_clusters];
    for &c in &order[..params.top_k] {
        chosen[c] = true;
    }
    let selected: Vec<usize> = (0..a.len())
        .filter(|&i| chosen[assignment.cluster_of[i]])
        .collect();
    let bag = assemble(a, b, &selected)?;
    if !zero_norm.is_empty() {
        log::warn!(
            "sfr: {} zero-norm instances assigned to the reference bin",
            zero_norm.len()
        );
    }
    Ok(RemixOutcome {
        bag,
        selected,
        cluster_order: order,
        assignment: Some(assignment),
        zero_norm,
        degenerate_reference: degenerate,
    })
}

/// Adds `ceil(fraction * n_a)` donor instances drawn uniformly without
/// replacement.
pub fn random_mix(
    a: &Bag,
    b: &Bag,
    hierarchy: &Hierarchy,
    fraction: f64,
    seed: u64,
) -> Result<RemixOutcome> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    check_pair(a, b, hierarchy)?;
    let take = ((fraction * a.len() as f64).ceil() as usize).clamp(1, a.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = sample(&mut rng, a.len(), take).into_vec();
    selected.sort_unstable();
    let bag = assemble(a, b, &selected)?;
    Ok(RemixOutcome {
        bag,
        selected,
        cluster_order: Vec::new(),
        assignment: None,
        zero_norm: Vec::new(),
        degenerate_reference: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemixMethod {
    Sfr,
    RandomMix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemixSettings {
    pub sfr: SfrParams,
    /// Share of donor instances RandomMix keeps.
    pub random_fraction: f64,
}

impl Default for RemixSettings {
    fn default() -> Self {
        Self {
            sfr: SfrParams::default(),
            random_fraction: 0.5,
        }
    }
}

/// Dispatches to [`sfr`] or [`random_mix`].
pub fn remix(
    method: RemixMethod,
    a: &Bag,
    b: &Bag,
    hierarchy: &Hierarchy,
    settings: &RemixSettings,
    seed: u64,
) -> Result<RemixOutcome> {
    match method {
        RemixMethod::Sfr => sfr(a, b, hierarchy, &settings.sfr),
        RemixMethod::RandomMix => random_mix(a, b, hierarchy, settings.random_fraction, seed),
    }
}

/// For each bag (as recipient), the next bag in cyclic order whose finest
/// label is strictly more urgent (as donor). Bags with no donor are skipped.
pub fn priority_pairs(corpus: &[Bag], hierarchy: &Hierarchy) -> Vec<(usize, usize)> {
    let Ok(rel) = hierarchy.priority(hierarchy.finest()) else {
        return Vec::new();
    };
    let n = corpus.len();
    let mut pairs = Vec::new();
    for b in 0..n {
        let lb = corpus[b].finest_label();
        let donor = (1..n)
            .map(|off| (b + off) % n)
            .find(|&a| rel.is_more_urgent(corpus[a].finest_label(), lb));
        if let Some(a) = donor {
            pairs.push((a, b));
        }
    }
    pairs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub method: RemixMethod,
    pub num_clusters: usize,
    pub refine_iters: usize,
    pub top_k: usize,
    pub random_fraction: f64,
    pub pairs: usize,
    pub repetitions: usize,
    pub mean_instances: f64,
    pub min_instances: usize,
    pub max_instances: usize,
    pub timing: BenchTiming,
}

/// Wall-clock results; kept apart from the deterministic part of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTiming {
    pub mean_seconds_per_sample: f64,
    pub std_seconds_per_sample: f64,
    /// Per-repetition mean seconds per remixed sample.
    pub per_repetition: Vec<f64>,
}

/// Times remixing every priority pair of `corpus`, `repetitions` times.
pub fn bench_remix(
    corpus: &[Bag],
    hierarchy: &Hierarchy,
    method: RemixMethod,
    settings: &RemixSettings,
    repetitions: usize,
    seed: u64,
) -> Result<BenchReport> {
    if corpus.len() < 2 {
        return Err(Error::Empty("bench needs at least two bags".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidParameter(
            "repetitions must be positive".into(),
        ));
    }
    let pairs = priority_pairs(corpus, hierarchy);
    if pairs.is_empty() {
        return Err(Error::Precondition(
            "corpus has no valid priority pair".into(),
        ));
    }
    let mut per_rep = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let start = Instant::now();
        for (i, &(a, b)) in pairs.iter().enumerate() {
            let s = seed.wrapping_add((rep * pairs.len() + i) as u64);
            let out = remix(method, &corpus[a], &corpus[b], hierarchy, settings, s)?;
            std::hint::black_box(out);
        }
        per_rep.push(start.elapsed().as_secs_f64() / pairs.len() as f64);
    }
    let mean = per_rep.iter().sum::<f64>() / per_rep.len() as f64;
    let var = per_rep.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / per_rep.len() as f64;
    let sizes: Vec<usize> = corpus.iter().map(Bag::len).collect();
    Ok(BenchReport {
        method,
        num_clusters: settings.sfr.num_clusters,
        refine_iters: settings.sfr.refine_iters,
        top_k: settings.sfr.top_k,
        random_fraction: settings.random_fraction,
        pairs: pairs.len(),
        repetitions,
        mean_instances: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        min_instances: *sizes.iter().min().unwrap(),
        max_instances: *sizes.iter().max().unwrap(),
        timing: BenchTiming {
            mean_seconds_per_sample: mean,
            std_seconds_per_sample: var.sqrt(),
            per_repetition: per_rep,
        },
    })
}
