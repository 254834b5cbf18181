//! Mean-pooled hierarchical classifier trained by manual backpropagation.
//!
//! A bag is mean-pooled into one feature vector; each hierarchy level has its
//! own linear head on that shared vector.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bag::Bag;
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;
use crate::losses::{
    build_loss_weights, cdw_ce, co2, combined_loss, cross_entropy, hierarchy_alignment, hxe, msce,
    softmax, weighted_ce, HyperParams, LossValueAndGrad, LossWeightMatrix,
};
use crate::metrics::{
    expected_error_class, macro_auc, ConfusionMatrix, MetricReport, MetricSettings,
};
use crate::remix::{remix, RemixMethod, RemixSettings};

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    /// Row-major `classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PooledHierarchicalModel {
    dim: usize,
    heads: Vec<Head>,
}

pub fn mean_pool(bag: &Bag) -> Vec<f64> {
    bag.mean()
}

impl PooledHierarchicalModel {
    pub fn zeros(dim: usize, class_counts: &[usize]) -> Self {
        let heads = class_counts
            .iter()
            .map(|&c| Head {
                weights: vec![0.0; c * dim],
                bias: vec![0.0; c],
            })
            .collect();
        Self { dim, heads }
    }

    /// Gaussian parameters with standard deviation `scale`.
    pub fn random(dim: usize, class_counts: &[usize], scale: f64, seed: u64) -> Self {
        let mut m = Self::zeros(dim, class_counts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("positive scale");
        let mut p = m.params();
        p.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        m.set_params(&p);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.heads.iter().map(|h| h.bias.len()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.weights.len() + h.bias.len())
            .sum()
    }

    /// Flat parameters: per level, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for h in &self.heads {
            out.extend_from_slice(&h.weights);
            out.extend_from_slice(&h.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "parameter count");
        let mut off = 0;
        for h in &mut self.heads {
            let nw = h.weights.len();
            h.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = h.bias.len();
            h.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    pub fn logits_from_pooled(&self, pooled: &[f64]) -> Vec<Vec<f64>> {
        self.heads
            .iter()
            .map(|h| {
                h.bias
                    .iter()
                    .enumerate()
                    .map(|(c, b)| {
                        let row = &h.weights[c * self.dim..(c + 1) * self.dim];
                        b + row.iter().zip(pooled).map(|(w, x)| w * x).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn forward(&self, bag: &Bag) -> Result<Vec<Vec<f64>>> {
        if bag.dim() != self.dim {
            return Err(Error::Shape(format!(
                "bag dimension {} but model expects {}",
                bag.dim(),
                self.dim
            )));
        }
        Ok(self.logits_from_pooled(&mean_pool(bag)))
    }

    /// Chain rule from logit gradients to flat parameter gradients.
    pub fn backward(&self, pooled: &[f64], grad_logits: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for g in grad_logits {
            for &gc in g {
                out.extend(pooled.iter().map(|x| gc * x));
            }
            out.extend_from_slice(g);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    WeightedCe,
    Msce,
    /// `lambda1 * MSCE + lambda2 * hierarchy alignment`
    MsceHa,
    Hxe,
    Co2,
    CdwCe,
}

/// Everything a per-sample loss evaluation needs.
pub struct LossContext<'a> {
    pub kind: LossKind,
    pub hierarchy: &'a Hierarchy,
    pub hp: &'a HyperParams,
    pub weights: Vec<LossWeightMatrix>,
    pub class_weights: Vec<Vec<f64>>,
}

impl<'a> LossContext<'a> {
    pub fn new(kind: LossKind, hierarchy: &'a Hierarchy, hp: &'a HyperParams) -> Result<Self> {
        hp.validate()?;
        let class_weights = match &hp.class_weights {
            Some(w) => w.clone(),
            None => hierarchy
                .class_counts()
                .iter()
                .map(|&n| vec![1.0; n])
                .collect(),
        };
        if kind == LossKind::Hxe && hierarchy.num_levels() < 2 {
            return Err(Error::Precondition("hxe needs at least two levels".into()));
        }
        Ok(Self {
            kind,
            hierarchy,
            hp,
            weights: build_loss_weights(hierarchy, hp.alpha)?,
            class_weights,
        })
    }
}

/// Per-sample loss split into its main and alignment terms (unscaled).
#[derive(Clone, Debug)]
pub struct SampleLoss {
    pub total: LossValueAndGrad,
    pub primary: f64,
    pub alignment: f64,
}

pub fn sample_loss(
    ctx: &LossContext<'_>,
    logits: &[Vec<f64>],
    labels: &[usize],
) -> Result<SampleLoss> {
    let shapes: Vec<usize> = logits.iter().map(Vec::len).collect();
    let per_level =
        |f: &dyn Fn(&[f64], usize) -> Result<LossValueAndGrad>| -> Result<LossValueAndGrad> {
            let mut out = LossValueAndGrad::zeros(&shapes);
            for (h, (z, &t)) in logits.iter().zip(labels).enumerate() {
                let v = f(z, t)?;
                out.value += v.value;
                out.clamped |= v.clamped;
                out.grad[h] = v.grad.into_iter().next().unwrap_or_default();
            }
            Ok(out)
        };
    let (total, primary, alignment) = match ctx.kind {
        LossKind::Ce => {
            let v = cross_entropy(logits, labels)?;
            let p = v.value;
            (v, p, 0.0)
        }
        LossKind::WeightedCe => {
            let v = weighted_ce(logits, labels, &ctx.class_weights)?;
            let p = v.value;
            (v, p, 0.0)
        }
        LossKind::Msce => {
            let v = msce(logits, labels, &ctx.weights)?;
            let p = v.value;
            (v, p, 0.0)
        }
        LossKind::MsceHa => {
            let v = combined_loss(logits, labels, &ctx.weights, ctx.hierarchy, ctx.hp)?;
            // component values for the trace; gradients come from `v`
            let p = msce(logits, labels, &ctx.weights)?.value;
            let a = hierarchy_alignment(logits, ctx.hierarchy)?.value;
            (v, p, a)
        }
        LossKind::Hxe => {
            let finest = ctx.hierarchy.finest();
            let v = hxe(
                &logits[finest],
                labels[finest],
                ctx.hierarchy,
                ctx.hp.alpha_hxe,
            )?;
            let mut out = LossValueAndGrad::zeros(&shapes);
            out.value = v.value;
            out.clamped = v.clamped;
            out.grad[finest] = v.grad.into_iter().next().unwrap_or_default();
            let p = out.value;
            (out, p, 0.0)
        }
        LossKind::Co2 => {
            let v = per_level(&|z, t| co2(z, t, ctx.hp.delta_co2, ctx.hp.lambda_co2))?;
            let p = v.value;
            (v, p, 0.0)
        }
        LossKind::CdwCe => {
            let v = per_level(&|z, t| cdw_ce(z, t, ctx.hp.alpha_cdw))?;
            let p = v.value;
            (v, p, 0.0)
        }
    };
    Ok(SampleLoss {
        total,
        primary,
        alignment,
    })
}

/// Loss of one bag and its gradient with respect to the flat parameters.
pub fn bag_loss_and_grad(
    model: &PooledHierarchicalModel,
    bag: &Bag,
    ctx: &LossContext<'_>,
) -> Result<(SampleLoss, Vec<f64>)> {
    let pooled = mean_pool(bag);
    if pooled.len() != model.dim() {
        return Err(Error::Shape("bag dimension does not match model".into()));
    }
    let logits = model.logits_from_pooled(&pooled);
    let loss = sample_loss(ctx, &logits, &bag.labels)?;
    let grad = model.backward(&pooled, &loss.total.grad);
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grads[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemixChoice {
    None,
    Sfr,
    RandomMix,
}

impl RemixChoice {
    pub fn method(self) -> Option<RemixMethod> {
        match self {
            RemixChoice::None => None,
            RemixChoice::Sfr => Some(RemixMethod::Sfr),
            RemixChoice::RandomMix => Some(RemixMethod::RandomMix),
        }
    }
}

/// With probability `probability` per training sample, the sample becomes the
/// recipient of a remix from a donor drawn uniformly among bags whose finest
/// label is strictly more urgent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemixPolicy {
    pub method: RemixChoice,
    pub probability: f64,
}

impl Default for RemixPolicy {
    fn default() -> Self {
        Self {
            method: RemixChoice::None,
            probability: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub optimizer: AdamConfig,
    pub remix: RemixPolicy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            loss: LossKind::MsceHa,
            optimizer: AdamConfig::default(),
            remix: RemixPolicy::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.remix.probability) {
            return Err(Error::Config(format!(
                "remix probability must be in [0, 1], got {}",
                self.remix.probability
            )));
        }
        if !(self.optimizer.lr >= 0.0) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean total loss per sample.
    pub loss: f64,
    /// Mean main loss term (CE, MSCE, ...) per sample.
    pub primary: f64,
    /// Mean hierarchy alignment term per sample (0 unless the loss uses it).
    pub alignment: f64,
    pub remixed: usize,
    pub remix_fallbacks: usize,
}

pub fn trace_csv(trace: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,primary,alignment,remixed,remix_fallbacks\n");
    for e in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.epoch, e.loss, e.primary, e.alignment, e.remixed, e.remix_fallbacks
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: PooledHierarchicalModel,
    pub trace: Vec<EpochStats>,
}

pub fn train(
    dataset: &[Bag],
    hierarchy: &Hierarchy,
    hp: &HyperParams,
    remix_settings: &RemixSettings,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Empty("training set is empty".into()))?;
    let model = PooledHierarchicalModel::zeros(first.dim(), &hierarchy.class_counts());
    train_from(model, dataset, hierarchy, hp, remix_settings, config)
}

/// Trains starting from `model`.
pub fn train_from(
    mut model: PooledHierarchicalModel,
    dataset: &[Bag],
    hierarchy: &Hierarchy,
    hp: &HyperParams,
    remix_settings: &RemixSettings,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    for bag in dataset {
        if !hierarchy.labels_consistent(&bag.labels) {
            return Err(Error::ManifestMismatch(format!(
                "bag {} has invalid labels",
                bag.id
            )));
        }
        if bag.dim() != model.dim() {
            return Err(Error::Shape(format!(
                "bag {} has dimension {}",
                bag.id,
                bag.dim()
            )));
        }
    }
    let ctx = LossContext::new(config.loss, hierarchy, hp)?;
    let finest = hierarchy.finest();
    let rel = hierarchy.priority(finest)?;
    let donors_for: BTreeMap<usize, Vec<usize>> = (0..hierarchy.num_classes(finest)?)
        .map(|c| {
            let donors = dataset
                .iter()
                .enumerate()
                .filter(|(_, b)| rel.is_more_urgent(b.finest_label(), c))
                .map(|(i, _)| i)
                .collect();
            (c, donors)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.optimizer, model.num_params());
    let mut params = model.params();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut stats = EpochStats {
            epoch,
            loss: 0.0,
            primary: 0.0,
            alignment: 0.0,
            remixed: 0,
            remix_fallbacks: 0,
        };
        for batch in order.chunks(config.batch_size) {
            // remix decisions are drawn sequentially so the run is reproducible
            let mut plan: Vec<(usize, Option<(usize, u64)>)> = Vec::with_capacity(batch.len());
            for &i in batch {
                let mut donor = None;
                if let Some(_method) = config.remix.method.method() {
                    if rng.random_bool(config.remix.probability) {
                        let candidates = &donors_for[&dataset[i].finest_label()];
                        if candidates.is_empty() {
                            stats.remix_fallbacks += 1;
                        } else {
                            let d = candidates[rng.random_range(0..candidates.len())];
                            donor = Some((d, rng.random::<u64>()));
                            stats.remixed += 1;
                        }
                    }
                }
                plan.push((i, donor));
            }
            let current = &model;
            let results: Vec<Result<(SampleLoss, Vec<f64>)>> = plan
                .par_iter()
                .map(|&(i, donor)| match (donor, config.remix.method.method()) {
                    (Some((d, seed)), Some(method)) => {
                        let mixed = remix(
                            method,
                            &dataset[d],
                            &dataset[i],
                            hierarchy,
                            remix_settings,
                            seed,
                        )?;
                        bag_loss_and_grad(current, &mixed.bag, &ctx)
                    }
                    _ => bag_loss_and_grad(current, &dataset[i], &ctx),
                })
                .collect();
            let mut grad = vec![0.0; params.len()];
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (loss, g) = r?;
                stats.loss += loss.total.value;
                stats.primary += loss.primary;
                stats.alignment += loss.alignment;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += scale * b;
                }
            }
            adam.update(&mut params, &grad);
            model.set_params(&params);
        }
        let n = dataset.len() as f64;
        stats.loss /= n;
        stats.primary /= n;
        stats.alignment /= n;
        log::debug!("epoch {epoch}: loss {:.6}", stats.loss);
        trace.push(stats);
    }
    Ok(TrainOutcome { model, trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub reports: Vec<MetricReport>,
    #[serde(skip)]
    pub confusion: Vec<ConfusionMatrix>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(
    model: &PooledHierarchicalModel,
    dataset: &[Bag],
    hierarchy: &Hierarchy,
    settings: &MetricSettings,
) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let levels = hierarchy.num_levels();
    let logits: Vec<Vec<Vec<f64>>> = dataset
        .par_iter()
        .map(|b| model.forward(b))
        .collect::<Result<_>>()?;
    let mut reports = Vec::with_capacity(levels);
    let mut confusion = Vec::with_capacity(levels);
    for level in 0..levels {
        let n = hierarchy.num_classes(level)?;
        let probs: Vec<Vec<f64>> = logits.iter().map(|z| softmax(&z[level])).collect();
        let truth: Vec<usize> = dataset.iter().map(|b| b.labels[level]).collect();
        let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
        let mut cm = ConfusionMatrix::new(level, n);
        for (&t, &p) in truth.iter().zip(&pred) {
            cm.accumulate(t, p)?;
        }
        let mut report = MetricReport::from_confusion(&cm, hierarchy, settings)?;
        report.auc = macro_auc(&probs, &truth);
        report.expected_error_class = (0..n)
            .map(|c| expected_error_class(&probs, &truth, &pred, c))
            .collect();
        reports.push(report);
        confusion.push(cm);
    }
    Ok(Evaluation { reports, confusion })
}

const CKPT_MAGIC: &[u8; 4] = b"SVMC";
const CKPT_VERSION: u32 = 1;

pub fn config_hash(canonical: &str) -> [u8; 32] {
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

/// Versioned little-endian dump: magic, version, config hash, dimension,
/// level count, classes per level, then per level the weights and biases as
/// `f64`.
pub fn encode_checkpoint(model: &PooledHierarchicalModel, hash: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(hash);
    out.extend_from_slice(&(model.dim as u32).to_le_bytes());
    out.extend_from_slice(&(model.heads.len() as u32).to_le_bytes());
    for c in model.class_counts() {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(PooledHierarchicalModel, [u8; 32])> {
    let path = std::path::PathBuf::from("<checkpoint>");
    let short = |expected: usize| Error::Truncated {
        path: path.clone(),
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 48 {
        return Err(short(48));
    }
    if &bytes[..4] != CKPT_MAGIC {
        return Err(Error::BadMagic { path });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != CKPT_VERSION {
        return Err(Error::UnsupportedVersion { path, version });
    }
    let mut hash = [0u8; 32];
    hash.copy_from_slice(&bytes[8..40]);
    let dim = word(40) as usize;
    let levels = word(44) as usize;
    let header = 48 + 4 * levels;
    if bytes.len() < header {
        return Err(short(header));
    }
    let counts: Vec<usize> = (0..levels).map(|l| word(48 + 4 * l) as usize).collect();
    let mut model = PooledHierarchicalModel::zeros(dim, &counts);
    let expected = header + 8 * model.num_params();
    if bytes.len() != expected {
        return Err(if bytes.len() < expected {
            short(expected)
        } else {
            Error::TrailingBytes {
                path,
                expected: expected as u64,
                found: bytes.len() as u64,
            }
        });
    }
    let params: Vec<f64> = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    model.set_params(&params);
    Ok((model, hash))
}
