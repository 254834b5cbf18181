//! Loss values with analytic gradients with respect to the logits.
//!
//! Every loss takes raw logits (one vector per hierarchy level), applies a
//! numerically stable softmax, clamps probabilities to `[PROB_FLOOR, 1]`
//! before taking logarithms, and returns the value together with
//! `d value / d logits` for each level.

mod alignment;
mod baselines;
mod severity;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

pub use alignment::{hierarchy_alignment, js_divergence};
pub use baselines::{cdw_ce, co2, hxe, weighted_ce};
pub use severity::{combined_loss, cross_entropy, msce};

/// Lower clamp applied to probabilities before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct LossValueAndGrad {
    pub value: f64,
    /// One gradient vector per level, same shapes as the logits.
    pub grad: Vec<Vec<f64>>,
    /// Set when a clamp changed a logarithm's argument.
    pub clamped: bool,
}

impl LossValueAndGrad {
    pub fn zeros(shapes: &[usize]) -> Self {
        Self {
            value: 0.0,
            grad: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            clamped: false,
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &LossValueAndGrad, scale: f64) {
        self.value += scale * other.value;
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            for (a, b) in g.iter_mut().zip(o) {
                *a += scale * b;
            }
        }
        self.clamped |= other.clamped;
    }
}

/// Hyper-parameters for the severity-aware losses and the baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// Scale of the under-diagnosis entries in the loss weight matrix.
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub delta_co2: f64,
    pub lambda_co2: f64,
    pub alpha_cdw: f64,
    pub alpha_hxe: f64,
    /// Per-level class weights for weighted CE; unit weights when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<Vec<f64>>>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            alpha: 1.6,
            lambda1: 2.0,
            lambda2: 1.0,
            delta_co2: 0.05,
            lambda_co2: 1.0,
            alpha_cdw: 1.0,
            alpha_hxe: 0.1,
            class_weights: None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 1, got {}",
                self.alpha
            )));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("delta_co2", self.delta_co2),
            ("lambda_co2", self.lambda_co2),
            ("alpha_hxe", self.alpha_hxe),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if !(self.alpha_cdw >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha_cdw must be >= 1, got {}",
                self.alpha_cdw
            )));
        }
        if let Some(ws) = &self.class_weights {
            if ws.iter().flatten().any(|&w| !(w > 0.0)) {
                return Err(Error::InvalidParameter(
                    "class weights must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Directional loss weights for one level, indexed `[predicted][true]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossWeightMatrix {
    pub level: usize,
    pub alpha: f64,
    pub entries: Vec<Vec<f64>>,
}

impl LossWeightMatrix {
    pub fn num_classes(&self) -> usize {
        self.entries.len()
    }

    /// Column of weights for a fixed true class.
    pub fn column(&self, truth: usize) -> Vec<f64> {
        self.entries.iter().map(|row| row[truth]).collect()
    }
}

/// `entries[i][j] = alpha * |i - j|` when predicting `i` for true class `j`
/// is an under-diagnosis, else 1.
pub fn build_loss_weights(hierarchy: &Hierarchy, alpha: f64) -> Result<Vec<LossWeightMatrix>> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "alpha must be > 1, got {alpha}"
        )));
    }
    (0..hierarchy.num_levels())
        .map(|level| {
            let n = hierarchy.num_classes(level)?;
            let mut entries = vec![vec![1.0; n]; n];
            for (i, row) in entries.iter_mut().enumerate() {
                for (j, e) in row.iter_mut().enumerate() {
                    if hierarchy.is_severe(level, i, j)? {
                        *e = alpha * i.abs_diff(j) as f64;
                    }
                }
            }
            Ok(LossWeightMatrix {
                level,
                alpha,
                entries,
            })
        })
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Pulls a gradient with respect to probabilities back through softmax:
/// `dz_k = p_k (g_k - sum_i g_i p_i)`.
pub fn softmax_backward(probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
    let dot: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(grad_probs)
        .map(|(p, g)| p * (g - dot))
        .collect()
}

/// `ln(max(p, PROB_FLOOR))` and whether the clamp was active.
pub(crate) fn clamped_ln(p: f64) -> (f64, bool) {
    if p < PROB_FLOOR {
        (PROB_FLOOR.ln(), true)
    } else {
        (p.ln(), false)
    }
}

pub(crate) fn check_targets(logits: &[Vec<f64>], targets: &[usize]) -> Result<()> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit levels but {} targets",
            logits.len(),
            targets.len()
        )));
    }
    for (h, (z, &t)) in logits.iter().zip(targets).enumerate() {
        if z.is_empty() {
            return Err(Error::Shape(format!("level {h} has no logits")));
        }
        if t >= z.len() {
            return Err(Error::ClassOutOfRange {
                level: h,
                index: t,
                classes: z.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_weights_for_chain() {
        let h = Hierarchy::single_chain(3);
        let m = &build_loss_weights(&h, 1.6).unwrap()[0];
        assert!((m.entries[0][2] - 3.2).abs() < 1e-12);
        assert!((m.entries[0][1] - 1.6).abs() < 1e-12);
        assert_eq!(m.entries[2][0], 1.0);
        for i in 0..3 {
            assert_eq!(m.entries[i][i], 1.0);
        }
        let h2 = Hierarchy::single_chain(2);
        let m = &build_loss_weights(&h2, 2.0).unwrap()[0];
        assert_eq!(m.entries, vec![vec![1.0, 2.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn equivalent_classes_get_unit_weights() {
        use crate::hierarchy::{Level, PriorityMatrix};
        let h = Hierarchy::new(vec![Level::unnamed(
            vec![],
            PriorityMatrix::all_equivalent(2),
        )])
        .unwrap();
        let m = &build_loss_weights(&h, 1.6).unwrap()[0];
        assert_eq!(m.entries, vec![vec![1.0; 2]; 2]);
    }

    #[test]
    fn alpha_must_exceed_one() {
        let h = Hierarchy::single_chain(2);
        assert!(build_loss_weights(&h, 1.0).is_err());
        assert!(build_loss_weights(&h, 0.5).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        let q = softmax(&[101.0, 102.0, 103.0]);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
