use super::{
    check_targets, clamped_ln, hierarchy_alignment, softmax, softmax_backward, HyperParams,
    LossValueAndGrad, LossWeightMatrix,
};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Sum over levels of `-ln p[target]`.
pub fn cross_entropy(logits: &[Vec<f64>], targets: &[usize]) -> Result<LossValueAndGrad> {
    check_targets(logits, targets)?;
    let mut out = LossValueAndGrad::zeros(&shapes(logits));
    for (h, (z, &t)) in logits.iter().zip(targets).enumerate() {
        let p = softmax(z);
        let (ln_p, clamped) = clamped_ln(p[t]);
        out.value -= ln_p;
        out.clamped |= clamped;
        if !clamped {
            for (k, g) in out.grad[h].iter_mut().enumerate() {
                *g = p[k] - if k == t { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// Mistake-severity cross-entropy.
///
/// Per level the CE term is scaled by `w = sum_i p[i] * M[i][target]`, the
/// expected directional weight of the current prediction. The gradient
/// includes the dependence of `w` on the prediction.
pub fn msce(
    logits: &[Vec<f64>],
    targets: &[usize],
    weights: &[LossWeightMatrix],
) -> Result<LossValueAndGrad> {
    check_targets(logits, targets)?;
    if weights.len() != logits.len() {
        return Err(Error::Shape(format!(
            "{} weight matrices for {} levels",
            weights.len(),
            logits.len()
        )));
    }
    let mut out = LossValueAndGrad::zeros(&shapes(logits));
    for (h, ((z, &t), m)) in logits.iter().zip(targets).zip(weights).enumerate() {
        if m.num_classes() != z.len() {
            return Err(Error::Shape(format!(
                "level {h}: {}x{} weight matrix for {} classes",
                m.num_classes(),
                m.num_classes(),
                z.len()
            )));
        }
        let p = softmax(z);
        let col = m.column(t);
        let w: f64 = p.iter().zip(&col).map(|(a, b)| a * b).sum();
        let (ln_p, clamped) = clamped_ln(p[t]);
        let ce = -ln_p;
        out.value += w * ce;
        out.clamped |= clamped;

        let mut dp: Vec<f64> = col.iter().map(|m_it| m_it * ce).collect();
        if !clamped {
            dp[t] -= w / p[t];
        }
        out.grad[h] = softmax_backward(&p, &dp);
    }
    Ok(out)
}

/// `lambda1 * msce + lambda2 * hierarchy_alignment`.
pub fn combined_loss(
    logits: &[Vec<f64>],
    targets: &[usize],
    weights: &[LossWeightMatrix],
    hierarchy: &Hierarchy,
    hp: &HyperParams,
) -> Result<LossValueAndGrad> {
    let mut out = LossValueAndGrad::zeros(&shapes(logits));
    let severity = msce(logits, targets, weights)?;
    out.add_scaled(&severity, hp.lambda1);
    let align = hierarchy_alignment(logits, hierarchy)?;
    out.add_scaled(&align, hp.lambda2);
    Ok(out)
}

pub(super) fn shapes(logits: &[Vec<f64>]) -> Vec<usize> {
    logits.iter().map(Vec::len).collect()
}
