//! Severity-oriented cross-entropy variants used for comparison.

use super::severity::shapes;
use super::{check_targets, clamped_ln, softmax, softmax_backward, LossValueAndGrad, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Per-level `-w[target] * ln p[target]`.
pub fn weighted_ce(
    logits: &[Vec<f64>],
    targets: &[usize],
    class_weights: &[Vec<f64>],
) -> Result<LossValueAndGrad> {
    check_targets(logits, targets)?;
    if class_weights.len() != logits.len() {
        return Err(Error::Shape(format!(
            "{} weight vectors for {} levels",
            class_weights.len(),
            logits.len()
        )));
    }
    let mut out = LossValueAndGrad::zeros(&shapes(logits));
    for (h, ((z, &t), w)) in logits.iter().zip(targets).zip(class_weights).enumerate() {
        if w.len() != z.len() {
            return Err(Error::Shape(format!(
                "level {h}: {} class weights for {} classes",
                w.len(),
                z.len()
            )));
        }
        if w.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter(
                "class weights must be positive".into(),
            ));
        }
        let p = softmax(z);
        let (ln_p, clamped) = clamped_ln(p[t]);
        out.value -= w[t] * ln_p;
        out.clamped |= clamped;
        if !clamped {
            for (k, g) in out.grad[h].iter_mut().enumerate() {
                *g = w[t] * (p[k] - if k == t { 1.0 } else { 0.0 });
            }
        }
    }
    Ok(out)
}

/// Hierarchical cross-entropy over the finest-level softmax.
///
/// The target's root-to-leaf path is scored term by term as
/// `-exp(-alpha * height(node)) * ln p(node | parent)`, where a node's
/// probability is the softmax mass of the leaves under it and heights are
/// counted from the leaf (leaf = 0). The returned gradient has a single
/// entry: the finest-level logits.
pub fn hxe(
    logits_finest: &[f64],
    target: usize,
    hierarchy: &Hierarchy,
    alpha_hxe: f64,
) -> Result<LossValueAndGrad> {
    if hierarchy.num_levels() < 2 {
        return Err(Error::Precondition("hxe needs at least two levels".into()));
    }
    let finest = hierarchy.finest();
    let n = hierarchy.num_classes(finest)?;
    if logits_finest.len() != n {
        return Err(Error::Shape(format!(
            "{} logits for {n} leaves",
            logits_finest.len()
        )));
    }
    let path = hierarchy.labels_for(target)?;
    let p = softmax(logits_finest);

    // membership[l][leaf] and mass for the path node at each level
    let mut members = Vec::with_capacity(path.len());
    let mut mass = Vec::with_capacity(path.len());
    for (level, &class) in path.iter().enumerate() {
        let leaves = hierarchy.leaves_under(level, class)?;
        let mut m = vec![false; n];
        for &leaf in &leaves {
            m[leaf] = true;
        }
        mass.push(leaves.iter().map(|&j| p[j]).sum::<f64>());
        members.push(m);
    }

    let mut out = LossValueAndGrad::zeros(&[n]);
    let mut dp = vec![0.0; n];
    let depth = path.len();
    for level in (0..depth).rev() {
        let height = (depth - 1 - level) as f64;
        let weight = (-alpha_hxe * height).exp();
        let (ln_node, c_node) = clamped_ln(mass[level]);
        let (ln_parent, c_parent) = if level == 0 {
            (0.0, false)
        } else {
            clamped_ln(mass[level - 1])
        };
        out.clamped |= c_node | c_parent;
        out.value -= weight * (ln_node - ln_parent);
        if !c_node {
            for j in 0..n {
                if members[level][j] {
                    dp[j] -= weight / mass[level].max(PROB_FLOOR);
                }
            }
        }
        if level > 0 && !c_parent {
            for j in 0..n {
                if members[level - 1][j] {
                    dp[j] += weight / mass[level - 1].max(PROB_FLOOR);
                }
            }
        }
    }
    out.grad[0] = softmax_backward(&p, &dp);
    Ok(out)
}

/// CE plus unimodality hinges around the target: probabilities should rise
/// up to the target and fall after it.
///
/// `c` ranges over `0..C-1` so that `p[c + 1]` exists; the rising branch
/// stops before the target.
pub fn co2(logits: &[f64], target: usize, delta: f64, lambda_co2: f64) -> Result<LossValueAndGrad> {
    if target >= logits.len() {
        return Err(Error::ClassOutOfRange {
            level: 0,
            index: target,
            classes: logits.len(),
        });
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be >= 0, got {delta}"
        )));
    }
    let c_len = logits.len();
    let p = softmax(logits);
    let (ln_p, clamped) = clamped_ln(p[target]);
    let mut value = -ln_p;
    let mut dp = vec![0.0; c_len];
    if !clamped {
        dp[target] = -1.0 / p[target];
    }
    for c in 0..c_len.saturating_sub(1) {
        // falling side: penalize p[c+1] exceeding p[c] - delta
        if c >= target {
            let arg = delta + p[c + 1] - p[c];
            if arg > 0.0 {
                value += lambda_co2 * arg;
                dp[c + 1] += lambda_co2;
                dp[c] -= lambda_co2;
            }
        }
        // rising side
        if c < target {
            let arg = delta + p[c] - p[c + 1];
            if arg > 0.0 {
                value += lambda_co2 * arg;
                dp[c] += lambda_co2;
                dp[c + 1] -= lambda_co2;
            }
        }
    }
    Ok(LossValueAndGrad {
        value,
        grad: vec![softmax_backward(&p, &dp)],
        clamped,
    })
}

/// Class-distance weighted CE: `-sum_c |c - target|^alpha * ln(1 - p[c])`.
pub fn cdw_ce(logits: &[f64], target: usize, alpha_cdw: f64) -> Result<LossValueAndGrad> {
    if target >= logits.len() {
        return Err(Error::ClassOutOfRange {
            level: 0,
            index: target,
            classes: logits.len(),
        });
    }
    if !(alpha_cdw >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha_cdw must be >= 1, got {alpha_cdw}"
        )));
    }
    let p = softmax(logits);
    let mut value = 0.0;
    let mut clamped = false;
    let mut dp = vec![0.0; p.len()];
    for (c, &pc) in p.iter().enumerate() {
        if c == target {
            continue;
        }
        let weight = (c.abs_diff(target) as f64).powf(alpha_cdw);
        let rest = 1.0 - pc;
        let (ln_rest, c_rest) = clamped_ln(rest);
        clamped |= c_rest;
        value -= weight * ln_rest;
        if !c_rest {
            dp[c] = weight / rest;
        }
    }
    Ok(LossValueAndGrad {
        value,
        grad: vec![softmax_backward(&p, &dp)],
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::cross_entropy;
    use std::f64::consts::LN_2;

    fn logits_of(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn weighted_ce_examples() {
        let z = vec![vec![0.3, -0.2, 1.1]];
        let unit = weighted_ce(&z, &[1], &[vec![1.0; 3]]).unwrap();
        assert_eq!(unit, cross_entropy(&z, &[1]).unwrap());

        let v = weighted_ce(&[vec![0.0, 0.0]], &[1], &[vec![1.0, 3.0]]).unwrap();
        assert!((v.value - 3.0 * LN_2).abs() < 1e-12);

        let v = weighted_ce(&[vec![0.0; 3]], &[2], &[vec![2.0, 3.0, 5.0]]).unwrap();
        assert!((v.value - 5.0 * 3f64.ln()).abs() < 1e-12);

        assert!(weighted_ce(&[vec![0.0; 3]], &[2], &[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn hxe_uniform_binary_tree() {
        let h = Hierarchy::chains(&[2, 4], &[vec![0, 0, 1, 1]]).unwrap();
        let v = hxe(&[0.0; 4], 2, &h, 0.0).unwrap();
        assert!((v.value - 2.0 * LN_2).abs() < 1e-12);
        // large alpha keeps only the leaf term: p(leaf | parent) = 1/2
        let v = hxe(&[0.0; 4], 2, &h, 60.0).unwrap();
        assert!((v.value - LN_2).abs() < 1e-12);
    }

    #[test]
    fn hxe_needs_two_levels() {
        let h = Hierarchy::single_chain(3);
        assert!(hxe(&[0.0; 3], 0, &h, 0.0).is_err());
    }

    #[test]
    fn co2_examples() {
        // target 0, p = [0.2, 0.3, 0.5]: falling-side hinges 0.1 + 0.2
        let z = logits_of(&[0.2, 0.3, 0.5]);
        let v = co2(&z, 0, 0.0, 1.0).unwrap();
        assert!((v.value - (-(0.2f64).ln() + 0.3)).abs() < 1e-12);

        let v = co2(&[0.0; 4], 1, 0.0, 1.0).unwrap();
        assert!((v.value - 4f64.ln()).abs() < 1e-12);

        // unimodal with peak at target and margins above delta
        let z = logits_of(&[0.1, 0.2, 0.4, 0.2, 0.1]);
        let v = co2(&z, 2, 0.05, 1.0).unwrap();
        assert!((v.value + 0.4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cdw_ce_examples() {
        let z = logits_of(&[0.5, 0.25, 0.25]);
        let v = cdw_ce(&z, 0, 1.0).unwrap();
        assert!((v.value - (-3.0 * 0.75f64.ln())).abs() < 1e-12);
        assert!((v.value - 0.8630).abs() < 1e-4);
        let v = cdw_ce(&z, 0, 2.0).unwrap();
        assert!((v.value - (-5.0 * 0.75f64.ln())).abs() < 1e-12);

        let v = cdw_ce(&[50.0, -50.0, -50.0], 0, 1.0).unwrap();
        assert!(v.value.abs() < 1e-12);
    }

    #[test]
    fn cdw_ce_flags_saturated_off_target() {
        let v = cdw_ce(&[-800.0, 800.0], 0, 1.0).unwrap();
        assert!(v.clamped);
        assert!(v.value.is_finite());
    }
}
