use super::severity::shapes;
use super::{clamped_ln, softmax, softmax_backward, LossValueAndGrad};
use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Jensen-Shannon divergence (natural log) with the probability floor applied
/// inside the logarithms.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    js_with_grad(p, q).0
}

/// Returns `(JS, dJS/dp, dJS/dq, clamped)`.
fn js_with_grad(p: &[f64], q: &[f64]) -> (f64, Vec<f64>, Vec<f64>, bool) {
    let mut value = 0.0;
    let mut clamped = false;
    let mut dp = vec![0.0; p.len()];
    let mut dq = vec![0.0; q.len()];
    for i in 0..p.len() {
        let m = 0.5 * (p[i] + q[i]);
        let (ln_m, c_m) = clamped_ln(m);
        let (ln_p, c_p) = clamped_ln(p[i]);
        let (ln_q, c_q) = clamped_ln(q[i]);
        clamped |= c_m | c_p | c_q;
        value += 0.5 * (p[i] * (ln_p - ln_m) + q[i] * (ln_q - ln_m));
        dp[i] = 0.5 * (ln_p - ln_m);
        dq[i] = 0.5 * (ln_q - ln_m);
    }
    (value, dp, dq, clamped)
}

/// Sum over consecutive level pairs of `JS(p_coarse || aggregate(p_fine))`.
///
/// Gradients flow into both levels. With fewer than two levels the value is
/// zero.
pub fn hierarchy_alignment(logits: &[Vec<f64>], hierarchy: &Hierarchy) -> Result<LossValueAndGrad> {
    if logits.len() != hierarchy.num_levels() {
        return Err(Error::Shape(format!(
            "{} logit levels for a {}-level hierarchy",
            logits.len(),
            hierarchy.num_levels()
        )));
    }
    for (h, z) in logits.iter().enumerate() {
        let n = hierarchy.num_classes(h)?;
        if z.len() != n {
            return Err(Error::Shape(format!(
                "level {h}: {} logits for {n} classes",
                z.len()
            )));
        }
    }
    let mut out = LossValueAndGrad::zeros(&shapes(logits));
    if logits.len() < 2 {
        return Ok(out);
    }
    let probs: Vec<Vec<f64>> = logits.iter().map(|z| softmax(z)).collect();
    for h in 0..logits.len() - 1 {
        let aggregated = hierarchy.sum_into_parent(h + 1, &probs[h + 1]);
        let (value, dp, dq, clamped) = js_with_grad(&probs[h], &aggregated);
        out.value += value;
        out.clamped |= clamped;

        for (g, d) in out.grad[h].iter_mut().zip(softmax_backward(&probs[h], &dp)) {
            *g += d;
        }
        let parents = &hierarchy.levels()[h + 1].parents;
        let d_fine: Vec<f64> = parents.iter().map(|&pa| dq[pa]).collect();
        for (g, d) in out.grad[h + 1]
            .iter_mut()
            .zip(softmax_backward(&probs[h + 1], &d_fine))
        {
            *g += d;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn logits_of(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn aligned_levels_have_zero_divergence() {
        let h = Hierarchy::chains(&[2, 3], &[vec![0, 0, 1]]).unwrap();
        let z = vec![logits_of(&[0.5, 0.5]), logits_of(&[0.2, 0.3, 0.5])];
        let v = hierarchy_alignment(&z, &h).unwrap();
        assert!(v.value.abs() < 1e-12);
    }

    #[test]
    fn disjoint_levels_reach_ln2() {
        let h = Hierarchy::chains(&[2, 3], &[vec![0, 0, 1]]).unwrap();
        let z = vec![vec![40.0, -40.0], vec![-40.0, -40.0, 40.0]];
        let v = hierarchy_alignment(&z, &h).unwrap();
        assert!((v.value - LN_2).abs() < 1e-9, "{}", v.value);
    }

    #[test]
    fn single_level_contributes_nothing() {
        let h = Hierarchy::single_chain(3);
        let v = hierarchy_alignment(&[vec![0.1, 0.2, 0.3]], &h).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.grad[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn js_is_symmetric() {
        let p = [0.1, 0.6, 0.3];
        let q = [0.5, 0.2, 0.3];
        assert!((js_divergence(&p, &q) - js_divergence(&q, &p)).abs() < 1e-15);
    }
}
