//! Cross entropy, batch-hard triplet, softplus and the feature-diversity
//! penalty, each returning its value together with exact gradients.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// `ln(1 + e^x)`, computed as `max(x, 0) + ln(1 + e^-|x|)`.
pub fn softplus(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Numeric(format!("softplus of non-finite value {x}")));
    }
    Ok(x.max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Derivative of softplus.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct FdlOutput {
    pub value: f64,
    pub grad_f1: Array2<f64>,
    pub grad_f2: Array2<f64>,
}

/// Batch mean of `S(f1_i . mean_f2_i) + S(f2_i . mean_f1_i)`.
///
/// The mean-encoder rows are constants here: no gradient flows into them.
pub fn fdl_loss(
    f1: ArrayView2<f64>,
    f2: ArrayView2<f64>,
    mean_f1: ArrayView2<f64>,
    mean_f2: ArrayView2<f64>,
) -> Result<FdlOutput> {
    let shape = f1.dim();
    for (name, m) in [("f2", &f2), ("mean_f1", &mean_f1), ("mean_f2", &mean_f2)] {
        if m.dim() != shape {
            return Err(shape_err(name, shape, m.dim()));
        }
    }
    let rows = shape.0;
    if rows == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let inv = 1.0 / rows as f64;
    let mut value = 0.0;
    let mut grad_f1 = Array2::zeros(shape);
    let mut grad_f2 = Array2::zeros(shape);
    for i in 0..rows {
        let x12 = f1.row(i).dot(&mean_f2.row(i));
        let x21 = f2.row(i).dot(&mean_f1.row(i));
        value += softplus(x12)? + softplus(x21)?;
        grad_f1.row_mut(i).assign(&(&mean_f2.row(i) * (sigmoid(x12) * inv)));
        grad_f2.row_mut(i).assign(&(&mean_f1.row(i) * (sigmoid(x21) * inv)));
    }
    Ok(FdlOutput { value: value * inv, grad_f1, grad_f2 })
}

#[derive(Debug, Clone)]
pub struct CrossEntropyOutput {
    pub value: f64,
    pub grad_logits1: Array2<f64>,
    pub grad_logits2: Array2<f64>,
}

/// Mean over the batch of `-(ln p1[y] + ln p2[y])` for two classifiers'
/// softmax outputs. Gradients are taken with respect to each classifier's
/// logits, i.e. `(p - onehot) / B`.
pub fn cross_entropy_loss(probs_c1: ArrayView2<f64>, probs_c2: ArrayView2<f64>, labels: &[usize]) -> Result<CrossEntropyOutput> {
    if probs_c1.dim() != probs_c2.dim() {
        return Err(shape_err("second classifier probabilities", probs_c1.dim(), probs_c2.dim()));
    }
    let (rows, classes) = probs_c1.dim();
    if labels.len() != rows {
        return Err(shape_err("label count", rows, labels.len()));
    }
    if rows == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let inv = 1.0 / rows as f64;
    let mut value = 0.0;
    let mut grad_logits1 = probs_c1.to_owned();
    let mut grad_logits2 = probs_c2.to_owned();
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Label(format!("label {y} out of range for {classes} classes")));
        }
        let (p1, p2) = (probs_c1[[i, y]], probs_c2[[i, y]]);
        if !(p1 > 0.0 && p2 > 0.0) {
            return Err(Error::Numeric(format!("non-positive probability on label {y} at row {i}")));
        }
        value -= p1.ln() + p2.ln();
        grad_logits1[[i, y]] -= 1.0;
        grad_logits2[[i, y]] -= 1.0;
    }
    grad_logits1.mapv_inplace(|v| v * inv);
    grad_logits2.mapv_inplace(|v| v * inv);
    // -ln(1) is -0.0; report a clean zero.
    Ok(CrossEntropyOutput { value: value * inv + 0.0, grad_logits1, grad_logits2 })
}

#[derive(Debug, Clone)]
pub struct TripletOutput {
    pub value: f64,
    pub grad: Array2<f64>,
    /// Per anchor: (hardest positive row, hardest negative row).
    pub mined: Vec<(usize, usize)>,
    pub active: usize,
}

fn squared_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Hardest positive (farthest same-label row, anchor excluded) and hardest
/// negative (closest foreign row) per anchor. Ties go to the lowest row index.
pub fn mine_hardest(features: ArrayView2<f64>, labels: &[usize]) -> Result<Vec<(usize, usize, f64, f64)>> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(shape_err("label count", n, labels.len()));
    }
    let mut out = Vec::with_capacity(n);
    for a in 0..n {
        let mut pos: Option<(usize, f64)> = None;
        let mut neg: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = squared_distance(features.row(a), features.row(j));
            if labels[j] == labels[a] {
                if pos.is_none_or(|(_, best)| d > best) {
                    pos = Some((j, d));
                }
            } else if neg.is_none_or(|(_, best)| d < best) {
                neg = Some((j, d));
            }
        }
        match (pos, neg) {
            (Some((p, dp)), Some((q, dn))) => out.push((p, q, dp, dn)),
            (None, _) => {
                return Err(Error::BatchComposition(format!("anchor {a} (label {}) has no positive", labels[a])))
            }
            (_, None) => {
                return Err(Error::BatchComposition(format!("anchor {a} (label {}) has no negative", labels[a])))
            }
        }
    }
    Ok(out)
}

/// `[tau + d_pos - d_neg]_+` on squared distances.
pub fn triplet_hinge(tau: f64, d_pos: f64, d_neg: f64) -> f64 {
    (tau + d_pos - d_neg).max(0.0)
}

/// Batch mean of `[tau + |a - p|^2 - |a - n|^2]_+` with batch-hard mining.
pub fn triplet_loss(features: ArrayView2<f64>, labels: &[usize], tau: f64) -> Result<TripletOutput> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let mined = mine_hardest(features, labels)?;
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut active = 0;
    let mut grad = Array2::<f64>::zeros(features.raw_dim());
    let mut pairs = Vec::with_capacity(n);
    for (a, &(p, q, dp, dn)) in mined.iter().enumerate() {
        pairs.push((p, q));
        let hinge = triplet_hinge(tau, dp, dn);
        // Subgradient zero at the kink.
        if hinge == 0.0 {
            continue;
        }
        active += 1;
        value += hinge;
        let (fa, fp, fq) = (features.row(a), features.row(p), features.row(q));
        let to_pos = &fa - &fp;
        let to_neg = &fa - &fq;
        let ga = (&to_pos - &to_neg) * (2.0 * inv);
        let mut row = grad.row_mut(a);
        row += &ga;
        let mut row = grad.row_mut(p);
        row.scaled_add(-2.0 * inv, &to_pos);
        let mut row = grad.row_mut(q);
        row.scaled_add(2.0 * inv, &to_neg);
    }
    Ok(TripletOutput { value: value * inv, grad, mined: pairs, active })
}

/// Weighted components of the overall objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub tri: f64,
    pub fdl: f64,
    pub total: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

pub fn total_loss(ce: f64, tri: f64, fdl: f64, beta: f64, gamma: f64, delta: f64) -> Result<LossBreakdown> {
    if ![beta, gamma, delta].iter().all(|c| c.is_finite()) {
        return Err(Error::Numeric("loss coefficients must be finite".into()));
    }
    Ok(LossBreakdown { ce, tri, fdl, total: beta * ce + gamma * tri + delta * fdl, beta, gamma, delta })
}

impl LossBreakdown {
    /// Elementwise `beta * g_ce + gamma * g_tri + delta * g_fdl`.
    pub fn combine_gradients(&self, ce: ArrayView2<f64>, tri: ArrayView2<f64>, fdl: ArrayView2<f64>) -> Result<Array2<f64>> {
        if ce.dim() != tri.dim() || ce.dim() != fdl.dim() {
            return Err(Error::Shape("component gradients have different shapes".into()));
        }
        let mut out = Array2::zeros(ce.raw_dim());
        Zip::from(&mut out).and(&ce).and(&tri).and(&fdl).for_each(|o, &c, &t, &f| {
            *o = self.beta * c + self.gamma * t + self.delta * f;
        });
        Ok(out)
    }

    /// Running mean helper for per-epoch summaries.
    pub fn mean_of(items: &[LossBreakdown]) -> LossBreakdown {
        let Some(first) = items.first() else {
            return LossBreakdown::default();
        };
        let n = items.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        LossBreakdown {
            ce: sum(|b| b.ce),
            tri: sum(|b| b.tri),
            fdl: sum(|b| b.fdl),
            total: sum(|b| b.total),
            beta: first.beta,
            gamma: first.gamma,
            delta: first.delta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn unit_rows(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal));
        for mut r in m.rows_mut() {
            let n = r.dot(&r).sqrt();
            r.mapv_inplace(|v| v / n);
        }
        m
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus(-50.0).unwrap() < 1e-20);
        assert!(softplus(50.0).unwrap() - 50.0 < 1e-20);
        assert!(softplus(700.0).unwrap().is_finite());
        assert!(softplus(-700.0).unwrap() > 0.0);
        assert!(matches!(softplus(f64::NAN), Err(Error::Numeric(_))));
        assert!(softplus(f64::INFINITY).is_err());
    }

    #[test]
    fn fdl_reference_values() {
        let e = Array2::<f64>::eye(4);
        let f1 = e.slice(ndarray::s![0..2, ..]).to_owned();
        let f2 = e.slice(ndarray::s![2..4, ..]).to_owned();
        // Orthogonal rows everywhere: 2 ln 2.
        let out = fdl_loss(f1.view(), f2.view(), f1.view(), f2.view()).unwrap();
        assert!((out.value - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);

        let a = unit_rows(5, 6, 1);
        let b = unit_rows(5, 6, 2);
        let out = fdl_loss(a.view(), b.view(), b.view(), a.view()).unwrap();
        assert!((out.value - 2.0 * softplus(1.0).unwrap()).abs() < 1e-12);
        assert!(fdl_loss(a.view(), b.view(), b.view(), f1.view()).is_err());
    }

    #[test]
    fn fdl_gradient_matches_finite_differences() {
        let (f1, f2, m1, m2) = (unit_rows(4, 5, 1), unit_rows(4, 5, 2), unit_rows(4, 5, 3), unit_rows(4, 5, 4));
        let out = fdl_loss(f1.view(), f2.view(), m1.view(), m2.view()).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (3, 4)] {
            let mut p = f1.clone();
            p[idx] += h;
            let up = fdl_loss(p.view(), f2.view(), m1.view(), m2.view()).unwrap().value;
            p[idx] -= 2.0 * h;
            let down = fdl_loss(p.view(), f2.view(), m1.view(), m2.view()).unwrap().value;
            assert!(rel_err((up - down) / (2.0 * h), out.grad_f1[idx]) < 1e-5);
        }
    }

    #[test]
    fn cross_entropy_values_and_gradient() {
        let perfect = array![[1.0, 0.0], [0.0, 1.0]];
        let out = cross_entropy_loss(perfect.view(), perfect.view(), &[0, 1]).unwrap();
        assert_eq!(out.value, 0.0);

        let uniform = Array2::from_elem((3, 5), 0.2);
        let out = cross_entropy_loss(uniform.view(), uniform.view(), &[0, 4, 2]).unwrap();
        assert!((out.value - 2.0 * 5f64.ln()).abs() < 1e-12);
        assert!(matches!(cross_entropy_loss(uniform.view(), uniform.view(), &[0, 5, 2]), Err(Error::Label(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l1 = Array2::from_shape_simple_fn((4, 3), || rng.sample::<f64, _>(StandardNormal));
        let l2 = Array2::from_shape_simple_fn((4, 3), || rng.sample::<f64, _>(StandardNormal));
        let labels = [2, 0, 1, 1];
        let value = |a: &Array2<f64>, b: &Array2<f64>| {
            let pa = crate::encoder::softmax_rows(a.view());
            let pb = crate::encoder::softmax_rows(b.view());
            cross_entropy_loss(pa.view(), pb.view(), &labels).unwrap()
        };
        let out = value(&l1, &l2);
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut p = l1.clone();
                p[[i, j]] += h;
                let up = value(&p, &l2).value;
                p[[i, j]] -= 2.0 * h;
                let down = value(&p, &l2).value;
                assert!(rel_err((up - down) / (2.0 * h), out.grad_logits1[[i, j]]) < 1e-5);
            }
        }
    }

    #[test]
    fn triplet_hinge_arithmetic() {
        assert_eq!(triplet_hinge(0.3, 0.1, 0.5), 0.0);
        assert!((triplet_hinge(0.3, 0.4, 0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn triplet_requires_positive_and_negative() {
        let f = unit_rows(3, 4, 1);
        assert!(matches!(triplet_loss(f.view(), &[0, 0, 1], 0.3), Err(Error::BatchComposition(_))));
        assert!(matches!(triplet_loss(f.view(), &[0, 0, 0], 0.3), Err(Error::BatchComposition(_))));
    }

    #[test]
    fn triplet_one_dimensional_case() {
        // Anchor 0 at the origin: positive at distance^2 0.4, negative at 0.5.
        let f = array![[0.0], [0.4f64.sqrt()], [-(0.5f64.sqrt())], [-(0.5f64.sqrt()) - 0.01]];
        let out = triplet_loss(f.view(), &[0, 0, 1, 1], 0.3).unwrap();
        assert_eq!(out.mined[0], (1, 2));
        let hinges: f64 = (0..4)
            .map(|a| {
                let (p, q) = out.mined[a];
                triplet_hinge(0.3, (f[[a, 0]] - f[[p, 0]]).powi(2), (f[[a, 0]] - f[[q, 0]]).powi(2))
            })
            .sum();
        assert!((out.value - hinges / 4.0).abs() < 1e-12);
        assert!(((0.3 + 0.4 - 0.5) - triplet_hinge(0.3, 0.4, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn triplet_gradient_matches_finite_differences() {
        let f = unit_rows(8, 5, 11);
        let labels = [0, 0, 1, 1, 2, 2, 3, 3];
        let out = triplet_loss(f.view(), &labels, 0.3).unwrap();
        assert!(out.active > 0);
        let h = 1e-6;
        for i in 0..8 {
            for j in 0..5 {
                let mut p = f.clone();
                p[[i, j]] += h;
                let up = triplet_loss(p.view(), &labels, 0.3).unwrap().value;
                p[[i, j]] -= 2.0 * h;
                let down = triplet_loss(p.view(), &labels, 0.3).unwrap().value;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - out.grad[[i, j]]).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", out.grad[[i, j]]);
            }
        }
    }

    #[test]
    fn total_loss_combination() {
        let b = total_loss(2.0, 1.0, 0.4, 1.0, 1.0, 0.5).unwrap();
        assert!((b.total - 3.2).abs() < 1e-12);
        let off1 = total_loss(2.0, 1.0, 0.4, 1.0, 1.0, 0.0).unwrap();
        let off2 = total_loss(2.0, 1.0, 9.0, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(off1.total, off2.total);
        assert!(total_loss(1.0, 1.0, 1.0, f64::NAN, 1.0, 1.0).is_err());

        let (g1, g2, g3) = (unit_rows(3, 4, 1), unit_rows(3, 4, 2), unit_rows(3, 4, 3));
        let combined = b.combine_gradients(g1.view(), g2.view(), g3.view()).unwrap();
        let manual = &g1 * 1.0 + &g2 * 1.0 + &g3 * 0.5;
        ndarray::Zip::from(&combined).and(&manual).for_each(|a, b| assert!((a - b).abs() < 1e-12));
    }
}
