//! Oracles and fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use udalab_core::encoder::{init_model, Activation, DualBranchModel};
use udalab_core::trainer::{objective_and_gradients, Batch, ExperimentConfig, ModelGrads};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(StandardNormal))
}

// ---------------------------------------------------------------------------
// Finite differences over the full objective

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

/// Which loss terms are switched on for a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

pub const WEIGHTINGS: [(&str, Weights); 4] = [
    ("ce", Weights { beta: 1.0, gamma: 0.0, delta: 0.0 }),
    ("triplet", Weights { beta: 0.0, gamma: 1.0, delta: 0.0 }),
    ("fdl", Weights { beta: 0.0, gamma: 0.0, delta: 1.0 }),
    ("total", Weights { beta: 1.0, gamma: 1.0, delta: 0.5 }),
];

pub struct GradCase {
    pub model: DualBranchModel,
    pub source: Batch,
    pub target: Batch,
    pub config: ExperimentConfig,
}

fn pk_batch(p: usize, k: usize, dim: usize, classes: usize, rng: &mut impl Rng) -> Batch {
    let mut labels = Vec::with_capacity(p * k);
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < p {
        let c = rng.random_range(0..classes);
        if !chosen.contains(&c) {
            chosen.push(c);
        }
    }
    for &c in &chosen {
        labels.extend(std::iter::repeat_n(c, k));
    }
    Batch { inputs: gaussian(p * k, dim, rng), labels, sample_ids: (0..p * k).collect() }
}

/// A random model with a target head and one random PK batch per domain.
pub fn grad_case(seed: u64, w: Weights) -> GradCase {
    let mut r = rng(seed);
    let arch = [6, 8, 5];
    let mut model = init_model(&arch, Activation::Tanh, 5, seed).unwrap();
    // Perturb the mean encoders so they differ from the live ones.
    for enc in [&mut model.mean_f1.0, &mut model.mean_f2.0] {
        for l in &mut enc.layers {
            l.weight += &(gaussian(l.weight.nrows(), l.weight.ncols(), &mut r) * 0.3);
        }
    }
    let norm_rows = |k: usize, r: &mut ChaCha8Rng| {
        let mut c = gaussian(k, 5, r);
        for mut row in c.rows_mut() {
            let n = row.dot(&row).sqrt();
            row /= n;
        }
        c
    };
    let c1 = norm_rows(4, &mut r);
    let c2 = norm_rows(4, &mut r);
    model.rebuild_target_classifier(&c1, &c2).unwrap();
    for head in [model.c1.target.as_mut().unwrap(), model.c2.target.as_mut().unwrap()] {
        head.bias = Array1::from_shape_simple_fn(4, || r.random_range(-0.5..0.5));
        head.weight *= 2.0;
    }
    let source = pk_batch(3, 3, 6, 5, &mut r);
    let target = pk_batch(3, 2, 6, 4, &mut r);
    let config = ExperimentConfig {
        beta: w.beta,
        gamma: w.gamma,
        delta: w.delta,
        tau: 0.3,
        arch: arch.to_vec(),
        activation: Activation::Tanh,
        ..ExperimentConfig::default()
    };
    GradCase { model, source, target, config }
}

/// Every trainable tensor of the model as a flat mutable slice, in a fixed order.
pub fn tensors_mut(m: &mut DualBranchModel) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for enc in [&mut m.f1, &mut m.f2] {
        for l in &mut enc.layers {
            out.push(l.weight.as_slice_mut().unwrap());
            out.push(l.bias.as_slice_mut().unwrap());
        }
    }
    for head in [Some(&mut m.c1.source), Some(&mut m.c2.source), m.c1.target.as_mut(), m.c2.target.as_mut()]
        .into_iter()
        .flatten()
    {
        out.push(head.weight.as_slice_mut().unwrap());
        out.push(head.bias.as_slice_mut().unwrap());
    }
    out
}

/// Gradient tensors in the order of [`tensors_mut`].
pub fn grad_tensors(g: &ModelGrads) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for enc in [&g.f1, &g.f2] {
        for l in &enc.layers {
            out.push(l.weight.iter().copied().collect());
            out.push(l.bias.to_vec());
        }
    }
    for head in [Some(&g.c1_source), Some(&g.c2_source), g.c1_target.as_ref(), g.c2_target.as_ref()]
        .into_iter()
        .flatten()
    {
        out.push(head.weight.iter().copied().collect());
        out.push(head.bias.to_vec());
    }
    out
}

/// Largest per-tensor relative error ‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖).
pub fn max_relative_error(case: &mut GradCase) -> f64 {
    let loss = |c: &GradCase| {
        objective_and_gradients(&c.model, &c.source, Some(&c.target), &c.config).unwrap().0.total
    };
    let analytic = grad_tensors(&objective_and_gradients(&case.model, &case.source, Some(&case.target), &case.config).unwrap().1);
    let shapes: Vec<usize> = tensors_mut(&mut case.model).iter().map(|t| t.len()).collect();
    assert_eq!(shapes.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for (t, &len) in shapes.iter().enumerate() {
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = tensors_mut(&mut case.model)[t][i];
            tensors_mut(&mut case.model)[t][i] = orig + FD_STEP;
            let up = loss(case);
            tensors_mut(&mut case.model)[t][i] = orig - FD_STEP;
            let down = loss(case);
            tensors_mut(&mut case.model)[t][i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        let diff: f64 = analytic[t].iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic[t].iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        if scale > 1e-9 {
            worst = worst.max(diff / scale);
        } else {
            worst = worst.max(diff);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// DBSCAN oracle

/// Cubic-time density reachability: the transitive closure of the core-core
/// "within eps" relation, computed Floyd-Warshall style. Non-core points
/// within eps of a core take the component of the nearest core (ties: the
/// component whose smallest core index is lowest).
pub fn dbscan_oracle(d: &Array2<f64>, eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = d.nrows();
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| d[[i, j]] <= eps).count() >= min_pts).collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && (i == j || d[[i, j]] <= eps);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if !reach[i][k] {
                continue;
            }
            for j in 0..n {
                if reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    // Component key: smallest core index reachable from the core.
    let root = |i: usize| (0..n).find(|&j| reach[i][j]).unwrap();
    (0..n)
        .map(|i| {
            if core[i] {
                return Some(root(i));
            }
            let mut best: Option<(f64, usize)> = None;
            for j in (0..n).filter(|&j| core[j] && d[[i, j]] <= eps) {
                let cand = (d[[i, j]], root(j));
                best = match best {
                    None => Some(cand),
                    Some(b) if cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1) => Some(cand),
                    keep => keep,
                };
            }
            best.map(|b| b.1)
        })
        .collect()
}

/// Relabels a partition by first appearance so equal partitions compare equal.
pub fn canonical(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|c| {
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
        })
        .collect()
}

/// Random blobs in the plane with eps and min_pts drawn per instance.
pub fn random_instance(seed: u64, max_n: usize) -> (Array2<f64>, f64, usize) {
    let mut r = rng(seed);
    let n = r.random_range(1..=max_n);
    let blobs = r.random_range(1..=4);
    let centers = gaussian(blobs, 2, &mut r) * 3.0;
    let spread = r.random_range(0.2..1.2);
    let mut pts = Array2::zeros((n, 2));
    for i in 0..n {
        let b = r.random_range(0..blobs);
        for k in 0..2 {
            pts[[i, k]] = centers[[b, k]] + spread * r.sample::<f64, _>(StandardNormal);
        }
    }
    let eps = r.random_range(0.1..1.5);
    let min_pts = r.random_range(1..=6);
    (pts, eps, min_pts)
}

pub fn euclidean(pts: &Array2<f64>) -> Array2<f64> {
    let n = pts.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let d = &pts.row(i) - &pts.row(j);
        d.dot(&d).sqrt()
    })
}

// ---------------------------------------------------------------------------
// Ranking fixtures: relevance pattern and its AP, enumerated by hand.

pub const AP_FIXTURES: [(&str, f64); 10] = [
    ("+", 1.0),
    ("-+", 0.5),
    ("+-+", (1.0 + 2.0 / 3.0) / 2.0),
    ("--+", 1.0 / 3.0),
    ("++-", 1.0),
    ("-++", (1.0 / 2.0 + 2.0 / 3.0) / 2.0),
    ("+--+", (1.0 + 2.0 / 4.0) / 2.0),
    ("-+-+-", (1.0 / 2.0 + 2.0 / 4.0) / 2.0),
    ("+-+-+", (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0),
    ("----", 0.0),
];

pub fn pattern(s: &str) -> Vec<bool> {
    s.chars().map(|c| c == '+').collect()
}

// ---------------------------------------------------------------------------
// Frozen desk-scale configuration

pub const DESK_CFG: &str = include_str!("../../../../configs/desk.cfg");

pub fn desk_config() -> udalab_core::config::RunConfig {
    udalab_core::config::RunConfig::from_text(DESK_CFG).unwrap()
}

/// A one-dimensional target set of `n` samples with ids `100..100+n`.
pub fn toy_target(n: usize) -> udalab_core::datagen::LabeledDataset {
    use udalab_core::datagen::{Domain, LabeledDataset, Sample};
    let samples = (0..n)
        .map(|i| Sample { sample_id: 100 + i, input: vec![i as f64], true_label: i % 2, domain: Domain::Target })
        .collect();
    LabeledDataset::new(samples, 2, 1).unwrap()
}

/// Pearson statistic for per-sample selection counts over `epochs` draws of
/// `m` out of `n` without replacement. Under uniformity it is approximately
/// chi-squared with `n - 1` degrees of freedom: each count has variance
/// `T p (1 - p)` and the fixed total removes one degree of freedom, which the
/// `(n - 1) / n` factor accounts for.
pub fn selection_chi_squared(counts: &[usize], epochs: usize, m: usize) -> f64 {
    let n = counts.len() as f64;
    let p = m as f64 / n;
    let expected = epochs as f64 * p;
    let var = epochs as f64 * p * (1.0 - p);
    counts.iter().map(|&c| (c as f64 - expected).powi(2)).sum::<f64>() / var * (n - 1.0) / n
}

pub fn chi_squared_critical(df: usize, significance: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(df as f64).unwrap().inverse_cdf(1.0 - significance)
}

/// Counts how often each sample is selected over `epochs` epochs.
pub fn selection_counts(n: usize, rho: f64, epochs: usize, seed: u64) -> (Vec<usize>, usize) {
    let target = toy_target(n);
    let mut counts = vec![0usize; n];
    let mut m = 0;
    for e in 0..epochs {
        let sel = udalab_core::sample_dropout::select_epoch_subset(&target, rho, e, seed).unwrap();
        m = sel.selected_ids.len();
        for id in sel.selected_ids {
            counts[id - 100] += 1;
        }
    }
    (counts, m)
}

/// Criterion-style check of exact cardinalities over the rho and size grid.
pub fn cardinality_grid() -> Result<(), String> {
    for n in [10usize, 100, 1000] {
        let target = toy_target(n);
        for step in 0..=8 {
            let rho = step as f64 / 10.0;
            let want = ((1.0 - rho) * n as f64 + 1e-9).floor() as usize;
            for epoch in [0usize, 1, 7] {
                let sel = udalab_core::sample_dropout::select_epoch_subset(&target, rho, epoch, 42).unwrap();
                if sel.selected_ids.len() != want || sel.selected_ids.len() + sel.dropped_ids.len() != n {
                    return Err(format!("n={n} rho={rho}: kept {} want {want}", sel.selected_ids.len()));
                }
            }
        }
    }
    Ok(())
}
