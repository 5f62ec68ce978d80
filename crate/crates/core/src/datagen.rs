//! Synthetic source/target domains.
//!
//! Each identity is a Gaussian blob around a center drawn on a hypersphere.
//! The target domain is moved by an affine map, and a fraction of its samples
//! can be pulled toward a foreign identity's center while keeping their true
//! label. Those are the hard samples the noisy-label diagnostics look for.

use std::collections::BTreeSet;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => f.write_str("source"),
            Domain::Target => f.write_str("target"),
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Config(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: usize,
    pub input: Vec<f64>,
    pub true_label: usize,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
    pub num_identities: usize,
    pub dim: usize,
}

impl LabeledDataset {
    /// Builds a dataset and checks the id/dimension/label invariants.
    pub fn new(samples: Vec<Sample>, num_identities: usize, dim: usize) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &samples {
            if s.input.len() != dim {
                return Err(Error::Shape(format!(
                    "sample {} has dimension {}, dataset dimension is {dim}",
                    s.sample_id,
                    s.input.len()
                )));
            }
            if s.true_label >= num_identities {
                return Err(Error::Label(format!(
                    "sample {} has label {} but only {num_identities} identities",
                    s.sample_id, s.true_label
                )));
            }
            if !seen.insert(s.sample_id) {
                return Err(Error::Config(format!("duplicate sample id {}", s.sample_id)));
            }
        }
        Ok(Self { samples, num_identities, dim })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stacks the inputs of the samples at `positions` (indices into
    /// `samples`, not sample ids) into a row matrix.
    pub fn inputs_at(&self, positions: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((positions.len(), self.dim));
        for (row, &p) in positions.iter().enumerate() {
            for (c, v) in self.samples[p].input.iter().enumerate() {
                out[[row, c]] = *v;
            }
        }
        out
    }

    pub fn all_inputs(&self) -> Array2<f64> {
        let positions: Vec<usize> = (0..self.len()).collect();
        self.inputs_at(&positions)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.true_label).collect()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.sample_id).collect()
    }

    /// Position of each sample id inside `samples`.
    pub fn position_index(&self) -> std::collections::BTreeMap<usize, usize> {
        self.samples.iter().enumerate().map(|(p, s)| (s.sample_id, p)).collect()
    }

    /// Empirical mean of every identity's inputs.
    pub fn identity_centers(&self) -> Array2<f64> {
        let mut sums = Array2::<f64>::zeros((self.num_identities, self.dim));
        let mut counts = vec![0usize; self.num_identities];
        for s in &self.samples {
            counts[s.true_label] += 1;
            for (c, v) in s.input.iter().enumerate() {
                sums[[s.true_label, c]] += v;
            }
        }
        for (i, &n) in counts.iter().enumerate() {
            if n > 0 {
                sums.row_mut(i).mapv_inplace(|v| v / n as f64);
            }
        }
        sums
    }
}

/// `x -> A x + t`. A missing matrix means the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineShift {
    pub matrix: Option<Array2<f64>>,
    pub translation: Array1<f64>,
}

impl AffineShift {
    pub fn identity(dim: usize) -> Self {
        Self { matrix: None, translation: Array1::zeros(dim) }
    }

    pub fn translation(t: Array1<f64>) -> Self {
        Self { matrix: None, translation: t }
    }

    /// A random orthogonal map near the identity followed by a random
    /// translation of length `translation_norm`.
    ///
    /// `mix` scales the Gaussian perturbation of the identity before it is
    /// orthonormalized; 0 gives no rotation.
    pub fn random_rigid(dim: usize, mix: f64, translation_norm: f64, seed: u64) -> Self {
        let mut rng = substream(seed, "datagen/shift", 0);
        let mut m = Array2::<f64>::eye(dim);
        for v in m.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v += mix * g;
        }
        let matrix = if mix == 0.0 { None } else { Some(gram_schmidt(m)) };
        let mut t: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = t.dot(&t).sqrt();
        if norm > 0.0 {
            t.mapv_inplace(|v| v * translation_norm / norm);
        }
        Self { matrix, translation: t }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let moved = match &self.matrix {
            Some(a) => a.dot(&x),
            None => x.to_owned(),
        };
        moved + &self.translation
    }
}

/// Orthonormalizes the columns of `m` (modified Gram-Schmidt).
fn gram_schmidt(mut m: Array2<f64>) -> Array2<f64> {
    let n = m.ncols();
    for j in 0..n {
        for k in 0..j {
            let proj = m.column(j).dot(&m.column(k));
            let qk = m.column(k).to_owned();
            m.column_mut(j).scaled_add(-proj, &qk);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        m.column_mut(j).mapv_inplace(|v| v / norm);
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainGenConfig {
    pub num_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub intra_class_spread: f64,
    pub inter_class_separation: f64,
    pub domain_shift: AffineShift,
    pub hard_fraction: f64,
    pub hard_overlap: f64,
    pub domain: Domain,
    pub seed: u64,
}

impl DomainGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_identities == 0 || self.samples_per_identity == 0 || self.dim == 0 {
            return Err(Error::Config(
                "num_identities, samples_per_identity and dim must be positive".into(),
            ));
        }
        // Zero spread is allowed: it is the degenerate "samples on their centers" case.
        if !(self.intra_class_spread >= 0.0) || !self.intra_class_spread.is_finite() {
            return Err(Error::Config("intra_class_spread must be finite and >= 0".into()));
        }
        if !(self.inter_class_separation >= 0.0) || !self.inter_class_separation.is_finite() {
            return Err(Error::Config("inter_class_separation must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(Error::Config("hard_fraction must lie in [0, 1]".into()));
        }
        if !(self.hard_overlap >= 1.0) {
            return Err(Error::Config("hard_overlap must be >= 1".into()));
        }
        if self.domain_shift.dim() != self.dim {
            return Err(Error::Config(format!(
                "domain shift has dimension {}, domain has {}",
                self.domain_shift.dim(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// Draws a clean domain (no hard samples) and applies its domain shift.
///
/// Centers lie on a sphere of radius `separation / sqrt(2)`, which puts two
/// random centers `separation` apart on average in high dimension.
pub fn generate_domain(config: &DomainGenConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let dim = config.dim;
    let radius = config.inter_class_separation / std::f64::consts::SQRT_2;

    let mut center_rng = substream(config.seed, "datagen/centers", 0);
    let mut centers = Array2::<f64>::zeros((config.num_identities, dim));
    for mut row in centers.rows_mut() {
        let mut norm2 = 0.0;
        while norm2 == 0.0 {
            for v in row.iter_mut() {
                *v = center_rng.sample(StandardNormal);
            }
            norm2 = row.dot(&row);
        }
        let scale = radius / norm2.sqrt();
        row.mapv_inplace(|v| v * scale);
    }

    let mut noise_rng = substream(config.seed, "datagen/noise", 0);
    let mut samples = Vec::with_capacity(config.num_identities * config.samples_per_identity);
    for label in 0..config.num_identities {
        for _ in 0..config.samples_per_identity {
            let input: Vec<f64> = centers
                .row(label)
                .iter()
                .map(|c| {
                    let g: f64 = noise_rng.sample(StandardNormal);
                    c + config.intra_class_spread * g
                })
                .collect();
            samples.push(Sample { sample_id: samples.len(), input, true_label: label, domain: config.domain });
        }
    }
    let clean = LabeledDataset::new(samples, config.num_identities, dim)?;
    apply_domain_shift(&clean, &config.domain_shift)
}

/// Generates the domain and then injects its configured hard samples.
pub fn generate_domain_with_hard(config: &DomainGenConfig) -> Result<(LabeledDataset, BTreeSet<usize>)> {
    let clean = generate_domain(config)?;
    inject_hard_samples(&clean, config.hard_fraction, config.hard_overlap, config.seed)
}

pub fn apply_domain_shift(dataset: &LabeledDataset, shift: &AffineShift) -> Result<LabeledDataset> {
    if shift.dim() != dataset.dim {
        return Err(Error::Config(format!(
            "shift dimension {} does not match dataset dimension {}",
            shift.dim(),
            dataset.dim
        )));
    }
    if let Some(m) = &shift.matrix {
        if m.dim() != (dataset.dim, dataset.dim) {
            return Err(Error::Config(format!("shift matrix is {:?}, expected square {}", m.dim(), dataset.dim)));
        }
    }
    let samples = dataset
        .samples
        .iter()
        .map(|s| {
            let x = ArrayView1::from(&s.input[..]);
            Sample { input: shift.apply(x).to_vec(), ..s.clone() }
        })
        .collect();
    Ok(LabeledDataset { samples, num_identities: dataset.num_identities, dim: dataset.dim })
}

/// Interpolation weight toward the foreign center: 1/2 at `hard_overlap = 1`,
/// approaching 1 as the overlap grows.
pub fn hard_interpolation_weight(hard_overlap: f64) -> f64 {
    1.0 - 0.5 / hard_overlap
}

/// Moves `floor(hard_fraction * N)` random samples toward the center of a
/// random other identity. True labels are untouched.
pub fn inject_hard_samples(
    dataset: &LabeledDataset,
    hard_fraction: f64,
    hard_overlap: f64,
    seed: u64,
) -> Result<(LabeledDataset, BTreeSet<usize>)> {
    if !(0.0..=1.0).contains(&hard_fraction) {
        return Err(Error::Config("hard_fraction must lie in [0, 1]".into()));
    }
    if !(hard_overlap >= 1.0) {
        return Err(Error::Config("hard_overlap must be >= 1".into()));
    }
    let n = dataset.len();
    let count = ((hard_fraction * n as f64) + 1e-9).floor() as usize;
    let count = count.min(n);
    if count == 0 {
        return Ok((dataset.clone(), BTreeSet::new()));
    }
    if dataset.num_identities < 2 {
        return Err(Error::Config("hard samples need at least two identities".into()));
    }

    let centers = dataset.identity_centers();
    let w = hard_interpolation_weight(hard_overlap);
    let mut rng = substream(seed, "datagen/hard", 0);
    let mut chosen = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();

    let mut out = dataset.clone();
    let mut hard_ids = BTreeSet::new();
    for p in chosen {
        let sample = &mut out.samples[p];
        let own = sample.true_label;
        let mut foreign = rng.random_range(0..dataset.num_identities - 1);
        if foreign >= own {
            foreign += 1;
        }
        for (c, v) in sample.input.iter_mut().enumerate() {
            *v += w * (centers[[foreign, c]] - *v);
        }
        hard_ids.insert(sample.sample_id);
    }
    Ok((out, hard_ids))
}

/// Index of the foreign identity center each hard sample is closest to;
/// used by diagnostics tests.
pub fn nearest_center(centers: &Array2<f64>, x: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, c) in centers.rows().into_iter().enumerate() {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}
