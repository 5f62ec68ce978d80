//! Noisy-label bookkeeping and retrieval metrics.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::clustering::{pairwise_distances, united_feature, PseudoLabeling};
use crate::datagen::LabeledDataset;
use crate::encoder::DualBranchModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseRecord {
    pub epochs_participated: usize,
    pub epochs_noisy: usize,
}

/// Per-sample count of how often a target sample received a pseudo label
/// and how often that label was noisy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseHistory {
    pub records: BTreeMap<usize, NoiseRecord>,
    pub epochs_recorded: usize,
}

impl NoiseHistory {
    pub fn new(ids: impl IntoIterator<Item = usize>) -> Self {
        Self { records: ids.into_iter().map(|id| (id, NoiseRecord::default())).collect(), epochs_recorded: 0 }
    }

    /// Adds one epoch of flags. Samples without a flag (dropped, outliers)
    /// do not participate.
    pub fn record(&mut self, flags: &BTreeMap<usize, bool>) {
        self.epochs_recorded += 1;
        for (&id, &noisy) in flags {
            let r = self.records.entry(id).or_default();
            r.epochs_participated += 1;
            if noisy {
                r.epochs_noisy += 1;
            }
        }
    }

    pub fn total_noisy(&self) -> usize {
        self.records.values().map(|r| r.epochs_noisy).sum()
    }

    /// Sample ids ordered hardest first (most noisy epochs, then lowest id).
    pub fn ranked(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.records.iter().map(|(&id, r)| (id, r.epochs_noisy)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// The `ceil(percent * N)` hardest sample ids.
    pub fn hardest_ids(&self, percent: f64) -> Vec<usize> {
        let k = top_count(self.records.len(), percent);
        self.ranked().into_iter().take(k).map(|(id, _)| id).collect()
    }
}

fn top_count(n: usize, percent: f64) -> usize {
    // The offset keeps products like 0.1 * 30 from rounding up to 4.
    ((percent * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Flags each assigned sample whose true label differs from its cluster's
/// dominant true label (mode, ties to the smallest label).
pub fn noisy_label_flags(pseudo: &PseudoLabeling, true_labels: &BTreeMap<usize, usize>) -> Result<BTreeMap<usize, bool>> {
    let mut counts: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); pseudo.num_clusters];
    for (&id, &c) in &pseudo.assignments {
        let label = *true_labels
            .get(&id)
            .ok_or_else(|| Error::Diagnostics(format!("sample {id} has no true label")))?;
        let slot = counts
            .get_mut(c)
            .ok_or_else(|| Error::Diagnostics(format!("cluster id {c} out of range")))?;
        *slot.entry(label).or_default() += 1;
    }
    let dominant: Vec<Option<usize>> = counts
        .iter()
        .map(|m| {
            // BTreeMap iterates labels ascending; strict > keeps the smallest on ties.
            let mut best: Option<(usize, usize)> = None;
            for (&label, &n) in m {
                if best.is_none_or(|(_, bn)| n > bn) {
                    best = Some((label, n));
                }
            }
            best.map(|(l, _)| l)
        })
        .collect();
    Ok(pseudo
        .assignments
        .iter()
        .map(|(&id, &c)| (id, Some(true_labels[&id]) != dominant[c]))
        .collect())
}

pub fn clustering_error_rate(flags: &BTreeMap<usize, bool>) -> Result<f64> {
    if flags.is_empty() {
        return Err(Error::Diagnostics("no assigned samples".into()));
    }
    Ok(flags.values().filter(|f| **f).count() as f64 / flags.len() as f64)
}

/// Share of all noisy assignments that fell on the `percent` hardest samples.
pub fn hardest_relative_error(history: &NoiseHistory, percent: f64) -> Result<f64> {
    if !(percent > 0.0 && percent <= 1.0) {
        return Err(Error::Diagnostics(format!("percent must lie in (0, 1], got {percent}")));
    }
    let total = history.total_noisy();
    if total == 0 {
        return Err(Error::Diagnostics("no noisy labels recorded; relative error undefined".into()));
    }
    let k = top_count(history.records.len(), percent);
    let top: usize = history.ranked().iter().take(k).map(|(_, n)| n).sum();
    Ok(top as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    #[serde(rename = "mAP")]
    pub map: f64,
    pub rank1: f64,
    pub rank5: f64,
    pub rank10: f64,
}

/// Average precision of one ranked relevance list: mean of precision at each
/// relevant position. Zero when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// mAP and CMC from a query x gallery distance matrix. Gallery items are
/// ranked by ascending distance, ties by gallery index.
pub fn evaluate_distances(distances: ArrayView2<f64>, query_labels: &[usize], gallery_labels: &[usize]) -> Result<EvalMetrics> {
    if distances.dim() != (query_labels.len(), gallery_labels.len()) {
        return Err(Error::Evaluation(format!(
            "distance matrix {:?} does not match {} queries x {} gallery items",
            distances.dim(),
            query_labels.len(),
            gallery_labels.len()
        )));
    }
    if query_labels.is_empty() {
        return Err(Error::Evaluation("no queries".into()));
    }
    let mut ap_sum = 0.0;
    let mut within = [0usize; 3];
    for (q, &ql) in query_labels.iter().enumerate() {
        if !gallery_labels.contains(&ql) {
            return Err(Error::Evaluation(format!("query identity {ql} absent from gallery")));
        }
        let row = distances.row(q);
        let mut order: Vec<usize> = (0..gallery_labels.len()).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let relevance: Vec<bool> = order.iter().map(|&g| gallery_labels[g] == ql).collect();
        ap_sum += average_precision(&relevance);
        let first_hit = relevance.iter().position(|r| *r).expect("identity present");
        for (slot, k) in within.iter_mut().zip([1, 5, 10]) {
            if first_hit < k {
                *slot += 1;
            }
        }
    }
    let nq = query_labels.len() as f64;
    Ok(EvalMetrics {
        map: ap_sum / nq,
        rank1: within[0] as f64 / nq,
        rank5: within[1] as f64 / nq,
        rank10: within[2] as f64 / nq,
    })
}

/// Retrieval on united features with Euclidean distance.
pub fn evaluate_cmc_map(model: &DualBranchModel, query: &LabeledDataset, gallery: &LabeledDataset) -> Result<EvalMetrics> {
    let q = united_feature(model, query.all_inputs().view())?;
    let g = united_feature(model, gallery.all_inputs().view())?;
    let nq = q.nrows();
    let stacked = ndarray::concatenate(ndarray::Axis(0), &[q.view(), g.view()]).map_err(|e| Error::Shape(e.to_string()))?;
    let all = pairwise_distances(stacked.view());
    let d = all.slice(ndarray::s![..nq, nq..]);
    evaluate_distances(d, &query.labels(), &gallery.labels())
}

/// Splits a labeled set into a query set (the first `per_identity` samples of
/// each identity in id order) and the gallery (everything else).
pub fn split_query_gallery(dataset: &LabeledDataset, per_identity: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut taken = vec![0usize; dataset.num_identities];
    let (mut q, mut g) = (Vec::new(), Vec::new());
    for s in &dataset.samples {
        if taken[s.true_label] < per_identity {
            taken[s.true_label] += 1;
            q.push(s.clone());
        } else {
            g.push(s.clone());
        }
    }
    Ok((
        LabeledDataset::new(q, dataset.num_identities, dataset.dim)?,
        LabeledDataset::new(g, dataset.num_identities, dataset.dim)?,
    ))
}
