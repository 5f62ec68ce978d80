//! United features, pairwise distances and DBSCAN pseudo labels.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::encoder::DualBranchModel;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub eps: f64,
    pub min_pts: usize,
    pub metric: Metric,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self { eps: 0.6, min_pts: 4, metric: Metric::Euclidean }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Config(format!("clustering.eps must be positive, got {}", self.eps)));
        }
        if self.min_pts == 0 {
            return Err(Error::Config("clustering.min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// `[mean_f1(x) ; mean_f2(x)]` per row.
pub fn united_feature(model: &DualBranchModel, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    let a = model.mean_f1.features(batch)?;
    let b = model.mean_f2.features(batch)?;
    concatenate(Axis(1), &[a.view(), b.view()]).map_err(|e| Error::Shape(e.to_string()))
}

/// Dense Euclidean distance matrix. Entries are computed once per unordered
/// pair and mirrored, so the result is exactly symmetric; the row-parallel
/// evaluation does not change any bit of the output.
pub fn pairwise_distances(features: ArrayView2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = features.row(i);
            (i + 1..n)
                .map(|j| a.iter().zip(features.row(j).iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (k, &d) in row.iter().enumerate() {
            let j = i + 1 + k;
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Raw DBSCAN output indexed by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbscanLabels {
    pub labels: Vec<Option<usize>>,
    pub num_clusters: usize,
}

/// Density-based clustering over a precomputed distance matrix.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Clusters are the connected components of core points, and
/// cluster ids follow the smallest core index of each component. A non-core
/// point within `eps` of some core joins the cluster of its nearest core
/// (ties: lowest cluster id), which makes the partition independent of the
/// input order. Everything else is an outlier.
pub fn dbscan(distances: ArrayView2<f64>, config: &ClusteringConfig) -> Result<DbscanLabels> {
    config.validate()?;
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(shape_err("distance matrix", (n, n), distances.dim()));
    }
    let neighbors: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).filter(|&j| distances[[i, j]] <= config.eps).collect()).collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= config.min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut num_clusters = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !is_core[start] || labels[start].is_some() {
            continue;
        }
        let id = num_clusters;
        num_clusters += 1;
        labels[start] = Some(id);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if is_core[q] && labels[q].is_none() {
                    labels[q] = Some(id);
                    queue.push_back(q);
                }
            }
        }
    }

    for p in 0..n {
        if is_core[p] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &q in &neighbors[p] {
            if !is_core[q] {
                continue;
            }
            let d = distances[[p, q]];
            let id = labels[q].expect("core points are labeled");
            let better = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && id < bid),
            };
            if better {
                best = Some((d, id));
            }
        }
        labels[p] = best.map(|(_, id)| id);
    }
    Ok(DbscanLabels { labels, num_clusters })
}

/// One epoch's pseudo labels over the selected target subset.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeling {
    pub assignments: BTreeMap<usize, usize>,
    pub outliers: BTreeSet<usize>,
    pub num_clusters: usize,
    /// Re-normalized mean of each cluster's first and second united-feature
    /// half, one row per cluster.
    pub centroids_per_branch: [Array2<f64>; 2],
}

impl PseudoLabeling {
    /// Cluster members grouped by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (&id, &c) in &self.assignments {
            out[c].push(id);
        }
        out
    }
}

/// Clusters the samples whose ids are in `selected` using the model's
/// united features.
pub fn assign_pseudo_labels(
    model: &DualBranchModel,
    dataset: &LabeledDataset,
    selected: &[usize],
    config: &ClusteringConfig,
) -> Result<PseudoLabeling> {
    if selected.is_empty() {
        return Err(Error::EmptyClustering("empty subset".into()));
    }
    let index = dataset.position_index();
    let positions = selected
        .iter()
        .map(|id| index.get(id).copied().ok_or_else(|| Error::Config(format!("unknown sample id {id}"))))
        .collect::<Result<Vec<_>>>()?;
    let united = united_feature(model, dataset.inputs_at(&positions).view())?;
    let raw = dbscan(pairwise_distances(united.view()).view(), config)?;
    if raw.num_clusters == 0 {
        return Err(Error::EmptyClustering(format!(
            "no clusters among {} samples at eps={} min_pts={}",
            selected.len(),
            config.eps,
            config.min_pts
        )));
    }

    let half = model.feature_dim();
    let mut sums = [Array2::<f64>::zeros((raw.num_clusters, half)), Array2::<f64>::zeros((raw.num_clusters, half))];
    let mut assignments = BTreeMap::new();
    let mut outliers = BTreeSet::new();
    for (row, (&id, label)) in selected.iter().zip(&raw.labels).enumerate() {
        match label {
            Some(c) => {
                assignments.insert(id, *c);
                let r = united.row(row);
                let mut s0 = sums[0].row_mut(*c);
                s0 += &r.slice(s![..half]);
                let mut s1 = sums[1].row_mut(*c);
                s1 += &r.slice(s![half..]);
            }
            None => {
                outliers.insert(id);
            }
        }
    }
    for m in sums.iter_mut() {
        for mut row in m.rows_mut() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row.mapv_inplace(|v| v / n);
            }
        }
    }
    Ok(PseudoLabeling { assignments, outliers, num_clusters: raw.num_clusters, centroids_per_branch: sums })
}
