//! Per-epoch random discarding of a fixed fraction of target samples.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSelection {
    pub epoch_index: usize,
    /// Ascending sample ids kept this epoch.
    pub selected_ids: Vec<usize>,
    /// Ascending sample ids dropped this epoch.
    pub dropped_ids: Vec<usize>,
    pub rho: f64,
}

/// `floor((1 - rho) * n)`. The tiny offset absorbs representation error in
/// products such as `0.7 * 100`.
pub fn kept_count(n: usize, rho: f64) -> usize {
    (((1.0 - rho) * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Uniform sample without replacement of `floor((1 - rho) * N)` target
/// samples, drawn from a stream keyed by `(seed, epoch_index)`.
pub fn select_epoch_subset(target: &LabeledDataset, rho: f64, epoch_index: usize, seed: u64) -> Result<EpochSelection> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("trainer.rho must lie in [0, 1), got {rho}")));
    }
    let n = target.len();
    let keep = kept_count(n, rho);
    let mut rng = substream(seed, "sd", epoch_index as u64);
    let mut mask = vec![false; n];
    for p in index::sample(&mut rng, n, keep) {
        mask[p] = true;
    }
    let mut selected_ids = Vec::with_capacity(keep);
    let mut dropped_ids = Vec::with_capacity(n - keep);
    for (s, keep) in target.samples.iter().zip(mask) {
        if keep {
            selected_ids.push(s.sample_id);
        } else {
            dropped_ids.push(s.sample_id);
        }
    }
    selected_ids.sort_unstable();
    dropped_ids.sort_unstable();
    Ok(EpochSelection { epoch_index, selected_ids, dropped_ids, rho })
}
