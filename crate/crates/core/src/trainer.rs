//! Source pretraining followed by epochs of sample dropout, DBSCAN pseudo
//! labeling and mini-batch descent on the combined objective, with a
//! mean-encoder update after every step.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_pseudo_labels, ClusteringConfig, PseudoLabeling};
use crate::datagen::LabeledDataset;
use crate::diagnostics::{
    clustering_error_rate, evaluate_cmc_map, hardest_relative_error, noisy_label_flags, split_query_gallery,
    EvalMetrics, NoiseHistory,
};
use crate::encoder::{
    ema_update_in_place, init_model, softmax_rows, Activation, DualBranchModel, EncoderGrads, EncoderParams, Head,
    HeadGrads,
};
use crate::error::{Error, Result};
use crate::losses::{cross_entropy_loss, fdl_loss, total_loss, triplet_loss, LossBreakdown};
use crate::rng::substream;
use crate::sample_dropout::select_epoch_subset;

/// Selections larger than this are logged as counts only.
pub const SELECTION_LOG_LIMIT: usize = 256;

/// Factor applied to `eps` for the single retry after an empty clustering.
pub const EPS_RETRY_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub tau: f64,
    pub lr_initial: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// Pretraining plus adaptation epochs.
    pub epochs_total: usize,
    pub pretrain_epochs: usize,
    pub batch_identities: usize,
    pub batch_instances: usize,
    pub clustering: ClusteringConfig,
    pub arch: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub fdl_enabled: bool,
    /// Query samples per identity when the target set is split for retrieval.
    pub eval_query_per_identity: usize,
}

impl Default for ExperimentConfig {
    /// The published hyperparameters (optimizer aside).
    fn default() -> Self {
        Self {
            rho: 0.4,
            alpha: 0.999,
            beta: 1.0,
            gamma: 1.0,
            delta: 0.5,
            tau: 0.3,
            lr_initial: 0.00035,
            lr_decay_every: 20,
            lr_decay_factor: 0.1,
            epochs_total: 55,
            pretrain_epochs: 1,
            batch_identities: 15,
            batch_instances: 4,
            clustering: ClusteringConfig::default(),
            arch: vec![32, 64, 32],
            activation: Activation::Relu,
            seed: 1,
            fdl_enabled: true,
            eval_query_per_identity: 2,
        }
    }
}

impl ExperimentConfig {
    pub fn batch_size(&self) -> usize {
        self.batch_identities * self.batch_instances
    }

    pub fn adaptation_epochs(&self) -> usize {
        self.epochs_total.saturating_sub(self.pretrain_epochs)
    }

    /// `lr_initial * factor^floor(epoch / every)`, epochs counted from the
    /// first pretraining epoch.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let drops = epoch.checked_div(self.lr_decay_every).unwrap_or(0);
        self.lr_initial * self.lr_decay_factor.powi(drops as i32)
    }

    /// The FDL weight actually used; disabling FDL is exactly `delta = 0`.
    pub fn effective_delta(&self) -> f64 {
        if self.fdl_enabled {
            self.delta
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        if !(0.0..1.0).contains(&self.rho) {
            return bad("trainer.rho", &format!("must lie in [0, 1), got {}", self.rho));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("trainer.alpha", &format!("must lie in [0, 1], got {}", self.alpha));
        }
        for (name, v) in [
            ("trainer.beta", self.beta),
            ("trainer.gamma", self.gamma),
            ("trainer.delta", self.delta),
            ("trainer.tau", self.tau),
            ("trainer.lr_initial", self.lr_initial),
            ("trainer.lr_decay_factor", self.lr_decay_factor),
        ] {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        if self.lr_initial < 0.0 {
            return bad("trainer.lr_initial", "must be >= 0");
        }
        if self.pretrain_epochs > self.epochs_total {
            return bad("trainer.pretrain_epochs", "exceeds trainer.epochs_total");
        }
        if self.batch_identities < 2 {
            return bad("trainer.batch_identities", "need at least 2 identities per batch");
        }
        if self.batch_instances < 2 {
            return bad("trainer.batch_instances", "need at least 2 instances per identity");
        }
        if self.arch.len() < 2 || self.arch.contains(&0) {
            return bad("model.arch", "need an input size and at least one positive layer size");
        }
        if self.eval_query_per_identity == 0 {
            return bad("eval.query_per_identity", "must be >= 1");
        }
        self.clustering.validate()
    }
}

/// Rows of a mini-batch and the labels used for mining and CE.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    /// Sample ids of the rows, for bookkeeping.
    pub sample_ids: Vec<usize>,
}

/// Draws `identities` distinct labels from `pool` (pairs of sample position
/// and label) and `instances` samples for each. Labels with fewer members
/// than `instances` are sampled with replacement.
pub fn sample_pk_batch(
    pool: &[(usize, usize)],
    identities: usize,
    instances: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(pos, label) in pool {
        groups.entry(label).or_default().push(pos);
    }
    if groups.len() < identities {
        return Err(Error::BatchComposition(format!(
            "need {identities} distinct labels, only {} available",
            groups.len()
        )));
    }
    let labels: Vec<usize> = groups.keys().copied().collect();
    let mut picked = index::sample(rng, labels.len(), identities).into_vec();
    picked.sort_unstable();
    let mut out = Vec::with_capacity(identities * instances);
    for li in picked {
        let label = labels[li];
        let members = &groups[&label];
        if members.len() >= instances {
            for m in index::sample(rng, members.len(), instances) {
                out.push((members[m], label));
            }
        } else {
            for _ in 0..instances {
                out.push((members[rng.random_range(0..members.len())], label));
            }
        }
    }
    Ok(out)
}

fn make_batch(dataset: &LabeledDataset, picks: &[(usize, usize)]) -> Batch {
    let positions: Vec<usize> = picks.iter().map(|p| p.0).collect();
    Batch {
        inputs: dataset.inputs_at(&positions),
        labels: picks.iter().map(|p| p.1).collect(),
        sample_ids: positions.iter().map(|&p| dataset.samples[p].sample_id).collect(),
    }
}

/// Gradients of the combined objective for every trainable parameter.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub f1: EncoderGrads,
    pub f2: EncoderGrads,
    pub c1_source: HeadGrads,
    pub c2_source: HeadGrads,
    pub c1_target: Option<HeadGrads>,
    pub c2_target: Option<HeadGrads>,
}

struct BranchPass {
    features: Array2<f64>,
    cache: crate::encoder::ForwardCache,
    mean_features: Array2<f64>,
}

fn branch_pass(enc: &EncoderParams, mean: &crate::encoder::MeanEncoderParams, x: ArrayView2<f64>) -> Result<BranchPass> {
    let (features, cache) = enc.encode(x)?;
    Ok(BranchPass { features, cache, mean_features: mean.features(x)? })
}

fn scale_head(g: HeadGrads, by: f64) -> HeadGrads {
    HeadGrads { weight: g.weight * by, bias: g.bias * by }
}

struct DomainTerms {
    ce: f64,
    tri: f64,
    /// Per branch: CE and triplet gradients w.r.t. that branch's features.
    grad_ce: [Array2<f64>; 2],
    grad_tri: [Array2<f64>; 2],
    head_grads: [HeadGrads; 2],
}

fn domain_terms(heads: [&Head; 2], passes: [&BranchPass; 2], labels: &[usize], tau: f64) -> Result<DomainTerms> {
    let probs = [
        softmax_rows(heads[0].logits(passes[0].features.view())?.view()),
        softmax_rows(heads[1].logits(passes[1].features.view())?.view()),
    ];
    let ce = cross_entropy_loss(probs[0].view(), probs[1].view(), labels)?;
    let (h1, g1) = heads[0].backward(passes[0].features.view(), ce.grad_logits1.view())?;
    let (h2, g2) = heads[1].backward(passes[1].features.view(), ce.grad_logits2.view())?;
    let t1 = triplet_loss(passes[0].features.view(), labels, tau)?;
    let t2 = triplet_loss(passes[1].features.view(), labels, tau)?;
    Ok(DomainTerms {
        ce: ce.value,
        tri: t1.value + t2.value,
        grad_ce: [g1, g2],
        grad_tri: [t1.grad, t2.grad],
        head_grads: [h1, h2],
    })
}

/// Value and exact gradients of `beta * CE + gamma * TRI + delta * FDL` on a
/// source batch and an optional target batch. Mean encoders are constants.
pub fn objective_and_gradients(
    model: &DualBranchModel,
    source: &Batch,
    target: Option<&Batch>,
    config: &ExperimentConfig,
) -> Result<(LossBreakdown, ModelGrads)> {
    let (beta, gamma, delta) = (config.beta, config.gamma, config.effective_delta());
    let src = [
        branch_pass(&model.f1, &model.mean_f1, source.inputs.view())?,
        branch_pass(&model.f2, &model.mean_f2, source.inputs.view())?,
    ];
    let src_terms = domain_terms([&model.c1.source, &model.c2.source], [&src[0], &src[1]], &source.labels, config.tau)?;

    let tgt = match target {
        Some(batch) => {
            let heads = match (&model.c1.target, &model.c2.target) {
                (Some(a), Some(b)) => [a, b],
                _ => return Err(Error::Config("target batch given but no target head has been built".into())),
            };
            let passes = [
                branch_pass(&model.f1, &model.mean_f1, batch.inputs.view())?,
                branch_pass(&model.f2, &model.mean_f2, batch.inputs.view())?,
            ];
            let terms = domain_terms(heads, [&passes[0], &passes[1]], &batch.labels, config.tau)?;
            Some((passes, terms))
        }
        None => None,
    };

    // The diversity term is one batch mean over every row of the step.
    fn feat(p: &BranchPass) -> &Array2<f64> {
        &p.features
    }
    fn mean(p: &BranchPass) -> &Array2<f64> {
        &p.mean_features
    }
    let stack = |pick: fn(&BranchPass) -> &Array2<f64>, b: usize| -> Result<Array2<f64>> {
        match &tgt {
            Some((passes, _)) => concatenate(Axis(0), &[pick(&src[b]).view(), pick(&passes[b]).view()])
                .map_err(|e| Error::Shape(e.to_string())),
            None => Ok(pick(&src[b]).clone()),
        }
    };
    let fdl = fdl_loss(stack(feat, 0)?.view(), stack(feat, 1)?.view(), stack(mean, 0)?.view(), stack(mean, 1)?.view())?;

    let ce = src_terms.ce + tgt.as_ref().map_or(0.0, |(_, t)| t.ce);
    let tri = src_terms.tri + tgt.as_ref().map_or(0.0, |(_, t)| t.tri);
    let breakdown = total_loss(ce, tri, fdl.value, beta, gamma, delta)?;

    let ns = source.inputs.nrows();
    let fdl_grads = [&fdl.grad_f1, &fdl.grad_f2];
    let mut enc_grads: Vec<EncoderGrads> = Vec::with_capacity(2);
    for b in 0..2 {
        let enc = if b == 0 { &model.f1 } else { &model.f2 };
        let g_src = breakdown.combine_gradients(
            src_terms.grad_ce[b].view(),
            src_terms.grad_tri[b].view(),
            fdl_grads[b].slice(s![..ns, ..]),
        )?;
        let mut grads = enc.backward(&src[b].cache, g_src.view())?;
        if let Some((passes, terms)) = &tgt {
            let g_tgt = breakdown.combine_gradients(
                terms.grad_ce[b].view(),
                terms.grad_tri[b].view(),
                fdl_grads[b].slice(s![ns.., ..]),
            )?;
            grads.add_assign(&enc.backward(&passes[b].cache, g_tgt.view())?);
        }
        enc_grads.push(grads);
    }
    let f2 = enc_grads.pop().expect("two branches");
    let f1 = enc_grads.pop().expect("two branches");

    let [s1, s2] = src_terms.head_grads;
    let (c1_target, c2_target) = match tgt {
        Some((_, terms)) => {
            let [t1, t2] = terms.head_grads;
            (Some(scale_head(t1, beta)), Some(scale_head(t2, beta)))
        }
        None => (None, None),
    };
    Ok((
        breakdown,
        ModelGrads { f1, f2, c1_source: scale_head(s1, beta), c2_source: scale_head(s2, beta), c1_target, c2_target },
    ))
}

/// One descent step followed by one mean-encoder update per branch.
pub fn train_step(
    model: &mut DualBranchModel,
    source: &Batch,
    target: Option<&Batch>,
    config: &ExperimentConfig,
    lr: f64,
) -> Result<LossBreakdown> {
    let (breakdown, grads) = objective_and_gradients(model, source, target, config)?;
    if !breakdown.total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {}", breakdown.total)));
    }
    model.f1.descend(&grads.f1, lr);
    model.f2.descend(&grads.f2, lr);
    model.c1.source.descend(&grads.c1_source, lr);
    model.c2.source.descend(&grads.c2_source, lr);
    if let (Some(h), Some(g)) = (model.c1.target.as_mut(), grads.c1_target.as_ref()) {
        h.descend(g, lr);
    }
    if let (Some(h), Some(g)) = (model.c2.target.as_mut(), grads.c2_target.as_ref()) {
        h.descend(g, lr);
    }
    ema_update_in_place(&mut model.mean_f1, &model.f1, config.alpha)?;
    ema_update_in_place(&mut model.mean_f2, &model.f2, config.alpha)?;
    Ok(breakdown)
}

fn source_pool(source: &LabeledDataset) -> Vec<(usize, usize)> {
    source.samples.iter().enumerate().map(|(p, s)| (p, s.true_label)).collect()
}

fn draw_source_batch(source: &LabeledDataset, pool: &[(usize, usize)], config: &ExperimentConfig, rng: &mut impl Rng) -> Result<Batch> {
    let p = config.batch_identities.min(source.num_identities);
    Ok(make_batch(source, &sample_pk_batch(pool, p, config.batch_instances, rng)?))
}

/// Optimizes the objective on the source domain only (no target batch).
/// Returns one mean loss breakdown per epoch.
pub fn pretrain(model: &mut DualBranchModel, source: &LabeledDataset, config: &ExperimentConfig) -> Result<Vec<LossBreakdown>> {
    let pool = source_pool(source);
    let steps = source.len().div_ceil(config.batch_size());
    let mut history = Vec::new();
    for epoch in 0..config.pretrain_epochs {
        let lr = config.learning_rate(epoch);
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let mut rng = substream(config.seed, "batches/pretrain", (epoch * steps + step) as u64);
            let batch = draw_source_batch(source, &pool, config, &mut rng)?;
            losses.push(train_step(model, &batch, None, config, lr)?);
        }
        history.push(LossBreakdown::mean_of(&losses));
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global epoch index (pretraining epochs come first).
    pub epoch: usize,
    pub lr: f64,
    pub selected: usize,
    pub dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_ids: Option<Vec<usize>>,
    pub eps_used: f64,
    pub num_clusters: usize,
    pub num_outliers: usize,
    pub clustering_error_rate: Option<f64>,
    pub steps: usize,
    pub loss: LossBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub total_noisy: usize,
    pub rel_err_10: Option<f64>,
    pub rel_err_20: Option<f64>,
    pub hardest_10pct: Vec<usize>,
    pub history: NoiseHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalClustering {
    pub num_clusters: usize,
    pub num_outliers: usize,
    pub clustering_error_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub optimizer: String,
    pub config: ExperimentConfig,
    pub pretrain_loss: Vec<LossBreakdown>,
    pub epochs: Vec<EpochRecord>,
    pub noise: NoiseSummary,
    pub final_metrics: EvalMetrics,
    /// Clustering of the whole target set with the final model.
    pub final_clustering: FinalClustering,
    /// Mean `f1(x) . mean_f2(x)` over the target set.
    pub cross_branch_cosine: f64,
    /// Wall-clock seconds per adaptation epoch; kept out of the JSON so
    /// reports stay byte-reproducible.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl TrainingReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Pseudo labels for the selected ids, retrying once with a wider `eps`.
fn cluster_with_retry(
    model: &DualBranchModel,
    target: &LabeledDataset,
    selected: &[usize],
    config: &ClusteringConfig,
) -> (Result<PseudoLabeling>, f64) {
    match assign_pseudo_labels(model, target, selected, config) {
        Err(Error::EmptyClustering(_)) => {
            let wider = ClusteringConfig { eps: config.eps * EPS_RETRY_FACTOR, ..*config };
            (assign_pseudo_labels(model, target, selected, &wider), wider.eps)
        }
        other => (other, config.eps),
    }
}

pub fn run(source: &LabeledDataset, target: &LabeledDataset, config: &ExperimentConfig) -> Result<TrainingReport> {
    run_with_model(source, target, config).map(|(r, _)| r)
}

/// Runs the full procedure and also returns the final model.
pub fn run_with_model(
    source: &LabeledDataset,
    target: &LabeledDataset,
    config: &ExperimentConfig,
) -> Result<(TrainingReport, DualBranchModel)> {
    config.validate()?;
    if source.dim != target.dim {
        return Err(Error::Config(format!("source dim {} differs from target dim {}", source.dim, target.dim)));
    }
    if config.arch[0] != source.dim {
        return Err(Error::Config(format!("model.arch input {} differs from data dim {}", config.arch[0], source.dim)));
    }
    let mut model = init_model(&config.arch, config.activation, source.num_identities, config.seed)?;
    let pretrain_loss = pretrain(&mut model, source, config)?;

    let truth: BTreeMap<usize, usize> = target.samples.iter().map(|s| (s.sample_id, s.true_label)).collect();
    let positions = target.position_index();
    let src_pool = source_pool(source);
    let mut noise = NoiseHistory::new(target.ids());
    let mut epochs = Vec::with_capacity(config.adaptation_epochs());
    let mut epoch_seconds = Vec::with_capacity(config.adaptation_epochs());

    for k in 0..config.adaptation_epochs() {
        let started = Instant::now();
        let epoch = config.pretrain_epochs + k;
        let lr = config.learning_rate(epoch);
        let selection = select_epoch_subset(target, config.rho, k, config.seed)?;
        let mut record = EpochRecord {
            epoch,
            lr,
            selected: selection.selected_ids.len(),
            dropped: selection.dropped_ids.len(),
            selected_ids: (selection.selected_ids.len() <= SELECTION_LOG_LIMIT).then(|| selection.selected_ids.clone()),
            eps_used: config.clustering.eps,
            num_clusters: 0,
            num_outliers: 0,
            clustering_error_rate: None,
            steps: 0,
            loss: LossBreakdown::default(),
            aborted: None,
        };

        let (labeling, eps_used) = cluster_with_retry(&model, target, &selection.selected_ids, &config.clustering);
        record.eps_used = eps_used;
        let labeling = match labeling {
            Ok(l) => l,
            Err(e @ Error::EmptyClustering(_)) => {
                record.aborted = Some(e.to_string());
                epochs.push(record);
                epoch_seconds.push(started.elapsed().as_secs_f64());
                continue;
            }
            Err(e) => return Err(e),
        };
        record.num_clusters = labeling.num_clusters;
        record.num_outliers = labeling.outliers.len();

        let flags = noisy_label_flags(&labeling, &truth)?;
        record.clustering_error_rate = Some(clustering_error_rate(&flags)?);
        noise.record(&flags);

        if labeling.num_clusters < 2 {
            record.aborted = Some(format!(
                "batch composition error: {} pseudo class(es); triplet mining needs 2",
                labeling.num_clusters
            ));
            epochs.push(record);
            epoch_seconds.push(started.elapsed().as_secs_f64());
            continue;
        }
        model.rebuild_target_classifier(&labeling.centroids_per_branch[0], &labeling.centroids_per_branch[1])?;

        let tgt_pool: Vec<(usize, usize)> = labeling.assignments.iter().map(|(id, &c)| (positions[id], c)).collect();
        let tgt_identities = config.batch_identities.min(labeling.num_clusters);
        let steps = selection.selected_ids.len().div_ceil(config.batch_size());
        let mut losses = Vec::with_capacity(steps);
        for step in 0..steps {
            let stream = (epoch * 1_000_003 + step) as u64;
            let mut rng = substream(config.seed, "batches/source", stream);
            let src_batch = draw_source_batch(source, &src_pool, config, &mut rng)?;
            let mut rng = substream(config.seed, "batches/target", stream);
            let tgt_batch = make_batch(target, &sample_pk_batch(&tgt_pool, tgt_identities, config.batch_instances, &mut rng)?);
            losses.push(train_step(&mut model, &src_batch, Some(&tgt_batch), config, lr)?);
        }
        record.steps = steps;
        record.loss = LossBreakdown::mean_of(&losses);
        epochs.push(record);
        epoch_seconds.push(started.elapsed().as_secs_f64());
    }

    let (query, gallery) = split_query_gallery(target, config.eval_query_per_identity)?;
    let final_metrics = evaluate_cmc_map(&model, &query, &gallery)?;
    let final_clustering = match assign_pseudo_labels(&model, target, &target.ids(), &config.clustering) {
        Ok(l) => FinalClustering {
            num_clusters: l.num_clusters,
            num_outliers: l.outliers.len(),
            clustering_error_rate: Some(clustering_error_rate(&noisy_label_flags(&l, &truth)?)?),
        },
        Err(Error::EmptyClustering(_)) => {
            FinalClustering { num_clusters: 0, num_outliers: target.len(), clustering_error_rate: None }
        }
        Err(e) => return Err(e),
    };
    let cross_branch_cosine = {
        let x = target.all_inputs();
        let f1 = model.f1.features(x.view())?;
        let m2 = model.mean_f2.features(x.view())?;
        (&f1 * &m2).sum() / x.nrows() as f64
    };
    let rel = |p| hardest_relative_error(&noise, p).ok();
    let summary = NoiseSummary {
        total_noisy: noise.total_noisy(),
        rel_err_10: rel(0.1),
        rel_err_20: rel(0.2),
        hardest_10pct: noise.hardest_ids(0.1),
        history: noise,
    };

    Ok((
        TrainingReport {
            optimizer: "plain mini-batch gradient descent (no momentum, no adaptive moments)".into(),
            config: config.clone(),
            pretrain_loss,
            epochs,
            noise: summary,
            final_metrics,
            final_clustering,
            cross_branch_cosine,
            epoch_seconds,
        },
        model,
    ))
}

/// Hard-sample recall of the report's top-10% hardest set.
pub fn hardest_recall(report: &TrainingReport, hard_ids: &BTreeSet<usize>) -> f64 {
    if hard_ids.is_empty() {
        return 0.0;
    }
    let top: BTreeSet<usize> = report.noise.hardest_10pct.iter().copied().collect();
    top.intersection(hard_ids).count() as f64 / hard_ids.len() as f64
}
