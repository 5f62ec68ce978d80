//! Text formats: corpus files, hard-id sidecars, checkpoints and CSV dumps.
//!
//! Reals are written with Rust's shortest round-trip formatting, so every
//! format here reads back bit-exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use crate::clustering::PseudoLabeling;
use crate::datagen::{Domain, LabeledDataset, Sample};
use crate::encoder::{Activation, Classifier, DualBranchModel, EncoderParams, Head, Layer, MeanEncoderParams};
use crate::error::{Error, Result};
use crate::trainer::TrainingReport;

/// One sample per line: `sample_id,domain,true_label,v_1,...,v_d`.
pub fn write_dataset(dataset: &LabeledDataset) -> String {
    let mut s = String::new();
    for sample in &dataset.samples {
        let _ = write!(s, "{},{},{}", sample.sample_id, sample.domain, sample.true_label);
        for v in &sample.input {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Reads the corpus format. The identity count is `max label + 1`.
pub fn read_dataset(text: &str) -> Result<LabeledDataset> {
    let mut samples = Vec::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(perr(format!("expected at least 4 fields, got {}", fields.len())));
        }
        let sample_id = fields[0].parse().map_err(|_| perr(format!("bad sample id `{}`", fields[0])))?;
        let domain: Domain = fields[1].parse().map_err(|_| perr(format!("bad domain `{}`", fields[1])))?;
        let true_label = fields[2].parse().map_err(|_| perr(format!("bad label `{}`", fields[2])))?;
        let input = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| perr(format!("bad value `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(input.len()),
            Some(d) if d != input.len() => return Err(perr(format!("dimension {} differs from {d}", input.len()))),
            _ => {}
        }
        samples.push(Sample { sample_id, input, true_label, domain });
    }
    let dim = dim.ok_or_else(|| Error::Parse { line: 0, msg: "empty dataset".into() })?;
    let ids = samples.iter().map(|s| s.true_label).max().map_or(0, |m| m + 1);
    LabeledDataset::new(samples, ids, dim)
}

pub fn write_hard_ids(ids: &BTreeSet<usize>) -> String {
    ids.iter().map(|id| format!("{id}\n")).collect()
}

pub fn read_hard_ids(text: &str) -> Result<BTreeSet<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.trim().parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("bad id `{l}`") }))
        .collect()
}

fn put_values<'a>(s: &mut String, key: &str, values: impl Iterator<Item = &'a f64>) {
    s.push_str(key);
    for v in values {
        let _ = write!(s, " {v}");
    }
    s.push('\n');
}

fn put_matrix(s: &mut String, key: &str, m: &Array2<f64>) {
    let _ = writeln!(s, "{key}.shape {} {}", m.nrows(), m.ncols());
    put_values(s, &format!("{key}.weight"), m.iter());
}

fn put_encoder(s: &mut String, branch: &str, enc: &EncoderParams) {
    for (i, layer) in enc.layers.iter().enumerate() {
        put_matrix(s, &format!("{branch}.{i}"), &layer.weight);
        put_values(s, &format!("{branch}.{i}.bias"), layer.bias.iter());
    }
}

fn put_head(s: &mut String, key: &str, head: &Head) {
    put_matrix(s, key, &head.weight);
    put_values(s, &format!("{key}.bias"), head.bias.iter());
}

/// Flat `branch.layer.kind v v v ...` checkpoint of every parameter.
pub fn write_checkpoint(model: &DualBranchModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "meta.activation {}", model.f1.activation.name());
    let _ = writeln!(s, "meta.layers {}", model.f1.layers.len());
    put_encoder(&mut s, "f1", &model.f1);
    put_encoder(&mut s, "f2", &model.f2);
    put_encoder(&mut s, "mean_f1", &model.mean_f1.0);
    put_encoder(&mut s, "mean_f2", &model.mean_f2.0);
    for (name, c) in [("c1", &model.c1), ("c2", &model.c2)] {
        put_head(&mut s, &format!("{name}.source"), &c.source);
        if let Some(t) = &c.target {
            put_head(&mut s, &format!("{name}.target"), t);
        }
    }
    s
}

struct Entries(BTreeMap<String, Vec<String>>);

impl Entries {
    fn get(&self, key: &str) -> Result<&Vec<String>> {
        self.0.get(key).ok_or_else(|| Error::Parse { line: 0, msg: format!("missing checkpoint key `{key}`") })
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        self.get(key)?
            .iter()
            .map(|v| v.parse().map_err(|_| Error::Parse { line: 0, msg: format!("bad value `{v}` under `{key}`") }))
            .collect()
    }

    fn matrix(&self, key: &str) -> Result<Array2<f64>> {
        let shape = self.get(&format!("{key}.shape"))?;
        let dims: Vec<usize> = shape
            .iter()
            .map(|v| v.parse().map_err(|_| Error::Parse { line: 0, msg: format!("bad shape under `{key}`") }))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::Parse { line: 0, msg: format!("`{key}.shape` needs two numbers") });
        }
        Array2::from_shape_vec((dims[0], dims[1]), self.floats(&format!("{key}.weight"))?)
            .map_err(|e| Error::Shape(format!("{key}: {e}")))
    }

    fn encoder(&self, branch: &str, layers: usize, activation: Activation) -> Result<EncoderParams> {
        let layers = (0..layers)
            .map(|i| {
                Ok(Layer {
                    weight: self.matrix(&format!("{branch}.{i}"))?,
                    bias: Array1::from(self.floats(&format!("{branch}.{i}.bias"))?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EncoderParams { layers, activation })
    }

    fn head(&self, key: &str) -> Result<Head> {
        Ok(Head { weight: self.matrix(key)?, bias: Array1::from(self.floats(&format!("{key}.bias"))?) })
    }
}

pub fn read_checkpoint(text: &str) -> Result<DualBranchModel> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else { continue };
        if map.insert(key.to_string(), parts.map(str::to_string).collect()).is_some() {
            return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{key}`") });
        }
    }
    let e = Entries(map);
    let activation: Activation = e.get("meta.activation")?.first().map(String::as_str).unwrap_or("").parse()?;
    let layers: usize = e
        .get("meta.layers")?
        .first()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Parse { line: 0, msg: "bad meta.layers".into() })?;
    let target = |name: &str| -> Result<Option<Head>> {
        if e.0.contains_key(&format!("{name}.target.shape")) {
            e.head(&format!("{name}.target")).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(DualBranchModel {
        f1: e.encoder("f1", layers, activation)?,
        f2: e.encoder("f2", layers, activation)?,
        mean_f1: MeanEncoderParams(e.encoder("mean_f1", layers, activation)?),
        mean_f2: MeanEncoderParams(e.encoder("mean_f2", layers, activation)?),
        c1: Classifier { source: e.head("c1.source")?, target: target("c1")? },
        c2: Classifier { source: e.head("c2.source")?, target: target("c2")? },
    })
}

/// `epoch,sample_id,cluster_id|OUTLIER` rows for one epoch's labeling.
pub fn write_assignments(epoch: usize, labeling: &PseudoLabeling) -> String {
    let mut rows: Vec<(usize, String)> = labeling.assignments.iter().map(|(&id, c)| (id, c.to_string())).collect();
    rows.extend(labeling.outliers.iter().map(|&id| (id, "OUTLIER".to_string())));
    rows.sort();
    rows.into_iter().map(|(id, c)| format!("{epoch},{id},{c}\n")).collect()
}

pub const CURVES_HEADER: &str = "epoch,ce,tri,fdl,total,num_clusters,num_outliers,clustering_error_rate";

/// Per-epoch curves; aborted epochs and missing rates are left empty.
pub fn write_curves(report: &TrainingReport) -> String {
    let mut s = String::from(CURVES_HEADER);
    s.push('\n');
    for e in &report.epochs {
        let rate = e.clustering_error_rate.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            e.epoch, e.loss.ce, e.loss.tri, e.loss.fdl, e.loss.total, e.num_clusters, e.num_outliers, rate
        );
    }
    s
}

pub const SWEEP_COLUMNS: &str = "clustering_error_rate,rel_err_10,rel_err_20,mAP,rank1";

/// One sweep row: `value,clustering_error_rate,rel_err_10,rel_err_20,mAP,rank1`.
pub fn sweep_row(value: &str, report: &TrainingReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "{value},{},{},{},{},{}\n",
        opt(report.final_clustering.clustering_error_rate),
        opt(report.noise.rel_err_10),
        opt(report.noise.rel_err_20),
        report.final_metrics.map,
        report.final_metrics.rank1
    )
}
