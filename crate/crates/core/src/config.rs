//! Flat `dotted.key=value` run configuration.
//!
//! ```text
//! # comment
//! seed=7
//! data.target_identities=20
//! trainer.rho=0.4
//! clustering.eps=0.6
//! ```
//!
//! Keys under `manifest.` are informational and ignored on load, so a run
//! manifest is itself a loadable config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::clustering::Metric;
use crate::datagen::{AffineShift, Domain, DomainGenConfig};
use crate::encoder::Activation;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::trainer::ExperimentConfig;

/// Parameters of the paired synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub source_identities: usize,
    pub target_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub spread: f64,
    pub separation: f64,
    pub shift_rotation: f64,
    pub shift_translation: f64,
    pub hard_fraction: f64,
    pub hard_overlap: f64,
    /// Load `source.csv`, `target.csv` and `hard_ids.txt` from here instead
    /// of generating.
    pub corpus_dir: Option<PathBuf>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            source_identities: 20,
            target_identities: 20,
            samples_per_identity: 20,
            dim: 32,
            spread: 0.5,
            separation: 4.0,
            shift_rotation: 0.3,
            shift_translation: 1.0,
            hard_fraction: 0.1,
            hard_overlap: 2.0,
            corpus_dir: None,
        }
    }
}

impl CorpusConfig {
    pub fn source_config(&self) -> DomainGenConfig {
        DomainGenConfig {
            num_identities: self.source_identities,
            samples_per_identity: self.samples_per_identity,
            dim: self.dim,
            intra_class_spread: self.spread,
            inter_class_separation: self.separation,
            domain_shift: AffineShift::identity(self.dim),
            hard_fraction: 0.0,
            hard_overlap: 1.0,
            domain: Domain::Source,
            seed: derive_seed(self.seed, "corpus/source", 0),
        }
    }

    pub fn target_config(&self) -> DomainGenConfig {
        let seed = derive_seed(self.seed, "corpus/target", 0);
        DomainGenConfig {
            num_identities: self.target_identities,
            samples_per_identity: self.samples_per_identity,
            dim: self.dim,
            intra_class_spread: self.spread,
            inter_class_separation: self.separation,
            domain_shift: AffineShift::random_rigid(self.dim, self.shift_rotation, self.shift_translation, seed),
            hard_fraction: self.hard_fraction,
            hard_overlap: self.hard_overlap,
            domain: Domain::Target,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("{field}: {why}")));
        if self.source_identities < 2 {
            return bad("data.source_identities", "must be >= 2");
        }
        if self.target_identities < 2 {
            return bad("data.target_identities", "must be >= 2");
        }
        if self.samples_per_identity == 0 {
            return bad("data.samples_per_identity", "must be >= 1");
        }
        if self.dim == 0 {
            return bad("data.dim", "must be >= 1");
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return bad("data.spread", "must be finite and >= 0");
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad("data.separation", "must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return bad("data.hard_fraction", &format!("must lie in [0, 1], got {}", self.hard_fraction));
        }
        if !(self.hard_overlap >= 1.0) {
            return bad("data.hard_overlap", "must be >= 1");
        }
        if !(self.shift_rotation >= 0.0 && self.shift_translation >= 0.0) {
            return bad("data.shift_rotation/data.shift_translation", "must be >= 0");
        }
        Ok(())
    }
}

/// Everything a run needs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub experiment: ExperimentConfig,
}


/// Names accepted by `sweep --param` and the config key each one sets.
pub const SWEEPABLE: &[(&str, &str)] = &[
    ("rho", "trainer.rho"),
    ("delta", "trainer.delta"),
    ("fdl_enabled", "trainer.fdl_enabled"),
    ("alpha", "trainer.alpha"),
    ("eps", "clustering.eps"),
];

pub fn sweep_key(param: &str) -> Option<&'static str> {
    SWEEPABLE.iter().find(|(p, _)| *p == param).map(|(_, k)| *k)
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key=value, got `{line}`") })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Parse { line: i + 1, msg: "empty key".into() });
        }
        if out.insert(key.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{key}`") });
        }
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Config(format!("{key}: cannot parse `{raw}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true/false, got `{raw}`"))),
    }
}

fn parse_arch(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|p| value::<usize>(key, p.trim())).collect()
}

impl RunConfig {
    /// Applies one key. Unknown keys are configuration errors.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let c = &mut self.corpus;
        let e = &mut self.experiment;
        match key {
            "seed" => e.seed = value(key, raw)?,
            "data.seed" => c.seed = value(key, raw)?,
            "data.source_identities" => c.source_identities = value(key, raw)?,
            "data.target_identities" => c.target_identities = value(key, raw)?,
            "data.samples_per_identity" => c.samples_per_identity = value(key, raw)?,
            "data.dim" => c.dim = value(key, raw)?,
            "data.spread" => c.spread = value(key, raw)?,
            "data.separation" => c.separation = value(key, raw)?,
            "data.shift_rotation" => c.shift_rotation = value(key, raw)?,
            "data.shift_translation" => c.shift_translation = value(key, raw)?,
            "data.hard_fraction" => c.hard_fraction = value(key, raw)?,
            "data.hard_overlap" => c.hard_overlap = value(key, raw)?,
            "data.corpus_dir" => c.corpus_dir = if raw.is_empty() { None } else { Some(PathBuf::from(raw)) },
            "trainer.rho" => e.rho = value(key, raw)?,
            "trainer.alpha" => e.alpha = value(key, raw)?,
            "trainer.beta" => e.beta = value(key, raw)?,
            "trainer.gamma" => e.gamma = value(key, raw)?,
            "trainer.delta" => e.delta = value(key, raw)?,
            "trainer.tau" => e.tau = value(key, raw)?,
            "trainer.lr_initial" => e.lr_initial = value(key, raw)?,
            "trainer.lr_decay_every" => e.lr_decay_every = value(key, raw)?,
            "trainer.lr_decay_factor" => e.lr_decay_factor = value(key, raw)?,
            "trainer.epochs_total" => e.epochs_total = value(key, raw)?,
            "trainer.pretrain_epochs" => e.pretrain_epochs = value(key, raw)?,
            "trainer.batch_identities" => e.batch_identities = value(key, raw)?,
            "trainer.batch_instances" => e.batch_instances = value(key, raw)?,
            "trainer.fdl_enabled" => e.fdl_enabled = parse_bool(key, raw)?,
            "clustering.eps" => e.clustering.eps = value(key, raw)?,
            "clustering.min_pts" => e.clustering.min_pts = value(key, raw)?,
            "clustering.metric" => {
                e.clustering.metric = match raw {
                    "euclidean" => Metric::Euclidean,
                    _ => return Err(Error::Config(format!("{key}: unsupported metric `{raw}`"))),
                }
            }
            "model.arch" => e.arch = parse_arch(key, raw)?,
            "model.activation" => {
                e.activation = Activation::from_str(raw).map_err(|_| Error::Config(format!("{key}: unknown activation `{raw}`")))?
            }
            "eval.query_per_identity" => e.eval_query_per_identity = value(key, raw)?,
            k if k.starts_with("manifest.") => {}
            other => return Err(Error::Config(format!("{other}: unknown configuration key"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in parse_flat(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.experiment.validate()?;
        if self.experiment.arch[0] != self.corpus.dim {
            return Err(Error::Config(format!(
                "model.arch: input size {} does not match data.dim {}",
                self.experiment.arch[0], self.corpus.dim
            )));
        }
        Ok(())
    }

    /// Serializes every key so that `from_text(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let c = &self.corpus;
        let e = &self.experiment;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        put("seed", e.seed.to_string());
        put("data.seed", c.seed.to_string());
        put("data.source_identities", c.source_identities.to_string());
        put("data.target_identities", c.target_identities.to_string());
        put("data.samples_per_identity", c.samples_per_identity.to_string());
        put("data.dim", c.dim.to_string());
        put("data.spread", c.spread.to_string());
        put("data.separation", c.separation.to_string());
        put("data.shift_rotation", c.shift_rotation.to_string());
        put("data.shift_translation", c.shift_translation.to_string());
        put("data.hard_fraction", c.hard_fraction.to_string());
        put("data.hard_overlap", c.hard_overlap.to_string());
        if let Some(dir) = &c.corpus_dir {
            put("data.corpus_dir", dir.display().to_string());
        }
        put("trainer.rho", e.rho.to_string());
        put("trainer.alpha", e.alpha.to_string());
        put("trainer.beta", e.beta.to_string());
        put("trainer.gamma", e.gamma.to_string());
        put("trainer.delta", e.delta.to_string());
        put("trainer.tau", e.tau.to_string());
        put("trainer.lr_initial", e.lr_initial.to_string());
        put("trainer.lr_decay_every", e.lr_decay_every.to_string());
        put("trainer.lr_decay_factor", e.lr_decay_factor.to_string());
        put("trainer.epochs_total", e.epochs_total.to_string());
        put("trainer.pretrain_epochs", e.pretrain_epochs.to_string());
        put("trainer.batch_identities", e.batch_identities.to_string());
        put("trainer.batch_instances", e.batch_instances.to_string());
        put("trainer.fdl_enabled", e.fdl_enabled.to_string());
        put("clustering.eps", e.clustering.eps.to_string());
        put("clustering.min_pts", e.clustering.min_pts.to_string());
        put("clustering.metric", "euclidean".into());
        put("model.arch", e.arch.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        put("model.activation", e.activation.name().into());
        put("eval.query_per_identity", e.eval_query_per_identity.to_string());
        s
    }
}
