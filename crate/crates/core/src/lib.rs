//! A desk-scale lab for clustering-based unsupervised domain adaptation.
//!
//! Pipeline: synthetic source/target domains ([`datagen`]) feed a
//! dual-branch encoder with mean (EMA) copies ([`encoder`]). Each adaptation
//! epoch drops a random fraction of the target set ([`sample_dropout`]),
//! pseudo-labels the rest with DBSCAN on united mean-encoder features
//! ([`clustering`]) and minimizes cross entropy, batch-hard triplet and a
//! cross-branch diversity penalty ([`losses`], [`trainer`]). [`diagnostics`]
//! tracks noisy pseudo labels and retrieval quality.

pub mod cli;
pub mod clustering;
pub mod config;
pub mod datagen;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod io;
pub mod losses;
pub mod rng;
pub mod sample_dropout;
pub mod trainer;

pub use error::{Error, Result};
