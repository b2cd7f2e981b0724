//! Target-agnostic prediction over tabular data.
//!
//! A single model per dataset answers queries about *any* attribute subset
//! given *any* disjoint observed subset. The crate provides the full
//! pipeline: ingestion and encoding ([`data`]), the randomized masking
//! protocol ([`mask`]), scoring ([`metrics`]), constant-predictor baselines
//! ([`baseline`]), a decomposable log-linear model with exact junction-tree
//! inference ([`chordal`]), self-supervised neural imputers ([`selfsup`])
//! on a small dense-network substrate ([`nn`]), an empirical consistency
//! harness for pseudo-likelihood estimation ([`pseudolik`]), and a
//! benchmark driver ([`harness`]).

pub mod baseline;
pub mod chordal;
pub mod data;
pub mod error;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod pseudolik;
pub mod seed;
pub mod selfsup;

pub use data::{AttrKind, Attribute, Cell, Dataset, DatasetKind, Schema};
pub use error::{Error, Result};
