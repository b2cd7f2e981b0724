//! Tabular data model: schemas, cells, CSV ingestion, train/test splitting,
//! equal-frequency discretization, and one-hot encoding.

mod csv_io;
mod discretize;
mod encode;
mod schema;
mod split;

pub use csv_io::{load_csv, save_csv, schema_sidecar_json};
pub use discretize::{apply_discretizer, fit_discretizer, BinSpec, Discretizer};
pub use encode::{decode, encode_one_hot, encoding_layout, EncodedMatrix, SpanKind, Standardizer};
pub use schema::{AttrKind, Attribute, Cell, Dataset, DatasetKind, Provenance, Schema};
pub use split::split_train_test;
