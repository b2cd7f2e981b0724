//! Model files: network weights in the binary container, everything the
//! container cannot carry (schema, standardizer, ordering state) in a JSON
//! sidecar next to it at `<file>.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{autoregressive_certificate, heads_from_layout, DaeModel, MadeModel};
use crate::data::{encoding_layout, Attribute, Schema, Standardizer};
use crate::error::{Error, Result};
use crate::nn::{read_network, write_network, Network};

const SIDECAR_VERSION: u32 = 1;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".json");
    path.with_file_name(name)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MadeSidecar {
    format: String,
    version: u32,
    attrs: Vec<Attribute>,
    standardizer: Option<Standardizer>,
    /// Prediction-time policy is fixed: orderings are resampled per
    /// imputation sample, observed attributes first, targets last.
    ordering: Vec<usize>,
    connectivity: Vec<Vec<usize>>,
    hidden: Vec<usize>,
    val_loss: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DaeSidecar {
    format: String,
    version: u32,
    attrs: Vec<Attribute>,
    standardizer: Option<Standardizer>,
    keeps: Vec<f64>,
    val_loss: f64,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn check_sidecar(format: &str, want: &str, version: u32) -> Result<()> {
    if format != want {
        return Err(Error::Parse(format!("sidecar format {format:?}, expected {want:?}")));
    }
    if version != SIDECAR_VERSION {
        return Err(Error::FormatVersion { found: version, expected: SIDECAR_VERSION });
    }
    Ok(())
}

/// Schema and net must agree: the encoding layout determines the network
/// width and head placement.
fn check_layout(schema: &Schema, net: &Network) -> Result<()> {
    let (spans, kinds, width) = encoding_layout(schema);
    if net.in_dim() != width || net.out_dim() != width {
        return Err(Error::Parse(format!(
            "network width {}x{} does not fit the encoded schema width {width}",
            net.in_dim(),
            net.out_dim()
        )));
    }
    if net.heads != heads_from_layout(&spans, &kinds) {
        return Err(Error::Parse("network heads do not match the schema layout".into()));
    }
    Ok(())
}

pub fn write_made(model: &MadeModel, path: &Path) -> Result<()> {
    write_network(&model.net, path)?;
    let sidecar = MadeSidecar {
        format: "made-model".into(),
        version: SIDECAR_VERSION,
        attrs: model.schema.attrs.clone(),
        standardizer: model.standardizer.clone(),
        ordering: model.ordering.clone(),
        connectivity: model.connectivity.clone(),
        hidden: model.hidden.clone(),
        val_loss: model.val_loss,
    };
    write_json(&sidecar, &sidecar_path(path))
}

pub fn read_made(path: &Path) -> Result<MadeModel> {
    let net = read_network(path)?;
    let sidecar: MadeSidecar = read_json(&sidecar_path(path))?;
    check_sidecar(&sidecar.format, "made-model", sidecar.version)?;
    let schema = Arc::new(Schema::new(sidecar.attrs)?);
    check_layout(&schema, &net)?;
    let (spans, kinds, _) = encoding_layout(&schema);

    let j = schema.width();
    let mut seen = vec![false; j];
    for &a in &sidecar.ordering {
        if a >= j || seen[a] {
            return Err(Error::Parse("stored ordering is not a permutation".into()));
        }
        seen[a] = true;
    }
    if sidecar.ordering.len() != j {
        return Err(Error::Parse("stored ordering is not a permutation".into()));
    }
    if sidecar.hidden.len() + 1 != net.layers.len()
        || sidecar.hidden.iter().zip(&net.layers).any(|(&h, l)| h != l.out_dim())
    {
        return Err(Error::Parse("stored hidden sizes do not match the network".into()));
    }
    if !sidecar.val_loss.is_finite() {
        return Err(Error::Parse("non-finite validation loss in sidecar".into()));
    }
    if !autoregressive_certificate(&net, &spans, &sidecar.ordering) {
        return Err(Error::Parse(
            "stored masks violate the autoregressive constraint for the stored ordering".into(),
        ));
    }
    Ok(MadeModel {
        net,
        schema,
        spans,
        kinds,
        standardizer: sidecar.standardizer,
        ordering: sidecar.ordering,
        connectivity: sidecar.connectivity,
        hidden: sidecar.hidden,
        val_loss: sidecar.val_loss,
    })
}

pub fn write_dae(model: &DaeModel, path: &Path) -> Result<()> {
    write_network(&model.net, path)?;
    let sidecar = DaeSidecar {
        format: "dae-model".into(),
        version: SIDECAR_VERSION,
        attrs: model.schema.attrs.clone(),
        standardizer: model.standardizer.clone(),
        keeps: model.keeps.clone(),
        val_loss: model.val_loss,
    };
    write_json(&sidecar, &sidecar_path(path))
}

pub fn read_dae(path: &Path) -> Result<DaeModel> {
    let net = read_network(path)?;
    let sidecar: DaeSidecar = read_json(&sidecar_path(path))?;
    check_sidecar(&sidecar.format, "dae-model", sidecar.version)?;
    let schema = Arc::new(Schema::new(sidecar.attrs)?);
    check_layout(&schema, &net)?;
    let (spans, kinds, _) = encoding_layout(&schema);

    if sidecar.keeps.len() + 1 != net.layers.len() {
        return Err(Error::Parse(format!(
            "{} keep probabilities for {} hidden layers",
            sidecar.keeps.len(),
            net.layers.len() - 1
        )));
    }
    if sidecar.keeps.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
        return Err(Error::Parse("keep probability outside (0, 1]".into()));
    }
    if !sidecar.val_loss.is_finite() {
        return Err(Error::Parse("non-finite validation loss in sidecar".into()));
    }
    Ok(DaeModel {
        net,
        schema,
        spans,
        kinds,
        standardizer: sidecar.standardizer,
        keeps: sidecar.keeps,
        val_loss: sidecar.val_loss,
    })
}
