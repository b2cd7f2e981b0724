//! CSV ingestion and the JSON schema sidecar.
//!
//! Kind inference: a column is Continuous iff every non-missing token parses
//! as a finite real; the sidecar can override per column and can extend the
//! missing-marker alias list (default: just "?").

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::schema::{AttrKind, Attribute, Cell, Dataset, Provenance, Schema};

#[derive(Debug, Serialize, Deserialize)]
struct SidecarColumn {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SidecarFile {
    Wrapped {
        columns: BTreeMap<String, SidecarColumn>,
        #[serde(default = "default_missing")]
        missing: Vec<String>,
    },
    Bare(BTreeMap<String, SidecarColumn>),
}

fn default_missing() -> Vec<String> {
    vec!["?".to_string()]
}

fn read_sidecar(path: &Path) -> Result<(BTreeMap<String, SidecarColumn>, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match serde_json::from_str::<SidecarFile>(&text)? {
        SidecarFile::Wrapped { columns, missing } => Ok((columns, missing)),
        SidecarFile::Bare(columns) => Ok((columns, default_missing())),
    }
}

/// Loads a UTF-8, comma-delimited, headered CSV. "?" (plus any sidecar
/// aliases) marks missing cells; fields are whitespace-trimmed.
pub fn load_csv(path: impl AsRef<Path>, schema_sidecar: Option<&Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (overrides, missing) = match schema_sidecar {
        Some(p) => read_sidecar(p)?,
        None => (BTreeMap::new(), default_missing()),
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::Parse(format!("cannot open {}: {}", path.display(), e))
            }
            _ => Error::Csv(e),
        })?;

    let names: Vec<String> = reader
        .headers()
        .map_err(Error::Csv)?
        .iter()
        .map(|h| h.to_string())
        .collect();
    {
        let mut sorted = names.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Schema(format!("duplicate column name in {}", path.display())));
        }
    }

    let mut raw: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Parse(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 1,
                len,
                expected_len
            )),
            _ => Error::Csv(e),
        })?;
        raw.push(record.iter().map(|f| f.to_string()).collect());
    }

    let is_missing = |tok: &str| missing.iter().any(|m| m == tok);

    let mut attrs = Vec::with_capacity(names.len());
    let mut columns: Vec<Vec<Cell>> = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let declared = overrides.get(name);
        let continuous = match declared.map(|c| c.kind.as_str()) {
            Some("continuous") => true,
            Some("categorical") => false,
            Some(other) => {
                return Err(Error::Schema(format!(
                    "sidecar column '{}': unknown kind '{}'",
                    name, other
                )))
            }
            None => raw.iter().all(|row| {
                let tok = &row[j];
                is_missing(tok) || tok.parse::<f64>().map(|x| x.is_finite()).unwrap_or(false)
            }),
        };

        if continuous {
            let mut col = Vec::with_capacity(raw.len());
            for (i, row) in raw.iter().enumerate() {
                let tok = &row[j];
                if is_missing(tok) {
                    col.push(Cell::Missing);
                } else {
                    let x: f64 = tok.parse().map_err(|_| {
                        Error::Parse(format!(
                            "{}: row {} column '{}': '{}' is not a number",
                            path.display(),
                            i + 1,
                            name,
                            tok
                        ))
                    })?;
                    if !x.is_finite() {
                        return Err(Error::Parse(format!(
                            "{}: row {} column '{}': non-finite value",
                            path.display(),
                            i + 1,
                            name
                        )));
                    }
                    col.push(Cell::Num(x));
                }
            }
            attrs.push(Attribute { name: name.clone(), index: j, kind: AttrKind::Continuous });
            columns.push(col);
        } else {
            // Value list: sidecar-declared, else first-appearance order.
            let declared_values = declared.and_then(|c| c.values.clone());
            let mut values: Vec<String> = declared_values.clone().unwrap_or_default();
            let mut lookup: BTreeMap<&str, usize> = BTreeMap::new();
            // Indices into `values` are assigned before cells are built so the
            // borrow of `values` stays read-only during lookup construction.
            let mut col_tokens: Vec<Option<String>> = Vec::with_capacity(raw.len());
            for row in &raw {
                let tok = &row[j];
                if is_missing(tok) {
                    col_tokens.push(None);
                } else {
                    if declared_values.is_none() && !values.iter().any(|v| v == tok) {
                        values.push(tok.clone());
                    }
                    col_tokens.push(Some(tok.clone()));
                }
            }
            for (idx, v) in values.iter().enumerate() {
                lookup.insert(v.as_str(), idx);
            }
            let mut col = Vec::with_capacity(raw.len());
            for (i, tok) in col_tokens.into_iter().enumerate() {
                match tok {
                    None => col.push(Cell::Missing),
                    Some(tok) => match lookup.get(tok.as_str()) {
                        Some(idx) => col.push(Cell::Cat(*idx)),
                        None => {
                            return Err(Error::Schema(format!(
                                "{}: row {} column '{}': value '{}' not in declared list",
                                path.display(),
                                i + 1,
                                name,
                                tok
                            )))
                        }
                    },
                }
            }
            attrs.push(Attribute {
                name: name.clone(),
                index: j,
                kind: AttrKind::Categorical(values),
            });
            columns.push(col);
        }
    }

    let n = raw.len();
    let rows: Vec<Vec<Cell>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Dataset::new(
        Arc::new(Schema::new(attrs)?),
        rows,
        Provenance { source: path.display().to_string(), seed: None, note: None },
    )
}

/// Writes a dataset back to CSV; Missing cells become "?".
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(Error::Csv)?;
    writer
        .write_record(ds.schema.attrs.iter().map(|a| a.name.as_str()))
        .map_err(Error::Csv)?;
    for row in &ds.rows {
        let fields: Vec<String> = row
            .iter()
            .zip(&ds.schema.attrs)
            .map(|(cell, attr)| match (cell, &attr.kind) {
                (Cell::Missing, _) => "?".to_string(),
                (Cell::Cat(v), AttrKind::Categorical(values)) => values[*v].clone(),
                (Cell::Num(x), _) => format!("{x}"),
                (Cell::Cat(_), AttrKind::Continuous) => unreachable!("validated dataset"),
            })
            .collect();
        writer.write_record(&fields).map_err(Error::Csv)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Renders a schema as sidecar JSON (the `ingest` subcommand's output).
pub fn schema_sidecar_json(schema: &Schema) -> Result<String> {
    #[derive(Serialize)]
    struct Out<'a> {
        columns: BTreeMap<&'a str, SidecarColumn>,
        missing: Vec<String>,
    }
    let columns = schema
        .attrs
        .iter()
        .map(|a| {
            let col = match &a.kind {
                AttrKind::Categorical(values) => {
                    SidecarColumn { kind: "categorical".into(), values: Some(values.clone()) }
                }
                AttrKind::Continuous => SidecarColumn { kind: "continuous".into(), values: None },
            };
            (a.name.as_str(), col)
        })
        .collect();
    Ok(serde_json::to_string_pretty(&Out { columns, missing: default_missing() })?)
}
