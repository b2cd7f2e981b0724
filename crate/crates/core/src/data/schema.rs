use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attribute kind. Categorical value lists are ordered; a value's position
/// in the list is its index everywhere (cells, one-hot spans, tie-breaks).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttrKind {
    Categorical(Vec<String>),
    Continuous,
}

impl AttrKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, AttrKind::Categorical(_))
    }

    /// Number of declared values for a categorical attribute.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            AttrKind::Categorical(values) => Some(values.len()),
            AttrKind::Continuous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub index: usize,
    pub kind: AttrKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attrs: Vec<Attribute>,
}

impl Schema {
    pub fn new(attrs: Vec<Attribute>) -> Result<Self> {
        let schema = Schema { attrs };
        schema.validate()?;
        Ok(schema)
    }

    pub fn width(&self) -> usize {
        self.attrs.len()
    }

    pub fn attr(&self, j: usize) -> &Attribute {
        &self.attrs[j]
    }

    /// Value list of a categorical attribute; errors on continuous.
    pub fn values(&self, j: usize) -> Result<&[String]> {
        match &self.attrs[j].kind {
            AttrKind::Categorical(values) => Ok(values),
            AttrKind::Continuous => Err(Error::Schema(format!(
                "attribute '{}' is continuous, no value list",
                self.attrs[j].name
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (pos, attr) in self.attrs.iter().enumerate() {
            if attr.index != pos {
                return Err(Error::Schema(format!(
                    "attribute '{}' has index {} at position {}",
                    attr.name, attr.index, pos
                )));
            }
            if let AttrKind::Categorical(values) = &attr.kind {
                if values.is_empty() {
                    return Err(Error::Schema(format!(
                        "attribute '{}' has an empty value list",
                        attr.name
                    )));
                }
                let mut seen = values.clone();
                seen.sort_unstable();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::Schema(format!(
                        "attribute '{}' has duplicate values",
                        attr.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One table cell. Categorical values are indices into the attribute's
/// value list; continuous values are finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Missing,
    Cat(usize),
    Num(f64),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }

    pub fn cat(&self) -> Option<usize> {
        match self {
            Cell::Cat(v) => Some(*v),
            _ => None,
        }
    }

    pub fn num(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }
}

/// How a dataset enters the benchmark pipeline.
///
/// `Discretized` means: a continuous source that is binned up front and then
/// treated as categorical end to end (the usual way continuous benchmarks
/// are scored with a classification metric).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Categorical,
    Continuous,
    Discretized,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub rows: Vec<Vec<Cell>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, rows: Vec<Vec<Cell>>, provenance: Provenance) -> Result<Self> {
        let ds = Dataset { schema, rows, provenance };
        ds.validate()?;
        Ok(ds)
    }

    /// Instance count.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Attribute count J.
    pub fn width(&self) -> usize {
        self.schema.width()
    }

    pub fn cell(&self, i: usize, j: usize) -> Cell {
        self.rows[i][j]
    }

    /// Non-missing values of one attribute, in row order.
    pub fn column_values(&self, j: usize) -> impl Iterator<Item = Cell> + '_ {
        self.rows.iter().map(move |r| r[j]).filter(|c| !c.is_missing())
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let width = self.schema.width();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::Schema(format!(
                    "row {} has {} cells, schema expects {}",
                    i,
                    row.len(),
                    width
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                match (cell, &self.schema.attrs[j].kind) {
                    (Cell::Missing, _) => {}
                    (Cell::Cat(v), AttrKind::Categorical(values)) => {
                        if *v >= values.len() {
                            return Err(Error::Schema(format!(
                                "row {} attribute '{}': value index {} out of range (< {})",
                                i, self.schema.attrs[j].name, v, values.len()
                            )));
                        }
                    }
                    (Cell::Num(x), AttrKind::Continuous) => {
                        if !x.is_finite() {
                            return Err(Error::Schema(format!(
                                "row {} attribute '{}': non-finite value",
                                i, self.schema.attrs[j].name
                            )));
                        }
                    }
                    (cell, _) => {
                        return Err(Error::Schema(format!(
                            "row {} attribute '{}': cell {:?} does not match attribute kind",
                            i, self.schema.attrs[j].name, cell
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
