//! Equal-frequency discretization of continuous attributes.
//!
//! Boundary rule: with n sorted training values and k bins, the upper edge
//! of bin i (0-based) sits at sorted[ceil((i+1)*n/k) - 1], inclusive.
//! Boundaries land only between distinct values (duplicate edges collapse);
//! attributes with fewer distinct values than bins get one bin per distinct
//! value. Out-of-range values clamp to the outer bins at apply time.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::schema::{AttrKind, Attribute, Cell, Dataset, Schema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    /// Strictly increasing upper-inclusive cut values; bin count = len + 1.
    pub edges: Vec<f64>,
    /// Median of the training values that fell in each bin.
    pub medians: Vec<f64>,
}

impl BinSpec {
    pub fn bins(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn bin_of(&self, x: f64) -> usize {
        self.edges.partition_point(|e| *e < x)
    }

    fn labels(&self) -> Vec<String> {
        if self.edges.is_empty() {
            return vec!["all".to_string()];
        }
        let mut labels = Vec::with_capacity(self.bins());
        labels.push(format!("<={}", self.edges[0]));
        for w in self.edges.windows(2) {
            labels.push(format!("({},{}]", w[0], w[1]));
        }
        labels.push(format!(">{}", self.edges[self.edges.len() - 1]));
        labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretizer {
    pub bins: usize,
    /// Attribute index -> fitted bins. Continuous attributes with no
    /// observed training values are absent (nothing to fit).
    pub per_attr: BTreeMap<usize, BinSpec>,
}

impl Discretizer {
    /// Training median of a bin, for back-projecting bin predictions onto
    /// the raw scale.
    pub fn median(&self, attr: usize, bin: usize) -> Option<f64> {
        self.per_attr.get(&attr).and_then(|spec| spec.medians.get(bin).copied())
    }
}

fn median_of_sorted(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn fit_attr(sorted: &[f64], bins: usize) -> BinSpec {
    let n = sorted.len();
    let mut distinct: Vec<f64> = sorted.to_vec();
    distinct.dedup();

    let edges: Vec<f64> = if distinct.len() <= bins {
        distinct[..distinct.len() - 1].to_vec()
    } else {
        let mut edges = Vec::with_capacity(bins - 1);
        for i in 1..bins {
            let pos = (i * n).div_ceil(bins);
            edges.push(sorted[pos - 1]);
        }
        edges.dedup();
        let max = *sorted.last().expect("non-empty");
        edges.retain(|e| *e < max);
        edges
    };

    let spec = BinSpec { edges, medians: Vec::new() };
    let mut medians = Vec::with_capacity(spec.bins());
    let mut start = 0;
    for b in 0..spec.bins() {
        let end = if b < spec.edges.len() {
            sorted.partition_point(|v| *v <= spec.edges[b])
        } else {
            n
        };
        debug_assert!(end > start, "equal-frequency bins are never empty");
        medians.push(median_of_sorted(&sorted[start..end]));
        start = end;
    }
    BinSpec { medians, ..spec }
}

pub fn fit_discretizer(train: &Dataset, bins: usize) -> Result<Discretizer> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!("bins = {bins}, need at least 2")));
    }
    let mut per_attr = BTreeMap::new();
    for attr in &train.schema.attrs {
        if attr.kind.is_categorical() {
            continue;
        }
        let mut values: Vec<f64> = train
            .column_values(attr.index)
            .map(|c| match c {
                Cell::Num(x) => x,
                _ => unreachable!("validated dataset"),
            })
            .collect();
        if values.is_empty() {
            continue;
        }
        values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
        per_attr.insert(attr.index, fit_attr(&values, bins));
    }
    Ok(Discretizer { bins, per_attr })
}

/// Replaces fitted continuous attributes by bin-index categoricals;
/// Missing cells and unfitted attributes pass through unchanged.
pub fn apply_discretizer(dsc: &Discretizer, ds: &Dataset) -> Result<Dataset> {
    let attrs: Vec<Attribute> = ds
        .schema
        .attrs
        .iter()
        .map(|a| match dsc.per_attr.get(&a.index) {
            Some(spec) => Attribute {
                name: a.name.clone(),
                index: a.index,
                kind: AttrKind::Categorical(spec.labels()),
            },
            None => a.clone(),
        })
        .collect();
    let schema = Arc::new(Schema::new(attrs)?);

    let rows: Vec<Vec<Cell>> = ds
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, cell)| match (cell, dsc.per_attr.get(&j)) {
                    (Cell::Num(x), Some(spec)) => Cell::Cat(spec.bin_of(*x)),
                    (other, _) => *other,
                })
                .collect()
        })
        .collect();

    Dataset::new(
        schema,
        rows,
        super::Provenance {
            source: format!("{} [binned x{}]", ds.provenance.source, dsc.bins),
            seed: ds.provenance.seed,
            note: ds.provenance.note.clone(),
        },
    )
}
