//! Scoring: WAPMC for categorical targets, WNRMSE for continuous ones,
//! and cross-dataset rank aggregation.
//!
//! Both metrics run over masked cells whose ground truth is present;
//! masked-but-missing cells never count. Per attribute j, M_j is the number
//! of scored cells and the attribute's weight is M_j / M.

mod ranks;

use std::collections::BTreeMap;

use crate::data::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::mask::MaskPlan;

pub use ranks::{friedman_ranks, RankTable};
pub(crate) use ranks::{column_ranks, nemenyi_cd};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredEntry {
    pub instance: usize,
    pub attr: usize,
    pub value: Cell,
}

/// One prediction per masked target cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTable {
    pub entries: Vec<PredEntry>,
}

impl PredictionTable {
    pub fn sort(&mut self) {
        self.entries.sort_by_key(|e| (e.instance, e.attr));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Wapmc,
    Wnrmse,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Wapmc => "wapmc",
            MetricKind::Wnrmse => "wnrmse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttrMetric {
    pub attr: usize,
    pub name: String,
    /// Scored cells M_j.
    pub m_j: usize,
    /// Misclassification rate E_j / M_j, or NRMSE_j.
    pub value: f64,
    /// Training sigma snapshot (continuous only).
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub per_attr: Vec<AttrMetric>,
    /// Total scored cells M = sum of M_j over included attributes.
    pub m_total: usize,
    /// Attributes dropped because sigma = 0 (weights renormalized).
    pub excluded: Vec<usize>,
    pub value: f64,
}

impl MetricReport {
    /// One CSV row per attribute: attr,name,m_j,value,sigma.
    pub fn per_attr_csv(&self) -> String {
        let mut out = String::from("attr,name,m_j,value,sigma\n");
        for a in &self.per_attr {
            let sigma = a.sigma.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", a.attr, a.name, a.m_j, a.value, sigma));
        }
        out
    }
}

/// Collects each instance's masked cells with non-missing truth and pairs
/// them with their unique prediction entry. Rejects duplicate entries,
/// entries for unmasked cells, and missing coverage; tolerates (and skips)
/// entries whose truth is Missing, which constant baselines emit because
/// they never see truth.
fn paired_targets<'a>(
    preds: &'a PredictionTable,
    truth: &Dataset,
    plan: &MaskPlan,
) -> Result<Vec<(usize, usize, &'a Cell, Cell)>> {
    if plan.n() != truth.n() {
        return Err(Error::InvalidArgument(format!(
            "plan covers {} instances, dataset has {}",
            plan.n(),
            truth.n()
        )));
    }
    let mut by_cell: BTreeMap<(usize, usize), &Cell> = BTreeMap::new();
    for e in &preds.entries {
        if e.instance >= truth.n() || e.attr >= truth.width() {
            return Err(Error::InvalidArgument(format!(
                "prediction entry ({}, {}) outside dataset bounds",
                e.instance, e.attr
            )));
        }
        if !plan.is_masked(e.instance, e.attr) {
            return Err(Error::InvalidArgument(format!(
                "prediction for unmasked cell ({}, {})",
                e.instance, e.attr
            )));
        }
        if by_cell.insert((e.instance, e.attr), &e.value).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate prediction for cell ({}, {})",
                e.instance, e.attr
            )));
        }
    }
    let mut pairs = Vec::new();
    for (i, masked) in plan.masked.iter().enumerate() {
        for &j in masked {
            let truth_cell = truth.cell(i, j);
            if truth_cell.is_missing() {
                continue;
            }
            match by_cell.get(&(i, j)) {
                Some(pred) => pairs.push((i, j, *pred, truth_cell)),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "no prediction for masked cell ({i}, {j})"
                    )))
                }
            }
        }
    }
    Ok(pairs)
}

/// Weighted average percentage of misclassification over categorical
/// targets: sum_j (M_j/M) * (E_j/M_j) = (sum_j E_j) / M.
pub fn wapmc(preds: &PredictionTable, truth: &Dataset, plan: &MaskPlan) -> Result<MetricReport> {
    let pairs = paired_targets(preds, truth, plan)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "WAPMC undefined: no masked cells with known truth".into(),
        ));
    }
    let mut m_j: BTreeMap<usize, usize> = BTreeMap::new();
    let mut e_j: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, j, pred, truth_cell) in &pairs {
        let attr = &truth.schema.attrs[*j];
        let card = attr.kind.cardinality().ok_or_else(|| {
            Error::InvalidArgument(format!("WAPMC target '{}' is continuous", attr.name))
        })?;
        let Cell::Cat(p) = pred else {
            return Err(Error::InvalidArgument(format!(
                "non-categorical prediction for '{}'",
                attr.name
            )));
        };
        if *p >= card {
            return Err(Error::InvalidArgument(format!(
                "prediction index {p} outside '{}' value list",
                attr.name
            )));
        }
        *m_j.entry(*j).or_default() += 1;
        if Cell::Cat(*p) != *truth_cell {
            *e_j.entry(*j).or_default() += 1;
        }
    }
    let m_total: usize = m_j.values().sum();
    let per_attr: Vec<AttrMetric> = m_j
        .iter()
        .map(|(&j, &m)| AttrMetric {
            attr: j,
            name: truth.schema.attrs[j].name.clone(),
            m_j: m,
            value: *e_j.get(&j).unwrap_or(&0) as f64 / m as f64,
            sigma: None,
        })
        .collect();
    let value = per_attr.iter().map(|a| (a.m_j as f64 / m_total as f64) * a.value).sum();
    Ok(MetricReport { metric: MetricKind::Wapmc, per_attr, m_total, excluded: Vec::new(), value })
}

/// Weighted normalized RMSE over continuous targets:
/// sum_j (M_j/M) * sqrt(sum_i err^2 / M_j) / sigma_j, with sigma_j the
/// training-data sample standard deviation on the raw scale.
pub fn wnrmse(
    preds: &PredictionTable,
    truth: &Dataset,
    plan: &MaskPlan,
    train_sigma: &BTreeMap<usize, f64>,
) -> Result<MetricReport> {
    let pairs = paired_targets(preds, truth, plan)?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "WNRMSE undefined: no masked cells with known truth".into(),
        ));
    }
    let mut m_j: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sq: BTreeMap<usize, f64> = BTreeMap::new();
    for (_, j, pred, truth_cell) in &pairs {
        let attr = &truth.schema.attrs[*j];
        if attr.kind.is_categorical() {
            return Err(Error::InvalidArgument(format!(
                "WNRMSE target '{}' is categorical",
                attr.name
            )));
        }
        let (Cell::Num(p), Cell::Num(t)) = (pred, truth_cell) else {
            return Err(Error::InvalidArgument(format!(
                "non-continuous prediction for '{}'",
                attr.name
            )));
        };
        *m_j.entry(*j).or_default() += 1;
        *sq.entry(*j).or_default() += (*p - t) * (*p - t);
    }

    let mut excluded = Vec::new();
    let mut per_attr = Vec::new();
    for (&j, &m) in &m_j {
        let sigma = *train_sigma.get(&j).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "no training sigma for attribute '{}'",
                truth.schema.attrs[j].name
            ))
        })?;
        if sigma <= 0.0 {
            log::warn!(
                "attribute '{}' has zero training sigma; excluded from WNRMSE",
                truth.schema.attrs[j].name
            );
            excluded.push(j);
            continue;
        }
        per_attr.push(AttrMetric {
            attr: j,
            name: truth.schema.attrs[j].name.clone(),
            m_j: m,
            value: (sq[&j] / m as f64).sqrt() / sigma,
            sigma: Some(sigma),
        });
    }
    let m_total: usize = per_attr.iter().map(|a| a.m_j).sum();
    if m_total == 0 {
        return Err(Error::InvalidArgument(
            "WNRMSE undefined: all target attributes had zero sigma".into(),
        ));
    }
    let value = per_attr.iter().map(|a| (a.m_j as f64 / m_total as f64) * a.value).sum();
    Ok(MetricReport { metric: MetricKind::Wnrmse, per_attr, m_total, excluded, value })
}

/// Sample standard deviations (n-1 denominator) of non-missing training
/// values, raw scale, for every continuous attribute.
pub fn train_sigmas(train: &Dataset) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for attr in &train.schema.attrs {
        if attr.kind.is_categorical() {
            continue;
        }
        let values: Vec<f64> = train
            .column_values(attr.index)
            .map(|c| match c {
                Cell::Num(x) => x,
                _ => unreachable!("validated dataset"),
            })
            .collect();
        if values.len() < 2 {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        out.insert(attr.index, var.sqrt());
    }
    out
}
