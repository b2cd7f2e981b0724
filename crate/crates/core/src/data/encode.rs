use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::MaskPlan;

use super::schema::{AttrKind, Cell, Dataset, Provenance, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanKind {
    OneHot,
    Raw,
}

/// Dense row-major n x D encoding. Categorical attributes own a one-hot
/// span, continuous ones a single raw column; Missing and masked cells
/// encode as all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedMatrix {
    pub n: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// Attribute index -> (first column, span length).
    pub spans: Vec<(usize, usize)>,
    pub kinds: Vec<SpanKind>,
}

impl EncodedMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Column layout for a schema, shared by every encode of that schema.
pub fn encoding_layout(schema: &Schema) -> (Vec<(usize, usize)>, Vec<SpanKind>, usize) {
    let mut spans = Vec::with_capacity(schema.width());
    let mut kinds = Vec::with_capacity(schema.width());
    let mut col = 0;
    for attr in &schema.attrs {
        match &attr.kind {
            AttrKind::Categorical(values) => {
                spans.push((col, values.len()));
                kinds.push(SpanKind::OneHot);
                col += values.len();
            }
            AttrKind::Continuous => {
                spans.push((col, 1));
                kinds.push(SpanKind::Raw);
                col += 1;
            }
        }
    }
    (spans, kinds, col)
}

pub fn encode_one_hot(ds: &Dataset, plan: Option<&MaskPlan>) -> EncodedMatrix {
    let (spans, kinds, width) = encoding_layout(&ds.schema);
    let n = ds.n();
    let mut data = vec![0.0; n * width];
    for (i, row) in ds.rows.iter().enumerate() {
        let out = &mut data[i * width..(i + 1) * width];
        for (j, cell) in row.iter().enumerate() {
            if plan.map(|p| p.is_masked(i, j)).unwrap_or(false) {
                continue;
            }
            let (start, _) = spans[j];
            match cell {
                Cell::Missing => {}
                Cell::Cat(v) => out[start + v] = 1.0,
                Cell::Num(x) => out[start] = *x,
            }
        }
    }
    EncodedMatrix { n, width, data, spans, kinds }
}

/// Inverse of [`encode_one_hot`] for full matrices (no Missing, no masks);
/// used to check the encoding round trip.
pub fn decode(enc: &EncodedMatrix, schema: &Arc<Schema>) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(enc.n);
    for i in 0..enc.n {
        let row_data = enc.row(i);
        let mut row = Vec::with_capacity(schema.width());
        for (j, attr) in schema.attrs.iter().enumerate() {
            let (start, len) = enc.spans[j];
            match &attr.kind {
                AttrKind::Categorical(_) => {
                    let span = &row_data[start..start + len];
                    let hot: Vec<usize> =
                        (0..len).filter(|k| span[*k] != 0.0).collect();
                    match hot.as_slice() {
                        [v] if span[*v] == 1.0 => row.push(Cell::Cat(*v)),
                        _ => {
                            return Err(Error::Parse(format!(
                                "row {i} attribute '{}' is not a clean one-hot span",
                                attr.name
                            )))
                        }
                    }
                }
                AttrKind::Continuous => row.push(Cell::Num(row_data[start])),
            }
        }
        rows.push(row);
    }
    Dataset::new(
        schema.clone(),
        rows,
        Provenance { source: "decoded".into(), seed: None, note: None },
    )
}

/// Per-attribute z-scoring for continuous columns entering neural models.
/// sigma uses the n-1 denominator; constant columns scale by 1 to stay
/// finite. Metrics always see the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Attribute index -> (mean, scale).
    pub stats: BTreeMap<usize, (f64, f64)>,
}

impl Standardizer {
    pub fn fit(train: &Dataset) -> Self {
        let mut stats = BTreeMap::new();
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
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let scale = if values.len() < 2 {
                1.0
            } else {
                let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            };
            stats.insert(attr.index, (mean, scale));
        }
        Standardizer { stats }
    }

    pub fn transform(&self, attr: usize, x: f64) -> f64 {
        match self.stats.get(&attr) {
            Some((mean, scale)) => (x - mean) / scale,
            None => x,
        }
    }

    pub fn invert(&self, attr: usize, z: f64) -> f64 {
        match self.stats.get(&attr) {
            Some((mean, scale)) => z * scale + mean,
            None => z,
        }
    }

    /// Rescales raw columns in place. Zero cells of masked/Missing raw
    /// values stay zero: under z-scoring, zero is the training mean, which
    /// is the least-informative default the network can receive.
    pub fn apply(&self, enc: &mut EncodedMatrix, ds: &Dataset, plan: Option<&MaskPlan>) {
        for (j, (start, _)) in enc.spans.iter().enumerate() {
            if enc.kinds[j] != SpanKind::Raw || !self.stats.contains_key(&j) {
                continue;
            }
            for i in 0..enc.n {
                let hidden = ds.rows[i][j].is_missing()
                    || plan.map(|p| p.is_masked(i, j)).unwrap_or(false);
                if !hidden {
                    let cell = i * enc.width + start;
                    enc.data[cell] = self.transform(j, enc.data[cell]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Attribute, Provenance};
    use crate::mask::make_mask_plan;

    fn mixed_ds() -> Dataset {
        let schema = Arc::new(
            Schema::new(vec![
                Attribute {
                    name: "c".into(),
                    index: 0,
                    kind: AttrKind::Categorical(vec!["a".into(), "b".into(), "c".into()]),
                },
                Attribute { name: "x".into(), index: 1, kind: AttrKind::Continuous },
            ])
            .unwrap(),
        );
        Dataset {
            schema,
            rows: vec![
                vec![Cell::Cat(1), Cell::Num(2.5)],
                vec![Cell::Cat(0), Cell::Num(-1.0)],
                vec![Cell::Missing, Cell::Num(0.5)],
            ],
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn one_hot_spans() {
        let ds = mixed_ds();
        let enc = encode_one_hot(&ds, None);
        assert_eq!(enc.width, 4);
        assert_eq!(enc.row(0), &[0.0, 1.0, 0.0, 2.5]);
        assert_eq!(enc.row(1), &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(enc.row(2), &[0.0, 0.0, 0.0, 0.5], "Missing encodes to zeros");
    }

    #[test]
    fn span_sums_zero_or_one() {
        let ds = mixed_ds();
        let enc = encode_one_hot(&ds, None);
        for i in 0..enc.n {
            let (start, len) = enc.spans[0];
            let sum: f64 = enc.row(i)[start..start + len].iter().sum();
            assert!(sum == 0.0 || sum == 1.0);
        }
    }

    #[test]
    fn masked_cells_zeroed() {
        let ds = mixed_ds();
        // Force a plan that masks attribute 1 of instance 0.
        let mut plan = make_mask_plan(3, 2, 0.4, 5).unwrap();
        plan.masked[0] = vec![1];
        plan.masked[1] = vec![0];
        plan.masked[2] = vec![1];
        let enc = encode_one_hot(&ds, Some(&plan));
        assert_eq!(enc.row(0), &[0.0, 1.0, 0.0, 0.0], "continuous 2.5 masked to 0.0");
        assert_eq!(enc.row(1), &[0.0, 0.0, 0.0, -1.0], "one-hot span masked to zeros");
    }

    #[test]
    fn decode_round_trip() {
        let schema = mixed_ds().schema.clone();
        let ds = Dataset {
            schema: schema.clone(),
            rows: vec![
                vec![Cell::Cat(2), Cell::Num(0.25)],
                vec![Cell::Cat(0), Cell::Num(7.0)],
            ],
            provenance: Provenance::default(),
        };
        let enc = encode_one_hot(&ds, None);
        let back = decode(&enc, &schema).unwrap();
        assert_eq!(back.rows, ds.rows);
    }

    #[test]
    fn standardizer_round_trip_and_constant_guard() {
        let ds = mixed_ds();
        let st = Standardizer::fit(&ds);
        let (mean, scale) = st.stats[&1];
        assert!((mean - (2.5 - 1.0 + 0.5) / 3.0).abs() < 1e-15);
        assert!(scale > 0.0);
        let z = st.transform(1, 2.5);
        assert!((st.invert(1, z) - 2.5).abs() < 1e-12);

        let constant = Dataset {
            schema: ds.schema.clone(),
            rows: vec![vec![Cell::Cat(0), Cell::Num(4.0)]; 3],
            provenance: Provenance::default(),
        };
        let st = Standardizer::fit(&constant);
        assert_eq!(st.stats[&1], (4.0, 1.0));
    }

    #[test]
    fn apply_scales_only_visible_raw_cells() {
        let ds = mixed_ds();
        let mut plan = make_mask_plan(3, 2, 0.4, 5).unwrap();
        plan.masked[0] = vec![1];
        plan.masked[1] = vec![0];
        plan.masked[2] = vec![0];
        let st = Standardizer::fit(&ds);
        let mut enc = encode_one_hot(&ds, Some(&plan));
        st.apply(&mut enc, &ds, Some(&plan));
        assert_eq!(enc.row(0)[3], 0.0, "masked raw cell stays zero");
        assert!((enc.row(1)[3] - st.transform(1, -1.0)).abs() < 1e-15);
        assert!((enc.row(2)[3] - st.transform(1, 0.5)).abs() < 1e-15);
    }
}
