//! Constant per-attribute predictors: most frequent value for categorical
//! attributes, median for continuous ones. The performance floor every
//! joint model has to clear.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::data::{AttrKind, Cell, Dataset};
use crate::error::{Error, Result};
use crate::mask::MaskPlan;
use crate::metrics::{PredEntry, PredictionTable};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    /// Per attribute; None when the attribute was entirely Missing in
    /// training (predicting it is an error).
    pub constants: Vec<Option<Cell>>,
}

pub fn fit_baseline(train: &Dataset) -> Result<BaselineModel> {
    if train.n() == 0 {
        return Err(Error::InvalidArgument("cannot fit baseline on empty dataset".into()));
    }
    let constants = train
        .schema
        .attrs
        .iter()
        .map(|attr| match &attr.kind {
            AttrKind::Categorical(values) => {
                let mut counts = vec![0usize; values.len()];
                for cell in train.column_values(attr.index) {
                    if let Cell::Cat(v) = cell {
                        counts[v] += 1;
                    }
                }
                // Ties break toward the lowest value index; max_by_key on
                // (count, Reverse(idx)) would also work but this is plainer.
                let mut best: Option<(usize, usize)> = None;
                for (idx, &c) in counts.iter().enumerate() {
                    if c > 0 && best.map(|(_, bc)| c > bc).unwrap_or(true) {
                        best = Some((idx, c));
                    }
                }
                best.map(|(idx, _)| Cell::Cat(idx))
            }
            AttrKind::Continuous => {
                let mut values: Vec<f64> = train
                    .column_values(attr.index)
                    .map(|c| match c {
                        Cell::Num(x) => x,
                        _ => unreachable!("validated dataset"),
                    })
                    .collect();
                if values.is_empty() {
                    return None;
                }
                values.sort_unstable_by(f64::total_cmp);
                let n = values.len();
                let median = if n % 2 == 1 {
                    values[n / 2]
                } else {
                    (values[n / 2 - 1] + values[n / 2]) / 2.0
                };
                Some(Cell::Num(median))
            }
        })
        .collect();
    Ok(BaselineModel { constants })
}

/// Every masked cell gets its attribute's constant. Truth is never
/// consulted, so entries for masked-but-missing cells appear too; metrics
/// skip them.
pub fn predict_baseline(model: &BaselineModel, plan: &MaskPlan) -> Result<PredictionTable> {
    let mut entries = Vec::new();
    for (i, masked) in plan.masked.iter().enumerate() {
        for &j in masked {
            let value = model
                .constants
                .get(j)
                .copied()
                .flatten()
                .ok_or_else(|| Error::InvalidArgument(format!(
                    "baseline has no constant for attribute {j} (all Missing in training)"
                )))?;
            entries.push(PredEntry { instance: i, attr: j, value });
        }
    }
    Ok(PredictionTable { entries })
}

/// One line per attribute: `index<TAB>kind<TAB>value`.
pub fn write_baseline(model: &BaselineModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    writeln!(out, "# baseline v1 J={}", model.constants.len()).map_err(|e| Error::io(path, e))?;
    for (j, c) in model.constants.iter().enumerate() {
        let line = match c {
            Some(Cell::Cat(v)) => format!("{j}\tcat\t{v}"),
            Some(Cell::Num(x)) => format!("{j}\tnum\t{x}"),
            Some(Cell::Missing) | None => format!("{j}\tunfit\t"),
        };
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_baseline(path: impl AsRef<Path>) -> Result<BaselineModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty baseline file".into()))?
        .map_err(|e| Error::io(path, e))?;
    if !header.starts_with("# baseline v1") {
        return Err(Error::Parse(format!("unrecognized baseline header: {header}")));
    }
    let mut constants = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("bad baseline line: {line}")));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad attribute index '{}'", fields[0])))?;
        if idx != constants.len() {
            return Err(Error::Parse("baseline attributes out of order".into()));
        }
        let cell = match fields[1] {
            "cat" => Some(Cell::Cat(fields[2].parse().map_err(|_| {
                Error::Parse(format!("bad categorical index '{}'", fields[2]))
            })?)),
            "num" => Some(Cell::Num(fields[2].parse().map_err(|_| {
                Error::Parse(format!("bad numeric value '{}'", fields[2]))
            })?)),
            "unfit" => None,
            other => return Err(Error::Parse(format!("unknown baseline kind '{other}'"))),
        };
        constants.push(cell);
    }
    Ok(BaselineModel { constants })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Attribute, Provenance, Schema};
    use crate::mask::make_mask_plan;
    use crate::metrics::wapmc;
    use crate::seed;
    use rand::Rng;
    use std::sync::Arc;

    fn ds(attrs: Vec<Attribute>, rows: Vec<Vec<Cell>>) -> Dataset {
        Dataset {
            schema: Arc::new(Schema::new(attrs).unwrap()),
            rows,
            provenance: Provenance::default(),
        }
    }

    fn cat_attr(j: usize, values: &[&str]) -> Attribute {
        Attribute {
            name: format!("a{j}"),
            index: j,
            kind: AttrKind::Categorical(values.iter().map(|v| v.to_string()).collect()),
        }
    }

    #[test]
    fn mode_median_and_tie_rule() {
        let train = ds(
            vec![
                cat_attr(0, &["A", "B"]),
                cat_attr(1, &["A", "B"]),
                Attribute { name: "x".into(), index: 2, kind: AttrKind::Continuous },
            ],
            vec![
                vec![Cell::Cat(0), Cell::Cat(0), Cell::Num(1.0)],
                vec![Cell::Cat(0), Cell::Cat(1), Cell::Num(2.0)],
                vec![Cell::Cat(1), Cell::Missing, Cell::Num(3.0)],
                vec![Cell::Missing, Cell::Missing, Cell::Num(4.0)],
            ],
        );
        let model = fit_baseline(&train).unwrap();
        assert_eq!(model.constants[0], Some(Cell::Cat(0)), "(A,A,B) -> A");
        assert_eq!(model.constants[1], Some(Cell::Cat(0)), "tie (A,B) -> lowest index");
        assert_eq!(model.constants[2], Some(Cell::Num(2.5)), "even-count median");
    }

    #[test]
    fn unfit_attribute_raises_on_predict() {
        let train = ds(
            vec![cat_attr(0, &["A"]), cat_attr(1, &["A", "B"])],
            vec![vec![Cell::Missing, Cell::Cat(1)]; 3],
        );
        let model = fit_baseline(&train).unwrap();
        assert_eq!(model.constants[0], None);

        let mut plan = make_mask_plan(2, 2, 0.4, 0).unwrap();
        plan.masked = vec![vec![1], vec![1]];
        let table = predict_baseline(&model, &plan).unwrap();
        assert_eq!(table.entries.len(), 2);

        plan.masked = vec![vec![0], vec![1]];
        let err = predict_baseline(&model, &plan).unwrap_err();
        assert!(err.to_string().contains("attribute 0"), "got: {err}");
    }

    #[test]
    fn empty_plan_gives_empty_table() {
        let train = ds(vec![cat_attr(0, &["A"])], vec![vec![Cell::Cat(0)]]);
        let model = fit_baseline(&train).unwrap();
        let plan = MaskPlan { rate: 0.2, seed: 0, masked: vec![], validation: vec![] };
        assert!(predict_baseline(&model, &plan).unwrap().entries.is_empty());
    }

    #[test]
    fn text_round_trip() {
        let train = ds(
            vec![
                cat_attr(0, &["A", "B"]),
                Attribute { name: "x".into(), index: 1, kind: AttrKind::Continuous },
                cat_attr(2, &["C"]),
            ],
            vec![
                vec![Cell::Cat(1), Cell::Num(0.125), Cell::Missing],
                vec![Cell::Cat(1), Cell::Num(-3.5), Cell::Missing],
            ],
        );
        let model = fit_baseline(&train).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        write_baseline(&model, tmp.path()).unwrap();
        assert_eq!(read_baseline(tmp.path()).unwrap(), model);
    }

    #[test]
    fn most_freq_error_approaches_one_minus_p() {
        // Two attributes, P(v0) = 0.6; Most_Freq predicts v0, so WAPMC
        // converges to 0.4. Monte Carlo at n = 1e5 within 0.01.
        let n = 100_000;
        let mut rng = seed::rng(seed::derive(2024, seed::stage::SYNTH));
        let draw = |r: &mut rand_chacha::ChaCha8Rng| {
            let u: f64 = r.gen();
            if u < 0.6 {
                0
            } else if u < 0.85 {
                1
            } else {
                2
            }
        };
        let rows: Vec<Vec<Cell>> = (0..n)
            .map(|_| vec![Cell::Cat(draw(&mut rng)), Cell::Cat(draw(&mut rng))])
            .collect();
        let attrs = vec![cat_attr(0, &["A", "B", "C"]), cat_attr(1, &["A", "B", "C"])];
        let data = ds(attrs, rows);

        let model = fit_baseline(&data).unwrap();
        assert_eq!(model.constants[0], Some(Cell::Cat(0)));

        let plan = make_mask_plan(n, 2, 0.5, 99).unwrap();
        let preds = predict_baseline(&model, &plan).unwrap();
        let report = wapmc(&preds, &data, &plan).unwrap();
        assert!(
            (report.value - 0.4).abs() < 0.01,
            "WAPMC {} should be near 0.4",
            report.value
        );
    }
}
