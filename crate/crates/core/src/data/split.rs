use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::{self, stage};

use super::schema::Dataset;

/// Uniform shuffled split; train gets floor(ratio * n) instances.
pub fn split_train_test(ds: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = ds.n();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} instances")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, stage::SPLIT)));
    let train_n = (ratio * n as f64).floor() as usize;

    let take = |idx: &[usize], tag: &str| Dataset {
        schema: ds.schema.clone(),
        rows: idx.iter().map(|&i| ds.rows[i].clone()).collect(),
        provenance: super::Provenance {
            source: format!("{} [{tag}]", ds.provenance.source),
            seed: Some(seed),
            note: ds.provenance.note.clone(),
        },
    };
    Ok((take(&order[..train_n], "train"), take(&order[train_n..], "test")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttrKind, Attribute, Cell, Provenance, Schema};
    use std::sync::Arc;

    fn numbered(n: usize) -> Dataset {
        let schema = Arc::new(
            Schema::new(vec![Attribute {
                name: "id".into(),
                index: 0,
                kind: AttrKind::Continuous,
            }])
            .unwrap(),
        );
        Dataset {
            schema,
            rows: (0..n).map(|i| vec![Cell::Num(i as f64)]).collect(),
            provenance: Provenance::default(),
        }
    }

    fn ids(ds: &Dataset) -> Vec<usize> {
        ds.rows
            .iter()
            .map(|r| match r[0] {
                Cell::Num(x) => x as usize,
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn floor_rule_sizes() {
        let ds = numbered(8124);
        let (train, test) = split_train_test(&ds, 0.8, 7).unwrap();
        assert_eq!((train.n(), test.n()), (6499, 1625));
    }

    #[test]
    fn disjoint_union() {
        let ds = numbered(31);
        let (train, test) = split_train_test(&ds, 0.8, 3).unwrap();
        let mut all = ids(&train);
        all.extend(ids(&test));
        all.sort_unstable();
        assert_eq!(all, (0..31).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = numbered(10);
        let (a1, _) = split_train_test(&ds, 0.8, 1).unwrap();
        let (a2, _) = split_train_test(&ds, 0.8, 1).unwrap();
        let (b, _) = split_train_test(&ds, 0.8, 2).unwrap();
        assert_eq!(ids(&a1), ids(&a2));
        assert_eq!(a1.n(), 8);
        assert_eq!(b.n(), 8);
        assert_ne!(ids(&a1), ids(&b), "two seeds should permute differently");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let ds = numbered(1);
        assert!(split_train_test(&ds, 0.8, 0).is_err());
        let ds = numbered(10);
        assert!(split_train_test(&ds, 0.0, 0).is_err());
        assert!(split_train_test(&ds, 1.0, 0).is_err());
    }
}
