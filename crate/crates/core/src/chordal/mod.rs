//! Decomposable graphical model over categorical attributes: forward
//! selection of a chordal structure scored by conditional-independence
//! tests, M-estimation-smoothed clique tables, and exact conditional
//! inference by sum-product message passing on the junction forest.

mod contingency;
mod graph;
mod learn;
mod model;
mod score;
mod table;

pub use contingency::ContingencyCache;
pub use graph::{is_chordal, junction_forest, maximal_cliques, Graph, JunctionForest};
pub use learn::{learn_structure, ChordalGraph};
pub use model::{fit_parameters, read_chordal_model, write_chordal_model, JunctionTreeModel};
pub use score::{g2_score, ScoreConfig};
pub use table::Table;

use crate::data::{Cell, Dataset};
use crate::error::{Error, Result};

/// State space per attribute: the value list, plus one extra "missing"
/// state for attributes that actually contain Missing in training. Missing
/// cells of other attributes carry no evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMap {
    pub cards: Vec<usize>,
    pub has_missing: Vec<bool>,
}

impl StateMap {
    pub fn from_train(train: &Dataset) -> Result<StateMap> {
        let mut cards = Vec::with_capacity(train.width());
        let mut has_missing = Vec::with_capacity(train.width());
        for attr in &train.schema.attrs {
            let card = attr.kind.cardinality().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "attribute '{}' is continuous; discretize before the chordal model",
                    attr.name
                ))
            })?;
            let missing = train.rows.iter().any(|r| r[attr.index].is_missing());
            cards.push(card + usize::from(missing));
            has_missing.push(missing);
        }
        Ok(StateMap { cards, has_missing })
    }

    /// State of a cell; None when the cell is Missing and the attribute has
    /// no missing state (no evidence to condition on).
    pub fn state_of(&self, attr: usize, cell: Cell) -> Result<Option<usize>> {
        match cell {
            Cell::Missing => Ok(self.has_missing[attr].then(|| self.cards[attr] - 1)),
            Cell::Cat(v) => {
                let value_count = self.cards[attr] - usize::from(self.has_missing[attr]);
                if v < value_count {
                    Ok(Some(v))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "value index {v} outside attribute {attr}'s value list"
                    )))
                }
            }
            Cell::Num(_) => Err(Error::InvalidArgument(format!(
                "attribute {attr} carries a continuous cell; discretize first"
            ))),
        }
    }

    /// n x J state matrix of a dataset whose cells all map (training data
    /// for the StateMap fitted on it always does).
    pub fn map_rows(&self, ds: &Dataset) -> Result<Vec<Vec<usize>>> {
        ds.rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, cell)| {
                        self.state_of(j, *cell)?.ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "attribute {j} has Missing cells but no missing state"
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}
