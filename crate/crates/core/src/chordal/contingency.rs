//! Memoized contingency (count) tables over attribute subsets.

use std::collections::HashMap;
use std::rc::Rc;

use super::table::Table;

/// Counts are computed from a pre-mapped n x J state matrix (Missing
/// already folded to its extra state) and cached per variable subset.
pub struct ContingencyCache {
    states: Vec<Vec<usize>>,
    cards: Vec<usize>,
    cache: HashMap<Vec<usize>, Rc<Table>>,
}

impl ContingencyCache {
    pub fn new(states: Vec<Vec<usize>>, cards: Vec<usize>) -> ContingencyCache {
        ContingencyCache { states, cards, cache: HashMap::new() }
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    /// Count table over `vars` (sorted, unique); cached.
    pub fn counts(&mut self, vars: &[usize]) -> Rc<Table> {
        if let Some(t) = self.cache.get(vars) {
            return t.clone();
        }
        let t = Rc::new(Table::from_counts(
            vars.to_vec(),
            &self.cards,
            self.states.iter().map(|r| r.as_slice()),
        ));
        self.cache.insert(vars.to_vec(), t.clone());
        t
    }
}
