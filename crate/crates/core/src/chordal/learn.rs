use std::collections::{BTreeSet, HashMap};

use super::graph::{is_chordal, junction_forest, Graph, JunctionForest};
use super::score::{g2_score, ScoreConfig};
use super::{ContingencyCache, StateMap};
use crate::data::Dataset;
use crate::error::Result;

/// Chordal structure with its junction forest, as produced by forward
/// selection. The forest is always consistent with the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordalGraph {
    pub graph: Graph,
    pub forest: JunctionForest,
}

/// Greedy forward selection over decomposability-preserving edges.
///
/// Starting edgeless, repeatedly adds the candidate edge with the smallest
/// Bonferroni-adjusted p-value of the conditional-independence G-squared
/// test, stopping when no candidate passes alpha / (J(J-1)/2). Candidates
/// are pairs (a, b) drawn from adjacent junction-forest cliques separated
/// by their shared separator, plus cross-component pairs with an empty
/// separator; every such addition keeps the graph chordal.
pub fn learn_structure(train: &Dataset, cfg: &ScoreConfig) -> Result<ChordalGraph> {
    cfg.validate()?;
    let statemap = StateMap::from_train(train)?;
    let j = train.width();
    let mut graph = Graph::edgeless(j);
    let mut forest = JunctionForest::singletons(j);
    if j < 2 {
        return Ok(ChordalGraph { graph, forest });
    }

    let mut cache = ContingencyCache::new(statemap.map_rows(train)?, statemap.cards.clone());
    let threshold = cfg.alpha / (j * (j - 1) / 2) as f64;
    // Scores depend only on (a, b, separator), so they survive structure
    // changes and are memoized across iterations.
    let mut memo: HashMap<(usize, usize, Vec<usize>), (f64, f64)> = HashMap::new();

    loop {
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for (a, b, sep) in candidates(&graph, &forest) {
            if sep.len() + 2 > cfg.max_clique {
                continue;
            }
            let cells: usize = statemap.cards[a]
                * statemap.cards[b]
                * sep.iter().map(|&v| statemap.cards[v]).product::<usize>();
            if cells > cfg.max_cells {
                continue;
            }
            let (p, g2) = match memo.get(&(a, b, sep.clone())) {
                Some(&v) => v,
                None => {
                    let mut vars = sep.clone();
                    vars.extend([a, b]);
                    vars.sort_unstable();
                    let counts = cache.counts(&vars);
                    let (g2, _, p) = g2_score(&counts, a, b)?;
                    memo.insert((a, b, sep), (p, g2));
                    (p, g2)
                }
            };
            // Order by p ascending, then G-squared descending (p underflows
            // to zero on strong dependences), then lexicographic pair.
            let better = match best {
                None => true,
                Some((bp, bg, ba, bb)) => p
                    .total_cmp(&bp)
                    .then(bg.total_cmp(&g2))
                    .then(a.cmp(&ba))
                    .then(b.cmp(&bb))
                    .is_lt(),
            };
            if better {
                best = Some((p, g2, a, b));
            }
        }
        match best {
            Some((p, _, a, b)) if p <= threshold => {
                graph.add_edge(a, b);
                debug_assert!(is_chordal(&graph));
                forest = junction_forest(&graph)?;
            }
            _ => break,
        }
    }
    Ok(ChordalGraph { graph, forest })
}

/// Candidate edges (a, b, separator) with a < b, deduplicated and in
/// deterministic order.
fn candidates(graph: &Graph, forest: &JunctionForest) -> BTreeSet<(usize, usize, Vec<usize>)> {
    let mut out = BTreeSet::new();
    for (ci, cj, sep) in &forest.edges {
        for &a in forest.cliques[*ci].iter().filter(|v| !sep.contains(v)) {
            for &b in forest.cliques[*cj].iter().filter(|v| !sep.contains(v)) {
                if !graph.has_edge(a, b) {
                    out.insert((a.min(b), a.max(b), sep.clone()));
                }
            }
        }
    }
    let comp = graph.components();
    for a in 0..graph.n() {
        for b in a + 1..graph.n() {
            if comp[a] != comp[b] {
                out.insert((a, b, Vec::new()));
            }
        }
    }
    out
}
