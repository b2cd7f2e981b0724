//! Undirected graphs, maximum-cardinality search, and junction forests.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn edgeless(n: usize) -> Graph {
        Graph { adj: vec![BTreeSet::new(); n] }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        assert!(a != b, "no self loops");
        self.adj[a].insert(b);
        self.adj[b].insert(a);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n() {
            for &b in &self.adj[a] {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Component label per vertex (labels are the smallest member).
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n()];
        for start in 0..self.n() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = start;
            while let Some(v) = stack.pop() {
                for &w in &self.adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = start;
                        stack.push(w);
                    }
                }
            }
        }
        label
    }
}

/// Maximum-cardinality search. Returns the visit order and, per vertex,
/// its already-visited neighbors at visit time (RN sets). Ties on weight
/// break toward the lowest vertex index, so the order is deterministic.
fn mcs(g: &Graph) -> (Vec<usize>, Vec<BTreeSet<usize>>) {
    let n = g.n();
    let mut weight = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut rn: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for _ in 0..n {
        let v = (0..n)
            .filter(|v| !visited[*v])
            .max_by_key(|v| (weight[*v], n - *v))
            .expect("unvisited vertex remains");
        visited[v] = true;
        order.push(v);
        rn[v] = g.neighbors(v).iter().copied().filter(|w| visited[*w]).collect();
        for &w in g.neighbors(v) {
            if !visited[w] {
                weight[w] += 1;
            }
        }
    }
    (order, rn)
}

/// Zero fill-in test on the MCS order: for each vertex, its earlier
/// neighbors minus the latest of them must all neighbor that latest one.
pub fn is_chordal(g: &Graph) -> bool {
    let (order, rn) = mcs(g);
    let mut visit_pos = vec![0usize; g.n()];
    for (pos, v) in order.iter().enumerate() {
        visit_pos[*v] = pos;
    }
    for v in &order {
        let set = &rn[*v];
        if set.len() < 2 {
            continue;
        }
        let parent = *set.iter().max_by_key(|w| visit_pos[**w]).expect("non-empty");
        for w in set {
            if *w != parent && !g.has_edge(*w, parent) {
                return false;
            }
        }
    }
    true
}

/// Maximal cliques of a chordal graph via the MCS candidate sets
/// {v} + RN(v), filtered down to the inclusion-maximal ones. Output is
/// lexicographically sorted, each clique's content ascending.
pub fn maximal_cliques(g: &Graph) -> Vec<Vec<usize>> {
    let (order, rn) = mcs(g);
    let mut candidates: Vec<BTreeSet<usize>> = Vec::new();
    for v in order {
        let mut c = rn[v].clone();
        c.insert(v);
        candidates.push(c);
    }
    let mut cliques: Vec<Vec<usize>> = candidates
        .iter()
        .filter(|c| !candidates.iter().any(|other| other.len() > c.len() && c.is_subset(other)))
        .map(|c| c.iter().copied().collect())
        .collect();
    cliques.sort();
    cliques.dedup();
    cliques
}

/// Junction forest over the maximal cliques: a maximum-weight spanning
/// forest of the clique graph weighted by intersection size. For chordal
/// graphs this satisfies the running intersection property.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JunctionForest {
    /// Sorted-content cliques in lexicographic order.
    pub cliques: Vec<Vec<usize>>,
    /// (clique index a, clique index b, separator = intersection), a < b.
    pub edges: Vec<(usize, usize, Vec<usize>)>,
}

impl JunctionForest {
    pub fn singletons(n: usize) -> JunctionForest {
        JunctionForest { cliques: (0..n).map(|v| vec![v]).collect(), edges: Vec::new() }
    }

    /// Neighbor clique indices per clique.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.cliques.len()];
        for (a, b, _) in &self.edges {
            adj[*a].push(*b);
            adj[*b].push(*a);
        }
        adj
    }

    /// First clique containing attribute `v`.
    pub fn clique_containing(&self, v: usize) -> Option<usize> {
        self.cliques.iter().position(|c| c.binary_search(&v).is_ok())
    }

    /// Orientation from per-tree roots: parent[clique] and the index of the
    /// connecting edge in `edges`. Roots are the largest clique per tree,
    /// ties toward lexicographically smallest content.
    pub fn orient(&self) -> (Vec<Option<usize>>, Vec<Option<usize>>, Vec<usize>) {
        let k = self.cliques.len();
        let adj = self.adjacency();
        // Edge lookup: (min, max) -> edge index.
        let mut edge_idx = std::collections::BTreeMap::new();
        for (e, (a, b, _)) in self.edges.iter().enumerate() {
            edge_idx.insert((*a, *b), e);
        }
        let mut parent: Vec<Option<usize>> = vec![None; k];
        let mut parent_edge: Vec<Option<usize>> = vec![None; k];
        let mut seen = vec![false; k];
        let mut roots = Vec::new();
        loop {
            // Best unseen clique: largest, then lex-smallest content; clique
            // list is lex-sorted so position order breaks ties.
            let Some(root) = (0..k)
                .filter(|c| !seen[*c])
                .max_by(|a, b| {
                    self.cliques[*a]
                        .len()
                        .cmp(&self.cliques[*b].len())
                        .then(b.cmp(a))
                })
            else {
                break;
            };
            roots.push(root);
            seen[root] = true;
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(c) = queue.pop_front() {
                for &d in &adj[c] {
                    if !seen[d] {
                        seen[d] = true;
                        parent[d] = Some(c);
                        parent_edge[d] = Some(edge_idx[&(c.min(d), c.max(d))]);
                        queue.push_back(d);
                    }
                }
            }
        }
        roots.sort_unstable();
        (parent, parent_edge, roots)
    }
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|v| b.binary_search(v).is_ok()).copied().collect()
}

pub fn junction_forest(g: &Graph) -> Result<JunctionForest> {
    if !is_chordal(g) {
        return Err(Error::InvalidArgument("graph is not chordal".into()));
    }
    let cliques = maximal_cliques(g);
    let k = cliques.len();

    // Kruskal on intersection weight, deterministic order.
    let mut candidates: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let sep = intersect(&cliques[a], &cliques[b]);
            if !sep.is_empty() {
                candidates.push((a, b, sep));
            }
        }
    }
    candidates.sort_by(|x, y| y.2.len().cmp(&x.2.len()).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));

    let mut comp: Vec<usize> = (0..k).collect();
    fn find(comp: &mut Vec<usize>, v: usize) -> usize {
        if comp[v] != v {
            let r = find(comp, comp[v]);
            comp[v] = r;
        }
        comp[v]
    }
    let mut edges = Vec::new();
    for (a, b, sep) in candidates {
        let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
        if ra != rb {
            comp[ra] = rb;
            edges.push((a, b, sep));
        }
    }
    edges.sort();
    Ok(JunctionForest { cliques, edges })
}

/// Running intersection property: for every clique pair in one tree, their
/// intersection is contained in every clique on the path between them.
#[cfg(test)]
pub fn satisfies_rip(f: &JunctionForest) -> bool {
    let k = f.cliques.len();
    let adj = f.adjacency();
    for a in 0..k {
        // BFS paths from a.
        let mut prev = vec![usize::MAX; k];
        let mut seen = vec![false; k];
        seen[a] = true;
        let mut queue = std::collections::VecDeque::from([a]);
        while let Some(c) = queue.pop_front() {
            for &d in &adj[c] {
                if !seen[d] {
                    seen[d] = true;
                    prev[d] = c;
                    queue.push_back(d);
                }
            }
        }
        for b in 0..k {
            if a == b || !seen[b] {
                continue;
            }
            let need = intersect(&f.cliques[a], &f.cliques[b]);
            let mut c = b;
            while c != a {
                if !need.iter().all(|v| f.cliques[c].binary_search(v).is_ok()) {
                    return false;
                }
                c = prev[c];
            }
        }
    }
    true
}
