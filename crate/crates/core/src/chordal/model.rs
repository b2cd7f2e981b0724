use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::learn::ChordalGraph;
use super::table::Table;
use super::StateMap;
use crate::data::{AttrKind, Attribute, Cell, Dataset, Schema};
use crate::error::{Error, Result};

/// Fitted decomposable model: one smoothed probability table per junction
/// forest clique and one per separator. The implied joint is
/// prod P(C) / prod P(S), which is normalized because every separator table
/// is the marginal of the clique on the far side of the forest root.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionTreeModel {
    pub schema: Arc<Schema>,
    pub statemap: StateMap,
    pub structure: ChordalGraph,
    /// Aligned with structure.forest.cliques; each sums to 1.
    pub clique_tables: Vec<Table>,
    /// Aligned with structure.forest.edges.
    pub edge_tables: Vec<Table>,
    pub m: f64,
}

/// M-estimation fit: P(C=c) = (count(c) + m/|cells|) / (n + m) per clique,
/// separator tables marginalized from the fitted clique tables.
pub fn fit_parameters(structure: &ChordalGraph, train: &Dataset, m: f64) -> Result<JunctionTreeModel> {
    if !(m >= 0.0) {
        return Err(Error::InvalidArgument(format!("smoothing m must be >= 0, got {m}")));
    }
    if structure.graph.n() != train.width() {
        return Err(Error::InvalidArgument(format!(
            "structure over {} attributes, dataset has {}",
            structure.graph.n(),
            train.width()
        )));
    }
    let statemap = StateMap::from_train(train)?;
    let states = statemap.map_rows(train)?;
    let n = states.len() as f64;
    if n + m <= 0.0 {
        return Err(Error::InvalidArgument("empty training data with m = 0".into()));
    }

    let clique_tables: Vec<Table> = structure
        .forest
        .cliques
        .iter()
        .map(|vars| {
            let mut t = Table::from_counts(
                vars.clone(),
                &statemap.cards,
                states.iter().map(|r| r.as_slice()),
            );
            let prior = m / t.cells() as f64;
            for v in &mut t.values {
                *v = (*v + prior) / (n + m);
            }
            t
        })
        .collect();
    let edge_tables = derive_edge_tables(structure, &clique_tables);

    Ok(JunctionTreeModel {
        schema: Arc::clone(&train.schema),
        statemap,
        structure: structure.clone(),
        clique_tables,
        edge_tables,
        m,
    })
}

/// One table per forest edge: the separator marginal taken from the edge's
/// endpoint farther from the component root, so the factorized joint
/// telescopes to 1.
fn derive_edge_tables(structure: &ChordalGraph, clique_tables: &[Table]) -> Vec<Table> {
    let forest = &structure.forest;
    let (_, parent_edge, _) = forest.orient();
    let mut tables: Vec<Option<Table>> = vec![None; forest.edges.len()];
    for (c, pe) in parent_edge.iter().enumerate() {
        if let Some(e) = *pe {
            tables[e] = Some(clique_tables[c].marginalize(&forest.edges[e].2));
        }
    }
    tables.into_iter().map(|t| t.expect("every edge has a far-side clique")).collect()
}

impl JunctionTreeModel {
    /// Exact P(target | evidence) by sum-product message passing, as a
    /// vector over the target's full state space (the appended missing
    /// state, where present, is the last entry). Evidence attributes in
    /// other forest components cannot change the target's posterior but are
    /// still checked for positive probability.
    pub fn posterior(&self, evidence: &BTreeMap<usize, usize>, target: usize) -> Result<Vec<f64>> {
        let j = self.statemap.cards.len();
        if target >= j {
            return Err(Error::InvalidArgument(format!("target {target} out of range")));
        }
        if evidence.contains_key(&target) {
            return Err(Error::InvalidArgument(format!("target {target} appears in evidence")));
        }
        for (&v, &s) in evidence {
            if v >= j || s >= self.statemap.cards[v] {
                return Err(Error::InvalidArgument(format!(
                    "evidence {v}={s} outside the state space"
                )));
            }
        }

        let comp = self.structure.graph.components();
        let forest = &self.structure.forest;
        let root = forest.clique_containing(target).expect("every attribute lies in a clique");

        // Evidence in foreign components factors out of the posterior, but
        // impossible evidence anywhere must surface as an error.
        let mut foreign: Vec<usize> = evidence
            .keys()
            .map(|&v| comp[v])
            .filter(|&c| c != comp[target])
            .collect();
        foreign.sort_unstable();
        foreign.dedup();
        for fc in foreign {
            let v = *evidence.keys().find(|&&v| comp[v] == fc).expect("component has evidence");
            let fr = forest.clique_containing(v).expect("every attribute lies in a clique");
            if self.collect_at(fr, evidence).sum() <= 0.0 {
                return Err(Error::ZeroProbabilityEvidence);
            }
        }

        let mut dist = self.collect_at(root, evidence).marginalize(&[target]);
        if dist.normalize() <= 0.0 {
            return Err(Error::ZeroProbabilityEvidence);
        }
        Ok(dist.values)
    }

    /// Upward pass over the forest component containing `root`: returns the
    /// root clique's table with evidence applied and all child messages
    /// absorbed. Its sum is the probability of the component's evidence.
    fn collect_at(&self, root: usize, evidence: &BTreeMap<usize, usize>) -> Table {
        let forest = &self.structure.forest;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); forest.cliques.len()];
        for (e, (a, b, _)) in forest.edges.iter().enumerate() {
            adj[*a].push((*b, e));
            adj[*b].push((*a, e));
        }

        // BFS order from the root; children precede parents when reversed.
        let mut order = vec![(root, usize::MAX)];
        let mut seen = vec![false; forest.cliques.len()];
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let (c, _) = order[head];
            head += 1;
            for &(d, e) in &adj[c] {
                if !seen[d] {
                    seen[d] = true;
                    order.push((d, e));
                }
            }
        }

        let mut messages: Vec<Option<Table>> = vec![None; forest.cliques.len()];
        let mut rooted = None;
        for &(c, up_edge) in order.iter().rev() {
            let mut beta = self.clique_tables[c].clone();
            for &v in &forest.cliques[c] {
                if let Some(&s) = evidence.get(&v) {
                    beta.restrict(v, s);
                }
            }
            for &(d, e) in &adj[c] {
                if e != up_edge {
                    beta.multiply_in(messages[d].as_ref().expect("child message ready"));
                }
            }
            if c == root {
                rooted = Some(beta);
            } else {
                let mut msg = beta.marginalize(&forest.edges[up_edge].2);
                msg.divide_in(&self.edge_tables[up_edge]);
                messages[c] = Some(msg);
            }
        }
        rooted.expect("root processed last")
    }

    /// Per-target argmax of the posterior over value states (the missing
    /// state is never predicted); ties go to the lowest value index.
    /// Unmasked cells form the evidence; Missing cells only count as
    /// evidence for attributes with a missing state.
    pub fn predict_instance(
        &self,
        row: &[Cell],
        masked: &[usize],
        targets: &[usize],
    ) -> Result<Vec<usize>> {
        let j = self.statemap.cards.len();
        if row.len() != j {
            return Err(Error::InvalidArgument(format!(
                "row has {} cells, model expects {j}",
                row.len()
            )));
        }
        if let Some(t) = targets.iter().find(|t| masked.binary_search(t).is_err()) {
            return Err(Error::InvalidArgument(format!("target {t} is not masked")));
        }
        let mut evidence = BTreeMap::new();
        for (v, cell) in row.iter().enumerate() {
            if masked.binary_search(&v).is_ok() {
                continue;
            }
            if let Some(s) = self.statemap.state_of(v, *cell)? {
                evidence.insert(v, s);
            }
        }
        targets
            .iter()
            .map(|&t| {
                let post = self.posterior(&evidence, t)?;
                let values = self.statemap.cards[t] - usize::from(self.statemap.has_missing[t]);
                let mut arg = 0;
                for (i, p) in post[..values].iter().enumerate() {
                    if *p > post[arg] {
                        arg = i;
                    }
                }
                Ok(arg)
            })
            .collect()
    }

    /// log prod P(C) / prod P(S) at a full state assignment; -inf where the
    /// model puts no mass.
    pub fn log_prob_states(&self, states: &[usize]) -> f64 {
        let pick = |t: &Table| {
            let digits: Vec<usize> = t.vars.iter().map(|&v| states[v]).collect();
            t.values[t.index_of(&digits)]
        };
        let mut lp = 0.0;
        for t in &self.clique_tables {
            lp += pick(t).ln();
        }
        for t in &self.edge_tables {
            lp -= pick(t).ln();
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Materializes the factorized joint as one dense table over all
    /// attributes. Verification helper for small models only.
    pub fn enumerate_joint(&self) -> Result<Table> {
        let cards = self.statemap.cards.clone();
        let cells: usize = cards.iter().product();
        if cells > 1 << 22 {
            return Err(Error::InvalidArgument(format!(
                "joint has {cells} cells; enumeration is for small models"
            )));
        }
        let vars: Vec<usize> = (0..cards.len()).collect();
        let mut joint = Table::zeros(vars, cards);
        let mut digits = vec![0usize; joint.vars.len()];
        for cell in 0..cells {
            let mut p = 1.0;
            for t in &self.clique_tables {
                let d: Vec<usize> = t.vars.iter().map(|&v| digits[v]).collect();
                p *= t.values[t.index_of(&d)];
            }
            if p > 0.0 {
                for t in &self.edge_tables {
                    let d: Vec<usize> = t.vars.iter().map(|&v| digits[v]).collect();
                    p /= t.values[t.index_of(&d)];
                }
            }
            joint.values[cell] = p;
            Table::advance(&mut digits, &joint.cards);
        }
        Ok(joint)
    }
}

#[derive(Serialize, Deserialize)]
struct AttrLine {
    index: usize,
    name: String,
    values: Vec<String>,
    missing: bool,
}

pub fn write_chordal_model(model: &JunctionTreeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_chordal_model_to(model, &mut out).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn write_chordal_model_to(model: &JunctionTreeModel, out: &mut impl Write) -> Result<()> {
    let io_err = |e| Error::io("<writer>", e);
    writeln!(out, "# chordal-model v1").map_err(io_err)?;
    writeln!(out, "m {}", model.m).map_err(io_err)?;
    writeln!(out, "attrs {}", model.schema.attrs.len()).map_err(io_err)?;
    for (attr, &missing) in model.schema.attrs.iter().zip(&model.statemap.has_missing) {
        let values = match &attr.kind {
            AttrKind::Categorical(v) => v.clone(),
            AttrKind::Continuous => {
                return Err(Error::InvalidArgument(
                    "chordal models are categorical; cannot serialize a continuous attribute"
                        .into(),
                ))
            }
        };
        let line = AttrLine { index: attr.index, name: attr.name.clone(), values, missing };
        writeln!(out, "attr {}", serde_json::to_string(&line)?).map_err(io_err)?;
    }
    let forest = &model.structure.forest;
    writeln!(out, "cliques {}", forest.cliques.len()).map_err(io_err)?;
    for (i, c) in forest.cliques.iter().enumerate() {
        let vars: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        writeln!(out, "clique {i} {}", vars.join(",")).map_err(io_err)?;
    }
    writeln!(out, "edges {}", forest.edges.len()).map_err(io_err)?;
    for (a, b, _) in &forest.edges {
        writeln!(out, "edge {a} {b}").map_err(io_err)?;
    }
    for (i, t) in model.clique_tables.iter().enumerate() {
        let cells: Vec<String> = t.values.iter().map(|v| v.to_string()).collect();
        writeln!(out, "table {i} {}", cells.join(" ")).map_err(io_err)?;
    }
    writeln!(out, "end").map_err(io_err)?;
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_chordal_model(path: impl AsRef<Path>) -> Result<JunctionTreeModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file)
        .lines()
        .map(|l| l.map_err(|e| Error::io(path, e)));
    read_chordal_model_from(&mut lines)
}

fn read_chordal_model_from(
    lines: &mut impl Iterator<Item = Result<String>>,
) -> Result<JunctionTreeModel> {
    let mut next = || -> Result<String> {
        lines.next().ok_or_else(|| Error::Parse("truncated chordal model file".into()))?
    };
    let header = next()?;
    match header.strip_prefix("# chordal-model v") {
        Some(v) => {
            let found: u32 =
                v.trim().parse().map_err(|_| Error::Parse(format!("bad header: {header}")))?;
            if found != 1 {
                return Err(Error::FormatVersion { found, expected: 1 });
            }
        }
        None => return Err(Error::Parse(format!("not a chordal model file: {header}"))),
    }

    fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| Error::Parse(format!("expected '{key} ...', got '{line}'")))
    }

    let m: f64 = field(&next()?, "m")?
        .parse()
        .map_err(|_| Error::Parse("bad smoothing value".into()))?;
    let j: usize =
        field(&next()?, "attrs")?.parse().map_err(|_| Error::Parse("bad attr count".into()))?;

    let mut attrs = Vec::with_capacity(j);
    let mut has_missing = Vec::with_capacity(j);
    for i in 0..j {
        let line = next()?;
        let a: AttrLine = serde_json::from_str(field(&line, "attr")?)?;
        if a.index != i {
            return Err(Error::Parse(format!("attribute {i} out of order", i = a.index)));
        }
        attrs.push(Attribute { name: a.name, index: i, kind: AttrKind::Categorical(a.values) });
        has_missing.push(a.missing);
    }
    let schema = Arc::new(Schema::new(attrs).map_err(|e| Error::Parse(e.to_string()))?);
    let cards: Vec<usize> = schema
        .attrs
        .iter()
        .zip(&has_missing)
        .map(|(a, &miss)| a.kind.cardinality().unwrap() + usize::from(miss))
        .collect();
    let statemap = StateMap { cards: cards.clone(), has_missing };

    let k: usize =
        field(&next()?, "cliques")?.parse().map_err(|_| Error::Parse("bad clique count".into()))?;
    let mut cliques = Vec::with_capacity(k);
    for i in 0..k {
        let line = next()?;
        let rest = field(&line, &format!("clique {i}"))?;
        let vars: Vec<usize> = rest
            .split(',')
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad clique line: {line}"))))
            .collect::<Result<_>>()?;
        if vars.is_empty() || vars.windows(2).any(|w| w[0] >= w[1]) || *vars.last().unwrap() >= j {
            return Err(Error::Parse(format!("clique {i} is not a sorted attribute set")));
        }
        cliques.push(vars);
    }

    let e: usize =
        field(&next()?, "edges")?.parse().map_err(|_| Error::Parse("bad edge count".into()))?;
    let mut edges = Vec::with_capacity(e);
    let mut uf: Vec<usize> = (0..k).collect();
    fn find(uf: &mut Vec<usize>, x: usize) -> usize {
        if uf[x] != x {
            uf[x] = find(uf, uf[x]);
        }
        uf[x]
    }
    for _ in 0..e {
        let line = next()?;
        let rest = field(&line, "edge")?;
        let mut it = rest.split(' ');
        let (a, b) = match (it.next(), it.next(), it.next()) {
            (Some(a), Some(b), None) => (
                a.parse::<usize>().map_err(|_| Error::Parse(format!("bad edge line: {line}")))?,
                b.parse::<usize>().map_err(|_| Error::Parse(format!("bad edge line: {line}")))?,
            ),
            _ => return Err(Error::Parse(format!("bad edge line: {line}"))),
        };
        if a >= b || b >= k {
            return Err(Error::Parse(format!("edge {a}-{b} is not a valid clique pair")));
        }
        let sep: Vec<usize> =
            cliques[a].iter().copied().filter(|v| cliques[b].contains(v)).collect();
        if sep.is_empty() {
            return Err(Error::Parse(format!("edge {a}-{b} has an empty separator")));
        }
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        if ra == rb {
            return Err(Error::Parse("junction forest edges contain a cycle".into()));
        }
        uf[ra] = rb;
        edges.push((a, b, sep));
    }

    let mut clique_tables = Vec::with_capacity(k);
    for i in 0..k {
        let line = next()?;
        let rest = field(&line, &format!("table {i}"))?;
        let t_cards: Vec<usize> = cliques[i].iter().map(|&v| cards[v]).collect();
        let mut t = Table::zeros(cliques[i].clone(), t_cards);
        let values: Vec<f64> = rest
            .split(' ')
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad table cell '{s}'"))))
            .collect::<Result<_>>()?;
        if values.len() != t.cells() {
            return Err(Error::Parse(format!(
                "table {i} has {} cells, clique needs {}",
                values.len(),
                t.cells()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parse(format!("table {i} has a negative or non-finite cell")));
        }
        t.values = values;
        clique_tables.push(t);
    }
    if next()? != "end" {
        return Err(Error::Parse("missing end marker".into()));
    }

    let mut graph = Graph::edgeless(j);
    for c in &cliques {
        for (x, &a) in c.iter().enumerate() {
            for &b in &c[x + 1..] {
                graph.add_edge(a, b);
            }
        }
    }
    if !super::is_chordal(&graph) {
        return Err(Error::Parse("clique list does not describe a chordal graph".into()));
    }
    let structure = ChordalGraph {
        graph,
        forest: super::JunctionForest { cliques, edges },
    };
    let edge_tables = derive_edge_tables(&structure, &clique_tables);
    Ok(JunctionTreeModel { schema, statemap, structure, clique_tables, edge_tables, m })
}
