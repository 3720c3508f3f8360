//! Reduction-based recognizer for two-terminal series-parallel multigraphs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::SpTree;
use crate::error::{Error, Result};
use crate::graph::{MatrixGraph, NodeId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReductionKind {
    /// Contraction of a non-terminal degree-2 node.
    Series { via: NodeId },
    /// Merge of two edges with the same endpoints.
    Parallel,
}

/// One step of the reduction. Edge keys `0..m` are the graph's edges in
/// ascending id order; each reduction creates the next key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub kind: ReductionKind,
    pub merged: (usize, usize),
    pub created: usize,
    pub endpoints: (NodeId, NodeId),
}

/// A (possibly composite) edge during reduction; `tree` is oriented `a -> b`.
struct Virtual {
    a: NodeId,
    b: NodeId,
    tree: SpTree,
}

impl Virtual {
    fn other(&self, n: &str) -> &NodeId {
        if self.a == n {
            &self.b
        } else {
            &self.a
        }
    }

    fn oriented_from(&self, from: &str) -> SpTree {
        if self.a == from {
            self.tree.clone()
        } else {
            self.tree.reversed()
        }
    }
}

struct Reducer<'a> {
    source: &'a str,
    sink: &'a str,
    edges: BTreeMap<usize, Virtual>,
    incident: HashMap<NodeId, BTreeSet<usize>>,
    next_key: usize,
    trace: Vec<Reduction>,
}

impl Reducer<'_> {
    fn is_terminal(&self, n: &str) -> bool {
        n == self.source || n == self.sink
    }

    fn remove(&mut self, key: usize) -> Virtual {
        let e = self.edges.remove(&key).expect("live edge");
        for end in [&e.a, &e.b] {
            if let Some(set) = self.incident.get_mut(end) {
                set.remove(&key);
            }
        }
        e
    }

    fn insert(&mut self, a: NodeId, b: NodeId, tree: SpTree) -> usize {
        let key = self.next_key;
        self.next_key += 1;
        self.incident.entry(a.clone()).or_default().insert(key);
        self.incident.entry(b.clone()).or_default().insert(key);
        self.edges.insert(key, Virtual { a, b, tree });
        key
    }

    fn series_pass(&mut self) -> bool {
        let mut progressed = false;
        let keys: Vec<usize> = self.edges.keys().copied().collect();
        for key in keys {
            let Some(e) = self.edges.get(&key) else { continue };
            let ends = [e.a.clone(), e.b.clone()];
            for x in ends {
                if self.is_terminal(&x) {
                    continue;
                }
                let inc = &self.incident[&x];
                if inc.len() != 2 {
                    continue;
                }
                let mut it = inc.iter().copied();
                let (k1, k2) = (it.next().expect("two"), it.next().expect("two"));
                let u = self.edges[&k1].other(&x).clone();
                let v = self.edges[&k2].other(&x).clone();
                if u == v {
                    // a parallel pair hanging off `x`; the parallel pass merges it
                    continue;
                }
                let e1 = self.remove(k1);
                let e2 = self.remove(k2);
                self.incident.remove(&x);
                let tree = SpTree::Series(Box::new(e1.oriented_from(&u)), Box::new(e2.oriented_from(&x)));
                let created = self.insert(u.clone(), v.clone(), tree);
                self.trace.push(Reduction {
                    kind: ReductionKind::Series { via: x },
                    merged: (k1, k2),
                    created,
                    endpoints: (u, v),
                });
                progressed = true;
                break;
            }
        }
        progressed
    }

    fn parallel_pass(&mut self) -> bool {
        let mut groups: BTreeMap<(NodeId, NodeId), Vec<usize>> = BTreeMap::new();
        for (&key, e) in &self.edges {
            let pair = if e.a <= e.b {
                (e.a.clone(), e.b.clone())
            } else {
                (e.b.clone(), e.a.clone())
            };
            groups.entry(pair).or_default().push(key);
        }
        let mut progressed = false;
        for ((lo, hi), keys) in groups {
            if keys.len() < 2 {
                continue;
            }
            let mut acc = keys[0];
            for &next in &keys[1..] {
                let e1 = self.remove(acc);
                let e2 = self.remove(next);
                let tree = SpTree::Parallel(Box::new(e1.oriented_from(&lo)), Box::new(e2.oriented_from(&lo)));
                let created = self.insert(lo.clone(), hi.clone(), tree);
                self.trace.push(Reduction {
                    kind: ReductionKind::Parallel,
                    merged: (acc, next),
                    created,
                    endpoints: (lo.clone(), hi.clone()),
                });
                acc = created;
            }
            progressed = true;
        }
        progressed
    }

    fn stall_detail(&self) -> String {
        let live: BTreeSet<&NodeId> = self
            .incident
            .iter()
            .filter(|(_, s)| !s.is_empty())
            .map(|(n, _)| n)
            .collect();
        let dangling: Vec<&NodeId> = self
            .incident
            .iter()
            .filter(|(n, s)| s.len() == 1 && !self.is_terminal(n))
            .map(|(n, _)| n)
            .collect();
        let mut msg = format!(
            "reduction stalled with {} edges on {} nodes; no series contraction (non-terminal degree-2 node) or parallel merge applies",
            self.edges.len(),
            live.len()
        );
        if !dangling.is_empty() {
            let mut d: Vec<&str> = dangling.iter().map(|s| s.as_str()).collect();
            d.sort();
            msg.push_str(&format!("; dangling nodes: {}", d.join(", ")));
        }
        if live.len() <= 12 {
            let names: Vec<&str> = live.iter().map(|s| s.as_str()).collect();
            msg.push_str(&format!("; remaining nodes: {}", names.join(", ")));
        }
        msg
    }
}

/// Decomposition tree of `g` between `source` and `sink`.
///
/// Repeatedly contracts non-terminal degree-2 nodes (series) and merges
/// edges sharing both endpoints (parallel) until a single source-sink edge
/// remains. Candidates are visited in ascending edge-key order and each pass
/// runs series contractions before parallel merges, so the result is
/// deterministic. Leaves carry the original edge ids and weights.
pub fn recognize(g: &MatrixGraph, source: &str, sink: &str) -> Result<SpTree> {
    recognize_traced(g, source, sink).map(|(t, _)| t)
}

/// [`recognize`], also returning the sequence of reductions applied.
pub fn recognize_traced(g: &MatrixGraph, source: &str, sink: &str) -> Result<(SpTree, Vec<Reduction>)> {
    let not_sp = |detail: String| Error::NotSeriesParallel {
        source_node: source.to_string(),
        sink: sink.to_string(),
        detail,
    };
    for t in [source, sink] {
        if !g.has_node(t) {
            return Err(Error::UnknownNode(t.to_string()));
        }
    }
    if source == sink {
        return Err(Error::InvalidArgument("source and sink must differ".into()));
    }
    if !g.is_connected() {
        return Err(not_sp("graph is disconnected".into()));
    }

    let mut order: Vec<usize> = (0..g.edges().len()).collect();
    order.sort_by(|&i, &j| g.edges()[i].id.cmp(&g.edges()[j].id));
    let mut r = Reducer {
        source,
        sink,
        edges: BTreeMap::new(),
        incident: HashMap::new(),
        next_key: 0,
        trace: Vec::new(),
    };
    for n in g.nodes() {
        r.incident.insert(n.clone(), BTreeSet::new());
    }
    for i in order {
        let e = &g.edges()[i];
        r.insert(e.tail.clone(), e.head.clone(), SpTree::leaf(e.id.clone(), e.weight.clone()));
    }
    for t in [source, sink] {
        if r.incident[t].is_empty() {
            return Err(not_sp(format!("terminal `{t}` has no incident edge")));
        }
    }

    loop {
        let s = r.series_pass();
        let p = r.parallel_pass();
        if !(s || p) {
            break;
        }
    }

    if r.edges.len() == 1 {
        let (_, e) = r.edges.iter().next().expect("one edge");
        let ends_ok = (e.a == source && e.b == sink) || (e.a == sink && e.b == source);
        if ends_ok {
            let tree = e.oriented_from(source);
            return Ok((tree, r.trace));
        }
    }
    Err(not_sp(r.stall_detail()))
}
