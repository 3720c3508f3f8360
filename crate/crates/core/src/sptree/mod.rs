//! Decomposition trees of two-terminal series-parallel (TTSP) graphs.
//!
//! A tree is a complete binary tree whose leaves are single weighted edges
//! and whose internal nodes are series joins (sink of the left operand
//! identified with the source of the right one) or parallel joins (both
//! terminal pairs identified).

mod recognize;

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeId, MatrixGraph, NodeId};
use crate::matlin::SpdMatrix;

pub use recognize::{recognize, recognize_traced, Reduction, ReductionKind};

#[derive(Clone, Debug, PartialEq)]
pub enum SpTree {
    Leaf { edge: EdgeId, weight: SpdMatrix },
    Series(Box<SpTree>, Box<SpTree>),
    Parallel(Box<SpTree>, Box<SpTree>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinKind {
    Series,
    Parallel,
}

/// Counts describing a tree and the graph it realizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeStats {
    pub leaves: usize,
    pub series: usize,
    pub parallel: usize,
    /// Longest root-to-leaf path, in tree edges.
    pub height: usize,
    /// Node count of the realized graph, `2l - s - 2p`.
    pub nodes: usize,
}

/// One entry of the pre-order flattening of a tree.
#[derive(Clone, Copy, Debug)]
pub enum FlatNode<'a> {
    Leaf { edge: &'a str, weight: &'a SpdMatrix },
    Join { kind: JoinKind, left: usize, right: usize },
}

impl SpTree {
    pub fn leaf(edge: impl Into<String>, weight: SpdMatrix) -> Self {
        SpTree::Leaf {
            edge: edge.into(),
            weight,
        }
    }

    /// Series join; `left` is on the source side.
    pub fn series(left: SpTree, right: SpTree) -> Result<Self> {
        Self::check_join(&left, &right)?;
        Ok(SpTree::Series(Box::new(left), Box::new(right)))
    }

    pub fn parallel(left: SpTree, right: SpTree) -> Result<Self> {
        Self::check_join(&left, &right)?;
        Ok(SpTree::Parallel(Box::new(left), Box::new(right)))
    }

    pub fn join(kind: JoinKind, left: SpTree, right: SpTree) -> Result<Self> {
        match kind {
            JoinKind::Series => Self::series(left, right),
            JoinKind::Parallel => Self::parallel(left, right),
        }
    }

    fn check_join(left: &SpTree, right: &SpTree) -> Result<()> {
        if left.dim() != right.dim() {
            return Err(Error::DimensionMismatch {
                expected: left.dim(),
                got: right.dim(),
            });
        }
        let ids: HashSet<&str> = left.leaf_edges().into_iter().collect();
        if let Some(dup) = right.leaf_edges().into_iter().find(|e| ids.contains(e)) {
            return Err(Error::InvalidTree(format!("duplicate leaf edge `{dup}`")));
        }
        Ok(())
    }

    /// Block dimension of the leaf weights.
    pub fn dim(&self) -> usize {
        match self {
            SpTree::Leaf { weight, .. } => weight.dim(),
            SpTree::Series(l, _) | SpTree::Parallel(l, _) => l.dim(),
        }
    }

    pub fn kind(&self) -> Option<JoinKind> {
        match self {
            SpTree::Leaf { .. } => None,
            SpTree::Series(..) => Some(JoinKind::Series),
            SpTree::Parallel(..) => Some(JoinKind::Parallel),
        }
    }

    /// Leaf edge ids in pre-order.
    pub fn leaf_edges(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_leaves(&mut |e, _| out.push(e));
        out
    }

    fn visit_leaves<'a>(&'a self, f: &mut impl FnMut(&'a str, &'a SpdMatrix)) {
        match self {
            SpTree::Leaf { edge, weight } => f(edge, weight),
            SpTree::Series(l, r) | SpTree::Parallel(l, r) => {
                l.visit_leaves(f);
                r.visit_leaves(f);
            }
        }
    }

    /// Number of tree nodes, `2l - 1`.
    pub fn size(&self) -> usize {
        match self {
            SpTree::Leaf { .. } => 1,
            SpTree::Series(l, r) | SpTree::Parallel(l, r) => 1 + l.size() + r.size(),
        }
    }

    /// Pre-order flattening; index 0 is the root.
    pub fn preorder(&self) -> Vec<FlatNode<'_>> {
        let mut out = Vec::with_capacity(self.size());
        self.push_preorder(&mut out);
        out
    }

    fn push_preorder<'a>(&'a self, out: &mut Vec<FlatNode<'a>>) -> usize {
        let idx = out.len();
        match self {
            SpTree::Leaf { edge, weight } => out.push(FlatNode::Leaf { edge, weight }),
            SpTree::Series(l, r) | SpTree::Parallel(l, r) => {
                let kind = self.kind().expect("join");
                out.push(FlatNode::Join {
                    kind,
                    left: 0,
                    right: 0,
                });
                let left = l.push_preorder(out);
                let right = r.push_preorder(out);
                out[idx] = FlatNode::Join { kind, left, right };
            }
        }
        idx
    }

    pub fn stats(&self) -> TreeStats {
        match self {
            SpTree::Leaf { .. } => TreeStats {
                leaves: 1,
                series: 0,
                parallel: 0,
                height: 0,
                nodes: 2,
            },
            SpTree::Series(l, r) | SpTree::Parallel(l, r) => {
                let (a, b) = (l.stats(), r.stats());
                let series = matches!(self, SpTree::Series(..));
                let mut s = TreeStats {
                    leaves: a.leaves + b.leaves,
                    series: a.series + b.series + usize::from(series),
                    parallel: a.parallel + b.parallel + usize::from(!series),
                    height: 1 + a.height.max(b.height),
                    nodes: 0,
                };
                s.nodes = 2 * s.leaves - s.series - 2 * s.parallel;
                s
            }
        }
    }

    /// The same tree traversed from the sink terminal to the source terminal.
    pub fn reversed(&self) -> SpTree {
        match self {
            SpTree::Leaf { .. } => self.clone(),
            SpTree::Series(l, r) => SpTree::Series(Box::new(r.reversed()), Box::new(l.reversed())),
            SpTree::Parallel(l, r) => SpTree::Parallel(Box::new(l.reversed()), Box::new(r.reversed())),
        }
    }

    /// Copy of the tree with leaf weights looked up by edge id.
    pub fn with_weights(&self, weights: &BTreeMap<EdgeId, SpdMatrix>) -> Result<SpTree> {
        self.map_leaves(&mut |edge, _| {
            weights
                .get(edge)
                .cloned()
                .ok_or_else(|| Error::UnknownEdge(edge.to_string()))
        })
    }

    /// Copy of the tree with leaf weights taken from the graph's edges.
    pub fn with_graph_weights(&self, g: &MatrixGraph) -> Result<SpTree> {
        self.map_leaves(&mut |edge, _| {
            g.edge(edge)
                .map(|e| e.weight.clone())
                .ok_or_else(|| Error::UnknownEdge(edge.to_string()))
        })
    }

    fn map_leaves(&self, f: &mut impl FnMut(&str, &SpdMatrix) -> Result<SpdMatrix>) -> Result<SpTree> {
        Ok(match self {
            SpTree::Leaf { edge, weight } => SpTree::Leaf {
                edge: edge.clone(),
                weight: f(edge, weight)?,
            },
            SpTree::Series(l, r) => SpTree::Series(Box::new(l.map_leaves(f)?), Box::new(r.map_leaves(f)?)),
            SpTree::Parallel(l, r) => {
                SpTree::Parallel(Box::new(l.map_leaves(f)?), Box::new(r.map_leaves(f)?))
            }
        })
    }
}

/// Checks `ceil(log2 l) <= h <= l - 1`, with the leaf count recovered from the
/// realized node count as `l = (N + 2p + s) / 2`.
pub fn check_height_bounds(t: &SpTree) -> bool {
    let st = t.stats();
    let twice_l = st.nodes + 2 * st.parallel + st.series;
    if !twice_l.is_multiple_of(2) {
        return false;
    }
    let l = twice_l / 2;
    let lower = usize::BITS - (l - 1).leading_zeros(); // ceil(log2 l) for l >= 1
    (lower as usize) <= st.height && st.height < l
}

/// A tree realized as a concrete two-terminal graph.
#[derive(Clone, Debug)]
pub struct Realization {
    /// The graph, with the sink as its only leader and the source as its only source.
    pub graph: MatrixGraph,
    pub source: NodeId,
    pub sink: NodeId,
}

/// Builds the two-terminal multigraph described by the tree. Nodes are named
/// `v0` (source), `v1` (sink), `v2`, ... in creation order.
pub fn realize(t: &SpTree) -> Result<Realization> {
    let mut count = 2usize;
    let mut fresh = || {
        let id = format!("v{count}");
        count += 1;
        id
    };
    let mut edges = Vec::new();
    realize_between(t, "v0", "v1", &mut fresh, &mut edges);
    let nodes: Vec<NodeId> = (0..count).map(|i| format!("v{i}")).collect();
    let graph = MatrixGraph::new(
        t.dim(),
        nodes,
        edges,
        ["v1".to_string()],
        Some(vec!["v0".to_string()]),
    )?;
    Ok(Realization {
        graph,
        source: "v0".into(),
        sink: "v1".into(),
    })
}

/// Appends the edges of `t` realized between two existing terminals, using
/// `fresh` to name the midpoints of series joins. Leaf edges are stored
/// oriented from their source-side terminal to their sink-side terminal.
pub fn realize_between(
    t: &SpTree,
    source: &str,
    sink: &str,
    fresh: &mut impl FnMut() -> NodeId,
    out: &mut Vec<Edge>,
) {
    match t {
        SpTree::Leaf { edge, weight } => out.push(Edge::new(edge.clone(), source, sink, weight.clone())),
        SpTree::Series(l, r) => {
            let mid = fresh();
            realize_between(l, source, &mid, fresh, out);
            realize_between(r, &mid, sink, fresh, out);
        }
        SpTree::Parallel(l, r) => {
            realize_between(l, source, sink, fresh, out);
            realize_between(r, source, sink, fresh, out);
        }
    }
}

fn unordered(a: &str, b: &str) -> (NodeId, NodeId) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Unordered terminal pair of every tree node (pre-order), derived from the
/// leaf edges' endpoints in `g`. Fails when the tree does not describe a
/// series-parallel composition of exactly the edges of `g`.
pub fn terminal_pairs(t: &SpTree, g: &MatrixGraph) -> Result<Vec<(NodeId, NodeId)>> {
    let flat = t.preorder();
    let leaves = t.leaf_edges();
    if leaves.len() != g.edges().len() {
        return Err(Error::InvalidTree(format!(
            "tree has {} leaves but the graph has {} edges",
            leaves.len(),
            g.edges().len()
        )));
    }
    let mut pairs: Vec<Option<(NodeId, NodeId)>> = vec![None; flat.len()];
    for idx in (0..flat.len()).rev() {
        let pair = match flat[idx] {
            FlatNode::Leaf { edge, .. } => {
                let e = g.edge(edge).ok_or_else(|| Error::UnknownEdge(edge.to_string()))?;
                unordered(&e.tail, &e.head)
            }
            FlatNode::Join { kind, left, right } => {
                let (a, b) = pairs[left].clone().expect("children first");
                let (c, d) = pairs[right].clone().expect("children first");
                match kind {
                    JoinKind::Parallel => {
                        if (a.clone(), b.clone()) != (c.clone(), d.clone()) {
                            return Err(Error::InvalidTree(format!(
                                "parallel join at node {idx} combines terminals {{{a},{b}}} and {{{c},{d}}}"
                            )));
                        }
                        (a, b)
                    }
                    JoinKind::Series => {
                        let shared: Vec<&NodeId> = [&a, &b].into_iter().filter(|x| **x == c || **x == d).collect();
                        if shared.len() != 1 {
                            return Err(Error::InvalidTree(format!(
                                "series join at node {idx} combines terminals {{{a},{b}}} and {{{c},{d}}}"
                            )));
                        }
                        let m = shared[0].clone();
                        let x = if a == m { b } else { a };
                        let y = if c == m { d } else { c };
                        unordered(&x, &y)
                    }
                }
            }
        };
        pairs[idx] = Some(pair);
    }
    Ok(pairs.into_iter().map(|p| p.expect("filled")).collect())
}

/// Oriented terminals `(source side, sink side)` of every tree node,
/// pre-order, for the decomposition of `g` from `source` to `sink`.
pub fn oriented_terminals(t: &SpTree, g: &MatrixGraph, source: &str, sink: &str) -> Result<Vec<(NodeId, NodeId)>> {
    let pairs = terminal_pairs(t, g)?;
    if pairs[0] != unordered(source, sink) {
        return Err(Error::InvalidTree(format!(
            "tree terminals {{{},{}}} do not match `{source}` -> `{sink}`",
            pairs[0].0, pairs[0].1
        )));
    }
    let flat = t.preorder();
    let mut out: Vec<(NodeId, NodeId)> = vec![(String::new(), String::new()); flat.len()];
    out[0] = (source.to_string(), sink.to_string());
    for idx in 0..flat.len() {
        if let FlatNode::Join { kind, left, right } = flat[idx] {
            let (s, k) = out[idx].clone();
            match kind {
                JoinKind::Parallel => {
                    out[left] = (s.clone(), k.clone());
                    out[right] = (s, k);
                }
                JoinKind::Series => {
                    let (first, second) = if pairs[left].0 == s || pairs[left].1 == s {
                        (left, right)
                    } else {
                        (right, left)
                    };
                    let (p, q) = &pairs[first];
                    let mid = if *p == s { q.clone() } else { p.clone() };
                    out[first] = (s, mid.clone());
                    out[second] = (mid, k);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::random_tree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf(id: &str) -> SpTree {
        SpTree::leaf(id, SpdMatrix::identity(1))
    }

    #[test]
    fn join_stats() {
        let s = SpTree::series(leaf("a"), leaf("b")).unwrap();
        assert_eq!(
            s.stats(),
            TreeStats { leaves: 2, series: 1, parallel: 0, height: 1, nodes: 3 }
        );
        let p = SpTree::parallel(leaf("a"), leaf("b")).unwrap();
        assert_eq!(
            p.stats(),
            TreeStats { leaves: 2, series: 0, parallel: 1, height: 1, nodes: 2 }
        );
        assert_eq!(
            leaf("a").stats(),
            TreeStats { leaves: 1, series: 0, parallel: 0, height: 0, nodes: 2 }
        );
    }

    #[test]
    fn join_errors() {
        assert!(matches!(SpTree::series(leaf("a"), leaf("a")), Err(Error::InvalidTree(_))));
        let wide = SpTree::leaf("b", SpdMatrix::identity(2));
        assert!(matches!(SpTree::parallel(leaf("a"), wide), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn nested_shapes() {
        // a series chain of two parallel pairs, and a parallel of a series pair with a leaf
        let t1 = SpTree::series(
            SpTree::parallel(leaf("a"), leaf("b")).unwrap(),
            SpTree::parallel(leaf("c"), leaf("d")).unwrap(),
        )
        .unwrap();
        assert_eq!(t1.stats(), TreeStats { leaves: 4, series: 1, parallel: 2, height: 2, nodes: 3 });
        let t2 = SpTree::parallel(SpTree::series(leaf("a"), leaf("b")).unwrap(), leaf("c")).unwrap();
        assert_eq!(t2.stats(), TreeStats { leaves: 3, series: 1, parallel: 1, height: 2, nodes: 3 });
        assert_eq!(t1.leaf_edges(), vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn height_bound_examples() {
        assert!(check_height_bounds(&SpTree::parallel(leaf("a"), leaf("b")).unwrap()));
        let mut chain = leaf("e0");
        for i in 1..5 {
            chain = SpTree::series(chain, leaf(&format!("e{i}"))).unwrap();
        }
        let st = chain.stats();
        assert_eq!((st.leaves, st.height), (5, 4));
        assert!(check_height_bounds(&chain));
    }

    #[test]
    fn realize_counts() {
        let r = realize(&leaf("a")).unwrap();
        assert_eq!((r.graph.nodes().len(), r.graph.edges().len()), (2, 1));

        let tri = SpTree::parallel(leaf("a"), SpTree::series(leaf("b"), leaf("c")).unwrap()).unwrap();
        let r = realize(&tri).unwrap();
        assert_eq!(r.graph.nodes().len(), 3);
        assert_eq!(r.graph.edges().len(), 3);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..40 {
            let t = random_tree(&mut rng, n, 1, "e");
            let r = realize(&t).unwrap();
            let st = t.stats();
            assert_eq!(r.graph.nodes().len(), st.nodes);
            assert_eq!(st.series + st.parallel, st.leaves - 1);
        }
    }

    #[test]
    fn orientation_of_realized_tree() {
        let t = SpTree::series(
            SpTree::parallel(leaf("a"), leaf("b")).unwrap(),
            SpTree::series(leaf("c"), leaf("d")).unwrap(),
        )
        .unwrap();
        let r = realize(&t).unwrap();
        let o = oriented_terminals(&t, &r.graph, "v0", "v1").unwrap();
        // every leaf is oriented as realized, tail -> head
        for (idx, node) in t.preorder().iter().enumerate() {
            if let FlatNode::Leaf { edge, .. } = node {
                let e = r.graph.edge(edge).unwrap();
                assert_eq!(o[idx], (e.tail.clone(), e.head.clone()));
            }
        }
        // reversed traversal flips every pair
        let back = oriented_terminals(&t.reversed(), &r.graph, "v1", "v0").unwrap();
        assert_eq!(back[0], ("v1".to_string(), "v0".to_string()));
        assert!(oriented_terminals(&t, &r.graph, "v0", "v2").is_err());
    }
}
