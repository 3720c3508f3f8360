//! H2 performance of the grounded consensus dynamics `x' = -A(W) x + B u`.
//!
//! With every state observed, `H2^2 = 1/2 Tr(B^T A^-1 B)`, which splits into
//! one term per source: half the trace of the source's effective resistance
//! to the grounded leaders. The compositional route reads that resistance
//! off the root of the source's decomposition tree; the dense route inverts
//! `A(W)` directly.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::electrical::effective_resistance;
use crate::error::{Error, Result};
use crate::graph::{dirichlet_laplacian, ground_leaders, EdgeId, MatrixGraph, NodeId};
use crate::matlin::{Block, SpdMatrix};
use crate::sptree::{recognize, FlatNode, JoinKind, SpTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum H2Method {
    ExactCompositional,
    ScalarBound,
    DenseOracle,
}

impl H2Method {
    pub fn as_str(self) -> &'static str {
        match self {
            H2Method::ExactCompositional => "exact-compositional",
            H2Method::ScalarBound => "scalar-bound",
            H2Method::DenseOracle => "dense-oracle",
        }
    }
}

impl fmt::Display for H2Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Squared H2 norm with its per-source breakdown.
#[derive(Clone, Debug, PartialEq)]
pub struct H2Report {
    pub per_source: BTreeMap<NodeId, f64>,
    pub total: f64,
    pub method: H2Method,
}

impl H2Report {
    fn from_parts(per_source: BTreeMap<NodeId, f64>, method: H2Method) -> Self {
        let total = per_source.values().sum();
        Self {
            per_source,
            total,
            method,
        }
    }
}

/// Decomposition trees of a leader-follower graph, one per source, each
/// running from the source to the node that replaces the leader set.
#[derive(Clone, Debug)]
pub struct SourceTrees {
    pub grounded: MatrixGraph,
    pub sink: NodeId,
    pub trees: BTreeMap<NodeId, SpTree>,
}

impl SourceTrees {
    /// Same trees with leaf weights replaced where `weights` has an entry.
    pub fn reweighted(&self, weights: &BTreeMap<EdgeId, SpdMatrix>) -> Result<Self> {
        let grounded = self.grounded.with_weights(weights)?;
        let trees = self
            .trees
            .iter()
            .map(|(s, t)| Ok((s.clone(), t.with_graph_weights(&grounded)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            grounded,
            sink: self.sink.clone(),
            trees,
        })
    }
}

/// Grounds the leaders and recognizes a tree from every source to the sink.
/// Fails with `NotSeriesParallel` unless the graph is series-parallel from
/// each source.
pub fn decompose_sources(g: &MatrixGraph) -> Result<SourceTrees> {
    let (grounded, sink) = ground_leaders(g)?;
    if grounded.sources().is_empty() {
        return Err(Error::InvalidGraph("graph has no source nodes".into()));
    }
    let trees = grounded
        .sources()
        .iter()
        .map(|s| Ok((s.clone(), recognize(&grounded, s, &sink)?)))
        .collect::<Result<_>>()?;
    Ok(SourceTrees {
        grounded,
        sink,
        trees,
    })
}

/// `1/2 Tr(R_root)` for a tree from one source to the grounded sink.
pub fn h2_exact_single_source(t: &SpTree) -> Result<f64> {
    Ok(0.5 * effective_resistance(t)?[0].trace())
}

/// Sum of exact single-source values over `sources`.
pub fn h2_exact_aittsp(trees: &BTreeMap<NodeId, SpTree>, sources: &[NodeId]) -> Result<H2Report> {
    per_source(trees, sources, h2_exact_single_source, H2Method::ExactCompositional)
}

/// Sum of scalar upper bounds over `sources`.
pub fn h2_scalar_bound_aittsp(trees: &BTreeMap<NodeId, SpTree>, sources: &[NodeId]) -> Result<H2Report> {
    per_source(trees, sources, h2_scalar_bound, H2Method::ScalarBound)
}

fn per_source(
    trees: &BTreeMap<NodeId, SpTree>,
    sources: &[NodeId],
    f: impl Fn(&SpTree) -> Result<f64>,
    method: H2Method,
) -> Result<H2Report> {
    let mut out = BTreeMap::new();
    for s in sources {
        let t = trees.get(s).ok_or_else(|| Error::MissingTree(s.clone()))?;
        out.insert(s.clone(), f(t)?);
    }
    Ok(H2Report::from_parts(out, method))
}

fn check_positive(a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "H2 composition needs positive operands, got {a} and {b}"
        )));
    }
    Ok(())
}

/// Squared norm of a series join: the two values add.
pub fn h2_series_compose(a: f64, b: f64) -> Result<f64> {
    check_positive(a, b)?;
    Ok(a + b)
}

/// Upper bound for a parallel join: the scalar parallel sum `ab / (a + b)`.
pub fn h2_parallel_compose(a: f64, b: f64) -> Result<f64> {
    check_positive(a, b)?;
    Ok(a * b / (a + b))
}

/// Scalar fold over the tree: `1/2 Tr(W^-1)` at leaves, then the series and
/// parallel composition rules. Exact when all leaf weights are proportional
/// (in particular for `k = 1`); an upper bound otherwise.
pub fn h2_scalar_bound(t: &SpTree) -> Result<f64> {
    let flat = t.preorder();
    let mut vals = vec![0.0; flat.len()];
    for idx in (0..flat.len()).rev() {
        vals[idx] = match flat[idx] {
            FlatNode::Leaf { weight, .. } => 0.5 * weight.inverse()?.trace(),
            FlatNode::Join { kind: JoinKind::Series, left, right } => h2_series_compose(vals[left], vals[right])?,
            FlatNode::Join { kind: JoinKind::Parallel, left, right } => {
                h2_parallel_compose(vals[left], vals[right])?
            }
        };
    }
    Ok(vals[0])
}

/// `1/2 sum_s Tr(Blk_ss[A(W)^-1])` from a dense Cholesky solve.
pub fn dense_h2(g: &MatrixGraph) -> Result<H2Report> {
    let a = dirichlet_laplacian(g)?;
    if g.sources().is_empty() {
        return Err(Error::InvalidGraph("graph has no source nodes".into()));
    }
    let k = g.k();
    let mut out = BTreeMap::new();
    for s in g.sources() {
        let x = a.solve_unit_injection(s)?;
        let b = a.block_of(s).expect("source is a follower");
        out.insert(s.clone(), 0.5 * x.view((b * k, 0), (k, k)).trace());
    }
    Ok(H2Report::from_parts(out, H2Method::DenseOracle))
}

/// Voltage drop `Y_i^s` from every node to the leaders under identity
/// current injected at `source`; leaders map to zero blocks.
pub fn dense_voltages(g: &MatrixGraph, source: &str) -> Result<BTreeMap<NodeId, Block>> {
    if g.is_leader(source) {
        return Err(Error::InvalidArgument(format!("`{source}` is a leader, not a follower")));
    }
    if !g.has_node(source) {
        return Err(Error::UnknownNode(source.to_string()));
    }
    let a = dirichlet_laplacian(g)?;
    let x = a.solve_unit_injection(source)?;
    let k = g.k();
    let mut out = BTreeMap::new();
    for n in g.nodes() {
        let blk = match a.block_of(n) {
            Some(i) => x.view((i * k, 0), (k, k)).into_owned(),
            None => DMatrix::zeros(k, k),
        };
        out.insert(n.clone(), blk);
    }
    Ok(out)
}

/// `|| -A P - P A^T + I ||_F`.
pub fn lyapunov_residual_of(a: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (-(a * p) - p * a.transpose() + DMatrix::<f64>::identity(n, n)).norm()
}

/// Residual of the Lyapunov equation at the candidate solution `P = A^-1 / 2`.
pub fn lyapunov_residual(g: &MatrixGraph) -> Result<f64> {
    let a = dirichlet_laplacian(g)?;
    let p = a.inverse()? * 0.5;
    Ok(lyapunov_residual_of(a.matrix(), &p))
}

/// Evaluates the squared norm with the requested method.
pub fn h2(g: &MatrixGraph, method: H2Method) -> Result<H2Report> {
    match method {
        H2Method::DenseOracle => dense_h2(g),
        H2Method::ExactCompositional => {
            let d = decompose_sources(g)?;
            h2_exact_aittsp(&d.trees, d.grounded.sources())
        }
        H2Method::ScalarBound => {
            let d = decompose_sources(g)?;
            h2_scalar_bound_aittsp(&d.trees, d.grounded.sources())
        }
    }
}
