//! Projected gradient re-weighting of edges to reduce the H2 norm.
//!
//! The objective is `f(W) = H2^2(W) + h/2 sum_e ||W_e||_F^2`. The gradient of
//! `H2^2` with respect to `W_e`, `e = {i, j}`, is `-1/2 sum_s Q_s Q_s^T` with
//! `Q_s = Y_i^s - Y_j^s` the voltage drop over the edge under identity
//! current injected at source `s`. Each step is
//!
//! ```text
//! W_e <- Proj[L_e, U_e]( W_e - (grad_e H2^2 + h W_e) / (h sqrt(t)) )
//!      = Proj[L_e, U_e]( (1 - 1/sqrt(t)) W_e + 1/(2 h sqrt(t)) sum_s Q_s Q_s^T )
//! ```

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::electrical::solve;
use crate::error::{Error, Result};
use crate::graph::{dirichlet_laplacian, EdgeId, MatrixGraph, NodeId};
use crate::h2::{decompose_sources, dense_h2, SourceTrees};
use crate::matlin::{
    loewner_leq, project_box, Block, SpdMatrix, DEFAULT_PROJECTION_MAX_ITER, DEFAULT_PROJECTION_TOL,
};
use crate::sptree::{oriented_terminals, FlatNode};

pub const DEFAULT_MAX_ITERS: usize = 200;
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeBounds {
    pub lower: SpdMatrix,
    pub upper: SpdMatrix,
}

/// Where the per-source voltage drops come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoltageSource {
    /// Tree sweeps over each source's decomposition.
    Compositional,
    /// Dense solves with the Dirichlet Laplacian.
    Dense,
}

#[derive(Clone, Debug)]
pub struct OptConfig {
    /// Frobenius penalty weight `h > 0`.
    pub penalty: f64,
    /// Loewner box for every edge being optimized; edges without an entry stay fixed.
    pub bounds: BTreeMap<EdgeId, EdgeBounds>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub projection_tol: f64,
    pub projection_max_iter: usize,
    pub voltages: VoltageSource,
    /// Use dense voltages when the graph is not series-parallel from every source.
    pub fallback_to_dense: bool,
}

impl OptConfig {
    pub fn new(penalty: f64) -> Self {
        Self {
            penalty,
            bounds: BTreeMap::new(),
            max_iters: DEFAULT_MAX_ITERS,
            grad_tol: DEFAULT_GRAD_TOL,
            projection_tol: DEFAULT_PROJECTION_TOL,
            projection_max_iter: DEFAULT_PROJECTION_MAX_ITER,
            voltages: VoltageSource::Compositional,
            fallback_to_dense: true,
        }
    }

    /// Gives every edge without a leader endpoint the same bounds, keeping
    /// any bounds already set.
    pub fn with_default_bounds(mut self, g: &MatrixGraph, bounds: &EdgeBounds) -> Self {
        for e in g.edges() {
            if !g.is_attachment(e) {
                self.bounds.entry(e.id.clone()).or_insert_with(|| bounds.clone());
            }
        }
        self
    }

    pub fn validate(&self, g: &MatrixGraph) -> Result<()> {
        if self.penalty.is_nan() || self.penalty <= 0.0 {
            return Err(Error::InvalidArgument(format!("penalty must be positive, got {}", self.penalty)));
        }
        if !(self.grad_tol >= 0.0 && self.projection_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        for (id, b) in &self.bounds {
            if g.edge(id).is_none() {
                return Err(Error::UnknownEdge(id.clone()));
            }
            for m in [&b.lower, &b.upper] {
                if m.dim() != g.k() {
                    return Err(Error::DimensionMismatch {
                        expected: g.k(),
                        got: m.dim(),
                    });
                }
            }
            if !b.lower.is_positive_definite() {
                return Err(Error::InvalidArgument(format!(
                    "lower bound of edge `{id}` is not positive definite"
                )));
            }
            if !loewner_leq(&b.lower, &b.upper, self.projection_tol)? {
                return Err(Error::InfeasibleBounds);
            }
        }
        Ok(())
    }
}

/// Voltage drop `Q_s` over every edge for every source, oriented from the
/// edge's stored tail to its head.
#[derive(Clone, Debug)]
pub struct EdgeVoltages {
    pub per_source: BTreeMap<NodeId, BTreeMap<EdgeId, Block>>,
}

impl EdgeVoltages {
    /// Block differences of `A(W)^-1 (e_s (x) I_k)`.
    pub fn dense(g: &MatrixGraph) -> Result<Self> {
        let a = dirichlet_laplacian(g)?;
        let k = g.k();
        let mut per_source = BTreeMap::new();
        for s in g.sources() {
            let x = a.solve_unit_injection(s)?;
            let block = |n: &str| -> Block {
                match a.block_of(n) {
                    Some(i) => x.view((i * k, 0), (k, k)).into_owned(),
                    None => DMatrix::zeros(k, k),
                }
            };
            let drops = g
                .edges()
                .iter()
                .map(|e| (e.id.clone(), block(&e.tail) - block(&e.head)))
                .collect();
            per_source.insert(s.clone(), drops);
        }
        Ok(Self { per_source })
    }

    /// Leaf voltages of the electrical sweep over each source's tree.
    pub fn compositional(trees: &SourceTrees) -> Result<Self> {
        let g = &trees.grounded;
        let mut per_source = BTreeMap::new();
        for (s, t) in &trees.trees {
            let sol = solve(t)?;
            let orient = oriented_terminals(t, g, s, &trees.sink)?;
            let mut drops = BTreeMap::new();
            for (idx, node) in t.preorder().iter().enumerate() {
                if let FlatNode::Leaf { edge, .. } = node {
                    let e = g.edge(edge).ok_or_else(|| Error::UnknownEdge(edge.to_string()))?;
                    let v = &sol.voltage[idx];
                    let q = if orient[idx].0 == e.tail { v.clone() } else { -v };
                    drops.insert(edge.to_string(), q);
                }
            }
            per_source.insert(s.clone(), drops);
        }
        Ok(Self { per_source })
    }
}

/// Gradient of `H2^2` with respect to one edge weight: `-1/2 sum_s Q_s Q_s^T`.
pub fn gradient_edge(g: &MatrixGraph, edge: &str, voltages: &EdgeVoltages) -> Result<Block> {
    if g.edge(edge).is_none() {
        return Err(Error::UnknownEdge(edge.to_string()));
    }
    let k = g.k();
    let mut grad = DMatrix::zeros(k, k);
    for drops in voltages.per_source.values() {
        let q = drops.get(edge).ok_or_else(|| Error::UnknownEdge(edge.to_string()))?;
        grad -= q * q.transpose() * 0.5;
    }
    Ok((&grad + grad.transpose()) * 0.5)
}

/// `h/2 sum_e ||W_e||_F^2` over all edges.
pub fn penalty_term(g: &MatrixGraph, h: f64) -> f64 {
    0.5 * h * g.edges().iter().map(|e| e.weight.as_matrix().norm_squared()).sum::<f64>()
}

/// Regularized objective with the dense `H2^2`.
pub fn objective(g: &MatrixGraph, h: f64) -> Result<f64> {
    Ok(dense_h2(g)?.total + penalty_term(g, h))
}

/// One projected step for every edge in `weights`, at iteration `t >= 1`.
/// `grads` holds the gradient of `H2^2` (without the penalty).
pub fn pgd_step(
    weights: &BTreeMap<EdgeId, SpdMatrix>,
    grads: &BTreeMap<EdgeId, Block>,
    t: usize,
    cfg: &OptConfig,
) -> Result<BTreeMap<EdgeId, SpdMatrix>> {
    if t == 0 {
        return Err(Error::InvalidArgument("iteration counter starts at 1".into()));
    }
    let rt = (t as f64).sqrt();
    let shrink = 1.0 - 1.0 / rt;
    let step = 1.0 / (cfg.penalty * rt);
    let mut out = BTreeMap::new();
    for (id, w) in weights {
        let g = grads.get(id).ok_or_else(|| Error::UnknownEdge(id.clone()))?;
        let b = cfg.bounds.get(id).ok_or_else(|| Error::UnknownEdge(id.clone()))?;
        let x = w.as_matrix() * shrink - g * step;
        out.insert(id.clone(), project(&x, b, cfg)?);
    }
    Ok(out)
}

fn project(x: &Block, b: &EdgeBounds, cfg: &OptConfig) -> Result<SpdMatrix> {
    let p = project_box(x, &b.lower, &b.upper, cfg.projection_tol, cfg.projection_max_iter)?;
    if !p.converged {
        return Err(Error::ProjectionNotConverged {
            iterations: p.iterations,
            change: p.last_change,
        });
    }
    Ok(p.matrix)
}

#[derive(Clone, Debug)]
pub struct IterateRecord {
    pub iter: usize,
    pub weights: BTreeMap<EdgeId, SpdMatrix>,
    pub objective: f64,
    pub h2_squared: f64,
    pub penalty: f64,
    /// Norm of the projected-gradient residual `W - Proj(W - grad f)` over
    /// all free edges; equals `||grad f||` when no bound is active.
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptTrajectory {
    pub records: Vec<IterateRecord>,
    pub voltages: VoltageSource,
}

impl OptTrajectory {
    pub fn initial(&self) -> &IterateRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &IterateRecord {
        self.records.last().expect("non-empty trajectory")
    }

    /// Steps taken, excluding the initial evaluation.
    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }

    pub fn running_minimum(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |m, r| {
                *m = m.min(r.objective);
                Some(*m)
            })
            .collect()
    }
}

struct Evaluator {
    mode: VoltageSource,
    trees: Option<SourceTrees>,
}

impl Evaluator {
    fn new(g: &MatrixGraph, cfg: &OptConfig) -> Result<Self> {
        match cfg.voltages {
            VoltageSource::Dense => Ok(Self {
                mode: VoltageSource::Dense,
                trees: None,
            }),
            VoltageSource::Compositional => match decompose_sources(g) {
                Ok(t) => Ok(Self {
                    mode: VoltageSource::Compositional,
                    trees: Some(t),
                }),
                Err(e @ Error::NotSeriesParallel { .. }) if cfg.fallback_to_dense => {
                    log::warn!("{e}; falling back to dense voltages");
                    Ok(Self {
                        mode: VoltageSource::Dense,
                        trees: None,
                    })
                }
                Err(e) => Err(e),
            },
        }
    }

    /// `H2^2` and the edge voltages at the weights of `g`.
    fn evaluate(&self, g: &MatrixGraph, weights: &BTreeMap<EdgeId, SpdMatrix>) -> Result<(f64, EdgeVoltages)> {
        match &self.trees {
            Some(trees) => {
                let trees = trees.reweighted(weights)?;
                let mut h2 = 0.0;
                for t in trees.trees.values() {
                    h2 += 0.5 * crate::electrical::effective_resistance(t)?[0].trace();
                }
                Ok((h2, EdgeVoltages::compositional(&trees)?))
            }
            None => Ok((dense_h2(g)?.total, EdgeVoltages::dense(g)?)),
        }
    }
}

/// Runs projected gradient descent until the projected-gradient residual
/// drops below `grad_tol` or `max_iters` steps have been taken. The initial
/// weights are first projected onto their bounds.
pub fn optimize(g: &MatrixGraph, cfg: &OptConfig) -> Result<OptTrajectory> {
    cfg.validate(g)?;
    let eval = Evaluator::new(g, cfg)?;
    let mut weights = BTreeMap::new();
    for (id, b) in &cfg.bounds {
        let w = &g.edge(id).expect("validated").weight;
        weights.insert(id.clone(), project(w.as_matrix(), b, cfg)?);
    }
    let mut records = Vec::new();
    let mut t = 0usize;
    loop {
        let current = g.with_weights(&weights)?;
        let (h2, voltages) = eval.evaluate(&current, &weights)?;
        let mut grads = BTreeMap::new();
        let mut residual_sq = 0.0;
        for (id, w) in &weights {
            let grad = gradient_edge(&current, id, &voltages)?;
            let full = &grad + w.as_matrix() * cfg.penalty;
            let moved = project(&(w.as_matrix() - &full), &cfg.bounds[id], cfg)?;
            residual_sq += (w.as_matrix() - moved.as_matrix()).norm_squared();
            grads.insert(id.clone(), grad);
        }
        let penalty = penalty_term(&current, cfg.penalty);
        let grad_norm = residual_sq.sqrt();
        records.push(IterateRecord {
            iter: t,
            weights: weights.clone(),
            objective: h2 + penalty,
            h2_squared: h2,
            penalty,
            grad_norm,
        });
        if grad_norm < cfg.grad_tol || t >= cfg.max_iters {
            break;
        }
        t += 1;
        weights = pgd_step(&weights, &grads, t, cfg)?;
    }
    Ok(OptTrajectory {
        records,
        voltages: eval.mode,
    })
}
