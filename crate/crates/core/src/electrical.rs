//! Matrix-valued resistor networks evaluated over a decomposition tree.
//!
//! Three sweeps share one pre-order indexing of the tree: effective
//! resistances bottom-up, branch currents top-down, voltage drops bottom-up.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::EdgeId;
use crate::matlin::{parallel_add, Block, SpdMatrix};
use crate::sptree::{FlatNode, JoinKind, SpTree};

/// Relative disagreement between parallel-branch voltages that is treated
/// as an upstream inconsistency.
pub const PARALLEL_VOLTAGE_TOL: f64 = 1e-6;

/// Per-node annotations of one electrical solve, indexed in pre-order.
#[derive(Clone, Debug)]
pub struct ElectricalSolution {
    pub resistance: Vec<SpdMatrix>,
    pub current: Vec<Block>,
    pub voltage: Vec<Block>,
}

impl ElectricalSolution {
    pub fn root_resistance(&self) -> &SpdMatrix {
        &self.resistance[0]
    }

    /// Voltage drop over every leaf edge, oriented as the tree traverses it
    /// (source-side terminal minus sink-side terminal).
    pub fn leaf_voltages<'a>(&self, t: &'a SpTree) -> BTreeMap<&'a str, Block> {
        t.preorder()
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                FlatNode::Leaf { edge, .. } => Some((*edge, self.voltage[i].clone())),
                FlatNode::Join { .. } => None,
            })
            .collect()
    }

    /// Leaf currents keyed by edge id.
    pub fn leaf_currents(&self, t: &SpTree) -> BTreeMap<EdgeId, Block> {
        t.preorder()
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                FlatNode::Leaf { edge, .. } => Some((edge.to_string(), self.current[i].clone())),
                FlatNode::Join { .. } => None,
            })
            .collect()
    }
}

/// Effective resistance of every subtree: `W^-1` at leaves, sums over series
/// joins, parallel sums over parallel joins.
pub fn effective_resistance(t: &SpTree) -> Result<Vec<SpdMatrix>> {
    let flat = t.preorder();
    let mut out: Vec<Option<SpdMatrix>> = vec![None; flat.len()];
    for idx in (0..flat.len()).rev() {
        let r = match flat[idx] {
            FlatNode::Leaf { weight, .. } => weight.inverse()?,
            FlatNode::Join { kind, left, right } => {
                let (a, b) = (out[left].as_ref().expect("child"), out[right].as_ref().expect("child"));
                match kind {
                    JoinKind::Series => a + b,
                    JoinKind::Parallel => parallel_add(a, b)?,
                }
            }
        };
        out[idx] = Some(r);
    }
    Ok(out.into_iter().map(|r| r.expect("filled")).collect())
}

/// Power-minimizing split of `current` over two resistances in parallel:
/// `I1 = R1^-1 (R1:R2) I`, `I2 = R2^-1 (R1:R2) I`.
pub fn split_current(r1: &SpdMatrix, r2: &SpdMatrix, current: &Block) -> Result<(Block, Block)> {
    if r1.dim() != r2.dim() {
        return Err(Error::DimensionMismatch {
            expected: r1.dim(),
            got: r2.dim(),
        });
    }
    if current.nrows() != r1.dim() {
        return Err(Error::DimensionMismatch {
            expected: r1.dim(),
            got: current.nrows(),
        });
    }
    let joint = parallel_add(r1, r2)?;
    let v = joint.as_matrix() * current;
    let i1 = r1.inverse()?.as_matrix() * &v;
    let i2 = r2.inverse()?.as_matrix() * &v;
    Ok((i1, i2))
}

/// Currents through every subtree when `intensity` enters at the source
/// terminal of the root: series joins pass it through, parallel joins split it.
pub fn branch_currents(t: &SpTree, resistances: &[SpdMatrix], intensity: &Block) -> Result<Vec<Block>> {
    let flat = t.preorder();
    if resistances.len() != flat.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} resistance annotations, got {}",
            flat.len(),
            resistances.len()
        )));
    }
    if intensity.nrows() != t.dim() || intensity.ncols() != t.dim() {
        return Err(Error::DimensionMismatch {
            expected: t.dim(),
            got: intensity.nrows(),
        });
    }
    let mut out: Vec<Block> = vec![DMatrix::zeros(0, 0); flat.len()];
    out[0] = intensity.clone();
    for idx in 0..flat.len() {
        if let FlatNode::Join { kind, left, right } = flat[idx] {
            match kind {
                JoinKind::Series => {
                    out[left] = out[idx].clone();
                    out[right] = out[idx].clone();
                }
                JoinKind::Parallel => {
                    let (i1, i2) = split_current(&resistances[left], &resistances[right], &out[idx])?;
                    out[left] = i1;
                    out[right] = i2;
                }
            }
        }
    }
    Ok(out)
}

/// Voltage drop across every subtree: `W^-1 I` at leaves, sums over series
/// joins, and the common branch voltage (averaged) over parallel joins.
pub fn voltage_drops(t: &SpTree, resistances: &[SpdMatrix], currents: &[Block]) -> Result<Vec<Block>> {
    let flat = t.preorder();
    if resistances.len() != flat.len() || currents.len() != flat.len() {
        return Err(Error::InvalidArgument("annotation length does not match the tree".into()));
    }
    let mut out: Vec<Block> = vec![DMatrix::zeros(0, 0); flat.len()];
    for idx in (0..flat.len()).rev() {
        out[idx] = match flat[idx] {
            FlatNode::Leaf { .. } => resistances[idx].as_matrix() * &currents[idx],
            FlatNode::Join { kind: JoinKind::Series, left, right } => &out[left] + &out[right],
            FlatNode::Join { kind: JoinKind::Parallel, left, right } => {
                let (v1, v2) = (&out[left], &out[right]);
                let scale = v1.norm().max(v2.norm());
                let gap = (v1 - v2).norm();
                if gap > PARALLEL_VOLTAGE_TOL * scale {
                    return Err(Error::Inconsistent(format!(
                        "parallel branches at node {idx} disagree on voltage (relative gap {:e})",
                        gap / scale
                    )));
                }
                (v1 + v2) * 0.5
            }
        };
    }
    Ok(out)
}

/// Dissipated power `Tr(I^T R I)`.
pub fn power(current: &Block, r: &SpdMatrix) -> Result<f64> {
    if current.nrows() != r.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.dim(),
            got: current.nrows(),
        });
    }
    Ok((current.transpose() * r.as_matrix() * current).trace())
}

/// All three sweeps with identity intensity at the root.
pub fn solve(t: &SpTree) -> Result<ElectricalSolution> {
    solve_with_intensity(t, &DMatrix::identity(t.dim(), t.dim()))
}

pub fn solve_with_intensity(t: &SpTree, intensity: &Block) -> Result<ElectricalSolution> {
    let resistance = effective_resistance(t)?;
    let current = branch_currents(t, &resistance, intensity)?;
    let voltage = voltage_drops(t, &resistance, &current)?;
    Ok(ElectricalSolution {
        resistance,
        current,
        voltage,
    })
}
