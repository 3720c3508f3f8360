//! Compositional H2 analysis of matrix-weighted leader-follower consensus
//! networks on series-parallel graphs.
//!
//! The H2 norm of the grounded consensus dynamics equals half the summed
//! traces of the matrix-valued effective resistances from each source node
//! to the leader set. On graphs that are two-terminal series-parallel from
//! every source to the (identified) leaders, those resistances, the branch
//! currents and the voltage drops can all be computed by sweeping the
//! decomposition tree, and the voltage drops give the gradient of the norm
//! with respect to every edge weight. A dense Dirichlet-Laplacian solver is
//! kept alongside as an oracle.
//!
//! | module | contents |
//! |--------|----------|
//! | [`matlin`] | parallel sum, pseudoinverse, Loewner predicates, box projection |
//! | [`graph`] | multigraphs, node identification, Dirichlet Laplacian |
//! | [`sptree`] | decomposition trees, realization, recognition |
//! | [`electrical`] | effective resistances, branch currents, voltage drops |
//! | [`h2`] | compositional, scalar-bound and dense H2 evaluation |
//! | [`optimize`] | edge gradients and projected gradient re-weighting |
//! | [`cli`] | file formats and the `sph2` command line |

pub mod cli;
pub mod electrical;
pub mod error;
pub mod generate;
pub mod graph;
pub mod h2;
pub mod matlin;
pub mod optimize;
pub mod sptree;

pub use error::{Error, Result};
pub use graph::{Edge, EdgeId, MatrixGraph, NodeId};
pub use matlin::{Block, SpdMatrix};
pub use sptree::SpTree;
