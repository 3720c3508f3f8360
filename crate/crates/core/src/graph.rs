//! Matrix-weighted multigraphs with a leader set, node identification and the
//! Dirichlet (grounded) Laplacian.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::matlin::SpdMatrix;

pub type NodeId = String;
pub type EdgeId = String;

/// Default label of the node obtained by identifying all leaders.
pub const GROUND: &str = "ground";

/// Tolerance for the identity weight on leader-attachment edges.
pub const ATTACHMENT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
    pub weight: SpdMatrix,
}

impl Edge {
    pub fn new(id: impl Into<String>, tail: impl Into<String>, head: impl Into<String>, weight: SpdMatrix) -> Self {
        Self {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
            weight,
        }
    }

    pub fn touches(&self, node: &str) -> bool {
        self.tail == node || self.head == node
    }

    /// The endpoint opposite to `node`.
    pub fn other(&self, node: &str) -> Option<&str> {
        if self.tail == node {
            Some(&self.head)
        } else if self.head == node {
            Some(&self.tail)
        } else {
            None
        }
    }
}

/// Undirected multigraph with SPD edge weights of a common dimension `k`.
///
/// Edges keep their stored `(tail, head)` orientation, which only fixes the
/// sign convention of incidence columns and voltage drops.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixGraph {
    k: usize,
    nodes: Vec<NodeId>,
    edges: Vec<Edge>,
    leaders: BTreeSet<NodeId>,
    sources: Vec<NodeId>,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
}

impl MatrixGraph {
    /// Builds a graph, checking ids, endpoints and weights.
    ///
    /// When `sources` is `None` they are inferred as the follower endpoints
    /// of edges incident to leaders.
    pub fn new(
        k: usize,
        nodes: Vec<NodeId>,
        edges: Vec<Edge>,
        leaders: impl IntoIterator<Item = NodeId>,
        sources: Option<Vec<NodeId>>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidGraph("state dimension k must be positive".into()));
        }
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node id `{n}`")));
            }
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate edge id `{}`", e.id)));
            }
            for end in [&e.tail, &e.head] {
                if !node_index.contains_key(end) {
                    return Err(Error::UnknownNode(end.clone()));
                }
            }
            if e.tail == e.head {
                return Err(Error::InvalidGraph(format!("edge `{}` is a self-loop", e.id)));
            }
            if e.weight.dim() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: e.weight.dim(),
                });
            }
            if !e.weight.is_positive_definite() {
                return Err(Error::InvalidGraph(format!(
                    "weight of edge `{}` is not positive definite",
                    e.id
                )));
            }
        }
        let leaders: BTreeSet<NodeId> = leaders.into_iter().collect();
        for l in &leaders {
            if !node_index.contains_key(l) {
                return Err(Error::UnknownNode(l.clone()));
            }
        }
        let sources = match sources {
            Some(mut s) => {
                s.sort();
                s.dedup();
                for n in &s {
                    if !node_index.contains_key(n) {
                        return Err(Error::UnknownNode(n.clone()));
                    }
                    if leaders.contains(n) {
                        return Err(Error::InvalidGraph(format!("source `{n}` is also a leader")));
                    }
                }
                s
            }
            None => {
                let inferred: BTreeSet<NodeId> = edges
                    .iter()
                    .filter_map(|e| match (leaders.contains(&e.tail), leaders.contains(&e.head)) {
                        (true, false) => Some(e.head.clone()),
                        (false, true) => Some(e.tail.clone()),
                        _ => None,
                    })
                    .collect();
                inferred.into_iter().collect()
            }
        };
        Ok(Self {
            k,
            nodes,
            edges,
            leaders,
            sources,
            node_index,
            edge_index,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn leaders(&self) -> &BTreeSet<NodeId> {
        &self.leaders
    }

    pub fn sources(&self) -> &[NodeId] {
        &self.sources
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.node_index.contains_key(id)
    }

    pub fn node_position(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edge_index.get(id).map(|&i| &self.edges[i])
    }

    pub fn is_leader(&self, id: &str) -> bool {
        self.leaders.contains(id)
    }

    /// Followers in lexicographic order.
    pub fn followers(&self) -> Vec<NodeId> {
        let mut f: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| !self.leaders.contains(*n))
            .cloned()
            .collect();
        f.sort();
        f
    }

    /// True when the edge has a leader endpoint.
    pub fn is_attachment(&self, edge: &Edge) -> bool {
        self.leaders.contains(&edge.tail) || self.leaders.contains(&edge.head)
    }

    /// Copy of the graph with some edge weights replaced.
    pub fn with_weights(&self, weights: &BTreeMap<EdgeId, SpdMatrix>) -> Result<Self> {
        let mut g = self.clone();
        for (id, w) in weights {
            let idx = *self.edge_index.get(id).ok_or_else(|| Error::UnknownEdge(id.clone()))?;
            if w.dim() != self.k {
                return Err(Error::DimensionMismatch {
                    expected: self.k,
                    got: w.dim(),
                });
            }
            g.edges[idx].weight = w.clone();
        }
        Ok(g)
    }

    /// Same graph with an explicit source list.
    pub fn with_sources(&self, sources: Vec<NodeId>) -> Result<Self> {
        Self::new(
            self.k,
            self.nodes.clone(),
            self.edges.clone(),
            self.leaders.iter().cloned(),
            Some(sources),
        )
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let (a, b) = (self.node_index[&e.tail], self.node_index[&e.head]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.nodes.len()
    }

    /// Checks the leader-follower setup: every leader has exactly one
    /// incident edge, with identity weight, to a distinct follower; leaders
    /// never connect to each other; the graph is connected.
    pub fn validate_leader_structure(&self) -> Result<()> {
        if self.leaders.is_empty() {
            return Err(Error::InvalidGraph("leader set is empty".into()));
        }
        let identity = DMatrix::<f64>::identity(self.k, self.k);
        let mut attached: BTreeMap<&str, &str> = BTreeMap::new();
        for leader in &self.leaders {
            let incident: Vec<&Edge> = self.edges.iter().filter(|e| e.touches(leader)).collect();
            if incident.len() != 1 {
                return Err(Error::InvalidGraph(format!(
                    "leader `{leader}` must have exactly one attachment edge, found {}",
                    incident.len()
                )));
            }
            let e = incident[0];
            let other = e.other(leader).expect("incident edge");
            if self.leaders.contains(other) {
                return Err(Error::InvalidGraph(format!(
                    "edge `{}` joins two leaders",
                    e.id
                )));
            }
            if (e.weight.as_matrix() - &identity).amax() > ATTACHMENT_TOL {
                return Err(Error::InvalidGraph(format!(
                    "attachment edge `{}` of leader `{leader}` must have identity weight",
                    e.id
                )));
            }
            if let Some(prev) = attached.insert(other, leader) {
                return Err(Error::InvalidGraph(format!(
                    "leaders `{prev}` and `{leader}` attach to the same node `{other}`"
                )));
            }
        }
        if self.sources.is_empty() {
            return Err(Error::InvalidGraph("source set is empty".into()));
        }
        if !self.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(())
    }
}

/// Incidence matrix `E` (`|N| x |E|`): `+1` at the stored tail, `-1` at the head.
pub fn incidence(g: &MatrixGraph) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(g.nodes.len(), g.edges.len());
    for (col, edge) in g.edges.iter().enumerate() {
        e[(g.node_index[&edge.tail], col)] = 1.0;
        e[(g.node_index[&edge.head], col)] = -1.0;
    }
    e
}

/// Kronecker blow-up `E (x) I_k`.
pub fn incidence_blown_up(g: &MatrixGraph) -> DMatrix<f64> {
    incidence(g).kronecker(&DMatrix::identity(g.k, g.k))
}

/// Follower block of the graph Laplacian, grounded at the leader set.
#[derive(Clone, Debug)]
pub struct DirichletLaplacian {
    k: usize,
    followers: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    matrix: DMatrix<f64>,
}

impl DirichletLaplacian {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Follower ids in block order (lexicographic).
    pub fn followers(&self) -> &[NodeId] {
        &self.followers
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Block index of a follower.
    pub fn block_of(&self, node: &str) -> Option<usize> {
        self.index.get(node).copied()
    }

    /// Dense inverse through a Cholesky factorization.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let ch = Cholesky::new(self.matrix.clone()).ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: self.matrix.clone().symmetric_eigenvalues().min(),
        })?;
        let inv = ch.inverse();
        Ok((&inv + inv.transpose()) * 0.5)
    }

    /// Solves `A X = e_s (x) I_k` for the source block `s`.
    pub fn solve_unit_injection(&self, source: &str) -> Result<DMatrix<f64>> {
        let s = self
            .block_of(source)
            .ok_or_else(|| Error::InvalidArgument(format!("`{source}` is not a follower")))?;
        let ch = Cholesky::new(self.matrix.clone()).ok_or_else(|| Error::NotPositiveDefinite {
            min_eigenvalue: self.matrix.clone().symmetric_eigenvalues().min(),
        })?;
        let n = self.matrix.nrows();
        let mut rhs = DMatrix::zeros(n, self.k);
        for j in 0..self.k {
            rhs[(s * self.k + j, j)] = 1.0;
        }
        Ok(ch.solve(&rhs))
    }
}

fn check_groundable(g: &MatrixGraph) -> Result<()> {
    if g.leaders.is_empty() {
        return Err(Error::InvalidGraph("leader set is empty".into()));
    }
    for leader in &g.leaders {
        if !g.edges.iter().any(|e| e.touches(leader)) {
            return Err(Error::InvalidGraph(format!(
                "leader `{leader}` has no attachment edge"
            )));
        }
    }
    if let Some(e) = g
        .edges
        .iter()
        .find(|e| g.leaders.contains(&e.tail) && g.leaders.contains(&e.head))
    {
        return Err(Error::InvalidGraph(format!("edge `{}` joins two leaders", e.id)));
    }
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(())
}

/// Assembles `A(W)` edge by edge: `A_ij W_ij A_ij^T` for follower-follower
/// edges and `e_i W e_i^T` for edges into the leader set.
pub fn dirichlet_laplacian(g: &MatrixGraph) -> Result<DirichletLaplacian> {
    check_groundable(g)?;
    let followers = g.followers();
    let index: HashMap<NodeId, usize> = followers
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i))
        .collect();
    let k = g.k;
    let mut a = DMatrix::zeros(k * followers.len(), k * followers.len());
    for e in &g.edges {
        let w = e.weight.as_matrix();
        let ti = index.get(&e.tail).copied();
        let hi = index.get(&e.head).copied();
        if let Some(t) = ti {
            let mut blk = a.view_mut((t * k, t * k), (k, k));
            blk += w;
        }
        if let Some(h) = hi {
            let mut blk = a.view_mut((h * k, h * k), (k, k));
            blk += w;
        }
        if let (Some(t), Some(h)) = (ti, hi) {
            let mut blk = a.view_mut((t * k, h * k), (k, k));
            blk -= w;
            let mut blk = a.view_mut((h * k, t * k), (k, k));
            blk -= w;
        }
    }
    let matrix = (&a + a.transpose()) * 0.5;
    if Cholesky::new(matrix.clone()).is_none() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: matrix.clone().symmetric_eigenvalues().min(),
        });
    }
    Ok(DirichletLaplacian {
        k,
        followers,
        index,
        matrix,
    })
}

/// The same matrix assembled as `E_F W E_F^T`, where `E_F` is the blown-up
/// incidence matrix with leader rows removed and `W = blkdiag(W_e)`.
pub fn dirichlet_laplacian_via_incidence(g: &MatrixGraph) -> Result<DMatrix<f64>> {
    check_groundable(g)?;
    let k = g.k;
    let followers = g.followers();
    let e = incidence(g);
    let mut ef = DMatrix::zeros(followers.len(), g.edges.len());
    for (r, f) in followers.iter().enumerate() {
        ef.set_row(r, &e.row(g.node_index[f]));
    }
    let efk = ef.kronecker(&DMatrix::identity(k, k));
    let mut w = DMatrix::zeros(k * g.edges.len(), k * g.edges.len());
    for (i, edge) in g.edges.iter().enumerate() {
        w.view_mut((i * k, i * k), (k, k)).copy_from(edge.weight.as_matrix());
    }
    Ok(&efk * w * efk.transpose())
}

/// Identifies `group` into its lexicographically smallest member.
pub fn identify_nodes(g: &MatrixGraph, group: &BTreeSet<NodeId>) -> Result<MatrixGraph> {
    let rep = group
        .iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("cannot identify an empty node group".into()))?
        .clone();
    identify_nodes_as(g, group, &rep)
}

/// Quotient graph in which all members of `group` become the single node
/// `label`. Edges keep their ids; edges inside the group are dropped.
pub fn identify_nodes_as(g: &MatrixGraph, group: &BTreeSet<NodeId>, label: &str) -> Result<MatrixGraph> {
    if group.is_empty() {
        return Err(Error::InvalidArgument("cannot identify an empty node group".into()));
    }
    for n in group {
        if !g.has_node(n) {
            return Err(Error::UnknownNode(n.clone()));
        }
    }
    if g.has_node(label) && !group.contains(label) {
        return Err(Error::InvalidArgument(format!(
            "label `{label}` collides with an existing node"
        )));
    }
    let map = |n: &NodeId| -> NodeId {
        if group.contains(n) {
            label.to_string()
        } else {
            n.clone()
        }
    };
    let mut nodes = Vec::with_capacity(g.nodes.len());
    let mut placed = false;
    for n in &g.nodes {
        if group.contains(n) {
            if !placed {
                nodes.push(label.to_string());
                placed = true;
            }
        } else {
            nodes.push(n.clone());
        }
    }
    let edges = g
        .edges
        .iter()
        .filter(|e| !(group.contains(&e.tail) && group.contains(&e.head)))
        .map(|e| Edge {
            id: e.id.clone(),
            tail: map(&e.tail),
            head: map(&e.head),
            weight: e.weight.clone(),
        })
        .collect();
    let leaders: BTreeSet<NodeId> = g.leaders.iter().map(map).collect();
    let sources = g.sources.iter().map(map).filter(|s| !leaders.contains(s)).collect();
    MatrixGraph::new(g.k, nodes, edges, leaders, Some(sources))
}

/// Identifies all leaders into a single sink node and returns its id.
///
/// The sink is labelled [`GROUND`] unless that id is taken by a follower, in
/// which case underscores are prepended until it is free.
pub fn ground_leaders(g: &MatrixGraph) -> Result<(MatrixGraph, NodeId)> {
    if g.leaders.is_empty() {
        return Err(Error::InvalidGraph("leader set is empty".into()));
    }
    let mut label = GROUND.to_string();
    while g.has_node(&label) && !g.leaders.contains(&label) {
        label.insert(0, '_');
    }
    let grounded = identify_nodes_as(g, &g.leaders, &label)?;
    Ok((grounded, label))
}
