//! Seeded random instances: SPD blocks, decomposition trees, and leader-follower
//! graphs that are series-parallel from every source to the grounded leaders.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Edge, MatrixGraph, NodeId};
use crate::matlin::{Block, SpdMatrix};
use crate::optimize::{EdgeBounds, OptConfig};
use crate::sptree::{realize_between, JoinKind, SpTree};

/// Random SPD matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, k: usize, lo: f64, hi: f64) -> SpdMatrix {
    let g = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    let eig: Vec<f64> = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eig));
    SpdMatrix::symmetrize(&q * d * q.transpose())
}

/// Random symmetric matrix with entries in `[-1, 1]`.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Block {
    let m = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

/// Random full binary tree shape; join kinds are assigned while building.
enum Shape {
    Leaf,
    Join(Box<Shape>, Box<Shape>),
}

fn random_shape<R: Rng + ?Sized>(rng: &mut R, leaves: usize) -> Shape {
    if leaves == 1 {
        return Shape::Leaf;
    }
    let left = rng.gen_range(1..leaves);
    Shape::Join(Box::new(random_shape(rng, left)), Box::new(random_shape(rng, leaves - left)))
}

fn build<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &Shape,
    kinds: &mut impl Iterator<Item = JoinKind>,
    k: usize,
    prefix: &str,
    counter: &mut usize,
) -> SpTree {
    match shape {
        Shape::Leaf => {
            let id = format!("{prefix}{}", *counter);
            *counter += 1;
            SpTree::leaf(id, random_spd(rng, k, 0.3, 3.0))
        }
        Shape::Join(l, r) => {
            let kind = kinds.next().expect("one kind per join");
            let l = build(rng, l, kinds, k, prefix, counter);
            let r = build(rng, r, kinds, k, prefix, counter);
            match kind {
                JoinKind::Series => SpTree::Series(Box::new(l), Box::new(r)),
                JoinKind::Parallel => SpTree::Parallel(Box::new(l), Box::new(r)),
            }
        }
    }
}

/// Random tree with `leaves` leaves, uniformly random join kinds, and leaf
/// ids `{prefix}0, {prefix}1, ...`.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, leaves: usize, k: usize, prefix: &str) -> SpTree {
    let shape = random_shape(rng, leaves);
    let kinds: Vec<JoinKind> = (0..leaves.saturating_sub(1))
        .map(|_| if rng.gen_bool(0.5) { JoinKind::Series } else { JoinKind::Parallel })
        .collect();
    let mut counter = 0;
    build(rng, &shape, &mut kinds.into_iter(), k, prefix, &mut counter)
}

/// Random tree with exactly `series` series joins and `parallel` parallel joins.
pub fn random_tree_with_joins<R: Rng + ?Sized>(
    rng: &mut R,
    series: usize,
    parallel: usize,
    k: usize,
    prefix: &str,
    counter: &mut usize,
) -> SpTree {
    let shape = random_shape(rng, series + parallel + 1);
    let mut kinds: Vec<JoinKind> = std::iter::repeat_n(JoinKind::Series, series)
        .chain(std::iter::repeat_n(JoinKind::Parallel, parallel))
        .collect();
    for i in (1..kinds.len()).rev() {
        let j = rng.gen_range(0..=i);
        kinds.swap(i, j);
    }
    build(rng, &shape, &mut kinds.into_iter(), k, prefix, counter)
}

#[derive(Clone, Debug)]
pub struct AittspParams {
    pub k: usize,
    /// Number of leaders (each with its own source).
    pub sources: usize,
    /// Upper bound on the follower count.
    pub max_followers: usize,
}

/// Random leader-follower graph that is series-parallel from every source
/// to the identified leader node.
///
/// Sources `s1..sm` form a chain; consecutive sources are joined by a random
/// series-parallel block, and each source hangs off its own leader `r_i`
/// through an identity edge `a_i`. Follower nodes other than sources are
/// named `f0, f1, ...`; block edges `e0, e1, ...`.
pub fn random_aittsp<R: Rng + ?Sized>(rng: &mut R, p: &AittspParams) -> MatrixGraph {
    let m = p.sources.max(1);
    let k = p.k;
    let mut nodes: Vec<NodeId> = Vec::new();
    let mut edges = Vec::new();
    let leaders: Vec<NodeId> = (1..=m).map(|i| format!("r{i}")).collect();
    let sources: Vec<NodeId> = (1..=m).map(|i| format!("s{i}")).collect();
    nodes.extend(leaders.iter().cloned());
    nodes.extend(sources.iter().cloned());
    for i in 0..m {
        edges.push(Edge::new(format!("a{}", i + 1), leaders[i].clone(), sources[i].clone(), SpdMatrix::identity(k)));
    }

    let budget = p.max_followers.saturating_sub(m);
    let inner = if m > 1 && budget > 0 { rng.gen_range(0..=budget) } else { 0 };
    let blocks = m.saturating_sub(1);
    let mut per_block = vec![0usize; blocks];
    for _ in 0..inner {
        per_block[rng.gen_range(0..blocks)] += 1;
    }

    let mut node_counter = 0usize;
    let mut edge_counter = 0usize;
    for (b, &series) in per_block.iter().enumerate() {
        let parallel = rng.gen_range(0..=series + 2);
        let tree = random_tree_with_joins(rng, series, parallel, k, "e", &mut edge_counter);
        let mut fresh = || {
            let id = format!("f{node_counter}");
            node_counter += 1;
            id
        };
        let mut block_edges = Vec::new();
        realize_between(&tree, &sources[b], &sources[b + 1], &mut fresh, &mut block_edges);
        edges.extend(block_edges);
    }
    nodes.extend((0..node_counter).map(|i| format!("f{i}")));
    MatrixGraph::new(k, nodes, edges, leaders, Some(sources)).expect("generated graph is valid")
}

/// Seed of the bundled demo instance.
pub const DEMO_SEED: u64 = 20_190_605;

/// Demo instance: `k = 2`, three leaders grounded to one node, penalty
/// `h = 0.05`, and per-edge bounds `L_e <= W_e <= U_e` drawn at random
/// around the random initial weights. Leader-attachment edges stay fixed.
pub fn demo_instance() -> (MatrixGraph, OptConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(DEMO_SEED);
    let g = random_aittsp(&mut rng, &AittspParams { k: 2, sources: 3, max_followers: 12 });
    let mut cfg = OptConfig::new(0.05);
    cfg.max_iters = 100;
    for e in g.edges().iter().filter(|e| !g.is_attachment(e)) {
        let lower = random_spd(&mut rng, 2, 0.05, 0.25);
        let upper = random_spd(&mut rng, 2, 3.5, 6.0);
        cfg.bounds.insert(e.id.clone(), EdgeBounds { lower, upper });
    }
    (g, cfg)
}
