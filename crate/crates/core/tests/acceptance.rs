//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any failure.
//!
//! Every check compares against an independent computation: dense solves with
//! the Dirichlet Laplacian, finite differences, closed-form scalar formulas or
//! brute-force enumeration.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sph2::cli::{ConfigFile, GraphFile};
use sph2::electrical::{power, solve};
use sph2::generate::{random_aittsp, random_spd, random_symmetric, random_tree, AittspParams};
use sph2::graph::{dirichlet_laplacian, MatrixGraph};
use sph2::h2::{
    decompose_sources, dense_h2, dense_voltages, h2_exact_single_source, h2_parallel_compose, h2_scalar_bound,
    h2_series_compose, lyapunov_residual,
};
use sph2::matlin::{loewner_leq, parallel_add, SpdMatrix};
use sph2::optimize::{gradient_edge, optimize, EdgeVoltages};
use sph2::sptree::{check_height_bounds, oriented_terminals, realize, recognize, FlatNode, JoinKind, SpTree};
use sph2::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load_graph(name: &str) -> MatrixGraph {
    let text = std::fs::read_to_string(fixture(name)).expect("fixture");
    serde_json::from_str::<GraphFile>(&text).expect("graph json").to_graph().expect("valid graph")
}

/// Random instance parameters: `k` in 1..=3, up to 4 sources, up to 100 followers.
fn random_params(rng: &mut ChaCha8Rng, max_followers: usize) -> AittspParams {
    AittspParams {
        k: rng.gen_range(1..=3),
        sources: rng.gen_range(1..=4),
        max_followers: rng.gen_range(4..=max_followers),
    }
}

fn instances(seed: u64, count: usize, max_followers: usize) -> Vec<MatrixGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = random_params(&mut rng, max_followers);
            random_aittsp(&mut rng, &p)
        })
        .collect()
}

/// All decomposition trees of the instances plus standalone random trees.
fn generated_trees(seed: u64) -> Vec<SpTree> {
    let mut trees: Vec<SpTree> = instances(seed, 60, 60)
        .iter()
        .flat_map(|g| decompose_sources(g).expect("series-parallel").trees.into_values())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    for _ in 0..200 {
        let leaves = rng.gen_range(1..=40);
        let k = rng.gen_range(1..=4);
        trees.push(random_tree(&mut rng, leaves, k, "e"));
    }
    trees
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let graphs = instances(1, 200, 100);
    let mut worst = 0.0f64;
    let mut max_followers = 0;
    for g in &graphs {
        let trees = decompose_sources(g).map_err(|e| e.to_string())?;
        let compositional: f64 = trees
            .trees
            .values()
            .map(|t| h2_exact_single_source(t).expect("exact value"))
            .sum();
        // 1/2 Tr(B^T A^-1 B) straight from the inverse
        let a = dirichlet_laplacian(g).map_err(|e| e.to_string())?;
        let inv = a.inverse().map_err(|e| e.to_string())?;
        let k = g.k();
        let dense: f64 = g
            .sources()
            .iter()
            .map(|s| {
                let b = a.block_of(s).expect("follower source");
                0.5 * inv.view((b * k, b * k), (k, k)).trace()
            })
            .sum();
        worst = worst.max(rel(compositional, dense));
        max_followers = max_followers.max(g.followers().len());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max relative error {worst:.3e} > 1e-9"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "200 instances (up to {max_followers} followers), max rel err {worst:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn series_exactness() -> Outcome {
    let trees = generated_trees(2);
    let mut joins = 0;
    let mut worst = 0.0f64;
    for t in &trees {
        let sol = solve(t).map_err(|e| e.to_string())?;
        let half = |i: usize| 0.5 * sol.resistance[i].trace();
        for (i, n) in t.preorder().iter().enumerate() {
            if let FlatNode::Join { kind: JoinKind::Series, left, right } = n {
                let composed = h2_series_compose(half(*left), half(*right)).map_err(|e| e.to_string())?;
                worst = worst.max(rel(composed, half(i)));
                joins += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max relative error {worst:.3e} > 1e-12"))?;
    Ok(format!("{joins} series joins over {} trees, max rel err {worst:.2e}", trees.len()))
}

fn parallel_bound() -> Outcome {
    let trees = generated_trees(3);
    let mut worst_gap = f64::INFINITY;
    for t in &trees {
        let exact = h2_exact_single_source(t).map_err(|e| e.to_string())?;
        let bound = h2_scalar_bound(t).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.min(bound - exact);
        ensure(bound >= exact - 1e-9, || format!("bound {bound} below exact {exact}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_eq = 0.0f64;
    for k in 1..=4 {
        for c in [0.5, 1.0, 2.0] {
            let w1 = random_spd(&mut rng, k, 0.2, 5.0);
            let w2 = w1.scale(1.0 / c);
            let t = SpTree::parallel(SpTree::leaf("a", w1.clone()), SpTree::leaf("b", w2)).unwrap();
            let exact = h2_exact_single_source(&t).map_err(|e| e.to_string())?;
            let bound = h2_scalar_bound(&t).map_err(|e| e.to_string())?;
            // the same value from the closed form: rho2 = c rho1 gives rho1 c / (1 + c)
            let rho1 = 0.5 * w1.inverse().unwrap().trace();
            let closed = h2_parallel_compose(rho1, c * rho1).unwrap();
            worst_eq = worst_eq.max((bound - exact).abs()).max((closed - exact).abs());
        }
    }
    ensure(worst_eq <= 1e-9, || format!("proportional pairs differ by {worst_eq:.3e}"))?;
    Ok(format!(
        "{} trees, min(bound - exact) {worst_gap:.2e}, proportional max |diff| {worst_eq:.2e}",
        trees.len()
    ))
}

fn trace_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut min_gap = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=4);
        let a = random_spd(&mut rng, k, 0.05, 10.0);
        let b = random_spd(&mut rng, k, 0.05, 10.0);
        let (ta, tb) = (a.trace(), b.trace());
        let lhs = parallel_add(&a, &b).map_err(|e| e.to_string())?.trace();
        let rhs = ta * tb / (ta + tb);
        let gap = (rhs - lhs) / rhs;
        ensure(gap >= -1e-12, || format!("Tr(A:B) = {lhs} exceeds {rhs}"))?;
        // equality only for proportional pairs
        let distance = (a.as_matrix() / ta - b.as_matrix() / tb).norm();
        if k > 1 && distance > 1e-2 {
            ensure(gap > 1e-12, || format!("equality for non-proportional pair (distance {distance:.2e})"))?;
        }
        min_gap = min_gap.min(gap);
    }
    let mut worst_eq = 0.0f64;
    for _ in 0..200 {
        let k = rng.gen_range(1..=4);
        let a = random_spd(&mut rng, k, 0.05, 10.0);
        let c: f64 = rng.gen_range(0.1..10.0);
        let b = a.scale(c);
        let lhs = parallel_add(&a, &b).unwrap().trace();
        let rhs = a.trace() * b.trace() / (a.trace() + b.trace());
        worst_eq = worst_eq.max(rel(lhs, rhs));
    }
    ensure(worst_eq <= 1e-9, || format!("proportional case off by {worst_eq:.3e}"))?;
    Ok(format!("1000 pairs, min relative slack {min_gap:.2e}, proportional max rel err {worst_eq:.2e}"))
}

fn voltage_current_consistency() -> Outcome {
    let graphs = instances(5, 40, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut conservation, mut voltage_err, mut worst_power) = (0.0f64, 0.0f64, f64::INFINITY);
    for g in &graphs {
        let trees = decompose_sources(g).map_err(|e| e.to_string())?;
        for (s, t) in &trees.trees {
            let sol = solve(t).map_err(|e| e.to_string())?;
            let flat = t.preorder();
            for (i, n) in flat.iter().enumerate() {
                if let FlatNode::Join { kind, left, right } = n {
                    let r = match kind {
                        JoinKind::Series => (&sol.current[*left] - &sol.current[i])
                            .norm()
                            .max((&sol.current[*right] - &sol.current[i]).norm()),
                        JoinKind::Parallel => (&sol.current[*left] + &sol.current[*right] - &sol.current[i]).norm(),
                    };
                    conservation = conservation.max(r);
                }
            }

            let y = dense_voltages(g, s).map_err(|e| e.to_string())?;
            let orient = oriented_terminals(t, &trees.grounded, s, &trees.sink).map_err(|e| e.to_string())?;
            let (mut diff, mut scale) = (0.0f64, 0.0f64);
            for (i, n) in flat.iter().enumerate() {
                if let FlatNode::Leaf { edge, .. } = n {
                    let e = g.edge(edge).expect("graph edge");
                    let q = &y[&e.tail] - &y[&e.head];
                    let grounded_tail = if g.is_leader(&e.tail) { trees.sink.as_str() } else { e.tail.as_str() };
                    let v = if orient[i].0 == grounded_tail { sol.voltage[i].clone() } else { -&sol.voltage[i] };
                    diff = diff.max((v - &q).norm());
                    scale = scale.max(q.norm());
                }
            }
            voltage_err = voltage_err.max(diff / scale);

            // perturb the current split at random parallel joins
            let parallels: Vec<(usize, usize, usize)> = flat
                .iter()
                .enumerate()
                .filter_map(|(i, n)| match n {
                    FlatNode::Join { kind: JoinKind::Parallel, left, right } => Some((i, *left, *right)),
                    _ => None,
                })
                .collect();
            if parallels.is_empty() {
                continue;
            }
            let k = g.k();
            for _ in 0..1000 / trees.trees.len() + 1 {
                let (_, l, r) = parallels[rng.gen_range(0..parallels.len())];
                let (rl, rr) = (&sol.resistance[l], &sol.resistance[r]);
                let (il, ir) = (&sol.current[l], &sol.current[r]);
                let optimal = power(il, rl).unwrap() + power(ir, rr).unwrap();
                let scale = rng.gen_range(1e-4..1.0) * il.norm().max(ir.norm());
                let delta = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0)) * scale;
                let moved = power(&(il + &delta), rl).unwrap() + power(&(ir - &delta), rr).unwrap();
                let slack = (moved - optimal) / optimal;
                worst_power = worst_power.min(slack);
                ensure(moved >= optimal * (1.0 - 1e-12), || {
                    format!("perturbed split has less power: {moved} < {optimal}")
                })?;
            }
        }
    }
    ensure(conservation <= 1e-12, || format!("conservation residual {conservation:.3e} > 1e-12"))?;
    ensure(voltage_err <= 1e-9, || format!("leaf voltage rel err {voltage_err:.3e} > 1e-9"))?;
    Ok(format!(
        "conservation {conservation:.2e}, voltage rel err {voltage_err:.2e}, min power slack {worst_power:.2e}"
    ))
}

fn gradient_correctness() -> Outcome {
    let graphs = instances(6, 50, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (mut worst, mut max_eig, mut checks) = (0.0f64, f64::NEG_INFINITY, 0);
    let eps = 1e-5;
    for g in &graphs {
        let trees = decompose_sources(g).map_err(|e| e.to_string())?;
        let v = EdgeVoltages::compositional(&trees).map_err(|e| e.to_string())?;
        for e in g.edges() {
            let grad = gradient_edge(g, &e.id, &v).map_err(|e| e.to_string())?;
            max_eig = max_eig.max(grad.clone().symmetric_eigenvalues().max());
            for _ in 0..3 {
                let d = random_symmetric(&mut rng, g.k());
                let d = &d / d.norm();
                let at = |sign: f64| {
                    let w = SpdMatrix::symmetrize(e.weight.as_matrix() + &d * (sign * eps));
                    let moved = g.with_weights(&[(e.id.clone(), w)].into()).expect("weights");
                    dense_h2(&moved).expect("dense").total
                };
                let fd = (at(1.0) - at(-1.0)) / (2.0 * eps);
                let analytic = grad.dot(&d);
                // unit direction: the derivative is measured against its Cauchy-Schwarz scale ||grad||
                let err = (fd - analytic).abs() / grad.norm();
                worst = worst.max(err);
                checks += 1;
            }
        }
    }
    ensure(worst <= 1e-5, || format!("finite-difference rel err {worst:.3e} > 1e-5"))?;
    ensure(max_eig <= 1e-10, || format!("gradient eigenvalue {max_eig:.3e} > 1e-10"))?;
    Ok(format!("{checks} directional checks, max rel err {worst:.2e}, max eigenvalue {max_eig:.2e}"))
}

fn optimization() -> Outcome {
    let g = load_graph("demo_graph.json");
    let text = std::fs::read_to_string(fixture("demo_config.json")).expect("fixture");
    let mut cfg = serde_json::from_str::<ConfigFile>(&text)
        .expect("config json")
        .to_config(&g)
        .map_err(|e| e.to_string())?;
    cfg.max_iters = 100;
    cfg.grad_tol = 0.0;
    let start = Instant::now();
    let traj = optimize(&g, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(traj.iterations() == 100, || format!("{} iterations", traj.iterations()))?;
    for r in &traj.records {
        for (id, w) in &r.weights {
            let b = &cfg.bounds[id];
            let ok = loewner_leq(&b.lower, w, cfg.projection_tol).unwrap() && loewner_leq(w, &b.upper, cfg.projection_tol).unwrap();
            ensure(ok, || format!("iterate {} violates the bounds of `{id}`", r.iter))?;
        }
        // recorded objective matches an independent dense evaluation
        let moved = g.with_weights(&r.weights).unwrap();
        let dense = dense_h2(&moved).unwrap().total
            + 0.5 * cfg.penalty * moved.edges().iter().map(|e| e.weight.as_matrix().norm_squared()).sum::<f64>();
        ensure(rel(r.objective, dense) <= 1e-9, || format!("iterate {} objective {} vs {dense}", r.iter, r.objective))?;
    }
    let (f0, f1) = (traj.initial().objective, traj.last().objective);
    ensure(f1 < f0, || format!("final objective {f1} not below initial {f0}"))?;
    let running = traj.running_minimum();
    ensure(running.windows(2).all(|w| w[1] <= w[0]), || "running minimum increases".into())?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "100 feasible iterates, objective {f0:.6} -> {f1:.6} (best {:.6}), {:.2}s",
        running.last().unwrap(),
        elapsed.as_secs_f64()
    ))
}

fn lyapunov() -> Outcome {
    let graphs = instances(8, 100, 100);
    let mut worst = 0.0f64;
    for g in &graphs {
        let dim = (g.followers().len() * g.k()) as f64;
        let r = lyapunov_residual(g).map_err(|e| e.to_string())?;
        let ratio = r / (1e-9 * dim.sqrt());
        worst = worst.max(ratio);
        ensure(ratio <= 1.0, || format!("residual {r:.3e} exceeds 1e-9 sqrt({dim})"))?;
    }
    Ok(format!("100 instances, max residual / (1e-9 sqrt(dim)) = {worst:.2e}"))
}

/// Every complete tree shape with `leaves` leaves and every join-kind labelling.
fn all_trees(leaves: usize, next_id: &mut usize) -> Vec<SpTree> {
    if leaves == 1 {
        *next_id += 1;
        return vec![SpTree::leaf(format!("e{next_id}"), SpdMatrix::identity(1))];
    }
    let mut out = Vec::new();
    for left in 1..leaves {
        for l in all_trees(left, next_id) {
            for r in all_trees(leaves - left, next_id) {
                for kind in [JoinKind::Series, JoinKind::Parallel] {
                    out.push(SpTree::join(kind, l.clone(), r.clone()).expect("distinct ids"));
                }
            }
        }
    }
    out
}

fn height_and_leaves(t: &SpTree) -> (usize, usize) {
    match t {
        SpTree::Leaf { .. } => (0, 1),
        SpTree::Series(l, r) | SpTree::Parallel(l, r) => {
            let (hl, ll) = height_and_leaves(l);
            let (hr, lr) = height_and_leaves(r);
            (1 + hl.max(hr), ll + lr)
        }
    }
}

fn bounds_hold(t: &SpTree) -> bool {
    let (h, l) = height_and_leaves(t);
    let lower = (l as f64).log2().ceil() as usize;
    lower <= h && h < l && check_height_bounds(t)
}

fn tree_height_bounds() -> Outcome {
    let mut exhaustive = 0;
    let mut id = 0;
    for leaves in 1..=6 {
        for t in all_trees(leaves, &mut id) {
            ensure(bounds_hold(&t), || format!("bounds fail on {:?}", TreeShape(&t)))?;
            let realized = realize(&t).map_err(|e| e.to_string())?;
            ensure(realized.graph.nodes().len() == t.stats().nodes, || "node count formula".into())?;
            exhaustive += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let leaves = rng.gen_range(7..=200);
        let t = random_tree(&mut rng, leaves, 1, "e");
        ensure(bounds_hold(&t), || format!("bounds fail on a random tree with {leaves} leaves"))?;
    }
    Ok(format!("{exhaustive} exhaustive trees (<= 6 leaves) and 1000 random trees"))
}

struct TreeShape<'a>(&'a SpTree);

impl std::fmt::Debug for TreeShape<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            SpTree::Leaf { edge, .. } => write!(f, "{edge}"),
            SpTree::Series(l, r) => write!(f, "S({:?}, {:?})", TreeShape(l), TreeShape(r)),
            SpTree::Parallel(l, r) => write!(f, "P({:?}, {:?})", TreeShape(l), TreeShape(r)),
        }
    }
}

fn recognition_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let leaves = rng.gen_range(1..=60);
        let k = rng.gen_range(1..=3);
        let t = random_tree(&mut rng, leaves, k, "e");
        let r = realize(&t).map_err(|e| e.to_string())?;
        let back = recognize(&r.graph, &r.source, &r.sink).map_err(|e| e.to_string())?;
        let a = solve(&t).map_err(|e| e.to_string())?;
        let b = solve(&back).map_err(|e| e.to_string())?;
        let err = (a.root_resistance().as_matrix() - b.root_resistance().as_matrix()).norm()
            / a.root_resistance().as_matrix().norm();
        worst = worst.max(err);
        ensure(err <= 1e-10, || format!("root resistance differs by {err:.3e}"))?;
    }
    let k4 = load_graph("k4.json");
    let trees = decompose_sources(&k4);
    ensure(matches!(trees, Err(Error::NotSeriesParallel { .. })), || {
        format!("K4 fixture not rejected: {:?}", trees.map(|_| ()))
    })?;
    Ok(format!("500 round trips, max rel err {worst:.2e}; K4 rejected"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("series exactness", series_exactness),
        ("parallel bound", parallel_bound),
        ("trace parallel-sum inequality", trace_inequality),
        ("voltage/current consistency", voltage_current_consistency),
        ("gradient correctness", gradient_correctness),
        ("optimization", optimization),
        ("lyapunov check", lyapunov),
        ("tree-height bounds", tree_height_bounds),
        ("recognition round-trip", recognition_round_trip),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
