//! File formats and the `sph2` command line.
//!
//! Graphs, trees and optimizer configs are JSON; trajectories are CSV. All
//! floating-point output uses 17 significant digits so that values survive a
//! round trip bit for bit.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::electrical::solve;
use crate::error::Error;
use crate::graph::{ground_leaders, Edge, EdgeId, MatrixGraph, NodeId};
use crate::h2::{decompose_sources, dense_h2, h2, H2Method, H2Report};
use crate::matlin::{Block, SpdMatrix};
use crate::optimize::{gradient_edge, optimize, EdgeBounds, EdgeVoltages, OptConfig, OptTrajectory, VoltageSource};
use crate::sptree::{oriented_terminals, recognize, FlatNode, JoinKind, SpTree};

/// Relative error allowed by `check`.
pub const CHECK_TOL: f64 = 1e-9;

pub const TRAJECTORY_HEADER: &str = "iter,objective,h2_squared,penalty,grad_norm";

/// Formats `x` like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", strip_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Pretty JSON with `%.17g` numbers; non-finite values become `null`.
struct G17Formatter<'a>(PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident),*) => {
        $(fn $name<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
            self.0.$name(w)
        })*
    };
}

impl Formatter for G17Formatter<'_> {
    delegate!(begin_array, end_array, end_array_value, begin_object, end_object, begin_object_value, end_object_value);

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_g17(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

/// Serializes `value` as pretty JSON with 17-digit numbers.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, G17Formatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializable value");
    buf.push(b'\n');
    String::from_utf8(buf).expect("utf-8 json")
}

// ---------------------------------------------------------------------------
// file formats

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFile {
    pub id: EdgeId,
    pub tail: NodeId,
    pub head: NodeId,
    pub weight: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub k: usize,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeFile>,
    pub leaders: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<NodeId>>,
}

impl GraphFile {
    pub fn from_graph(g: &MatrixGraph) -> Self {
        Self {
            k: g.k(),
            nodes: g.nodes().to_vec(),
            edges: g
                .edges()
                .iter()
                .map(|e| EdgeFile {
                    id: e.id.clone(),
                    tail: e.tail.clone(),
                    head: e.head.clone(),
                    weight: e.weight.to_rows(),
                })
                .collect(),
            leaders: g.leaders().iter().cloned().collect(),
            sources: Some(g.sources().to_vec()),
        }
    }

    /// Builds and validates the graph, including the leader structure.
    pub fn to_graph(&self) -> crate::Result<MatrixGraph> {
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let w = SpdMatrix::from_rows(&e.weight)
                    .and_then(|w| SpdMatrix::positive_definite(w.into_inner()))
                    .map_err(|err| Error::InvalidGraph(format!("weight of edge `{}`: {err}", e.id)))?;
                Ok(Edge::new(e.id.clone(), e.tail.clone(), e.head.clone(), w))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let g = MatrixGraph::new(self.k, self.nodes.clone(), edges, self.leaders.clone(), self.sources.clone())?;
        g.validate_leader_structure()?;
        Ok(g)
    }
}

/// Decomposition tree referencing graph edges by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum TreeFile {
    Leaf { edge: EdgeId },
    Series { children: Vec<TreeFile> },
    Parallel { children: Vec<TreeFile> },
}

impl TreeFile {
    pub fn from_tree(t: &SpTree) -> Self {
        match t {
            SpTree::Leaf { edge, .. } => TreeFile::Leaf { edge: edge.clone() },
            SpTree::Series(l, r) => TreeFile::Series {
                children: vec![Self::from_tree(l), Self::from_tree(r)],
            },
            SpTree::Parallel(l, r) => TreeFile::Parallel {
                children: vec![Self::from_tree(l), Self::from_tree(r)],
            },
        }
    }

    /// Resolves leaf ids to the weights of `g`.
    pub fn to_tree(&self, g: &MatrixGraph) -> crate::Result<SpTree> {
        let (kind, children) = match self {
            TreeFile::Leaf { edge } => {
                let e = g.edge(edge).ok_or_else(|| Error::UnknownEdge(edge.clone()))?;
                return Ok(SpTree::leaf(edge.clone(), e.weight.clone()));
            }
            TreeFile::Series { children } => (JoinKind::Series, children),
            TreeFile::Parallel { children } => (JoinKind::Parallel, children),
        };
        match children.as_slice() {
            [l, r] => SpTree::join(kind, l.to_tree(g)?, r.to_tree(g)?),
            _ => Err(Error::InvalidTree(format!(
                "a join needs exactly two children, found {}",
                children.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl BoundsFile {
    fn to_bounds(&self) -> crate::Result<EdgeBounds> {
        Ok(EdgeBounds {
            lower: SpdMatrix::from_rows(&self.lower)?,
            upper: SpdMatrix::from_rows(&self.upper)?,
        })
    }

    fn from_bounds(b: &EdgeBounds) -> Self {
        Self {
            lower: b.lower.to_rows(),
            upper: b.upper.to_rows(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VoltageChoice {
    Compositional,
    Dense,
}

/// Optimizer configuration. Edges listed in `bounds` are optimized; when
/// `default_bounds` is present it also applies to every other edge that
/// does not touch a leader.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub penalty: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bounds: BTreeMap<EdgeId, BoundsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_bounds: Option<BoundsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltages: Option<VoltageChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_to_dense: Option<bool>,
}

impl ConfigFile {
    pub fn from_config(cfg: &OptConfig) -> Self {
        Self {
            penalty: cfg.penalty,
            bounds: cfg.bounds.iter().map(|(id, b)| (id.clone(), BoundsFile::from_bounds(b))).collect(),
            default_bounds: None,
            max_iters: Some(cfg.max_iters),
            grad_tol: Some(cfg.grad_tol),
            projection_tol: Some(cfg.projection_tol),
            projection_max_iter: Some(cfg.projection_max_iter),
            voltages: Some(match cfg.voltages {
                VoltageSource::Compositional => VoltageChoice::Compositional,
                VoltageSource::Dense => VoltageChoice::Dense,
            }),
            fallback_to_dense: Some(cfg.fallback_to_dense),
        }
    }

    pub fn to_config(&self, g: &MatrixGraph) -> crate::Result<OptConfig> {
        let mut cfg = OptConfig::new(self.penalty);
        for (id, b) in &self.bounds {
            cfg.bounds.insert(id.clone(), b.to_bounds()?);
        }
        if let Some(d) = &self.default_bounds {
            cfg = cfg.with_default_bounds(g, &d.to_bounds()?);
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if let Some(v) = self.grad_tol {
            cfg.grad_tol = v;
        }
        if let Some(v) = self.projection_tol {
            cfg.projection_tol = v;
        }
        if let Some(v) = self.projection_max_iter {
            cfg.projection_max_iter = v;
        }
        if let Some(v) = self.voltages {
            cfg.voltages = match v {
                VoltageChoice::Compositional => VoltageSource::Compositional,
                VoltageChoice::Dense => VoltageSource::Dense,
            };
        }
        if let Some(v) = self.fallback_to_dense {
            cfg.fallback_to_dense = v;
        }
        cfg.validate(g)?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// reports

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct H2Output {
    pub total_h2_squared: f64,
    pub per_source: BTreeMap<NodeId, f64>,
    pub method: String,
}

impl From<&H2Report> for H2Output {
    fn from(r: &H2Report) -> Self {
        Self {
            total_h2_squared: r.total,
            per_source: r.per_source.clone(),
            method: r.method.as_str().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeAnnotation {
    pub op: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<EdgeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub children: Option<[usize; 2]>,
    pub resistance: Vec<Vec<f64>>,
    pub current: Vec<Vec<f64>>,
    pub voltage: Vec<Vec<f64>>,
}

/// Electrical sweep of a tree under identity intensity, keyed by pre-order index.
pub fn annotate(t: &SpTree) -> crate::Result<BTreeMap<usize, NodeAnnotation>> {
    let sol = solve(t)?;
    Ok(t
        .preorder()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let (op, edge, children) = match n {
                FlatNode::Leaf { edge, .. } => ("leaf", Some(edge.to_string()), None),
                FlatNode::Join { kind, left, right } => (
                    match kind {
                        JoinKind::Series => "series",
                        JoinKind::Parallel => "parallel",
                    },
                    None,
                    Some([*left, *right]),
                ),
            };
            let ann = NodeAnnotation {
                op,
                edge,
                children,
                resistance: sol.resistance[i].to_rows(),
                current: rows(&sol.current[i]),
                voltage: rows(&sol.voltage[i]),
            };
            (i, ann)
        })
        .collect())
}

fn rows(m: &Block) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Largest relative errors of the compositional quantities against the dense oracle.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub sources: usize,
    pub edges: usize,
    pub resistance: f64,
    pub currents: f64,
    pub voltages: f64,
    pub h2: f64,
    pub gradient: f64,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `max_i ||a_i - b_i||_F / max_i ||b_i||_F` over paired blocks.
fn family_error<'a>(pairs: impl IntoIterator<Item = (&'a Block, &'a Block)>) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (a, b) in pairs {
        diff = diff.max((a - b).norm());
        scale = scale.max(b.norm());
    }
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Compares the tree sweeps (root resistances, edge currents and voltage
/// drops, H2, edge gradients) with dense Dirichlet-Laplacian solves.
pub fn check_report(g: &MatrixGraph) -> crate::Result<CheckReport> {
    let trees = decompose_sources(g)?;
    let grounded = &trees.grounded;
    let dense = EdgeVoltages::dense(g)?;
    let comp = EdgeVoltages::compositional(&trees)?;
    let mut resistance = 0.0f64;
    let mut currents = 0.0f64;
    let mut voltages = 0.0f64;
    let mut comp_h2 = 0.0;
    for (s, t) in &trees.trees {
        let sol = solve(t)?;
        comp_h2 += 0.5 * sol.root_resistance().trace();
        let a_inv = crate::h2::dense_voltages(g, s)?;
        let r_dense = &a_inv[s];
        resistance = resistance.max(family_error([(sol.root_resistance().as_matrix(), r_dense)]));

        let orient = oriented_terminals(t, grounded, s, &trees.sink)?;
        let mut comp_i = Vec::new();
        let mut dense_i = Vec::new();
        for (idx, node) in t.preorder().iter().enumerate() {
            if let FlatNode::Leaf { edge, .. } = node {
                let e = grounded.edge(edge).expect("tree leaf is a graph edge");
                let i = &sol.current[idx];
                comp_i.push(if orient[idx].0 == e.tail { i.clone() } else { -i });
                dense_i.push(e.weight.as_matrix() * &dense.per_source[s][*edge]);
            }
        }
        currents = currents.max(family_error(comp_i.iter().zip(&dense_i)));
        let ds = &dense.per_source[s];
        let cs = &comp.per_source[s];
        voltages = voltages.max(family_error(ds.keys().map(|e| (&cs[e], &ds[e]))));
    }
    let dense_total = dense_h2(g)?.total;
    let h2 = (comp_h2 - dense_total).abs() / dense_total.abs();
    let mut grads = Vec::new();
    for e in g.edges() {
        grads.push((gradient_edge(g, &e.id, &comp)?, gradient_edge(g, &e.id, &dense)?));
    }
    let gradient = family_error(grads.iter().map(|(a, b)| (a, b)));
    let max_relative_error = [resistance, currents, voltages, h2, gradient].into_iter().fold(0.0, f64::max);
    Ok(CheckReport {
        sources: trees.trees.len(),
        edges: g.edges().len(),
        resistance,
        currents,
        voltages,
        h2,
        gradient,
        max_relative_error,
        tolerance: CHECK_TOL,
        pass: max_relative_error <= CHECK_TOL,
    })
}

/// Decomposition tree of the grounded graph from `source` to `sink`. The
/// sink defaults to the node replacing the leaders; naming any leader also
/// selects it.
pub fn decompose(g: &MatrixGraph, source: &str, sink: Option<&str>) -> crate::Result<SpTree> {
    let (grounded, ground) = ground_leaders(g)?;
    let sink = match sink {
        Some(s) if !g.is_leader(s) => s,
        _ => &ground,
    };
    recognize(&grounded, source, sink)
}

/// Trajectory as CSV with [`TRAJECTORY_HEADER`].
pub fn trajectory_csv(traj: &OptTrajectory) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &traj.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            fmt_g17(r.objective),
            fmt_g17(r.h2_squared),
            fmt_g17(r.penalty),
            fmt_g17(r.grad_norm)
        );
    }
    out
}

// ---------------------------------------------------------------------------
// bundled fixtures

/// Seeds of the bundled random series-parallel instances, by file name.
const AITTSP_FIXTURES: [(&str, u64, usize, usize, usize); 3] = [
    ("aittsp_k1.json", 101, 1, 2, 10),
    ("aittsp_k2.json", 202, 2, 3, 20),
    ("aittsp_k3.json", 303, 3, 4, 30),
];

/// Contents of every file under `fixtures/`, keyed by file name.
pub fn bundled_fixtures() -> BTreeMap<&'static str, String> {
    use rand::SeedableRng;

    use crate::generate::{demo_instance, random_aittsp, AittspParams};

    let mut out = BTreeMap::new();
    let unit = MatrixGraph::new(
        1,
        vec!["r".into(), "s".into()],
        vec![Edge::new("a", "r", "s", SpdMatrix::identity(1))],
        ["r".to_string()],
        None,
    )
    .expect("unit path");
    out.insert("unit_path.json", to_json(&GraphFile::from_graph(&unit)));

    let k4_nodes = ["s", "u", "v", "w"];
    let mut k4_edges = vec![Edge::new("a", "r", "s", SpdMatrix::identity(1))];
    for (i, x) in k4_nodes.iter().enumerate() {
        for y in &k4_nodes[i + 1..] {
            k4_edges.push(Edge::new(format!("{x}{y}"), *x, *y, SpdMatrix::identity(1)));
        }
    }
    let mut nodes = vec!["r".to_string()];
    nodes.extend(k4_nodes.iter().map(|n| n.to_string()));
    let k4 = MatrixGraph::new(1, nodes, k4_edges, ["r".to_string()], None).expect("K4");
    out.insert("k4.json", to_json(&GraphFile::from_graph(&k4)));

    for (name, seed, k, sources, max_followers) in AITTSP_FIXTURES {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = random_aittsp(&mut rng, &AittspParams { k, sources, max_followers });
        out.insert(name, to_json(&GraphFile::from_graph(&g)));
        if k == 2 {
            let trees = decompose_sources(&g).expect("generated graph is series-parallel");
            let t = &trees.trees[&g.sources()[0]];
            out.insert("aittsp_k2_tree.json", to_json(&TreeFile::from_tree(t)));
        }
    }

    let (g, cfg) = demo_instance();
    out.insert("demo_graph.json", to_json(&GraphFile::from_graph(&g)));
    out.insert("demo_config.json", to_json(&ConfigFile::from_config(&cfg)));
    out
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(name = "sph2", version, about = "H2 analysis and edge re-weighting of matrix-weighted series-parallel consensus networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Exact,
    Bound,
    Oracle,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decomposition tree from a source to the grounded leaders.
    Decompose {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        source: NodeId,
        /// Sink node; defaults to the node replacing the leader set.
        #[arg(long)]
        sink: Option<NodeId>,
    },
    /// Squared H2 norm.
    H2 {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        method: MethodArg,
    },
    /// Resistances, currents and voltages of every tree node.
    Resistance {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        tree: PathBuf,
    },
    /// Projected gradient re-weighting.
    Optimize {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        /// Final graph JSON; printed to stdout when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Compositional results against the dense oracle.
    Check {
        #[arg(long)]
        graph: PathBuf,
    },
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::NotSeriesParallel { .. }) { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// 1-based line of the first occurrence of `"needle"` in `text`.
fn locate(text: &str, needle: &str) -> Option<usize> {
    let quoted = format!("\"{needle}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

/// First back-quoted token of an error message.
fn quoted_token(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

fn semantic_error(path: &Path, text: &str, e: Error) -> CliError {
    let msg = e.to_string();
    let line = quoted_token(&msg).and_then(|tok| locate(text, tok)).unwrap_or(1);
    CliError {
        code: if matches!(e, Error::NotSeriesParallel { .. }) { 2 } else { 1 },
        message: format!("{}:{line}: {msg}", path.display()),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text)
        .map_err(|e| CliError::validation(format!("{}:{}: {e}", path.display(), e.line().max(1))))
}

fn load_graph(path: &Path) -> Result<MatrixGraph, CliError> {
    let text = read(path)?;
    let file: GraphFile = parse(path, &text)?;
    file.to_graph().map_err(|e| semantic_error(path, &text, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let emit = |out: &mut dyn Write, s: &str| -> Result<(), CliError> {
        out.write_all(s.as_bytes()).map_err(|e| CliError::validation(e.to_string()))
    };
    match cmd {
        Command::Decompose { graph, source, sink } => {
            let g = load_graph(&graph)?;
            let t = decompose(&g, &source, sink.as_deref())?;
            emit(out, &to_json(&TreeFile::from_tree(&t)))?;
        }
        Command::H2 { graph, method } => {
            let g = load_graph(&graph)?;
            let method = match method {
                MethodArg::Exact => H2Method::ExactCompositional,
                MethodArg::Bound => H2Method::ScalarBound,
                MethodArg::Oracle => H2Method::DenseOracle,
            };
            let report = h2(&g, method)?;
            emit(out, &to_json(&H2Output::from(&report)))?;
        }
        Command::Resistance { graph, tree } => {
            let g = load_graph(&graph)?;
            let text = read(&tree)?;
            let file: TreeFile = parse(&tree, &text)?;
            let t = file.to_tree(&g).map_err(|e| semantic_error(&tree, &text, e))?;
            emit(out, &to_json(&annotate(&t)?))?;
        }
        Command::Optimize {
            graph,
            config,
            out: csv,
            weights,
        } => {
            let g = load_graph(&graph)?;
            let text = read(&config)?;
            let file: ConfigFile = parse(&config, &text)?;
            let cfg = file.to_config(&g).map_err(|e| semantic_error(&config, &text, e))?;
            let traj = optimize(&g, &cfg)?;
            write_file(&csv, &trajectory_csv(&traj))?;
            let last = traj.last();
            log::info!(
                "{} iterations, objective {} -> {}",
                traj.iterations(),
                fmt_g17(traj.initial().objective),
                fmt_g17(last.objective)
            );
            let final_graph = to_json(&GraphFile::from_graph(&g.with_weights(&last.weights)?));
            match weights {
                Some(p) => write_file(&p, &final_graph)?,
                None => emit(out, &final_graph)?,
            }
        }
        Command::Check { graph } => {
            let g = load_graph(&graph)?;
            let report = check_report(&g)?;
            emit(out, &to_json(&report))?;
            if !report.pass {
                return Ok(1);
            }
        }
    }
    Ok(0)
}

/// Runs the command line; returns the process exit code: 0 on success, 1 on
/// invalid input (or a failed `check`), 2 when a graph is not series-parallel.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}
