//! Deployment architectures assembled from primitive components.
//!
//! Every node is a list of [`Block`]s, each wrapping one [`Component`]:
//! storage (buffers and delay buffers), computation (multipliers and adders)
//! and communication (disseminator/collector pairs joined by [`Link`]s).
//! Blocks refer to each other's outputs through [`Port`]s. A delay buffer's
//! output is the value its input had during the previous step; every other
//! block output is produced and consumed within the same step.
//!
//! The builders lay the simplified controller out across the nodes in the
//! ways described in the module-level docs of each `build_*` function. The
//! per-node storage layout is fixed so that the scalar counts of
//! [`cost_report`] are reproducible closed forms in `(Nx, Nu, T)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::LtiSystem;
use crate::serde_mat;
use crate::synthesis::SystemResponse;

pub type NodeId = usize;
pub type LinkId = usize;
pub type BlockId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One controller node running the simplified realization.
    Centralized,
    /// One controller node running the standard (two-convolution) realization.
    Original,
    /// Sensors compute `δ_i`, a global state keeper relays `δ`, actuators convolve.
    GlobalState,
    /// Sensors send `δ_i` straight to actuators, which convolve.
    Naive,
    /// Sensors convolve their own `δ_i` and send per-actuator partial sums.
    Conservative,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Centralized,
        Architecture::Original,
        Architecture::GlobalState,
        Architecture::Naive,
        Architecture::Conservative,
    ];

    /// The four architectures that deploy the simplified realization.
    pub const SIMPLIFIED: [Architecture; 4] = [
        Architecture::Centralized,
        Architecture::GlobalState,
        Architecture::Naive,
        Architecture::Conservative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Centralized => "centralized",
            Architecture::Original => "original",
            Architecture::GlobalState => "global_state",
            Architecture::Naive => "naive",
            Architecture::Conservative => "conservative",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown architecture `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Sensor(usize),
    Actuator(usize),
    CentralController,
    Gsk,
}

/// A slice of a block's output, or the sensor's own measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Measurement,
    Output {
        block: BlockId,
        offset: usize,
        len: usize,
    },
}

impl Port {
    pub fn all(block: BlockId, len: usize) -> Port {
        Port::Output { block, offset: 0, len }
    }

    pub fn entry(block: BlockId, index: usize) -> Port {
        Port::Output {
            block,
            offset: index,
            len: 1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Port::Measurement => 1,
            Port::Output { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Names a matrix held in the graph's [`MatrixStore`], with any sign folded in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRef {
    NegA,
    NegB,
    /// `-A[:, i]`
    NegAColumn(usize),
    /// `-B[:, k]`
    NegBColumn(usize),
    /// `Φu[tau]`
    PhiU(usize),
    /// `Φu[tau][row, :]`
    PhiURow { tau: usize, row: usize },
    /// `Φu[tau][:, col]`
    PhiUColumn { tau: usize, col: usize },
    /// `-Φx[tau]`
    NegPhiX(usize),
}

impl fmt::Display for MatrixRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixRef::NegA => write!(f, "-A"),
            MatrixRef::NegB => write!(f, "-B"),
            MatrixRef::NegAColumn(i) => write!(f, "-A[:,{i}]"),
            MatrixRef::NegBColumn(k) => write!(f, "-B[:,{k}]"),
            MatrixRef::PhiU(t) => write!(f, "Phi_u[{t}]"),
            MatrixRef::PhiURow { tau, row } => write!(f, "Phi_u[{tau}][{row},:]"),
            MatrixRef::PhiUColumn { tau, col } => write!(f, "Phi_u[{tau}][:,{col}]"),
            MatrixRef::NegPhiX(t) => write!(f, "-Phi_x[{t}]"),
        }
    }
}

/// Sends `input[indices]` over `link`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub link: LinkId,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartSource {
    Link(LinkId),
    Local(Port),
}

/// Places the entries of `source` at `positions` of the collector output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Part {
    pub source: PartSource,
    pub positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Component {
    Buffer {
        dim: usize,
        input: Port,
    },
    DelayBuffer {
        dim: usize,
        input: Port,
    },
    Multiplier {
        matrix: MatrixRef,
        rows: usize,
        cols: usize,
        input: Port,
    },
    /// Entry-wise sum of `inputs.len()` vectors of length `dim`.
    Adder {
        dim: usize,
        inputs: Vec<Port>,
    },
    Disseminator {
        input: Port,
        routes: Vec<Route>,
        /// Scalars sent per step if every matrix were dense.
        dense_scalars: usize,
    },
    /// Positions not covered by any part read as zero.
    Collector {
        dim: usize,
        assembly: Vec<Part>,
    },
}

impl Component {
    /// Length of the block's output.
    pub fn output_dim(&self) -> usize {
        match self {
            Component::Buffer { dim, .. }
            | Component::DelayBuffer { dim, .. }
            | Component::Adder { dim, .. }
            | Component::Collector { dim, .. } => *dim,
            Component::Multiplier { rows, .. } => *rows,
            Component::Disseminator { .. } => 0,
        }
    }

    fn input_ports(&self) -> Vec<Port> {
        match self {
            Component::Buffer { input, .. }
            | Component::DelayBuffer { input, .. }
            | Component::Multiplier { input, .. }
            | Component::Disseminator { input, .. } => vec![*input],
            Component::Adder { inputs, .. } => inputs.clone(),
            Component::Collector { assembly, .. } => assembly
                .iter()
                .filter_map(|p| match p.source {
                    PartSource::Local(port) => Some(port),
                    PartSource::Link(_) => None,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub label: String,
    #[serde(flatten)]
    pub component: Component,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub blocks: Vec<Block>,
    /// Actuators only: the port whose value is applied to the plant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant_input: Option<Port>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    pub dim: usize,
}

/// Where the simulator reads `δ[t]` entries from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaProbe {
    pub node: NodeId,
    pub port: Port,
    /// Global state index of each entry of `port`.
    pub indices: Vec<usize>,
}

/// The controller data a graph's multipliers are bound to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStore {
    #[serde(rename = "A", with = "serde_mat::matrix")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_mat::matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_mat::matrix_seq")]
    pub phi_u: Vec<DMatrix<f64>>,
    #[serde(default, with = "serde_mat::opt_matrix_seq", skip_serializing_if = "Option::is_none")]
    pub phi_x: Option<Vec<DMatrix<f64>>>,
}

impl MatrixStore {
    pub fn resolve(&self, r: MatrixRef) -> Result<DMatrix<f64>> {
        let dangling = || Error::DanglingMatrix(r.to_string());
        let phi_u = |tau: usize| {
            tau.checked_sub(1)
                .and_then(|i| self.phi_u.get(i))
                .ok_or_else(dangling)
        };
        Ok(match r {
            MatrixRef::NegA => -&self.a,
            MatrixRef::NegB => -&self.b,
            MatrixRef::NegAColumn(i) if i < self.a.ncols() => -self.a.columns(i, 1),
            MatrixRef::NegBColumn(k) if k < self.b.ncols() => -self.b.columns(k, 1),
            MatrixRef::PhiU(tau) => phi_u(tau)?.clone(),
            MatrixRef::PhiURow { tau, row } => {
                let m = phi_u(tau)?;
                if row >= m.nrows() {
                    return Err(dangling());
                }
                m.rows(row, 1).into_owned()
            }
            MatrixRef::PhiUColumn { tau, col } => {
                let m = phi_u(tau)?;
                if col >= m.ncols() {
                    return Err(dangling());
                }
                m.columns(col, 1).into_owned()
            }
            MatrixRef::NegPhiX(tau) => {
                let m = self
                    .phi_x
                    .as_ref()
                    .and_then(|px| tau.checked_sub(1).and_then(|i| px.get(i)))
                    .ok_or_else(dangling)?;
                -m
            }
            _ => return Err(dangling()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureGraph {
    pub architecture: Architecture,
    pub nx: usize,
    pub nu: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub matrices: MatrixStore,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    /// Evaluation phases within one step. Delay buffers are not listed: they
    /// release at the start of a step and latch after the last phase.
    pub schedule: Vec<Vec<(NodeId, BlockId)>>,
    pub delta_probes: Vec<DeltaProbe>,
}

impl ArchitectureGraph {
    pub fn node_id(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn actuator(&self, k: usize) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Actuator(k))
    }

    pub fn sensor(&self, i: usize) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Sensor(i))
    }

    /// Links leaving `node`.
    pub fn outgoing(&self, node: NodeId) -> impl Iterator<Item = (LinkId, &Link)> {
        self.links.iter().enumerate().filter(move |(_, l)| l.src == node)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut g: ArchitectureGraph = serde_json::from_str(s)?;
        g.validate()?;
        g.schedule = compute_schedule(&g)?;
        Ok(g)
    }

    /// Structural well-formedness: shapes, port ranges, and a one-to-one
    /// pairing of every link with a disseminator route and a collector part.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Numeric(format!("malformed architecture graph: {msg}")));
        let count = |f: fn(&NodeKind) -> bool| self.nodes.iter().filter(|n| f(&n.kind)).count();
        if count(|k| matches!(k, NodeKind::Sensor(_))) != self.nx {
            return bad(format!("expected {} sensor nodes", self.nx));
        }
        if count(|k| matches!(k, NodeKind::Actuator(_))) != self.nu {
            return bad(format!("expected {} actuator nodes", self.nu));
        }
        if count(|k| matches!(k, NodeKind::CentralController | NodeKind::Gsk)) > 1 {
            return bad("more than one central node".into());
        }
        for (l, link) in self.links.iter().enumerate() {
            if link.dim == 0 || link.src >= self.nodes.len() || link.dst >= self.nodes.len() {
                return bad(format!("link {l} is empty or dangling"));
            }
        }

        let mut routed = vec![0usize; self.links.len()];
        let mut collected = vec![0usize; self.links.len()];
        for (nid, node) in self.nodes.iter().enumerate() {
            let dims: Vec<usize> = node.blocks.iter().map(|b| b.component.output_dim()).collect();
            let port_ok = |p: &Port| match *p {
                Port::Measurement => matches!(node.kind, NodeKind::Sensor(_)),
                Port::Output { block, offset, len } => {
                    block < dims.len() && offset + len <= dims[block]
                }
            };
            for (bid, block) in node.blocks.iter().enumerate() {
                let here = format!("{}[{bid}] `{}`", node.name, block.label);
                if !block.component.input_ports().iter().all(port_ok) {
                    return bad(format!("{here} reads an invalid port"));
                }
                match &block.component {
                    Component::Buffer { dim, input } | Component::DelayBuffer { dim, input } => {
                        if *dim == 0 || input.len() != *dim {
                            return bad(format!("{here} has mismatched dimensions"));
                        }
                    }
                    Component::Multiplier { matrix, rows, cols, input } => {
                        let m = self.matrices.resolve(*matrix)?;
                        if m.shape() != (*rows, *cols) || input.len() != *cols {
                            return bad(format!("{here} has mismatched dimensions"));
                        }
                    }
                    Component::Adder { dim, inputs } => {
                        if inputs.iter().any(|p| p.len() != *dim) {
                            return bad(format!("{here} has mismatched operands"));
                        }
                    }
                    Component::Disseminator { input, routes, dense_scalars } => {
                        let sent: usize = routes.iter().map(|r| r.indices.len()).sum();
                        if sent > *dense_scalars {
                            return bad(format!("{here} sends more than its dense count"));
                        }
                        for r in routes {
                            let Some(link) = self.links.get(r.link) else {
                                return bad(format!("{here} routes to unknown link {}", r.link));
                            };
                            if link.src != nid
                                || link.dim != r.indices.len()
                                || r.indices.iter().any(|&i| i >= input.len())
                            {
                                return bad(format!("{here} has an inconsistent route on link {}", r.link));
                            }
                            routed[r.link] += 1;
                        }
                    }
                    Component::Collector { dim, assembly } => {
                        let mut covered = vec![false; *dim];
                        for part in assembly {
                            let src_len = match part.source {
                                PartSource::Link(l) => {
                                    let Some(link) = self.links.get(l) else {
                                        return bad(format!("{here} collects from unknown link {l}"));
                                    };
                                    if link.dst != nid {
                                        return bad(format!("{here} collects from link {l} addressed elsewhere"));
                                    }
                                    collected[l] += 1;
                                    link.dim
                                }
                                PartSource::Local(p) => p.len(),
                            };
                            if src_len != part.positions.len() {
                                return bad(format!("{here} has a part of the wrong length"));
                            }
                            for &pos in &part.positions {
                                if pos >= *dim || std::mem::replace(&mut covered[pos], true) {
                                    return bad(format!("{here} covers position {pos} twice or out of range"));
                                }
                            }
                        }
                    }
                }
            }
            match (node.kind, node.plant_input) {
                (NodeKind::Actuator(_), Some(p)) if p.len() == 1 && port_ok(&p) => {}
                (NodeKind::Actuator(_), _) => return bad(format!("actuator {} lacks a plant input", node.name)),
                (_, Some(_)) => return bad(format!("non-actuator {} drives the plant", node.name)),
                _ => {}
            }
        }
        if let Some(l) = (0..self.links.len()).find(|&l| routed[l] != 1 || collected[l] != 1) {
            return bad(format!("link {l} is not paired with exactly one route and one collector part"));
        }
        Ok(())
    }
}

/// Topological phases over non-delay blocks; intra-step dependencies are
/// port reads and link deliveries.
pub fn compute_schedule(g: &ArchitectureGraph) -> Result<Vec<Vec<(NodeId, BlockId)>>> {
    let mut index = BTreeMap::new();
    let mut keys = Vec::new();
    for (n, node) in g.nodes.iter().enumerate() {
        for (b, block) in node.blocks.iter().enumerate() {
            if !matches!(block.component, Component::DelayBuffer { .. }) {
                index.insert((n, b), keys.len());
                keys.push((n, b));
            }
        }
    }
    let mut sender = vec![None; g.links.len()];
    for (n, node) in g.nodes.iter().enumerate() {
        for (b, block) in node.blocks.iter().enumerate() {
            if let Component::Disseminator { routes, .. } = &block.component {
                for r in routes {
                    sender[r.link] = Some((n, b));
                }
            }
        }
    }

    let mut succ = vec![Vec::new(); keys.len()];
    let mut indeg = vec![0usize; keys.len()];
    for (k, &(n, b)) in keys.iter().enumerate() {
        let comp = &g.nodes[n].blocks[b].component;
        let mut deps: Vec<(NodeId, BlockId)> = comp
            .input_ports()
            .into_iter()
            .filter_map(|p| match p {
                Port::Output { block, .. } => Some((n, block)),
                Port::Measurement => None,
            })
            .collect();
        if let Component::Collector { assembly, .. } = comp {
            deps.extend(assembly.iter().filter_map(|p| match p.source {
                PartSource::Link(l) => sender[l],
                PartSource::Local(_) => None,
            }));
        }
        for d in deps {
            if let Some(&di) = index.get(&d) {
                succ[di].push(k);
                indeg[k] += 1;
            }
        }
    }

    let mut phases = Vec::new();
    let mut ready: Vec<usize> = (0..keys.len()).filter(|&k| indeg[k] == 0).collect();
    let mut done = 0;
    while !ready.is_empty() {
        ready.sort_unstable();
        done += ready.len();
        let mut next = Vec::new();
        for &k in &ready {
            for &s in &succ[k] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    next.push(s);
                }
            }
        }
        phases.push(ready.iter().map(|&k| keys[k]).collect());
        ready = next;
    }
    if done != keys.len() {
        let stuck = (0..keys.len()).find(|&k| indeg[k] > 0).expect("some block is stuck");
        return Err(Error::ScheduleCycle(g.nodes[keys[stuck].0].name.clone()));
    }
    Ok(phases)
}

// ---------------------------------------------------------------------------
// Builders

struct NodeBuilder {
    node: Node,
}

impl NodeBuilder {
    fn new(name: String, kind: NodeKind) -> Self {
        NodeBuilder {
            node: Node {
                name,
                kind,
                blocks: Vec::new(),
                plant_input: None,
            },
        }
    }

    fn add(&mut self, label: impl Into<String>, component: Component) -> BlockId {
        self.node.blocks.push(Block {
            label: label.into(),
            component,
        });
        self.node.blocks.len() - 1
    }

    fn buffer(&mut self, label: impl Into<String>, input: Port) -> BlockId {
        self.add(label, Component::Buffer { dim: input.len(), input })
    }

    /// Delay buffer whose input is wired later with [`Self::set_input`].
    fn delay(&mut self, label: impl Into<String>, dim: usize) -> BlockId {
        self.add(
            label,
            Component::DelayBuffer {
                dim,
                input: Port::all(usize::MAX, dim),
            },
        )
    }

    fn set_input(&mut self, block: BlockId, port: Port) {
        if let Component::DelayBuffer { input, .. } = &mut self.node.blocks[block].component {
            *input = port;
        }
    }

    fn multiplier(&mut self, store: &MatrixStore, matrix: MatrixRef, input: Port) -> BlockId {
        let m = store.resolve(matrix).expect("builders only reference stored matrices");
        self.add(
            matrix.to_string(),
            Component::Multiplier {
                matrix,
                rows: m.nrows(),
                cols: m.ncols(),
                input,
            },
        )
    }

    fn adder(&mut self, label: impl Into<String>, dim: usize, inputs: Vec<Port>) -> BlockId {
        self.add(label, Component::Adder { dim, inputs })
    }

    fn out(&self, block: BlockId) -> Port {
        Port::all(block, self.node.blocks[block].component.output_dim())
    }
}

struct GraphBuilder {
    arch: Architecture,
    nx: usize,
    nu: usize,
    horizon: usize,
    store: MatrixStore,
    names: Vec<String>,
    links: Vec<Link>,
    link_index: BTreeMap<(NodeId, NodeId), LinkId>,
}

impl GraphBuilder {
    fn new(arch: Architecture, sys: &LtiSystem, phi_u: &[DMatrix<f64>], phi_x: Option<&[DMatrix<f64>]>) -> Result<Self> {
        check_phi_u(sys, phi_u)?;
        let (nx, nu) = (sys.nx(), sys.nu());
        let mut names: Vec<String> = (0..nx).map(|i| format!("s{i}")).collect();
        names.extend((0..nu).map(|k| format!("a{k}")));
        match arch {
            Architecture::Centralized | Architecture::Original => names.push("controller".into()),
            Architecture::GlobalState => names.push("gsk".into()),
            _ => {}
        }
        Ok(GraphBuilder {
            arch,
            nx,
            nu,
            horizon: phi_u.len(),
            store: MatrixStore {
                a: sys.a().clone(),
                b: sys.b().clone(),
                phi_u: phi_u.to_vec(),
                phi_x: phi_x.map(<[_]>::to_vec),
            },
            names,
            links: Vec::new(),
            link_index: BTreeMap::new(),
        })
    }

    fn sensor(&self, i: usize) -> NodeId {
        i
    }

    fn actuator(&self, k: usize) -> NodeId {
        self.nx + k
    }

    fn hub(&self) -> NodeId {
        self.nx + self.nu
    }

    fn node(&self, id: NodeId) -> NodeBuilder {
        let kind = if id < self.nx {
            NodeKind::Sensor(id)
        } else if id < self.nx + self.nu {
            NodeKind::Actuator(id - self.nx)
        } else if self.arch == Architecture::GlobalState {
            NodeKind::Gsk
        } else {
            NodeKind::CentralController
        };
        NodeBuilder::new(self.names[id].clone(), kind)
    }

    fn link(&mut self, src: NodeId, dst: NodeId, dim: usize) -> LinkId {
        *self.link_index.entry((src, dst)).or_insert_with(|| {
            self.links.push(Link { src, dst, dim });
            self.links.len() - 1
        })
    }

    /// `true` when `Φu[τ][k, i]` is nonzero for some τ.
    fn phi_u_couples(&self, k: usize, i: usize) -> bool {
        self.store.phi_u.iter().any(|m| m[(k, i)] != 0.0)
    }

    fn finish(self, nodes: Vec<Node>, delta_probes: Vec<DeltaProbe>) -> Result<ArchitectureGraph> {
        let mut g = ArchitectureGraph {
            architecture: self.arch,
            nx: self.nx,
            nu: self.nu,
            horizon: self.horizon,
            matrices: self.store,
            nodes,
            links: self.links,
            schedule: Vec::new(),
            delta_probes,
        };
        g.validate()?;
        g.schedule = compute_schedule(&g)?;
        Ok(g)
    }
}

fn check_phi_u(sys: &LtiSystem, phi_u: &[DMatrix<f64>]) -> Result<()> {
    if phi_u.is_empty() {
        return Err(Error::dim("architecture builder: phi_u", ">= 1 block", 0));
    }
    if let Some(bad) = phi_u.iter().find(|m| m.shape() != (sys.nu(), sys.nx())) {
        return Err(Error::dim(
            "architecture builder: phi_u",
            format!("{}x{}", sys.nu(), sys.nx()),
            format!("{:?}", bad.shape()),
        ));
    }
    Ok(())
}

/// `T`-long line `δ[t], δ[t-1], .., δ[t-T+1]`: one buffer fed by `input`
/// followed by `T - 1` delay buffers. Returns the block ids, newest first.
fn delta_line(nb: &mut NodeBuilder, label: &str, input: Port, horizon: usize) -> Vec<BlockId> {
    let mut line = vec![nb.buffer(format!("{label}[t]"), input)];
    for lag in 1..horizon {
        let d = nb.delay(format!("{label}[t-{lag}]"), input.len());
        let prev = nb.out(line[lag - 1]);
        nb.set_input(d, prev);
        line.push(d);
    }
    line
}

/// Sensor endpoint of the centralized architectures: forwards `x_i[t]`.
fn passthrough_sensor(gb: &mut GraphBuilder, i: usize) -> Node {
    let s = gb.sensor(i);
    let mut nb = gb.node(s);
    let link = gb.link(s, gb.hub(), 1);
    nb.add(
        "send x_i",
        Component::Disseminator {
            input: Port::Measurement,
            routes: vec![Route { link, indices: vec![0] }],
            dense_scalars: 1,
        },
    );
    nb.node
}

/// Actuator endpoint of the centralized architectures: applies `u_k[t]`.
fn passthrough_actuator(gb: &mut GraphBuilder, k: usize) -> Node {
    let a = gb.actuator(k);
    let mut nb = gb.node(a);
    let link = gb.link(gb.hub(), a, 1);
    let c = nb.add(
        "collect u_k",
        Component::Collector {
            dim: 1,
            assembly: vec![Part {
                source: PartSource::Link(link),
                positions: vec![0],
            }],
        },
    );
    nb.node.plant_input = Some(nb.out(c));
    nb.node
}

/// Collects `x[t]` from all sensors into a buffer on the hub.
fn hub_state_input(gb: &mut GraphBuilder, nb: &mut NodeBuilder) -> BlockId {
    let hub = gb.hub();
    let assembly = (0..gb.nx)
        .map(|i| Part {
            source: PartSource::Link(gb.link(gb.sensor(i), hub, 1)),
            positions: vec![i],
        })
        .collect();
    let col = nb.add("collect x", Component::Collector { dim: gb.nx, assembly });
    nb.buffer("x[t]", nb.out(col))
}

fn hub_dispatch(gb: &mut GraphBuilder, nb: &mut NodeBuilder, u: BlockId) {
    let hub = gb.hub();
    let routes = (0..gb.nu)
        .map(|k| Route {
            link: gb.link(hub, gb.actuator(k), 1),
            indices: vec![k],
        })
        .collect();
    nb.add(
        "send u",
        Component::Disseminator {
            input: nb.out(u),
            routes,
            dense_scalars: gb.nu,
        },
    );
}

/// `u = Σ_τ M_τ line[τ-1]` into a buffer of length `rows`.
fn convolution(
    gb: &GraphBuilder,
    nb: &mut NodeBuilder,
    line: &[BlockId],
    kernel: impl Fn(usize) -> MatrixRef,
    rows: usize,
    label: &str,
) -> BlockId {
    let products: Vec<Port> = line
        .iter()
        .enumerate()
        .map(|(lag, &d)| {
            let m = nb.multiplier(&gb.store, kernel(lag + 1), nb.out(d));
            nb.out(m)
        })
        .collect();
    let sum = nb.adder(format!("sum {label}"), rows, products);
    nb.buffer(label, nb.out(sum))
}

/// Central node running `δ[t] = x[t] - A x[t-1] - B u[t-1]` and the `Φu`
/// convolution.
///
/// Storage: `x[t]` (Nx), `δ` line (T·Nx), `u[t]` (Nu), and the two delayed
/// products `-A x`, `-B u` (Nx each); multipliers `-A`, `-B`, `Φu[1..T]`.
pub fn build_centralized(sys: &LtiSystem, phi_u: &[DMatrix<f64>]) -> Result<ArchitectureGraph> {
    let mut gb = GraphBuilder::new(Architecture::Centralized, sys, phi_u, None)?;
    let (nx, nu, t) = (gb.nx, gb.nu, gb.horizon);
    let mut nodes: Vec<Node> = (0..nx).map(|i| passthrough_sensor(&mut gb, i)).collect();
    nodes.extend((0..nu).map(|k| passthrough_actuator(&mut gb, k)));

    let mut nb = gb.node(gb.hub());
    let x = hub_state_input(&mut gb, &mut nb);
    let ax = nb.delay("-A x[t-1]", nx);
    let bu = nb.delay("-B u[t-1]", nx);
    let sum = nb.adder("delta", nx, vec![nb.out(x), nb.out(ax), nb.out(bu)]);
    let input = nb.out(sum);
    let line = delta_line(&mut nb, "delta", input, t);
    let u = convolution(&gb, &mut nb, &line, MatrixRef::PhiU, nu, "u[t]");
    let ma = nb.multiplier(&gb.store, MatrixRef::NegA, nb.out(x));
    let mb = nb.multiplier(&gb.store, MatrixRef::NegB, nb.out(u));
    nb.set_input(ax, nb.out(ma));
    nb.set_input(bu, nb.out(mb));
    hub_dispatch(&mut gb, &mut nb, u);
    let probe = DeltaProbe {
        node: gb.hub(),
        port: nb.out(line[0]),
        indices: (0..nx).collect(),
    };
    nodes.push(nb.node);
    gb.finish(nodes, vec![probe])
}

/// Central node running `δ = x - x̂`, the `Φu` convolution, and the
/// `-Φx[2..T]` convolution that produces `-x̂[t+1]`. `Φx[1] = I` needs no
/// multiplier.
///
/// Storage: `x[t]` (Nx), `δ` line (T·Nx), `-x̂[t+1]` (Nx), `u[t]` (Nu).
pub fn build_original_centralized(sys: &LtiSystem, resp: &SystemResponse) -> Result<ArchitectureGraph> {
    if resp.nx() != sys.nx() || resp.nu() != sys.nu() {
        return Err(Error::dim(
            "build_original_centralized",
            format!("Nx={} Nu={}", sys.nx(), sys.nu()),
            format!("Nx={} Nu={}", resp.nx(), resp.nu()),
        ));
    }
    let mut gb = GraphBuilder::new(
        Architecture::Original,
        sys,
        resp.phi_u_blocks(),
        Some(resp.phi_x_blocks()),
    )?;
    let (nx, nu, t) = (gb.nx, gb.nu, gb.horizon);
    let mut nodes: Vec<Node> = (0..nx).map(|i| passthrough_sensor(&mut gb, i)).collect();
    nodes.extend((0..nu).map(|k| passthrough_actuator(&mut gb, k)));

    let mut nb = gb.node(gb.hub());
    let x = hub_state_input(&mut gb, &mut nb);
    let neg_xhat = nb.delay("-xhat[t]", nx);
    let sum = nb.adder("delta", nx, vec![nb.out(x), nb.out(neg_xhat)]);
    let input = nb.out(sum);
    let line = delta_line(&mut nb, "delta", input, t);
    let u = convolution(&gb, &mut nb, &line, MatrixRef::PhiU, nu, "u[t]");
    let products: Vec<Port> = (2..=t)
        .map(|tau| {
            let m = nb.multiplier(&gb.store, MatrixRef::NegPhiX(tau), nb.out(line[tau - 2]));
            nb.out(m)
        })
        .collect();
    let xhat = nb.adder("-xhat[t+1]", nx, products);
    nb.set_input(neg_xhat, nb.out(xhat));
    hub_dispatch(&mut gb, &mut nb, u);
    let probe = DeltaProbe {
        node: gb.hub(),
        port: nb.out(line[0]),
        indices: (0..nx).collect(),
    };
    nodes.push(nb.node);
    gb.finish(nodes, vec![probe])
}

/// Sensor front end shared by the three non-centralized architectures.
///
/// Computes `δ_i[t] = x_i[t] + (-A[i,:] x[t-1]) + (-B[i,:] u[t-1])` from
/// neighbor messages. Storage: `x_i` (1), `-A[:,i] x_i` (Nx), the two delayed
/// partial sums (1 each), `δ_i` (1); multiplier `-A[:,i]`.
fn sensor_front_end(gb: &mut GraphBuilder, i: usize) -> (NodeBuilder, BlockId) {
    let (nx, nu) = (gb.nx, gb.nu);
    let s = gb.sensor(i);
    let mut nb = gb.node(s);
    let x = nb.buffer("x_i[t]", Port::Measurement);
    let ma = nb.multiplier(&gb.store, MatrixRef::NegAColumn(i), nb.out(x));
    let ax = nb.buffer("-A[:,i] x_i[t]", nb.out(ma));

    let a = gb.store.a.clone();
    let routes = (0..nx)
        .filter(|&j| j != i && a[(j, i)] != 0.0)
        .map(|j| Route {
            link: gb.link(s, gb.sensor(j), 1),
            indices: vec![j],
        })
        .collect();
    nb.add(
        "send -A[j,i] x_i",
        Component::Disseminator {
            input: nb.out(ax),
            routes,
            dense_scalars: nx - 1,
        },
    );

    let mut assembly = vec![Part {
        source: PartSource::Local(Port::entry(ax, i)),
        positions: vec![0],
    }];
    for j in (0..nx).filter(|&j| j != i && a[(i, j)] != 0.0) {
        let pos = assembly.len();
        assembly.push(Part {
            source: PartSource::Link(gb.link(gb.sensor(j), s, 1)),
            positions: vec![pos],
        });
    }
    let n_a = assembly.len();
    let col_a = nb.add("collect -A[i,j] x_j", Component::Collector { dim: n_a, assembly });
    let sum_a = nb.adder("sum -A[i,:] x", 1, (0..n_a).map(|p| Port::entry(col_a, p)).collect());
    let asum = nb.delay("-A[i,:] x[t-1]", 1);
    nb.set_input(asum, nb.out(sum_a));

    let b = gb.store.b.clone();
    let assembly: Vec<Part> = (0..nu)
        .filter(|&k| b[(i, k)] != 0.0)
        .enumerate()
        .map(|(pos, k)| Part {
            source: PartSource::Link(gb.link(gb.actuator(k), s, 1)),
            positions: vec![pos],
        })
        .collect();
    let n_b = assembly.len();
    let col_b = nb.add("collect -B[i,k] u_k", Component::Collector { dim: n_b, assembly });
    let sum_b = nb.adder("sum -B[i,:] u", 1, (0..n_b).map(|p| Port::entry(col_b, p)).collect());
    let bsum = nb.delay("-B[i,:] u[t-1]", 1);
    nb.set_input(bsum, nb.out(sum_b));

    let d = nb.adder("delta_i", 1, vec![nb.out(x), nb.out(asum), nb.out(bsum)]);
    let delta = nb.buffer("delta_i[t]", nb.out(d));
    (nb, delta)
}

/// Actuator back end: `-B[:,k] u_k` sent to the sensors with `B[i,k] ≠ 0`.
/// Storage: `-B[:,k] u_k` (Nx); multiplier `-B[:,k]`.
fn actuator_feedback(gb: &mut GraphBuilder, nb: &mut NodeBuilder, k: usize, u: BlockId) {
    let a = gb.actuator(k);
    let mb = nb.multiplier(&gb.store, MatrixRef::NegBColumn(k), nb.out(u));
    let bu = nb.buffer("-B[:,k] u_k[t]", nb.out(mb));
    let b = gb.store.b.clone();
    let routes = (0..gb.nx)
        .filter(|&i| b[(i, k)] != 0.0)
        .map(|i| Route {
            link: gb.link(a, gb.sensor(i), 1),
            indices: vec![i],
        })
        .collect();
    nb.add(
        "send -B[i,k] u_k",
        Component::Disseminator {
            input: nb.out(bu),
            routes,
            dense_scalars: gb.nx,
        },
    );
    nb.node.plant_input = Some(nb.out(u));
}

/// Actuator that assembles `δ[t]` from `sources` (link, state indices) and
/// runs the row convolution `u_k[t] = Σ_τ Φu[τ][k,:] δ[t+1-τ]`.
///
/// Storage: `δ` line (T·Nx), `u_k` (1), `-B[:,k] u_k` (Nx).
fn convolving_actuator(gb: &mut GraphBuilder, k: usize, sources: Vec<(LinkId, Vec<usize>)>) -> Node {
    let mut nb = gb.node(gb.actuator(k));
    let assembly = sources
        .into_iter()
        .map(|(link, positions)| Part {
            source: PartSource::Link(link),
            positions,
        })
        .collect();
    let col = nb.add("collect delta", Component::Collector { dim: gb.nx, assembly });
    let input = nb.out(col);
    let line = delta_line(&mut nb, "delta", input, gb.horizon);
    let u = convolution(gb, &mut nb, &line, |tau| MatrixRef::PhiURow { tau, row: k }, 1, "u_k[t]");
    actuator_feedback(gb, &mut nb, k, u);
    nb.node
}

fn sensor_probe(i: usize, delta: BlockId) -> DeltaProbe {
    DeltaProbe {
        node: i,
        port: Port::all(delta, 1),
        indices: vec![i],
    }
}

/// Sensors compute `δ_i` and report to a global state keeper, which stores
/// `δ[t]` (Nx) and forwards to each actuator the entries its `Φu` row uses.
pub fn build_global_state(sys: &LtiSystem, phi_u: &[DMatrix<f64>]) -> Result<ArchitectureGraph> {
    let mut gb = GraphBuilder::new(Architecture::GlobalState, sys, phi_u, None)?;
    let (nx, nu) = (gb.nx, gb.nu);
    let gsk = gb.hub();
    let mut nodes = Vec::new();
    let mut probes = Vec::new();
    for i in 0..nx {
        let (mut nb, delta) = sensor_front_end(&mut gb, i);
        let link = gb.link(gb.sensor(i), gsk, 1);
        nb.add(
            "send delta_i",
            Component::Disseminator {
                input: nb.out(delta),
                routes: vec![Route { link, indices: vec![0] }],
                dense_scalars: 1,
            },
        );
        probes.push(sensor_probe(i, delta));
        nodes.push(nb.node);
    }

    let used: Vec<Vec<usize>> = (0..nu)
        .map(|k| (0..nx).filter(|&i| gb.phi_u_couples(k, i)).collect())
        .collect();
    let mut nb = gb.node(gsk);
    let assembly = (0..nx)
        .map(|i| Part {
            source: PartSource::Link(gb.link(gb.sensor(i), gsk, 1)),
            positions: vec![i],
        })
        .collect();
    let col = nb.add("collect delta", Component::Collector { dim: nx, assembly });
    let delta = nb.buffer("delta[t]", nb.out(col));
    let routes = (0..nu)
        .filter(|&k| !used[k].is_empty())
        .map(|k| Route {
            link: gb.link(gsk, gb.actuator(k), used[k].len()),
            indices: used[k].clone(),
        })
        .collect();
    nb.add(
        "send delta",
        Component::Disseminator {
            input: nb.out(delta),
            routes,
            dense_scalars: nx * nu,
        },
    );
    let gsk_node = nb.node;

    for (k, idx) in used.into_iter().enumerate() {
        let sources = if idx.is_empty() {
            Vec::new()
        } else {
            vec![(gb.link(gsk, gb.actuator(k), idx.len()), idx)]
        };
        nodes.push(convolving_actuator(&mut gb, k, sources));
    }
    nodes.push(gsk_node);
    gb.finish(nodes, probes)
}

/// The global state architecture without its keeper: sensor `i` sends `δ_i`
/// directly to every actuator whose `Φu` row touches state `i`.
pub fn build_naive_distributed(sys: &LtiSystem, phi_u: &[DMatrix<f64>]) -> Result<ArchitectureGraph> {
    let mut gb = GraphBuilder::new(Architecture::Naive, sys, phi_u, None)?;
    let (nx, nu) = (gb.nx, gb.nu);
    let mut nodes = Vec::new();
    let mut probes = Vec::new();
    for i in 0..nx {
        let (mut nb, delta) = sensor_front_end(&mut gb, i);
        let coupled: Vec<usize> = (0..nu).filter(|&k| gb.phi_u_couples(k, i)).collect();
        let routes = coupled
            .into_iter()
            .map(|k| Route {
                link: gb.link(gb.sensor(i), gb.actuator(k), 1),
                indices: vec![0],
            })
            .collect();
        nb.add(
            "send delta_i",
            Component::Disseminator {
                input: nb.out(delta),
                routes,
                dense_scalars: nu,
            },
        );
        probes.push(sensor_probe(i, delta));
        nodes.push(nb.node);
    }
    for k in 0..nu {
        let coupled: Vec<usize> = (0..nx).filter(|&i| gb.phi_u_couples(k, i)).collect();
        let sources = coupled
            .into_iter()
            .map(|i| (gb.link(gb.sensor(i), gb.actuator(k), 1), vec![i]))
            .collect();
        nodes.push(convolving_actuator(&mut gb, k, sources));
    }
    gb.finish(nodes, probes)
}

/// Sensor `i` convolves its own `δ_i` with the columns `Φu[τ][:, i]` and sends
/// actuator `k` the partial sum `Σ_τ Φu[τ][k,i] δ_i[t+1-τ]`; actuators add the
/// partial sums.
///
/// Extra sensor storage: `δ_i` delay line (T-1) and the partial sums (Nu).
/// Actuator storage: `u_k` (1), `-B[:,k] u_k` (Nx).
pub fn build_memory_conservative(sys: &LtiSystem, phi_u: &[DMatrix<f64>]) -> Result<ArchitectureGraph> {
    let mut gb = GraphBuilder::new(Architecture::Conservative, sys, phi_u, None)?;
    let (nx, nu, t) = (gb.nx, gb.nu, gb.horizon);
    let mut nodes = Vec::new();
    let mut probes = Vec::new();
    for i in 0..nx {
        let (mut nb, delta) = sensor_front_end(&mut gb, i);
        let mut line = vec![delta];
        for lag in 1..t {
            let d = nb.delay(format!("delta_i[t-{lag}]"), 1);
            let prev = nb.out(line[lag - 1]);
            nb.set_input(d, prev);
            line.push(d);
        }
        let conv = convolution(&gb, &mut nb, &line, |tau| MatrixRef::PhiUColumn { tau, col: i }, nu, "partial u");
        let coupled: Vec<usize> = (0..nu).filter(|&k| gb.phi_u_couples(k, i)).collect();
        let routes = coupled
            .into_iter()
            .map(|k| Route {
                link: gb.link(gb.sensor(i), gb.actuator(k), 1),
                indices: vec![k],
            })
            .collect();
        nb.add(
            "send partial u_k",
            Component::Disseminator {
                input: nb.out(conv),
                routes,
                dense_scalars: nu,
            },
        );
        probes.push(sensor_probe(i, delta));
        nodes.push(nb.node);
    }
    for k in 0..nu {
        let mut nb = gb.node(gb.actuator(k));
        let coupled: Vec<usize> = (0..nx).filter(|&i| gb.phi_u_couples(k, i)).collect();
        let assembly: Vec<Part> = coupled
            .into_iter()
            .enumerate()
            .map(|(pos, i)| Part {
                source: PartSource::Link(gb.link(gb.sensor(i), gb.actuator(k), 1)),
                positions: vec![pos],
            })
            .collect();
        let n = assembly.len();
        let col = nb.add("collect partial u_k", Component::Collector { dim: n, assembly });
        let sum = nb.adder("sum partial u_k", 1, (0..n).map(|p| Port::entry(col, p)).collect());
        let u = nb.buffer("u_k[t]", nb.out(sum));
        actuator_feedback(&mut gb, &mut nb, k, u);
        nodes.push(nb.node);
    }
    gb.finish(nodes, probes)
}

/// Builds `arch` for `sys` from an achievable response.
pub fn build(arch: Architecture, sys: &LtiSystem, resp: &SystemResponse) -> Result<ArchitectureGraph> {
    match arch {
        Architecture::Centralized => build_centralized(sys, resp.phi_u_blocks()),
        Architecture::Original => build_original_centralized(sys, resp),
        Architecture::GlobalState => build_global_state(sys, resp.phi_u_blocks()),
        Architecture::Naive => build_naive_distributed(sys, resp.phi_u_blocks()),
        Architecture::Conservative => build_memory_conservative(sys, resp.phi_u_blocks()),
    }
}

// ---------------------------------------------------------------------------
// Cost accounting

/// Scalar counts for one node or a whole graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// `buffer_scalars + multiplier_scalars`.
    pub memory_scalars: usize,
    /// Buffers and delay buffers.
    pub buffer_scalars: usize,
    /// Stored multiplier matrix entries.
    pub multiplier_scalars: usize,
    pub mults_per_step: usize,
    /// Scalars this node sends per step.
    pub comm_scalars_per_step: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.memory_scalars += o.memory_scalars;
        self.buffer_scalars += o.buffer_scalars;
        self.multiplier_scalars += o.multiplier_scalars;
        self.mults_per_step += o.mults_per_step;
        self.comm_scalars_per_step += o.comm_scalars_per_step;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCost {
    pub node: String,
    /// Every matrix treated as dense and every potential message sent.
    pub dense: Counts,
    /// Only nonzero multiplier entries and the links actually present.
    pub nnz: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub architecture: Architecture,
    pub per_node: Vec<NodeCost>,
    pub dense: Counts,
    pub nnz: Counts,
}

impl CostReport {
    /// Largest per-node memory footprint (dense).
    pub fn max_node_memory(&self) -> usize {
        self.per_node.iter().map(|n| n.dense.memory_scalars).max().unwrap_or(0)
    }
}

/// Static traversal of `graph`. Adders and collectors hold no storage; each
/// multiplier fires once per step, so its stored entries equal its
/// multiplications.
pub fn cost_report(graph: &ArchitectureGraph) -> Result<CostReport> {
    let mut per_node = Vec::with_capacity(graph.nodes.len());
    let mut dense = Counts::default();
    let mut nnz = Counts::default();
    for node in &graph.nodes {
        let mut d = Counts::default();
        let mut z = Counts::default();
        for block in &node.blocks {
            match &block.component {
                Component::Buffer { dim, .. } | Component::DelayBuffer { dim, .. } => {
                    d.buffer_scalars += dim;
                    z.buffer_scalars += dim;
                }
                Component::Multiplier { matrix, rows, cols, .. } => {
                    let m = graph.matrices.resolve(*matrix)?;
                    let nonzero = m.iter().filter(|v| **v != 0.0).count();
                    d.multiplier_scalars += rows * cols;
                    d.mults_per_step += rows * cols;
                    z.multiplier_scalars += nonzero;
                    z.mults_per_step += nonzero;
                }
                Component::Disseminator { routes, dense_scalars, .. } => {
                    d.comm_scalars_per_step += dense_scalars;
                    z.comm_scalars_per_step += routes.iter().map(|r| r.indices.len()).sum::<usize>();
                }
                Component::Adder { .. } | Component::Collector { .. } => {}
            }
        }
        d.memory_scalars = d.buffer_scalars + d.multiplier_scalars;
        z.memory_scalars = z.buffer_scalars + z.multiplier_scalars;
        dense += d;
        nnz += z;
        per_node.push(NodeCost {
            node: node.name.clone(),
            dense: d,
            nnz: z,
        });
    }
    Ok(CostReport {
        architecture: graph.architecture,
        per_node,
        dense,
        nnz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_instance(nx: usize, nu: usize, t: usize) -> (LtiSystem, Vec<DMatrix<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64((nx * 100 + nu * 10 + t) as u64);
        let sys = LtiSystem::random_stable(&mut rng, nx, nu, 0.8);
        let phi_u = (0..t).map(|tau| DMatrix::from_fn(nu, nx, |k, i| 1.0 + (tau + k + i) as f64)).collect();
        (sys, phi_u)
    }

    #[test]
    fn centralized_structure() {
        let (sys, pu) = dense_instance(2, 1, 4);
        let g = build_centralized(&sys, &pu).unwrap();
        assert_eq!(g.nodes.len(), 4);
        let hub = g.node_id("controller").unwrap();
        let phi = g.nodes[hub]
            .blocks
            .iter()
            .filter(|b| matches!(b.component, Component::Multiplier { matrix: MatrixRef::PhiU(_), .. }))
            .count();
        assert_eq!(phi, 4);
        let rep = cost_report(&g).unwrap();
        assert_eq!(rep.dense.comm_scalars_per_step, 3);
        assert_eq!(rep.dense.mults_per_step, 14);
        assert_eq!(rep.dense.memory_scalars, 29);
    }

    #[test]
    fn original_counts() {
        let (sys, pu) = dense_instance(2, 1, 4);
        let px: Vec<DMatrix<f64>> = (0..4).map(|_| DMatrix::from_element(2, 2, 1.0)).collect();
        let resp = SystemResponse::new(px, pu).unwrap();
        let rep = cost_report(&build_original_centralized(&sys, &resp).unwrap()).unwrap();
        assert_eq!(rep.dense.mults_per_step, 20);
        assert_eq!(rep.dense.memory_scalars, 33);
    }

    #[test]
    fn distributed_buffer_counts() {
        let (sys, pu) = dense_instance(2, 2, 4);
        let naive = cost_report(&build_naive_distributed(&sys, &pu).unwrap()).unwrap();
        let cons = cost_report(&build_memory_conservative(&sys, &pu).unwrap()).unwrap();
        assert_eq!(naive.dense.buffer_scalars, 34);
        assert_eq!(cons.dense.buffer_scalars, 28);
        for n in &naive.per_node {
            let expect = if n.node.starts_with('s') { 2 + 4 } else { 5 * 2 + 1 };
            assert_eq!(n.dense.buffer_scalars, expect, "{}", n.node);
        }
        let (sys, pu) = dense_instance(2, 1, 4);
        let gs = cost_report(&build_global_state(&sys, &pu).unwrap()).unwrap();
        assert_eq!(gs.dense.memory_scalars, 14 + 23 + 2);
    }

    #[test]
    fn global_state_links_follow_sparsity() {
        let sys = LtiSystem::new(
            dmatrix![0.5, 0.0, 0.1; 0.2, 0.5, 0.0; 0.0, 0.0, 0.5],
            dmatrix![1.0, 0.0; 0.0, 0.0; 0.0, 1.0],
        )
        .unwrap();
        let pu = vec![DMatrix::from_element(2, 3, 0.1)];
        let g = build_global_state(&sys, &pu).unwrap();
        let has = |s: &str, d: &str| {
            let (s, d) = (g.node_id(s).unwrap(), g.node_id(d).unwrap());
            g.links.iter().any(|l| l.src == s && l.dst == d)
        };
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(has(&format!("s{j}"), &format!("s{i}")), sys.a()[(i, j)] != 0.0);
                }
            }
            for k in 0..2 {
                assert_eq!(has(&format!("a{k}"), &format!("s{i}")), sys.b()[(i, k)] != 0.0);
            }
        }
    }

    #[test]
    fn zero_column_prunes_conservative_link() {
        let (sys, mut pu) = dense_instance(3, 2, 3);
        for m in &mut pu {
            m.column_mut(1).fill(0.0);
        }
        let g = build_memory_conservative(&sys, &pu).unwrap();
        let s1 = g.node_id("s1").unwrap();
        assert!(g
            .outgoing(s1)
            .all(|(_, l)| !matches!(g.nodes[l.dst].kind, NodeKind::Actuator(_))));
        let rep = cost_report(&g).unwrap();
        assert!(rep.nnz.comm_scalars_per_step < rep.dense.comm_scalars_per_step);
        assert!(rep.nnz.multiplier_scalars < rep.dense.multiplier_scalars);
    }

    #[test]
    fn empty_graph_costs_nothing() {
        let (sys, pu) = dense_instance(1, 1, 1);
        let mut g = build_centralized(&sys, &pu).unwrap();
        for n in &mut g.nodes {
            n.blocks.clear();
        }
        let rep = cost_report(&g).unwrap();
        assert_eq!(rep.dense, Counts::default());
        assert_eq!(rep.nnz, Counts::default());
    }

    #[test]
    fn dangling_matrix_reference_is_reported() {
        let (sys, pu) = dense_instance(2, 1, 2);
        let mut g = build_centralized(&sys, &pu).unwrap();
        let hub = g.node_id("controller").unwrap();
        for b in &mut g.nodes[hub].blocks {
            if let Component::Multiplier { matrix, .. } = &mut b.component {
                *matrix = MatrixRef::PhiU(9);
                break;
            }
        }
        assert!(matches!(cost_report(&g), Err(Error::DanglingMatrix(_))));
    }

    #[test]
    fn cycles_are_detected() {
        let (sys, pu) = dense_instance(1, 1, 1);
        let mut g = build_centralized(&sys, &pu).unwrap();
        let hub = g.node_id("controller").unwrap();
        // Feed the delta adder from u[t] directly instead of through a delay.
        let u = g.nodes[hub].blocks.iter().position(|b| b.label == "u[t]").unwrap();
        for b in &mut g.nodes[hub].blocks {
            if let Component::Adder { inputs, .. } = &mut b.component {
                if b.label == "delta" {
                    inputs[2] = Port::all(u, 1);
                }
            }
        }
        assert!(matches!(compute_schedule(&g), Err(Error::ScheduleCycle(_))));
    }

    #[test]
    fn graphs_round_trip_through_json() {
        let (sys, pu) = dense_instance(2, 2, 3);
        for g in [
            build_centralized(&sys, &pu).unwrap(),
            build_global_state(&sys, &pu).unwrap(),
            build_memory_conservative(&sys, &pu).unwrap(),
        ] {
            let json = serde_json::to_string(&g).unwrap();
            assert_eq!(ArchitectureGraph::from_json(&json).unwrap(), g);
        }
    }

    #[test]
    fn architecture_names_parse() {
        for a in Architecture::ALL {
            assert_eq!(a.name().parse::<Architecture>().unwrap(), a);
        }
        assert!("mesh".parse::<Architecture>().is_err());
    }
}
