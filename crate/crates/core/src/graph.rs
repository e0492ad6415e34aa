//! Layered task graphs.
//!
//! A [`TaskGraph`] is a layered DAG with a single start node on top and the
//! terminals in the last layer. A learner moves straight down or diagonally
//! down, collecting the reward of every node it visits. Edges are kept in
//! canonical order (lexicographic by `(parent, child)`); that order defines
//! the bit positions of an [`EdgeSet`] and every edge index used elsewhere.
//!
//! Layers are laid out centered on a common axis, so a node at position `p`
//! of a layer with `m` nodes sits above position `p + (m' - m) / 2` of the
//! next layer with `m'` nodes. A child is reachable when its position lies
//! within one step of that point. A lone start node over a three-wide layer
//! therefore reaches all three children.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// Bit width of [`EdgeSet`]; graphs with more edges are rejected.
pub const MAX_EDGES: usize = 64;

/// Suffix appended to the id of a horizontally flipped graph.
pub const FLIP_SUFFIX: &str = "~flip";

/// A directed edge `(parent, child)`. Serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(NodeId, NodeId)", into = "(NodeId, NodeId)")]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
}

impl Edge {
    pub const fn new(parent: NodeId, child: NodeId) -> Self {
        Self { parent, child }
    }
}

impl From<(NodeId, NodeId)> for Edge {
    fn from((parent, child): (NodeId, NodeId)) -> Self {
        Self { parent, child }
    }
}

impl From<Edge> for (NodeId, NodeId) {
    fn from(e: Edge) -> Self {
        (e.parent, e.child)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.parent, self.child)
    }
}

/// A broken [`TaskGraph`] invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    NoLayers,
    StartLayerSize { size: usize },
    EmptyLayer { layer: usize },
    DuplicateNode { node: NodeId },
    MissingReward { node: NodeId },
    UnknownRewardNode { node: NodeId },
    NegativeReward { node: NodeId, reward: i64 },
    UnknownEdgeNode { edge: Edge },
    LayerSkip { edge: Edge },
    DiagonalViolation { edge: Edge },
    DuplicateEdge { edge: Edge },
    UnsortedEdges,
    TooManyEdges { count: usize },
}

impl Violation {
    /// Short kebab-case tag, e.g. `diagonal-violation`.
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::NoLayers => "no-layers",
            Violation::StartLayerSize { .. } => "start-layer-size",
            Violation::EmptyLayer { .. } => "empty-layer",
            Violation::DuplicateNode { .. } => "duplicate-node",
            Violation::MissingReward { .. } => "missing-reward",
            Violation::UnknownRewardNode { .. } => "unknown-reward-node",
            Violation::NegativeReward { .. } => "negative-reward",
            Violation::UnknownEdgeNode { .. } => "unknown-edge-node",
            Violation::LayerSkip { .. } => "layer-skip",
            Violation::DiagonalViolation { .. } => "diagonal-violation",
            Violation::DuplicateEdge { .. } => "duplicate-edge",
            Violation::UnsortedEdges => "unsorted-edges",
            Violation::TooManyEdges { .. } => "too-many-edges",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StartLayerSize { size } => write!(f, "{}: layer 0 has {size} nodes", self.kind()),
            Violation::EmptyLayer { layer } => write!(f, "{}: layer {layer}", self.kind()),
            Violation::DuplicateNode { node }
            | Violation::MissingReward { node }
            | Violation::UnknownRewardNode { node } => write!(f, "{}: node {node}", self.kind()),
            Violation::NegativeReward { node, reward } => {
                write!(f, "{}: node {node} has reward {reward}", self.kind())
            }
            Violation::UnknownEdgeNode { edge }
            | Violation::LayerSkip { edge }
            | Violation::DiagonalViolation { edge }
            | Violation::DuplicateEdge { edge } => write!(f, "{}: edge {edge}", self.kind()),
            Violation::TooManyEdges { count } => {
                write!(f, "{}: {count} edges (max {MAX_EDGES})", self.kind())
            }
            Violation::NoLayers | Violation::UnsortedEdges => f.write_str(self.kind()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid graph {graph_id}: {}", join_violations(.violations))]
    Invalid { graph_id: String, violations: Vec<Violation> },
    #[error("edge {0} is not in the graph")]
    UnknownEdge(Edge),
    #[error("edge index {index} out of range for a graph with {len} edges")]
    EdgeIndexOutOfRange { index: usize, len: usize },
    #[error("edge set bound to graph {found}, expected {expected}")]
    GraphMismatch { expected: String, found: String },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("trajectory does not leave the start node")]
    TrajectoryStart,
    #[error("trajectory breaks at step {step}")]
    BrokenChain { step: usize },
    #[error("trajectory ends at node {node}, which is not terminal")]
    TrajectoryIncomplete { node: NodeId },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// The task environment: layered nodes, node rewards and the teacher's full
/// transition set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskGraph {
    graph_id: String,
    layers: Vec<Vec<NodeId>>,
    rewards: BTreeMap<NodeId, i64>,
    edges: Vec<Edge>,
}

impl TaskGraph {
    /// Builds a graph without checking invariants. Use [`TaskGraph::validate`]
    /// or [`TaskGraph::new`] before handing it to the planner.
    pub fn from_parts(
        graph_id: impl Into<String>,
        layers: Vec<Vec<NodeId>>,
        rewards: BTreeMap<NodeId, i64>,
        edges: Vec<Edge>,
    ) -> Self {
        Self { graph_id: graph_id.into(), layers, rewards, edges }
    }

    /// Builds a graph, sorting the edges into canonical order, and rejects it
    /// if any invariant fails.
    pub fn new(
        graph_id: impl Into<String>,
        layers: Vec<Vec<NodeId>>,
        rewards: BTreeMap<NodeId, i64>,
        mut edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        edges.sort_unstable();
        let g = Self::from_parts(graph_id, layers, rewards, edges);
        g.ensure_valid()?;
        Ok(g)
    }

    /// Builds the complete down/diagonal lattice over `layers`.
    pub fn lattice(
        graph_id: impl Into<String>,
        layers: Vec<Vec<NodeId>>,
        rewards: BTreeMap<NodeId, i64>,
    ) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for pair in layers.windows(2) {
            let (upper, lower) = (&pair[0], &pair[1]);
            for (p, &parent) in upper.iter().enumerate() {
                for (q, &child) in lower.iter().enumerate() {
                    if within_reach(p, upper.len(), q, lower.len()) {
                        edges.push(Edge::new(parent, child));
                    }
                }
            }
        }
        Self::new(graph_id, layers, rewards, edges)
    }

    pub fn graph_id(&self) -> &str {
        &self.graph_id
    }

    /// Id with any flip suffix removed; an original and its flip share it.
    pub fn base_id(&self) -> &str {
        self.graph_id.strip_suffix(FLIP_SUFFIX).unwrap_or(&self.graph_id)
    }

    pub fn is_flipped(&self) -> bool {
        self.graph_id.ends_with(FLIP_SUFFIX)
    }

    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    pub fn rewards(&self) -> &BTreeMap<NodeId, i64> {
        &self.rewards
    }

    pub fn reward(&self, node: NodeId) -> i64 {
        self.rewards.get(&node).copied().unwrap_or(0)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> Option<Edge> {
        self.edges.get(index).copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn start(&self) -> NodeId {
        self.layers[0][0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.layers.iter().flatten().copied()
    }

    /// Canonical index of `edge`.
    pub fn edge_index(&self, edge: Edge) -> Option<usize> {
        self.edges.binary_search(&edge).ok()
    }

    pub fn require_edge(&self, edge: Edge) -> Result<usize, GraphError> {
        self.edge_index(edge).ok_or(GraphError::UnknownEdge(edge))
    }

    /// `(layer, position)` of a node.
    pub fn position(&self, node: NodeId) -> Option<(usize, usize)> {
        self.layers.iter().enumerate().find_map(|(k, layer)| layer.iter().position(|&n| n == node).map(|p| (k, p)))
    }

    pub fn layer_of(&self, node: NodeId) -> Option<usize> {
        self.position(node).map(|(k, _)| k)
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.layers.last().is_some_and(|l| l.contains(&node))
    }

    /// Checks every invariant and reports all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.layers.is_empty() {
            out.push(Violation::NoLayers);
            return out;
        }
        if self.layers[0].len() != 1 {
            out.push(Violation::StartLayerSize { size: self.layers[0].len() });
        }
        let mut position: HashMap<NodeId, (usize, usize)> = HashMap::new();
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.is_empty() {
                out.push(Violation::EmptyLayer { layer: k });
            }
            for (p, &node) in layer.iter().enumerate() {
                if position.insert(node, (k, p)).is_some() {
                    out.push(Violation::DuplicateNode { node });
                }
            }
        }
        for node in self.nodes() {
            match self.rewards.get(&node) {
                None => out.push(Violation::MissingReward { node }),
                Some(&reward) if reward < 0 => out.push(Violation::NegativeReward { node, reward }),
                Some(_) => {}
            }
        }
        for &node in self.rewards.keys() {
            if !position.contains_key(&node) {
                out.push(Violation::UnknownRewardNode { node });
            }
        }
        let mut seen = BTreeSet::new();
        for &edge in &self.edges {
            if !seen.insert(edge) {
                out.push(Violation::DuplicateEdge { edge });
            }
            let (Some(&(kp, p)), Some(&(kc, q))) = (position.get(&edge.parent), position.get(&edge.child)) else {
                out.push(Violation::UnknownEdgeNode { edge });
                continue;
            };
            if kc != kp + 1 {
                out.push(Violation::LayerSkip { edge });
            } else if !within_reach(p, self.layers[kp].len(), q, self.layers[kc].len()) {
                out.push(Violation::DiagonalViolation { edge });
            }
        }
        if self.edges.windows(2).any(|w| w[0] > w[1]) {
            out.push(Violation::UnsortedEdges);
        }
        if self.edges.len() > MAX_EDGES {
            out.push(Violation::TooManyEdges { count: self.edges.len() });
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(GraphError::Invalid { graph_id: self.graph_id.clone(), violations })
        }
    }

    /// Node at the mirrored position of the same layer.
    pub fn mirror_node(&self, node: NodeId) -> Option<NodeId> {
        let (k, p) = self.position(node)?;
        let layer = &self.layers[k];
        Some(layer[layer.len() - 1 - p])
    }

    pub fn mirror_edge(&self, edge: Edge) -> Option<Edge> {
        Some(Edge::new(self.mirror_node(edge.parent)?, self.mirror_node(edge.child)?))
    }

    /// Horizontal mirror image. Node ids stay attached to positions, so
    /// rewards and edges move to the mirrored ids. Flipping twice restores
    /// the original graph, id included.
    pub fn flip(&self) -> Result<TaskGraph, GraphError> {
        self.ensure_valid()?;
        let mirror: HashMap<NodeId, NodeId> =
            self.nodes().map(|n| (n, self.mirror_node(n).expect("node in layers"))).collect();
        let rewards = self.rewards.iter().map(|(n, &r)| (mirror[n], r)).collect();
        let edges = self.edges.iter().map(|e| Edge::new(mirror[&e.parent], mirror[&e.child])).collect();
        let graph_id = match self.graph_id.strip_suffix(FLIP_SUFFIX) {
            Some(base) => base.to_owned(),
            None => format!("{}{FLIP_SUFFIX}", self.graph_id),
        };
        TaskGraph::new(graph_id, self.layers.clone(), rewards, edges)
    }

    /// Mirrors an edge set of this graph onto `flipped`.
    pub fn flip_edge_set(&self, set: &EdgeSet, flipped: &TaskGraph) -> Result<EdgeSet, GraphError> {
        set.check_graph(self)?;
        let edges = set
            .edges(self)
            .map(|e| self.mirror_edge(e).ok_or(GraphError::UnknownEdge(e)))
            .collect::<Result<Vec<_>, _>>()?;
        EdgeSet::from_edges(flipped, edges)
    }

    pub fn flip_trajectory(&self, traj: &Trajectory, flipped: &TaskGraph) -> Result<Trajectory, GraphError> {
        let edges = traj
            .edge_pairs(self)?
            .into_iter()
            .map(|e| self.mirror_edge(e).ok_or(GraphError::UnknownEdge(e)))
            .collect::<Result<Vec<_>, _>>()?;
        Trajectory::from_edges(flipped, &edges)
    }
}

/// Centered-layout reachability, in doubled coordinates to stay integral.
fn within_reach(p: usize, upper_len: usize, q: usize, lower_len: usize) -> bool {
    let anchor = 2 * p as i64 + lower_len as i64 - upper_len as i64;
    (2 * q as i64 - anchor).abs() <= 2
}

/// A subset of a graph's edges, as a bitmask over canonical edge indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeSet {
    graph_id: String,
    bits: u64,
    len: usize,
}

impl EdgeSet {
    pub fn empty(graph: &TaskGraph) -> Self {
        Self { graph_id: graph.graph_id.clone(), bits: 0, len: graph.num_edges() }
    }

    pub fn full(graph: &TaskGraph) -> Self {
        Self { graph_id: graph.graph_id.clone(), bits: full_mask(graph.num_edges()), len: graph.num_edges() }
    }

    pub fn from_bits(graph: &TaskGraph, bits: u64) -> Result<Self, GraphError> {
        let len = graph.num_edges();
        if bits & !full_mask(len) != 0 {
            let index = 63 - bits.leading_zeros() as usize;
            return Err(GraphError::EdgeIndexOutOfRange { index, len });
        }
        Ok(Self { graph_id: graph.graph_id.clone(), bits, len })
    }

    pub fn from_indices(graph: &TaskGraph, indices: impl IntoIterator<Item = usize>) -> Result<Self, GraphError> {
        let len = graph.num_edges();
        let mut bits = 0u64;
        for index in indices {
            if index >= len {
                return Err(GraphError::EdgeIndexOutOfRange { index, len });
            }
            bits |= 1 << index;
        }
        Ok(Self { graph_id: graph.graph_id.clone(), bits, len })
    }

    pub fn from_edges(graph: &TaskGraph, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let indices = edges.into_iter().map(|e| graph.require_edge(e)).collect::<Result<Vec<_>, _>>()?;
        Self::from_indices(graph, indices)
    }

    pub(crate) fn from_raw(graph_id: &str, bits: u64, len: usize) -> Self {
        Self { graph_id: graph_id.to_owned(), bits, len }
    }

    pub fn graph_id(&self) -> &str {
        &self.graph_id
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        index < 64 && self.bits >> index & 1 == 1
    }

    pub fn with(&self, index: usize) -> Result<Self, GraphError> {
        if index >= self.len {
            return Err(GraphError::EdgeIndexOutOfRange { index, len: self.len });
        }
        Ok(Self { bits: self.bits | 1 << index, ..self.clone() })
    }

    pub fn union(&self, other: &EdgeSet) -> Result<Self, GraphError> {
        self.same_graph(other)?;
        Ok(Self { bits: self.bits | other.bits, ..self.clone() })
    }

    pub fn is_subset(&self, other: &EdgeSet) -> Result<bool, GraphError> {
        self.same_graph(other)?;
        Ok(self.bits & !other.bits == 0)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.contains(i))
    }

    pub fn edges<'g>(&'g self, graph: &'g TaskGraph) -> impl Iterator<Item = Edge> + 'g {
        self.indices().map(|i| graph.edges[i])
    }

    pub fn check_graph(&self, graph: &TaskGraph) -> Result<(), GraphError> {
        if self.graph_id != graph.graph_id || self.len != graph.num_edges() {
            return Err(GraphError::GraphMismatch { expected: graph.graph_id.clone(), found: self.graph_id.clone() });
        }
        Ok(())
    }

    fn same_graph(&self, other: &EdgeSet) -> Result<(), GraphError> {
        if self.graph_id != other.graph_id || self.len != other.len {
            return Err(GraphError::GraphMismatch { expected: self.graph_id.clone(), found: other.graph_id.clone() });
        }
        Ok(())
    }
}

pub(crate) fn full_mask(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// An observed learner path: canonical edge indices from the start node to a
/// terminal.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trajectory {
    edges: Vec<usize>,
}

impl Trajectory {
    /// Builds a trajectory from canonical indices, checking that it chains
    /// from the start node to a terminal.
    pub fn new(graph: &TaskGraph, edges: Vec<usize>) -> Result<Self, GraphError> {
        let t = Self { edges };
        t.check(graph)?;
        Ok(t)
    }

    pub fn from_edges(graph: &TaskGraph, edges: &[Edge]) -> Result<Self, GraphError> {
        let indices = edges.iter().map(|&e| graph.require_edge(e)).collect::<Result<Vec<_>, _>>()?;
        Self::new(graph, indices)
    }

    pub(crate) fn from_indices_unchecked(edges: Vec<usize>) -> Self {
        Self { edges }
    }

    pub fn indices(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn mask(&self) -> u64 {
        self.edges.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn edge_pairs(&self, graph: &TaskGraph) -> Result<Vec<Edge>, GraphError> {
        self.edges
            .iter()
            .map(|&i| graph.edge(i).ok_or(GraphError::EdgeIndexOutOfRange { index: i, len: graph.num_edges() }))
            .collect()
    }

    /// Visited nodes, start node included.
    pub fn nodes(&self, graph: &TaskGraph) -> Result<Vec<NodeId>, GraphError> {
        let pairs = self.edge_pairs(graph)?;
        let mut nodes = vec![graph.start()];
        nodes.extend(pairs.iter().map(|e| e.child));
        Ok(nodes)
    }

    pub fn check(&self, graph: &TaskGraph) -> Result<(), GraphError> {
        let pairs = self.edge_pairs(graph)?;
        let first = pairs.first().ok_or(GraphError::EmptyTrajectory)?;
        if first.parent != graph.start() {
            return Err(GraphError::TrajectoryStart);
        }
        for (step, w) in pairs.windows(2).enumerate() {
            if w[0].child != w[1].parent {
                return Err(GraphError::BrokenChain { step: step + 1 });
            }
        }
        let last = pairs.last().expect("non-empty").child;
        if !graph.is_terminal(last) {
            return Err(GraphError::TrajectoryIncomplete { node: last });
        }
        Ok(())
    }
}

/// Points collected along `traj`, start node included.
pub fn trajectory_return(graph: &TaskGraph, traj: &Trajectory) -> Result<i64, GraphError> {
    traj.check(graph)?;
    Ok(traj.nodes(graph)?.into_iter().map(|n| graph.reward(n)).sum())
}
