//! Learner-side planning under partial transition knowledge.
//!
//! Values are undiscounted sums of node rewards collected after the current
//! node. A node with no known outgoing edge ends the episode: its value is 0
//! whether or not it lies in the terminal layer.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::graph::{full_mask, Edge, EdgeSet, GraphError, NodeId, TaskGraph, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no optimal path reaches the terminal layer under this knowledge")]
    NoCompletePath,
}

/// Dense, index-based view of a validated graph used by the hot loops.
///
/// Nodes are renumbered in layer order so node 0 is the start node and every
/// edge points to a larger index; iterating indices in reverse is a valid
/// backward-induction order.
#[derive(Clone, Debug)]
pub(crate) struct Compiled {
    pub node_ids: Vec<NodeId>,
    pub layer: Vec<usize>,
    pub reward: Vec<i64>,
    pub terminal: Vec<bool>,
    /// Outgoing canonical edge indices per dense node.
    pub out: Vec<Vec<usize>>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl Compiled {
    pub fn new(graph: &TaskGraph) -> Result<Self, GraphError> {
        graph.ensure_valid()?;
        let last = graph.layers().len() - 1;
        let mut node_ids = Vec::new();
        let mut layer = Vec::new();
        for (k, nodes) in graph.layers().iter().enumerate() {
            for &n in nodes {
                node_ids.push(n);
                layer.push(k);
            }
        }
        let index_of: HashMap<NodeId, usize> = node_ids.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let reward = node_ids.iter().map(|&n| graph.reward(n)).collect();
        let terminal = layer.iter().map(|&k| k == last).collect();
        let mut out = vec![Vec::new(); node_ids.len()];
        let mut src = Vec::with_capacity(graph.num_edges());
        let mut dst = Vec::with_capacity(graph.num_edges());
        for (i, e) in graph.edges().iter().enumerate() {
            let (s, d) = (index_of[&e.parent], index_of[&e.child]);
            out[s].push(i);
            src.push(s);
            dst.push(d);
        }
        Ok(Self { node_ids, layer, reward, terminal, out, src, dst })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn full_mask(&self) -> u64 {
        full_mask(self.num_edges())
    }

    /// Backward induction under `mask`, written into `values`.
    pub fn values_into(&self, mask: u64, values: &mut [i64]) {
        for s in (0..self.num_nodes()).rev() {
            let mut best = 0;
            for &e in &self.out[s] {
                if mask >> e & 1 == 1 {
                    let d = self.dst[e];
                    best = best.max(self.reward[d] + values[d]);
                }
            }
            values[s] = best;
        }
    }

    pub fn values(&self, mask: u64) -> Vec<i64> {
        let mut v = vec![0; self.num_nodes()];
        self.values_into(mask, &mut v);
        v
    }

    /// Best reward collected from the start node (its own reward excluded)
    /// up to and including each node; `None` marks unreachable nodes.
    pub fn prefix_into(&self, mask: u64, prefix: &mut [Option<i64>]) {
        prefix.iter_mut().for_each(|p| *p = None);
        prefix[0] = Some(0);
        for s in 0..self.num_nodes() {
            let Some(here) = prefix[s] else { continue };
            for &e in &self.out[s] {
                if mask >> e & 1 == 1 {
                    let d = self.dst[e];
                    let via = here + self.reward[d];
                    prefix[d] = Some(prefix[d].map_or(via, |p| p.max(via)));
                }
            }
        }
    }

    pub fn is_argmax_edge(&self, e: usize, values: &[i64]) -> bool {
        self.reward[self.dst[e]] + values[self.dst[e]] == values[self.src[e]]
    }

    /// Number of value-maximizing maximal paths from the start node, counting
    /// those that get stuck before the terminal layer.
    pub fn optimal_path_count(&self, mask: u64, values: &[i64], counts: &mut [u64]) -> u64 {
        for s in (0..self.num_nodes()).rev() {
            let mut c = 0;
            let mut any = false;
            for &e in &self.out[s] {
                if mask >> e & 1 == 1 {
                    any = true;
                    if self.is_argmax_edge(e, values) {
                        c += counts[self.dst[e]];
                    }
                }
            }
            counts[s] = if any { c } else { 1 };
        }
        counts[0]
    }

    /// Whether `traj` is one of the value-maximizing paths under `mask`.
    pub fn is_optimal(&self, mask: u64, values: &[i64], traj: &[usize]) -> bool {
        traj.iter().all(|&e| mask >> e & 1 == 1 && self.is_argmax_edge(e, values))
    }

    /// Whether some start-to-terminal path exists under `mask`.
    pub fn has_complete_path(&self, mask: u64) -> bool {
        let mut reach = vec![false; self.num_nodes()];
        reach[0] = true;
        for s in 0..self.num_nodes() {
            if !reach[s] {
                continue;
            }
            if self.terminal[s] {
                return true;
            }
            for &e in &self.out[s] {
                if mask >> e & 1 == 1 {
                    reach[self.dst[e]] = true;
                }
            }
        }
        false
    }

    /// All start-to-terminal paths under `mask`, as canonical edge lists.
    pub fn complete_paths(&self, mask: u64) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.walk(0, mask, &mut stack, &mut |path| out.push(path.to_vec()), &|_| true);
        out
    }

    fn walk(
        &self,
        s: usize,
        mask: u64,
        stack: &mut Vec<usize>,
        emit: &mut dyn FnMut(&[usize]),
        keep: &dyn Fn(usize) -> bool,
    ) {
        if self.terminal[s] {
            emit(stack);
            return;
        }
        for &e in &self.out[s] {
            if mask >> e & 1 == 1 && keep(e) {
                stack.push(e);
                self.walk(self.dst[e], mask, stack, emit, keep);
                stack.pop();
            }
        }
    }

    pub fn path_return(&self, path: &[usize]) -> i64 {
        self.reward[0] + path.iter().map(|&e| self.reward[self.dst[e]]).sum::<i64>()
    }
}

/// Optimal remaining value per node under one knowledge state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValueTable {
    values: BTreeMap<NodeId, i64>,
    start: NodeId,
    start_reward: i64,
}

impl ValueTable {
    pub fn get(&self, node: NodeId) -> Option<i64> {
        self.values.get(&node).copied()
    }

    pub fn start_value(&self) -> i64 {
        self.values[&self.start]
    }

    /// Points collected by an optimal learner, start reward included.
    pub fn start_return(&self) -> i64 {
        self.start_reward + self.start_value()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, i64)> + '_ {
        self.values.iter().map(|(&n, &v)| (n, v))
    }
}

pub fn value(graph: &TaskGraph, knowledge: &EdgeSet) -> Result<ValueTable, PlanError> {
    knowledge.check_graph(graph)?;
    let c = Compiled::new(graph)?;
    let v = c.values(knowledge.bits());
    Ok(ValueTable {
        values: c.node_ids.iter().copied().zip(v).collect(),
        start: graph.start(),
        start_reward: c.reward[0],
    })
}

/// Every start-to-terminal path that attains the optimal return under
/// `knowledge`, in canonical order.
pub fn optimal_trajectories(graph: &TaskGraph, knowledge: &EdgeSet) -> Result<Vec<Trajectory>, PlanError> {
    knowledge.check_graph(graph)?;
    let c = Compiled::new(graph)?;
    let mask = knowledge.bits();
    let values = c.values(mask);
    let mut found = Vec::new();
    let mut stack = Vec::new();
    c.walk(0, mask, &mut stack, &mut |path| found.push(Trajectory::from_indices_unchecked(path.to_vec())), &|e| {
        c.is_argmax_edge(e, &values)
    });
    if found.is_empty() {
        return Err(PlanError::NoCompletePath);
    }
    found.sort();
    Ok(found)
}

/// Optimal state-action value of every edge under full knowledge:
/// `Q(s, c) = R(c) + V(c)`.
pub fn q_values(graph: &TaskGraph) -> Result<Vec<i64>, PlanError> {
    let c = Compiled::new(graph)?;
    let v = c.values(c.full_mask());
    Ok((0..c.num_edges()).map(|e| c.reward[c.dst[e]] + v[c.dst[e]]).collect())
}

/// Every complete path of the full graph that uses `edge`.
pub fn complete_paths_through(graph: &TaskGraph, edge: Edge) -> Result<Vec<Trajectory>, PlanError> {
    let target = graph.require_edge(edge)?;
    let c = Compiled::new(graph)?;
    Ok(c.complete_paths(c.full_mask())
        .into_iter()
        .filter(|p| p.contains(&target))
        .map(Trajectory::from_indices_unchecked)
        .collect())
}
