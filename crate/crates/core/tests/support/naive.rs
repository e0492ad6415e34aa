//! Brute-force reference for the teacher models.
//!
//! Everything is recomputed from scratch by listing paths: every knowledge
//! state of all `2^|T|` subsets, every maximal path under it, and the value
//! with and without each candidate edge. Slow on purpose.

#![allow(dead_code)]

use graph_teaching::{Edge, TaskGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    InversePlanning,
    Feasibility,
    PriorOnly,
}

fn known(graph: &TaskGraph, mask: u64) -> Vec<Edge> {
    graph.edges().iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect()
}

/// Every path from the start that cannot be extended with a known edge.
pub fn maximal_paths(graph: &TaskGraph, edges: &[Edge]) -> Vec<Vec<Edge>> {
    fn go(node: u32, edges: &[Edge], path: &mut Vec<Edge>, out: &mut Vec<Vec<Edge>>) {
        let next: Vec<Edge> = edges.iter().filter(|e| e.parent == node).copied().collect();
        if next.is_empty() {
            out.push(path.clone());
            return;
        }
        for e in next {
            path.push(e);
            go(e.child, edges, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    go(graph.start(), edges, &mut Vec::new(), &mut out);
    out
}

/// Rewards collected after the start node.
pub fn path_value(graph: &TaskGraph, path: &[Edge]) -> i64 {
    path.iter().map(|e| graph.reward(e.child)).sum()
}

pub fn start_value(graph: &TaskGraph, edges: &[Edge]) -> i64 {
    maximal_paths(graph, edges).iter().map(|p| path_value(graph, p)).max().unwrap_or(0)
}

pub fn optimal_paths(graph: &TaskGraph, edges: &[Edge]) -> Vec<Vec<Edge>> {
    let paths = maximal_paths(graph, edges);
    let best = paths.iter().map(|p| path_value(graph, p)).max().unwrap_or(0);
    paths.into_iter().filter(|p| path_value(graph, p) == best).collect()
}

pub fn has_complete_path(graph: &TaskGraph, edges: &[Edge]) -> bool {
    maximal_paths(graph, edges).iter().any(|p| p.last().is_some_and(|e| graph.is_terminal(e.child)))
}

pub fn likelihood(graph: &TaskGraph, mask: u64, traj: &[Edge], mode: Mode) -> f64 {
    let edges = known(graph, mask);
    match mode {
        Mode::Feasibility => f64::from(u8::from(traj.iter().all(|e| edges.contains(e)))),
        Mode::PriorOnly => f64::from(u8::from(has_complete_path(graph, &edges))),
        Mode::InversePlanning => {
            let opt = optimal_paths(graph, &edges);
            if opt.iter().any(|p| p == traj) {
                1.0 / opt.len() as f64
            } else {
                0.0
            }
        }
    }
}

/// Normalized posterior over all `2^|T|` knowledge states, indexed by mask.
pub fn posterior(graph: &TaskGraph, traj: &[Edge], mode: Mode) -> Vec<f64> {
    let n = graph.num_edges();
    let mut w: Vec<f64> = (0..1u64 << n).map(|m| likelihood(graph, m, traj, mode)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Expected gain in start value from revealing each teacher edge.
pub fn utilities(graph: &TaskGraph, traj: &[Edge], mode: Mode) -> Vec<f64> {
    let n = graph.num_edges();
    let post = posterior(graph, traj, mode);
    let mut u = vec![0.0; n];
    for (mask, &p) in post.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mask = mask as u64;
        let base = start_value(graph, &known(graph, mask));
        for (x, ux) in u.iter_mut().enumerate() {
            let with = start_value(graph, &known(graph, mask | 1 << x));
            *ux += p * (with - base) as f64;
        }
    }
    u
}

pub fn unknown_marginals(graph: &TaskGraph, traj: &[Edge], mode: Mode) -> Vec<f64> {
    let post = posterior(graph, traj, mode);
    (0..graph.num_edges())
        .map(|x| post.iter().enumerate().filter(|(m, _)| (*m as u64) >> x & 1 == 0).map(|(_, p)| p).sum())
        .collect()
}
