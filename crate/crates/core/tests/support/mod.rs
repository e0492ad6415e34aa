#![allow(dead_code)]

pub mod naive;

use graph_teaching::{Edge, EdgeSet, TaskGraph, Trajectory};

pub fn e(parent: u32, child: u32) -> Edge {
    Edge { parent, child }
}

/// The worked-example graph: start 0, three layers of three nodes.
pub fn example_graph() -> TaskGraph {
    let rewards = [(0, 0), (1, 2), (2, 1), (3, 0), (4, 0), (5, 1), (6, 0), (7, 3), (8, 1), (9, 0)];
    let edges = vec![
        e(0, 1),
        e(0, 2),
        e(0, 3),
        e(1, 4),
        e(1, 5),
        e(2, 4),
        e(2, 5),
        e(2, 6),
        e(3, 5),
        e(3, 6),
        e(4, 7),
        e(4, 8),
        e(5, 7),
        e(5, 8),
        e(5, 9),
        e(6, 8),
        e(6, 9),
    ];
    TaskGraph::new("G-example", vec![vec![0], vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]], rewards.into(), edges)
        .expect("valid fixture")
}

pub fn example_learner_set(g: &TaskGraph) -> EdgeSet {
    let known = [e(0, 1), e(0, 2), e(1, 5), e(2, 4), e(2, 5), e(2, 6), e(5, 8), e(5, 9), e(6, 9)];
    EdgeSet::from_edges(g, known).unwrap()
}

pub fn example_trajectory(g: &TaskGraph) -> Trajectory {
    Trajectory::from_edges(g, &[e(0, 1), e(1, 5), e(5, 8)]).unwrap()
}
