//! The worked example from the task instructions, shared by unit tests.

use std::collections::BTreeMap;

use crate::graph::{Edge, EdgeSet, TaskGraph, Trajectory};

pub fn e(parent: u32, child: u32) -> Edge {
    Edge::new(parent, child)
}

pub fn example_rewards() -> BTreeMap<u32, i64> {
    [(0, 0), (1, 2), (2, 1), (3, 0), (4, 0), (5, 1), (6, 0), (7, 3), (8, 1), (9, 0)].into_iter().collect()
}

pub fn example_edges() -> Vec<Edge> {
    [
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 4),
        (1, 5),
        (2, 4),
        (2, 5),
        (2, 6),
        (3, 5),
        (3, 6),
        (4, 7),
        (4, 8),
        (5, 7),
        (5, 8),
        (5, 9),
        (6, 8),
        (6, 9),
    ]
    .into_iter()
    .map(Edge::from)
    .collect()
}

pub fn example_graph() -> TaskGraph {
    TaskGraph::new(
        "G-example",
        vec![vec![0], vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]],
        example_rewards(),
        example_edges(),
    )
    .unwrap()
}

pub fn example_learner_set(g: &TaskGraph) -> EdgeSet {
    let edges = [(0, 1), (0, 2), (1, 5), (2, 4), (2, 5), (2, 6), (5, 8), (5, 9), (6, 9)];
    EdgeSet::from_edges(g, edges.into_iter().map(Edge::from)).unwrap()
}

pub fn example_trajectory(g: &TaskGraph) -> Trajectory {
    Trajectory::from_edges(g, &[e(0, 1), e(1, 5), e(5, 8)]).unwrap()
}
