//! Graph Teaching: a teacher watches a learner walk down a layered,
//! reward-annotated DAG and reveals one edge so the learner can do better.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: task graphs, edge sets, trajectories, flips, file format
//! - [`planner`]: learner-side planning under partial edge knowledge
//! - [`teachers`]: the eight cognitive teacher models and the softmax choice rule
//! - [`stimuli`]: stimulus generation, congruency screening, trial sequences
//! - [`records`]: trial records and subject datasets shared by every teacher type
//! - [`fitting`]: maximum-likelihood fits, BIC and model comparison
//! - [`analysis`]: Teaching Score and figure-level statistics

pub mod analysis;
pub mod fitting;
pub mod graph;
pub mod planner;
pub mod records;
pub mod stimuli;
pub mod teachers;

#[cfg(test)]
pub(crate) mod fixtures;

pub use graph::{Edge, EdgeSet, GraphError, NodeId, TaskGraph, Trajectory, Violation};
pub use records::{Condition, Phase, Provenance, ScaffoldKind, SubjectDataset, TrainingKind, TrialRecord};
pub use teachers::{LikelihoodMode, ModelName, UtilityVector};
