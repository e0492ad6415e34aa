//! Stimulus generation and trial sequencing.
//!
//! Graphs are complete down/diagonal lattices with random node rewards. A
//! learner knowledge state is drawn by keeping each edge with a fixed
//! probability; the learner's trajectory is one of its optimal complete
//! paths. Stimuli whose best teaching utility is zero are redrawn.
//!
//! Externally supplied stimulus files load verbatim through
//! [`read_stimuli`], so published stimulus sets can replace the generated
//! pools.

use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, EdgeSet, GraphError, TaskGraph, Trajectory};
use crate::planner::{optimal_trajectories, Compiled, PlanError};
use crate::records::Phase;
use crate::teachers::{bot_utilities, heuristic_features, LikelihoodMode, TeacherError, UtilityVector};

#[derive(Debug, Error)]
pub enum StimulusError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error("layer 0 must hold exactly one node, got {0}")]
    StartLayer(usize),
    #[error("empty reward range {0}..={1}")]
    RewardRange(i64, i64),
    #[error("no usable stimulus after {attempts} attempts")]
    BudgetExhausted { attempts: usize },
    #[error("pool has {got} stimuli, need {needed}")]
    PoolTooSmall { needed: usize, got: usize },
    #[error("test block must hold exactly {expected} stimuli, got {got}")]
    TestBlockSize { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Congruency {
    /// The reward heuristic and the Bayes-optimal teacher pick the same edge.
    Congruent,
    /// The reward heuristic's pick scores at or below the threshold.
    Incongruent,
    Unscreened,
}

/// One trial: graph, the learner's hidden knowledge and its observed path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StimulusFile", into = "StimulusFile")]
pub struct TrialStimulus {
    pub graph: TaskGraph,
    /// Ground truth used for generation only; never shown to a teacher.
    pub learner_knowledge: EdgeSet,
    pub trajectory: Trajectory,
    pub congruency: Congruency,
    pub role: Phase,
}

#[derive(Serialize, Deserialize)]
struct StimulusFile {
    graph: TaskGraph,
    learner_knowledge: Vec<Edge>,
    trajectory: Vec<Edge>,
    congruency: Congruency,
    role: Phase,
}

impl TryFrom<StimulusFile> for TrialStimulus {
    type Error = GraphError;

    fn try_from(f: StimulusFile) -> Result<Self, GraphError> {
        f.graph.ensure_valid()?;
        Ok(Self {
            learner_knowledge: EdgeSet::from_edges(&f.graph, f.learner_knowledge)?,
            trajectory: Trajectory::from_edges(&f.graph, &f.trajectory)?,
            graph: f.graph,
            congruency: f.congruency,
            role: f.role,
        })
    }
}

impl From<TrialStimulus> for StimulusFile {
    fn from(s: TrialStimulus) -> Self {
        Self {
            learner_knowledge: s.learner_knowledge.edges(&s.graph).collect(),
            trajectory: s.trajectory_edges(),
            graph: s.graph,
            congruency: s.congruency,
            role: s.role,
        }
    }
}

impl TrialStimulus {
    pub fn trajectory_edges(&self) -> Vec<Edge> {
        self.trajectory.edge_pairs(&self.graph).expect("trajectory built against its graph")
    }

    /// Horizontal mirror image; labels carry over.
    pub fn flipped(&self) -> Result<TrialStimulus, GraphError> {
        let graph = self.graph.flip()?;
        Ok(TrialStimulus {
            learner_knowledge: self.graph.flip_edge_set(&self.learner_knowledge, &graph)?,
            trajectory: self.graph.flip_trajectory(&self.trajectory, &graph)?,
            graph,
            congruency: self.congruency,
            role: self.role,
        })
    }

    pub fn with_role(mut self, role: Phase) -> Self {
        self.role = role;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StimulusConfig {
    pub layer_sizes: Vec<usize>,
    /// Inclusive reward range for every node except the start node, whose
    /// reward is 0.
    pub reward_range: (i64, i64),
    /// Probability that the learner knows any given edge.
    pub knowledge_probability: f64,
    pub max_attempts: usize,
    pub incongruency_threshold: f64,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![1, 3, 3, 3],
            reward_range: (0, 3),
            knowledge_probability: 0.5,
            max_attempts: 1000,
            incongruency_threshold: 0.5,
        }
    }
}

/// A random complete lattice. Node ids run from 0 in layer order.
pub fn generate_graph(seed: u64, layer_sizes: &[usize], reward_range: (i64, i64)) -> Result<TaskGraph, StimulusError> {
    if layer_sizes.first() != Some(&1) {
        return Err(StimulusError::StartLayer(layer_sizes.first().copied().unwrap_or(0)));
    }
    let (lo, hi) = reward_range;
    if lo > hi || lo < 0 {
        return Err(StimulusError::RewardRange(lo, hi));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = 0u32;
    let layers: Vec<Vec<u32>> = layer_sizes
        .iter()
        .map(|&n| {
            let layer = (next..next + n as u32).collect();
            next += n as u32;
            layer
        })
        .collect();
    let rewards = (0..next).map(|n| (n, if n == 0 { 0 } else { rng.gen_range(lo..=hi) })).collect();
    Ok(TaskGraph::lattice(format!("gen-{seed}"), layers, rewards)?)
}

/// Draws a learner knowledge state and trajectory on `graph`.
pub fn sample_stimulus(graph: &TaskGraph, seed: u64, cfg: &StimulusConfig) -> Result<TrialStimulus, StimulusError> {
    let c = Compiled::new(graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.max_attempts {
        let bits =
            (0..graph.num_edges()).filter(|_| rng.gen_bool(cfg.knowledge_probability)).fold(0u64, |m, e| m | 1 << e);
        if !c.has_complete_path(bits) {
            continue;
        }
        let knowledge = EdgeSet::from_bits(graph, bits)?;
        let paths = match optimal_trajectories(graph, &knowledge) {
            Ok(paths) => paths,
            Err(PlanError::NoCompletePath) => continue,
            Err(PlanError::Graph(e)) => return Err(e.into()),
        };
        let trajectory = paths.choose(&mut rng).expect("non-empty").clone();
        let bot = bot_utilities(graph, &trajectory, LikelihoodMode::InversePlanning)?;
        if bot.max() <= 0.0 {
            continue;
        }
        let mut stimulus = TrialStimulus {
            graph: graph.clone(),
            learner_knowledge: knowledge,
            trajectory,
            congruency: Congruency::Unscreened,
            role: Phase::Train,
        };
        stimulus.congruency = classify(&bot, &heuristic_features(graph)?.reward, cfg.incongruency_threshold);
        return Ok(stimulus);
    }
    Err(StimulusError::BudgetExhausted { attempts: cfg.max_attempts })
}

fn classify(bot: &UtilityVector, reward_feature: &[f64], threshold: f64) -> Congruency {
    let reward_best = crate::teachers::argmax(reward_feature);
    let [reward_pick] = reward_best.as_slice() else {
        return Congruency::Unscreened;
    };
    if bot.unique_argmax() == Some(*reward_pick) {
        return Congruency::Congruent;
    }
    let max = bot.max();
    let score = if max > 0.0 { bot.utilities[*reward_pick] / max } else { 1.0 };
    if score <= threshold {
        Congruency::Incongruent
    } else {
        Congruency::Unscreened
    }
}

/// Classifies a stimulus by comparing the reward heuristic's pick with the
/// Bayes-optimal pick. A tied reward argmax is never screened.
pub fn screen_congruency(stimulus: &TrialStimulus, threshold: f64) -> Result<Congruency, StimulusError> {
    let bot = bot_utilities(&stimulus.graph, &stimulus.trajectory, LikelihoodMode::InversePlanning)?;
    Ok(classify(&bot, &heuristic_features(&stimulus.graph)?.reward, threshold))
}

/// Generates `size` stimuli, keeping only those matching `congruency` when
/// given. Graph ids are `p{seed}-{i}`.
pub fn generate_pool(
    cfg: &StimulusConfig,
    size: usize,
    congruency: Option<Congruency>,
    seed: u64,
) -> Result<Vec<TrialStimulus>, StimulusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = cfg.max_attempts.max(1) * size.max(1);
    let mut pool = Vec::with_capacity(size);
    for i in 0..budget {
        if pool.len() == size {
            break;
        }
        let graph_seed: u64 = rng.gen();
        let stim_seed: u64 = rng.gen();
        let generated = generate_graph(graph_seed, &cfg.layer_sizes, cfg.reward_range)?;
        let graph = TaskGraph::new(
            format!("p{seed}-{i}"),
            generated.layers().to_vec(),
            generated.rewards().clone(),
            generated.edges().to_vec(),
        )?;
        let stimulus = match sample_stimulus(&graph, stim_seed, cfg) {
            Ok(s) => s,
            Err(StimulusError::BudgetExhausted { .. }) => continue,
            Err(e) => return Err(e),
        };
        if congruency.is_none_or(|c| c == stimulus.congruency) {
            pool.push(stimulus);
        }
    }
    if pool.len() < size {
        return Err(StimulusError::BudgetExhausted { attempts: budget });
    }
    Ok(pool)
}

pub const BASELINE_GRAPHS: usize = 20;
pub const SCAFFOLD_BLOCK: usize = 5;

/// 20 stimuli drawn from `pool` plus their flips, shuffled.
pub fn build_baseline_set(pool: &[TrialStimulus], seed: u64) -> Result<Vec<TrialStimulus>, StimulusError> {
    if pool.len() < BASELINE_GRAPHS {
        return Err(StimulusError::PoolTooSmall { needed: BASELINE_GRAPHS, got: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, pool.len(), BASELINE_GRAPHS);
    let mut trials = Vec::with_capacity(2 * BASELINE_GRAPHS);
    for i in picked.iter() {
        let s = pool[i].clone().with_role(Phase::Train);
        trials.push(s.flipped()?);
        trials.push(s);
    }
    trials.shuffle(&mut rng);
    Ok(trials)
}

/// Training block (selected, flipped, selected again) followed by the test
/// block in its given order.
pub fn build_scaffold_set(
    train_pool: &[TrialStimulus],
    test_pool: &[TrialStimulus],
    seed: u64,
) -> Result<Vec<TrialStimulus>, StimulusError> {
    if train_pool.len() < 2 * SCAFFOLD_BLOCK {
        return Err(StimulusError::PoolTooSmall { needed: 2 * SCAFFOLD_BLOCK, got: train_pool.len() });
    }
    if test_pool.len() != SCAFFOLD_BLOCK {
        return Err(StimulusError::TestBlockSize { expected: SCAFFOLD_BLOCK, got: test_pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selected: Vec<TrialStimulus> = index::sample(&mut rng, train_pool.len(), SCAFFOLD_BLOCK)
        .iter()
        .map(|i| train_pool[i].clone().with_role(Phase::Train))
        .collect();
    let flipped = selected.iter().map(TrialStimulus::flipped).collect::<Result<Vec<_>, _>>()?;
    let mut trials = selected.clone();
    trials.extend(flipped);
    trials.extend(selected);
    trials.extend(test_pool.iter().map(|s| s.clone().with_role(Phase::Test)));
    Ok(trials)
}

pub fn read_stimuli(path: impl AsRef<Path>) -> Result<Vec<TrialStimulus>, StimulusError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_stimuli(path: impl AsRef<Path>, stimuli: &[TrialStimulus]) -> Result<(), StimulusError> {
    fs::write(path, serde_json::to_string_pretty(stimuli)?)?;
    Ok(())
}
