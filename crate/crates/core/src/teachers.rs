//! Cognitive teacher models.
//!
//! Every model scores each teacher edge with a utility and turns the scores
//! into choice probabilities with a softmax. The three Bayesian teachers
//! differ only in how they weigh learner knowledge states:
//!
//! | model            | weight of knowledge state `K` given trajectory `z`      |
//! |------------------|---------------------------------------------------------|
//! | Bayes-Optimal    | `1 / #optimal paths under K` if `z` is one of them      |
//! | No Inverse Plan. | 1 if every edge of `z` is in `K`                        |
//! | Prior only       | 1 if `K` admits a complete path (`z` ignored)           |
//!
//! The teaching utility of edge `x` is the posterior-expected gain in the
//! learner's start value from adding `x` to `K`.
//!
//! Both trajectory-conditioned likelihoods vanish unless `K` contains the
//! trajectory, so those posteriors are enumerated over supersets of the
//! trajectory only. The gain from one revealed edge `(a, b)` is read off a
//! forward and a backward pass: `max(V(s0), F(a) + R(b) + V(b)) - V(s0)`,
//! where `F(a)` is the best prefix reward reaching `a`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeSet, GraphError, TaskGraph, Trajectory};
use crate::planner::{Compiled, PlanError};

/// Utilities closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeacherError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("posterior has empty support")]
    EmptySupport,
    #[error("model {0} needs feature weights")]
    MissingWeights(ModelName),
    #[error("unknown model name `{0}`")]
    UnknownModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelName {
    #[serde(rename = "bot")]
    Bot,
    #[serde(rename = "noip")]
    NoIpBayes,
    #[serde(rename = "prior_only")]
    PriorOnlyBayes,
    #[serde(rename = "reward")]
    RewardHeuristic,
    #[serde(rename = "depth")]
    DepthHeuristic,
    #[serde(rename = "reward_depth")]
    RewardDepth,
    #[serde(rename = "qvalue")]
    QValue,
    #[serde(rename = "path_averaged")]
    PathAveraged,
}

impl ModelName {
    /// Every model, in the fixed order used to break BIC ties.
    pub const ALL: [ModelName; 8] = [
        ModelName::Bot,
        ModelName::NoIpBayes,
        ModelName::PriorOnlyBayes,
        ModelName::RewardHeuristic,
        ModelName::DepthHeuristic,
        ModelName::RewardDepth,
        ModelName::QValue,
        ModelName::PathAveraged,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Bot => "bot",
            ModelName::NoIpBayes => "noip",
            ModelName::PriorOnlyBayes => "prior_only",
            ModelName::RewardHeuristic => "reward",
            ModelName::DepthHeuristic => "depth",
            ModelName::RewardDepth => "reward_depth",
            ModelName::QValue => "qvalue",
            ModelName::PathAveraged => "path_averaged",
        }
    }

    /// Likelihood mode of the Bayesian teachers.
    pub fn likelihood_mode(self) -> Option<LikelihoodMode> {
        match self {
            ModelName::Bot => Some(LikelihoodMode::InversePlanning),
            ModelName::NoIpBayes => Some(LikelihoodMode::Feasibility),
            ModelName::PriorOnlyBayes => Some(LikelihoodMode::PriorOnly),
            _ => None,
        }
    }

    /// Whether utilities depend on the learner trajectory.
    pub fn uses_trajectory(self) -> bool {
        matches!(self, ModelName::Bot | ModelName::NoIpBayes)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = TeacherError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let m = match key.as_str() {
            "bot" | "bayes_optimal" => ModelName::Bot,
            "noip" | "noip_bayes" | "no_inverse_planning" => ModelName::NoIpBayes,
            "prior_only" | "prioronly" | "prior_only_bayes" => ModelName::PriorOnlyBayes,
            "reward" | "reward_heuristic" => ModelName::RewardHeuristic,
            "depth" | "depth_heuristic" => ModelName::DepthHeuristic,
            "reward_depth" | "rewarddepth" => ModelName::RewardDepth,
            "qvalue" | "q_value" => ModelName::QValue,
            "path_averaged" | "pathaveraged" | "path_average" => ModelName::PathAveraged,
            _ => return Err(TeacherError::UnknownModel(s.to_owned())),
        };
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    InversePlanning,
    Feasibility,
    PriorOnly,
}

/// How the inverse-planning likelihood treats several optimal paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// The learner picks uniformly among its optimal paths.
    #[default]
    Uniform,
    /// Any optimal path has likelihood 1.
    Indicator,
}

/// Support of the flat prior used by the prior-only teacher.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSupport {
    /// Only knowledge states with at least one complete path.
    #[default]
    CompletePath,
    AllSubsets,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthFeature {
    #[default]
    ChildLayer,
    ParentLayer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub tie_rule: TieRule,
    pub prior_support: PriorSupport,
    pub depth_feature: DepthFeature,
}

/// Per-edge utilities of one model on one trial, indexed by canonical edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityVector {
    pub model: ModelName,
    pub utilities: Vec<f64>,
}

impl UtilityVector {
    pub fn len(&self) -> usize {
        self.utilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utilities.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices within [`TIE_TOLERANCE`] of the maximum.
    pub fn argmax(&self) -> Vec<usize> {
        argmax(&self.utilities)
    }

    pub fn unique_argmax(&self) -> Option<usize> {
        match self.argmax().as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }
}

pub fn argmax(values: &[f64]) -> Vec<usize> {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..values.len()).filter(|&i| best - values[i] <= TIE_TOLERANCE).collect()
}

/// A normalized posterior over learner knowledge states.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    graph_id: String,
    num_edges: usize,
    mode: LikelihoodMode,
    trajectory: Option<Trajectory>,
    states: Vec<(u64, f64)>,
}

impl Posterior {
    pub fn mode(&self) -> LikelihoodMode {
        self.mode
    }

    /// The conditioning trajectory; `None` for the prior-only posterior.
    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.trajectory.as_ref()
    }

    pub fn support_size(&self) -> usize {
        self.states.len()
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.states.iter().map(|&(_, w)| w))
    }

    /// Probability of one knowledge state (0 outside the support).
    pub fn weight(&self, state: &EdgeSet) -> f64 {
        if state.graph_id() != self.graph_id {
            return 0.0;
        }
        self.states.binary_search_by_key(&state.bits(), |&(m, _)| m).map_or(0.0, |i| self.states[i].1)
    }

    /// Support states with their probabilities, ordered by bitmask.
    pub fn iter(&self) -> impl Iterator<Item = (EdgeSet, f64)> + '_ {
        self.states.iter().map(|&(m, w)| (EdgeSet::from_raw(&self.graph_id, m, self.num_edges), w))
    }
}

/// Neumaier summation; posteriors carry up to 2^17 small weights.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        c += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + c
}

/// Knowledge-state enumeration for one trial.
struct Enumeration<'a> {
    c: &'a Compiled,
    traj: &'a [usize],
    mode: LikelihoodMode,
    cfg: TeacherConfig,
    /// Bits enumerated freely; the rest are fixed to `fixed`.
    free: Vec<usize>,
    fixed: u64,
}

/// Fixed chunk count so the floating-point reduction order never depends on
/// the thread pool.
const CHUNKS: u64 = 256;

impl<'a> Enumeration<'a> {
    fn new(c: &'a Compiled, traj: &'a [usize], mode: LikelihoodMode, cfg: TeacherConfig) -> Self {
        let fixed = match mode {
            LikelihoodMode::PriorOnly => 0,
            _ => traj.iter().fold(0u64, |m, &e| m | 1 << e),
        };
        let free = (0..c.num_edges()).filter(|&e| fixed >> e & 1 == 0).collect();
        Self { c, traj, mode, cfg, free, fixed }
    }

    fn num_states(&self) -> u64 {
        1u64 << self.free.len()
    }

    fn mask(&self, i: u64) -> u64 {
        let mut m = self.fixed;
        for (bit, &e) in self.free.iter().enumerate() {
            m |= (i >> bit & 1) << e;
        }
        m
    }

    /// Unnormalized weight of `mask`; `values` must hold its value table.
    fn weight(&self, mask: u64, values: &[i64], counts: &mut [u64]) -> f64 {
        match self.mode {
            LikelihoodMode::Feasibility => 1.0,
            LikelihoodMode::PriorOnly => match self.cfg.prior_support {
                PriorSupport::AllSubsets => 1.0,
                PriorSupport::CompletePath => f64::from(u8::from(self.c.has_complete_path(mask))),
            },
            LikelihoodMode::InversePlanning => {
                if !self.c.is_optimal(mask, values, self.traj) {
                    return 0.0;
                }
                match self.cfg.tie_rule {
                    TieRule::Indicator => 1.0,
                    TieRule::Uniform => 1.0 / self.c.optimal_path_count(mask, values, counts) as f64,
                }
            }
        }
    }

    /// Folds `visit(mask, weight, values)` over the support in fixed chunks
    /// and merges the partial accumulators in chunk order.
    fn fold<A, F, M>(&self, init: impl Fn() -> A + Sync, visit: F, merge: M) -> A
    where
        A: Send,
        F: Fn(&mut A, u64, f64, &[i64]) + Sync,
        M: Fn(&mut A, A),
    {
        let n = self.num_states();
        let chunks = CHUNKS.min(n);
        let per = n.div_ceil(chunks);
        let partials: Vec<A> = (0..chunks)
            .into_par_iter()
            .map(|k| {
                let mut acc = init();
                let mut values = vec![0i64; self.c.num_nodes()];
                let mut counts = vec![0u64; self.c.num_nodes()];
                for i in k * per..((k + 1) * per).min(n) {
                    let mask = self.mask(i);
                    self.c.values_into(mask, &mut values);
                    let w = self.weight(mask, &values, &mut counts);
                    if w > 0.0 {
                        visit(&mut acc, mask, w, &values);
                    }
                }
                acc
            })
            .collect();
        let mut out = init();
        for p in partials {
            merge(&mut out, p);
        }
        out
    }
}

fn check_inputs(graph: &TaskGraph, traj: &Trajectory) -> Result<Compiled, TeacherError> {
    let c = Compiled::new(graph)?;
    traj.check(graph)?;
    Ok(c)
}

pub fn posterior(graph: &TaskGraph, traj: &Trajectory, mode: LikelihoodMode) -> Result<Posterior, TeacherError> {
    posterior_with(graph, traj, mode, TeacherConfig::default())
}

pub fn posterior_with(
    graph: &TaskGraph,
    traj: &Trajectory,
    mode: LikelihoodMode,
    cfg: TeacherConfig,
) -> Result<Posterior, TeacherError> {
    let c = check_inputs(graph, traj)?;
    let en = Enumeration::new(&c, traj.indices(), mode, cfg);
    let mut states =
        en.fold(Vec::new, |acc: &mut Vec<(u64, f64)>, mask, w, _| acc.push((mask, w)), |out, p| out.extend(p));
    let total = compensated_sum(states.iter().map(|&(_, w)| w));
    if states.is_empty() || total <= 0.0 {
        return Err(TeacherError::EmptySupport);
    }
    states.iter_mut().for_each(|(_, w)| *w /= total);
    states.sort_unstable_by_key(|&(m, _)| m);
    Ok(Posterior {
        graph_id: graph.graph_id().to_owned(),
        num_edges: graph.num_edges(),
        mode,
        trajectory: (mode != LikelihoodMode::PriorOnly).then(|| traj.clone()),
        states,
    })
}

struct GainAcc {
    total: f64,
    sums: Vec<f64>,
}

/// Expected teaching utility of revealing each teacher edge.
pub fn bot_utilities(
    graph: &TaskGraph,
    traj: &Trajectory,
    mode: LikelihoodMode,
) -> Result<UtilityVector, TeacherError> {
    bot_utilities_with(graph, traj, mode, TeacherConfig::default())
}

pub fn bot_utilities_with(
    graph: &TaskGraph,
    traj: &Trajectory,
    mode: LikelihoodMode,
    cfg: TeacherConfig,
) -> Result<UtilityVector, TeacherError> {
    let c = check_inputs(graph, traj)?;
    let en = Enumeration::new(&c, traj.indices(), mode, cfg);
    let n_edges = c.num_edges();
    let acc = en.fold(
        || GainAcc { total: 0.0, sums: vec![0.0; n_edges] },
        |acc, mask, w, values| {
            acc.total += w;
            let mut prefix = vec![None; c.num_nodes()];
            c.prefix_into(mask, &mut prefix);
            let base = values[0];
            for x in 0..n_edges {
                if mask >> x & 1 == 1 {
                    continue;
                }
                if let Some(reach) = prefix[c.src[x]] {
                    let d = c.dst[x];
                    let gain = (reach + c.reward[d] + values[d] - base).max(0);
                    if gain > 0 {
                        acc.sums[x] += w * gain as f64;
                    }
                }
            }
        },
        |out, p| {
            out.total += p.total;
            out.sums.iter_mut().zip(p.sums).for_each(|(a, b)| *a += b);
        },
    );
    if acc.total <= 0.0 {
        return Err(TeacherError::EmptySupport);
    }
    let model = match mode {
        LikelihoodMode::InversePlanning => ModelName::Bot,
        LikelihoodMode::Feasibility => ModelName::NoIpBayes,
        LikelihoodMode::PriorOnly => ModelName::PriorOnlyBayes,
    };
    Ok(UtilityVector { model, utilities: acc.sums.into_iter().map(|s| s / acc.total).collect() })
}

/// Posterior probability that each edge is missing from the learner's
/// knowledge.
pub fn unknown_edge_marginals(
    graph: &TaskGraph,
    traj: &Trajectory,
    mode: LikelihoodMode,
) -> Result<Vec<f64>, TeacherError> {
    let c = check_inputs(graph, traj)?;
    let en = Enumeration::new(&c, traj.indices(), mode, TeacherConfig::default());
    let n_edges = c.num_edges();
    let acc = en.fold(
        || GainAcc { total: 0.0, sums: vec![0.0; n_edges] },
        |acc, mask, w, _| {
            acc.total += w;
            for x in 0..n_edges {
                if mask >> x & 1 == 0 {
                    acc.sums[x] += w;
                }
            }
        },
        |out, p| {
            out.total += p.total;
            out.sums.iter_mut().zip(p.sums).for_each(|(a, b)| *a += b);
        },
    );
    if acc.total <= 0.0 {
        return Err(TeacherError::EmptySupport);
    }
    Ok(acc.sums.into_iter().map(|s| s / acc.total).collect())
}

/// Per-edge heuristic features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Sum of the two endpoint rewards.
    pub reward: Vec<f64>,
    /// Layer index of the edge (larger is lower in the graph).
    pub depth: Vec<f64>,
}

pub fn heuristic_features(graph: &TaskGraph) -> Result<FeatureVector, TeacherError> {
    heuristic_features_with(graph, DepthFeature::default())
}

pub fn heuristic_features_with(graph: &TaskGraph, depth: DepthFeature) -> Result<FeatureVector, TeacherError> {
    let c = Compiled::new(graph)?;
    let reward = (0..c.num_edges()).map(|e| (c.reward[c.src[e]] + c.reward[c.dst[e]]) as f64).collect();
    let depth = (0..c.num_edges())
        .map(|e| match depth {
            DepthFeature::ChildLayer => c.layer[c.dst[e]] as f64,
            DepthFeature::ParentLayer => c.layer[c.src[e]] as f64,
        })
        .collect();
    Ok(FeatureVector { reward, depth })
}

/// Linear feature weights of the Reward+Depth model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub reward: f64,
    pub depth: f64,
}

/// Mean return of the complete paths through each edge; 0 for edges on no
/// complete path.
pub fn path_averaged_utilities(graph: &TaskGraph) -> Result<Vec<f64>, TeacherError> {
    let c = Compiled::new(graph)?;
    let mut sum = vec![0i64; c.num_edges()];
    let mut count = vec![0u32; c.num_edges()];
    for path in c.complete_paths(c.full_mask()) {
        let r = c.path_return(&path);
        for e in path {
            sum[e] += r;
            count[e] += 1;
        }
    }
    Ok(sum.into_iter().zip(count).map(|(s, n)| if n == 0 { 0.0 } else { s as f64 / f64::from(n) }).collect())
}

/// Utilities of any model. `weights` is required for [`ModelName::RewardDepth`]
/// and ignored otherwise.
pub fn utilities(
    graph: &TaskGraph,
    traj: &Trajectory,
    model: ModelName,
    weights: Option<FeatureWeights>,
) -> Result<UtilityVector, TeacherError> {
    utilities_with(graph, traj, model, weights, TeacherConfig::default())
}

pub fn utilities_with(
    graph: &TaskGraph,
    traj: &Trajectory,
    model: ModelName,
    weights: Option<FeatureWeights>,
    cfg: TeacherConfig,
) -> Result<UtilityVector, TeacherError> {
    let utilities = match model {
        ModelName::Bot | ModelName::NoIpBayes | ModelName::PriorOnlyBayes => {
            let mode = model.likelihood_mode().expect("bayesian model");
            return bot_utilities_with(graph, traj, mode, cfg);
        }
        ModelName::RewardHeuristic => heuristic_features_with(graph, cfg.depth_feature)?.reward,
        ModelName::DepthHeuristic => heuristic_features_with(graph, cfg.depth_feature)?.depth,
        ModelName::RewardDepth => {
            let w = weights.ok_or(TeacherError::MissingWeights(model))?;
            let f = heuristic_features_with(graph, cfg.depth_feature)?;
            f.reward.iter().zip(&f.depth).map(|(r, d)| w.reward * r + w.depth * d).collect()
        }
        ModelName::QValue => crate::planner::q_values(graph)?.into_iter().map(|q| q as f64).collect(),
        ModelName::PathAveraged => path_averaged_utilities(graph)?,
    };
    Ok(UtilityVector { model, utilities })
}

/// Softmax choice probabilities. `beta = f64::INFINITY` is the argmax
/// policy: uniform over the tied maxima.
pub fn choice_distribution(utilities: &[f64], beta: f64) -> Vec<f64> {
    if utilities.is_empty() {
        return Vec::new();
    }
    if beta.is_infinite() {
        let best = argmax(utilities);
        let p = 1.0 / best.len() as f64;
        let mut out = vec![0.0; utilities.len()];
        best.into_iter().for_each(|i| out[i] = p);
        return out;
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utilities.iter().map(|u| (beta * (u - max)).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|x| x / z).collect()
}

/// `ln P(choice)` under the softmax, evaluated stably.
pub fn log_choice_probability(utilities: &[f64], beta: f64, choice: usize) -> f64 {
    let scaled: Vec<f64> = utilities.iter().map(|u| beta * u).collect();
    scaled[choice] - log_sum_exp(&scaled)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
