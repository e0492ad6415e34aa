//! Teaching Score and the summary statistics built on it.
//!
//! The Teaching Score of a choice is its Bayes-optimal teaching utility
//! divided by the best utility available on that trial. Trials whose best
//! utility is zero score 1.0 and are flagged as degenerate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::fitting::{Comparison, UtilityCache};
use crate::graph::{Edge, GraphError, TaskGraph, Trajectory};
use crate::records::{Condition, DatasetError, Phase, ScaffoldKind, SubjectDataset, TrialFilter};
use crate::stimuli::Congruency;
use crate::teachers::{
    bot_utilities, heuristic_features, unknown_edge_marginals, LikelihoodMode, ModelName, TeacherConfig, TeacherError,
};

/// Two-sided normal quantile for a 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("profiles cover different graph ids")]
    ProfileMismatch,
    #[error("selection curves need a fixed edge count; saw {0} and {1}")]
    EdgeCountMismatch(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    pub score: f64,
    /// The trial's best utility is zero, so every choice scores 1.0.
    pub degenerate: bool,
}

/// Teaching Score from precomputed Bayes-optimal utilities.
pub fn score_from_utilities(utilities: &[f64], chosen: usize) -> ScoreOutcome {
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return ScoreOutcome { score: 1.0, degenerate: true };
    }
    ScoreOutcome { score: (utilities[chosen] / max).clamp(0.0, 1.0), degenerate: false }
}

pub fn teaching_score(graph: &TaskGraph, traj: &Trajectory, chosen: Edge) -> Result<ScoreOutcome, AnalysisError> {
    let index = graph.require_edge(chosen)?;
    let u = bot_utilities(graph, traj, LikelihoodMode::InversePlanning)?;
    Ok(score_from_utilities(&u.utilities, index))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub subject_id: String,
    pub trial: usize,
    /// Graph id with flips pooled onto their originals.
    pub graph_id: String,
    pub flipped: bool,
    pub condition: Condition,
    pub phase: Phase,
    pub congruency: Congruency,
    pub score: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub trials: Vec<ScoredTrial>,
}

/// Scores every answered trial; missing answers are skipped.
pub fn score_datasets(datasets: &[SubjectDataset], cache: &UtilityCache) -> Result<ScoreSeries, AnalysisError> {
    let mut trials = Vec::new();
    for d in datasets {
        for t in d.usable_trials(TrialFilter::All)? {
            let u = cache.get(&t.record.graph, &t.trajectory, ModelName::Bot, TeacherConfig::default())?;
            let outcome = score_from_utilities(&u, t.chosen);
            trials.push(ScoredTrial {
                subject_id: d.subject_id.clone(),
                trial: t.record.trial,
                graph_id: t.record.graph.base_id().to_owned(),
                flipped: t.record.graph.is_flipped(),
                condition: d.condition,
                phase: t.record.phase,
                congruency: t.record.congruency,
                score: outcome.score,
                degenerate: outcome.degenerate,
            });
        }
    }
    Ok(ScoreSeries { trials })
}

/// Pearson correlation; 0 when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Two-sided p-value of a Pearson `r` over `n` pairs, from the t
/// distribution with `n - 2` degrees of freedom.
pub fn pearson_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return f64::NAN;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * dist.sf(t.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    /// `(trial index, mean score, subjects)` per trial index.
    pub points: Vec<(usize, f64, usize)>,
    /// Correlation of trial index with score over all scored trials.
    pub r: f64,
}

pub fn learning_curve(series: &ScoreSeries) -> Result<LearningCurve, AnalysisError> {
    if series.trials.len() < 2 {
        return Err(AnalysisError::TooFew { needed: 2, got: series.trials.len() });
    }
    let mut by_trial: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for t in &series.trials {
        let e = by_trial.entry(t.trial).or_default();
        e.0 += t.score;
        e.1 += 1;
    }
    let points = by_trial.into_iter().map(|(i, (s, n))| (i, s / n as f64, n)).collect();
    let x: Vec<f64> = series.trials.iter().map(|t| t.trial as f64).collect();
    let y: Vec<f64> = series.trials.iter().map(|t| t.score).collect();
    Ok(LearningCurve { points, r: pearson(&x, &y) })
}

/// Mean score per graph, flips pooled with their originals.
pub fn graphwise_profile(series: &ScoreSeries) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for t in &series.trials {
        let e = acc.entry(t.graph_id.clone()).or_default();
        e.0 += t.score;
        e.1 += 1;
    }
    acc.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Correlates two graph-wise profiles over the same graph ids.
pub fn correlate(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<Correlation, AnalysisError> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(AnalysisError::ProfileMismatch);
    }
    if a.len() < 3 {
        return Err(AnalysisError::TooFew { needed: 3, got: a.len() });
    }
    let x: Vec<f64> = a.values().copied().collect();
    let y: Vec<f64> = b.values().copied().collect();
    let r = pearson(&x, &y);
    Ok(Correlation { r, p: pearson_p_value(r, x.len()), n: x.len() })
}

/// Mean score of each subject.
pub fn subject_means(series: &ScoreSeries) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for t in &series.trials {
        let e = acc.entry(t.subject_id.clone()).or_default();
        e.0 += t.score;
        e.1 += 1;
    }
    acc.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionOrdering {
    /// Rank 0 is the edge most likely known to the learner.
    BotUnknown,
    /// Rank 0 is the edge with the lowest endpoint-reward sum.
    RewardRank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionCurve {
    pub ordering: SelectionOrdering,
    /// Probability that the edge at each rank is among the selected ones.
    pub inclusion: Vec<f64>,
    /// `inclusion / 3`: the share of the three selections landing on each
    /// rank (at most 1/3).
    pub share: Vec<f64>,
    pub n_trials: usize,
}

pub const SCAFFOLD_SELECTIONS: usize = 3;

/// Edge indices ordered by ascending key, canonical index breaking ties.
fn rank_edges(keys: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    let mut rank = vec![0; keys.len()];
    for (r, &e) in order.iter().enumerate() {
        rank[e] = r;
    }
    rank
}

/// Per-rank selection probabilities over every trial that carries a
/// non-empty scaffold selection.
pub fn scaffold_selection_curve(
    datasets: &[SubjectDataset],
    ordering: SelectionOrdering,
) -> Result<SelectionCurve, AnalysisError> {
    let mut counts: Vec<f64> = Vec::new();
    let mut n_trials = 0;
    for d in datasets {
        for r in &d.trials {
            let Some(selection) = r.scaffold.as_ref().filter(|s| !s.is_empty()) else { continue };
            let traj = r.trajectory()?;
            let keys = match ordering {
                SelectionOrdering::BotUnknown => {
                    unknown_edge_marginals(&r.graph, &traj, LikelihoodMode::InversePlanning)?
                }
                SelectionOrdering::RewardRank => heuristic_features(&r.graph)?.reward,
            };
            if counts.is_empty() {
                counts = vec![0.0; keys.len()];
            } else if counts.len() != keys.len() {
                return Err(AnalysisError::EdgeCountMismatch(counts.len(), keys.len()));
            }
            let rank = rank_edges(&keys);
            let mut picked: Vec<usize> = selection.iter().filter_map(|&e| r.graph.edge_index(e)).collect();
            picked.sort_unstable();
            picked.dedup();
            for e in picked {
                counts[rank[e]] += 1.0;
            }
            n_trials += 1;
        }
    }
    let inclusion: Vec<f64> = counts.iter().map(|c| if n_trials == 0 { 0.0 } else { c / n_trials as f64 }).collect();
    let share = inclusion.iter().map(|p| p / SCAFFOLD_SELECTIONS as f64).collect();
    Ok(SelectionCurve { ordering, inclusion, share, n_trials })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCell {
    pub condition: Condition,
    pub phase: Phase,
    pub n_subjects: usize,
    pub mean: f64,
    /// Half-width of the 95% interval; `None` with fewer than two subjects.
    pub ci95: Option<f64>,
}

/// Mean of per-subject mean scores per (condition, phase), with a normal
/// approximation 95% interval.
pub fn condition_summary(series: &ScoreSeries) -> Vec<ConditionCell> {
    let mut per_subject: BTreeMap<(Condition, Phase, String), (f64, usize)> = BTreeMap::new();
    for t in &series.trials {
        let e = per_subject.entry((t.condition, t.phase, t.subject_id.clone())).or_default();
        e.0 += t.score;
        e.1 += 1;
    }
    let mut cells: BTreeMap<(Condition, Phase), Vec<f64>> = BTreeMap::new();
    for ((c, p, _), (s, n)) in per_subject {
        cells.entry((c, p)).or_default().push(s / n as f64);
    }
    cells
        .into_iter()
        .map(|((condition, phase), means)| {
            let n = means.len();
            let mean = means.iter().sum::<f64>() / n as f64;
            let ci95 = (n >= 2).then(|| {
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                Z_95 * (var / n as f64).sqrt()
            });
            ConditionCell { condition, phase, n_subjects: n, mean, ci95 }
        })
        .collect()
}

/// Fraction of subjects best fit by each model.
pub fn best_fit_fractions(comparisons: &[Comparison]) -> BTreeMap<ModelName, f64> {
    let mut out = BTreeMap::new();
    for c in comparisons {
        *out.entry(c.best).or_insert(0.0) += 1.0;
    }
    let n = comparisons.len().max(1) as f64;
    out.values_mut().for_each(|v| *v /= n);
    out
}

/// Scaffold kind requested on a trial, for callers splitting selection
/// curves by condition.
pub fn scaffold_kind_of(dataset: &SubjectDataset) -> Option<ScaffoldKind> {
    dataset.condition.scaffolding.kind()
}
