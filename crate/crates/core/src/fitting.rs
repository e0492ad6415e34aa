//! Per-subject maximum-likelihood fits and BIC model comparison.
//!
//! Single-utility models have one free parameter, the softmax inverse
//! temperature `beta`. Its log-likelihood is concave, so a log-spaced grid
//! followed by golden-section refinement finds the global maximum on
//! `[0, BETA_MAX]`. The Reward+Depth model is a two-feature conditional
//! logit fitted by Newton's method; when the likelihood keeps rising towards
//! infinity (perfect separation) the weights are capped at `WEIGHT_CAP` and
//! the fit is flagged.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{TaskGraph, Trajectory};
use crate::records::{Condition, DatasetError, Provenance, SubjectDataset, TrialFilter, TrialRecord};
use crate::stimuli::TrialStimulus;
use crate::teachers::{
    choice_distribution, heuristic_features_with, log_sum_exp, utilities_with, FeatureWeights, ModelName,
    TeacherConfig, TeacherError,
};

pub const BETA_GRID_MIN: f64 = 1e-3;
pub const BETA_MAX: f64 = 50.0;
pub const BETA_GRID_POINTS: usize = 200;
pub const BETA_TOLERANCE: f64 = 1e-6;
pub const WEIGHT_CAP: f64 = 50.0;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// BIC values closer than this count as tied.
pub const BIC_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("subject {0} has no usable trials")]
    Empty(String),
    #[error("model comparison needs at least two models")]
    TooFewModels,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// `k ln n - 2 logL`.
pub fn bic(k_params: usize, n_trials: usize, log_likelihood: f64) -> f64 {
    k_params as f64 * (n_trials as f64).ln() - 2.0 * log_likelihood
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_reward: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_depth: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub subject_id: String,
    pub model: ModelName,
    pub params: FitParams,
    pub log_likelihood: f64,
    pub n_trials: usize,
    pub k_params: usize,
    pub bic: f64,
    /// A parameter sits on its search bound.
    #[serde(default)]
    pub at_boundary: bool,
    /// The conditional logit is perfectly separated and the weights capped.
    #[serde(default)]
    pub separation: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub filter: TrialFilter,
    pub teacher: TeacherConfig,
}

/// One usable trial reduced to what a single-utility model needs.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedTrial {
    pub utilities: Arc<Vec<f64>>,
    pub chosen: usize,
}

/// One usable trial for the conditional logit: `[reward, depth]` per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTrial {
    pub features: Vec<[f64; 2]>,
    pub chosen: usize,
}

type CacheKey = (TaskGraph, Vec<usize>, ModelName, TeacherConfig);

/// Memoized utilities, shared across subjects that saw the same trials.
#[derive(Default)]
pub struct UtilityCache {
    map: Mutex<HashMap<CacheKey, Arc<Vec<f64>>>>,
}

impl UtilityCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Utilities of `model` (not Reward+Depth) on one trial.
    pub fn get(
        &self,
        graph: &TaskGraph,
        traj: &Trajectory,
        model: ModelName,
        cfg: TeacherConfig,
    ) -> Result<Arc<Vec<f64>>, TeacherError> {
        let traj_key = if model.uses_trajectory() { traj.indices().to_vec() } else { Vec::new() };
        let key = (graph.clone(), traj_key, model, cfg);
        if let Some(hit) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let u = Arc::new(utilities_with(graph, traj, model, None, cfg)?.utilities);
        self.map.lock().expect("cache lock").insert(key, Arc::clone(&u));
        Ok(u)
    }
}

pub fn prepare_trials(
    dataset: &SubjectDataset,
    model: ModelName,
    opts: &FitOptions,
    cache: &UtilityCache,
) -> Result<Vec<PreparedTrial>, FitError> {
    dataset
        .usable_trials(opts.filter)?
        .into_par_iter()
        .map(|t| {
            let utilities = cache.get(&t.record.graph, &t.trajectory, model, opts.teacher)?;
            Ok(PreparedTrial { utilities, chosen: t.chosen })
        })
        .collect()
}

pub fn prepare_feature_trials(dataset: &SubjectDataset, opts: &FitOptions) -> Result<Vec<FeatureTrial>, FitError> {
    dataset
        .usable_trials(opts.filter)?
        .into_iter()
        .map(|t| {
            let f = heuristic_features_with(&t.record.graph, opts.teacher.depth_feature)?;
            let features = f.reward.iter().zip(&f.depth).map(|(&r, &d)| [r, d]).collect();
            Ok(FeatureTrial { features, chosen: t.chosen })
        })
        .collect()
}

/// Summed softmax log-likelihood at `beta`.
pub fn softmax_log_likelihood(trials: &[PreparedTrial], beta: f64) -> f64 {
    trials
        .iter()
        .map(|t| {
            let scaled: Vec<f64> = t.utilities.iter().map(|u| beta * u).collect();
            scaled[t.chosen] - log_sum_exp(&scaled)
        })
        .sum()
}

/// `sum_t ln(1 / |E_t|)`, the likelihood of uniform random choice.
pub fn uniform_floor(trials: &[PreparedTrial]) -> f64 {
    trials.iter().map(|t| -(t.utilities.len() as f64).ln()).sum()
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    (lo + hi) / 2.0
}

/// Maximizes the softmax likelihood over `beta` in `[0, BETA_MAX]`.
/// Returns `(beta, logL)`.
pub fn fit_beta(trials: &[PreparedTrial]) -> (f64, f64) {
    let ll = |b: f64| softmax_log_likelihood(trials, b);
    let ratio = (BETA_MAX / BETA_GRID_MIN).powf(1.0 / (BETA_GRID_POINTS - 1) as f64);
    let mut grid = vec![0.0];
    grid.extend((0..BETA_GRID_POINTS).map(|i| BETA_GRID_MIN * ratio.powi(i as i32)));
    *grid.last_mut().expect("grid") = BETA_MAX;
    let values: Vec<f64> = grid.iter().map(|&b| ll(b)).collect();
    let best = (0..grid.len()).fold(0, |b, i| if values[i] > values[b] { i } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let refined = golden_section_max(ll, lo, hi, BETA_TOLERANCE);
    // The refined point can only lose against the grid through rounding.
    let (beta, value) = [(refined, ll(refined)), (grid[best], values[best])]
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    (beta, value)
}

fn fit_result(subject: &str, model: ModelName, params: FitParams, ll: f64, n: usize, k: usize) -> FitResult {
    FitResult {
        subject_id: subject.to_owned(),
        model,
        params,
        log_likelihood: ll,
        n_trials: n,
        k_params: k,
        bic: bic(k, n, ll),
        at_boundary: false,
        separation: false,
    }
}

pub fn fit_softmax_prepared(subject: &str, model: ModelName, trials: &[PreparedTrial]) -> Result<FitResult, FitError> {
    if trials.is_empty() {
        return Err(FitError::Empty(subject.to_owned()));
    }
    let (beta, ll) = fit_beta(trials);
    let mut fit = fit_result(subject, model, FitParams { beta: Some(beta), ..Default::default() }, ll, trials.len(), 1);
    fit.at_boundary = BETA_MAX - beta < 10.0 * BETA_TOLERANCE;
    Ok(fit)
}

/// Fits `beta` for a single-utility model.
pub fn fit_softmax(
    dataset: &SubjectDataset,
    model: ModelName,
    opts: &FitOptions,
    cache: &UtilityCache,
) -> Result<FitResult, FitError> {
    if model == ModelName::RewardDepth {
        return fit_reward_depth(dataset, opts);
    }
    let trials = prepare_trials(dataset, model, opts, cache)?;
    fit_softmax_prepared(&dataset.subject_id, model, &trials)
}

fn dot(w: [f64; 2], x: [f64; 2]) -> f64 {
    w[0] * x[0] + w[1] * x[1]
}

/// Conditional-logit log-likelihood with `P(e) ∝ exp(w · x_e)`.
pub fn logit_log_likelihood(trials: &[FeatureTrial], w: [f64; 2]) -> f64 {
    trials
        .iter()
        .map(|t| {
            let s: Vec<f64> = t.features.iter().map(|&x| dot(w, x)).collect();
            s[t.chosen] - log_sum_exp(&s)
        })
        .sum()
}

/// Analytic gradient: `sum_t (x_chosen - E_p[x])`.
pub fn logit_gradient(trials: &[FeatureTrial], w: [f64; 2]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for t in trials {
        let s: Vec<f64> = t.features.iter().map(|&x| dot(w, x)).collect();
        let p = choice_distribution(&s, 1.0);
        for k in 0..2 {
            let mean: f64 = p.iter().zip(&t.features).map(|(p, x)| p * x[k]).sum();
            g[k] += t.features[t.chosen][k] - mean;
        }
    }
    g
}

/// Hessian: `-sum_t Cov_p[x]`.
fn logit_hessian(trials: &[FeatureTrial], w: [f64; 2]) -> [[f64; 2]; 2] {
    let mut h = [[0.0; 2]; 2];
    for t in trials {
        let s: Vec<f64> = t.features.iter().map(|&x| dot(w, x)).collect();
        let p = choice_distribution(&s, 1.0);
        let mean = [0, 1].map(|k| p.iter().zip(&t.features).map(|(p, x)| p * x[k]).sum::<f64>());
        for a in 0..2 {
            for b in 0..2 {
                let cov: f64 = p.iter().zip(&t.features).map(|(p, x)| p * (x[a] - mean[a]) * (x[b] - mean[b])).sum();
                h[a][b] -= cov;
            }
        }
    }
    h
}

fn norm(g: [f64; 2]) -> f64 {
    g[0].hypot(g[1])
}

/// Newton ascent from the origin. `None` when an iterate leaves the weight
/// box or the iteration budget runs out.
fn newton_logit(trials: &[FeatureTrial]) -> Option<[f64; 2]> {
    let mut w = [0.0, 0.0];
    let mut ll = logit_log_likelihood(trials, w);
    for _ in 0..500 {
        let g = logit_gradient(trials, w);
        if norm(g) < GRADIENT_TOLERANCE {
            return (!diverging(trials, w, ll)).then_some(w);
        }
        let h = logit_hessian(trials, w);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let step = if det.abs() > 1e-12 && h[0][0] < 0.0 {
            [-(h[1][1] * g[0] - h[0][1] * g[1]) / det, -(-h[1][0] * g[0] + h[0][0] * g[1]) / det]
        } else {
            g
        };
        let mut t = 1.0;
        loop {
            let cand = [w[0] + t * step[0], w[1] + t * step[1]];
            let cand_ll = logit_log_likelihood(trials, cand);
            if cand_ll >= ll {
                w = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                // No ascent left along this direction: at the optimum up to
                // floating-point resolution.
                return (!diverging(trials, w, ll)).then_some(w);
            }
        }
        if w.iter().any(|x| x.abs() > WEIGHT_CAP) {
            return None;
        }
    }
    None
}

/// A vanishing gradient can also mean the likelihood keeps creeping up
/// toward a supremum at infinity. An interior maximum of a concave
/// likelihood drops strictly when the weights are doubled.
fn diverging(trials: &[FeatureTrial], w: [f64; 2], ll: f64) -> bool {
    norm(w) > 0.0 && logit_log_likelihood(trials, [2.0 * w[0], 2.0 * w[1]]) >= ll
}

/// Cyclic coordinate ascent inside `[-WEIGHT_CAP, WEIGHT_CAP]^2`.
fn boxed_logit(trials: &[FeatureTrial]) -> [f64; 2] {
    let mut w = [0.0, 0.0];
    let mut ll = logit_log_likelihood(trials, w);
    for _ in 0..1000 {
        for k in 0..2 {
            let f = |x: f64| {
                let mut c = w;
                c[k] = x;
                logit_log_likelihood(trials, c)
            };
            w[k] = golden_section_max(f, -WEIGHT_CAP, WEIGHT_CAP, 1e-10);
        }
        let next = logit_log_likelihood(trials, w);
        if next - ll < 1e-13 {
            break;
        }
        ll = next;
    }
    // The likelihood flattens out in floating point well before the cap;
    // a plateau reaching the boundary is resolved onto the boundary.
    for k in 0..2 {
        if w[k] == 0.0 {
            continue;
        }
        let mut c = w;
        c[k] = WEIGHT_CAP.copysign(w[k]);
        let at_cap = logit_log_likelihood(trials, c);
        if at_cap >= ll {
            w = c;
            ll = at_cap;
        }
    }
    w
}

pub fn fit_reward_depth_prepared(subject: &str, trials: &[FeatureTrial]) -> Result<FitResult, FitError> {
    if trials.is_empty() {
        return Err(FitError::Empty(subject.to_owned()));
    }
    let (w, separation) = match newton_logit(trials) {
        Some(w) => (w, false),
        None => (boxed_logit(trials), true),
    };
    let ll = logit_log_likelihood(trials, w);
    let params = FitParams { beta: None, w_reward: Some(w[0]), w_depth: Some(w[1]) };
    let mut fit = fit_result(subject, ModelName::RewardDepth, params, ll, trials.len(), 2);
    fit.separation = separation;
    fit.at_boundary = w.iter().any(|x| x.abs() >= WEIGHT_CAP);
    Ok(fit)
}

/// Conditional-logit fit of the Reward+Depth weights.
pub fn fit_reward_depth(dataset: &SubjectDataset, opts: &FitOptions) -> Result<FitResult, FitError> {
    let trials = prepare_feature_trials(dataset, opts)?;
    fit_reward_depth_prepared(&dataset.subject_id, &trials)
}

pub fn fit_model(
    dataset: &SubjectDataset,
    model: ModelName,
    opts: &FitOptions,
    cache: &UtilityCache,
) -> Result<FitResult, FitError> {
    match model {
        ModelName::RewardDepth => fit_reward_depth(dataset, opts),
        _ => fit_softmax(dataset, model, opts, cache),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub subject_id: String,
    pub fits: Vec<FitResult>,
    pub best: ModelName,
    /// Another model's BIC ties the winner's.
    pub tie: bool,
    /// `BIC_reward - BIC_bot` when both were fitted; positive favors the
    /// Bayes-optimal teacher.
    pub delta_bic: Option<f64>,
}

/// Winner by lowest BIC, ties broken by the order of `fits`.
pub fn select_best(fits: &[FitResult]) -> (ModelName, bool) {
    let best = fits.iter().fold(&fits[0], |b, f| if f.bic < b.bic { f } else { b });
    let tie = fits.iter().filter(|f| (f.bic - best.bic).abs() <= BIC_TIE_TOLERANCE).count() > 1;
    (best.model, tie)
}

pub fn delta_bic(fits: &[FitResult]) -> Option<f64> {
    let find = |m| fits.iter().find(|f| f.model == m).map(|f| f.bic);
    Some(find(ModelName::RewardHeuristic)? - find(ModelName::Bot)?)
}

pub fn compare(
    dataset: &SubjectDataset,
    models: &[ModelName],
    opts: &FitOptions,
    cache: &UtilityCache,
) -> Result<Comparison, FitError> {
    if models.len() < 2 {
        return Err(FitError::TooFewModels);
    }
    let mut ordered = models.to_vec();
    ordered.sort_by_key(|m| ModelName::ALL.iter().position(|x| x == m));
    ordered.dedup();
    let fits = ordered.iter().map(|&m| fit_model(dataset, m, opts, cache)).collect::<Result<Vec<_>, _>>()?;
    let (best, tie) = select_best(&fits);
    Ok(Comparison { subject_id: dataset.subject_id.clone(), delta_bic: delta_bic(&fits), fits, best, tie })
}

/// Parameters of a simulated teacher.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimParams {
    /// Softmax with inverse temperature `beta`.
    Beta(f64),
    /// Uniform over the utility maxima.
    Argmax,
    /// Reward+Depth conditional logit with these weights.
    Weights(FeatureWeights),
}

/// Samples one choice per trial from `model`'s choice distribution.
pub fn simulate_subject(
    subject_id: &str,
    sequence: &[TrialStimulus],
    condition: Condition,
    model: ModelName,
    params: SimParams,
    seed: u64,
    cache: &UtilityCache,
) -> Result<SubjectDataset, FitError> {
    let cfg = TeacherConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dataset = SubjectDataset::new(subject_id, Provenance::Simulated, condition);
    for (i, stimulus) in sequence.iter().enumerate() {
        let probs = match (model, params) {
            (_, SimParams::Weights(w)) => {
                let u = utilities_with(&stimulus.graph, &stimulus.trajectory, ModelName::RewardDepth, Some(w), cfg)?;
                choice_distribution(&u.utilities, 1.0)
            }
            (ModelName::RewardDepth, _) => return Err(TeacherError::MissingWeights(model).into()),
            (_, SimParams::Beta(beta)) => {
                choice_distribution(&cache.get(&stimulus.graph, &stimulus.trajectory, model, cfg)?, beta)
            }
            (_, SimParams::Argmax) => {
                choice_distribution(&cache.get(&stimulus.graph, &stimulus.trajectory, model, cfg)?, f64::INFINITY)
            }
        };
        let pick = WeightedIndex::new(&probs).expect("valid distribution").sample(&mut rng);
        let mut record = TrialRecord::for_stimulus(i, stimulus, condition.scaffold_for(stimulus.role));
        record.chosen = stimulus.graph.edge(pick);
        dataset.trials.push(record);
    }
    Ok(dataset)
}

/// Generator-by-winner counts from a model-recovery study.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: BTreeMap<ModelName, BTreeMap<ModelName, usize>>,
}

impl ConfusionMatrix {
    pub fn record(&mut self, generator: ModelName, winner: ModelName) {
        *self.counts.entry(generator).or_default().entry(winner).or_default() += 1;
    }

    /// Fraction of `generator`'s subjects recovered as `generator`.
    pub fn recovery_rate(&self, generator: ModelName) -> f64 {
        let Some(row) = self.counts.get(&generator) else { return 0.0 };
        let total: usize = row.values().sum();
        if total == 0 {
            return 0.0;
        }
        row.get(&generator).copied().unwrap_or(0) as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::example_graph;
    use crate::records::Phase;
    use crate::stimuli::{generate_pool, Congruency, StimulusConfig};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn pool(n: usize, seed: u64) -> Vec<TrialStimulus> {
        generate_pool(&StimulusConfig::default(), n, None, seed).unwrap()
    }

    #[test]
    fn bic_formula() {
        assert_abs_diff_eq!(bic(2, 40, -80.0), 2.0 * 40f64.ln() + 160.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bic(2, 40, -80.0), 167.378, epsilon = 1e-3);
    }

    #[test]
    fn uniform_choices_never_fit_below_the_floor() {
        let stimuli = pool(40, 1);
        let cache = UtilityCache::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut d = SubjectDataset::new("u", Provenance::Simulated, Condition::baseline());
        for (i, s) in stimuli.iter().enumerate() {
            let mut r = TrialRecord::for_stimulus(i, s, None);
            r.chosen = s.graph.edge(rng.gen_range(0..17));
            d.trials.push(r);
        }
        let trials = prepare_trials(&d, ModelName::Bot, &FitOptions::default(), &cache).unwrap();
        let floor = uniform_floor(&trials);
        assert_abs_diff_eq!(floor, 40.0 * (1.0f64 / 17.0).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(floor, -113.33, epsilon = 5e-3);
        assert_abs_diff_eq!(softmax_log_likelihood(&trials, 0.0), floor, epsilon = 1e-12);
        for m in ModelName::ALL {
            let fit = fit_model(&d, m, &FitOptions::default(), &cache).unwrap();
            assert!(fit.log_likelihood >= floor - 1e-12, "{m}: {} < {floor}", fit.log_likelihood);
            assert_eq!(fit.bic, bic(fit.k_params, fit.n_trials, fit.log_likelihood));
        }
    }

    #[test]
    fn argmax_consistent_choices_push_beta_to_the_bound() {
        let stimuli = pool(30, 2);
        let cache = UtilityCache::new();
        let d = simulate_subject("a", &stimuli, Condition::baseline(), ModelName::QValue, SimParams::Argmax, 1, &cache)
            .unwrap();
        let trials = prepare_trials(&d, ModelName::QValue, &FitOptions::default(), &cache).unwrap();
        if trials.iter().all(|t| crate::teachers::argmax(&t.utilities).len() == 1) {
            let fit = fit_softmax_prepared("a", ModelName::QValue, &trials).unwrap();
            assert!(fit.at_boundary);
            assert!(fit.log_likelihood > -1e-6);
        }
    }

    #[test]
    fn beta_is_recovered() {
        let stimuli = pool(200, 3);
        let cache = UtilityCache::new();
        let d = simulate_subject("b", &stimuli, Condition::baseline(), ModelName::Bot, SimParams::Beta(3.0), 8, &cache)
            .unwrap();
        let fit = fit_softmax(&d, ModelName::Bot, &FitOptions::default(), &cache).unwrap();
        let beta = fit.params.beta.unwrap();
        assert!((beta - 3.0).abs() <= 0.6, "beta {beta}");
    }

    #[test]
    fn golden_refinement_reaches_the_grid_optimum() {
        let stimuli = pool(60, 5);
        let cache = UtilityCache::new();
        let d = simulate_subject(
            "g",
            &stimuli,
            Condition::baseline(),
            ModelName::RewardHeuristic,
            SimParams::Beta(0.7),
            2,
            &cache,
        )
        .unwrap();
        let trials = prepare_trials(&d, ModelName::RewardHeuristic, &FitOptions::default(), &cache).unwrap();
        let (beta, ll) = fit_beta(&trials);
        for b in [beta - 1e-3, beta + 1e-3, 0.5, 1.0] {
            assert!(softmax_log_likelihood(&trials, b) <= ll + 1e-12);
        }
    }

    #[test]
    fn reward_depth_weights_are_recovered() {
        let stimuli = pool(200, 6);
        let cache = UtilityCache::new();
        let w = FeatureWeights { reward: 2.0, depth: 0.0 };
        let d = simulate_subject(
            "w",
            &stimuli,
            Condition::baseline(),
            ModelName::RewardDepth,
            SimParams::Weights(w),
            3,
            &cache,
        )
        .unwrap();
        let fit = fit_reward_depth(&d, &FitOptions::default()).unwrap();
        let (wr, wd) = (fit.params.w_reward.unwrap(), fit.params.w_depth.unwrap());
        assert!((wr - 2.0).abs() <= 0.4, "w_r {wr}");
        assert!(wd.abs() <= 0.5, "w_d {wd}");
        assert!(!fit.separation);
        let trials = prepare_feature_trials(&d, &FitOptions::default()).unwrap();
        assert!(norm(logit_gradient(&trials, [wr, wd])) < 1e-6);
    }

    #[test]
    fn equal_features_fit_at_the_origin() {
        let trials: Vec<FeatureTrial> =
            (0..10).map(|i| FeatureTrial { features: vec![[1.0, 2.0]; 5], chosen: i % 5 }).collect();
        let fit = fit_reward_depth_prepared("eq", &trials).unwrap();
        assert_eq!((fit.params.w_reward, fit.params.w_depth), (Some(0.0), Some(0.0)));
        assert_abs_diff_eq!(fit.log_likelihood, 10.0 * (0.2f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn perfect_separation_is_capped_and_flagged() {
        let trials: Vec<FeatureTrial> =
            (0..10).map(|_| FeatureTrial { features: vec![[0.0, 1.0], [3.0, 1.0], [1.0, 1.0]], chosen: 1 }).collect();
        let fit = fit_reward_depth_prepared("sep", &trials).unwrap();
        assert!(fit.separation);
        assert!(fit.params.w_reward.unwrap() >= WEIGHT_CAP - 1e-6);
        assert!(fit.params.w_reward.unwrap() <= WEIGHT_CAP);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let stimuli = pool(30, 7);
        let cache = UtilityCache::new();
        let d =
            simulate_subject("fd", &stimuli, Condition::baseline(), ModelName::Bot, SimParams::Beta(2.0), 5, &cache)
                .unwrap();
        let trials = prepare_feature_trials(&d, &FitOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            let w = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let g = logit_gradient(&trials, w);
            let h = 1e-5;
            for k in 0..2 {
                let (mut up, mut down) = (w, w);
                up[k] += h;
                down[k] -= h;
                let fd = (logit_log_likelihood(&trials, up) - logit_log_likelihood(&trials, down)) / (2.0 * h);
                assert!((fd - g[k]).abs() / g[k].abs().max(1e-8) < 1e-4, "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn comparison_ties_and_sign() {
        let mk = |m, bic| FitResult {
            subject_id: "s".into(),
            model: m,
            params: FitParams::default(),
            log_likelihood: 0.0,
            n_trials: 1,
            k_params: 1,
            bic,
            at_boundary: false,
            separation: false,
        };
        let fits = vec![mk(ModelName::Bot, 10.0), mk(ModelName::RewardHeuristic, 10.0)];
        assert_eq!(select_best(&fits), (ModelName::Bot, true));
        let a = vec![mk(ModelName::Bot, 10.0), mk(ModelName::RewardHeuristic, 14.0)];
        let b = vec![mk(ModelName::Bot, 14.0), mk(ModelName::RewardHeuristic, 10.0)];
        assert_eq!(delta_bic(&a), Some(4.0));
        assert_eq!(delta_bic(&b), Some(-4.0));
        assert_eq!(select_best(&a), (ModelName::Bot, false));
    }

    #[test]
    fn compare_needs_two_models_and_data() {
        let cache = UtilityCache::new();
        let d = SubjectDataset::new("e", Provenance::Human, Condition::baseline());
        assert!(matches!(compare(&d, &[ModelName::Bot], &FitOptions::default(), &cache), Err(FitError::TooFewModels)));
        assert!(matches!(fit_softmax(&d, ModelName::Bot, &FitOptions::default(), &cache), Err(FitError::Empty(_))));
    }

    #[test]
    fn simulation_properties() {
        let stimuli = pool(40, 8);
        let cache = UtilityCache::new();
        let a = simulate_subject("s", &stimuli, Condition::baseline(), ModelName::Bot, SimParams::Beta(1.0), 9, &cache)
            .unwrap();
        assert_eq!(
            a,
            simulate_subject("s", &stimuli, Condition::baseline(), ModelName::Bot, SimParams::Beta(1.0), 9, &cache)
                .unwrap()
        );
        assert_eq!(a.trials.len(), 40);
        let argmax =
            simulate_subject("s", &stimuli, Condition::baseline(), ModelName::Bot, SimParams::Argmax, 9, &cache)
                .unwrap();
        for r in &argmax.trials {
            let u = cache.get(&r.graph, &r.trajectory().unwrap(), ModelName::Bot, TeacherConfig::default()).unwrap();
            let best = u.iter().copied().fold(f64::MIN, f64::max);
            assert_eq!(u[r.chosen_index().unwrap()], best);
        }
    }

    #[test]
    fn zero_beta_choices_are_uniform() {
        let g = example_graph();
        let s = TrialStimulus {
            learner_knowledge: crate::fixtures::example_learner_set(&g),
            trajectory: crate::fixtures::example_trajectory(&g),
            graph: g,
            congruency: Congruency::Congruent,
            role: Phase::Train,
        };
        let seq = vec![s; 3400];
        let cache = UtilityCache::new();
        let d = simulate_subject("z", &seq, Condition::baseline(), ModelName::Bot, SimParams::Beta(0.0), 1, &cache)
            .unwrap();
        let mut counts = [0usize; 17];
        d.trials.iter().for_each(|r| counts[r.chosen_index().unwrap()] += 1);
        // 200 expected per edge, binomial sd ~ 13.7; allow 5 sd.
        assert!(counts.iter().all(|&c| (131..=269).contains(&c)), "{counts:?}");
    }
}
