use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use graph_teaching::analysis::{
    best_fit_fractions, condition_summary, correlate, graphwise_profile, learning_curve, scaffold_selection_curve,
    score_datasets, subject_means, Correlation, ScoreSeries, SelectionOrdering,
};
use graph_teaching::fitting::{delta_bic, select_best, Comparison, FitResult, UtilityCache};
use graph_teaching::records::Experiment;
use graph_teaching::{ModelName, SubjectDataset};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct ConditionRow {
    pub condition: String,
    pub phase: String,
    pub n_subjects: usize,
    pub mean: f64,
    pub ci95: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub n_subjects: usize,
    pub n_scored_trials: usize,
    pub n_degenerate_trials: usize,
    pub n_missing_trials: usize,
    pub mean_score: f64,
    pub learning_curve_r: Option<f64>,
    pub conditions: Vec<ConditionRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_correlation: Option<Correlation>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub best_fit: BTreeMap<ModelName, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_bic_positive: Option<f64>,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    subject_id: &'a str,
    trial: usize,
    graph_id: &'a str,
    flipped: bool,
    condition: String,
    phase: String,
    congruency: String,
    score: f64,
    degenerate: bool,
}

#[derive(Serialize)]
struct SelectionRow {
    condition: String,
    ordering: String,
    rank: usize,
    inclusion: f64,
    share: f64,
    n_trials: usize,
}

#[derive(Serialize)]
struct DeltaRow<'a> {
    subject_id: &'a str,
    condition: String,
    best: ModelName,
    tie: bool,
    delta_bic: Option<f64>,
}

fn tag<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(v) => v.to_string(),
        Err(_) => String::new(),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Groups fits by subject into comparisons, keeping first-seen order.
pub fn comparisons(fits: &[FitResult]) -> Vec<Comparison> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_subject: BTreeMap<&str, Vec<FitResult>> = BTreeMap::new();
    for f in fits {
        let entry = by_subject.entry(&f.subject_id).or_default();
        if entry.is_empty() {
            order.push(&f.subject_id);
        }
        entry.push(f.clone());
    }
    order
        .into_iter()
        .map(|id| {
            let mut fits = by_subject.remove(id).unwrap_or_default();
            fits.sort_by_key(|f| ModelName::ALL.iter().position(|m| *m == f.model));
            let (best, tie) = select_best(&fits);
            Comparison { subject_id: id.to_owned(), delta_bic: delta_bic(&fits), fits, best, tie }
        })
        .collect()
}

/// Writes the CSV tables and `summary.json` into `dir`.
///
/// Tables: `scores.csv`, `learning_curve.csv`, `graph_profile.csv`,
/// `subject_means.csv`, `conditions.csv`, plus `selection.csv` when any
/// scaffold selections exist and `best_fit.csv` / `delta_bic.csv` when fits
/// are given.
pub fn write_report(
    dir: &Path,
    datasets: &[SubjectDataset],
    fits: Option<&[FitResult]>,
    reference: Option<&[SubjectDataset]>,
) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let cache = UtilityCache::new();
    let series = score_datasets(datasets, &cache)?;
    let conditions: BTreeMap<&str, String> =
        datasets.iter().map(|d| (d.subject_id.as_str(), d.condition.label())).collect();

    write_csv(
        &dir.join("scores.csv"),
        series.trials.iter().map(|t| ScoreRow {
            subject_id: &t.subject_id,
            trial: t.trial,
            graph_id: &t.graph_id,
            flipped: t.flipped,
            condition: t.condition.label(),
            phase: tag(&t.phase),
            congruency: tag(&t.congruency),
            score: t.score,
            degenerate: t.degenerate,
        }),
    )?;

    let curve = learning_curve(&series).ok();
    let points = curve.as_ref().map(|c| c.points.clone()).unwrap_or_default();
    write_csv(
        &dir.join("learning_curve.csv"),
        points.iter().map(|&(trial, mean_score, n)| LearningRow { trial, mean_score, n }),
    )?;

    let profile = graphwise_profile(&baseline_only(&series));
    write_csv(
        &dir.join("graph_profile.csv"),
        profile.iter().map(|(graph_id, &mean_score)| ProfileRow { graph_id, mean_score }),
    )?;

    let means = subject_means(&series);
    write_csv(
        &dir.join("subject_means.csv"),
        means.iter().map(|(id, &mean_score)| SubjectRow {
            subject_id: id,
            condition: conditions.get(id.as_str()).cloned().unwrap_or_default(),
            mean_score,
        }),
    )?;

    let cells: Vec<ConditionRow> = condition_summary(&series)
        .into_iter()
        .map(|c| ConditionRow {
            condition: c.condition.label(),
            phase: tag(&c.phase),
            n_subjects: c.n_subjects,
            mean: c.mean,
            ci95: c.ci95,
        })
        .collect();
    write_csv(&dir.join("conditions.csv"), cells.iter())?;

    let mut selections = Vec::new();
    let mut by_condition: BTreeMap<String, Vec<SubjectDataset>> = BTreeMap::new();
    for d in datasets.iter().filter(|d| d.condition.experiment == Experiment::Scaffold) {
        by_condition.entry(d.condition.label()).or_default().push(d.clone());
    }
    for (label, group) in &by_condition {
        for ordering in [SelectionOrdering::BotUnknown, SelectionOrdering::RewardRank] {
            let curve = scaffold_selection_curve(group, ordering)?;
            if curve.n_trials == 0 {
                continue;
            }
            for (rank, (&inclusion, &share)) in curve.inclusion.iter().zip(&curve.share).enumerate() {
                selections.push(SelectionRow {
                    condition: label.clone(),
                    ordering: tag(&ordering),
                    rank,
                    inclusion,
                    share,
                    n_trials: curve.n_trials,
                });
            }
        }
    }
    if !selections.is_empty() {
        write_csv(&dir.join("selection.csv"), selections)?;
    }

    let mut best_fit = BTreeMap::new();
    let mut delta_bic_positive = None;
    if let Some(fits) = fits {
        let comps = comparisons(fits);
        best_fit = best_fit_fractions(&comps);
        write_csv(&dir.join("best_fit.csv"), best_fit.iter().map(|(m, &fraction)| BestFitRow { model: *m, fraction }))?;
        write_csv(
            &dir.join("delta_bic.csv"),
            comps.iter().map(|c| DeltaRow {
                subject_id: &c.subject_id,
                condition: conditions.get(c.subject_id.as_str()).cloned().unwrap_or_default(),
                best: c.best,
                tie: c.tie,
                delta_bic: c.delta_bic,
            }),
        )?;
        let deltas: Vec<f64> = comps.iter().filter_map(|c| c.delta_bic).collect();
        if !deltas.is_empty() {
            delta_bic_positive = Some(deltas.iter().filter(|d| **d > 0.0).count() as f64 / deltas.len() as f64);
        }
    }

    let reference_correlation = match reference {
        Some(r) => {
            let other = graphwise_profile(&baseline_only(&score_datasets(r, &cache)?));
            Some(correlate(&profile, &other).context("correlating graph-wise profiles")?)
        }
        None => None,
    };

    let n = series.trials.len();
    let summary = Summary {
        n_subjects: datasets.len(),
        n_scored_trials: n,
        n_degenerate_trials: series.trials.iter().filter(|t| t.degenerate).count(),
        n_missing_trials: datasets.iter().map(SubjectDataset::missing_count).sum(),
        mean_score: if n == 0 { 0.0 } else { series.trials.iter().map(|t| t.score).sum::<f64>() / n as f64 },
        learning_curve_r: curve.map(|c| c.r),
        conditions: cells,
        reference_correlation,
        best_fit,
        delta_bic_positive,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Baseline trials when there are any, otherwise everything.
fn baseline_only(series: &ScoreSeries) -> ScoreSeries {
    let trials: Vec<_> =
        series.trials.iter().filter(|t| t.condition.experiment == Experiment::Baseline).cloned().collect();
    if trials.is_empty() {
        series.clone()
    } else {
        ScoreSeries { trials }
    }
}

#[derive(Serialize)]
struct LearningRow {
    trial: usize,
    mean_score: f64,
    n: usize,
}

#[derive(Serialize)]
struct ProfileRow<'a> {
    graph_id: &'a str,
    mean_score: f64,
}

#[derive(Serialize)]
struct SubjectRow<'a> {
    subject_id: &'a str,
    condition: String,
    mean_score: f64,
}

#[derive(Serialize)]
struct BestFitRow {
    model: ModelName,
    fraction: f64,
}
