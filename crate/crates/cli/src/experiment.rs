use std::path::Path;

use anyhow::{bail, Context, Result};
use graph_teaching::records::{Experiment, Scaffolding};
use graph_teaching::stimuli::{StimulusConfig, TrialStimulus};
use graph_teaching::{Condition, TrainingKind};
use graph_teaching_service::StimulusPools;

/// Parses `baseline` or a scaffold cell written `training/scaffolding`,
/// e.g. `incongruent/inference`.
pub fn parse_condition(experiment: Experiment, cell: Option<&str>) -> Result<Condition> {
    match (experiment, cell) {
        (Experiment::Baseline, None | Some("baseline")) => Ok(Condition::baseline()),
        (Experiment::Baseline, Some(c)) => bail!("baseline takes no condition, got {c:?}"),
        (Experiment::Scaffold, None) => bail!("scaffold needs --condition training/scaffolding"),
        (Experiment::Scaffold, Some(c)) => {
            let (t, s) = c.split_once('/').with_context(|| format!("condition {c:?} is not training/scaffolding"))?;
            let training = match t {
                "congruent" => TrainingKind::Congruent,
                "incongruent" => TrainingKind::Incongruent,
                _ => bail!("unknown training kind {t:?}"),
            };
            let scaffolding = match s {
                "none" => Scaffolding::None,
                "inference" => Scaffolding::Inference,
                "reward" => Scaffolding::Reward,
                _ => bail!("unknown scaffolding {s:?}"),
            };
            Ok(Condition::scaffold(training, scaffolding))
        }
    }
}

/// Loads pools from `dir` when given, otherwise generates them.
pub fn pools(dir: Option<&Path>, pool_seed: u64) -> Result<StimulusPools> {
    match dir {
        Some(d) => StimulusPools::load(d).with_context(|| format!("loading stimulus pools from {}", d.display())),
        None => {
            log::info!("generating stimulus pools with seed {pool_seed}");
            Ok(StimulusPools::generate(&StimulusConfig::default(), pool_seed)?)
        }
    }
}

/// At least `min_trials` trials: whole experiment sequences with seeds
/// `seed, seed + 1, ...` concatenated and truncated. With `min_trials` 0 a
/// single sequence.
pub fn long_sequence(
    pools: &StimulusPools,
    condition: &Condition,
    seed: u64,
    min_trials: usize,
) -> Result<Vec<TrialStimulus>> {
    let mut out = pools.sequence(condition, seed)?;
    let mut next = seed;
    while out.len() < min_trials {
        next += 1;
        out.extend(pools.sequence(condition, next)?);
    }
    if min_trials > 0 {
        out.truncate(min_trials);
    }
    Ok(out)
}

/// Condition label safe for ids and file names.
pub fn slug(condition: &Condition) -> String {
    condition.label().replace('/', "-")
}
