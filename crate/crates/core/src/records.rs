//! Trial records and subject datasets.
//!
//! One [`SubjectDataset`] holds every decision of one simulated teacher
//! (LLM run, human session or cognitive-model simulation). Records embed
//! their graph so a dataset file is self-contained. Data files are JSONL,
//! one dataset per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GraphError, TaskGraph, Trajectory};
use crate::stimuli::{Congruency, TrialStimulus};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("subject {subject}, trial {trial}: {source}")]
    Trial {
        subject: String,
        trial: usize,
        #[source]
        source: GraphError,
    },
    #[error("subject {subject}, trial {trial}: chosen edge {edge} is not in the graph")]
    ChoiceNotInGraph { subject: String, trial: usize, edge: Edge },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Llm,
    Human,
    Simulated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Train,
    Test,
}

/// The auxiliary step requested on a scaffolded training trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaffoldKind {
    /// Mark three edges the learner probably does not know.
    Inference,
    /// Mark three edges connected to the largest-value nodes.
    Reward,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaffolding {
    #[default]
    None,
    Inference,
    Reward,
}

impl Scaffolding {
    pub fn kind(self) -> Option<ScaffoldKind> {
        match self {
            Scaffolding::None => None,
            Scaffolding::Inference => Some(ScaffoldKind::Inference),
            Scaffolding::Reward => Some(ScaffoldKind::Reward),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingKind {
    Congruent,
    Incongruent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[default]
    Baseline,
    Scaffold,
}

/// Experiment cell a simulated teacher belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingKind>,
    #[serde(default)]
    pub scaffolding: Scaffolding,
}

impl Condition {
    pub fn baseline() -> Self {
        Self::default()
    }

    pub fn scaffold(training: TrainingKind, scaffolding: Scaffolding) -> Self {
        Self { experiment: Experiment::Scaffold, training: Some(training), scaffolding }
    }

    /// Scaffold step demanded on a trial of this condition, if any. Test
    /// trials never carry one.
    pub fn scaffold_for(&self, phase: Phase) -> Option<ScaffoldKind> {
        match (self.experiment, phase) {
            (Experiment::Scaffold, Phase::Train) => self.scaffolding.kind(),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self.experiment {
            Experiment::Baseline => "baseline".to_owned(),
            Experiment::Scaffold => {
                let training = match self.training {
                    Some(TrainingKind::Congruent) => "congruent",
                    Some(TrainingKind::Incongruent) => "incongruent",
                    None => "unspecified",
                };
                let scaffolding = match self.scaffolding {
                    Scaffolding::None => "none",
                    Scaffolding::Inference => "inference",
                    Scaffolding::Reward => "reward",
                };
                format!("{training}/{scaffolding}")
            }
        }
    }
}

/// One teaching decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub graph: TaskGraph,
    pub trajectory: Vec<Edge>,
    #[serde(default)]
    pub phase: Phase,
    #[serde(default = "unscreened")]
    pub congruency: Congruency,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold_kind: Option<ScaffoldKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold: Option<Vec<Edge>>,
    /// `None` when the teacher gave no usable answer.
    pub chosen: Option<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_scaffold_response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

fn unscreened() -> Congruency {
    Congruency::Unscreened
}

impl TrialRecord {
    /// A record for `stimulus` with no answer yet.
    pub fn for_stimulus(trial: usize, stimulus: &TrialStimulus, scaffold_kind: Option<ScaffoldKind>) -> Self {
        Self {
            trial,
            graph: stimulus.graph.clone(),
            trajectory: stimulus.trajectory_edges(),
            phase: stimulus.role,
            congruency: stimulus.congruency,
            scaffold_kind,
            scaffold: None,
            chosen: None,
            raw_scaffold_response: None,
            raw_response: None,
        }
    }

    pub fn trajectory(&self) -> Result<Trajectory, GraphError> {
        Trajectory::from_edges(&self.graph, &self.trajectory)
    }

    pub fn chosen_index(&self) -> Option<usize> {
        self.chosen.and_then(|e| self.graph.edge_index(e))
    }
}

/// Which trials enter a fit or summary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialFilter {
    #[default]
    All,
    Train,
    Test,
}

impl TrialFilter {
    pub fn admits(self, phase: Phase) -> bool {
        match self {
            TrialFilter::All => true,
            TrialFilter::Train => phase == Phase::Train,
            TrialFilter::Test => phase == Phase::Test,
        }
    }
}

/// A usable trial: valid trajectory and an answer inside the graph.
#[derive(Clone, Debug)]
pub struct UsableTrial<'a> {
    pub record: &'a TrialRecord,
    pub trajectory: Trajectory,
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectDataset {
    pub subject_id: String,
    pub provenance: Provenance,
    #[serde(default)]
    pub condition: Condition,
    pub trials: Vec<TrialRecord>,
}

impl SubjectDataset {
    pub fn new(subject_id: impl Into<String>, provenance: Provenance, condition: Condition) -> Self {
        Self { subject_id: subject_id.into(), provenance, condition, trials: Vec::new() }
    }

    /// Checks graphs, trajectories and that every answer is a graph edge.
    pub fn validate(&self) -> Result<(), DatasetError> {
        for r in &self.trials {
            let err = |source| DatasetError::Trial { subject: self.subject_id.clone(), trial: r.trial, source };
            r.graph.ensure_valid().map_err(err)?;
            r.trajectory().map_err(err)?;
            if let Some(edge) = r.chosen {
                if r.graph.edge_index(edge).is_none() {
                    return Err(DatasetError::ChoiceNotInGraph {
                        subject: self.subject_id.clone(),
                        trial: r.trial,
                        edge,
                    });
                }
            }
        }
        Ok(())
    }

    /// Trials with an answer, filtered by phase. Missing answers are skipped.
    pub fn usable_trials(&self, filter: TrialFilter) -> Result<Vec<UsableTrial<'_>>, DatasetError> {
        self.validate()?;
        Ok(self
            .trials
            .iter()
            .filter(|r| filter.admits(r.phase))
            .filter_map(|r| {
                let chosen = r.chosen_index()?;
                Some(UsableTrial { record: r, trajectory: r.trajectory().expect("validated"), chosen })
            })
            .collect())
    }

    pub fn missing_count(&self) -> usize {
        self.trials.iter().filter(|r| r.chosen.is_none()).count()
    }
}

pub fn read_datasets(path: impl AsRef<Path>) -> Result<Vec<SubjectDataset>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatasetError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_datasets(path: impl AsRef<Path>, datasets: &[SubjectDataset]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in datasets {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
