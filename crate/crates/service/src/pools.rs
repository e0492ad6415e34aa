use std::path::Path;

use graph_teaching::records::{Condition, Experiment, TrainingKind};
use graph_teaching::stimuli::{
    build_baseline_set, build_scaffold_set, generate_pool, read_stimuli, write_stimuli, Congruency, StimulusConfig,
    StimulusError, TrialStimulus, BASELINE_GRAPHS, SCAFFOLD_BLOCK,
};

pub const BASELINE_FILE: &str = "baseline.json";
pub const CONGRUENT_FILE: &str = "train_congruent.json";
pub const INCONGRUENT_FILE: &str = "train_incongruent.json";
pub const TEST_FILE: &str = "test.json";

/// Stimulus pools from which session sequences are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusPools {
    pub baseline: Vec<TrialStimulus>,
    pub train_congruent: Vec<TrialStimulus>,
    pub train_incongruent: Vec<TrialStimulus>,
    /// The shared test block, in presentation order.
    pub test: Vec<TrialStimulus>,
}

impl StimulusPools {
    /// Fresh pools: 20 baseline graphs, 10 training graphs per congruency
    /// and 5 incongruent test graphs.
    pub fn generate(cfg: &StimulusConfig, seed: u64) -> Result<Self, StimulusError> {
        Ok(Self {
            baseline: generate_pool(cfg, BASELINE_GRAPHS, None, seed)?,
            train_congruent: generate_pool(cfg, 2 * SCAFFOLD_BLOCK, Some(Congruency::Congruent), seed + 1)?,
            train_incongruent: generate_pool(cfg, 2 * SCAFFOLD_BLOCK, Some(Congruency::Incongruent), seed + 2)?,
            test: generate_pool(cfg, SCAFFOLD_BLOCK, Some(Congruency::Incongruent), seed + 3)?,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, StimulusError> {
        let dir = dir.as_ref();
        Ok(Self {
            baseline: read_stimuli(dir.join(BASELINE_FILE))?,
            train_congruent: read_stimuli(dir.join(CONGRUENT_FILE))?,
            train_incongruent: read_stimuli(dir.join(INCONGRUENT_FILE))?,
            test: read_stimuli(dir.join(TEST_FILE))?,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), StimulusError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_stimuli(dir.join(BASELINE_FILE), &self.baseline)?;
        write_stimuli(dir.join(CONGRUENT_FILE), &self.train_congruent)?;
        write_stimuli(dir.join(INCONGRUENT_FILE), &self.train_incongruent)?;
        write_stimuli(dir.join(TEST_FILE), &self.test)
    }

    /// The trial sequence of one session.
    pub fn sequence(&self, condition: &Condition, seed: u64) -> Result<Vec<TrialStimulus>, StimulusError> {
        match (condition.experiment, condition.training) {
            (Experiment::Baseline, _) => build_baseline_set(&self.baseline, seed),
            (Experiment::Scaffold, Some(TrainingKind::Congruent)) => {
                build_scaffold_set(&self.train_congruent, &self.test, seed)
            }
            (Experiment::Scaffold, _) => build_scaffold_set(&self.train_incongruent, &self.test, seed),
        }
    }
}
