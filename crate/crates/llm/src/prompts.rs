//! Prompt text. Templates live under `templates/<version>/` and are
//! compiled in, so a build always carries the exact text it sends.

use graph_teaching::stimuli::TrialStimulus;
use graph_teaching::{Edge, ScaffoldKind, TaskGraph};

pub const TEMPLATE_VERSION: &str = "v1";

const INSTRUCTIONS: &str = include_str!("../templates/v1/instructions.txt");
const REWARD_SCAFFOLD_INSTRUCTIONS: &str = include_str!("../templates/v1/reward_scaffold_instructions.txt");
const INFERENCE_SCAFFOLD_INSTRUCTIONS: &str = include_str!("../templates/v1/inference_scaffold_instructions.txt");
const TEACH: &str = include_str!("../templates/v1/teach.txt");
const REWARD_SCAFFOLD: &str = include_str!("../templates/v1/reward_scaffold.txt");
const INFERENCE_SCAFFOLD: &str = include_str!("../templates/v1/inference_scaffold.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Teach,
    Scaffold(ScaffoldKind),
}

/// The task instructions shown once at the start of every teacher.
pub fn build_instruction_prompt() -> String {
    INSTRUCTIONS.to_owned()
}

/// Extra instructions for a scaffolding condition.
pub fn scaffold_instructions(kind: ScaffoldKind) -> &'static str {
    match kind {
        ScaffoldKind::Reward => REWARD_SCAFFOLD_INSTRUCTIONS,
        ScaffoldKind::Inference => INFERENCE_SCAFFOLD_INSTRUCTIONS,
    }
}

/// Opening context of a teacher: the instructions, followed by the
/// scaffold instructions when the condition has them.
pub fn build_preamble(scaffold: Option<ScaffoldKind>) -> String {
    match scaffold {
        None => build_instruction_prompt(),
        Some(kind) => format!("{INSTRUCTIONS}\n\n{}", scaffold_instructions(kind)),
    }
}

/// `[(0,1),(0,2)]`
pub fn format_edges(edges: &[Edge]) -> String {
    let inner: Vec<String> = edges.iter().map(|e| format!("({},{})", e.parent, e.child)).collect();
    format!("[{}]", inner.join(","))
}

/// `{0:0,1:2}`
pub fn format_rewards(graph: &TaskGraph) -> String {
    let inner: Vec<String> = graph.rewards().iter().map(|(n, r)| format!("{n}:{r}")).collect();
    format!("{{{}}}", inner.join(","))
}

pub fn build_trial_prompt(stimulus: &TrialStimulus, kind: PromptKind) -> String {
    let template = match kind {
        PromptKind::Teach => TEACH,
        PromptKind::Scaffold(ScaffoldKind::Reward) => REWARD_SCAFFOLD,
        PromptKind::Scaffold(ScaffoldKind::Inference) => INFERENCE_SCAFFOLD,
    };
    template
        .replace("{teacher_graph}", &format_edges(stimulus.graph.edges()))
        .replace("{learner_rewards}", &format_rewards(&stimulus.graph))
        .replace("{traj}", &format_edges(&stimulus.trajectory_edges()))
}
