#![allow(dead_code)]

use std::path::PathBuf;

use graph_teaching::stimuli::{build_scaffold_set, generate_pool, Congruency, StimulusConfig, TrialStimulus};
use graph_teaching::{Edge, EdgeSet, Phase, TaskGraph, Trajectory};
use graph_teaching_llm::{Message, ScriptedEndpoint};

/// Golden files live with the harness tests; the path works from any crate
/// in the workspace.
pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../llm/tests/golden").join(name)
}

pub fn e(parent: u32, child: u32) -> Edge {
    Edge { parent, child }
}

pub fn example_stimulus() -> TrialStimulus {
    let rewards = [(0, 0), (1, 2), (2, 1), (3, 0), (4, 0), (5, 1), (6, 0), (7, 3), (8, 1), (9, 0)];
    let g = TaskGraph::lattice("G-example", vec![vec![0], vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]], rewards.into())
        .unwrap();
    let known = [e(0, 1), e(0, 2), e(1, 5), e(2, 4), e(2, 5), e(2, 6), e(5, 8), e(5, 9), e(6, 9)];
    TrialStimulus {
        learner_knowledge: EdgeSet::from_edges(&g, known).unwrap(),
        trajectory: Trajectory::from_edges(&g, &[e(0, 1), e(1, 5), e(5, 8)]).unwrap(),
        graph: g,
        congruency: Congruency::Unscreened,
        role: Phase::Train,
    }
}

/// Replies deterministically from the prompt: a triple for scaffold
/// prompts, otherwise one teacher edge picked by conversation length.
pub fn scripted() -> ScriptedEndpoint {
    ScriptedEndpoint::from_fn("scripted", |messages: &[Message]| {
        let prompt = &messages.last().unwrap().content;
        let line = prompt.lines().find(|l| l.starts_with("Teacher's transitions:")).unwrap();
        let edges: Vec<&str> = line.split("),(").collect();
        let pick = |k: usize| {
            let raw = edges[k % edges.len()].trim_start_matches("Teacher's transitions: [(").trim_end_matches(")]");
            format!("({raw})")
        };
        let n = messages.len();
        if prompt.ends_with("[(x,y),(x,y),(x,y)]") {
            Ok(format!("The three best choices are [{},{},{}]", pick(n), pick(n + 5), pick(n + 11)))
        } else if n % 9 == 0 {
            Ok("I am not sure which edge to reveal.".to_owned())
        } else {
            Ok(format!("Maybe {} but I would reveal {}", pick(n + 1), pick(n * 3)))
        }
    })
}

pub fn scaffold_sequence() -> Vec<TrialStimulus> {
    let cfg = StimulusConfig::default();
    let train = generate_pool(&cfg, 10, Some(Congruency::Incongruent), 21).unwrap();
    let test = generate_pool(&cfg, 5, Some(Congruency::Incongruent), 22).unwrap();
    build_scaffold_set(&train, &test, 5).unwrap()
}
