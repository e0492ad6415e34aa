mod support;

use graph_teaching::analysis::teaching_score;
use graph_teaching::records::{Scaffolding, TrainingKind};
use graph_teaching::stimuli::{build_baseline_set, generate_pool, StimulusConfig};
use graph_teaching::{Condition, Phase, ScaffoldKind};
use graph_teaching_llm::parse::last_edge;
use graph_teaching_llm::{
    build_instruction_prompt, build_preamble, build_trial_prompt, run_teacher, write_run_log, EndpointError,
    PromptKind, RetryPolicy, Role, RunOptions, ScriptedEndpoint,
};
use support::{e, example_stimulus, scaffold_sequence, scripted};

/// Compares against a golden file; `UPDATE_GOLDEN=1` rewrites it instead.
fn assert_golden(name: &str, actual: &str) {
    let path = support::golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from its golden file");
}

#[test]
fn instruction_prompt_matches_golden_text() {
    let text = build_instruction_prompt();
    assert_golden("instructions.txt", &text);
    assert!(text.starts_with("Welcome! In this experiment, you will act as a teacher"));
    assert!(text.contains("Advice: (5,7) is the best edge to reveal."));
    assert!(text.contains(
        "    (0,1),(0,2),(0,3),(1,4),(1,5),(2,4),(2,5),(2,6),\n    (3,5),(3,6),(4,7),(4,8),(5,7),(5,8),(5,9),(6,8),(6,9)]"
    ));
    assert_eq!(build_instruction_prompt(), text);
    assert_golden("preamble_reward.txt", &build_preamble(Some(ScaffoldKind::Reward)));
    assert_golden("preamble_inference.txt", &build_preamble(Some(ScaffoldKind::Inference)));
}

#[test]
fn trial_prompts_match_golden_text() {
    let s = example_stimulus();
    let teach = build_trial_prompt(&s, PromptKind::Teach);
    assert_golden("teach_example.txt", &teach);
    assert!(teach.starts_with("Try to help this student maximize their points.\n"));
    assert!(teach.contains("Reward values: {0:0,1:2,2:1,3:0,4:0,5:1,6:0,7:3,8:1,9:0}\n"));
    assert!(teach.ends_with("ends in the format (x,y)"));
    let inference = build_trial_prompt(&s, PromptKind::Scaffold(ScaffoldKind::Inference));
    assert_golden("inference_scaffold_example.txt", &inference);
    assert!(inference.starts_with("Select three edges that you think the student does not know."));
    let reward = build_trial_prompt(&s, PromptKind::Scaffold(ScaffoldKind::Reward));
    assert_golden("reward_scaffold_example.txt", &reward);
    assert!(reward.ends_with("[(x,y),(x,y),(x,y)]"));
}

#[test]
fn replies_ending_in_a_pair_parse_to_that_pair() {
    for text in ["(1,2)", "Reveal (3,4)", "first (9,9), then: (10, 11)", "[(1,2),(3,4),(5,6)] so (7,8)"] {
        let last = text.rfind('(').unwrap();
        let tail: Vec<u32> = text[last + 1..text.len() - 1].split(',').map(|x| x.trim().parse().unwrap()).collect();
        assert_eq!(last_edge(text), Some(e(tail[0], tail[1])));
    }
}

#[test]
fn best_edge_reply_scores_one() {
    let s = example_stimulus();
    let ep = ScriptedEndpoint::fixed("fixed", "(5,7)");
    let run = run_teacher(&ep, "t", std::slice::from_ref(&s), Condition::baseline(), &RunOptions::default());
    let chosen = run.dataset.trials[0].chosen.unwrap();
    assert_eq!(teaching_score(&s.graph, &s.trajectory, chosen).unwrap().score, 1.0);
}

#[test]
fn baseline_run_bookkeeping() {
    let pool = generate_pool(&StimulusConfig::default(), 20, None, 7).unwrap();
    let seq = build_baseline_set(&pool, 3).unwrap();
    let run = run_teacher(&scripted(), "base-0", &seq, Condition::baseline(), &RunOptions::default());
    assert_eq!(run.dataset.trials.len(), 40);
    assert_eq!(run.session.messages().len(), 1 + 2 * 40);
    assert_eq!(run.session.messages()[0].role, Role::System);
    assert_eq!(run.session.preamble(), build_instruction_prompt());
    assert!(run.dataset.trials.iter().all(|r| r.scaffold_kind.is_none() && r.raw_response.is_some()));
    assert!(run.dataset.missing_count() > 0, "some scripted replies carry no edge");
    run.dataset.validate().unwrap();
    assert_eq!(run.log.len(), 1 + 2 * 40);
}

#[test]
fn scaffolds_appear_on_training_trials_only() {
    let seq = scaffold_sequence();
    let cond = Condition::scaffold(TrainingKind::Incongruent, Scaffolding::Inference);
    let run = run_teacher(&scripted(), "sc-0", &seq, cond, &RunOptions::default());
    assert_eq!(run.session.messages().len(), 1 + 2 * 20 + 2 * 15);
    let scaffold_prompts = run
        .session
        .messages()
        .iter()
        .filter(|m| m.role == Role::User && m.content.starts_with("Select three edges"))
        .count();
    assert_eq!(scaffold_prompts, 15);
    for r in &run.dataset.trials {
        assert_eq!(r.scaffold_kind.is_some(), r.phase == Phase::Train);
        assert_eq!(r.raw_scaffold_response.is_some(), r.phase == Phase::Train);
    }
    assert!(run.session.preamble().ends_with("most likely not known by the learner."));
}

#[test]
fn scripted_run_reproduces_the_golden_dataset() {
    let seq = scaffold_sequence();
    let cond = Condition::scaffold(TrainingKind::Incongruent, Scaffolding::Reward);
    let first = run_teacher(&scripted(), "golden-0", &seq, cond, &RunOptions::default());
    let second = run_teacher(&scripted(), "golden-0", &seq, cond, &RunOptions::default());
    let text = serde_json::to_string(&first.dataset).unwrap() + "\n";
    assert_eq!(text, serde_json::to_string(&second.dataset).unwrap() + "\n");
    assert_golden("scripted_dataset.jsonl", &text);
}

#[test]
fn transport_failures_leave_the_trial_missing() {
    let s = example_stimulus();
    let down = || Err(EndpointError::Transport("connection refused".into()));
    let ep = ScriptedEndpoint::queue("flaky", [down(), down(), down(), down(), Ok("(5,7)".to_owned())]);
    let opts = RunOptions { retry: RetryPolicy::immediate(3), ..RunOptions::default() };
    let run = run_teacher(&ep, "t", &[s.clone(), s.clone()], Condition::baseline(), &opts);
    assert_eq!(run.dataset.trials[0].chosen, None);
    assert_eq!(run.dataset.trials[0].raw_response, None);
    // Second trial: one more transport failure, then success on retry.
    assert_eq!(run.dataset.trials[1].chosen, Some(e(5, 7)));
    assert_eq!(ep.calls(), 5);
    assert_eq!(run.session.messages().len(), 3);
    assert!(run.log.iter().any(|l| l.error.is_some()));

    let rejected = ScriptedEndpoint::queue("bad", [Err(EndpointError::Rejected { status: 400, body: "no".into() })]);
    let run = run_teacher(&rejected, "t", std::slice::from_ref(&s), Condition::baseline(), &opts);
    assert_eq!(rejected.calls(), 1);
    assert_eq!(run.dataset.trials[0].chosen, None);
}

#[test]
fn edges_outside_the_graph_are_missing() {
    let s = example_stimulus();
    let ep = ScriptedEndpoint::fixed("odd", "reveal (7,5)");
    let run = run_teacher(&ep, "t", std::slice::from_ref(&s), Condition::baseline(), &RunOptions::default());
    assert_eq!(run.dataset.trials[0].chosen, None);
    assert_eq!(run.dataset.trials[0].raw_response.as_deref(), Some("reveal (7,5)"));
}

#[test]
fn run_log_is_jsonl() {
    let s = example_stimulus();
    let run =
        run_teacher(&ScriptedEndpoint::fixed("f", "(5,7)"), "t", &[s], Condition::baseline(), &RunOptions::default());
    let mut buf = Vec::new();
    write_run_log(&mut buf, &run.log).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["role"], "system");
    assert_eq!(lines[2]["text"], "(5,7)");
    assert_eq!(lines[1]["trial"], 0);
    assert!(lines[1]["timestamp"].is_string());
}
