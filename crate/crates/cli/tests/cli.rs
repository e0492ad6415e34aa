use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::Command;
use std::thread;

use graph_teaching::records::{read_datasets, Experiment, Scaffolding};
use graph_teaching::stimuli::{read_stimuli, Congruency};
use graph_teaching::{Condition, TrainingKind};
use graph_teaching_cli::experiment::{long_sequence, parse_condition, slug};
use graph_teaching_service::StimulusPools;

fn run(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_graph-teaching")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Answers every chat request with the same OpenAI-style reply.
fn chat_stub(requests: usize, reply: &str) -> (String, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}).to_string();
    let handle = thread::spawn(move || {
        for _ in 0..requests {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut req = vec![0; len];
            reader.read_exact(&mut req).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, handle)
}

#[test]
fn conditions_parse() {
    assert_eq!(parse_condition(Experiment::Baseline, None).unwrap(), Condition::baseline());
    let c = parse_condition(Experiment::Scaffold, Some("incongruent/reward")).unwrap();
    assert_eq!(c, Condition::scaffold(TrainingKind::Incongruent, Scaffolding::Reward));
    assert_eq!(slug(&c), "incongruent-reward");
    assert!(parse_condition(Experiment::Scaffold, None).is_err());
    assert!(parse_condition(Experiment::Scaffold, Some("congruent")).is_err());
    assert!(parse_condition(Experiment::Baseline, Some("congruent/none")).is_err());
}

#[test]
fn end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pools = d.join("pools");
    run(&["gen-pools", "--seed", "7", "--out", path(&pools)]);
    let loaded = StimulusPools::load(&pools).unwrap();
    assert_eq!(loaded.baseline.len(), 20);

    let stim = d.join("incongruent.json");
    run(&["gen-stimuli", "--pool-size", "4", "--congruency", "incongruent", "--seed", "3", "--out", path(&stim)]);
    let pool = read_stimuli(&stim).unwrap();
    assert_eq!(pool.len(), 4);
    assert!(pool.iter().all(|s| s.congruency == Congruency::Incongruent));

    let long = long_sequence(&loaded, &Condition::baseline(), 1, 100).unwrap();
    assert_eq!(long.len(), 100);

    let sim = d.join("sim.jsonl");
    let args = ["simulate", "--model", "bot", "--argmax", "--subjects", "3", "--trials", "60"];
    run(&[&args[..], &["--stimuli", path(&pools), "--out", path(&sim)]].concat());
    let datasets = read_datasets(&sim).unwrap();
    assert_eq!(datasets.len(), 3);
    assert!(datasets.iter().all(|d| d.trials.len() == 60));

    let fits = d.join("fits.jsonl");
    run(&["fit", "--data", path(&sim), "--models", "bot,reward", "--out", path(&fits)]);
    assert_eq!(std::fs::read_to_string(&fits).unwrap().lines().count(), 6);

    let scaffold = d.join("scaffold.jsonl");
    let args =
        ["simulate", "--model", "reward", "--beta", "2", "--experiment", "scaffold", "--condition", "incongruent/none"];
    run(&[&args[..], &["--stimuli", path(&pools), "--out", path(&scaffold)]].concat());
    let scaffold_fits = d.join("scaffold_fits.jsonl");
    run(&["fit", "--data", path(&scaffold), "--models", "bot,reward", "--out", path(&scaffold_fits)]);
    let text = std::fs::read_to_string(&scaffold_fits).unwrap();
    for line in text.lines() {
        assert_eq!(serde_json::from_str::<serde_json::Value>(line).unwrap()["n_trials"], 5);
    }

    let report = d.join("report");
    let stdout = run(&["analyze", "--data", path(&sim), "--fits", path(&fits), "--report", path(&report)]);
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["mean_score"], 1.0);
    assert_eq!(summary["n_scored_trials"], 180);
    assert_eq!(summary["best_fit"]["bot"], 1.0);
    for f in ["scores.csv", "learning_curve.csv", "graph_profile.csv", "subject_means.csv", "conditions.csv"] {
        assert!(report.join(f).exists(), "{f}");
    }
    let profile = std::fs::read_to_string(report.join("graph_profile.csv")).unwrap();
    assert_eq!(profile.lines().next(), Some("graph_id,mean_score"));
    assert!(profile.lines().count() > 2);

    let (url, server) = chat_stub(20 + 15, "Teach (0,1) and maybe (0,2),(0,3),(1,4)");
    let config = d.join("endpoints.toml");
    std::fs::write(
        &config,
        format!("[[endpoint]]\nname = \"stub\"\nprovider = \"openai\"\nbase_url = \"{url}\"\nmodel = \"m\"\n"),
    )
    .unwrap();
    let out = d.join("llm");
    run(&[
        "run-llm",
        "--endpoint",
        "stub",
        "--config",
        path(&config),
        "--experiment",
        "scaffold",
        "--condition",
        "congruent/inference",
        "--stimuli",
        path(&pools),
        "--out",
        path(&out),
    ]);
    server.join().unwrap();
    let runs = read_datasets(out.join("datasets.jsonl")).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].trials.len(), 20);
    assert!(runs[0].trials.iter().all(|t| t.chosen == Some(graph_teaching::Edge { parent: 1, child: 4 })));
    let log = std::fs::read_to_string(out.join("run_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2 * 35);
}
