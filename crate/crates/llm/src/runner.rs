//! Running one chat teacher through an experiment sequence.

use std::io::Write;
use std::sync::Arc;
use std::thread;

use chrono::{DateTime, Utc};
use graph_teaching::records::{Condition, Provenance, TrialRecord};
use graph_teaching::stimuli::TrialStimulus;
use graph_teaching::{Edge, Phase, SubjectDataset, TaskGraph};
use serde::{Deserialize, Serialize};

use crate::endpoint::{ChatEndpoint, Decoding, EndpointError, Message, RateLimiter, RetryPolicy, Role};
use crate::parse::{parse_choice, ParseMode};
use crate::prompts::{build_preamble, build_trial_prompt, PromptKind};

/// Conversation state of one simulated teacher. The history only grows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub teacher_id: String,
    pub endpoint: String,
    pub decoding: Decoding,
    messages: Vec<Message>,
}

impl ChatSession {
    pub fn new(
        teacher_id: impl Into<String>,
        endpoint: impl Into<String>,
        preamble: String,
        decoding: Decoding,
    ) -> Self {
        Self {
            teacher_id: teacher_id.into(),
            endpoint: endpoint.into(),
            decoding,
            messages: vec![Message::new(Role::System, preamble)],
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn preamble(&self) -> &str {
        &self.messages[0].content
    }

    /// Sends `prompt` with the full history. On success the prompt and the
    /// reply join the history; on failure the history is left untouched.
    pub fn exchange(
        &mut self,
        endpoint: &dyn ChatEndpoint,
        prompt: String,
        retry: &RetryPolicy,
        limiter: Option<&RateLimiter>,
    ) -> Result<String, EndpointError> {
        self.messages.push(Message::new(Role::User, prompt));
        let (reply, _) = retry.run(|| {
            if let Some(l) = limiter {
                l.acquire();
            }
            endpoint.complete(&self.messages, &self.decoding)
        });
        match reply {
            Ok(text) => {
                self.messages.push(Message::new(Role::Assistant, text.clone()));
                Ok(text)
            }
            Err(e) => {
                self.messages.pop();
                Err(e)
            }
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub decoding: Decoding,
    pub retry: RetryPolicy,
    pub limiter: Option<Arc<RateLimiter>>,
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub teacher_id: String,
    /// `None` for the preamble.
    pub trial: Option<usize>,
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct TeacherRun {
    pub dataset: SubjectDataset,
    pub session: ChatSession,
    pub log: Vec<LogEntry>,
}

fn in_graph(graph: &TaskGraph, edge: Option<Edge>) -> Option<Edge> {
    edge.filter(|&e| graph.edge_index(e).is_some())
}

/// Runs one teacher. Transport failures that survive the retries, and
/// replies without a usable edge, leave the trial's answer missing.
pub fn run_teacher(
    endpoint: &dyn ChatEndpoint,
    teacher_id: &str,
    sequence: &[TrialStimulus],
    condition: Condition,
    opts: &RunOptions,
) -> TeacherRun {
    let preamble = build_preamble(condition.scaffolding.kind());
    let mut session = ChatSession::new(teacher_id, endpoint.name(), preamble.clone(), opts.decoding.clone());
    let mut log = Vec::new();
    let entry = |trial, role, text: &str, error: Option<String>| LogEntry {
        teacher_id: teacher_id.to_owned(),
        trial,
        role,
        text: text.to_owned(),
        timestamp: Utc::now(),
        error,
    };
    log.push(entry(None, Role::System, &preamble, None));
    let mut dataset = SubjectDataset::new(teacher_id, Provenance::Llm, condition);
    let limiter = opts.limiter.as_deref();

    for (i, stimulus) in sequence.iter().enumerate() {
        let scaffold_kind = condition.scaffold_for(stimulus.role);
        let mut record = TrialRecord::for_stimulus(i, stimulus, scaffold_kind);
        if let Some(kind) = scaffold_kind {
            let prompt = build_trial_prompt(stimulus, PromptKind::Scaffold(kind));
            match session.exchange(endpoint, prompt.clone(), &opts.retry, limiter) {
                Ok(reply) => {
                    log.push(entry(Some(i), Role::User, &prompt, None));
                    log.push(entry(Some(i), Role::Assistant, &reply, None));
                    let parsed = parse_choice(&reply, ParseMode::Triple);
                    record.scaffold = parsed
                        .triple
                        .filter(|t| t.iter().all(|&e| stimulus.graph.edge_index(e).is_some()))
                        .map(Vec::from);
                    record.raw_scaffold_response = Some(reply);
                }
                Err(e) => log.push(entry(Some(i), Role::User, &prompt, Some(e.to_string()))),
            }
        }
        let prompt = build_trial_prompt(stimulus, PromptKind::Teach);
        match session.exchange(endpoint, prompt.clone(), &opts.retry, limiter) {
            Ok(reply) => {
                log.push(entry(Some(i), Role::User, &prompt, None));
                log.push(entry(Some(i), Role::Assistant, &reply, None));
                record.chosen = in_graph(&stimulus.graph, parse_choice(&reply, ParseMode::Edge).edge);
                record.raw_response = Some(reply);
            }
            Err(e) => log.push(entry(Some(i), Role::User, &prompt, Some(e.to_string()))),
        }
        debug_assert!(stimulus.role == Phase::Train || record.scaffold_kind.is_none());
        dataset.trials.push(record);
    }
    TeacherRun { dataset, session, log }
}

/// Runs independent teachers concurrently, one thread each, sharing the
/// endpoint and rate limiter. Results keep the order of `jobs`.
pub fn run_teachers(
    endpoint: &dyn ChatEndpoint,
    jobs: &[(String, Vec<TrialStimulus>)],
    condition: Condition,
    opts: &RunOptions,
) -> Vec<TeacherRun> {
    thread::scope(|s| {
        let handles: Vec<_> =
            jobs.iter().map(|(id, seq)| s.spawn(move || run_teacher(endpoint, id, seq, condition, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("teacher thread panicked")).collect()
    })
}

pub fn write_run_log(mut out: impl Write, entries: &[LogEntry]) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
