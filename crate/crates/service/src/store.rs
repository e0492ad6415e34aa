//! Sessions and their write-ahead logs.
//!
//! Each session owns one JSONL file in the data directory. The first line
//! holds the session header with its full trial sequence; every accepted
//! choice and the abandon marker are appended before the in-memory state
//! changes. Reopening a directory replays the files.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use graph_teaching::records::{Condition, Experiment, Provenance, TrialRecord};
use graph_teaching::stimuli::{StimulusError, TrialStimulus};
use graph_teaching::{Edge, Phase, ScaffoldKind, SubjectDataset, TaskGraph};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pools::StimulusPools;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("trial {requested} requested but the session is at trial {cursor}")]
    OutOfOrder { requested: usize, cursor: usize },
    #[error("session is {0:?}")]
    NotActive(SessionState),
    #[error("edge {0} is not in the trial graph")]
    InvalidEdge(Edge),
    #[error("this trial requires three marked edges")]
    MissingScaffold,
    #[error("this trial takes no marked edges")]
    UnexpectedScaffold,
    #[error("marked edges must be three distinct graph edges")]
    InvalidScaffold,
    #[error("trial {0} was already answered differently")]
    Conflict(usize),
    #[error("invalid condition: {0}")]
    BadCondition(String),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error("session log {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Active,
    Complete,
    Abandoned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
    pub condition: Condition,
    pub seed: u64,
    pub sequence: Vec<TrialStimulus>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub edge: Edge,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold: Option<Vec<Edge>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LogEvent {
    Created(SessionHeader),
    Choice { trial: usize, choice: Choice },
    Abandoned,
}

/// What a client may see of a trial. No learner knowledge, congruency
/// label, utility or score is ever included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialPayload {
    pub session_id: String,
    pub trial: usize,
    pub n_trials: usize,
    pub graph: TaskGraph,
    pub trajectory: Vec<Edge>,
    pub phase: Phase,
    pub scaffold_kind: Option<ScaffoldKind>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub ok: bool,
    /// Next trial to request; `None` once the session is complete.
    pub next: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub state: SessionState,
    pub cursor: usize,
    pub n_trials: usize,
    pub condition: Condition,
}

#[derive(Debug)]
pub struct Session {
    header: SessionHeader,
    choices: Vec<Choice>,
    state: SessionState,
    log: PathBuf,
}

impl Session {
    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn cursor(&self) -> usize {
        self.choices.len()
    }

    pub fn n_trials(&self) -> usize {
        self.header.sequence.len()
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.header.session_id.clone(),
            state: self.state,
            cursor: self.cursor(),
            n_trials: self.n_trials(),
            condition: self.header.condition,
        }
    }

    fn scaffold_kind(&self, n: usize) -> Option<ScaffoldKind> {
        self.header.condition.scaffold_for(self.header.sequence[n].role)
    }

    fn ack_after(&self, n: usize) -> Ack {
        Ack { ok: true, next: (n + 1 < self.n_trials()).then_some(n + 1) }
    }

    fn append(&self, event: &LogEvent) -> Result<(), SessionError> {
        append_event(&self.log, event)
    }

    fn apply(&mut self, event: LogEvent) {
        match event {
            LogEvent::Created(_) => {}
            LogEvent::Choice { choice, .. } => {
                self.choices.push(choice);
                if self.cursor() == self.n_trials() {
                    self.state = SessionState::Complete;
                }
            }
            LogEvent::Abandoned => self.state = SessionState::Abandoned,
        }
    }

    pub fn trial(&self, n: usize) -> Result<TrialPayload, SessionError> {
        if self.state != SessionState::Active {
            return Err(SessionError::NotActive(self.state));
        }
        if n != self.cursor() {
            return Err(SessionError::OutOfOrder { requested: n, cursor: self.cursor() });
        }
        let s = &self.header.sequence[n];
        Ok(TrialPayload {
            session_id: self.header.session_id.clone(),
            trial: n,
            n_trials: self.n_trials(),
            graph: s.graph.clone(),
            trajectory: s.trajectory_edges(),
            phase: s.role,
            scaffold_kind: self.scaffold_kind(n),
        })
    }

    fn check_choice(&self, n: usize, choice: &Choice) -> Result<(), SessionError> {
        let graph = &self.header.sequence[n].graph;
        if graph.edge_index(choice.edge).is_none() {
            return Err(SessionError::InvalidEdge(choice.edge));
        }
        match (self.scaffold_kind(n), &choice.scaffold) {
            (Some(_), None) => Err(SessionError::MissingScaffold),
            (None, Some(_)) => Err(SessionError::UnexpectedScaffold),
            (Some(_), Some(marked)) => {
                let mut idx: Vec<usize> = marked.iter().filter_map(|&e| graph.edge_index(e)).collect();
                idx.sort_unstable();
                idx.dedup();
                if marked.len() != 3 || idx.len() != 3 {
                    return Err(SessionError::InvalidScaffold);
                }
                Ok(())
            }
            (None, None) => Ok(()),
        }
    }

    /// Stores a choice. Resubmitting an answered trial with the same choice
    /// returns the original acknowledgement.
    pub fn post_choice(&mut self, n: usize, choice: Choice) -> Result<Ack, SessionError> {
        if n < self.cursor() {
            return if self.choices[n] == choice { Ok(self.ack_after(n)) } else { Err(SessionError::Conflict(n)) };
        }
        if self.state != SessionState::Active {
            return Err(SessionError::NotActive(self.state));
        }
        if n != self.cursor() {
            return Err(SessionError::OutOfOrder { requested: n, cursor: self.cursor() });
        }
        self.check_choice(n, &choice)?;
        let event = LogEvent::Choice { trial: n, choice };
        self.append(&event)?;
        self.apply(event);
        Ok(self.ack_after(n))
    }

    pub fn abandon(&mut self) -> Result<SessionSummary, SessionError> {
        if self.state == SessionState::Active {
            self.append(&LogEvent::Abandoned)?;
            self.apply(LogEvent::Abandoned);
        }
        Ok(self.summary())
    }

    /// The session in the dataset format used for fitting and analysis.
    pub fn dataset(&self) -> SubjectDataset {
        let c = self.header.condition;
        let mut d = SubjectDataset::new(self.header.session_id.clone(), Provenance::Human, c);
        for (i, choice) in self.choices.iter().enumerate() {
            let s = &self.header.sequence[i];
            let mut r = TrialRecord::for_stimulus(i, s, c.scaffold_for(s.role));
            r.chosen = Some(choice.edge);
            r.scaffold = choice.scaffold.clone();
            d.trials.push(r);
        }
        d
    }
}

fn append_event(path: &Path, event: &LogEvent) -> Result<(), SessionError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(event)?;
    line.push(b'\n');
    f.write_all(&line)?;
    f.sync_data()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFilter {
    /// Completed sessions only.
    #[default]
    Complete,
    /// Completed and abandoned sessions, with whatever was answered.
    IncludeAbandoned,
    /// Every session, including those still in progress.
    All,
}

impl ExportFilter {
    fn admits(self, state: SessionState) -> bool {
        match self {
            ExportFilter::Complete => state == SessionState::Complete,
            ExportFilter::IncludeAbandoned => state != SessionState::Active,
            ExportFilter::All => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewSession {
    #[serde(flatten)]
    pub condition: Condition,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub participant: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub n_trials: usize,
}

pub struct SessionStore {
    dir: PathBuf,
    pools: StimulusPools,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    /// Opens `dir`, replaying every session log found there.
    pub fn open(dir: impl Into<PathBuf>, pools: StimulusPools) -> Result<Self, SessionError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|x| x == "jsonl") {
                let s = replay(&path)?;
                sessions.insert(s.header.session_id.clone(), Arc::new(Mutex::new(s)));
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(Self { dir, pools, sessions: RwLock::new(sessions) })
    }

    pub fn create(&self, req: NewSession) -> Result<Created, SessionError> {
        let c = req.condition;
        match (c.experiment, c.training, c.scaffolding.kind()) {
            (Experiment::Baseline, None, None) | (Experiment::Scaffold, Some(_), _) => {}
            (Experiment::Baseline, ..) => {
                return Err(SessionError::BadCondition("baseline takes no training or scaffolding".into()))
            }
            (Experiment::Scaffold, None, _) => {
                return Err(SessionError::BadCondition("scaffold experiment needs a training kind".into()))
            }
        }
        let sequence = self.pools.sequence(&c, req.seed)?;
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let header = SessionHeader {
            session_id: session_id.clone(),
            participant: req.participant,
            condition: c,
            seed: req.seed,
            sequence,
        };
        let log = self.dir.join(format!("{session_id}.jsonl"));
        append_event(&log, &LogEvent::Created(header.clone()))?;
        let n_trials = header.sequence.len();
        let session = Session { header, choices: Vec::new(), state: SessionState::Active, log };
        self.sessions.write().expect("store lock").insert(session_id.clone(), Arc::new(Mutex::new(session)));
        Ok(Created { session_id, n_trials })
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .read()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_owned()))
    }

    pub fn with_session<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> T) -> Result<T, SessionError> {
        let s = self.get(id)?;
        let mut guard = s.lock().expect("session lock");
        Ok(f(&mut guard))
    }

    pub fn export(&self, filter: ExportFilter) -> Vec<SubjectDataset> {
        let sessions: Vec<_> = self.sessions.read().expect("store lock").values().cloned().collect();
        sessions
            .iter()
            .filter_map(|s| {
                let s = s.lock().expect("session lock");
                filter.admits(s.state).then(|| s.dataset())
            })
            .collect()
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let sessions: Vec<_> = self.sessions.read().expect("store lock").values().cloned().collect();
        sessions.iter().map(|s| s.lock().expect("session lock").summary()).collect()
    }
}

fn replay(path: &Path) -> Result<Session, SessionError> {
    let corrupt = |message: String| SessionError::Corrupt { path: path.display().to_string(), message };
    let mut session: Option<Session> = None;
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: LogEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            // A torn final write from a crash; everything before it stands.
            Err(e) if e.is_eof() => break,
            Err(e) => return Err(corrupt(format!("line {}: {e}", i + 1))),
        };
        match (&mut session, event) {
            (None, LogEvent::Created(header)) => {
                session =
                    Some(Session { header, choices: Vec::new(), state: SessionState::Active, log: path.to_owned() })
            }
            (None, _) => return Err(corrupt("missing header".into())),
            (Some(s), event @ LogEvent::Choice { trial, .. }) => {
                if trial != s.cursor() {
                    return Err(corrupt(format!("choice for trial {trial} at cursor {}", s.cursor())));
                }
                s.apply(event);
            }
            (Some(s), event) => s.apply(event),
        }
    }
    session.ok_or_else(|| corrupt("empty log".into()))
}
