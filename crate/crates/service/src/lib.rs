//! Session service for people playing the teaching task in a browser.
//!
//! Trials are served strictly in order and the participant never receives
//! outcome information: no utilities, learner knowledge or scores appear in
//! session or trial responses. Completed sessions export in the same
//! dataset format the fitting and analysis code reads.

pub mod api;
pub mod pools;
pub mod store;

pub use api::router;
pub use pools::StimulusPools;
pub use store::{
    Ack, Choice, Created, ExportFilter, NewSession, Session, SessionError, SessionState, SessionStore, SessionSummary,
    TrialPayload,
};
