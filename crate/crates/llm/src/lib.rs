//! Chat-completion teachers for the graph teaching task.
//!
//! A teacher receives the task instructions once, then one prompt per trial
//! (two on scaffolded training trials) in a single growing conversation.
//! Replies are parsed for the last `(x,y)` pair; anything unusable becomes
//! a missing answer rather than a re-prompt.

pub mod endpoint;
pub mod parse;
pub mod prompts;
pub mod providers;
pub mod runner;

pub use endpoint::{ChatEndpoint, Decoding, EndpointError, Message, RateLimiter, RetryPolicy, Role, ScriptedEndpoint};
pub use parse::{parse_choice, ParseMode, ParsedChoice};
pub use prompts::{build_instruction_prompt, build_preamble, build_trial_prompt, PromptKind, TEMPLATE_VERSION};
pub use providers::{EndpointConfig, EndpointFile, HttpEndpoint, Provider};
pub use runner::{run_teacher, run_teachers, write_run_log, ChatSession, LogEntry, RunOptions, TeacherRun};
