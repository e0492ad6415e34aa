//! Extracting edges from free-text replies.

use std::sync::LazyLock;

use graph_teaching::Edge;
use regex::Regex;
use serde::{Deserialize, Serialize};

static PAIR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)").expect("valid regex"));

static TRIPLE: LazyLock<Regex> = LazyLock::new(|| {
    let p = r"\(\s*(\d+)\s*,\s*(\d+)\s*\)";
    Regex::new(&format!(r"\[\s*{p}\s*,\s*{p}\s*,\s*{p}\s*\]")).expect("valid regex")
});

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseMode {
    Edge,
    Triple,
}

/// What could be read out of one reply. Edges are syntactic pairs only;
/// membership in the graph is checked by the caller.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedChoice {
    pub raw: String,
    pub edge: Option<Edge>,
    pub triple: Option<[Edge; 3]>,
}

fn edge(a: &str, b: &str) -> Option<Edge> {
    Some(Edge { parent: a.parse().ok()?, child: b.parse().ok()? })
}

/// Last `(a,b)` pair in `text`.
pub fn last_edge(text: &str) -> Option<Edge> {
    PAIR.captures_iter(text).filter_map(|c| edge(&c[1], &c[2])).last()
}

/// Last bracketed list of exactly three pairs in `text`.
pub fn last_triple(text: &str) -> Option<[Edge; 3]> {
    TRIPLE
        .captures_iter(text)
        .filter_map(|c| Some([edge(&c[1], &c[2])?, edge(&c[3], &c[4])?, edge(&c[5], &c[6])?]))
        .last()
}

pub fn parse_choice(text: &str, mode: ParseMode) -> ParsedChoice {
    let (edge, triple) = match mode {
        ParseMode::Edge => (last_edge(text), None),
        ParseMode::Triple => (None, last_triple(text)),
    };
    ParsedChoice { raw: text.to_owned(), edge, triple }
}
