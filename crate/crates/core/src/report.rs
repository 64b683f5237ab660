//! JSON-lines rendering of retrieval results, shared by the command-line
//! front end and the tests.

use serde::Serialize;

use crate::alignment::{AlignMethod, SolveStatus};
use crate::gateway::TokenUsage;
use crate::index::Index;
use crate::retrieval::{RetrievalResult, RetrievalStatus};

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Line<'a> {
    Query {
        question: &'a str,
        status: RetrievalStatus,
        elected_chunks: &'a [usize],
        padded: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        alignment: Option<AlignmentLine>,
    },
    Class {
        class_id: usize,
        name: &'a str,
        score: f64,
        chunk_ids: &'a [usize],
    },
    Chunk {
        chunk_id: usize,
        source_id: &'a str,
        score: f64,
        text: &'a str,
    },
    Answer {
        answer: &'a str,
        chunk_ids: &'a [usize],
    },
    Usage {
        #[serde(flatten)]
        usage: TokenUsage,
        total: u64,
    },
}

#[derive(Debug, Serialize)]
pub struct AlignmentLine {
    pub method: AlignMethod,
    pub fell_back: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasibility_residual: Option<f64>,
}

fn line(l: &Line<'_>) -> String {
    serde_json::to_string(l).expect("report line serializes")
}

/// One `query` line, one `class` line per selected class, then one `chunk`
/// line per elected chunk in election order.
pub fn query_lines(index: &Index, question: &str, result: &RetrievalResult) -> Vec<String> {
    let alignment = result.alignment.as_ref().map(|a| AlignmentLine {
        method: a.method,
        fell_back: a.fell_back,
        status: a.solution.as_ref().map(|s| s.status),
        iterations: a.solution.as_ref().map(|s| s.iterations),
        feasibility_residual: a.solution.as_ref().map(|s| s.feasibility_residual),
    });
    let mut out = vec![line(&Line::Query {
        question,
        status: result.status,
        elected_chunks: &result.elected_chunks,
        padded: result.padded,
        alignment,
    })];
    for c in &result.selected_classes {
        let class = &index.classes()[c.class_id];
        out.push(line(&Line::Class {
            class_id: c.class_id,
            name: &class.display_name,
            score: c.score,
            chunk_ids: &class.chunk_ids,
        }));
    }
    for &k in &result.elected_chunks {
        let chunk = &index.chunks()[k];
        let score = result
            .rule_scores
            .iter()
            .find(|s| s.chunk_id == k)
            .map_or(0.0, |s| s.score);
        out.push(line(&Line::Chunk {
            chunk_id: k,
            source_id: &chunk.source_id,
            score,
            text: &chunk.text,
        }));
    }
    out
}

pub fn answer_line(answer: &str, chunk_ids: &[usize]) -> String {
    line(&Line::Answer { answer, chunk_ids })
}

pub fn usage_line(usage: TokenUsage) -> String {
    line(&Line::Usage {
        usage,
        total: usage.total(),
    })
}
