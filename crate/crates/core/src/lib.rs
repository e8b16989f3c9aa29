//! Agentic context bank: cue extraction and merge, text-first retrieval with
//! selective visual verification, and the evaluation harness around it.

pub mod bank;
pub mod gateway;
pub mod eval;
pub mod media;
pub mod pipeline;
