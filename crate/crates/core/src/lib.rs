//! Symbolic reasoning over classroom multimodal observations.
//!
//! Perception outputs are abstracted into typed [`fact::Fact`]s, matched
//! against declarative rules, scored by evidence support, gated by governance
//! policies and either answered or deferred.

pub mod bundled;
pub mod cli;
pub mod dsl;
pub mod eval;
pub mod fact;
pub mod governance;
pub mod pipeline;
pub mod query;
pub mod reasoner;
pub mod simgen;
