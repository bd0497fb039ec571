//! Contract-driven evaluation harness for tool-using agents.
//!
//! One canonical contract per tool drives three interface representations
//! (prose, JSON Schema, schema plus structured diagnostics), a validator
//! with graded feedback, a deterministic diagnostic sandbox, trace oracles
//! for semantic alignment, a budgeted episode harness, and the full
//! metric/statistics pipeline.

pub mod agents;
pub mod analysis;
pub mod cli;
pub mod contract;
pub mod families;
pub mod harness;
pub mod microlang;
pub mod oracle;
pub mod patch;
pub mod sandbox;
pub mod tools;
pub mod render;
pub mod rng;
pub mod standard;
pub mod stats;
pub mod taxonomy;
pub mod tokenize;
pub mod textmatch;
pub mod validate;
