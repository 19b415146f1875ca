//! Compiler and resource estimator for braided surface-code layouts.
//!
//! Circuits move between stages as gate lists (see [`gatelang`]). The
//! usual flow is generate or import, decompose into ICM form, schedule,
//! analyse T-state demand, then lay out and estimate.

pub mod analysis;
pub mod gatelang;
pub mod genio;
pub mod layout;
pub mod pipeline;
pub mod rewrite;
pub mod schedule;

pub use gatelang::{metrics, parse_circuit, parse_gate, serialize_gate, Circuit, Gate, GateKind};
