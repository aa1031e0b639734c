//! Refactoring pipeline that turns cryptographic-kernel C into HLS-ready C.

pub mod csrc;
pub mod blockers;
pub mod process;
pub mod verify;
pub mod xform;
pub mod llm;
pub mod synth;
pub mod orchestrator;
pub mod config;
pub mod report;
pub mod cli;
