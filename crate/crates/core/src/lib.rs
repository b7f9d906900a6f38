//! Desk-scale harness for the agentic localize-clip-answer loop over long
//! videos: the trajectory model and wire protocol, crop and frame-budget
//! planning, the reward system with its low-IoU penalty, group-relative
//! advantage math, unified SFT masking, the data-curation state machine, and
//! duration-bucketed evaluation.
//!
//! The neural policy is abstracted behind [`rollout::Policy`]; scripted
//! policies and a synthetic environment make every formula and procedure
//! independently testable, and the same wire contracts reach a real model
//! server over HTTP.

pub mod cliptool;
pub mod datapipe;
pub mod evalkit;
pub mod exec;
pub mod grpo;
pub mod jsonl;
pub mod masking;
pub mod protocol;
pub mod rewards;
pub mod rollout;
pub mod synthbench;
pub mod types;
