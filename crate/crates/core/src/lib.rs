//! Prompted contextual vectors.
//!
//! Documents are turned into feature vectors by asking an ensemble of LLM
//! judges a fixed bank of questions about persuasion cues and recording
//! each judge's probability answer. This crate holds the ingest path, the
//! question bank, judge providers (HTTP and an offline mock), vector
//! assembly, classical text baselines, classifiers and metrics, the
//! experiment protocols, and an exact t-SNE for inspecting feature spaces.

pub mod baselines;
pub mod corpus;
pub mod digest;
pub mod error;
pub mod experiments;
pub mod learn;
pub mod par;
pub mod providers;
pub mod questions;
pub mod synth;
pub mod vectorize;
pub mod viz;

pub use error::{Error, Result};
