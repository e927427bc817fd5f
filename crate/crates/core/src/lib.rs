//! Persona-augmented dataset curation, greedy-decoding evaluation, and
//! strategy-matrix reporting for math and multiple-choice benchmarks.
//!
//! The pipeline runs in stages, each reading and writing line-oriented JSON
//! artifacts so any step can be audited or re-run in isolation:
//!
//! 1. [`corpus`] — ingest, filter, and deterministically sample reasoning
//!    records.
//! 2. [`persona`] — generate persona texts per query under one of four
//!    strategies and splice them into prompts.
//! 3. [`variant`] — materialize augmented train/test dataset variants and
//!    training manifests.
//! 4. [`inference`] — run greedy decoding over a variant against a
//!    chat-completions endpoint, resumably.
//! 5. [`grader`] — extract final answers, canonicalize, and score runs.
//! 6. [`metrics`] — assemble train×test strategy matrices, majority votes,
//!    and reports.
//!
//! [`client`] is the shared HTTP layer (retries, bounded parallelism, and an
//! append-only ledger that makes every step replayable without network
//! traffic), and [`config`] binds it all to a TOML run configuration.

pub mod client;
pub mod config;
pub mod corpus;
pub mod error;
pub mod grader;
pub mod inference;
pub mod metrics;
pub mod mockserver;
pub mod persona;
pub mod variant;
pub mod rng;
