//! Toolkit for studying "aha moment" behaviour in reasoning models.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`puzzlegen`]: Knights-and-Knaves and Count Down benchmarks with
//!   exhaustively verified solutions.
//! - [`transcript`]: the JSONL transcript model, sentence segmentation and
//!   beginning tokens.
//! - [`lingstats`], [`uncertainty`], [`collapse`], [`rasm`]: the response-level
//!   analyses.
//! - [`latent`]: per-layer PCA and silhouette scoring of ingested activations.
//! - [`report`]: byte-stable CSV/JSON emission.
//! - [`fixtures`]: planted-effect corpora used by the acceptance suite.

pub mod collapse;
pub mod fixtures;
pub mod latent;
pub mod lingstats;
pub mod puzzlegen;
pub mod rasm;
pub mod report;
pub mod transcript;
pub mod uncertainty;

mod seed;

pub use seed::derive_seed;
pub use transcript::{Role, Task, TokenEvent, Transcript};
