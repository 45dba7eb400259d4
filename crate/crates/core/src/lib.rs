//! Prüfer-sequence representations of abstract syntax trees.
//!
//! The crate covers the full path from an AST to a code summary:
//!
//! - [`tree`]: the ordered labeled tree every other module works on, plus AST-JSON ingestion.
//! - [`prufer`]: lossless Prüfer encoding and decoding, the syntactic Prüfer sequence,
//!   the encoder input and the structure-aware context sequence.
//! - [`baselines`]: SBT, BFS, flat-token and leaf-to-leaf path representations.
//! - [`corpus`]: tokenization, vocabularies, truncation, splits and length statistics.
//! - [`metrics`]: sentence BLEU (smoothing 4), corpus BLEU, METEOR and ROUGE-L.
//! - [`model`]: a dual-encoder GRU sequence-to-sequence model with hand-written gradients.
//! - [`synth`]: seeded synthetic corpora used by the tests and the CLI.

pub mod baselines;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod prufer;
pub mod synth;
pub mod tree;

pub use prufer::{ContextSequence, PruferCode, SyntacticSequence};
pub use tree::{LabeledTree, Node, TokenRole};
