//! Clinical assertion classification toolkit.
//!
//! Classifies pre-identified medical-concept mentions in clinical text
//! into six assertion categories (positive, negated, possible,
//! hypothetical, historical, family) with two families of engines:
//!
//! - a deterministic rule engine built on trigger phrases, bounded scope
//!   resolution, and dimension precedence ([`context`]);
//! - LLM reasoning strategies over any OpenAI-compatible chat endpoint or
//!   a deterministic offline mock: direct question, chain-of-thought,
//!   self-consistency voting, and scored tree search ([`strategies`],
//!   [`backend`]).
//!
//! Around them: corpus parsing and i2b2 standoff conversion ([`corpus`],
//! [`i2b2`]), low-rank adapter arithmetic at desk scale ([`lora`]), and a
//! confusion-matrix/F1 harness with shipped published reference scores
//! ([`eval`]).

pub mod backend;
pub mod context;
pub mod corpus;
pub mod eval;
pub mod i2b2;
pub mod lexicon;
pub mod lora;
pub mod strategies;
pub mod types;

pub use types::{AnnotatedInstance, AssertionLabel, ConceptSpan, EngineKind, Prediction};
