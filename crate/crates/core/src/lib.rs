//! Claim impact prediction over argument trees.
//!
//! The crate covers the whole pipeline: parsing and labeling vote-annotated
//! argument trees ([`corpus`]), hand-built features for a kernel baseline
//! ([`features`]), a small reverse-mode autodiff engine ([`autodiff`]), the
//! classifier families and context-composition strategies ([`models`]),
//! training with early stopping over several seeds ([`training`]), metrics
//! and significance tests ([`eval`]), and a generator of synthetic corpora
//! with planted, context-dependent labels ([`synth`]).

pub mod corpus;
pub mod autodiff;
pub mod features;
pub mod eval;
pub mod models;
pub mod synth;
pub mod training;
