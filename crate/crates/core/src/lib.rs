//! Semi-supervised factor-graph recommendation of microblog items.
//!
//! Each candidate (user, item) pair is a binary node. Node factors tie the
//! label to three squared distances between the user's latent profile and
//! the item (interaction attributes, topics, keywords); edge factors couple
//! behaviors linked by topic-level social influence. Known labels are
//! clamped and the weights φ = (α, β, γ, λ) are fitted by maximizing the
//! likelihood of the known labels with the unknown ones marginalized out.
//!
//! The crate is `no_std` (with `alloc`); file formats and the command line
//! live in the companion `microrec` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod eval;
pub mod features;
pub mod graph;
pub mod inference;
pub mod influence;
mod math;
pub mod synth;

pub use corpus::{Corpus, Label};
pub use graph::{FactorGraph, Params};
pub use inference::Engine;
