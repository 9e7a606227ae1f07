//! Counterfactual explanations for node classifiers on musical score graphs.
//!
//! A score is turned into a heterogeneous graph ([`graph::ScoreGraph`]),
//! a black-box [`model::NodeClassifier`] labels its notes, and the
//! [`explainer`] searches for small, musically coherent edits
//! ([`edits::EditOp`]) that move the prediction at one note to a desired
//! label while staying close to the input ([`distance`]).

pub mod distance;
pub mod edits;
pub mod error;
pub mod explainer;
pub mod features;
pub mod graph;
pub mod io;
pub mod model;
pub mod note;
pub mod rational;

pub use error::{Error, Result};
pub use graph::{Edge, EdgeType, NodeRef, ScoreGraph};
pub use note::{Note, NoteId, Spelling, Step};
pub use rational::Rational;
