//! Detection and measurement of lexical entrainment in task-oriented
//! dialogues.
//!
//! The pipeline normalizes utterances ([`normalize`]), mines expressions
//! shared by both speakers ([`lexicon`]), keeps noun phrases ([`filter`]),
//! and scores the result per dialogue ([`measures`]) and per corpus
//! ([`analyze`]). [`task`] turns annotations into extraction samples and
//! scores span predictions against them.

pub mod analyze;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod filter;
pub mod lexicon;
pub mod measures;
pub mod normalize;
pub mod task;

pub use cli::{AnnotationRecord, Pipeline};
pub use error::{Error, Result};
