//! Native language identification: corpus preparation, linguistic and
//! embedding features, logistic-regression classification, evaluation
//! protocols and embedding-space analysis.

pub mod classifier;
pub mod corpus;
pub mod embedstore;
pub mod error;
pub mod evalkit;
pub mod grammar;
pub mod lingfeat;
pub mod postag;
pub mod resources;
pub mod rng;
pub mod spacelab;
pub mod synth;
pub mod text;

pub use error::{Error, ErrorClass, Result};
