//! Question selection by expected information gain against an explicit model
//! of the answerer.
//!
//! The questioner keeps a posterior over candidate classes, scores every
//! question in a pool by the mutual information between the class and the
//! answer it would receive, asks the best one, and folds the answer back into
//! the posterior. Everything here is `no_std` + `alloc`; file formats, the
//! experiment runner and the command line live in the `aqm` crate.
//!
//! * [`engine`] is domain agnostic: posteriors, information gain, greedy and
//!   lookahead selection, and the dialog loop.
//! * [`pool`] builds candidate question sets.
//! * [`mnist`] is the counting-dialog world and its noisy answerer.
//! * [`likelihood`] holds the answer models the questioner uses for that world.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod engine;
pub mod likelihood;
pub mod mnist;
pub mod pool;
pub mod seed;

pub use engine::{
    Choice, ClassSpace, EngineError, Exchange, LikelihoodModel, Posterior, Prior, Question,
};
