//! The domain-agnostic questioner: belief tracking over classes, information
//! gain, question selection and the dialog loop.
//!
//! Classes are addressed by index `0..n_classes`. A [`ClassSpace`] can attach
//! opaque identifiers to those indices when a caller needs them.

mod dialog;
mod gain;
mod lookahead;
mod model;
mod posterior;
mod select;

use alloc::vec::Vec;

pub use dialog::{
    run_dialog, Abort, AnswererFault, DialogConfig, Greedy, Lookahead, Questioner, RandomQuestioner,
    Transcript, TurnRecord,
};
pub use gain::{information_gain, information_gain_entropy_form, marginal_answer_distribution};
pub use lookahead::{multi_step_information_gain, DEFAULT_LEAF_CAP};
pub use model::{Grouped, LikelihoodModel, TableLikelihood};
pub use posterior::{guess, posterior_from_history, posterior_update, Posterior, Prior};
pub use select::{select_question, Choice};

/// One exchange of the dialog: `(question id, answer symbol)`.
pub type Exchange = (usize, usize);

/// A candidate question. The payload is opaque to the engine; only the
/// likelihood model interprets it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Question<P> {
    pub id: usize,
    pub payload: P,
}

impl<P> Question<P> {
    pub fn new(id: usize, payload: P) -> Self {
        Question { id, payload }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    /// Every class assigns zero probability to the observed answer. This means
    /// the likelihood model and the answerer disagree about what can be said.
    #[error("impossible-answer: answer {answer} to question {question} has zero likelihood for every class")]
    ImpossibleAnswer { question: usize, answer: usize },
    #[error("no-candidate-question: the question pool is empty after exclusions")]
    NoCandidateQuestion,
    #[error("lookahead-too-large: {leaves} leaf evaluations exceed the cap of {cap}")]
    LookaheadTooLarge { leaves: u128, cap: u128 },
    #[error("answer {answer} is outside the alphabet of size {size}")]
    AnswerOutOfAlphabet { answer: usize, size: usize },
    #[error("invalid prior: {0}")]
    InvalidPrior(&'static str),
    #[error("class space: {0}")]
    InvalidClassSpace(&'static str),
    #[error("answerer failed: {0}")]
    AnswererFatal(alloc::string::String),
    #[error("the dialog needs at least one turn")]
    ZeroTurns,
    #[error("lookahead depth must be at least 1")]
    ZeroDepth,
    #[error("likelihood covers {model} classes but the posterior has {posterior}")]
    ClassCountMismatch { model: usize, posterior: usize },
}

/// The hypotheses a questioner must choose between, with unique identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSpace<Id> {
    ids: Vec<Id>,
}

impl<Id: Ord + Clone> ClassSpace<Id> {
    pub fn new(ids: Vec<Id>) -> Result<Self, EngineError> {
        if ids.is_empty() {
            return Err(EngineError::InvalidClassSpace("at least one class is required"));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(EngineError::InvalidClassSpace("class identifiers must be unique"));
        }
        Ok(ClassSpace { ids })
    }

    pub fn n_classes(&self) -> usize {
        self.ids.len()
    }

    pub fn id(&self, index: usize) -> &Id {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[Id] {
        &self.ids
    }
}

impl ClassSpace<usize> {
    /// Classes identified by their own index.
    pub fn indexed(n: usize) -> Result<Self, EngineError> {
        Self::new((0..n).collect())
    }
}

/// `x ln x` with `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * libm::log(x)
    } else {
        0.0
    }
}

/// Shannon entropy in nats of a probability vector.
pub fn entropy(probs: &[f64]) -> f64 {
    0.0 - probs.iter().map(|&p| xlnx(p)).sum::<f64>()
}

/// `ln Σ exp(x)`, stable for large magnitudes. Returns `-inf` when every
/// entry is `-inf` (or the slice is empty).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| libm::exp(x - max)).sum();
    max + libm::log(s)
}
