use alloc::collections::BTreeSet;

use super::gain::gain_from_probs;
use super::{EngineError, LikelihoodModel, Posterior, Question};

/// A selected question: its position in the pool, its id and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub position: usize,
    pub id: usize,
    pub gain: f64,
}

impl Choice {
    /// True if `self` should replace `best`: higher gain, or equal gain and a
    /// lower question id.
    pub(crate) fn beats(&self, best: &Option<Choice>) -> bool {
        match best {
            None => true,
            Some(b) => self.gain > b.gain || (self.gain == b.gain && self.id < b.id),
        }
    }
}

/// Picks the pool question with maximal expected information gain. Ties go
/// to the lowest question id. Questions whose id is in `exclude` are skipped.
pub fn select_question<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    pool: &[Question<P>],
    lik: &L,
    exclude: Option<&BTreeSet<usize>>,
) -> Result<Choice, EngineError> {
    let probs = post.probs();
    let mut best: Option<Choice> = None;
    for (position, q) in pool.iter().enumerate() {
        if exclude.is_some_and(|ex| ex.contains(&q.id)) {
            continue;
        }
        let gain = gain_from_probs(&probs, q, post.history(), lik);
        let candidate = Choice { position, id: q.id, gain };
        if candidate.beats(&best) {
            best = Some(candidate);
        }
    }
    best.ok_or(EngineError::NoCandidateQuestion)
}
