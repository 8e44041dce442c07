use alloc::vec::Vec;

use super::gain::{gain_from_probs, marginal_from_probs};
use super::{posterior_update, Choice, EngineError, LikelihoodModel, Posterior, Question};

/// Default bound on `(|pool| * |alphabet|)^depth` for exhaustive lookahead.
pub const DEFAULT_LEAF_CAP: u128 = 10_000_000;

/// Chooses the first question of the `depth`-step plan with the largest total
/// expected information gain, by exhaustive expectimax: maximize over
/// questions, average over answers with the predictive distribution.
///
/// The returned gain is the value of the whole plan, `I[C; A_1..A_depth]`
/// under the model. With `depth == 1` this is exactly [`select_question`].
///
/// [`select_question`]: super::select_question
pub fn multi_step_information_gain<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    pool: &[Question<P>],
    lik: &L,
    depth: usize,
    leaf_cap: u128,
) -> Result<Choice, EngineError> {
    if depth == 0 {
        return Err(EngineError::ZeroDepth);
    }
    if pool.is_empty() {
        return Err(EngineError::NoCandidateQuestion);
    }
    let branching = (pool.len() as u128).saturating_mul(lik.alphabet_size() as u128);
    let leaves = (0..depth).fold(1u128, |acc, _| acc.saturating_mul(branching));
    if leaves > leaf_cap {
        return Err(EngineError::LookaheadTooLarge { leaves, cap: leaf_cap });
    }
    Ok(best_plan(post, pool, lik, depth))
}

fn best_plan<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    pool: &[Question<P>],
    lik: &L,
    depth: usize,
) -> Choice {
    let probs = post.probs();
    let mut best: Option<Choice> = None;
    for (position, q) in pool.iter().enumerate() {
        let mut value = gain_from_probs(&probs, q, post.history(), lik);
        if depth > 1 {
            value += expected_continuation(post, &probs, q, pool, lik, depth - 1);
        }
        let candidate = Choice { position, id: q.id, gain: value };
        if candidate.beats(&best) {
            best = Some(candidate);
        }
    }
    best.expect("pool is non-empty")
}

fn expected_continuation<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    probs: &[f64],
    question: &Question<P>,
    pool: &[Question<P>],
    lik: &L,
    depth: usize,
) -> f64 {
    let marginal: Vec<f64> = marginal_from_probs(probs, question, post.history(), lik);
    marginal
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .filter_map(|(answer, &m)| {
            posterior_update(post, question, answer, lik)
                .ok()
                .map(|next| m * best_plan(&next, pool, lik, depth).gain)
        })
        .sum()
}
