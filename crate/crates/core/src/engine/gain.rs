use alloc::vec;
use alloc::vec::Vec;

use super::{entropy, xlnx, Exchange, LikelihoodModel, Posterior, Question};

/// Floating-point slack below zero that is silently clamped.
const NEGATIVE_SLACK: f64 = 1e-12;

/// Class mass per group and the answer marginal, for grouped models.
fn grouped_masses(probs: &[f64], keys: &[u8], n_keys: usize) -> Vec<f64> {
    let mut mass = vec![0.0; n_keys];
    for (&p, &k) in probs.iter().zip(keys) {
        mass[k as usize] += p;
    }
    mass
}

/// `p'(a) = Σ_c p(c) p(a | c, q)` given linear-space class probabilities.
pub(crate) fn marginal_from_probs<P, L: LikelihoodModel<P> + ?Sized>(
    probs: &[f64],
    question: &Question<P>,
    history: &[Exchange],
    lik: &L,
) -> Vec<f64> {
    let alphabet = lik.alphabet_size();
    let mut marginal = vec![0.0; alphabet];
    if let Some(g) = lik.grouped(question, history) {
        let mass = grouped_masses(probs, g.class_keys, g.n_keys(alphabet));
        for (k, &w) in mass.iter().enumerate() {
            if w > 0.0 {
                for (m, &r) in marginal.iter_mut().zip(g.row(k, alphabet)) {
                    *m += w * r;
                }
            }
        }
    } else {
        let mut row = vec![0.0; alphabet];
        for (c, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                lik.evaluate(c, question, history, &mut row);
                for (m, &r) in marginal.iter_mut().zip(&row) {
                    *m += p * r;
                }
            }
        }
    }
    marginal
}

/// `Σ_c p(c) Σ_a p(a|c,q) ln[p(a|c,q) / p'(a)]`, the KL form of the expected
/// information gain, with `0 ln 0 = 0`.
pub(crate) fn gain_from_probs<P, L: LikelihoodModel<P> + ?Sized>(
    probs: &[f64],
    question: &Question<P>,
    history: &[Exchange],
    lik: &L,
) -> f64 {
    let alphabet = lik.alphabet_size();
    let marginal = marginal_from_probs(probs, question, history, lik);
    let kl = |row: &[f64]| -> f64 {
        row.iter()
            .zip(&marginal)
            .filter(|(&r, _)| r > 0.0)
            .map(|(&r, &m)| r * libm::log(r / m))
            .sum::<f64>()
    };
    let mut gain = 0.0;
    if let Some(g) = lik.grouped(question, history) {
        let mass = grouped_masses(probs, g.class_keys, g.n_keys(alphabet));
        for (k, &w) in mass.iter().enumerate() {
            if w > 0.0 {
                gain += w * kl(g.row(k, alphabet));
            }
        }
    } else {
        let mut row = vec![0.0; alphabet];
        for (c, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                lik.evaluate(c, question, history, &mut row);
                gain += p * kl(&row);
            }
        }
    }
    clamp_gain(gain)
}

fn clamp_gain(gain: f64) -> f64 {
    assert!(
        gain >= -NEGATIVE_SLACK,
        "internal error: information gain {gain} is negative beyond rounding"
    );
    gain.max(0.0)
}

/// Predictive distribution of the next answer to `question`.
pub fn marginal_answer_distribution<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    question: &Question<P>,
    lik: &L,
) -> Vec<f64> {
    marginal_from_probs(&post.probs(), question, post.history(), lik)
}

/// Expected information gain (nats) about the class from asking `question`
/// under the current posterior.
pub fn information_gain<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    question: &Question<P>,
    lik: &L,
) -> f64 {
    gain_from_probs(&post.probs(), question, post.history(), lik)
}

/// The same quantity as [`information_gain`], computed as the expected drop in
/// class entropy `H[C] - Σ_a p'(a) H[C | a]` by forming every conditional
/// posterior explicitly. Slow; intended as an independent check.
pub fn information_gain_entropy_form<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    question: &Question<P>,
    lik: &L,
) -> f64 {
    let probs = post.probs();
    let alphabet = lik.alphabet_size();
    let n = probs.len();
    // joint[a][c] = p(c) p(a | c)
    let mut joint = vec![vec![0.0; n]; alphabet];
    let mut row = vec![0.0; alphabet];
    for (c, &p) in probs.iter().enumerate() {
        lik.evaluate(c, question, post.history(), &mut row);
        for a in 0..alphabet {
            joint[a][c] = p * row[a];
        }
    }
    let prior_entropy = entropy(&probs);
    let mut conditional = 0.0;
    for column in &joint {
        let pa: f64 = column.iter().sum();
        if pa > 0.0 {
            let h = -column.iter().map(|&j| xlnx(j / pa)).sum::<f64>();
            conditional += pa * h;
        }
    }
    prior_entropy - conditional
}
