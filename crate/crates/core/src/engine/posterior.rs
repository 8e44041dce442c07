use alloc::vec;
use alloc::vec::Vec;

use super::{log_sum_exp, EngineError, Exchange, LikelihoodModel, Question};

const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Belief over classes before any question is asked, stored as log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    log_weights: Vec<f64>,
}

impl Prior {
    pub fn uniform(n_classes: usize) -> Result<Self, EngineError> {
        if n_classes == 0 {
            return Err(EngineError::InvalidPrior("at least one class is required"));
        }
        let lw = -libm::log(n_classes as f64);
        Ok(Prior { log_weights: vec![lw; n_classes] })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self, EngineError> {
        if weights.is_empty() {
            return Err(EngineError::InvalidPrior("at least one class is required"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(EngineError::InvalidPrior("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(EngineError::InvalidPrior("weights sum to zero"));
        }
        Ok(Prior { log_weights: weights.iter().map(|w| libm::log(w / total)).collect() })
    }

    /// Takes log-probabilities that already sum to one (within 1e-9).
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self, EngineError> {
        if log_weights.is_empty() {
            return Err(EngineError::InvalidPrior("at least one class is required"));
        }
        if log_weights.iter().any(|w| w.is_nan()) {
            return Err(EngineError::InvalidPrior("NaN log-weight"));
        }
        let s: f64 = log_weights.iter().map(|&w| libm::exp(w)).sum();
        if (s - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(EngineError::InvalidPrior("log-weights do not sum to one"));
        }
        Ok(Prior { log_weights })
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn n_classes(&self) -> usize {
        self.log_weights.len()
    }
}

/// Normalized log-probabilities over classes together with the history that
/// produced them. Updates return new values.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    log_probs: Vec<f64>,
    history: Vec<Exchange>,
}

impl Posterior {
    pub fn from_prior(prior: &Prior) -> Self {
        Posterior { log_probs: prior.log_weights.clone(), history: Vec::new() }
    }

    /// Normalizes arbitrary log-weights. Fails if every weight is `-inf` or
    /// any is NaN.
    pub fn from_log_weights(mut log_weights: Vec<f64>, history: Vec<Exchange>) -> Result<Self, EngineError> {
        if log_weights.iter().any(|w| w.is_nan()) {
            return Err(EngineError::InvalidPrior("NaN log-weight"));
        }
        let z = log_sum_exp(&log_weights);
        if !z.is_finite() {
            return Err(EngineError::InvalidPrior("log-weights cannot be normalized"));
        }
        log_weights.iter_mut().for_each(|w| *w -= z);
        Ok(Posterior { log_probs: log_weights, history })
    }

    /// A point mass on `class`.
    pub fn point_mass(n_classes: usize, class: usize) -> Self {
        let mut log_probs = vec![f64::NEG_INFINITY; n_classes];
        log_probs[class] = 0.0;
        Posterior { log_probs, history: Vec::new() }
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|&l| libm::exp(l)).collect()
    }

    pub fn n_classes(&self) -> usize {
        self.log_probs.len()
    }

    /// Number of answers folded in so far.
    pub fn turn(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[Exchange] {
        &self.history
    }

    /// Entropy of the class belief in nats.
    pub fn entropy(&self) -> f64 {
        0.0 - self
            .log_probs
            .iter()
            .filter(|l| l.is_finite())
            .map(|&l| libm::exp(l) * l)
            .sum::<f64>()
    }
}

fn check_classes<P, L: LikelihoodModel<P> + ?Sized>(lik: &L, n: usize) -> Result<(), EngineError> {
    if lik.n_classes() != n {
        return Err(EngineError::ClassCountMismatch { model: lik.n_classes(), posterior: n });
    }
    Ok(())
}

/// Adds `ln p(answer | c, question, history)` to every class's log-weight.
fn accumulate_log_likelihood<P, L: LikelihoodModel<P> + ?Sized>(
    log_weights: &mut [f64],
    question: &Question<P>,
    answer: usize,
    history: &[Exchange],
    lik: &L,
) -> Result<(), EngineError> {
    let alphabet = lik.alphabet_size();
    if answer >= alphabet {
        return Err(EngineError::AnswerOutOfAlphabet { answer, size: alphabet });
    }
    if let Some(g) = lik.grouped(question, history) {
        let log_row: Vec<f64> = (0..g.n_keys(alphabet))
            .map(|k| libm::log(g.row(k, alphabet)[answer]))
            .collect();
        for (w, &k) in log_weights.iter_mut().zip(g.class_keys) {
            *w += log_row[k as usize];
        }
    } else {
        let mut row = vec![0.0; alphabet];
        for (c, w) in log_weights.iter_mut().enumerate() {
            lik.evaluate(c, question, history, &mut row);
            *w += libm::log(row[answer]);
        }
    }
    Ok(())
}

/// One Bayes step: `p(c | h, q, a) ∝ p(c | h) p(a | c, q, h)`, renormalized
/// in log space.
pub fn posterior_update<P, L: LikelihoodModel<P> + ?Sized>(
    post: &Posterior,
    question: &Question<P>,
    answer: usize,
    lik: &L,
) -> Result<Posterior, EngineError> {
    check_classes(lik, post.n_classes())?;
    let mut log_probs = post.log_probs.clone();
    accumulate_log_likelihood(&mut log_probs, question, answer, &post.history, lik)?;
    let z = log_sum_exp(&log_probs);
    if !z.is_finite() {
        return Err(EngineError::ImpossibleAnswer { question: question.id, answer });
    }
    log_probs.iter_mut().for_each(|w| *w -= z);
    let mut history = post.history.clone();
    history.push((question.id, answer));
    Ok(Posterior { log_probs, history })
}

/// The batch form: prior times the product of every likelihood term, with a
/// single normalization at the end.
pub fn posterior_from_history<P, L: LikelihoodModel<P> + ?Sized>(
    prior: &Prior,
    history: &[(Question<P>, usize)],
    lik: &L,
) -> Result<Posterior, EngineError> {
    check_classes(lik, prior.n_classes())?;
    let mut log_weights = prior.log_weights.clone();
    let mut exchanges: Vec<Exchange> = Vec::with_capacity(history.len());
    for (question, answer) in history {
        accumulate_log_likelihood(&mut log_weights, question, *answer, &exchanges, lik)?;
        if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
            return Err(EngineError::ImpossibleAnswer { question: question.id, answer: *answer });
        }
        exchanges.push((question.id, *answer));
    }
    let z = log_sum_exp(&log_weights);
    log_weights.iter_mut().for_each(|w| *w -= z);
    Ok(Posterior { log_probs: log_weights, history: exchanges })
}

/// Maximum a posteriori class, lowest index on ties.
pub fn guess(post: &Posterior) -> usize {
    let mut best = 0;
    for (c, &l) in post.log_probs.iter().enumerate().skip(1) {
        if l > post.log_probs[best] {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TableLikelihood;
    use approx::assert_abs_diff_eq;

    fn two_class_model() -> TableLikelihood {
        // question 0: p(a=1 | c0) = 0.8, p(a=1 | c1) = 0.4
        TableLikelihood::new(2, 2).with_question(0, &[&[0.2, 0.8], &[0.6, 0.4]])
    }

    fn probs(p: &Posterior) -> Vec<f64> {
        p.probs()
    }

    #[test]
    fn class_independent_likelihood_is_identity() {
        let lik = TableLikelihood::new(4, 2).with_question(0, &[&[0.5, 0.5][..]; 4]);
        let prior = Posterior::from_prior(&Prior::uniform(4).unwrap());
        for a in 0..2 {
            let post = posterior_update(&prior, &Question::new(0, ()), a, &lik).unwrap();
            for p in probs(&post) {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
            }
            assert_eq!(post.turn(), 1);
        }
    }

    #[test]
    fn deterministic_separator_gives_point_mass() {
        let lik = TableLikelihood::new(2, 2).with_deterministic(0, &[1, 0]);
        let prior = Posterior::from_prior(&Prior::uniform(2).unwrap());
        let post = posterior_update(&prior, &Question::new(0, ()), 1, &lik).unwrap();
        assert_eq!(probs(&post), vec![1.0, 0.0]);
    }

    #[test]
    fn bayes_arithmetic() {
        let lik = two_class_model();
        let prior = Posterior::from_prior(&Prior::uniform(2).unwrap());
        let post = posterior_update(&prior, &Question::new(0, ()), 1, &lik).unwrap();
        let p = probs(&post);
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn impossible_answer_is_an_error() {
        let lik = TableLikelihood::new(2, 3).with_deterministic(0, &[0, 1]);
        let prior = Posterior::from_prior(&Prior::uniform(2).unwrap());
        let err = posterior_update(&prior, &Question::new(0, ()), 2, &lik).unwrap_err();
        assert_eq!(err, EngineError::ImpossibleAnswer { question: 0, answer: 2 });
        let err = posterior_from_history(&Prior::uniform(2).unwrap(), &[(Question::new(0, ()), 2)], &lik)
            .unwrap_err();
        assert_eq!(err, EngineError::ImpossibleAnswer { question: 0, answer: 2 });
    }

    #[test]
    fn out_of_alphabet_answer_is_rejected() {
        let lik = two_class_model();
        let prior = Posterior::from_prior(&Prior::uniform(2).unwrap());
        assert!(matches!(
            posterior_update(&prior, &Question::new(0, ()), 5, &lik),
            Err(EngineError::AnswerOutOfAlphabet { .. })
        ));
    }

    #[test]
    fn batch_history() {
        let lik = two_class_model();
        let prior = Prior::uniform(2).unwrap();
        let empty = posterior_from_history::<(), _>(&prior, &[], &lik).unwrap();
        assert_eq!(empty.log_probs(), prior.log_weights());

        let once = posterior_from_history(&prior, &[(Question::new(0, ()), 1)], &lik).unwrap();
        assert_abs_diff_eq!(once.probs()[0], 2.0 / 3.0, epsilon = 1e-12);

        let twice = posterior_from_history(
            &prior,
            &[(Question::new(0, ()), 1), (Question::new(0, ()), 1)],
            &lik,
        )
        .unwrap();
        assert_abs_diff_eq!(twice.probs()[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(twice.probs()[1], 0.2, epsilon = 1e-12);
        assert_eq!(twice.history(), &[(0, 1), (0, 1)]);
    }

    #[test]
    fn guess_takes_argmax_with_low_index_ties() {
        let p = Posterior::from_log_weights(vec![0.1f64.ln(), 0.7f64.ln(), 0.2f64.ln()], vec![]).unwrap();
        assert_eq!(guess(&p), 1);
        assert_eq!(guess(&Posterior::from_prior(&Prior::uniform(5).unwrap())), 0);
        assert_eq!(guess(&Posterior::point_mass(4, 3)), 3);
    }

    #[test]
    fn prior_validation() {
        assert!(Prior::uniform(0).is_err());
        assert!(Prior::from_weights(&[0.0, 0.0]).is_err());
        assert!(Prior::from_weights(&[1.0, -1.0]).is_err());
        assert!(Prior::from_log_weights(vec![0.0, 0.0]).is_err());
        let p = Prior::from_weights(&[1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(p.log_weights()[1].exp(), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn mismatched_class_count_is_rejected() {
        let lik = two_class_model();
        let prior = Posterior::from_prior(&Prior::uniform(3).unwrap());
        assert!(matches!(
            posterior_update(&prior, &Question::new(0, ()), 1, &lik),
            Err(EngineError::ClassCountMismatch { .. })
        ));
    }
}
