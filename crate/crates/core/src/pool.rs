//! Candidate question sets built before a game starts.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::engine::Question;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PoolError {
    #[error("question enumeration is empty")]
    Empty,
    #[error("duplicate question id {0}")]
    DuplicateId(usize),
    #[error("requested {requested} questions but only {available} are available")]
    TooLarge { requested: usize, available: usize },
    #[error("unscored-pair: questions {0} and {1} have no scored answers")]
    UnscoredPair(usize, usize),
    #[error("agreement threshold must lie in (0, 1]")]
    BadThreshold,
}

/// How a pool was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Full,
    RandQ,
    /// Dependency-filtered; `accepted` may fall short of `requested`.
    CountQ { requested: usize, accepted: usize },
}

impl Provenance {
    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::Full => "full",
            Provenance::RandQ => "randQ",
            Provenance::CountQ { .. } => "countQ",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionPool<P> {
    questions: Vec<Question<P>>,
    provenance: Provenance,
    build_seed: u64,
}

impl<P> QuestionPool<P> {
    /// Checks that the pool is non-empty with unique ids.
    pub fn new(questions: Vec<Question<P>>, provenance: Provenance, build_seed: u64) -> Result<Self, PoolError> {
        if questions.is_empty() {
            return Err(PoolError::Empty);
        }
        check_unique(&questions)?;
        Ok(QuestionPool { questions, provenance, build_seed })
    }

    pub fn questions(&self) -> &[Question<P>] {
        &self.questions
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn build_seed(&self) -> u64 {
        self.build_seed
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn into_questions(self) -> Vec<Question<P>> {
        self.questions
    }
}

fn check_unique<P>(questions: &[Question<P>]) -> Result<(), PoolError> {
    let mut ids: Vec<usize> = questions.iter().map(|q| q.id).collect();
    ids.sort_unstable();
    match ids.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(PoolError::DuplicateId(w[0])),
        None => Ok(()),
    }
}

/// Every question of the domain, with ids `0..n` in enumeration order.
pub fn full_pool<P>(enumeration: impl IntoIterator<Item = P>) -> Result<QuestionPool<P>, PoolError> {
    let questions = enumeration.into_iter().enumerate().map(|(i, p)| Question::new(i, p)).collect();
    QuestionPool::new(questions, Provenance::Full, 0)
}

/// `n` questions sampled uniformly without replacement from `training`.
pub fn rand_q<P: Clone>(training: &[Question<P>], n: usize, seed: u64) -> Result<QuestionPool<P>, PoolError> {
    if n > training.len() {
        return Err(PoolError::TooLarge { requested: n, available: training.len() });
    }
    check_unique(training)?;
    let mut rng = seed::stream(seed, &[]);
    let picked = rand::seq::index::sample(&mut rng, training.len(), n);
    let questions = picked.iter().map(|i| training[i].clone()).collect();
    QuestionPool::new(questions, Provenance::RandQ, seed)
}

/// Joint answer counts for pairs of questions scored on the same items.
/// Pairs are stored once; `(j, i)` reads the transpose of `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerPairCounts {
    alphabet: usize,
    pairs: BTreeMap<(usize, usize), Vec<u64>>,
}

impl AnswerPairCounts {
    pub fn new(alphabet: usize) -> Self {
        AnswerPairCounts { alphabet, pairs: BTreeMap::new() }
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Records the answers of questions `i` and `j` on the same items
    /// (`answers_i[k]` and `answers_j[k]` belong to item `k`).
    ///
    /// # Panics
    /// If the slices differ in length or an answer is outside the alphabet.
    pub fn score(&mut self, i: usize, answers_i: &[usize], j: usize, answers_j: &[usize]) {
        assert_eq!(answers_i.len(), answers_j.len(), "answers must cover the same items");
        let (key, swap) = if i <= j { ((i, j), false) } else { ((j, i), true) };
        let m = self.alphabet;
        let counts = self.pairs.entry(key).or_insert_with(|| vec![0; m * m]);
        for (&a, &b) in answers_i.iter().zip(answers_j) {
            assert!(a < m && b < m, "answer outside alphabet");
            let (r, c) = if swap { (b, a) } else { (a, b) };
            counts[r * m + c] += 1;
        }
    }

    /// `counts[(i, j)][a][b]` as a row-major matrix, if the pair was scored.
    pub fn matrix(&self, i: usize, j: usize) -> Option<Vec<u64>> {
        let m = self.alphabet;
        if i <= j {
            self.pairs.get(&(i, j)).cloned()
        } else {
            let t = self.pairs.get(&(j, i))?;
            let mut out = vec![0; m * m];
            for a in 0..m {
                for b in 0..m {
                    out[a * m + b] = t[b * m + a];
                }
            }
            Some(out)
        }
    }

    pub fn total(&self, i: usize, j: usize) -> u64 {
        self.pairs.get(&(i.min(j), i.max(j))).map_or(0, |c| c.iter().sum())
    }
}

/// Empirical probability that questions `i` and `j` get the same answer.
pub fn pairwise_agreement(i: usize, j: usize, counts: &AnswerPairCounts) -> Result<f64, PoolError> {
    let c = counts.pairs.get(&(i.min(j), i.max(j))).ok_or(PoolError::UnscoredPair(i, j))?;
    let total: u64 = c.iter().sum();
    if total == 0 {
        return Err(PoolError::UnscoredPair(i, j));
    }
    let m = counts.alphabet;
    let same: u64 = (0..m).map(|a| c[a * m + a]).sum();
    Ok(same as f64 / total as f64)
}

/// Greedy dependency filter: scan `candidates` in ascending id order and
/// accept one if its answer agreement with every accepted question is below
/// `threshold`. Stops after `n` acceptances. Agreement is measured with
/// `oracle(item, payload)` over `items`.
///
/// Returns the pool (possibly shorter than `n`) and the pair counts scored
/// along the way.
pub fn count_q<T, P: Clone>(
    items: &[T],
    candidates: &[Question<P>],
    n: usize,
    threshold: f64,
    alphabet: usize,
    oracle: impl Fn(&T, &P) -> usize,
) -> Result<(QuestionPool<P>, AnswerPairCounts), PoolError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(PoolError::BadThreshold);
    }
    if candidates.is_empty() {
        return Err(PoolError::Empty);
    }
    check_unique(candidates)?;
    let mut order: Vec<&Question<P>> = candidates.iter().collect();
    order.sort_by_key(|q| q.id);

    let mut counts = AnswerPairCounts::new(alphabet);
    let mut accepted: Vec<(&Question<P>, Vec<usize>)> = Vec::new();
    for q in order {
        if accepted.len() == n {
            break;
        }
        let answers: Vec<usize> = items.iter().map(|it| oracle(it, &q.payload)).collect();
        let mut keep = true;
        for (other, other_answers) in &accepted {
            counts.score(other.id, other_answers, q.id, &answers);
            if pairwise_agreement(other.id, q.id, &counts)? >= threshold {
                keep = false;
                break;
            }
        }
        if keep {
            accepted.push((q, answers));
        }
    }
    let kept = accepted.len();
    let questions = accepted.into_iter().map(|(q, _)| q.clone()).collect();
    let pool = QuestionPool::new(questions, Provenance::CountQ { requested: n, accepted: kept }, 0)?;
    Ok((pool, counts))
}
