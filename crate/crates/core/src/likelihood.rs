//! Answer models for the counting world.
//!
//! Both models see a class only through its true count for the question, so
//! each question needs one 17x17 table and every scan over candidates is a
//! lookup per class.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::engine::{Exchange, Grouped, LikelihoodModel, Question};
use crate::mnist::{true_count, CountQuestion, DigitImage, NoisyAnswerer, COUNT_ALPHABET};

const A: usize = COUNT_ALPHABET;

/// How the questioner obtains its answer model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Counts trained on ground-truth answers.
    IndA,
    /// Counts trained on answers sampled from the answerer.
    DepA,
    /// The answerer's exact answer distribution.
    TrueA,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::IndA => "indA",
            Regime::DepA => "depA",
            Regime::TrueA => "trueA",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "indA" | "inda" => Some(Regime::IndA),
            "depA" | "depa" => Some(Regime::DepA),
            "trueA" | "truea" => Some(Regime::TrueA),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingRegime {
    pub regime: Regime,
    /// Fraction of the training images used, in `(0, 1]`.
    pub train_fraction: f64,
}

impl TrainingRegime {
    pub fn new(regime: Regime) -> Self {
        TrainingRegime { regime, train_fraction: 1.0 }
    }

    /// Number of leading training images this regime uses.
    pub fn training_size(&self, available: usize) -> usize {
        let n = libm::ceil(self.train_fraction * available as f64) as usize;
        n.clamp(1.min(available), available)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("smoothing constant must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("normalizer must equal 17 x epsilon ({expected}), got {found}")]
    BadNormalizer { expected: f64, found: f64 },
    #[error("question id {0} appears twice")]
    DuplicateQuestion(usize),
    #[error("question id {0} is not in the model")]
    UnknownQuestion(usize),
}

/// Co-occurrence counts of (true count, reported count) for one question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTable {
    pub question: Question<CountQuestion>,
    /// `counts[a_real][a_reported]`
    pub counts: [[u64; A]; A],
}

impl ConfusionTable {
    pub fn empty(question: Question<CountQuestion>) -> Self {
        ConfusionTable { question, counts: [[0; A]; A] }
    }

    pub fn row_total(&self, a_real: usize) -> u64 {
        self.counts[a_real].iter().sum()
    }

    pub fn total(&self) -> u64 {
        (0..A).map(|r| self.row_total(r)).sum()
    }
}

/// Count-based answer model with additive smoothing:
/// `p(a | c, q) = (#(a | a_real) + eps) / (#a_real + eps')` where
/// `a_real = true_count(c, q)` and `eps' = 17 eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionModel {
    tables: Vec<ConfusionTable>,
    epsilon: f64,
    epsilon_prime: f64,
}

impl ConfusionModel {
    /// An untrained model over `questions`.
    pub fn new(questions: &[Question<CountQuestion>], epsilon: f64) -> Result<Self, ModelError> {
        let tables = questions.iter().cloned().map(ConfusionTable::empty).collect();
        Self::from_tables(tables, epsilon, epsilon * A as f64)
    }

    /// Reassembles a model from its parts, checking the invariants.
    pub fn from_tables(tables: Vec<ConfusionTable>, epsilon: f64, epsilon_prime: f64) -> Result<Self, ModelError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ModelError::BadEpsilon(epsilon));
        }
        let expected = epsilon * A as f64;
        if epsilon_prime != expected {
            return Err(ModelError::BadNormalizer { expected, found: epsilon_prime });
        }
        let mut ids: Vec<usize> = tables.iter().map(|t| t.question.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateQuestion(w[0]));
        }
        Ok(ConfusionModel { tables, epsilon, epsilon_prime })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn epsilon_prime(&self) -> f64 {
        self.epsilon_prime
    }

    pub fn tables(&self) -> &[ConfusionTable] {
        &self.tables
    }

    pub fn table(&self, question_id: usize) -> Option<&ConfusionTable> {
        self.tables.iter().find(|t| t.question.id == question_id)
    }

    /// Records one training observation.
    pub fn observe(&mut self, question_id: usize, a_real: u8, a_reported: u8) -> Result<(), ModelError> {
        let table = self
            .tables
            .iter_mut()
            .find(|t| t.question.id == question_id)
            .ok_or(ModelError::UnknownQuestion(question_id))?;
        table.counts[a_real as usize][a_reported as usize] += 1;
        Ok(())
    }

    /// Adds another model's counts (same questions) into this one.
    pub fn merge(&mut self, other: &ConfusionModel) -> Result<(), ModelError> {
        for t in &other.tables {
            let mine = self
                .tables
                .iter_mut()
                .find(|m| m.question.id == t.question.id)
                .ok_or(ModelError::UnknownQuestion(t.question.id))?;
            for r in 0..A {
                for a in 0..A {
                    mine.counts[r][a] += t.counts[r][a];
                }
            }
        }
        Ok(())
    }

    /// The smoothed answer distribution given the true count.
    pub fn row(&self, question_id: usize, a_real: u8) -> Result<[f64; A], ModelError> {
        let table = self.table(question_id).ok_or(ModelError::UnknownQuestion(question_id))?;
        Ok(self.smoothed_row(table, a_real as usize))
    }

    fn smoothed_row(&self, table: &ConfusionTable, a_real: usize) -> [f64; A] {
        let denom = table.row_total(a_real) as f64 + self.epsilon_prime;
        let mut row = [0.0; A];
        for (p, &n) in row.iter_mut().zip(&table.counts[a_real]) {
            *p = (n as f64 + self.epsilon) / denom;
        }
        row
    }
}

/// Trains a confusion model: for every image and question, `a_real` is the
/// true count and the reported count comes from `label`. Ground-truth labels
/// give the indA model, answerer samples the depA model.
pub fn train_confusion<F>(
    images: &[DigitImage],
    questions: &[Question<CountQuestion>],
    epsilon: f64,
    mut label: F,
) -> Result<ConfusionModel, ModelError>
where
    F: FnMut(&DigitImage, &Question<CountQuestion>) -> u8,
{
    let mut model = ConfusionModel::new(questions, epsilon)?;
    for (table, q) in model.tables.iter_mut().zip(questions) {
        for img in images {
            let a_real = true_count(img, &q.payload) as usize;
            let a_feat = label(img, q) as usize;
            table.counts[a_real][a_feat] += 1;
        }
    }
    Ok(model)
}

/// `p(answer | class, question)` under a confusion model.
pub fn confusion_likelihood(
    model: &ConfusionModel,
    class: &DigitImage,
    question: &Question<CountQuestion>,
    answer: u8,
) -> Result<f64, ModelError> {
    let row = model.row(question.id, true_count(class, &question.payload))?;
    Ok(row[answer as usize])
}

/// `p(answer | class, question)` under the answerer's exact channel.
pub fn true_likelihood(answerer: &NoisyAnswerer, class: &DigitImage, question: &CountQuestion, answer: u8) -> f64 {
    answerer.answer_distribution(class, question).probs[answer as usize]
}

/// Where the per-count answer rows come from.
#[derive(Debug, Clone, Copy)]
pub enum AnswerChannel<'a> {
    Confusion(&'a ConfusionModel),
    Exact(&'a NoisyAnswerer),
}

/// A [`LikelihoodModel`] over a fixed candidate set, with the per-question
/// true counts of every candidate and the 17x17 answer rows precomputed.
#[derive(Debug, Clone)]
pub struct CountLikelihood {
    n_classes: usize,
    slot: BTreeMap<usize, usize>,
    counts: Vec<Vec<u8>>,
    rows: Vec<Vec<f64>>,
}

impl CountLikelihood {
    pub fn new(
        candidates: &[DigitImage],
        questions: &[Question<CountQuestion>],
        channel: AnswerChannel<'_>,
    ) -> Result<Self, ModelError> {
        let mut slot = BTreeMap::new();
        let mut counts = Vec::with_capacity(questions.len());
        let mut rows = Vec::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            if slot.insert(q.id, i).is_some() {
                return Err(ModelError::DuplicateQuestion(q.id));
            }
            counts.push(candidates.iter().map(|c| true_count(c, &q.payload)).collect());
            let mut table = vec![0.0; A * A];
            for a_real in 0..A as u8 {
                let row = match channel {
                    AnswerChannel::Confusion(m) => m.row(q.id, a_real)?,
                    AnswerChannel::Exact(ans) => ans.distribution_given_count(a_real, &q.payload).probs,
                };
                table[a_real as usize * A..][..A].copy_from_slice(&row);
            }
            rows.push(table);
        }
        Ok(CountLikelihood { n_classes: candidates.len(), slot, counts, rows })
    }

    fn slot(&self, question: &Question<CountQuestion>) -> usize {
        *self
            .slot
            .get(&question.id)
            .unwrap_or_else(|| panic!("question {} was not prepared", question.id))
    }

    /// True count of candidate `class` for `question`.
    pub fn true_count(&self, class: usize, question: &Question<CountQuestion>) -> u8 {
        self.counts[self.slot(question)][class]
    }
}

impl LikelihoodModel<CountQuestion> for CountLikelihood {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn alphabet_size(&self) -> usize {
        A
    }

    fn evaluate(&self, class: usize, question: &Question<CountQuestion>, _history: &[Exchange], out: &mut [f64]) {
        let s = self.slot(question);
        let a_real = self.counts[s][class] as usize;
        out.copy_from_slice(&self.rows[s][a_real * A..(a_real + 1) * A]);
    }

    fn grouped(&self, question: &Question<CountQuestion>, _history: &[Exchange]) -> Option<Grouped<'_>> {
        let s = self.slot(question);
        Some(Grouped { class_keys: &self.counts[s], rows: &self.rows[s] })
    }
}
