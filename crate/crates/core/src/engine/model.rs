use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::{Exchange, Question};

/// The questioner's model of the answerer: a distribution over answer symbols
/// for every `(class, question, history)`.
///
/// Implementations must return proper distributions (non-negative, summing to
/// one). `history` holds the exchanges that precede `question`.
pub trait LikelihoodModel<P> {
    fn n_classes(&self) -> usize;

    fn alphabet_size(&self) -> usize;

    /// Writes `p(a | class, question, history)` for every answer `a` into `out`,
    /// which has length [`alphabet_size`](Self::alphabet_size).
    fn evaluate(&self, class: usize, question: &Question<P>, history: &[Exchange], out: &mut [f64]);

    /// Optional fast path for models in which classes fall into a few groups
    /// sharing one answer distribution per question. When present, scans over
    /// classes reduce to one table lookup per class.
    fn grouped(&self, _question: &Question<P>, _history: &[Exchange]) -> Option<Grouped<'_>> {
        None
    }
}

/// Classes partitioned by a small key, with one answer distribution per key.
#[derive(Debug, Clone, Copy)]
pub struct Grouped<'a> {
    /// Group of each class, indexed by class.
    pub class_keys: &'a [u8],
    /// Row-major `n_keys x alphabet_size` answer distributions.
    pub rows: &'a [f64],
}

impl<'a> Grouped<'a> {
    pub fn n_keys(&self, alphabet: usize) -> usize {
        self.rows.len() / alphabet
    }

    pub fn row(&self, key: usize, alphabet: usize) -> &'a [f64] {
        &self.rows[key * alphabet..(key + 1) * alphabet]
    }
}

/// A likelihood given by an explicit table per question, independent of
/// history. Useful for small synthetic domains and deterministic
/// ("delta") answerers.
#[derive(Debug, Clone, PartialEq)]
pub struct TableLikelihood {
    n_classes: usize,
    alphabet: usize,
    // question id -> n_classes x alphabet
    tables: BTreeMap<usize, Vec<f64>>,
}

impl TableLikelihood {
    pub fn new(n_classes: usize, alphabet: usize) -> Self {
        TableLikelihood { n_classes, alphabet, tables: BTreeMap::new() }
    }

    /// Registers the answer distributions of question `id`; `rows[c]` is the
    /// distribution for class `c`.
    ///
    /// # Panics
    /// If the shape is wrong or a row is not a distribution.
    pub fn with_question(mut self, id: usize, rows: &[&[f64]]) -> Self {
        assert_eq!(rows.len(), self.n_classes, "one row per class");
        let mut flat = Vec::with_capacity(self.n_classes * self.alphabet);
        for row in rows {
            assert_eq!(row.len(), self.alphabet, "one entry per answer");
            assert!(row.iter().all(|&p| p >= 0.0), "negative probability");
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "row sums to {s}");
            flat.extend_from_slice(row);
        }
        self.tables.insert(id, flat);
        self
    }

    /// A noiseless question: class `c` always answers `answers[c]`.
    pub fn with_deterministic(mut self, id: usize, answers: &[usize]) -> Self {
        assert_eq!(answers.len(), self.n_classes, "one answer per class");
        let mut flat = alloc::vec![0.0; self.n_classes * self.alphabet];
        for (c, &a) in answers.iter().enumerate() {
            assert!(a < self.alphabet, "answer outside alphabet");
            flat[c * self.alphabet + a] = 1.0;
        }
        self.tables.insert(id, flat);
        self
    }

    pub fn probability(&self, class: usize, question: usize, answer: usize) -> f64 {
        self.tables[&question][class * self.alphabet + answer]
    }
}

impl<P> LikelihoodModel<P> for TableLikelihood {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    fn evaluate(&self, class: usize, question: &Question<P>, _history: &[Exchange], out: &mut [f64]) {
        let table = self
            .tables
            .get(&question.id)
            .unwrap_or_else(|| panic!("question {} is not in the table", question.id));
        out.copy_from_slice(&table[class * self.alphabet..(class + 1) * self.alphabet]);
    }
}
