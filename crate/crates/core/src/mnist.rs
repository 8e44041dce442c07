//! The counting-dialog world: images of 16 digits with four categorical
//! properties, count questions, and a noisy answerer.
//!
//! Digits carry no position; only property counts matter.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::seed::{self, StreamRng};

pub const DIGITS_PER_IMAGE: usize = 16;
/// Answers are counts `0..=16`.
pub const COUNT_ALPHABET: usize = DIGITS_PER_IMAGE + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    Color,
    Bgcolor,
    Number,
    Style,
}

const COLORS: [&str; 5] = ["red", "blue", "green", "purple", "brown"];
const BGCOLORS: [&str; 5] = ["cyan", "yellow", "white", "silver", "salmon"];
const NUMBERS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
const STYLES: [&str; 2] = ["flat", "stroke"];

impl Property {
    pub const ALL: [Property; 4] = [Property::Color, Property::Bgcolor, Property::Number, Property::Style];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Property::Color => "color",
            Property::Bgcolor => "bgcolor",
            Property::Number => "number",
            Property::Style => "style",
        }
    }

    pub fn values(self) -> &'static [&'static str] {
        match self {
            Property::Color => &COLORS,
            Property::Bgcolor => &BGCOLORS,
            Property::Number => &NUMBERS,
            Property::Style => &STYLES,
        }
    }

    /// Number of values `K` the property can take.
    pub fn cardinality(self) -> usize {
        self.values().len()
    }

    pub fn value_name(self, value: u8) -> Option<&'static str> {
        self.values().get(value as usize).copied()
    }

    pub fn parse_value(self, name: &str) -> Option<u8> {
        self.values().iter().position(|v| *v == name).map(|i| i as u8)
    }

    pub fn parse(name: &str) -> Option<Property> {
        Property::ALL.into_iter().find(|p| p.name() == name)
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One small digit: a value index per property, in [`Property::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digit(pub [u8; 4]);

impl Digit {
    /// Fails if any value is outside its property's domain.
    pub fn new(values: [u8; 4]) -> Option<Self> {
        Property::ALL
            .iter()
            .all(|p| (values[p.index()] as usize) < p.cardinality())
            .then_some(Digit(values))
    }

    pub fn get(&self, property: Property) -> u8 {
        self.0[property.index()]
    }
}

/// A candidate image: exactly 16 digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DigitImage {
    pub id: u32,
    pub digits: [Digit; DIGITS_PER_IMAGE],
}

impl DigitImage {
    /// How many digits have `question.property == question.value`.
    pub fn count(&self, question: &CountQuestion) -> u8 {
        count_matching(&self.digits, question)
    }
}

fn count_matching(digits: &[Digit], q: &CountQuestion) -> u8 {
    digits.iter().filter(|d| d.get(q.property) == q.value).count() as u8
}

/// The true count `a_real` for `image` and `question`.
pub fn true_count(image: &DigitImage, question: &CountQuestion) -> u8 {
    image.count(question)
}

/// "How many digits have `property` = `value`?"
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CountQuestion {
    pub property: Property,
    pub value: u8,
}

impl CountQuestion {
    pub fn new(property: Property, value: u8) -> Option<Self> {
        ((value as usize) < property.cardinality()).then_some(CountQuestion { property, value })
    }

    pub fn value_name(&self) -> &'static str {
        self.property.value_name(self.value).expect("validated on construction")
    }
}

impl fmt::Display for CountQuestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "how many digits have {} = {}?", self.property, self.value_name())
    }
}

/// All 22 count questions, from `color = red` to `style = stroke`.
pub fn count_questions() -> Vec<CountQuestion> {
    Property::ALL
        .iter()
        .flat_map(|&p| (0..p.cardinality() as u8).map(move |v| CountQuestion { property: p, value: v }))
        .collect()
}

/// `n_images` images with every property of every digit drawn uniformly and
/// independently. Image ids are `0..n_images`.
pub fn generate_world(n_images: usize, seed: u64) -> Vec<DigitImage> {
    let mut rng = seed::stream(seed, &[]);
    (0..n_images)
        .map(|i| {
            let mut digits = [Digit::default(); DIGITS_PER_IMAGE];
            for d in digits.iter_mut() {
                for p in Property::ALL {
                    d.0[p.index()] = rng.gen_range(0..p.cardinality() as u8);
                }
            }
            DigitImage { id: i as u32, digits }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswererError {
    #[error("property accuracy lambda must lie in (0.5, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("recognition accuracy for {0} must lie in [0, 1]")]
    AccuracyOutOfRange(Property),
}

/// The answerer: recognizes each digit's property correctly with a
/// per-property accuracy, otherwise sees one of the other values uniformly,
/// and reports the count of what it saw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyAnswerer {
    lambda: f64,
    accuracy: [f64; 4],
    seed: u64,
}

impl NoisyAnswerer {
    /// Draws each property's accuracy uniformly from `[2 lambda - 1, 1]`.
    pub fn new(lambda: f64, seed: u64) -> Result<Self, AnswererError> {
        if !(lambda > 0.5 && lambda <= 1.0) {
            return Err(AnswererError::LambdaOutOfRange(lambda));
        }
        let low = 2.0 * lambda - 1.0;
        let mut rng = seed::stream(seed, &[]);
        let mut accuracy = [1.0; 4];
        if low < 1.0 {
            for a in accuracy.iter_mut() {
                *a = rng.gen_range(low..=1.0);
            }
        }
        Ok(NoisyAnswerer { lambda, accuracy, seed })
    }

    /// An answerer with explicit per-property accuracies, in
    /// [`Property::ALL`] order.
    pub fn with_accuracies(accuracy: [f64; 4]) -> Result<Self, AnswererError> {
        for p in Property::ALL {
            let a = accuracy[p.index()];
            if !(0.0..=1.0).contains(&a) {
                return Err(AnswererError::AccuracyOutOfRange(p));
            }
        }
        let lambda = accuracy.iter().sum::<f64>() / 4.0;
        Ok(NoisyAnswerer { lambda, accuracy, seed: 0 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn accuracy(&self, property: Property) -> f64 {
        self.accuracy[property.index()]
    }

    pub fn accuracies(&self) -> [f64; 4] {
        self.accuracy
    }

    /// Probability that a digit whose true value is `true_value` is reported
    /// as `question.value`.
    pub fn match_probability(&self, true_value: u8, question: &CountQuestion) -> f64 {
        let acc = self.accuracy(question.property);
        if true_value == question.value {
            acc
        } else {
            (1.0 - acc) / (question.property.cardinality() - 1) as f64
        }
    }

    fn recognize(&self, true_value: u8, property: Property, rng: &mut StreamRng) -> u8 {
        if rng.gen::<f64>() < self.accuracy(property) {
            return true_value;
        }
        let other = rng.gen_range(0..property.cardinality() as u8 - 1);
        if other >= true_value {
            other + 1
        } else {
            other
        }
    }

    /// Samples a noisy count for an arbitrary set of digits. Recognition is
    /// redrawn on every call.
    pub fn answer_digits(&self, digits: &[Digit], question: &CountQuestion, rng: &mut StreamRng) -> u8 {
        digits
            .iter()
            .filter(|d| self.recognize(d.get(question.property), question.property, rng) == question.value)
            .count() as u8
    }

    pub fn answer(&self, image: &DigitImage, question: &CountQuestion, rng: &mut StreamRng) -> u8 {
        self.answer_digits(&image.digits, question, rng)
    }

    /// The image as the answerer sees it, with every property of every digit
    /// passed through the recognition channel once. Answering true counts on
    /// the perceived image models recognition that is fixed per image.
    pub fn perceive(&self, image: &DigitImage, rng: &mut StreamRng) -> DigitImage {
        let mut seen = image.clone();
        for d in seen.digits.iter_mut() {
            for p in Property::ALL {
                d.0[p.index()] = self.recognize(d.get(p), p, rng);
            }
        }
        seen
    }

    /// Exact distribution of [`answer_digits`](Self::answer_digits).
    pub fn distribution_for_digits(&self, digits: &[Digit], question: &CountQuestion) -> Vec<f64> {
        poisson_binomial(digits.iter().map(|d| self.match_probability(d.get(question.property), question)))
    }

    /// Exact distribution of [`answer`](Self::answer) over counts `0..=16`.
    pub fn answer_distribution(&self, image: &DigitImage, question: &CountQuestion) -> CountDistribution {
        let v = self.distribution_for_digits(&image.digits, question);
        let mut probs = [0.0; COUNT_ALPHABET];
        probs.copy_from_slice(&v);
        CountDistribution { probs }
    }

    /// Answer distribution for any image whose true count is `true_count`.
    /// It depends on the image only through that count.
    pub fn distribution_given_count(&self, true_count: u8, question: &CountQuestion) -> CountDistribution {
        let hit = self.match_probability(question.value, question);
        let stray = self.match_probability(u8::from(question.value == 0), question);
        let n = true_count as usize;
        let v = poisson_binomial(
            core::iter::repeat_n(hit, n).chain(core::iter::repeat_n(stray, DIGITS_PER_IMAGE - n)),
        );
        let mut probs = [0.0; COUNT_ALPHABET];
        probs.copy_from_slice(&v);
        CountDistribution { probs }
    }
}

/// Distribution of the number of successes among independent Bernoulli
/// trials, by dynamic programming over the trials.
pub fn poisson_binomial(success: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut dist = alloc::vec![1.0];
    for p in success {
        let mut next = alloc::vec![0.0; dist.len() + 1];
        for (k, &mass) in dist.iter().enumerate() {
            next[k] += mass * (1.0 - p);
            next[k + 1] += mass * p;
        }
        dist = next;
    }
    dist
}

/// Probabilities of the counts `0..=16`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountDistribution {
    pub probs: [f64; COUNT_ALPHABET],
}

impl CountDistribution {
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use approx::assert_abs_diff_eq;

    fn image_with(f: impl Fn(usize) -> [u8; 4]) -> DigitImage {
        let mut digits = [Digit::default(); DIGITS_PER_IMAGE];
        for (i, d) in digits.iter_mut().enumerate() {
            *d = Digit::new(f(i)).unwrap();
        }
        DigitImage { id: 0, digits }
    }

    #[test]
    fn schema_has_twenty_two_questions() {
        let qs = count_questions();
        assert_eq!(qs.len(), 22);
        assert_eq!(qs[0].to_string(), "how many digits have color = red?");
        assert_eq!(qs[21].value_name(), "stroke");
        assert_eq!(Property::ALL.map(Property::cardinality), [5, 5, 10, 2]);
    }

    #[test]
    fn counting() {
        let img = image_with(|i| [if i < 3 { 0 } else { 1 }, 0, (i % 10) as u8, 0]);
        let red = CountQuestion::new(Property::Color, 0).unwrap();
        assert_eq!(true_count(&img, &red), 3);
        let stroke = CountQuestion::new(Property::Style, 1).unwrap();
        assert_eq!(true_count(&img, &stroke), 0);
        assert!(CountQuestion::new(Property::Style, 2).is_none());
    }

    #[test]
    fn counts_partition_the_digits() {
        for img in generate_world(20, 5) {
            for p in Property::ALL {
                let total: u32 = (0..p.cardinality() as u8)
                    .map(|v| true_count(&img, &CountQuestion { property: p, value: v }) as u32)
                    .sum();
                assert_eq!(total, 16);
            }
        }
    }

    #[test]
    fn world_is_reproducible_and_valid() {
        let a = generate_world(50, 42);
        assert_eq!(a, generate_world(50, 42));
        assert_ne!(a, generate_world(50, 43));
        let one = &generate_world(1, 0)[0];
        assert_eq!(one.digits.len(), 16);
        assert!(one.digits.iter().all(|d| Digit::new(d.0).is_some()));
    }

    #[test]
    fn answerer_accuracy_interval() {
        let exact = NoisyAnswerer::new(1.0, 3).unwrap();
        assert_eq!(exact.accuracies(), [1.0; 4]);
        for seed in 0..50 {
            let a = NoisyAnswerer::new(0.9, seed).unwrap();
            assert!(a.accuracies().iter().all(|&x| (0.8..=1.0).contains(&x)));
            let b = NoisyAnswerer::new(0.95, seed).unwrap();
            assert!(b.accuracies().iter().all(|&x| (0.9..=1.0).contains(&x)));
        }
        assert!(NoisyAnswerer::new(0.5, 0).is_err());
        assert!(NoisyAnswerer::new(1.2, 0).is_err());
        assert!(NoisyAnswerer::new(f64::NAN, 0).is_err());
    }

    #[test]
    fn noiseless_answerer_reports_true_counts() {
        let ans = NoisyAnswerer::new(1.0, 0).unwrap();
        let mut rng = seed::stream(1, &[]);
        for img in generate_world(10, 9) {
            for q in count_questions() {
                let t = true_count(&img, &q);
                assert_eq!(ans.answer(&img, &q, &mut rng), t);
                let d = ans.answer_distribution(&img, &q);
                assert_eq!(d.probs[t as usize], 1.0);
            }
        }
    }

    #[test]
    fn all_matching_digits_give_a_binomial() {
        let ans = NoisyAnswerer::with_accuracies([0.7, 1.0, 1.0, 1.0]).unwrap();
        let img = image_with(|_| [2, 0, 0, 0]);
        let q = CountQuestion::new(Property::Color, 2).unwrap();
        let d = ans.answer_distribution(&img, &q);
        let binom = statrs::distribution::Binomial::new(0.7, 16).unwrap();
        use statrs::distribution::Discrete;
        for k in 0..=16u64 {
            assert_abs_diff_eq!(d.probs[k as usize], binom.pmf(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn distribution_depends_only_on_true_count() {
        let ans = NoisyAnswerer::new(0.9, 11).unwrap();
        for img in generate_world(30, 2) {
            for q in count_questions() {
                let a = ans.answer_distribution(&img, &q);
                let b = ans.distribution_given_count(true_count(&img, &q), &q);
                for k in 0..COUNT_ALPHABET {
                    assert_abs_diff_eq!(a.probs[k], b.probs[k], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn perceived_image_is_valid_and_exact_when_noiseless() {
        let img = &generate_world(1, 4)[0];
        let mut rng = seed::stream(0, &[]);
        assert_eq!(&NoisyAnswerer::new(1.0, 0).unwrap().perceive(img, &mut rng), img);
        let seen = NoisyAnswerer::new(0.6, 0).unwrap().perceive(img, &mut rng);
        assert!(seen.digits.iter().all(|d| Digit::new(d.0).is_some()));
    }
}
