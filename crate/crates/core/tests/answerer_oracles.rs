use aqm_core::likelihood::{confusion_likelihood, train_confusion, true_likelihood, ConfusionModel};
use aqm_core::mnist::{
    count_questions, generate_world, true_count, CountQuestion, Digit, DigitImage, NoisyAnswerer, Property,
    COUNT_ALPHABET,
};
use aqm_core::seed;
use aqm_core::Question;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SAMPLES: usize = 100_000;

fn expected_count(ans: &NoisyAnswerer, image: &DigitImage, q: &CountQuestion) -> f64 {
    image
        .digits
        .iter()
        .map(|d| {
            let acc = ans.accuracy(q.property);
            if d.get(q.property) == q.value {
                acc
            } else {
                (1.0 - acc) / (q.property.cardinality() - 1) as f64
            }
        })
        .sum()
}

fn histogram(ans: &NoisyAnswerer, image: &DigitImage, q: &CountQuestion, stream: u64) -> [u64; COUNT_ALPHABET] {
    let mut rng = seed::stream(stream, &[]);
    let mut h = [0u64; COUNT_ALPHABET];
    for _ in 0..SAMPLES {
        h[ans.answer(image, q, &mut rng) as usize] += 1;
    }
    h
}

/// Pearson statistic with bins of expected count below 5 pooled together.
fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, usize) {
    let n = observed.iter().sum::<u64>() as f64;
    let (mut stat, mut bins) = (0.0, 0);
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = n * p;
        if e < 5.0 {
            pooled_o += o as f64;
            pooled_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pooled_e > 0.0 {
        stat += (pooled_o - pooled_e).powi(2) / pooled_e;
        bins += 1;
    }
    (stat, bins)
}

#[test]
fn single_digit_bernoulli() {
    let ans = NoisyAnswerer::with_accuracies([0.8, 1.0, 1.0, 1.0]).unwrap();
    let digit = Digit::new([0, 0, 0, 0]).unwrap();
    let red = CountQuestion::new(Property::Color, 0).unwrap();
    let mut rng = seed::stream(11, &[]);
    let ones = (0..SAMPLES).filter(|_| ans.answer_digits(&[digit], &red, &mut rng) == 1).count();
    let sigma = (0.8f64 * 0.2 / SAMPLES as f64).sqrt();
    let freq = ones as f64 / SAMPLES as f64;
    assert!((freq - 0.8).abs() < 3.0 * sigma, "P(1) estimated as {freq}");
    let exact = ans.distribution_for_digits(&[digit], &red);
    assert!((exact[1] - 0.8).abs() < 1e-12 && (exact[0] - 0.2).abs() < 1e-12);
}

#[test]
fn dynamic_program_matches_sampling() {
    let critical = |df: usize| ChiSquared::new((df - 1) as f64).unwrap().inverse_cdf(0.999);
    let world = generate_world(3, 77);
    let questions = count_questions();
    for (k, (lambda, seed)) in [(0.9, 5), (0.95, 6), (0.75, 7)].into_iter().enumerate() {
        let ans = NoisyAnswerer::new(lambda, seed).unwrap();
        for (i, image) in world.iter().enumerate() {
            let q = questions[(7 * i + 5 * k) % questions.len()];
            let dist = ans.answer_distribution(image, &q);
            let h = histogram(&ans, image, &q, seed::derive(1000, &[k as u64, i as u64]));
            let (stat, bins) = chi_square(&h, &dist.probs);
            assert!(stat < critical(bins), "λ={lambda} image {i} {q}: χ²={stat} on {bins} bins");
        }
    }
}

#[test]
fn sampled_bins_within_three_sigma() {
    let image = &generate_world(1, 3)[0];
    let q = CountQuestion::new(Property::Style, 0).unwrap();
    let ans = NoisyAnswerer::new(0.9, 8).unwrap();
    let dist = ans.answer_distribution(image, &q);
    let h = histogram(&ans, image, &q, 99);
    for (a, (&o, &p)) in h.iter().zip(&dist.probs).enumerate() {
        let sigma = (p * (1.0 - p) / SAMPLES as f64).sqrt();
        let freq = o as f64 / SAMPLES as f64;
        assert!((freq - p).abs() <= 3.0 * sigma + 1e-12, "bin {a}: {freq} vs {p}");
        assert_eq!(true_likelihood(&ans, image, &q, a as u8), p);
    }
}

#[test]
fn distribution_mean_is_sum_of_match_probabilities() {
    let ans = NoisyAnswerer::new(0.9, 21).unwrap();
    for image in generate_world(50, 4) {
        for q in count_questions() {
            let dist = ans.answer_distribution(&image, &q);
            assert!((dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((dist.mean() - expected_count(&ans, &image, &q)).abs() < 1e-9);
        }
    }
}

#[test]
fn sampled_mean_matches_expectation() {
    let image = &generate_world(1, 12)[0];
    let ans = NoisyAnswerer::new(0.9, 13).unwrap();
    for q in count_questions().into_iter().step_by(5) {
        let dist = ans.answer_distribution(image, &q);
        let var = dist.probs.iter().enumerate().map(|(k, p)| p * (k as f64 - dist.mean()).powi(2)).sum::<f64>();
        let h = histogram(&ans, image, &q, q.value as u64);
        let mean = h.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum::<f64>() / SAMPLES as f64;
        let se = (var / SAMPLES as f64).sqrt();
        assert!((mean - expected_count(&ans, image, &q)).abs() < 4.0 * se + 1e-12, "{q}");
    }
}

#[test]
fn dependent_training_converges_to_the_true_distribution() {
    let ans = NoisyAnswerer::new(0.9, 31).unwrap();
    let questions: Vec<Question<CountQuestion>> =
        count_questions().into_iter().enumerate().map(|(id, q)| Question::new(id, q)).collect();
    let training = generate_world(30_000, 32);
    let model = train_confusion(&training, &questions, 1.0, |img, q| {
        ans.answer(img, &q.payload, &mut seed::stream(33, &[img.id as u64, q.id as u64]))
    })
    .unwrap();
    let mut checked = 0;
    for q in &questions {
        let table = model.table(q.id).unwrap();
        assert_eq!(table.total(), 30_000);
        for a_real in 0..COUNT_ALPHABET {
            let n = table.row_total(a_real) as f64;
            if n < 1000.0 {
                continue;
            }
            checked += 1;
            let exact = ans.distribution_given_count(a_real as u8, &q.payload);
            let row = model.row(q.id, a_real as u8).unwrap();
            for (a, (&fit, &p)) in row.iter().zip(&exact.probs).enumerate() {
                let tol = 5.0 * (p * (1.0 - p) / n).sqrt() + COUNT_ALPHABET as f64 / n;
                assert!((fit - p).abs() <= tol, "q{} row {a_real} col {a}: {fit} vs {p} (n = {n})", q.id);
            }
        }
    }
    assert!(checked > 22);
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn smoothed_rows_are_distributions(
        eps in 0.01..5.0f64,
        observations in prop::collection::vec((0usize..22, 0u8..17, 0u8..17), 0..400),
    ) {
        let questions: Vec<Question<CountQuestion>> =
            count_questions().into_iter().enumerate().map(|(id, q)| Question::new(id, q)).collect();
        let mut model = ConfusionModel::new(&questions, eps).unwrap();
        for (q, real, reported) in observations {
            model.observe(q, real, reported).unwrap();
        }
        let image = generate_world(1, 0).remove(0);
        for q in &questions {
            for a_real in 0..COUNT_ALPHABET as u8 {
                let row = model.row(q.id, a_real).unwrap();
                prop_assert!(row.iter().all(|&p| p > 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let total: f64 = (0..COUNT_ALPHABET as u8)
                .map(|a| confusion_likelihood(&model, &image, q, a).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noiseless_answers_are_true_counts(world_seed in 0u64..1000, stream in 0u64..1000) {
        let ans = NoisyAnswerer::new(1.0, 0).unwrap();
        let image = &generate_world(1, world_seed)[0];
        let mut rng = seed::stream(stream, &[]);
        for q in count_questions() {
            prop_assert_eq!(ans.answer(image, &q, &mut rng), true_count(image, &q));
        }
    }
}
