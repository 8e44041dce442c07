use aqm_core::engine::{run_dialog, AnswererFault, DialogConfig, Greedy, TableLikelihood};
use aqm_core::likelihood::{AnswerChannel, CountLikelihood};
use aqm_core::mnist::{count_questions, generate_world, true_count, CountQuestion, DigitImage, NoisyAnswerer, Property};
use aqm_core::pool::{count_q, pairwise_agreement, rand_q};
use aqm_core::{EngineError, Prior, Question};

fn questions() -> Vec<Question<CountQuestion>> {
    count_questions().into_iter().enumerate().map(|(id, q)| Question::new(id, q)).collect()
}

#[test]
fn noiseless_two_image_world_is_solved_in_one_turn() {
    let a = generate_world(1, 9).remove(0);
    let mut b = DigitImage { id: 1, ..a.clone() };
    let c = b.digits[0].get(Property::Color);
    b.digits[0].0[Property::Color.index()] = (c + 1) % 5;
    let candidates = [a, b];
    let answerer = NoisyAnswerer::new(1.0, 0).unwrap();
    let pool = questions();
    let lik = CountLikelihood::new(&candidates, &pool, AnswerChannel::Exact(&answerer)).unwrap();
    for target in 0..2 {
        let image = &candidates[target];
        let cfg = DialogConfig { target: Some(target), ..DialogConfig::new(1) };
        let t = run_dialog(
            &Prior::uniform(2).unwrap(),
            &pool,
            &lik,
            &mut Greedy,
            |q: &Question<CountQuestion>, _| Ok::<_, AnswererFault>(true_count(image, &q.payload) as usize),
            &cfg,
        )
        .unwrap();
        assert!(t.success, "target {target}");
        assert_eq!(t.final_guess, target);
        assert!((t.turns[0].gain - 2f64.ln()).abs() < 1e-12);
        assert_eq!(pool[t.turns[0].question].payload.property, Property::Color);
    }
}

#[test]
fn uninformative_pool_keeps_the_prior_guess() {
    let row = [0.25, 0.75];
    let lik = TableLikelihood::new(3, 2).with_question(0, &[&row[..]; 3]).with_question(1, &[&row[..]; 3]);
    let pool = [Question::new(0, ()), Question::new(1, ())];
    let t = run_dialog(&Prior::uniform(3).unwrap(), &pool, &lik, &mut Greedy, |_: &Question<()>, turn| Ok(turn % 2), &DialogConfig::new(4))
        .unwrap();
    assert_eq!(t.final_guess, 0);
    assert!(t.turns.iter().all(|r| r.gain.abs() < 1e-12 && r.guess == 0));
}

#[test]
fn zero_turns_is_rejected() {
    let lik = TableLikelihood::new(2, 2).with_deterministic(0, &[0, 1]);
    let pool = [Question::new(0, ())];
    let err = run_dialog(&Prior::uniform(2).unwrap(), &pool, &lik, &mut Greedy, |_: &Question<()>, _| Ok(0), &DialogConfig::new(0));
    assert!(matches!(err, Err(EngineError::ZeroTurns)));
}

#[test]
fn count_q_pools_satisfy_the_agreement_rule() {
    let training = generate_world(2000, 41);
    let all = questions();
    let oracle = |img: &DigitImage, q: &CountQuestion| true_count(img, q) as usize;
    for threshold in [0.5, 0.7, 0.95] {
        let (pool, counts) = count_q(&training, &all, 22, threshold, 17, oracle).unwrap();
        let kept = pool.questions();
        assert!(!kept.is_empty());
        assert!(kept.windows(2).all(|w| w[0].id < w[1].id));
        for (i, qi) in kept.iter().enumerate() {
            for qj in &kept[i + 1..] {
                // Recount from scratch rather than trusting the pool's tallies.
                let same = training.iter().filter(|img| oracle(img, &qi.payload) == oracle(img, &qj.payload)).count();
                let agreement = same as f64 / training.len() as f64;
                assert!(agreement < threshold, "{} / {}: {agreement}", qi.payload, qj.payload);
                assert_eq!(pairwise_agreement(qi.id, qj.id, &counts).unwrap(), agreement);
            }
        }
    }
}

#[test]
fn rand_q_draws_distinct_questions_deterministically() {
    let all = questions();
    let a = rand_q(&all, 10, 5).unwrap();
    let b = rand_q(&all, 10, 5).unwrap();
    assert_eq!(a.questions(), b.questions());
    let mut ids: Vec<usize> = a.questions().iter().map(|q| q.id).collect();
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 10);
}
