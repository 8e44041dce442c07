//! The question/answer loop: select, ask, update, and finally guess.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::gain::gain_from_probs;
use super::{
    guess, multi_step_information_gain, posterior_update, select_question, Choice, EngineError,
    LikelihoodModel, Posterior, Prior, Question,
};
use crate::seed::StreamRng;

/// A question-selection policy.
pub trait Questioner<P> {
    fn choose<L: LikelihoodModel<P> + ?Sized>(
        &mut self,
        post: &Posterior,
        pool: &[Question<P>],
        lik: &L,
        exclude: &BTreeSet<usize>,
    ) -> Result<Choice, EngineError>;
}

/// One-step information-gain maximization.
#[derive(Debug, Clone, Copy, Default)]
pub struct Greedy;

impl<P> Questioner<P> for Greedy {
    fn choose<L: LikelihoodModel<P> + ?Sized>(
        &mut self,
        post: &Posterior,
        pool: &[Question<P>],
        lik: &L,
        exclude: &BTreeSet<usize>,
    ) -> Result<Choice, EngineError> {
        select_question(post, pool, lik, Some(exclude))
    }
}

/// Exhaustive `depth`-step lookahead.
#[derive(Debug, Clone, Copy)]
pub struct Lookahead {
    pub depth: usize,
    pub leaf_cap: u128,
}

impl<P: Clone> Questioner<P> for Lookahead {
    fn choose<L: LikelihoodModel<P> + ?Sized>(
        &mut self,
        post: &Posterior,
        pool: &[Question<P>],
        lik: &L,
        exclude: &BTreeSet<usize>,
    ) -> Result<Choice, EngineError> {
        let open: Vec<(usize, Question<P>)> = pool
            .iter()
            .enumerate()
            .filter(|(_, q)| !exclude.contains(&q.id))
            .map(|(i, q)| (i, q.clone()))
            .collect();
        let (positions, questions): (Vec<usize>, Vec<Question<P>>) = open.into_iter().unzip();
        let mut choice = multi_step_information_gain(post, &questions, lik, self.depth, self.leaf_cap)?;
        choice.position = positions[choice.position];
        Ok(choice)
    }
}

/// Uniformly random questions; the guesser is still the posterior MAP.
#[derive(Debug, Clone)]
pub struct RandomQuestioner {
    rng: StreamRng,
    with_replacement: bool,
}

impl RandomQuestioner {
    /// Without replacement, questions already asked in this dialog are
    /// skipped until the pool runs out.
    pub fn new(rng: StreamRng, with_replacement: bool) -> Self {
        RandomQuestioner { rng, with_replacement }
    }
}

impl<P> Questioner<P> for RandomQuestioner {
    fn choose<L: LikelihoodModel<P> + ?Sized>(
        &mut self,
        post: &Posterior,
        pool: &[Question<P>],
        lik: &L,
        exclude: &BTreeSet<usize>,
    ) -> Result<Choice, EngineError> {
        let asked: BTreeSet<usize> = post.history().iter().map(|&(q, _)| q).collect();
        let open: Vec<usize> = (0..pool.len())
            .filter(|&i| !exclude.contains(&pool[i].id))
            .filter(|&i| self.with_replacement || !asked.contains(&pool[i].id))
            .collect();
        let open = if open.is_empty() && !self.with_replacement {
            // Pool exhausted: fall back to repeats.
            (0..pool.len()).filter(|&i| !exclude.contains(&pool[i].id)).collect()
        } else {
            open
        };
        if open.is_empty() {
            return Err(EngineError::NoCandidateQuestion);
        }
        let position = open[self.rng.gen_range(0..open.len())];
        let q = &pool[position];
        let gain = gain_from_probs(&post.probs(), q, post.history(), lik);
        Ok(Choice { position, id: q.id, gain })
    }
}

/// Failure reported by an answerer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswererFault {
    pub message: String,
    /// Fatal faults (a dead peer) abort the whole run instead of one game.
    pub fatal: bool,
}

impl AnswererFault {
    pub fn game(message: impl Into<String>) -> Self {
        AnswererFault { message: message.into(), fatal: false }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        AnswererFault { message: message.into(), fatal: true }
    }
}

/// Why a game ended before its turn budget; the game counts as lost.
#[derive(Debug, Clone, PartialEq)]
pub enum Abort {
    ImpossibleAnswer { question: usize, answer: usize },
    AnswerOutOfAlphabet { question: usize, answer: usize },
    Answerer(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogConfig {
    pub turns: usize,
    /// When false, question ids already asked are excluded from selection.
    pub allow_repeats: bool,
    /// Stop early once posterior entropy (nats) drops to this level.
    pub stop_entropy: Option<f64>,
    /// Class the answerer holds; only used to score the transcript.
    pub target: Option<usize>,
    pub seed: u64,
}

impl DialogConfig {
    pub fn new(turns: usize) -> Self {
        DialogConfig { turns, allow_repeats: true, stop_entropy: None, target: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnRecord {
    pub question: usize,
    pub answer: usize,
    /// Expected information gain of the question when it was asked (nats).
    pub gain: f64,
    /// Posterior entropy after the answer (nats).
    pub entropy: f64,
    /// MAP class after the answer.
    pub guess: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub turns: Vec<TurnRecord>,
    pub prior_guess: usize,
    pub prior_entropy: f64,
    pub final_guess: usize,
    pub success: bool,
    pub seed: u64,
    pub abort: Option<Abort>,
}

impl Transcript {
    /// MAP guess after `turn` answers. Turns past the end of a shortened
    /// dialog carry the last guess forward.
    pub fn guess_at(&self, turn: usize) -> usize {
        match turn {
            0 => self.prior_guess,
            t => self.turns.get(t - 1).or(self.turns.last()).map_or(self.prior_guess, |r| r.guess),
        }
    }

    pub fn entropy_at(&self, turn: usize) -> f64 {
        match turn {
            0 => self.prior_entropy,
            t => self.turns.get(t - 1).or(self.turns.last()).map_or(self.prior_entropy, |r| r.entropy),
        }
    }
}

/// Runs one dialog: for each turn, pick a question, obtain an answer from
/// `answerer(question, turn)`, and update the posterior; then guess.
///
/// Game-level failures (impossible or out-of-alphabet answers, non-fatal
/// answerer faults) end the dialog as a recorded loss. Fatal answerer faults
/// and selection errors are returned as errors.
pub fn run_dialog<P, L, Q, A>(
    prior: &Prior,
    pool: &[Question<P>],
    lik: &L,
    questioner: &mut Q,
    mut answerer: A,
    config: &DialogConfig,
) -> Result<Transcript, EngineError>
where
    L: LikelihoodModel<P> + ?Sized,
    Q: Questioner<P>,
    A: FnMut(&Question<P>, usize) -> Result<usize, AnswererFault>,
{
    if config.turns == 0 {
        return Err(EngineError::ZeroTurns);
    }
    let mut post = Posterior::from_prior(prior);
    let prior_guess = guess(&post);
    let mut transcript = Transcript {
        turns: Vec::with_capacity(config.turns),
        prior_guess,
        prior_entropy: post.entropy(),
        final_guess: prior_guess,
        success: false,
        seed: config.seed,
        abort: None,
    };
    let mut asked = BTreeSet::new();
    let no_exclusions = BTreeSet::new();
    for turn in 1..=config.turns {
        if config.stop_entropy.is_some_and(|h| post.entropy() <= h) {
            break;
        }
        let exclude = if config.allow_repeats { &no_exclusions } else { &asked };
        let choice = match questioner.choose(&post, pool, lik, exclude) {
            Ok(c) => c,
            Err(EngineError::NoCandidateQuestion) if !config.allow_repeats && !asked.is_empty() => break,
            Err(e) => return Err(e),
        };
        let question = &pool[choice.position];
        let answer = match answerer(question, turn) {
            Ok(a) => a,
            Err(fault) if fault.fatal => return Err(EngineError::AnswererFatal(fault.message)),
            Err(fault) => {
                transcript.abort = Some(Abort::Answerer(fault.message));
                break;
            }
        };
        post = match posterior_update(&post, question, answer, lik) {
            Ok(p) => p,
            Err(EngineError::ImpossibleAnswer { question, answer }) => {
                transcript.abort = Some(Abort::ImpossibleAnswer { question, answer });
                break;
            }
            Err(EngineError::AnswerOutOfAlphabet { answer, .. }) => {
                transcript.abort = Some(Abort::AnswerOutOfAlphabet { question: question.id, answer });
                break;
            }
            Err(e) => return Err(e),
        };
        asked.insert(question.id);
        transcript.turns.push(TurnRecord {
            question: question.id,
            answer,
            gain: choice.gain,
            entropy: post.entropy(),
            guess: guess(&post),
        });
    }
    transcript.final_guess = guess(&post);
    transcript.success = transcript.abort.is_none() && config.target == Some(transcript.final_guess);
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TableLikelihood;
    use crate::seed;
    use alloc::vec;

    fn four_class() -> (Prior, TableLikelihood, Vec<Question<()>>) {
        let lik = TableLikelihood::new(4, 2)
            .with_deterministic(0, &[0, 0, 1, 1])
            .with_deterministic(1, &[0, 1, 0, 1]);
        let pool = vec![Question::new(0, ()), Question::new(1, ())];
        (Prior::uniform(4).unwrap(), lik, pool)
    }

    fn oracle(lik: &TableLikelihood, target: usize) -> impl FnMut(&Question<()>, usize) -> Result<usize, AnswererFault> + '_ {
        move |q, _| Ok((0..2).find(|&a| lik.probability(target, q.id, a) == 1.0).unwrap())
    }

    #[test]
    fn noiseless_dialog_finds_the_target() {
        let (prior, lik, pool) = four_class();
        for target in 0..4 {
            let mut cfg = DialogConfig::new(2);
            cfg.target = Some(target);
            cfg.allow_repeats = false;
            let t = run_dialog(&prior, &pool, &lik, &mut Greedy, oracle(&lik, target), &cfg).unwrap();
            assert!(t.success, "target {target}");
            assert_eq!(t.turns.len(), 2);
            assert_eq!(t.turns[1].entropy, 0.0);
            assert_eq!(t.guess_at(0), 0);
            assert_eq!(t.guess_at(2), target);
        }
    }

    #[test]
    fn zero_turns_rejected() {
        let (prior, lik, pool) = four_class();
        let r = run_dialog(&prior, &pool, &lik, &mut Greedy, oracle(&lik, 0), &DialogConfig::new(0));
        assert_eq!(r.unwrap_err(), EngineError::ZeroTurns);
    }

    #[test]
    fn uninformative_pool_keeps_prior_map() {
        let lik = TableLikelihood::new(3, 2).with_question(0, &[&[0.3, 0.7][..]; 3]);
        let pool = vec![Question::new(0, ())];
        let mut cfg = DialogConfig::new(5);
        cfg.target = Some(2);
        let t = run_dialog(&Prior::uniform(3).unwrap(), &pool, &lik, &mut Greedy, |_: &Question<()>, _| Ok(1), &cfg)
            .unwrap();
        assert_eq!(t.final_guess, 0);
        assert!(!t.success);
        assert!(t.turns.iter().all(|r| r.gain == 0.0));
    }

    #[test]
    fn impossible_answer_aborts_as_loss() {
        let (prior, lik, pool) = four_class();
        let mut cfg = DialogConfig::new(2);
        cfg.target = Some(0);
        // Contradictory answers: first says {2,3}, second asks q0 again and says 0.
        let mut answers = vec![1usize, 0].into_iter();
        let t = run_dialog(&prior, &pool[..1], &lik, &mut Greedy, |_: &Question<()>, _| Ok(answers.next().unwrap()), &cfg)
            .unwrap();
        assert_eq!(t.abort, Some(Abort::ImpossibleAnswer { question: 0, answer: 0 }));
        assert!(!t.success);
        assert_eq!(t.turns.len(), 1);
    }

    #[test]
    fn faults_are_classified() {
        let (prior, lik, pool) = four_class();
        let cfg = DialogConfig::new(2);
        let t = run_dialog(&prior, &pool, &lik, &mut Greedy, |_: &Question<()>, _| Err(AnswererFault::game("timeout")), &cfg)
            .unwrap();
        assert_eq!(t.abort, Some(Abort::Answerer("timeout".into())));
        let e = run_dialog(&prior, &pool, &lik, &mut Greedy, |_: &Question<()>, _| Err(AnswererFault::fatal("pipe")), &cfg)
            .unwrap_err();
        assert_eq!(e, EngineError::AnswererFatal("pipe".into()));
        let t = run_dialog(&prior, &pool, &lik, &mut Greedy, |_: &Question<()>, _| Ok(7), &cfg).unwrap();
        assert_eq!(t.abort, Some(Abort::AnswerOutOfAlphabet { question: 0, answer: 7 }));
    }

    #[test]
    fn no_repeats_stops_when_pool_is_exhausted() {
        let (prior, lik, pool) = four_class();
        let mut cfg = DialogConfig::new(5);
        cfg.allow_repeats = false;
        let t = run_dialog(&prior, &pool, &lik, &mut Greedy, oracle(&lik, 3), &cfg).unwrap();
        assert_eq!(t.turns.len(), 2);
        assert_eq!(t.guess_at(5), 3);
    }

    #[test]
    fn random_questioner_is_seeded() {
        let (prior, lik, pool) = four_class();
        let cfg = DialogConfig::new(4);
        let run = |s| {
            let mut q = RandomQuestioner::new(seed::stream(s, &[]), false);
            run_dialog(&prior, &pool, &lik, &mut q, oracle(&lik, 1), &cfg).unwrap()
        };
        assert_eq!(run(9), run(9));
        // without replacement, the first two turns cover the pool
        let t = run(9);
        assert_ne!(t.turns[0].question, t.turns[1].question);
    }

    #[test]
    fn lookahead_questioner_respects_exclusions() {
        let (prior, lik, pool) = four_class();
        let mut cfg = DialogConfig::new(2);
        cfg.allow_repeats = false;
        cfg.target = Some(2);
        let mut q = Lookahead { depth: 2, leaf_cap: 1_000 };
        let t = run_dialog(&prior, &pool, &lik, &mut q, oracle(&lik, 2), &cfg).unwrap();
        assert!(t.success);
        assert_eq!(t.turns[1].question, 1);
    }

    #[test]
    fn entropy_stop() {
        let (prior, lik, pool) = four_class();
        let mut cfg = DialogConfig::new(10);
        cfg.stop_entropy = Some(1e-9);
        let t = run_dialog(&prior, &pool, &lik, &mut Greedy, oracle(&lik, 2), &cfg).unwrap();
        assert_eq!(t.turns.len(), 2);
    }
}
