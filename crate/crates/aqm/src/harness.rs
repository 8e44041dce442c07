//! Self-play experiments: build the world, the answerer and the questioner's
//! model, play many independent games, and aggregate accuracy per turn.
//!
//! Every random draw comes from a stream keyed by a seed and a coordinate
//! path, so results do not depend on thread scheduling and two strategies run
//! with the same seeds face the same targets and the same answer noise for
//! the same (turn, question).

use std::time::Instant;

use aqm_core::engine::{
    run_dialog, DialogConfig, Greedy, Lookahead, Questioner, RandomQuestioner, Transcript, DEFAULT_LEAF_CAP,
};
use aqm_core::likelihood::{
    train_confusion, AnswerChannel, ConfusionModel, CountLikelihood, ModelError, Regime, TrainingRegime,
};
use aqm_core::mnist::{
    count_questions, generate_world, true_count, AnswererError, CountQuestion, DigitImage, NoisyAnswerer,
    COUNT_ALPHABET,
};
use aqm_core::pool::{count_q, full_pool, rand_q, PoolError, QuestionPool};
use aqm_core::seed;
use aqm_core::{EngineError, Prior, Question};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, PoolSpec, Strategy};

// Stream tags.
const TRAIN_WORLD: u64 = 1;
const CANDIDATE_WORLD: u64 = 2;
const POOL: u64 = 3;
const TRAIN_LABELS: u64 = 4;
const TARGET: u64 = 5;
const NOISE: u64 = 6;
const PERCEPTION: u64 = 7;
const RANDOM_QUESTIONS: u64 = 8;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Answerer(#[from] AnswererError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("game {game}: {source}")]
    Game { game: usize, source: EngineError },
    #[error("{0}")]
    Setup(String),
}

/// Inputs loaded from files instead of generated from seeds.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub training: Option<Vec<DigitImage>>,
    pub candidates: Option<Vec<DigitImage>>,
    pub confusion: Option<ConfusionModel>,
}

/// Everything a batch of games shares.
#[derive(Debug, Clone)]
pub struct Setup {
    pub candidates: Vec<DigitImage>,
    pub training: Vec<DigitImage>,
    pub answerer: NoisyAnswerer,
    pub pool: QuestionPool<CountQuestion>,
    pub confusion: Option<ConfusionModel>,
    pub likelihood: CountLikelihood,
}

/// The 22 count questions with ids `0..22`.
pub fn mnist_questions() -> Vec<Question<CountQuestion>> {
    full_pool(count_questions()).expect("schema is non-empty").into_questions()
}

pub fn training_world(cfg: &ExperimentConfig) -> Vec<DigitImage> {
    generate_world(cfg.n_train, seed::derive(cfg.world_seed, &[TRAIN_WORLD]))
}

pub fn candidate_world(cfg: &ExperimentConfig) -> Vec<DigitImage> {
    generate_world(cfg.n_candidates, seed::derive(cfg.world_seed, &[CANDIDATE_WORLD]))
}

pub fn build_pool(cfg: &ExperimentConfig, training: &[DigitImage]) -> Result<QuestionPool<CountQuestion>, PoolError> {
    let all = mnist_questions();
    match cfg.pool {
        PoolSpec::Full => QuestionPool::new(all, aqm_core::pool::Provenance::Full, 0),
        PoolSpec::RandQ(n) => rand_q(&all, n, seed::derive(cfg.world_seed, &[POOL])),
        PoolSpec::CountQ(n) => count_q(training, &all, n, cfg.count_threshold, COUNT_ALPHABET, |img, q| {
            true_count(img, q) as usize
        })
        .map(|(pool, _)| pool),
    }
}

/// Trains the count table for `regime` (indA on true counts, depA on answers
/// sampled from `answerer`). Label noise for image `i` and question `q` comes
/// from its own stream, so the result is independent of thread count.
pub fn train_model(
    training: &[DigitImage],
    questions: &[Question<CountQuestion>],
    answerer: &NoisyAnswerer,
    regime: Regime,
    epsilon: f64,
    label_seed: u64,
) -> Result<ConfusionModel, ModelError> {
    let label = |img: &DigitImage, q: &Question<CountQuestion>| match regime {
        Regime::DepA => answerer.answer(
            img,
            &q.payload,
            &mut seed::stream(label_seed, &[TRAIN_LABELS, img.id as u64, q.id as u64]),
        ),
        _ => true_count(img, &q.payload),
    };
    let parts: Vec<ConfusionModel> = training
        .par_chunks(1024)
        .map(|chunk| train_confusion(chunk, questions, epsilon, label))
        .collect::<Result<_, _>>()?;
    let mut model = ConfusionModel::new(questions, epsilon)?;
    for p in &parts {
        model.merge(p)?;
    }
    Ok(model)
}

impl Setup {
    pub fn build(cfg: &ExperimentConfig) -> Result<Setup, HarnessError> {
        Self::build_with(cfg, Overrides::default())
    }

    pub fn build_with(cfg: &ExperimentConfig, overrides: Overrides) -> Result<Setup, HarnessError> {
        cfg.validate()?;
        let answerer = NoisyAnswerer::new(cfg.lambda, cfg.answerer_seed)?;
        let candidates = overrides.candidates.unwrap_or_else(|| candidate_world(cfg));
        if candidates.is_empty() {
            return Err(HarnessError::Setup("candidate world is empty".into()));
        }
        let training = overrides.training.unwrap_or_else(|| training_world(cfg));
        let pool = build_pool(cfg, &training)?;
        let regime = TrainingRegime { regime: cfg.regime(), train_fraction: cfg.train_fraction };
        let confusion = match (regime.regime, overrides.confusion) {
            (Regime::TrueA, _) => None,
            (_, Some(model)) => Some(model),
            (r, None) => {
                let used = &training[..regime.training_size(training.len())];
                Some(train_model(used, pool.questions(), &answerer, r, cfg.epsilon, cfg.answerer_seed)?)
            }
        };
        let channel = match &confusion {
            Some(m) => AnswerChannel::Confusion(m),
            None => AnswerChannel::Exact(&answerer),
        };
        let likelihood = CountLikelihood::new(&candidates, pool.questions(), channel)?;
        Ok(Setup { candidates, training, answerer, pool, confusion, likelihood })
    }

    /// Target class of game `g`, uniform over candidates.
    pub fn target(&self, cfg: &ExperimentConfig, game: usize) -> usize {
        seed::stream(cfg.game_seed, &[TARGET, game as u64]).gen_range(0..self.candidates.len())
    }
}

enum AnyQuestioner {
    Greedy(Greedy),
    Lookahead(Lookahead),
    Random(RandomQuestioner),
}

impl Questioner<CountQuestion> for AnyQuestioner {
    fn choose<L: aqm_core::LikelihoodModel<CountQuestion> + ?Sized>(
        &mut self,
        post: &aqm_core::Posterior,
        pool: &[Question<CountQuestion>],
        lik: &L,
        exclude: &std::collections::BTreeSet<usize>,
    ) -> Result<aqm_core::Choice, EngineError> {
        match self {
            AnyQuestioner::Greedy(q) => q.choose(post, pool, lik, exclude),
            AnyQuestioner::Lookahead(q) => q.choose(post, pool, lik, exclude),
            AnyQuestioner::Random(q) => q.choose(post, pool, lik, exclude),
        }
    }
}

fn questioner(strategy: Strategy, cfg: &ExperimentConfig, game: usize) -> AnyQuestioner {
    match strategy {
        Strategy::Aqm => AnyQuestioner::Greedy(Greedy),
        Strategy::MultiStep(depth) => AnyQuestioner::Lookahead(Lookahead { depth, leaf_cap: DEFAULT_LEAF_CAP }),
        Strategy::Random => AnyQuestioner::Random(RandomQuestioner::new(
            seed::stream(cfg.game_seed, &[RANDOM_QUESTIONS, game as u64]),
            cfg.random_with_replacement,
        )),
    }
}

fn dialog_config(cfg: &ExperimentConfig, target: usize, game: usize) -> DialogConfig {
    DialogConfig {
        turns: cfg.turns,
        allow_repeats: cfg.allow_repeats,
        stop_entropy: None,
        target: Some(target),
        seed: seed::derive(cfg.game_seed, &[game as u64]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub target: usize,
    pub transcript: Transcript,
}

/// Plays game `g` against the simulated answerer.
pub fn play_game(setup: &Setup, cfg: &ExperimentConfig, strategy: Strategy, game: usize) -> Result<GameOutcome, HarnessError> {
    let prior = Prior::uniform(setup.candidates.len()).map_err(|source| HarnessError::Game { game, source })?;
    let target = setup.target(cfg, game);
    let image = &setup.candidates[target];
    let perceived = cfg
        .fixed_recognition
        .then(|| setup.answerer.perceive(image, &mut seed::stream(cfg.game_seed, &[PERCEPTION, game as u64])));
    let answerer = |q: &Question<CountQuestion>, turn: usize| {
        let a = match &perceived {
            Some(seen) => true_count(seen, &q.payload),
            None => setup.answerer.answer(
                image,
                &q.payload,
                &mut seed::stream(cfg.game_seed, &[NOISE, game as u64, turn as u64, q.id as u64]),
            ),
        };
        Ok(a as usize)
    };
    let mut questioner = questioner(strategy, cfg, game);
    let transcript = run_dialog(
        &prior,
        setup.pool.questions(),
        &setup.likelihood,
        &mut questioner,
        answerer,
        &dialog_config(cfg, target, game),
    )
    .map_err(|source| HarnessError::Game { game, source })?;
    Ok(GameOutcome { target, transcript })
}

/// An answerer living outside the process.
pub trait ExternalAnswerer {
    fn start_game(&mut self, game: usize, target: &DigitImage) -> Result<(), aqm_core::engine::AnswererFault>;
    fn answer(&mut self, game: usize, turn: usize, question: &CountQuestion) -> Result<usize, aqm_core::engine::AnswererFault>;
}

/// Plays game `g` with answers supplied by `external`.
pub fn play_game_external<E: ExternalAnswerer + ?Sized>(
    setup: &Setup,
    cfg: &ExperimentConfig,
    strategy: Strategy,
    game: usize,
    external: &mut E,
) -> Result<GameOutcome, HarnessError> {
    let prior = Prior::uniform(setup.candidates.len()).map_err(|source| HarnessError::Game { game, source })?;
    let target = setup.target(cfg, game);
    let dialog = dialog_config(cfg, target, game);
    let mut questioner = questioner(strategy, cfg, game);
    let transcript = match external.start_game(game, &setup.candidates[target]) {
        Err(fault) if fault.fatal => {
            return Err(HarnessError::Game { game, source: EngineError::AnswererFatal(fault.message) })
        }
        Err(fault) => Transcript {
            turns: Vec::new(),
            prior_guess: 0,
            prior_entropy: (setup.candidates.len() as f64).ln(),
            final_guess: 0,
            success: false,
            seed: dialog.seed,
            abort: Some(aqm_core::engine::Abort::Answerer(fault.message)),
        },
        Ok(()) => run_dialog(
            &prior,
            setup.pool.questions(),
            &setup.likelihood,
            &mut questioner,
            |q: &Question<CountQuestion>, turn| external.answer(game, turn, &q.payload),
            &dialog,
        )
        .map_err(|source| HarnessError::Game { game, source })?,
    };
    Ok(GameOutcome { target, transcript })
}

/// One row of an accuracy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRow {
    pub turn: usize,
    pub accuracy: f64,
    /// Half-width of the normal-approximation 95% binomial interval.
    pub ci95: f64,
    pub entropy_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactVersions {
    pub aqm: String,
    pub world_format: u32,
    pub model_format: u32,
    pub protocol: u32,
}

impl Default for ArtifactVersions {
    fn default() -> Self {
        ArtifactVersions {
            aqm: env!("CARGO_PKG_VERSION").to_string(),
            world_format: crate::formats::WORLD_FORMAT_VERSION,
            model_format: crate::formats::MODEL_FORMAT_VERSION,
            protocol: crate::protocol::PROTOCOL_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub strategy: Strategy,
    pub rows: Vec<TurnRow>,
    /// Accuracy of guessing from the prior alone.
    pub prior_accuracy: f64,
    pub prior_entropy: f64,
    pub games: usize,
    /// Games that ended in an answerer or model error; scored as losses.
    pub failed_games: usize,
    pub pool_size: usize,
    pub answerer_accuracies: [f64; 4],
    pub config: ExperimentConfig,
    pub versions: ArtifactVersions,
    pub wall_clock_secs: f64,
}

impl ResultTable {
    pub fn accuracy_at(&self, turn: usize) -> f64 {
        if turn == 0 {
            self.prior_accuracy
        } else {
            self.rows[turn - 1].accuracy
        }
    }
}

fn ci95(p: f64, n: usize) -> f64 {
    1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Aggregates finished games into a per-turn table.
pub fn summarize(setup: &Setup, cfg: &ExperimentConfig, strategy: Strategy, outcomes: &[GameOutcome], started: Instant) -> ResultTable {
    let n = outcomes.len().max(1);
    let correct_at = |t: usize| {
        outcomes
            .iter()
            .filter(|o| o.transcript.abort.is_none() && o.transcript.guess_at(t) == o.target)
            .count()
    };
    let rows = (1..=cfg.turns)
        .map(|t| {
            let accuracy = correct_at(t) as f64 / n as f64;
            let entropy_mean = outcomes.iter().map(|o| o.transcript.entropy_at(t)).sum::<f64>() / n as f64;
            TurnRow { turn: t, accuracy, ci95: ci95(accuracy, n), entropy_mean }
        })
        .collect();
    ResultTable {
        strategy,
        rows,
        prior_accuracy: correct_at(0) as f64 / n as f64,
        prior_entropy: (setup.candidates.len() as f64).ln(),
        games: outcomes.len(),
        failed_games: outcomes.iter().filter(|o| o.transcript.abort.is_some()).count(),
        pool_size: setup.pool.len(),
        answerer_accuracies: setup.answerer.accuracies(),
        config: ExperimentConfig { strategy, ..cfg.clone() },
        versions: ArtifactVersions::default(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

/// Plays `cfg.n_games` games in parallel; output order is game order.
pub fn play_all(setup: &Setup, cfg: &ExperimentConfig, strategy: Strategy) -> Result<Vec<GameOutcome>, HarnessError> {
    (0..cfg.n_games).into_par_iter().map(|g| play_game(setup, cfg, strategy, g)).collect()
}

pub fn run_on(setup: &Setup, cfg: &ExperimentConfig, strategy: Strategy) -> Result<ResultTable, HarnessError> {
    let started = Instant::now();
    let outcomes = play_all(setup, cfg, strategy)?;
    Ok(summarize(setup, cfg, strategy, &outcomes, started))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    let setup = Setup::build(cfg)?;
    run_on(&setup, cfg, cfg.strategy)
}

/// AQM and the random questioner on the same world, answerer and seeds.
pub fn run_baseline_comparison(cfg: &ExperimentConfig) -> Result<(ResultTable, ResultTable), HarnessError> {
    let setup = Setup::build(cfg)?;
    Ok((run_on(&setup, cfg, Strategy::Aqm)?, run_on(&setup, cfg, Strategy::Random)?))
}
