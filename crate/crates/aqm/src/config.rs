//! Experiment configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! lambda = 0.95
//! regime = depA
//! strategy = aqm
//! turns = 6
//! pool = full          # or randQ:200, countQ:200
//! ```
//!
//! Keys are the field names of [`ExperimentConfig`]; unknown keys are errors.

use std::fmt;
use std::str::FromStr;

use aqm_core::likelihood::Regime;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    Aqm,
    Random,
    /// Exhaustive lookahead over this many turns.
    MultiStep(usize),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Aqm => f.write_str("aqm"),
            Strategy::Random => f.write_str("random"),
            Strategy::MultiStep(k) => write!(f, "multistep-{k}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "aqm" => Ok(Strategy::Aqm),
            "random" => Ok(Strategy::Random),
            _ => s
                .strip_prefix("multistep-")
                .and_then(|k| k.parse().ok())
                .filter(|&k: &usize| k >= 1)
                .map(Strategy::MultiStep)
                .ok_or_else(|| format!("expected aqm, random or multistep-<k>, got `{s}`")),
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PoolSpec {
    Full,
    RandQ(usize),
    CountQ(usize),
}

impl fmt::Display for PoolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolSpec::Full => f.write_str("full"),
            PoolSpec::RandQ(n) => write!(f, "randQ:{n}"),
            PoolSpec::CountQ(n) => write!(f, "countQ:{n}"),
        }
    }
}

impl FromStr for PoolSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let size = |n: &str| n.parse::<usize>().map_err(|e| format!("pool size `{n}`: {e}"));
        match s.split_once(':') {
            None if s == "full" => Ok(PoolSpec::Full),
            Some(("randQ", n)) => size(n).map(PoolSpec::RandQ),
            Some(("countQ", n)) => size(n).map(PoolSpec::CountQ),
            _ => Err(format!("expected full, randQ:<n> or countQ:<n>, got `{s}`")),
        }
    }
}

impl From<PoolSpec> for String {
    fn from(p: PoolSpec) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PoolSpec {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Wire form of [`Regime`] for serde.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct RegimeTag(pub Regime);

impl From<RegimeTag> for String {
    fn from(r: RegimeTag) -> String {
        r.0.name().to_string()
    }
}

impl TryFrom<String> for RegimeTag {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Regime::parse(&s).map(RegimeTag).ok_or_else(|| format!("expected indA, depA or trueA, got `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Nominal property recognition accuracy, in (0.5, 1].
    pub lambda: f64,
    pub regime: RegimeTag,
    pub train_fraction: f64,
    pub strategy: Strategy,
    pub turns: usize,
    pub n_train: usize,
    pub n_candidates: usize,
    pub n_games: usize,
    pub pool: PoolSpec,
    pub count_threshold: f64,
    pub world_seed: u64,
    pub answerer_seed: u64,
    pub game_seed: u64,
    pub epsilon: f64,
    pub allow_repeats: bool,
    pub random_with_replacement: bool,
    pub fixed_recognition: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            lambda: 1.0,
            regime: RegimeTag(Regime::DepA),
            train_fraction: 1.0,
            strategy: Strategy::Aqm,
            turns: 6,
            n_train: 30_000,
            n_candidates: 10_000,
            n_games: 1_000,
            pool: PoolSpec::Full,
            count_threshold: 0.95,
            world_seed: 1,
            answerer_seed: 2,
            game_seed: 3,
            epsilon: 1.0,
            allow_repeats: true,
            random_with_replacement: false,
            fixed_recognition: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value { key: key.to_string(), message: e.to_string() })
}

impl ExperimentConfig {
    pub fn regime(&self) -> Regime {
        self.regime.0
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "lambda" => self.lambda = parse_value(key, value)?,
            "regime" => {
                self.regime = RegimeTag::try_from(value.to_string())
                    .map_err(|message| ConfigError::Value { key: key.into(), message })?
            }
            "train_fraction" => self.train_fraction = parse_value(key, value)?,
            "strategy" => self.strategy = parse_value(key, value)?,
            "turns" => self.turns = parse_value(key, value)?,
            "n_train" => self.n_train = parse_value(key, value)?,
            "n_candidates" => self.n_candidates = parse_value(key, value)?,
            "n_games" => self.n_games = parse_value(key, value)?,
            "pool" => self.pool = parse_value(key, value)?,
            "count_threshold" => self.count_threshold = parse_value(key, value)?,
            "world_seed" => self.world_seed = parse_value(key, value)?,
            "answerer_seed" => self.answerer_seed = parse_value(key, value)?,
            "game_seed" => self.game_seed = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "allow_repeats" => self.allow_repeats = parse_value(key, value)?,
            "random_with_replacement" => self.random_with_replacement = parse_value(key, value)?,
            "fixed_recognition" => self.fixed_recognition = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders every key in file format; `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        format!(
            "lambda = {}\nregime = {}\ntrain_fraction = {}\nstrategy = {}\nturns = {}\nn_train = {}\n\
             n_candidates = {}\nn_games = {}\npool = {}\ncount_threshold = {}\nworld_seed = {}\n\
             answerer_seed = {}\ngame_seed = {}\nepsilon = {}\nallow_repeats = {}\n\
             random_with_replacement = {}\nfixed_recognition = {}\n",
            self.lambda,
            self.regime.0,
            self.train_fraction,
            self.strategy,
            self.turns,
            self.n_train,
            self.n_candidates,
            self.n_games,
            self.pool,
            self.count_threshold,
            self.world_seed,
            self.answerer_seed,
            self.game_seed,
            self.epsilon,
            self.allow_repeats,
            self.random_with_replacement,
            self.fixed_recognition,
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.lambda > 0.5 && self.lambda <= 1.0) {
            return bad(&format!("lambda must lie in (0.5, 1], got {}", self.lambda));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad("train_fraction must lie in (0, 1]");
        }
        if self.turns == 0 || self.n_train == 0 || self.n_candidates == 0 || self.n_games == 0 {
            return bad("turns, n_train, n_candidates and n_games must be positive");
        }
        if self.n_candidates > u32::MAX as usize {
            return bad("too many candidates");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.count_threshold > 0.0 && self.count_threshold <= 1.0) {
            return bad("count_threshold must lie in (0, 1]");
        }
        if let PoolSpec::RandQ(0) | PoolSpec::CountQ(0) = self.pool {
            return bad("pool size must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.lambda = 0.95;
        cfg.strategy = Strategy::MultiStep(2);
        cfg.pool = PoolSpec::CountQ(200);
        cfg.regime = RegimeTag(Regime::TrueA);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_defaults_and_errors() {
        let cfg = ExperimentConfig::parse("# hi\n\nturns = 10 # ten\n").unwrap();
        assert_eq!(cfg.turns, 10);
        assert_eq!(cfg.n_games, 1000);
        assert!(matches!(ExperimentConfig::parse("turns 10"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(ExperimentConfig::parse("lambda = 1.2"), Err(ConfigError::Invalid(_))));
        assert!(matches!(ExperimentConfig::parse("turns = x"), Err(ConfigError::Value { .. })));
        assert!(matches!(ExperimentConfig::parse("regime = foo"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn tags() {
        assert_eq!("multistep-3".parse::<Strategy>(), Ok(Strategy::MultiStep(3)));
        assert!("multistep-0".parse::<Strategy>().is_err());
        assert_eq!("randQ:200".parse::<PoolSpec>(), Ok(PoolSpec::RandQ(200)));
        assert!("rand:2".parse::<PoolSpec>().is_err());
        let json = serde_json::to_string(&ExperimentConfig::default()).unwrap();
        assert!(json.contains("\"regime\":\"depA\""));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ExperimentConfig::default());
    }
}
