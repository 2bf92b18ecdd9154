//! Two-phase pipeline: train victims on their own task, freeze them, then
//! train a neutral adversary party to make them fail.
//!
//! Every random choice comes from a stream derived from the master seed and
//! the episode index, so a single-worker run is a pure function of its
//! configuration.

use crate::config::{parse_f64_list, KvConfig};
use crate::error::{Error, Result};
use crate::qmix::{Conditioning, EpsilonSchedule, QmixConfig};

pub mod metrics;
pub mod pipeline;
pub mod policy;
pub mod rollout;

pub use metrics::{read_metrics_csv, MetricsRow, RunLog};
pub use pipeline::{
    retrain_victims_defense, train_adversaries, train_victims, AdversaryTraining, DefenseReport,
    VictimTraining,
};
pub use policy::{Control, FrozenPolicy};
pub use rollout::{evaluate, run_episode, WinRate};

/// How the adversary party is rewarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardMode {
    /// Negated victim task reward. Needs victim-reward access.
    Traditional,
    /// Weighted failure-path signals every step plus the terminal outcome.
    /// Needs global state.
    RuleBasedImmediate,
    /// Learned per-step estimates whose episode sum tracks the terminal
    /// outcome. Uses adversary observations only.
    EstimationBased,
}

impl RewardMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "traditional" => Ok(Self::Traditional),
            "rule-immediate" | "rule" => Ok(Self::RuleBasedImmediate),
            "estimation" => Ok(Self::EstimationBased),
            other => Err(Error::Config(format!(
                "unknown reward mode `{other}`, expected traditional, rule-immediate or estimation"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Traditional => "traditional",
            Self::RuleBasedImmediate => "rule-immediate",
            Self::EstimationBased => "estimation",
        }
    }

    /// Whether the mode reads simulator internals during training.
    pub fn needs_oracle_access(self) -> bool {
        !matches!(self, Self::EstimationBased)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardSettings {
    pub mode: RewardMode,
    pub r_fail: f64,
    /// Failure-path weights; `None` uses the environment default.
    pub weights: Option<Vec<f64>>,
    pub clip: f64,
    pub warmup: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub oracle_access: bool,
}

impl Default for RewardSettings {
    fn default() -> Self {
        Self {
            mode: RewardMode::EstimationBased,
            r_fail: 20.0,
            weights: None,
            clip: 5.0,
            warmup: 50,
            hidden: 16,
            lr: 1e-3,
            batch: 16,
            oracle_access: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub seed: u64,
    pub victim_episodes: usize,
    /// Freeze the best-evaluated victim snapshot instead of the last one.
    pub victim_keep_best: bool,
    pub adversary_episodes: usize,
    pub retrain_episodes: usize,
    pub retrain_epsilon_start: f64,
    /// Defense retraining starts from the original victim networks instead
    /// of a fresh initialization.
    pub retrain_warm_start: bool,
    /// Neutral units trained in the attack phase; `None` means every slot.
    pub adversaries: Option<usize>,
    pub qmix: QmixConfig,
    pub train_interval: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_fraction: f64,
    pub reward: RewardSettings,
    pub eval_episodes: usize,
    pub eval_interval: usize,
    pub competence_floor: f64,
    pub workers: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            victim_episodes: 30_000,
            victim_keep_best: true,
            adversary_episodes: 20_000,
            retrain_episodes: 30_000,
            retrain_epsilon_start: 0.3,
            retrain_warm_start: true,
            adversaries: None,
            qmix: QmixConfig::default(),
            train_interval: 1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.5,
            reward: RewardSettings::default(),
            eval_episodes: 200,
            eval_interval: 500,
            competence_floor: 0.8,
            workers: 1,
        }
    }
}

fn flag(kv: &KvConfig, key: &str, default: bool) -> Result<bool> {
    match kv.get_str(key) {
        Some(v) => crate::envs::parse_bool(key, v),
        None => Ok(default),
    }
}

impl TrainingConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let q = &d.qmix;
        let hidden: usize = kv.get_or("hidden", q.hidden[0])?;
        let layers: usize = kv.get_or("hidden_layers", q.hidden.len())?;
        let conditioning = match kv.get_str("mixer.conditioning") {
            Some(s) => Conditioning::parse(s)?,
            None => q.conditioning,
        };
        let qmix = QmixConfig {
            hidden: vec![hidden; layers],
            mixer_embed: kv.get_or("mixer.embed", q.mixer_embed)?,
            gamma: kv.get_or("gamma", q.gamma)?,
            lr: kv.get_or("lr", q.lr)?,
            batch_size: kv.get_or("batch_size", q.batch_size)?,
            buffer_capacity: kv.get_or("buffer_capacity", q.buffer_capacity)?,
            target_sync: kv.get_or("target_sync", q.target_sync)?,
            frame_stack: kv.get_or("frame_stack", q.frame_stack)?,
            conditioning,
            grad_clip: q.grad_clip,
        };
        let r = &d.reward;
        let reward = RewardSettings {
            mode: match kv.get_str("reward.mode") {
                Some(s) => RewardMode::parse(s)?,
                None => r.mode,
            },
            r_fail: kv.get_or("reward.r_fail", r.r_fail)?,
            weights: kv
                .get_str("reward.weights")
                .map(parse_f64_list)
                .transpose()?,
            clip: kv.get_or("reward.clip", r.clip)?,
            warmup: kv.get_or("reward.warmup", r.warmup)?,
            hidden: kv.get_or("reward.hidden", r.hidden)?,
            lr: kv.get_or("reward.lr", r.lr)?,
            batch: kv.get_or("reward.batch", r.batch)?,
            oracle_access: flag(kv, "reward.oracle_access", r.oracle_access)?,
        };
        let victim_episodes = kv.get_or("victim.episodes", d.victim_episodes)?;
        let cfg = Self {
            seed: kv.get_or("seed", d.seed)?,
            victim_episodes,
            adversary_episodes: kv.get_or("adversary.episodes", d.adversary_episodes)?,
            retrain_episodes: kv.get_or("retrain.episodes", victim_episodes)?,
            retrain_epsilon_start: kv.get_or("retrain.epsilon_start", d.retrain_epsilon_start)?,
            retrain_warm_start: flag(kv, "retrain.warm_start", d.retrain_warm_start)?,
            victim_keep_best: flag(kv, "victim.keep_best", d.victim_keep_best)?,
            adversaries: kv.get("adversary.count")?,
            qmix,
            train_interval: kv.get_or("train_interval", d.train_interval)?,
            epsilon_start: kv.get_or("epsilon.start", d.epsilon_start)?,
            epsilon_end: kv.get_or("epsilon.end", d.epsilon_end)?,
            epsilon_fraction: kv.get_or("epsilon.fraction", d.epsilon_fraction)?,
            reward,
            eval_episodes: kv.get_or("eval.episodes", d.eval_episodes)?,
            eval_interval: kv.get_or("eval.interval", d.eval_interval)?,
            competence_floor: kv.get_or("competence_floor", d.competence_floor)?,
            workers: kv.get_or("workers", d.workers)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.qmix.validate()?;
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "`{name}` must lie in [0, 1], got {v}"
                )))
            }
        };
        prob("epsilon.start", self.epsilon_start)?;
        prob("epsilon.end", self.epsilon_end)?;
        prob("epsilon.fraction", self.epsilon_fraction)?;
        prob("retrain.epsilon_start", self.retrain_epsilon_start)?;
        prob("competence_floor", self.competence_floor)?;
        if self.train_interval == 0 || self.workers == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "train_interval, workers and eval.episodes must be positive".into(),
            ));
        }
        let r = &self.reward;
        if !(r.r_fail > 0.0) || !(r.clip > 0.0) || !(r.lr > 0.0) || r.hidden == 0 || r.batch == 0 {
            return Err(Error::Config(
                "reward.r_fail, reward.clip, reward.lr, reward.hidden and reward.batch must be positive".into(),
            ));
        }
        if r.mode.needs_oracle_access() && !r.oracle_access {
            return Err(Error::Config(format!(
                "reward mode `{}` reads simulator internals; set reward.oracle_access = true to run it as a baseline",
                r.mode.as_str()
            )));
        }
        Ok(())
    }

    pub fn schedule(&self, total: usize) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            fraction: self.epsilon_fraction,
            total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_config() {
        let cfg = TrainingConfig::from_kv(&KvConfig::new()).unwrap();
        assert_eq!(cfg, TrainingConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let kv = KvConfig::parse(
            "seed = 7\nhidden = 32\nhidden_layers = 1\nreward.mode = rule-immediate\nreward.oracle_access = true\nreward.weights = 0.5, 0.5\n",
        )
        .unwrap();
        let cfg = TrainingConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.qmix.hidden, vec![32]);
        assert_eq!(cfg.reward.mode, RewardMode::RuleBasedImmediate);
        assert_eq!(cfg.reward.weights, Some(vec![0.5, 0.5]));
    }

    #[test]
    fn baseline_modes_need_oracle_flag() {
        let kv = KvConfig::parse("reward.mode = traditional\n").unwrap();
        assert!(matches!(
            TrainingConfig::from_kv(&kv),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bad_values_rejected() {
        for text in [
            "epsilon.start = 1.5\n",
            "train_interval = 0\n",
            "reward.mode = magic\n",
            "gamma = x\n",
        ] {
            let kv = KvConfig::parse(text).unwrap();
            assert!(TrainingConfig::from_kv(&kv).is_err(), "{text}");
        }
    }
}
