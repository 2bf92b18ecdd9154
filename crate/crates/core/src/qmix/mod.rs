//! Value-decomposition learner: independent per-agent Q-networks combined
//! by a monotone mixing network, trained on squared TD error against
//! periodically synchronized target copies.
//!
//! The mixer is conditioned on the learning party's concatenated
//! observations rather than on global state, since an attacker has no
//! per-step access to the simulator. [`Conditioning::State`] restores
//! state conditioning for ablations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod agent;
pub mod buffer;
pub mod learner;
pub mod mixer;

pub use agent::{agent_q_values, greedy_action, select_action, AgentQNet};
pub use buffer::ReplayBuffer;
pub use learner::{td_target, LearnerStats, QmixLearner};
pub use mixer::{MixCache, MixingNet};

/// Q-value reported for unavailable actions.
pub const MASKED_Q: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    /// Concatenated observations of the learning party.
    Observations,
    /// Flat global state (ablation only).
    State,
}

impl Conditioning {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "observations" => Ok(Self::Observations),
            "state" => Ok(Self::State),
            other => Err(Error::Config(format!(
                "unknown mixer conditioning `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QmixConfig {
    pub hidden: Vec<usize>,
    pub mixer_embed: usize,
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub target_sync: u64,
    pub frame_stack: usize,
    pub conditioning: Conditioning,
    pub grad_clip: Option<f64>,
}

impl Default for QmixConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            mixer_embed: 32,
            gamma: 0.99,
            lr: 5e-4,
            batch_size: 32,
            buffer_capacity: 5000,
            target_sync: 200,
            frame_stack: 1,
            conditioning: Conditioning::Observations,
            grad_clip: None,
        }
    }
}

impl QmixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        if self.batch_size == 0
            || self.buffer_capacity == 0
            || self.target_sync == 0
            || self.mixer_embed == 0
        {
            return Err(Error::Config(
                "batch_size, buffer_capacity, target_sync and mixer.embed must be positive".into(),
            ));
        }
        if !(1..=2).contains(&self.frame_stack) {
            return Err(Error::Config(format!(
                "frame_stack must be 1 or 2, got {}",
                self.frame_stack
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Linear exploration schedule from `start` to `end` over the first
/// `fraction` of `total` episodes, constant afterwards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
    pub total: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, episode: usize) -> f64 {
        let span = (self.fraction * self.total as f64).max(1.0);
        let p = episode as f64 / span;
        if p >= 1.0 {
            self.end
        } else {
            self.start + (self.end - self.start) * p
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            fraction: 0.2,
            total: 1000,
        };
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(100) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(200), 0.05);
        assert_eq!(s.value(999), 0.05);
    }

    #[test]
    fn config_validation() {
        assert!(QmixConfig::default().validate().is_ok());
        let bad = QmixConfig {
            gamma: 1.5,
            ..QmixConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
