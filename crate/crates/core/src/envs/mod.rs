//! Built-in multi-party environments.
//!
//! Two grid worlds stand in for large simulators: a [`SkirmishEnv`] where
//! victims must destroy a scripted opponent squad before the time limit, and
//! a [`CorridorEnv`] where victim vehicles must reach the end of a multi-lane
//! road without collisions or traffic-rule violations. Both host a party of
//! neutral units that can never harm a victim directly; they influence the
//! victims only by occupying cells and attack lanes (skirmish) or by their
//! driving (corridor).

use serde::Serialize;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::mdp::{AgentId, JointAction, Observation, PartyId, StepOutcome};
use crate::reward::FailureSignalVector;

pub mod corridor;
pub mod skirmish;

pub use corridor::{CorridorConfig, CorridorEnv};
pub use skirmish::{SkirmishConfig, SkirmishEnv};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailurePathDescriptor {
    pub id: usize,
    pub name: String,
    pub description: String,
}

/// Observation and action layout of one controllable party.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoleDescriptor {
    pub obs_dim: usize,
    pub features: Vec<String>,
    pub actions: Vec<String>,
}

/// Machine-readable description of an environment instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvDescriptor {
    pub name: String,
    pub horizon: usize,
    /// Every agent, sorted by id.
    pub agents: Vec<AgentId>,
    /// Agents that act through the joint action: adversaries, then victims.
    pub actors: Vec<AgentId>,
    pub adversary: RoleDescriptor,
    pub victim: RoleDescriptor,
    pub failure_paths: Vec<FailurePathDescriptor>,
    pub default_weights: Vec<f64>,
    pub state_dim: usize,
}

static SCRIPTED: RoleDescriptor = RoleDescriptor {
    obs_dim: 0,
    features: Vec::new(),
    actions: Vec::new(),
};

impl EnvDescriptor {
    pub fn role(&self, party: PartyId) -> &RoleDescriptor {
        match party {
            PartyId::Adversary => &self.adversary,
            PartyId::Victim => &self.victim,
            PartyId::Third => &SCRIPTED,
        }
    }

    pub fn actor_slot(&self, agent: AgentId) -> Option<usize> {
        self.actors.iter().position(|a| *a == agent)
    }

    /// Actor slots belonging to a party, in index order.
    pub fn party_slots(&self, party: PartyId) -> Vec<usize> {
        self.actors
            .iter()
            .enumerate()
            .filter(|(_, a)| a.party == party)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn party_size(&self, party: PartyId) -> usize {
        self.agents.iter().filter(|a| a.party == party).count()
    }

    pub fn to_manifest_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A stateless environment definition; all episode state lives in `State`.
///
/// `step` is a pure function of `(state, joint_action)`, so replaying the
/// same seed and action history reproduces the state sequence bit for bit.
pub trait Environment: Send + Sync {
    type State: Clone + std::fmt::Debug + PartialEq + Send;

    fn descriptor(&self) -> &EnvDescriptor;

    fn reset(&self, seed: u64) -> Self::State;

    fn step(&self, state: &Self::State, action: &JointAction)
        -> Result<(Self::State, StepOutcome)>;

    fn observe(&self, state: &Self::State, agent: AgentId) -> Result<Observation>;

    fn available_actions(&self, state: &Self::State, agent: AgentId) -> Result<Vec<bool>>;

    /// Per-path failure progress of one genuine transition.
    fn failure_signals(
        &self,
        prev: &Self::State,
        action: &JointAction,
        next: &Self::State,
    ) -> Result<FailureSignalVector>;

    /// The victims' own task reward for a transition.
    fn native_reward(&self, prev: &Self::State, next: &Self::State, outcome: &StepOutcome) -> f64;

    /// Full global state as a flat feature vector (ablation-only input).
    fn state_features(&self, state: &Self::State) -> Vec<f64>;

    fn step_count(&self, state: &Self::State) -> usize;

    /// Same environment with only the first `n` adversary-party units
    /// spawned; the rest are absent for the whole episode.
    fn with_deployed_adversaries(&self, n: usize) -> Self
    where
        Self: Sized;
}

/// Either built-in environment, selected from a config file.
#[derive(Clone, Debug)]
pub enum EnvConfig {
    Skirmish(SkirmishConfig),
    Corridor(CorridorConfig),
}

impl EnvConfig {
    /// Reads the `env` key (a preset name) and any `env.*` overrides.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let preset = kv.get_str("env").unwrap_or("skirmish-small");
        match preset {
            "skirmish-small" | "skirmish-even" | "skirmish-hard" | "skirmish" => {
                let mut cfg = SkirmishConfig::preset(preset)?;
                cfg.apply_kv(kv)?;
                Ok(EnvConfig::Skirmish(cfg))
            }
            "corridor" | "corridor-highway" | "corridor-small" => {
                let mut cfg = CorridorConfig::preset(preset)?;
                cfg.apply_kv(kv)?;
                Ok(EnvConfig::Corridor(cfg))
            }
            other => Err(Error::Config(format!(
                "unknown environment preset `{other}`"
            ))),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            EnvConfig::Skirmish(c) => &c.name,
            EnvConfig::Corridor(c) => &c.name,
        }
    }

    pub fn adversary_count(&self) -> usize {
        match self {
            EnvConfig::Skirmish(c) => c.adversary_count,
            EnvConfig::Corridor(c) => c.adversary_count,
        }
    }

    pub fn descriptor(&self) -> Result<EnvDescriptor> {
        Ok(match self {
            EnvConfig::Skirmish(c) => SkirmishEnv::new(c.clone())?.descriptor().clone(),
            EnvConfig::Corridor(c) => CorridorEnv::new(c.clone())?.descriptor().clone(),
        })
    }
}

/// Normalizes `v` in `[0, max]` to `[-1, 1]`.
pub(crate) fn centered(v: f64, max: f64) -> f64 {
    if max <= 0.0 {
        0.0
    } else {
        (2.0 * v / max - 1.0).clamp(-1.0, 1.0)
    }
}

pub(crate) fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{v}`"
        ))),
    }
}
