//! Plain-text `key = value` configuration.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored.
//! Keys are dotted (`env.horizon`, `reward.mode`). Every key must appear in
//! [`SCHEMA`]; the canonical text form (sorted keys) is what gets hashed
//! into run manifests.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Every recognized key with a one-line description.
pub const SCHEMA: &[(&str, &str)] = &[
    ("seed", "master seed; every random stream derives from it"),
    ("env", "environment preset: skirmish-small, skirmish-even, skirmish-hard, corridor-highway, corridor-small"),
    ("env.grid_width", "skirmish grid width"),
    ("env.grid_height", "skirmish grid height"),
    ("env.victim_count", "number of victim agents"),
    ("env.opponent_count", "number of scripted skirmish opponents"),
    ("env.adversary_count", "number of neutral (adversary-party) slots"),
    ("env.deployed_adversaries", "how many neutral slots are spawned"),
    ("env.other_vehicle_count", "scripted corridor traffic"),
    ("env.unit_health", "skirmish unit health"),
    ("env.attack_range", "skirmish attack range (Chebyshev)"),
    ("env.attack_damage", "skirmish damage per attack"),
    ("env.horizon", "episode step limit"),
    ("env.sensing_radius", "skirmish observation radius"),
    ("env.walls", "skirmish wall cells, `x,y;x,y`"),
    ("env.victim_spawn", "skirmish victim spawn region `x0..x1,y0..y1`"),
    ("env.opponent_spawn", "skirmish opponent spawn region"),
    ("env.adversary_spawn", "skirmish neutral spawn region"),
    ("env.adversaries_attack_opponents", "allow neutrals to attack opponents"),
    ("env.lane_blocking", "neutral units block attack lanes"),
    ("env.lanes", "corridor lane count"),
    ("env.length", "corridor length in cells"),
    ("env.speed_levels", "corridor speed levels"),
    ("env.weights", "default failure-path weights, comma separated"),
    ("victim.episodes", "victim training episodes"),
    ("victim.keep_best", "freeze the best-evaluated victim snapshot (needs eval.interval > 0)"),
    ("adversary.episodes", "adversary training episodes"),
    ("adversary.count", "neutral units trained and deployed in the attack phase (default: every slot)"),
    ("retrain.episodes", "defense retraining episodes"),
    ("retrain.epsilon_start", "exploration at the start of defense retraining"),
    ("retrain.warm_start", "start defense retraining from the original victim networks"),
    ("batch_size", "episodes per learner step"),
    ("gamma", "discount factor"),
    ("lr", "Q-network learning rate"),
    ("buffer_capacity", "replay buffer capacity in episodes"),
    ("target_sync", "learner steps between target-network copies"),
    ("train_interval", "episodes collected per learner step"),
    ("hidden", "Q-network hidden width"),
    ("hidden_layers", "Q-network hidden layer count"),
    ("frame_stack", "observation frames fed to Q-networks (1 or 2)"),
    ("mixer.embed", "mixing network embedding width"),
    ("mixer.conditioning", "mixer input: observations or state"),
    ("epsilon.start", "initial exploration rate"),
    ("epsilon.end", "final exploration rate"),
    ("epsilon.fraction", "fraction of episodes over which epsilon anneals"),
    ("reward.mode", "adversary reward: traditional, rule-immediate or estimation"),
    ("reward.r_fail", "terminal reward for victim failure"),
    ("reward.weights", "failure-path weights W, comma separated"),
    ("reward.clip", "clip magnitude for per-step estimates"),
    ("reward.warmup", "episodes with terminal-only rewards before estimates are used"),
    ("reward.hidden", "reward model hidden size"),
    ("reward.lr", "reward model learning rate"),
    ("reward.batch", "episodes per reward model update"),
    ("reward.oracle_access", "allow victim-reward access (traditional baseline)"),
    ("eval.episodes", "greedy episodes per evaluation"),
    ("eval.interval", "training episodes between evaluations"),
    ("competence_floor", "minimum no-attack win rate for trained victims"),
    ("workers", "rollout workers (1 = deterministic)"),
    ("experiment", "experiment preset: rq1, rq2, rq3, rq4 or rq5"),
    ("experiment.envs", "environment presets of the grid, comma separated"),
    ("experiment.modes", "reward modes of the grid, comma separated"),
    ("experiment.adversaries", "adversary counts of the grid, comma separated"),
    ("experiment.seeds", "master seeds of the grid, comma separated"),
    ("experiment.train", "train missing policies (false: load checkpoints only)"),
];

pub fn is_known_key(key: &str) -> bool {
    SCHEMA.iter().any(|(k, _)| *k == key)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses config text. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                detail: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = k.trim();
            if !is_known_key(key) {
                return Err(Error::Config(format!(
                    "unknown key `{key}` on line {}",
                    i + 1
                )));
            }
            entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Typed lookup; `None` when absent, config error when unparseable.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !is_known_key(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Entries under `prefix`, with the prefix stripped.
    pub fn section<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest, v.as_str())))
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Applies `key=value` overrides; each key must be in the schema.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Canonical text: one sorted `key = value` line per entry.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text, lowercase hex.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses a comma-separated list of reals.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{}` in list `{s}`", p.trim())))
        })
        .collect()
}
