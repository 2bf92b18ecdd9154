//! Multi-party Dec-POMDP vocabulary shared by environments and learners.
//!
//! Agents are partitioned into three parties: the adversarial (neutral)
//! party being trained, the frozen victim party, and scripted third parties.
//! Everything here is plain value data: once built, a trajectory or an
//! observation is never mutated, so copies can be handed to concurrent
//! rollout workers freely.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::envs::EnvDescriptor;
use crate::error::{Error, Result};
use crate::reward::FailureSignalVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PartyId {
    Adversary,
    Victim,
    Third,
}

impl PartyId {
    pub fn as_str(self) -> &'static str {
        match self {
            PartyId::Adversary => "adversary",
            PartyId::Victim => "victim",
            PartyId::Third => "third",
        }
    }
}

/// Agent identity. Ordering is (party, index), which is also the
/// tie-breaking order used by environment move resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub party: PartyId,
    pub index: usize,
}

impl AgentId {
    pub const fn new(party: PartyId, index: usize) -> Self {
        Self { party, index }
    }
    pub const fn victim(index: usize) -> Self {
        Self::new(PartyId::Victim, index)
    }
    pub const fn adversary(index: usize) -> Self {
        Self::new(PartyId::Adversary, index)
    }
    pub const fn third(index: usize) -> Self {
        Self::new(PartyId::Third, index)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.party.as_str(), self.index)
    }
}

pub type ActionId = usize;

/// Per-agent partial view, normalized to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    values: Vec<f64>,
}

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(
            values
                .iter()
                .all(|v| v.is_finite() && (-1.0..=1.0).contains(v)),
            "observation out of range: {values:?}"
        );
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JointAction {
    actions: BTreeMap<AgentId, ActionId>,
}

impl JointAction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, agent: AgentId, action: ActionId) {
        self.actions.insert(agent, action);
    }

    pub fn get(&self, agent: AgentId) -> Option<ActionId> {
        self.actions.get(&agent).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, ActionId)> + '_ {
        self.actions.iter().map(|(a, b)| (*a, *b))
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl FromIterator<(AgentId, ActionId)> for JointAction {
    fn from_iter<I: IntoIterator<Item = (AgentId, ActionId)>>(iter: I) -> Self {
        Self {
            actions: iter.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub terminal: bool,
    pub victim_success: bool,
    pub victim_failed: bool,
    pub failure_signals: FailureSignalVector,
}

impl StepOutcome {
    pub fn running(failure_signals: FailureSignalVector) -> Self {
        Self {
            terminal: false,
            victim_success: false,
            victim_failed: false,
            failure_signals,
        }
    }

    /// Success and failure are exclusive and only decided at the last step.
    pub fn is_consistent(&self) -> bool {
        !(self.victim_success && self.victim_failed)
            && (self.terminal || (!self.victim_success && !self.victim_failed))
            && (!self.terminal || self.victim_success || self.victim_failed)
    }
}

/// One transition of an episode.
///
/// `observations` and `masks` are aligned with [`EnvDescriptor::actors`]:
/// all adversary-party agents first, then all victims.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub observations: Vec<Observation>,
    pub masks: Vec<Vec<bool>>,
    pub joint_action: JointAction,
    pub failure_signals: FailureSignalVector,
    /// The victims' own task reward for this transition.
    pub native_reward: f64,
    /// Reward assigned to the adversary party when the step was collected.
    pub adversary_reward: f64,
    /// Flat global-state features, kept only when state-conditioned mixing is enabled.
    pub state_features: Option<Vec<f64>>,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrajectory {
    pub records: Vec<StepRecord>,
    pub final_outcome: StepOutcome,
    pub seed: u64,
}

impl EpisodeTrajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Observations of the given actors at step `t`, concatenated in order.
    pub fn concat_observations(&self, t: usize, actor_slots: &[usize]) -> Vec<f64> {
        let rec = &self.records[t];
        let mut out = Vec::new();
        for &slot in actor_slots {
            out.extend_from_slice(rec.observations[slot].values());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub record: Option<usize>,
    pub message: String,
    pub structural: bool,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.record {
            Some(i) => write!(f, "record {i} {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Turns the first structural violation into an error.
    pub fn structural_error(&self) -> Option<Error> {
        self.violations
            .iter()
            .find(|v| v.structural)
            .map(|v| Error::Structural(v.to_string()))
    }

    fn push(&mut self, record: Option<usize>, structural: bool, message: impl Into<String>) {
        self.violations.push(Violation {
            record,
            message: message.into(),
            structural,
        });
    }
}

/// Checks a trajectory against the invariants of the environment it came from.
pub fn validate_trajectory(
    traj: &EpisodeTrajectory,
    env: &EnvDescriptor,
) -> Result<ValidationReport> {
    if traj.records.is_empty() {
        return Err(Error::Contract("trajectory has no records".into()));
    }
    let mut report = ValidationReport::default();
    if traj.records.len() > env.horizon {
        report.push(
            None,
            false,
            format!(
                "length {} exceeds horizon {}",
                traj.records.len(),
                env.horizon
            ),
        );
    }
    let n_paths = env.failure_paths.len();
    let last = traj.records.len() - 1;
    for (i, rec) in traj.records.iter().enumerate() {
        if rec.observations.len() != env.actors.len() || rec.masks.len() != env.actors.len() {
            report.push(
                Some(i),
                true,
                format!(
                    "shape: {} observations / {} masks for {} actors",
                    rec.observations.len(),
                    rec.masks.len(),
                    env.actors.len()
                ),
            );
            continue;
        }
        for (slot, agent) in env.actors.iter().enumerate() {
            let role = env.role(agent.party);
            let obs_len = rec.observations[slot].len();
            if obs_len != role.obs_dim {
                report.push(
                    Some(i),
                    true,
                    format!(
                        "shape: {agent} observation length {obs_len}, expected {}",
                        role.obs_dim
                    ),
                );
            }
            let mask = &rec.masks[slot];
            if mask.len() != role.actions.len() {
                report.push(
                    Some(i),
                    true,
                    format!(
                        "shape: {agent} mask length {}, expected {}",
                        mask.len(),
                        role.actions.len()
                    ),
                );
                continue;
            }
            match rec.joint_action.get(*agent) {
                None => report.push(Some(i), false, format!("mask: no action for {agent}")),
                Some(a) if a >= mask.len() || !mask[a] => report.push(
                    Some(i),
                    false,
                    format!("mask: {agent} took unavailable action {a}"),
                ),
                Some(_) => {}
            }
        }
        if rec.failure_signals.len() != n_paths {
            report.push(
                Some(i),
                true,
                format!(
                    "shape: {} failure signals, expected {n_paths}",
                    rec.failure_signals.len()
                ),
            );
        } else if rec
            .failure_signals
            .components()
            .iter()
            .any(|&c| c < 0.0 || !c.is_finite())
        {
            report.push(Some(i), false, "negative or non-finite failure signal");
        }
        if rec.terminal && i != last {
            report.push(Some(i), false, "terminal before end");
        }
    }
    if !traj.records[last].terminal {
        report.push(Some(last), false, "last record not terminal");
    }
    if !traj.final_outcome.terminal {
        report.push(None, false, "final outcome not terminal");
    }
    if !traj.final_outcome.is_consistent() {
        report.push(None, false, "final outcome flags inconsistent");
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Line-delimited trajectory format.
//
// One JSON object per line. Records come first, in step order, with fields
//   t, observations, masks, actions, failure_signals, native_reward,
//   adversary_reward, state_features, terminal
// and `actions` encoded as [party, index, action] triples in AgentId order.
// The final line is the summary
//   outcome, seed, length.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RecordLine {
    t: usize,
    observations: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
    actions: Vec<(PartyId, usize, ActionId)>,
    failure_signals: Vec<f64>,
    native_reward: f64,
    adversary_reward: f64,
    state_features: Option<Vec<f64>>,
    terminal: bool,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    outcome: StepOutcome,
    seed: u64,
    length: usize,
}

pub fn write_trajectory<W: Write>(traj: &EpisodeTrajectory, mut out: W) -> Result<()> {
    for (t, rec) in traj.records.iter().enumerate() {
        let line = RecordLine {
            t,
            observations: rec
                .observations
                .iter()
                .map(|o| o.values().to_vec())
                .collect(),
            masks: rec.masks.clone(),
            actions: rec
                .joint_action
                .iter()
                .map(|(a, act)| (a.party, a.index, act))
                .collect(),
            failure_signals: rec.failure_signals.components().to_vec(),
            native_reward: rec.native_reward,
            adversary_reward: rec.adversary_reward,
            state_features: rec.state_features.clone(),
            terminal: rec.terminal,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    let summary = SummaryLine {
        outcome: traj.final_outcome.clone(),
        seed: traj.seed,
        length: traj.records.len(),
    };
    serde_json::to_writer(&mut out, &summary)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<EpisodeTrajectory> {
    let lines: Vec<String> = input
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let Some((summary_line, record_lines)) = lines.split_last() else {
        return Err(Error::Parse {
            line: 0,
            detail: "empty trajectory file".into(),
        });
    };
    let mut records = Vec::with_capacity(record_lines.len());
    for (i, line) in record_lines.iter().enumerate() {
        let r: RecordLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if r.t != i {
            return Err(Error::Parse {
                line: i + 1,
                detail: format!("record index {} out of order", r.t),
            });
        }
        records.push(StepRecord {
            observations: r.observations.into_iter().map(Observation::new).collect(),
            masks: r.masks,
            joint_action: r
                .actions
                .into_iter()
                .map(|(p, idx, a)| (AgentId::new(p, idx), a))
                .collect(),
            failure_signals: FailureSignalVector::new(r.failure_signals),
            native_reward: r.native_reward,
            adversary_reward: r.adversary_reward,
            state_features: r.state_features,
            terminal: r.terminal,
        });
    }
    let summary: SummaryLine = serde_json::from_str(summary_line).map_err(|e| Error::Parse {
        line: lines.len(),
        detail: e.to_string(),
    })?;
    if summary.length != records.len() {
        return Err(Error::Parse {
            line: lines.len(),
            detail: format!(
                "summary length {} but {} records",
                summary.length,
                records.len()
            ),
        });
    }
    Ok(EpisodeTrajectory {
        records,
        final_outcome: summary.outcome,
        seed: summary.seed,
    })
}

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed, a stream tag and a counter.
///
/// Streams separate uses of the same master seed (training episodes,
/// evaluation episodes, network init) so that they never collide.
pub fn derive_seed(master: u64, stream: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream.rotate_left(17)) ^ counter)
}

pub mod streams {
    pub const INIT: u64 = 0x1;
    pub const TRAIN_EPISODE: u64 = 0x2;
    pub const EVAL_EPISODE: u64 = 0x3;
    pub const EXPLORE: u64 = 0x4;
    pub const SAMPLE: u64 = 0x5;
    pub const NEUTRAL: u64 = 0x6;
    pub const REWARD_MODEL: u64 = 0x7;
}
