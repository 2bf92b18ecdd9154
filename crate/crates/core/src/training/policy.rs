use std::sync::Arc;

use rand::Rng;

use crate::config::sha256_hex;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, AgentId, Observation, PartyId, StepRecord};
use crate::neural::Checkpoint;
use crate::qmix::learner::{read_agent_nets, write_agent_nets};
use crate::qmix::{greedy_action, select_action, AgentQNet, QmixLearner};

/// Immutable greedy policy of one party.
///
/// Cloning shares the parameter snapshot. There is no way to read or
/// modify the parameters from outside the crate; callers only get actions.
#[derive(Clone, Debug)]
pub struct FrozenPolicy {
    party: PartyId,
    agents: Vec<AgentId>,
    slots: Vec<usize>,
    nets: Arc<Vec<AgentQNet>>,
    checksum: String,
}

fn nets_checksum(nets: &[AgentQNet]) -> String {
    let mut bytes = Vec::new();
    for n in nets {
        for p in n.net.params() {
            for d in &p.shape {
                bytes.extend((*d as u64).to_le_bytes());
            }
            for v in &p.values {
                bytes.extend(v.to_bits().to_le_bytes());
            }
        }
    }
    sha256_hex(&bytes)
}

impl FrozenPolicy {
    /// Snapshot of the learner's current agent networks.
    pub fn freeze(learner: &QmixLearner) -> Result<Self> {
        let party =
            learner.agents().first().map(|a| a.party).ok_or_else(|| {
                Error::Structural("cannot freeze a learner without agents".into())
            })?;
        Self::from_nets(
            party,
            learner.agents().to_vec(),
            learner.slots().to_vec(),
            learner.nets().to_vec(),
        )
    }

    /// A policy with no agents, for phases run without a party.
    pub fn empty(party: PartyId) -> Self {
        Self {
            party,
            agents: Vec::new(),
            slots: Vec::new(),
            checksum: nets_checksum(&[]),
            nets: Arc::new(Vec::new()),
        }
    }

    pub(crate) fn from_nets(
        party: PartyId,
        agents: Vec<AgentId>,
        slots: Vec<usize>,
        nets: Vec<AgentQNet>,
    ) -> Result<Self> {
        if agents.len() != slots.len() || agents.len() != nets.len() {
            return Err(Error::Structural(
                "agents, slots and networks differ in count".into(),
            ));
        }
        if agents.iter().any(|a| a.party != party) {
            return Err(Error::Structural(format!(
                "a frozen {} policy holds foreign agents",
                party.as_str()
            )));
        }
        let checksum = nets_checksum(&nets);
        Ok(Self {
            party,
            agents,
            slots,
            nets: Arc::new(nets),
            checksum,
        })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub(crate) fn nets(&self) -> &[AgentQNet] {
        &self.nets
    }

    /// Hex sha256 over every parameter, fixed at freezing time.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    /// Recomputes the parameter digest and compares it with the stored one.
    pub fn audit(&self) -> Result<()> {
        if nets_checksum(&self.nets) == self.checksum {
            Ok(())
        } else {
            Err(Error::Lifecycle(format!(
                "frozen {} policy changed after freezing",
                self.party.as_str()
            )))
        }
    }

    /// Greedy actions for this party's agents.
    ///
    /// `observations` and `masks` are actor-aligned; `prev` is the previous
    /// record of the episode, if any.
    pub fn act(
        &self,
        observations: &[Observation],
        masks: &[Vec<bool>],
        prev: Option<&StepRecord>,
    ) -> Result<Vec<(AgentId, ActionId)>> {
        party_actions(
            &self.nets,
            &self.agents,
            &self.slots,
            observations,
            masks,
            prev,
            0.0,
            &mut NoRng,
        )
    }

    pub fn write_to(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.meta
            .insert(format!("{prefix}.party"), self.party.as_str().to_string());
        ck.meta.insert(
            format!("{prefix}.agent_ids"),
            self.agents
                .iter()
                .map(|a| a.index.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        ck.meta.insert(
            format!("{prefix}.slots"),
            self.slots
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        ck.meta
            .insert(format!("{prefix}.checksum"), self.checksum.clone());
        write_agent_nets(ck, prefix, &self.nets);
    }

    /// Restores a policy and verifies its stored checksum.
    pub fn read_from(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        let meta = |k: &str| -> Result<&str> {
            ck.meta
                .get(&format!("{prefix}.{k}"))
                .map(String::as_str)
                .ok_or_else(|| Error::Lookup(format!("checkpoint lacks `{prefix}.{k}`")))
        };
        let party = match meta("party")? {
            "adversary" => PartyId::Adversary,
            "victim" => PartyId::Victim,
            other => {
                return Err(Error::Lookup(format!(
                    "unknown party `{other}` in checkpoint"
                )))
            }
        };
        let list = |s: &str| -> Result<Vec<usize>> {
            s.split(',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::Lookup(format!("bad index `{t}` in checkpoint")))
                })
                .collect()
        };
        let agents = list(meta("agent_ids")?)?
            .into_iter()
            .map(|i| AgentId::new(party, i))
            .collect();
        let slots = list(meta("slots")?)?;
        let policy = Self::from_nets(party, agents, slots, read_agent_nets(ck, prefix)?)?;
        if policy.checksum != meta("checksum")? {
            return Err(Error::Lifecycle(format!(
                "checksum mismatch for `{prefix}` in checkpoint"
            )));
        }
        Ok(policy)
    }
}

/// Placeholder generator for purely greedy selection, which never draws.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("greedy selection draws no random numbers")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("greedy selection draws no random numbers")
    }

    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("greedy selection draws no random numbers")
    }
}

/// Epsilon-greedy actions of the given agents from their Q-networks, with
/// the same input layout the learner trains on.
#[allow(clippy::too_many_arguments)]
pub(crate) fn party_actions<R: Rng + ?Sized>(
    nets: &[AgentQNet],
    agents: &[AgentId],
    slots: &[usize],
    observations: &[Observation],
    masks: &[Vec<bool>],
    prev: Option<&StepRecord>,
    epsilon: f64,
    rng: &mut R,
) -> Result<Vec<(AgentId, ActionId)>> {
    let mut out = Vec::with_capacity(agents.len());
    for ((net, &agent), &slot) in nets.iter().zip(agents).zip(slots) {
        let obs = observations
            .get(slot)
            .ok_or_else(|| Error::Structural(format!("no observation for actor slot {slot}")))?;
        let (prev_obs, last) = match prev {
            Some(p) => (
                Some(p.observations[slot].values()),
                p.joint_action.get(agent),
            ),
            None => (None, None),
        };
        let q = net.q_values(&net.build_input(obs.values(), prev_obs, last), &masks[slot])?;
        let a = if epsilon > 0.0 {
            select_action(&q, epsilon, rng)
        } else {
            greedy_action(&q)
        };
        out.push((agent, a));
    }
    Ok(out)
}

/// Who chooses the actions of one party during a rollout.
#[derive(Clone, Copy, Debug)]
pub enum Control<'a> {
    /// Uniform over available actions.
    Random,
    Frozen(&'a FrozenPolicy),
    /// The live networks of a learner, epsilon-greedy.
    Learner {
        learner: &'a QmixLearner,
        epsilon: f64,
    },
}

impl Control<'_> {
    /// Actions of the agents this control covers; `Random` covers none.
    pub(crate) fn actions<R: Rng + ?Sized>(
        &self,
        observations: &[Observation],
        masks: &[Vec<bool>],
        prev: Option<&StepRecord>,
        rng: &mut R,
    ) -> Result<Vec<(AgentId, ActionId)>> {
        match self {
            Control::Random => Ok(Vec::new()),
            Control::Frozen(p) => p.act(observations, masks, prev),
            Control::Learner { learner, epsilon } => party_actions(
                learner.nets(),
                learner.agents(),
                learner.slots(),
                observations,
                masks,
                prev,
                *epsilon,
                rng,
            ),
        }
    }
}
