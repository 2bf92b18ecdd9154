use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::policy::Control;
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mdp::{derive_seed, streams, EpisodeTrajectory, JointAction, PartyId, StepRecord};

/// Plays one episode to termination.
///
/// Actors not covered by `adversaries` or `victims` pick uniformly among
/// their available actions. Exploration and random actors draw from
/// streams derived from `seed`, so the episode is a pure function of the
/// seed and the policies.
pub fn run_episode<E: Environment>(
    env: &E,
    seed: u64,
    adversaries: &Control,
    victims: &Control,
    record_state: bool,
) -> Result<EpisodeTrajectory> {
    check_party(adversaries, PartyId::Adversary)?;
    check_party(victims, PartyId::Victim)?;
    let desc = env.descriptor();
    let mut explore = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::EXPLORE, 0));
    let mut random = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::NEUTRAL, 0));
    let mut state = env.reset(seed);
    let mut records: Vec<StepRecord> = Vec::with_capacity(desc.horizon);
    loop {
        let observations = desc
            .actors
            .iter()
            .map(|a| env.observe(&state, *a))
            .collect::<Result<Vec<_>>>()?;
        let masks = desc
            .actors
            .iter()
            .map(|a| env.available_actions(&state, *a))
            .collect::<Result<Vec<_>>>()?;
        let prev = records.last();
        let mut joint = JointAction::new();
        for control in [adversaries, victims] {
            for (agent, action) in control.actions(&observations, &masks, prev, &mut explore)? {
                joint.set(agent, action);
            }
        }
        for (slot, agent) in desc.actors.iter().enumerate() {
            if joint.get(*agent).is_none() {
                let available: Vec<usize> =
                    (0..masks[slot].len()).filter(|&a| masks[slot][a]).collect();
                let a = *available
                    .choose(&mut random)
                    .ok_or_else(|| Error::Contract(format!("{agent} has no available action")))?;
                joint.set(*agent, a);
            }
        }
        let (next, outcome) = env.step(&state, &joint)?;
        let native_reward = env.native_reward(&state, &next, &outcome);
        records.push(StepRecord {
            observations,
            masks,
            joint_action: joint,
            failure_signals: outcome.failure_signals.clone(),
            native_reward,
            adversary_reward: 0.0,
            state_features: record_state.then(|| env.state_features(&state)),
            terminal: outcome.terminal,
        });
        state = next;
        if outcome.terminal {
            return Ok(EpisodeTrajectory {
                records,
                final_outcome: outcome,
                seed,
            });
        }
        if records.len() > desc.horizon {
            return Err(Error::Contract(format!(
                "{} ran past its horizon of {}",
                desc.name, desc.horizon
            )));
        }
    }
}

/// Victim wins out of a number of greedy evaluation episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct WinRate {
    pub wins: usize,
    pub episodes: usize,
}

impl WinRate {
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.wins as f64 / self.episodes as f64
        }
    }
}

/// Victim win rate over `episodes` evaluation episodes.
///
/// Episode `i` uses seed `derive_seed(master, EVAL_EPISODE, i)`, so every
/// evaluation with the same master seed faces the same start states. The
/// result does not depend on `workers`.
pub fn evaluate<E: Environment>(
    env: &E,
    adversaries: &Control,
    victims: &Control,
    master: u64,
    episodes: usize,
    workers: usize,
) -> Result<WinRate> {
    for c in [adversaries, victims] {
        if let Control::Learner { epsilon, .. } = c {
            if *epsilon != 0.0 {
                return Err(Error::Contract(
                    "evaluation runs greedy policies only".into(),
                ));
            }
        }
    }
    let one = |i: usize| -> Result<bool> {
        let seed = derive_seed(master, streams::EVAL_EPISODE, i as u64);
        Ok(run_episode(env, seed, adversaries, victims, false)?
            .final_outcome
            .victim_success)
    };
    let outcomes: Vec<bool> = if workers <= 1 {
        (0..episodes).map(one).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| {
            (0..episodes)
                .into_par_iter()
                .map(one)
                .collect::<Result<_>>()
        })?
    };
    Ok(WinRate {
        wins: outcomes.iter().filter(|w| **w).count(),
        episodes,
    })
}

pub(crate) fn check_party(control: &Control, party: PartyId) -> Result<()> {
    let agents = match control {
        Control::Random => return Ok(()),
        Control::Frozen(p) => p.agents(),
        Control::Learner { learner, .. } => learner.agents(),
    };
    if agents.iter().any(|a| a.party != party) {
        return Err(Error::Contract(format!(
            "policy for the {} party controls other agents",
            party.as_str()
        )));
    }
    Ok(())
}
