use rand::Rng;
use serde::Serialize;

use super::agent::{apply_mask, greedy_action, AgentQNet};
use super::buffer::ReplayBuffer;
use super::mixer::MixingNet;
use super::{Conditioning, QmixConfig};
use crate::error::{Error, Result};
use crate::mdp::{AgentId, EpisodeTrajectory};
use crate::neural::{clip_grad_norm, Adam, Checkpoint, Mlp, ParamTensor};

/// `r + gamma * next_q_tot`, with no bootstrap from terminal steps.
pub fn td_target(reward: f64, gamma: f64, terminal: bool, next_q_tot: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_q_tot
    }
}

/// One row of learner metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LearnerStats {
    pub learner_step: u64,
    pub loss: f64,
    pub transitions: usize,
    pub buffer_fill: usize,
    pub target_syncs: u64,
}

/// Learner for one party: online and target agent networks, online and
/// target mixer, and the optimizer over all online parameters.
#[derive(Clone, Debug)]
pub struct QmixLearner {
    config: QmixConfig,
    agents: Vec<AgentId>,
    /// Positions of `agents` in each record's observation list.
    slots: Vec<usize>,
    nets: Vec<AgentQNet>,
    target_nets: Vec<AgentQNet>,
    mixer: MixingNet,
    target_mixer: MixingNet,
    optimizer: Adam,
    steps: u64,
    syncs: u64,
}

impl QmixLearner {
    pub fn new<R: Rng + ?Sized>(
        config: QmixConfig,
        agents: Vec<AgentId>,
        slots: Vec<usize>,
        obs_dim: usize,
        n_actions: usize,
        state_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if agents.is_empty() || agents.len() != slots.len() {
            return Err(Error::Config(
                "a learner needs at least one agent and one slot per agent".into(),
            ));
        }
        let nets: Vec<AgentQNet> = agents
            .iter()
            .map(|a| {
                AgentQNet::new(
                    &format!("q{}", a.index),
                    obs_dim,
                    n_actions,
                    config.frame_stack,
                    &config.hidden,
                    rng,
                )
            })
            .collect();
        let cond_dim = match config.conditioning {
            Conditioning::Observations => obs_dim * agents.len(),
            Conditioning::State => state_dim,
        };
        let mixer = MixingNet::new(agents.len(), cond_dim, config.mixer_embed, rng);
        Ok(Self {
            optimizer: Adam::new(config.lr),
            target_nets: nets.clone(),
            target_mixer: mixer.clone(),
            config,
            agents,
            slots,
            nets,
            mixer,
            steps: 0,
            syncs: 0,
        })
    }

    pub fn config(&self) -> &QmixConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn nets(&self) -> &[AgentQNet] {
        &self.nets
    }

    pub fn mixer(&self) -> &MixingNet {
        &self.mixer
    }

    pub fn mixer_mut(&mut self) -> &mut MixingNet {
        &mut self.mixer
    }

    pub fn nets_mut(&mut self) -> &mut [AgentQNet] {
        &mut self.nets
    }

    pub fn learner_steps(&self) -> u64 {
        self.steps
    }

    pub fn target_syncs(&self) -> u64 {
        self.syncs
    }

    /// Copies online parameters into the target networks.
    pub fn sync_targets(&mut self) {
        for (t, o) in self.target_nets.iter_mut().zip(&self.nets) {
            t.net.copy_values_from(&o.net);
        }
        self.target_mixer.copy_values_from(&self.mixer);
        self.syncs += 1;
    }

    fn input(&self, k: usize, traj: &EpisodeTrajectory, t: usize) -> Vec<f64> {
        let slot = self.slots[k];
        let rec = &traj.records[t];
        let (prev, last) = if t > 0 {
            let p = &traj.records[t - 1];
            (
                Some(p.observations[slot].values()),
                p.joint_action.get(self.agents[k]),
            )
        } else {
            (None, None)
        };
        self.nets[k].build_input(rec.observations[slot].values(), prev, last)
    }

    fn conditioning(&self, traj: &EpisodeTrajectory, t: usize) -> Result<Vec<f64>> {
        match self.config.conditioning {
            Conditioning::Observations => Ok(traj.concat_observations(t, &self.slots)),
            Conditioning::State => traj.records[t].state_features.clone().ok_or_else(|| {
                Error::Mode("state-conditioned mixing needs recorded state features".into())
            }),
        }
    }

    fn action(&self, k: usize, traj: &EpisodeTrajectory, t: usize) -> Result<usize> {
        traj.records[t]
            .joint_action
            .get(self.agents[k])
            .ok_or_else(|| {
                Error::Structural(format!("record {t} has no action for {}", self.agents[k]))
            })
    }

    /// Greedy `Q_tot` of the target networks at step `t`: every agent takes
    /// its own masked argmax and the results are mixed.
    fn target_greedy_q_tot(&self, traj: &EpisodeTrajectory, t: usize) -> Result<f64> {
        let mut chosen = Vec::with_capacity(self.agents.len());
        for k in 0..self.agents.len() {
            let mut q = self.target_nets[k].net.predict(&self.input(k, traj, t))?;
            apply_mask(&mut q, &traj.records[t].masks[self.slots[k]]);
            chosen.push(q[greedy_action(&q)]);
        }
        self.target_mixer.mix(&chosen, &self.conditioning(traj, t)?)
    }

    /// Per-step TD targets for each episode of the batch.
    pub fn td_targets(
        &self,
        batch: &[&EpisodeTrajectory],
        rewards: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        if batch.len() != rewards.len() {
            return Err(Error::Structural(format!(
                "{} episodes but {} reward sequences",
                batch.len(),
                rewards.len()
            )));
        }
        let mut out = Vec::with_capacity(batch.len());
        for (traj, r) in batch.iter().zip(rewards) {
            if r.len() != traj.len() {
                return Err(Error::Structural(format!(
                    "episode of length {} has {} rewards",
                    traj.len(),
                    r.len()
                )));
            }
            let mut y = Vec::with_capacity(traj.len());
            for t in 0..traj.len() {
                let terminal = traj.records[t].terminal || t + 1 == traj.len();
                let next = if terminal {
                    0.0
                } else {
                    self.target_greedy_q_tot(traj, t + 1)?
                };
                y.push(td_target(r[t], self.config.gamma, terminal, next));
            }
            out.push(y);
        }
        Ok(out)
    }

    /// `Q_tot` of the online networks for the actions actually taken.
    pub fn q_tot_taken(&self, traj: &EpisodeTrajectory, t: usize) -> Result<f64> {
        let mut q = Vec::with_capacity(self.agents.len());
        for k in 0..self.agents.len() {
            let v = self.nets[k].net.predict(&self.input(k, traj, t))?;
            q.push(v[self.action(k, traj, t)?]);
        }
        self.mixer.mix(&q, &self.conditioning(traj, t)?)
    }

    /// Sum over the batch of squared TD errors, with gradients accumulated
    /// into the online parameters. No optimizer step.
    pub fn loss_and_grad(
        &mut self,
        batch: &[&EpisodeTrajectory],
        targets: &[Vec<f64>],
    ) -> Result<(f64, usize)> {
        let mut loss = 0.0;
        let mut count = 0;
        let n = self.agents.len();
        for (traj, y) in batch.iter().zip(targets) {
            for t in 0..traj.len() {
                let mut caches = Vec::with_capacity(n);
                let mut q = Vec::with_capacity(n);
                let mut acts = Vec::with_capacity(n);
                for k in 0..n {
                    let (v, cache) = self.nets[k].forward(&self.input(k, traj, t))?;
                    let a = self.action(k, traj, t)?;
                    q.push(v[a]);
                    acts.push(a);
                    caches.push(cache);
                }
                let cond = self.conditioning(traj, t)?;
                let (q_tot, mix_cache) = self.mixer.forward(&q, &cond)?;
                let err = y[t] - q_tot;
                loss += err * err;
                count += 1;
                let dq = self.mixer.backward(&mix_cache, -2.0 * err)?;
                for k in 0..n {
                    let mut up = vec![0.0; self.nets[k].n_actions()];
                    up[acts[k]] = dq[k];
                    self.nets[k].net.backward(&caches[k], &up)?;
                }
            }
        }
        Ok((loss, count))
    }

    fn online_params(&mut self) -> Vec<&mut ParamTensor> {
        let Self { nets, mixer, .. } = self;
        nets.iter_mut()
            .flat_map(|n| n.net.params_mut().iter_mut())
            .chain(mixer.params_mut())
            .collect()
    }

    fn zero_grads(&mut self) {
        for net in &mut self.nets {
            net.net
                .params_mut()
                .iter_mut()
                .for_each(ParamTensor::zero_grad);
        }
        self.mixer
            .params_mut()
            .into_iter()
            .for_each(ParamTensor::zero_grad);
    }

    /// One gradient step on the given episodes and per-step rewards.
    pub fn train_on_batch(
        &mut self,
        batch: &[&EpisodeTrajectory],
        rewards: &[Vec<f64>],
    ) -> Result<(f64, usize)> {
        let targets = self.td_targets(batch, rewards)?;
        let (loss, count) = self.loss_and_grad(batch, &targets)?;
        if !loss.is_finite() {
            self.zero_grads();
            return Err(Error::fault("q_tot", format!("non-finite TD loss {loss}")));
        }
        if let Some(max) = self.config.grad_clip {
            clip_grad_norm(self.online_params(), max);
        }
        let params = {
            let Self { nets, mixer, .. } = self;
            nets.iter_mut()
                .flat_map(|n| n.net.params_mut().iter_mut())
                .chain(mixer.params_mut())
                .collect::<Vec<_>>()
        };
        self.optimizer.update(params)?;
        self.steps += 1;
        if self.steps.is_multiple_of(self.config.target_sync) {
            self.sync_targets();
        }
        Ok((loss, count))
    }

    /// Samples `batch_size` episodes and takes one gradient step.
    ///
    /// `reward_fn` maps an episode to this party's per-step rewards, so
    /// rewards can be recomputed with the current reward model.
    pub fn learner_step<R, F>(
        &mut self,
        buffer: &ReplayBuffer,
        rng: &mut R,
        mut reward_fn: F,
    ) -> Result<LearnerStats>
    where
        R: Rng + ?Sized,
        F: FnMut(&EpisodeTrajectory) -> Result<Vec<f64>>,
    {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        let rewards = batch
            .iter()
            .map(|e| reward_fn(e))
            .collect::<Result<Vec<_>>>()?;
        let (loss, transitions) = self.train_on_batch(&batch, &rewards)?;
        Ok(LearnerStats {
            learner_step: self.steps,
            loss,
            transitions,
            buffer_fill: buffer.len(),
            target_syncs: self.syncs,
        })
    }

    /// Stores networks, mixer and optimizer under `prefix`.
    pub fn write_to(&self, ck: &mut Checkpoint, prefix: &str) {
        write_agent_nets(ck, prefix, &self.nets);
        ck.meta.insert(
            format!("{prefix}.mixer.n_agents"),
            self.mixer.n_agents().to_string(),
        );
        ck.meta.insert(
            format!("{prefix}.mixer.cond_dim"),
            self.mixer.cond_dim().to_string(),
        );
        ck.meta.insert(
            format!("{prefix}.mixer.embed"),
            self.mixer.embed().to_string(),
        );
        for p in self.mixer.params() {
            let mut p = p.clone();
            p.name = format!("{prefix}.{}", p.name);
            ck.tensors.push(p);
        }
        ck.optimizers
            .push((format!("{prefix}.adam"), self.optimizer.clone()));
    }

    /// Overwrites parameters and optimizer state from a checkpoint written
    /// by [`Self::write_to`]. Target networks are synchronized afterwards.
    pub fn read_from(&mut self, ck: &Checkpoint, prefix: &str) -> Result<()> {
        let nets = read_agent_nets(ck, prefix)?;
        if nets.len() != self.nets.len()
            || nets
                .iter()
                .zip(&self.nets)
                .any(|(a, b)| a.net.sizes() != b.net.sizes())
        {
            return Err(Error::Structural(format!(
                "checkpoint `{prefix}` networks do not match this learner"
            )));
        }
        self.nets = nets;
        let mixer: Vec<ParamTensor> = ck
            .tensors_with_prefix(&format!("{prefix}.mixer."))
            .into_iter()
            .map(|mut p| {
                p.name = p.name[prefix.len() + 1..].to_string();
                p
            })
            .collect();
        self.mixer.load_values(&mixer)?;
        if let Some(opt) = ck.optimizer(&format!("{prefix}.adam")) {
            self.optimizer = opt.clone();
        }
        self.sync_targets();
        Ok(())
    }
}

pub(crate) fn write_agent_nets(ck: &mut Checkpoint, prefix: &str, nets: &[AgentQNet]) {
    ck.meta
        .insert(format!("{prefix}.agents"), nets.len().to_string());
    for (k, net) in nets.iter().enumerate() {
        let sizes: Vec<String> = net.net.sizes().iter().map(|s| s.to_string()).collect();
        ck.meta
            .insert(format!("{prefix}.q{k}.sizes"), sizes.join(","));
        ck.meta
            .insert(format!("{prefix}.q{k}.obs_dim"), net.obs_dim().to_string());
        ck.meta.insert(
            format!("{prefix}.q{k}.frame_stack"),
            net.frame_stack().to_string(),
        );
        for (i, p) in net.net.params().iter().enumerate() {
            let mut p = p.clone();
            p.name = format!("{prefix}.q{k}.{i}");
            ck.tensors.push(p);
        }
    }
}

pub(crate) fn read_agent_nets(ck: &Checkpoint, prefix: &str) -> Result<Vec<AgentQNet>> {
    let meta = |k: String| -> Result<&String> {
        ck.meta
            .get(&k)
            .ok_or_else(|| Error::Lookup(format!("checkpoint lacks `{k}`")))
    };
    let bad = |k: &str| Error::Parse {
        line: 0,
        detail: format!("bad checkpoint field `{k}`"),
    };
    let count: usize = meta(format!("{prefix}.agents"))?
        .parse()
        .map_err(|_| bad("agents"))?;
    let mut nets = Vec::with_capacity(count);
    for k in 0..count {
        let sizes: Vec<usize> = meta(format!("{prefix}.q{k}.sizes"))?
            .split(',')
            .map(|s| s.parse().map_err(|_| bad("sizes")))
            .collect::<Result<_>>()?;
        let obs_dim: usize = meta(format!("{prefix}.q{k}.obs_dim"))?
            .parse()
            .map_err(|_| bad("obs_dim"))?;
        let frames: usize = meta(format!("{prefix}.q{k}.frame_stack"))?
            .parse()
            .map_err(|_| bad("frame_stack"))?;
        let params = (0..2 * (sizes.len() - 1))
            .map(|i| {
                let mut p = ck.tensor(&format!("{prefix}.q{k}.{i}"))?.clone();
                p.name = format!("q{k}.{}{}", if i % 2 == 0 { "w" } else { "b" }, i / 2);
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        let mlp = Mlp::from_params(&sizes, params)?;
        nets.push(AgentQNet::from_mlp(
            mlp,
            obs_dim,
            *sizes.last().unwrap(),
            frames,
        )?);
    }
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{JointAction, Observation, StepOutcome, StepRecord};
    use crate::reward::FailureSignalVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_examples() {
        assert_eq!(td_target(5.0, 0.99, true, 100.0), 5.0);
        assert!((td_target(1.0, 0.9, false, 2.0) - 2.8).abs() < 1e-15);
        assert_eq!(td_target(3.0, 0.0, false, 7.0), 3.0);
    }

    fn record(obs: Vec<f64>, action: usize, agent: AgentId, terminal: bool) -> StepRecord {
        let mut ja = JointAction::new();
        ja.set(agent, action);
        StepRecord {
            observations: vec![Observation::new(obs)],
            masks: vec![vec![true, true]],
            joint_action: ja,
            failure_signals: FailureSignalVector::zeros(1),
            native_reward: 0.0,
            adversary_reward: 0.0,
            state_features: None,
            terminal,
        }
    }

    fn tiny_config() -> QmixConfig {
        QmixConfig {
            hidden: vec![16],
            mixer_embed: 4,
            gamma: 0.9,
            lr: 3e-3,
            batch_size: 8,
            buffer_capacity: 500,
            target_sync: 50,
            ..QmixConfig::default()
        }
    }

    /// Two-state chain. In state 0, action 0 stays (reward 0) and action 1
    /// moves to state 1 (reward 0.5). In state 1 both actions end the
    /// episode, with rewards 1 and 0.
    fn chain_episode(rng: &mut ChaCha8Rng, agent: AgentId) -> (EpisodeTrajectory, Vec<f64>) {
        let mut records = Vec::new();
        let mut rewards = Vec::new();
        let mut state = 0;
        loop {
            let a: usize = rng.random_range(0..2);
            let obs = if state == 0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            };
            let (r, next, terminal) = match (state, a) {
                (0, 0) => (0.0, 0, false),
                (0, _) => (0.5, 1, false),
                (_, 0) => (1.0, 1, true),
                _ => (0.0, 1, true),
            };
            let terminal = terminal || records.len() == 49;
            records.push(record(obs, a, agent, terminal));
            rewards.push(r);
            state = next;
            if terminal {
                break;
            }
        }
        let outcome = StepOutcome {
            terminal: true,
            victim_success: true,
            victim_failed: false,
            failure_signals: FailureSignalVector::zeros(1),
        };
        (
            EpisodeTrajectory {
                records,
                final_outcome: outcome,
                seed: 0,
            },
            rewards,
        )
    }

    #[test]
    fn converges_on_two_state_chain() {
        let agent = AgentId::adversary(0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut learner =
            QmixLearner::new(tiny_config(), vec![agent], vec![0], 2, 2, 0, &mut rng).unwrap();
        let mut buffer = ReplayBuffer::new(500).unwrap();
        let mut rewards = std::collections::HashMap::new();
        for i in 0..500u64 {
            let (mut ep, r) = chain_episode(&mut rng, agent);
            ep.seed = i;
            rewards.insert(i, r);
            buffer.push(ep);
        }
        // value iteration by hand: Q(1,0)=1, Q(1,1)=0, Q(0,1)=0.5+0.9*1, Q(0,0)=0.9*V(0)
        let q01 = 0.5 + 0.9;
        let want = [[0.9 * q01, q01], [1.0, 0.0]];
        let mut worst = f64::INFINITY;
        for _ in 0..5000 {
            learner
                .learner_step(&buffer, &mut rng, |e| Ok(rewards[&e.seed].clone()))
                .unwrap();
            if learner.learner_steps().is_multiple_of(250) {
                worst = 0.0;
                for (s, obs) in [vec![1.0, 0.0], vec![0.0, 1.0]].iter().enumerate() {
                    for a in 0..2 {
                        // evaluate with the previous action that leads into state s
                        let last = if s == 0 { None } else { Some(1) };
                        let prev = if s == 0 { None } else { Some(&[1.0, 0.0][..]) };
                        let x = learner.nets()[0].build_input(obs, prev, last);
                        let q = learner.nets()[0].net.predict(&x).unwrap()[a];
                        let qt = learner.mixer().mix(&[q], obs).unwrap();
                        worst = f64::max(worst, (qt - want[s][a]).abs());
                    }
                }
                if worst < 0.05 {
                    break;
                }
            }
        }
        assert!(worst < 0.05, "max error {worst}");
    }

    #[test]
    fn zero_loss_at_fixed_point() {
        let agent = AgentId::adversary(0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut learner =
            QmixLearner::new(tiny_config(), vec![agent], vec![0], 2, 2, 0, &mut rng).unwrap();
        let (ep, _) = chain_episode(&mut rng, agent);
        let targets: Vec<f64> = (0..ep.len())
            .map(|t| learner.q_tot_taken(&ep, t).unwrap())
            .collect();
        let (loss, _) = learner.loss_and_grad(&[&ep], &[targets]).unwrap();
        assert!(loss < 1e-24);
    }

    #[test]
    fn checkpoint_round_trip() {
        let agents = vec![AgentId::adversary(0), AgentId::adversary(1)];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a =
            QmixLearner::new(tiny_config(), agents.clone(), vec![0, 1], 3, 2, 0, &mut rng).unwrap();
        let mut b = QmixLearner::new(tiny_config(), agents, vec![0, 1], 3, 2, 0, &mut rng).unwrap();
        let mut ck = Checkpoint::new();
        a.write_to(&mut ck, "adversary");
        let ck = Checkpoint::from_text(&ck.to_text()).unwrap();
        b.read_from(&ck, "adversary").unwrap();
        for (x, y) in a.nets().iter().zip(b.nets()) {
            assert_eq!(x.net.params(), y.net.params());
        }
        assert_eq!(a.mixer().params(), b.mixer().params());
    }
}
