use rand::seq::IndexedRandom;
use rand::Rng;

use super::MASKED_Q;
use crate::error::{Error, Result};
use crate::mdp::ActionId;
use crate::neural::{Mlp, MlpCache};

/// Independent per-agent Q-network.
///
/// Input: the current observation, optionally the previous one, and a
/// one-hot encoding of the agent's previous action.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentQNet {
    pub net: Mlp,
    obs_dim: usize,
    n_actions: usize,
    frame_stack: usize,
}

impl AgentQNet {
    pub fn input_size(obs_dim: usize, n_actions: usize, frame_stack: usize) -> usize {
        obs_dim * frame_stack + n_actions
    }

    pub fn new<R: Rng + ?Sized>(
        name: &str,
        obs_dim: usize,
        n_actions: usize,
        frame_stack: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![Self::input_size(obs_dim, n_actions, frame_stack)];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions);
        Self {
            net: Mlp::new(name, &sizes, rng),
            obs_dim,
            n_actions,
            frame_stack,
        }
    }

    pub fn from_mlp(
        net: Mlp,
        obs_dim: usize,
        n_actions: usize,
        frame_stack: usize,
    ) -> Result<Self> {
        if net.input_size() != Self::input_size(obs_dim, n_actions, frame_stack)
            || net.output_size() != n_actions
        {
            return Err(Error::Structural(format!(
                "network {:?} does not fit obs {obs_dim}, actions {n_actions}, frames {frame_stack}",
                net.sizes()
            )));
        }
        Ok(Self {
            net,
            obs_dim,
            n_actions,
            frame_stack,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn frame_stack(&self) -> usize {
        self.frame_stack
    }

    /// Builds the network input. `prev_obs` is ignored without frame
    /// stacking; a missing previous frame or action encodes as zeros.
    pub fn build_input(
        &self,
        obs: &[f64],
        prev_obs: Option<&[f64]>,
        last_action: Option<ActionId>,
    ) -> Vec<f64> {
        let mut x = Vec::with_capacity(Self::input_size(
            self.obs_dim,
            self.n_actions,
            self.frame_stack,
        ));
        x.extend_from_slice(obs);
        if self.frame_stack > 1 {
            match prev_obs {
                Some(p) => x.extend_from_slice(p),
                None => x.extend(std::iter::repeat_n(0.0, self.obs_dim)),
            }
        }
        let base = x.len();
        x.extend(std::iter::repeat_n(0.0, self.n_actions));
        if let Some(a) = last_action {
            x[base + a] = 1.0;
        }
        x
    }

    /// Q-values with unavailable actions replaced by [`MASKED_Q`].
    pub fn q_values(&self, input: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        check_mask(mask, self.n_actions)?;
        let mut q = self.net.predict(input)?;
        apply_mask(&mut q, mask);
        Ok(q)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        self.net.forward(input)
    }
}

pub(crate) fn check_mask(mask: &[bool], n_actions: usize) -> Result<()> {
    if mask.len() != n_actions {
        return Err(Error::Structural(format!(
            "mask has {} entries for {n_actions} actions",
            mask.len()
        )));
    }
    if !mask.iter().any(|m| *m) {
        return Err(Error::Contract(
            "availability mask has no available action".into(),
        ));
    }
    Ok(())
}

pub(crate) fn apply_mask(q: &mut [f64], mask: &[bool]) {
    for (v, m) in q.iter_mut().zip(mask) {
        if !m {
            *v = MASKED_Q;
        }
    }
}

/// Per-action Q-values of `net` for `obs` (no history), masked.
pub fn agent_q_values(net: &AgentQNet, obs: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let input = net.build_input(obs, None, None);
    net.q_values(&input, mask)
}

/// Argmax over non-sentinel entries; ties go to the lowest action id.
pub fn greedy_action(q: &[f64]) -> ActionId {
    let mut best = 0;
    for (a, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = a;
        }
    }
    best
}

/// Epsilon-greedy choice: uniform over available (non-sentinel) actions
/// with probability `epsilon`, greedy otherwise.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> ActionId {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        let available: Vec<ActionId> = (0..q.len()).filter(|a| q[*a] > MASKED_Q).collect();
        if let Some(a) = available.choose(rng) {
            return *a;
        }
    }
    greedy_action(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Mlp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_gives_zero_q() {
        let net = AgentQNet::from_mlp(Mlp::zeros("q", &[3 + 4, 8, 4]), 3, 4, 1).unwrap();
        assert_eq!(
            agent_q_values(&net, &[0.1, 0.2, 0.3], &[true; 4]).unwrap(),
            vec![0.0; 4]
        );
    }

    #[test]
    fn single_available_action_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = AgentQNet::new("q", 3, 4, 1, &[8], &mut rng);
        let q = agent_q_values(&net, &[0.5, -0.5, 0.0], &[false, false, true, false]).unwrap();
        assert_eq!(greedy_action(&q), 2);
        assert_eq!(q[0], MASKED_Q);
    }

    #[test]
    fn empty_mask_is_contract_error() {
        let net = AgentQNet::from_mlp(Mlp::zeros("q", &[5, 2]), 3, 2, 1).unwrap();
        assert!(matches!(
            agent_q_values(&net, &[0.0; 3], &[false, false]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn matches_independent_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = AgentQNet::new("q", 2, 3, 1, &[4], &mut rng);
        let obs = [0.25, -0.75];
        let x = [0.25, -0.75, 0.0, 0.0, 0.0];
        let p = net.net.params();
        let mut h = [0.0; 4];
        for (i, hi) in h.iter_mut().enumerate() {
            let mut s = p[1].values[i];
            for j in 0..5 {
                s += p[0].values[i * 5 + j] * x[j];
            }
            *hi = s.max(0.0);
        }
        let q = agent_q_values(&net, &obs, &[true; 3]).unwrap();
        for a in 0..3 {
            let mut s = p[3].values[a];
            for i in 0..4 {
                s += p[2].values[a * 4 + i] * h[i];
            }
            assert!((q[a] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn input_layout() {
        let net = AgentQNet::from_mlp(Mlp::zeros("q", &[2 * 2 + 3, 3]), 2, 3, 2).unwrap();
        assert_eq!(
            net.build_input(&[0.1, 0.2], Some(&[0.3, 0.4]), Some(1)),
            vec![0.1, 0.2, 0.3, 0.4, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            net.build_input(&[0.1, 0.2], None, None),
            vec![0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(
            select_action(&[1.0, 3.0, 2.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)),
            1
        );
        assert_eq!(
            select_action(&[2.0, 2.0], 0.0, &mut ChaCha8Rng::seed_from_u64(0)),
            0
        );
        assert_eq!(greedy_action(&[MASKED_Q, -5.0, MASKED_Q]), 1);
    }

    #[test]
    fn uniform_exploration_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let q = [0.0, 1.0, MASKED_Q, 2.0, 3.0];
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[select_action(&q, 1.0, &mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for a in [0, 1, 3, 4] {
            assert!(
                (counts[a] as f64 - n as f64 * p).abs() < 3.0 * sigma,
                "{counts:?}"
            );
        }
    }
}
