use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::EpisodeTrajectory;
use crate::neural::{Adam, Checkpoint, Lstm, ParamTensor, RecurrentState};

#[derive(Clone, Debug, PartialEq)]
pub struct RewardModelConfig {
    /// Length of the concatenated adversary observation.
    pub input: usize,
    pub hidden: usize,
}

/// Recurrent per-step reward estimator trained so that the sum of its
/// estimates over an episode matches the episode's ground-truth reward.
///
/// The input at step `t` is the concatenation of every adversary-party
/// observation in adversary index order. Recurrent state lives only inside
/// one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    cell: Lstm,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(config: &RewardModelConfig, rng: &mut R) -> Self {
        Self {
            cell: Lstm::new("reward", config.input, config.hidden, rng),
        }
    }

    pub fn zeros(config: &RewardModelConfig) -> Self {
        Self {
            cell: Lstm::zeros("reward", config.input, config.hidden),
        }
    }

    pub fn from_params(config: &RewardModelConfig, params: Vec<ParamTensor>) -> Result<Self> {
        Ok(Self {
            cell: Lstm::from_params(config.input, config.hidden, params)?,
        })
    }

    pub fn config(&self) -> RewardModelConfig {
        RewardModelConfig {
            input: self.cell.input_size(),
            hidden: self.cell.hidden_size(),
        }
    }

    pub fn params(&self) -> &[ParamTensor] {
        self.cell.params()
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        self.cell.params_mut()
    }

    /// Fresh recurrent state for a new episode.
    pub fn initial_state(&self) -> RecurrentState {
        self.cell.initial_state()
    }

    pub fn estimate_step(
        &self,
        adversary_obs: &[f64],
        state: &RecurrentState,
    ) -> Result<(f64, RecurrentState)> {
        self.cell.predict(adversary_obs, state)
    }

    /// Per-step estimates of one episode, starting from a fresh state.
    pub fn estimate_episode(&self, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut state = self.initial_state();
        let mut out = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (r, next) = self.cell.predict(x, &state)?;
            out.push(r);
            state = next;
        }
        Ok(out)
    }

    /// Mean over episodes of `(gt - sum_t estimate_t)^2`, accumulating its
    /// gradient into the parameter gradients.
    pub fn loss_and_grad(
        &mut self,
        episodes: &[Vec<Vec<f64>>],
        ground_truths: &[f64],
    ) -> Result<f64> {
        if episodes.len() != ground_truths.len() {
            return Err(Error::Structural(format!(
                "{} episodes but {} ground-truth values",
                episodes.len(),
                ground_truths.len()
            )));
        }
        if episodes.is_empty() {
            return Ok(0.0);
        }
        let n = episodes.len() as f64;
        let mut loss = 0.0;
        for (inputs, &gt) in episodes.iter().zip(ground_truths) {
            let mut state = self.initial_state();
            let mut caches = Vec::with_capacity(inputs.len());
            let mut total = 0.0;
            for x in inputs {
                let (r, next, cache) = self.cell.step(x, &state)?;
                total += r;
                caches.push(cache);
                state = next;
            }
            let err = gt - total;
            loss += err * err / n;
            let d = -2.0 * err / n;
            self.cell
                .backward_sequence(&caches, &vec![d; caches.len()])?;
        }
        Ok(loss)
    }

    /// Loss without gradients.
    pub fn loss(&self, episodes: &[Vec<Vec<f64>>], ground_truths: &[f64]) -> Result<f64> {
        if episodes.len() != ground_truths.len() {
            return Err(Error::Structural(
                "episode and ground-truth counts differ".into(),
            ));
        }
        if episodes.is_empty() {
            return Ok(0.0);
        }
        let mut loss = 0.0;
        for (inputs, &gt) in episodes.iter().zip(ground_truths) {
            let total: f64 = self.estimate_episode(inputs)?.iter().sum();
            loss += (gt - total).powi(2);
        }
        Ok(loss / episodes.len() as f64)
    }

    /// One optimizer step on the batch; returns the pre-update loss.
    pub fn update(
        &mut self,
        episodes: &[Vec<Vec<f64>>],
        ground_truths: &[f64],
        opt: &mut Adam,
    ) -> Result<f64> {
        let loss = self.loss_and_grad(episodes, ground_truths)?;
        if !loss.is_finite() {
            self.params_mut()
                .iter_mut()
                .for_each(ParamTensor::zero_grad);
            return Err(Error::fault(
                "reward",
                format!("non-finite reward-model loss {loss}"),
            ));
        }
        opt.update(self.cell.params_mut())?;
        Ok(loss)
    }

    pub fn write_to(&self, ck: &mut Checkpoint) {
        ck.meta
            .insert("reward.input".into(), self.cell.input_size().to_string());
        ck.meta
            .insert("reward.hidden".into(), self.cell.hidden_size().to_string());
        ck.tensors.extend(self.params().iter().cloned());
    }

    pub fn read_from(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| -> Result<usize> {
            ck.meta
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Lookup(format!("checkpoint lacks `{k}`")))
        };
        let config = RewardModelConfig {
            input: get("reward.input")?,
            hidden: get("reward.hidden")?,
        };
        Self::from_params(&config, ck.tensors_with_prefix("reward."))
    }
}

/// Per-step reward-model inputs of a trajectory: adversary observations
/// concatenated in adversary index order.
pub fn episode_inputs(traj: &EpisodeTrajectory, adversary_slots: &[usize]) -> Vec<Vec<f64>> {
    (0..traj.len())
        .map(|t| traj.concat_observations(t, adversary_slots))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_episode(rng: &mut ChaCha8Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_model_estimates_zero() {
        let m = RewardModel::zeros(&RewardModelConfig {
            input: 4,
            hidden: 3,
        });
        let ep = vec![vec![0.5; 4]; 6];
        assert_eq!(m.estimate_episode(&ep).unwrap(), vec![0.0; 6]);
    }

    #[test]
    fn replay_gives_identical_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = RewardModel::new(
            &RewardModelConfig {
                input: 4,
                hidden: 6,
            },
            &mut rng,
        );
        let ep = random_episode(&mut rng, 10, 4);
        let a = m.estimate_episode(&ep).unwrap();
        let mut state = m.initial_state();
        let mut sum = 0.0;
        for x in &ep {
            let (r, n) = m.estimate_step(x, &state).unwrap();
            sum += r;
            state = n;
        }
        assert_eq!(a, m.estimate_episode(&ep).unwrap());
        assert!((a.iter().sum::<f64>() - sum).abs() < 1e-12);
    }

    #[test]
    fn layout_mismatch_is_structural() {
        let m = RewardModel::zeros(&RewardModelConfig {
            input: 4,
            hidden: 3,
        });
        assert!(matches!(
            m.estimate_step(&[0.0; 3], &m.initial_state()),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn loss_is_zero_at_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = RewardModel::new(
            &RewardModelConfig {
                input: 2,
                hidden: 3,
            },
            &mut rng,
        );
        let eps: Vec<_> = (0..3).map(|_| random_episode(&mut rng, 4, 2)).collect();
        let gts: Vec<f64> = eps
            .iter()
            .map(|e| m.estimate_episode(e).unwrap().iter().sum())
            .collect();
        let loss = m.loss_and_grad(&eps, &gts).unwrap();
        assert!(loss.abs() < 1e-24);
        assert!(m
            .params()
            .iter()
            .all(|p| p.grad.iter().all(|g| g.abs() < 1e-12)));
    }

    #[test]
    fn episode_sum_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = RewardModelConfig {
            input: 3,
            hidden: 4,
        };
        let mut m = RewardModel::new(&cfg, &mut rng);
        let eps: Vec<_> = (0..3).map(|k| random_episode(&mut rng, 2 + k, 3)).collect();
        let gts = vec![1.0, 0.0, 2.5];
        m.loss_and_grad(&eps, &gts).unwrap();
        let analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad.clone()).collect();
        let report = grad_check(m.params(), &analytic, |p| {
            RewardModel::from_params(&cfg, p.to_vec())
                .unwrap()
                .loss(&eps, &gts)
                .unwrap()
        });
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = RewardModel::new(
            &RewardModelConfig {
                input: 3,
                hidden: 2,
            },
            &mut rng,
        );
        let mut ck = Checkpoint::new();
        m.write_to(&mut ck);
        let back = RewardModel::read_from(&Checkpoint::from_text(&ck.to_text()).unwrap()).unwrap();
        assert_eq!(back.params(), m.params());
    }
}
