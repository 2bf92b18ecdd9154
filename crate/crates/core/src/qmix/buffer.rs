use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::EpisodeTrajectory;

/// Fixed-capacity ring of whole episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: Vec<EpisodeTrajectory>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config(
                "replay buffer capacity must be positive".into(),
            ));
        }
        Ok(Self {
            capacity,
            episodes: Vec::with_capacity(capacity.min(4096)),
            next: 0,
            inserted: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Episodes inserted over the buffer's lifetime.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Inserts an episode, overwriting the oldest once full.
    pub fn push(&mut self, episode: EpisodeTrajectory) {
        if self.episodes.len() < self.capacity {
            self.episodes.push(episode);
        } else {
            self.episodes[self.next] = episode;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    /// `n` distinct episodes chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<&EpisodeTrajectory>> {
        if n > self.episodes.len() {
            return Err(Error::Contract(format!(
                "cannot sample {n} episodes from a buffer holding {}",
                self.episodes.len()
            )));
        }
        Ok(rand::seq::index::sample(rng, self.episodes.len(), n)
            .into_iter()
            .map(|i| &self.episodes[i])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeTrajectory> {
        self.episodes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::StepOutcome;
    use crate::reward::FailureSignalVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ep(seed: u64) -> EpisodeTrajectory {
        EpisodeTrajectory {
            records: Vec::new(),
            final_outcome: StepOutcome::running(FailureSignalVector::zeros(1)),
            seed,
        }
    }

    #[test]
    fn ring_never_exceeds_capacity() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for s in 0..7 {
            b.push(ep(s));
            assert!(b.len() <= 3);
        }
        let mut seeds: Vec<u64> = b.iter().map(|e| e.seed).collect();
        seeds.sort();
        assert_eq!(seeds, vec![4, 5, 6]);
        assert_eq!(b.inserted(), 7);
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut b = ReplayBuffer::new(10).unwrap();
        (0..10).for_each(|s| b.push(ep(s)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let mut s: Vec<u64> = b
                .sample(6, &mut rng)
                .unwrap()
                .iter()
                .map(|e| e.seed)
                .collect();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 6);
        }
        assert!(b.sample(11, &mut rng).is_err());
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(ReplayBuffer::new(0).is_err());
    }
}
