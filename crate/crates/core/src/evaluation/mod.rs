//! Win-rate measurement and the desk-scale experiment grid.

use serde::Serialize;

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::training::{evaluate, Control, FrozenPolicy};

pub mod experiment;

pub use experiment::{
    run_experiment, ExperimentId, ExperimentOutput, ExperimentSpec, PointResult, TableRow,
    WinRateTable,
};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Wilson score interval `(center, half_width)` for `wins` out of `n`.
pub fn wilson_interval(wins: usize, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Config(
            "a win rate needs at least one episode".into(),
        ));
    }
    if wins > n {
        return Err(Error::Contract(format!("{wins} wins out of {n} episodes")));
    }
    let n = n as f64;
    let p = wins as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok((center, half))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WinRateEstimate {
    pub rate: f64,
    /// Half-width of the Wilson 95% interval.
    pub half_width: f64,
    pub wins: usize,
    pub episodes: usize,
}

impl WinRateEstimate {
    pub fn from_counts(wins: usize, episodes: usize) -> Result<Self> {
        let (_, half_width) = wilson_interval(wins, episodes)?;
        Ok(Self {
            rate: wins as f64 / episodes as f64,
            half_width,
            wins,
            episodes,
        })
    }

    /// Whether the two Wilson intervals overlap.
    pub fn overlaps(&self, other: &Self) -> bool {
        let (a, _) = wilson_interval(self.wins, self.episodes).unwrap_or((self.rate, 0.0));
        let (b, _) = wilson_interval(other.wins, other.episodes).unwrap_or((other.rate, 0.0));
        (a - b).abs() <= self.half_width + other.half_width
    }
}

/// What occupies the neutral slots during an evaluation.
#[derive(Clone, Copy, Debug)]
pub enum Neutrals<'a> {
    /// No neutral unit is spawned.
    Absent,
    /// Every neutral slot acts uniformly at random, as in victim training.
    Random,
    /// The given adversaries, greedy; slots they do not cover stay empty.
    Adversaries(&'a FrozenPolicy),
}

/// Greedy victim win rate with a Wilson interval.
pub fn evaluate_win_rate<E: Environment>(
    env: &E,
    victims: &FrozenPolicy,
    neutrals: Neutrals,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<WinRateEstimate> {
    if episodes == 0 {
        return Err(Error::Config(
            "evaluation needs at least one episode".into(),
        ));
    }
    let victims = Control::Frozen(victims);
    let win = match neutrals {
        Neutrals::Absent => evaluate(
            &env.with_deployed_adversaries(0),
            &Control::Random,
            &victims,
            seed,
            episodes,
            workers,
        )?,
        Neutrals::Random => evaluate(env, &Control::Random, &victims, seed, episodes, workers)?,
        Neutrals::Adversaries(p) => evaluate(
            &env.with_deployed_adversaries(p.len()),
            &Control::Frozen(p),
            &victims,
            seed,
            episodes,
            workers,
        )?,
    };
    WinRateEstimate::from_counts(win.wins, win.episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_success_boundary() {
        let e = WinRateEstimate::from_counts(200, 200).unwrap();
        assert_eq!(e.rate, 1.0);
        let z2 = WILSON_Z * WILSON_Z;
        let want = z2 / 400.0 / (1.0 + z2 / 200.0);
        assert!((e.half_width - want).abs() < 1e-15);
    }

    #[test]
    fn interval_matches_textbook_value() {
        // 8 of 10: Wilson 95% interval is about [0.4902, 0.9433]
        let (c, h) = wilson_interval(8, 10).unwrap();
        assert!((c - h - 0.4902).abs() < 1e-4);
        assert!((c + h - 0.9433).abs() < 1e-4);
    }

    #[test]
    fn zero_episodes_is_config_error() {
        assert!(matches!(wilson_interval(0, 0), Err(Error::Config(_))));
    }
}
