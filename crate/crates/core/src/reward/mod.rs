//! Adversary rewards built from failure paths.
//!
//! Every environment reports, per step, how far each of its failure paths
//! progressed ([`FailureSignalVector`]). A manual [`WeightVector`] folds the
//! paths into a scalar. On top of that sit two reward sources for the
//! adversary party: a rule-based calculator (terminal outcome reward plus,
//! in the oracle-only baseline, weighted immediate signals) and a learned
//! recurrent [`RewardModel`] that spreads the terminal outcome over steps
//! using only adversary observations.

use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::mdp::{JointAction, StepOutcome};

pub mod model;

pub use model::{episode_inputs, RewardModel, RewardModelConfig};

/// Per-step progress along each failure path. Components are non-negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureSignalVector {
    components: Vec<f64>,
}

impl FailureSignalVector {
    pub fn new(components: Vec<f64>) -> Self {
        debug_assert!(
            components.iter().all(|c| *c >= 0.0),
            "negative failure signal {components:?}"
        );
        Self { components }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            components: vec![0.0; n],
        }
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `a * self + b * other`, for non-negative `a`, `b`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Structural(format!(
                "signal lengths {} and {} differ",
                self.len(),
                other.len()
            )));
        }
        if a < 0.0 || b < 0.0 {
            return Err(Error::Contract(
                "combination coefficients must be non-negative".into(),
            ));
        }
        Ok(Self::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }
}

/// Importance of each failure path. Non-negative with at least one
/// positive entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("weight vector is empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::Validation(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `W · R`.
pub fn weighted_reward(w: &WeightVector, r: &FailureSignalVector) -> Result<f64> {
    if w.len() != r.len() {
        return Err(Error::Structural(format!(
            "weight vector has {} entries but signal vector has {}",
            w.len(),
            r.len()
        )));
    }
    Ok(w.weights
        .iter()
        .zip(&r.components)
        .map(|(a, b)| a * b)
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeSource {
    VictimSuccess,
    VictimFailure,
}

/// Episode-level ground truth for the adversary party.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReward {
    pub value: f64,
    pub source: OutcomeSource,
}

/// Terminal reward: 0 when the victims succeed, `r_fail` when they fail.
pub fn rule_based_terminal_reward(outcome: &StepOutcome, r_fail: f64) -> Result<GroundTruthReward> {
    if !outcome.terminal {
        return Err(Error::Contract(
            "terminal reward requested for a non-terminal outcome".into(),
        ));
    }
    if !(r_fail > 0.0) {
        return Err(Error::Validation(format!(
            "r_fail must be positive, got {r_fail}"
        )));
    }
    if outcome.victim_success {
        Ok(GroundTruthReward {
            value: 0.0,
            source: OutcomeSource::VictimSuccess,
        })
    } else if outcome.victim_failed {
        Ok(GroundTruthReward {
            value: r_fail,
            source: OutcomeSource::VictimFailure,
        })
    } else {
        Err(Error::Contract(
            "terminal outcome is neither success nor failure".into(),
        ))
    }
}

/// Whether the caller may read simulator state at step time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateAccess {
    /// Evaluation baselines only: the simulator is open to inspection.
    Oracle,
    /// Realistic attacker: only adversary observations are available.
    Deployment,
}

/// Which immediate rewards the rule-based calculator emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuleMode {
    /// Terminal outcome only; every immediate reward is zero.
    GroundTruth,
    /// Weighted failure-path signals every step (needs global state).
    Baseline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleBasedCalculator {
    pub weights: WeightVector,
    pub r_fail: f64,
    pub mode: RuleMode,
    pub access: StateAccess,
}

impl RuleBasedCalculator {
    pub fn ground_truth(weights: WeightVector, r_fail: f64) -> Self {
        Self {
            weights,
            r_fail,
            mode: RuleMode::GroundTruth,
            access: StateAccess::Deployment,
        }
    }

    /// Oracle-only baseline emitting weighted immediate signals.
    pub fn baseline(weights: WeightVector, r_fail: f64) -> Self {
        Self {
            weights,
            r_fail,
            mode: RuleMode::Baseline,
            access: StateAccess::Oracle,
        }
    }

    pub fn terminal_reward(&self, outcome: &StepOutcome) -> Result<GroundTruthReward> {
        rule_based_terminal_reward(outcome, self.r_fail)
    }

    /// Immediate reward of one transition.
    pub fn immediate_reward<E: Environment>(
        &self,
        env: &E,
        prev: &E::State,
        action: &JointAction,
        next: &E::State,
    ) -> Result<f64> {
        match self.mode {
            RuleMode::GroundTruth => Ok(0.0),
            RuleMode::Baseline => {
                if self.access != StateAccess::Oracle {
                    return Err(Error::Mode(
                        "immediate failure-path rewards need global state, unavailable in deployment".into(),
                    ));
                }
                let signals = env.failure_signals(prev, action, next)?;
                weighted_reward(&self.weights, &signals)
            }
        }
    }

    /// Immediate reward from signals the caller already holds.
    pub fn immediate_from_signals(&self, signals: &FailureSignalVector) -> Result<f64> {
        match self.mode {
            RuleMode::GroundTruth => Ok(0.0),
            RuleMode::Baseline if self.access != StateAccess::Oracle => Err(Error::Mode(
                "immediate failure-path rewards need global state, unavailable in deployment"
                    .into(),
            )),
            RuleMode::Baseline => weighted_reward(&self.weights, signals),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(v: &[f64]) -> FailureSignalVector {
        FailureSignalVector::new(v.to_vec())
    }

    #[test]
    fn weighted_reward_examples() {
        let w = WeightVector::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(weighted_reward(&w, &sig(&[0.5, 9.0])).unwrap(), 0.5);
        let w = WeightVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(weighted_reward(&w, &sig(&[2.0, 4.0, 8.0])).unwrap(), 3.0);
        assert_eq!(
            weighted_reward(&w, &FailureSignalVector::zeros(3)).unwrap(),
            0.0
        );
    }

    #[test]
    fn length_mismatch_is_structural() {
        let w = WeightVector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            weighted_reward(&w, &sig(&[1.0])),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(matches!(
            WeightVector::new(vec![0.0, 0.0]),
            Err(Error::Validation(_))
        ));
        assert!(WeightVector::new(vec![-0.1, 1.0]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn terminal_rules() {
        let done = |s: bool| StepOutcome {
            terminal: true,
            victim_success: s,
            victim_failed: !s,
            failure_signals: FailureSignalVector::zeros(2),
        };
        let gt = rule_based_terminal_reward(&done(true), 20.0).unwrap();
        assert_eq!((gt.value, gt.source), (0.0, OutcomeSource::VictimSuccess));
        let gt = rule_based_terminal_reward(&done(false), 20.0).unwrap();
        assert_eq!((gt.value, gt.source), (20.0, OutcomeSource::VictimFailure));
        let running = StepOutcome::running(FailureSignalVector::zeros(2));
        assert!(matches!(
            rule_based_terminal_reward(&running, 20.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn baseline_needs_oracle_access() {
        let w = WeightVector::new(vec![0.7, 0.3]).unwrap();
        let mut calc = RuleBasedCalculator::baseline(w.clone(), 20.0);
        let s = sig(&[0.0, 1.0 / 60.0]);
        assert!((calc.immediate_from_signals(&s).unwrap() - 0.005).abs() < 1e-15);
        calc.access = StateAccess::Deployment;
        assert!(matches!(
            calc.immediate_from_signals(&s),
            Err(Error::Mode(_))
        ));
        let gt = RuleBasedCalculator::ground_truth(w, 20.0);
        assert_eq!(gt.immediate_from_signals(&s).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn weighted_reward_is_linear(
            w in prop::collection::vec(0.0f64..5.0, 3),
            r1 in prop::collection::vec(0.0f64..5.0, 3),
            r2 in prop::collection::vec(0.0f64..5.0, 3),
            a in 0.0f64..3.0,
            b in 0.0f64..3.0,
        ) {
            let mut w = w;
            w[0] += 0.1;
            let w = WeightVector::new(w).unwrap();
            let (r1, r2) = (sig(&r1), sig(&r2));
            let lhs = weighted_reward(&w, &r1.combine(a, &r2, b).unwrap()).unwrap();
            let rhs = a * weighted_reward(&w, &r1).unwrap() + b * weighted_reward(&w, &r2).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            prop_assert!(lhs >= 0.0);
        }
    }
}
