use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::{product, PolicyTable, TabularMdp};

/// Seeds of the random instances used by the property suites.
pub const SUITE_SEEDS: [u64; 20] = [
    11, 23, 37, 41, 53, 67, 79, 83, 97, 101, 113, 127, 131, 149, 151, 163, 173, 181, 191, 199,
];

/// Sizes of a random instance.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceShape {
    pub n_states: usize,
    pub adversary_actions: Vec<usize>,
    pub victim_actions: Vec<usize>,
    pub third_actions: Vec<usize>,
    pub n_paths: usize,
    pub gamma_range: (f64, f64),
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            n_states: 6,
            adversary_actions: vec![2, 3],
            victim_actions: vec![2],
            third_actions: vec![2],
            n_paths: 3,
            gamma_range: (0.5, 0.95),
        }
    }
}

/// A point drawn from the flat Dirichlet over `n` outcomes.
pub fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

fn policy_table<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> PolicyTable {
    (0..n_states)
        .map(|_| dirichlet_row(rng, n_actions))
        .collect()
}

/// Dirichlet transition rows and policies, rewards uniform in `[0, 1]`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, shape: &InstanceShape) -> TabularMdp {
    let ns = shape.n_states;
    let nj = product(&shape.adversary_actions)
        * product(&shape.victim_actions)
        * product(&shape.third_actions);
    let gamma = rng.random_range(shape.gamma_range.0..shape.gamma_range.1);
    let transitions = (0..ns)
        .map(|_| (0..nj).map(|_| dirichlet_row(rng, ns)).collect())
        .collect();
    let rewards = (0..ns)
        .map(|_| {
            (0..nj)
                .map(|_| (0..shape.n_paths).map(|_| rng.random::<f64>()).collect())
                .collect()
        })
        .collect();
    let victim_policies = shape
        .victim_actions
        .iter()
        .map(|&n| policy_table(rng, ns, n))
        .collect();
    let third_policies = shape
        .third_actions
        .iter()
        .map(|&n| policy_table(rng, ns, n))
        .collect();
    TabularMdp {
        n_states: ns,
        adversary_actions: shape.adversary_actions.clone(),
        victim_actions: shape.victim_actions.clone(),
        third_actions: shape.third_actions.clone(),
        n_paths: shape.n_paths,
        gamma,
        transitions,
        rewards,
        victim_policies,
        third_policies,
    }
}

/// Stochastic adversary joint policy `pi[s][a]`.
pub fn random_adversary_policy<R: Rng + ?Sized>(rng: &mut R, mdp: &TabularMdp) -> PolicyTable {
    policy_table(rng, mdp.n_states, mdp.n_adversary_joint())
}

/// Non-negative weights with at least one positive entry.
pub fn random_weights<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    if w.iter().all(|x| *x == 0.0) {
        w[0] = 1.0;
    }
    w
}
