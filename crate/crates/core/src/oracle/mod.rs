//! Exact tabular machinery for tiny multi-party games.
//!
//! A [`TabularMdp`] holds the full joint transition tensor over adversary,
//! victim and third-party actions, vector-valued failure-path rewards and
//! fixed policies for the victim and third parties. Everything here is
//! independent of the neural code and is used to check, exactly:
//!
//! * that optimizing adversaries in the full game with fixed victims and
//!   third parties is the same problem as optimizing in the game with
//!   those parties marginalized out ([`value_iteration`] vs
//!   [`ReducedMdp::value_iteration`]);
//! * that evaluating a fixed adversary policy under the scalar reward
//!   `W·R` equals `W` dotted with the vector-valued evaluation
//!   ([`policy_evaluation`] vs [`vector_value_iteration`]);
//! * that per-agent argmaxes compose into the joint argmax of a monotone
//!   mixer ([`brute_force_joint_argmax`]).

use crate::error::{Error, Result};

pub mod argmax;
pub mod format;
pub mod random;
pub mod suite;

pub use argmax::{brute_force_joint_argmax, decentralized_argmax};
pub use random::{
    random_adversary_policy, random_instance, random_weights, InstanceShape, SUITE_SEEDS,
};

const ROW_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

/// Per-state action distributions of one agent: `policy[s][a]`.
pub type PolicyTable = Vec<Vec<f64>>;

/// Finite game with fixed victim and third-party policies.
///
/// Joint actions are mixed-radix indices over all agents: adversaries
/// first, then victims, then third parties, the first agent being the most
/// significant digit.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub adversary_actions: Vec<usize>,
    pub victim_actions: Vec<usize>,
    pub third_actions: Vec<usize>,
    pub n_paths: usize,
    pub gamma: f64,
    /// `transitions[s][joint][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][joint][j]`, one entry per failure path.
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// One table per victim agent.
    pub victim_policies: Vec<PolicyTable>,
    /// One table per third-party agent.
    pub third_policies: Vec<PolicyTable>,
}

/// Game over adversary joint actions only.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedMdp {
    pub n_states: usize,
    pub adversary_actions: Vec<usize>,
    pub n_paths: usize,
    pub gamma: f64,
    /// `transitions[s][a][s']` for adversary joint action `a`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a][j]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn product(sizes: &[usize]) -> usize {
    sizes.iter().product()
}

/// Mixed-radix decomposition of `index` over `sizes`.
pub fn decode(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for i in (0..sizes.len()).rev() {
        out[i] = index % sizes[i];
        index /= sizes[i];
    }
    out
}

pub fn encode(digits: &[usize], sizes: &[usize]) -> usize {
    digits.iter().zip(sizes).fold(0, |acc, (d, s)| acc * s + d)
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Validation(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Validation(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl TabularMdp {
    pub fn n_adversary_joint(&self) -> usize {
        product(&self.adversary_actions)
    }

    pub fn n_other_joint(&self) -> usize {
        product(&self.victim_actions) * product(&self.third_actions)
    }

    pub fn n_joint(&self) -> usize {
        self.n_adversary_joint() * self.n_other_joint()
    }

    /// Full joint index of adversary joint action `a` and the joint action
    /// `o` of all victims and third parties.
    pub fn joint_index(&self, a: usize, o: usize) -> usize {
        a * self.n_other_joint() + o
    }

    /// Probability that the fixed parties play joint action `o` in state `s`.
    pub fn fixed_party_probability(&self, s: usize, o: usize) -> f64 {
        let sizes: Vec<usize> = self
            .victim_actions
            .iter()
            .chain(&self.third_actions)
            .copied()
            .collect();
        let digits = decode(o, &sizes);
        self.victim_policies
            .iter()
            .chain(&self.third_policies)
            .zip(digits)
            .map(|(pol, d)| pol[s][d])
            .product()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        let nj = self.n_joint();
        if self.transitions.len() != self.n_states || self.rewards.len() != self.n_states {
            return Err(Error::Structural(
                "transition or reward table has the wrong state count".into(),
            ));
        }
        for s in 0..self.n_states {
            if self.transitions[s].len() != nj || self.rewards[s].len() != nj {
                return Err(Error::Structural(format!(
                    "state {s} has the wrong joint-action count"
                )));
            }
            for j in 0..nj {
                if self.transitions[s][j].len() != self.n_states {
                    return Err(Error::Structural(format!(
                        "row ({s}, {j}) has the wrong length"
                    )));
                }
                check_distribution(
                    &self.transitions[s][j],
                    &format!("transition row ({s}, {j})"),
                )?;
                if self.rewards[s][j].len() != self.n_paths {
                    return Err(Error::Structural(format!(
                        "reward ({s}, {j}) has the wrong path count"
                    )));
                }
            }
        }
        for (label, pols, acts) in [
            ("victim", &self.victim_policies, &self.victim_actions),
            ("third", &self.third_policies, &self.third_actions),
        ] {
            if pols.len() != acts.len() {
                return Err(Error::Structural(format!(
                    "{label} policy count does not match agents"
                )));
            }
            for (k, pol) in pols.iter().enumerate() {
                if pol.len() != self.n_states || pol.iter().any(|r| r.len() != acts[k]) {
                    return Err(Error::Structural(format!(
                        "{label} policy {k} has the wrong shape"
                    )));
                }
                for (s, row) in pol.iter().enumerate() {
                    check_distribution(row, &format!("{label} policy {k} at state {s}"))?;
                }
            }
        }
        Ok(())
    }

    /// `W · R(s, joint)` for every state and full joint action.
    pub fn scalar_rewards(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        if w.len() != self.n_paths {
            return Err(Error::Structural(format!(
                "{} weights for {} failure paths",
                w.len(),
                self.n_paths
            )));
        }
        Ok(self
            .rewards
            .iter()
            .map(|row| row.iter().map(|r| dot(w, r)).collect())
            .collect())
    }

    /// Integrates the fixed parties out of transitions and rewards.
    pub fn marginalize_fixed_parties(&self) -> Result<ReducedMdp> {
        self.validate()?;
        let (na, no) = (self.n_adversary_joint(), self.n_other_joint());
        let mut transitions = vec![vec![vec![0.0; self.n_states]; na]; self.n_states];
        let mut rewards = vec![vec![vec![0.0; self.n_paths]; na]; self.n_states];
        for s in 0..self.n_states {
            let probs: Vec<f64> = (0..no)
                .map(|o| self.fixed_party_probability(s, o))
                .collect();
            for a in 0..na {
                for (o, &p) in probs.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let j = self.joint_index(a, o);
                    for (t, q) in transitions[s][a].iter_mut().zip(&self.transitions[s][j]) {
                        *t += p * q;
                    }
                    for (r, x) in rewards[s][a].iter_mut().zip(&self.rewards[s][j]) {
                        *r += p * x;
                    }
                }
            }
        }
        Ok(ReducedMdp {
            n_states: self.n_states,
            adversary_actions: self.adversary_actions.clone(),
            n_paths: self.n_paths,
            gamma: self.gamma,
            transitions,
            rewards,
        })
    }
}

/// Optimal adversary Q-table on the full game.
///
/// Each backup averages over the fixed parties' joint actions explicitly:
/// `Q(s,a) = Σ_o π(o|s) [r(s,a,o) + γ Σ_s' P(s'|s,a,o) max_a' Q(s',a')]`.
pub fn value_iteration(
    mdp: &TabularMdp,
    rewards: &[Vec<f64>],
    tolerance: f64,
) -> Result<Vec<Vec<f64>>> {
    mdp.validate()?;
    let (na, no) = (mdp.n_adversary_joint(), mdp.n_other_joint());
    check_scalar_shape(rewards, mdp.n_states, mdp.n_joint())?;
    let probs: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|s| (0..no).map(|o| mdp.fixed_party_probability(s, o)).collect())
        .collect();
    let mut q = vec![vec![0.0; na]; mdp.n_states];
    for _ in 0..MAX_SWEEPS {
        let v: Vec<f64> = q
            .iter()
            .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut delta: f64 = 0.0;
        let mut next = vec![vec![0.0; na]; mdp.n_states];
        for s in 0..mdp.n_states {
            for a in 0..na {
                let mut total = 0.0;
                for o in 0..no {
                    let j = mdp.joint_index(a, o);
                    total +=
                        probs[s][o] * (rewards[s][j] + mdp.gamma * dot(&mdp.transitions[s][j], &v));
                }
                delta = delta.max((total - q[s][a]).abs());
                next[s][a] = total;
            }
        }
        q = next;
        if delta <= tolerance {
            return Ok(q);
        }
    }
    Err(Error::Validation("value iteration did not converge".into()))
}

fn check_scalar_shape(rewards: &[Vec<f64>], n_states: usize, n_actions: usize) -> Result<()> {
    if rewards.len() != n_states || rewards.iter().any(|r| r.len() != n_actions) {
        return Err(Error::Structural(format!(
            "scalar reward table must be {n_states} x {n_actions}"
        )));
    }
    Ok(())
}

impl ReducedMdp {
    pub fn n_actions(&self) -> usize {
        product(&self.adversary_actions)
    }

    pub fn scalar_rewards(&self, w: &[f64]) -> Result<Vec<Vec<f64>>> {
        if w.len() != self.n_paths {
            return Err(Error::Structural(format!(
                "{} weights for {} paths",
                w.len(),
                self.n_paths
            )));
        }
        Ok(self
            .rewards
            .iter()
            .map(|row| row.iter().map(|r| dot(w, r)).collect())
            .collect())
    }

    /// Standard Bellman optimality iteration on the reduced game.
    pub fn value_iteration(&self, rewards: &[Vec<f64>], tolerance: f64) -> Result<Vec<Vec<f64>>> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        let na = self.n_actions();
        check_scalar_shape(rewards, self.n_states, na)?;
        for s in 0..self.n_states {
            for a in 0..na {
                check_distribution(&self.transitions[s][a], &format!("reduced row ({s}, {a})"))?;
            }
        }
        let mut v = vec![0.0; self.n_states];
        for _ in 0..MAX_SWEEPS {
            let mut q = vec![vec![0.0; na]; self.n_states];
            let mut delta: f64 = 0.0;
            let mut next_v = vec![0.0; self.n_states];
            for s in 0..self.n_states {
                for a in 0..na {
                    q[s][a] = rewards[s][a] + self.gamma * dot(&self.transitions[s][a], &v);
                }
                next_v[s] = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((next_v[s] - v[s]).abs());
            }
            v = next_v;
            if delta <= tolerance {
                // one more backup so Q is consistent with the converged V
                return Ok((0..self.n_states)
                    .map(|s| {
                        (0..na)
                            .map(|a| rewards[s][a] + self.gamma * dot(&self.transitions[s][a], &v))
                            .collect()
                    })
                    .collect());
            }
        }
        Err(Error::Validation("value iteration did not converge".into()))
    }
}

fn check_adversary_policy(mdp: &TabularMdp, pi: &[Vec<f64>]) -> Result<()> {
    if pi.len() != mdp.n_states || pi.iter().any(|r| r.len() != mdp.n_adversary_joint()) {
        return Err(Error::Structural(
            "adversary policy has the wrong shape".into(),
        ));
    }
    for (s, row) in pi.iter().enumerate() {
        check_distribution(row, &format!("adversary policy at state {s}"))?;
    }
    Ok(())
}

/// Vector-valued evaluation of a fixed adversary joint policy, one
/// Bellman expectation backup per failure path, iterated on the full game.
/// Returns `q[s][a][j]`.
pub fn vector_value_iteration(
    mdp: &TabularMdp,
    pi: &[Vec<f64>],
    tolerance: f64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    mdp.validate()?;
    check_adversary_policy(mdp, pi)?;
    let (na, no, n) = (mdp.n_adversary_joint(), mdp.n_other_joint(), mdp.n_paths);
    let probs: Vec<Vec<f64>> = (0..mdp.n_states)
        .map(|s| (0..no).map(|o| mdp.fixed_party_probability(s, o)).collect())
        .collect();
    let mut q = vec![vec![vec![0.0; n]; na]; mdp.n_states];
    for _ in 0..MAX_SWEEPS {
        // V_j(s) = Σ_a π(a|s) Q_j(s, a)
        let v: Vec<Vec<f64>> = (0..mdp.n_states)
            .map(|s| {
                (0..n)
                    .map(|j| (0..na).map(|a| pi[s][a] * q[s][a][j]).sum())
                    .collect()
            })
            .collect();
        let mut delta: f64 = 0.0;
        let mut next = vec![vec![vec![0.0; n]; na]; mdp.n_states];
        for s in 0..mdp.n_states {
            for a in 0..na {
                for o in 0..no {
                    let p = probs[s][o];
                    if p == 0.0 {
                        continue;
                    }
                    let jt = mdp.joint_index(a, o);
                    for j in 0..n {
                        let future: f64 = (0..mdp.n_states)
                            .map(|t| mdp.transitions[s][jt][t] * v[t][j])
                            .sum();
                        next[s][a][j] += p * (mdp.rewards[s][jt][j] + mdp.gamma * future);
                    }
                }
                for j in 0..n {
                    delta = delta.max((next[s][a][j] - q[s][a][j]).abs());
                }
            }
        }
        q = next;
        if delta <= tolerance {
            return Ok(q);
        }
    }
    Err(Error::Validation(
        "vector evaluation did not converge".into(),
    ))
}

/// Scalar evaluation of a fixed adversary joint policy, solved exactly as
/// the linear system `(I - γ P_π) V = r_π` by Gaussian elimination.
/// Returns `q[s][a]`.
pub fn policy_evaluation(
    mdp: &TabularMdp,
    rewards: &[Vec<f64>],
    pi: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    mdp.validate()?;
    check_adversary_policy(mdp, pi)?;
    check_scalar_shape(rewards, mdp.n_states, mdp.n_joint())?;
    let (ns, na, no) = (mdp.n_states, mdp.n_adversary_joint(), mdp.n_other_joint());
    // r(s,a) and P(s'|s,a) with the fixed parties averaged out
    let mut r_sa = vec![vec![0.0; na]; ns];
    let mut p_sa = vec![vec![vec![0.0; ns]; na]; ns];
    for s in 0..ns {
        for o in 0..no {
            let p = mdp.fixed_party_probability(s, o);
            for a in 0..na {
                let jt = mdp.joint_index(a, o);
                r_sa[s][a] += p * rewards[s][jt];
                for t in 0..ns {
                    p_sa[s][a][t] += p * mdp.transitions[s][jt][t];
                }
            }
        }
    }
    let mut m = vec![vec![0.0; ns + 1]; ns];
    for s in 0..ns {
        m[s][s] = 1.0;
        for a in 0..na {
            m[s][ns] += pi[s][a] * r_sa[s][a];
            for t in 0..ns {
                m[s][t] -= mdp.gamma * pi[s][a] * p_sa[s][a][t];
            }
        }
    }
    let v = solve_augmented(m)?;
    Ok((0..ns)
        .map(|s| {
            (0..na)
                .map(|a| r_sa[s][a] + mdp.gamma * dot(&p_sa[s][a], &v))
                .collect()
        })
        .collect())
}

/// Gaussian elimination with partial pivoting on an `n x (n+1)` matrix.
fn solve_augmented(mut m: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::Validation("singular evaluation system".into()));
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                if f != 0.0 {
                    for k in col..=n {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Finite-horizon vector evaluation by backward induction from a zero
/// terminal value. Returns `q[step][s][a][j]` for steps `0..horizon`.
pub fn finite_horizon_vector_evaluation(
    mdp: &TabularMdp,
    pi: &[Vec<f64>],
    horizon: usize,
) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    mdp.validate()?;
    check_adversary_policy(mdp, pi)?;
    let (ns, na, no, n) = (
        mdp.n_states,
        mdp.n_adversary_joint(),
        mdp.n_other_joint(),
        mdp.n_paths,
    );
    let mut v_next = vec![vec![0.0; n]; ns];
    let mut out = vec![Vec::new(); horizon];
    for step in (0..horizon).rev() {
        let mut q = vec![vec![vec![0.0; n]; na]; ns];
        for s in 0..ns {
            for o in 0..no {
                let p = mdp.fixed_party_probability(s, o);
                for a in 0..na {
                    let jt = mdp.joint_index(a, o);
                    for j in 0..n {
                        let future: f64 = (0..ns)
                            .map(|t| mdp.transitions[s][jt][t] * v_next[t][j])
                            .sum();
                        q[s][a][j] += p * (mdp.rewards[s][jt][j] + mdp.gamma * future);
                    }
                }
            }
        }
        v_next = (0..ns)
            .map(|s| {
                (0..n)
                    .map(|j| (0..na).map(|a| pi[s][a] * q[s][a][j]).sum())
                    .collect()
            })
            .collect();
        out[step] = q;
    }
    Ok(out)
}

/// Largest absolute difference between two equally shaped tables.
pub fn sup_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Full-game vs reduced-game optimal adversary Q, sup-norm gap.
pub fn marginalization_residual(mdp: &TabularMdp, w: &[f64], tolerance: f64) -> Result<f64> {
    let full = value_iteration(mdp, &mdp.scalar_rewards(w)?, tolerance)?;
    let reduced = mdp.marginalize_fixed_parties()?;
    let red = reduced.value_iteration(&reduced.scalar_rewards(w)?, tolerance)?;
    Ok(sup_distance(&full, &red))
}

/// Scalar evaluation under `W·R` vs `W` dotted with vector evaluation,
/// sup-norm gap.
pub fn weighted_evaluation_residual(
    mdp: &TabularMdp,
    w: &[f64],
    pi: &[Vec<f64>],
    tolerance: f64,
) -> Result<f64> {
    let scalar = policy_evaluation(mdp, &mdp.scalar_rewards(w)?, pi)?;
    let vector = vector_value_iteration(mdp, pi, tolerance)?;
    let dotted: Vec<Vec<f64>> = vector
        .iter()
        .map(|row| row.iter().map(|qv| dot(w, qv)).collect())
        .collect();
    Ok(sup_distance(&scalar, &dotted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// One adversary with `na` actions, no other parties.
    fn single_party(n_states: usize, na: usize, gamma: f64) -> TabularMdp {
        TabularMdp {
            n_states,
            adversary_actions: vec![na],
            victim_actions: vec![],
            third_actions: vec![],
            n_paths: 1,
            gamma,
            transitions: vec![vec![vec![0.0; n_states]; na]; n_states],
            rewards: vec![vec![vec![0.0]; na]; n_states],
            victim_policies: vec![],
            third_policies: vec![],
        }
    }

    #[test]
    fn geometric_series() {
        let mut m = single_party(1, 1, 0.5);
        m.transitions[0][0][0] = 1.0;
        m.rewards[0][0][0] = 1.0;
        let q = value_iteration(&m, &m.scalar_rewards(&[1.0]).unwrap(), 1e-13).unwrap();
        assert!((q[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn myopic_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = random_instance(&mut rng, &InstanceShape::default());
        m.gamma = 0.0;
        let r = m.scalar_rewards(&[1.0, 0.0, 0.0]).unwrap();
        let q = value_iteration(&m, &r, 1e-14).unwrap();
        let red = m.marginalize_fixed_parties().unwrap();
        for s in 0..m.n_states {
            for a in 0..m.n_adversary_joint() {
                assert!((q[s][a] - red.rewards[s][a][0]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn three_state_chain_closed_form() {
        // 0 -> 1 -> 2 -> 2 with rewards 1, 2, 3 and a single action
        let g = 0.9;
        let mut m = single_party(3, 1, g);
        m.transitions[0][0][1] = 1.0;
        m.transitions[1][0][2] = 1.0;
        m.transitions[2][0][2] = 1.0;
        for (s, r) in [1.0, 2.0, 3.0].iter().enumerate() {
            m.rewards[s][0][0] = *r;
        }
        let v2 = 3.0 / (1.0 - g);
        let v1 = 2.0 + g * v2;
        let v0 = 1.0 + g * v1;
        let q = value_iteration(&m, &m.scalar_rewards(&[1.0]).unwrap(), 1e-13).unwrap();
        for (s, want) in [v0, v1, v2].iter().enumerate() {
            assert!((q[s][0] - want).abs() < 1e-9);
        }
        let pe =
            policy_evaluation(&m, &m.scalar_rewards(&[1.0]).unwrap(), &vec![vec![1.0]; 3]).unwrap();
        assert!((pe[0][0] - v0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_victim_gives_slice() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = random_instance(&mut rng, &InstanceShape::default());
        for pol in m
            .victim_policies
            .iter_mut()
            .chain(m.third_policies.iter_mut())
        {
            for row in pol.iter_mut() {
                row.iter_mut().for_each(|p| *p = 0.0);
                row[0] = 1.0;
            }
        }
        let red = m.marginalize_fixed_parties().unwrap();
        for s in 0..m.n_states {
            for a in 0..m.n_adversary_joint() {
                assert_eq!(red.transitions[s][a], m.transitions[s][m.joint_index(a, 0)]);
                let sum: f64 = red.transitions[s][a].iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_rows_rejected() {
        let mut m = single_party(2, 1, 0.5);
        m.transitions[0][0][0] = 0.7;
        m.transitions[1][0][1] = 1.0;
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = random_instance(&mut rng, &InstanceShape::default());
        m.victim_policies[0][0][0] += 0.1;
        assert!(matches!(
            m.marginalize_fixed_parties(),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn null_path_has_zero_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = random_instance(&mut rng, &InstanceShape::default());
        for row in m.rewards.iter_mut() {
            for r in row.iter_mut() {
                r[1] = 0.0;
            }
        }
        let pi = random_adversary_policy(&mut rng, &m);
        let q = vector_value_iteration(&m, &pi, 1e-12).unwrap();
        assert!(q.iter().flatten().all(|v| v[1] == 0.0));
    }

    #[test]
    fn single_path_reduces_to_scalar_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_instance(
            &mut rng,
            &InstanceShape {
                n_paths: 1,
                ..InstanceShape::default()
            },
        );
        let pi = random_adversary_policy(&mut rng, &m);
        let v = vector_value_iteration(&m, &pi, 1e-13).unwrap();
        let s = policy_evaluation(&m, &m.scalar_rewards(&[1.0]).unwrap(), &pi).unwrap();
        for (a, b) in v.iter().flatten().zip(s.iter().flatten()) {
            assert!((a[0] - b).abs() < 1e-10);
        }
    }

    #[test]
    fn finite_horizon_matches_discounted_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = random_instance(&mut rng, &InstanceShape::default());
        let pi = random_adversary_policy(&mut rng, &m);
        let fh = finite_horizon_vector_evaluation(&m, &pi, 400).unwrap();
        let inf = vector_value_iteration(&m, &pi, 1e-13).unwrap();
        for (a, b) in fh[0].iter().flatten().zip(inf.iter().flatten()) {
            for j in 0..m.n_paths {
                assert!((a[j] - b[j]).abs() < 1e-8);
            }
        }
        // last step only sees the immediate reward
        let red = m.marginalize_fixed_parties().unwrap();
        for s in 0..m.n_states {
            for a in 0..m.n_adversary_joint() {
                for j in 0..m.n_paths {
                    assert!((fh[399][s][a][j] - red.rewards[s][a][j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn codec_round_trip() {
        let sizes = [3, 2, 4];
        for i in 0..24 {
            assert_eq!(encode(&decode(i, &sizes), &sizes), i);
        }
        assert_eq!(decode(5, &sizes), vec![0, 1, 1]);
    }
}
