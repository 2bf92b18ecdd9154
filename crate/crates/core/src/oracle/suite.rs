//! Property suites over tabular instances and hand-written gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    marginalization_residual, random_adversary_policy, random_instance, random_weights,
    weighted_evaluation_residual, InstanceShape, TabularMdp,
};
use crate::error::Result;
use crate::neural::{grad_check, GradCheckReport, Lstm, Mlp, ParamTensor};
use crate::qmix::MixingNet;
use crate::reward::{RewardModel, RewardModelConfig};

/// Convergence tolerance of the iterative solvers in the suites.
pub const SOLVER_TOLERANCE: f64 = 1e-13;

/// Both residuals of one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InstanceCheck {
    pub label: String,
    /// Full-game vs marginalized-game optimal adversary Q, sup norm.
    pub marginalization: f64,
    /// Scalar `W·R` evaluation vs `W`-dotted vector evaluation, sup norm.
    pub weighted_evaluation: f64,
}

/// Checks one instance with weights and an adversary policy drawn from `seed`.
pub fn check_instance(label: &str, mdp: &TabularMdp, seed: u64) -> Result<InstanceCheck> {
    mdp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_weights(&mut rng, mdp.n_paths);
    let pi = random_adversary_policy(&mut rng, mdp);
    Ok(InstanceCheck {
        label: label.to_string(),
        marginalization: marginalization_residual(mdp, &w, SOLVER_TOLERANCE)?,
        weighted_evaluation: weighted_evaluation_residual(mdp, &w, &pi, SOLVER_TOLERANCE)?,
    })
}

/// Random instances, one per seed; instance `k` and its weights both
/// derive from `seeds[k]`.
pub fn random_suite(seeds: &[u64], shape: &InstanceShape) -> Result<Vec<InstanceCheck>> {
    seeds
        .iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = random_instance(&mut rng, shape);
            check_instance(&format!("seed-{seed}"), &mdp, seed.wrapping_add(1))
        })
        .collect()
}

/// Finite-difference check of one component at one seed.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientCase {
    pub component: &'static str,
    pub seed: u64,
    pub report: GradCheckReport,
}

pub const GRADIENT_COMPONENTS: [&str; 4] = ["mlp", "lstm-unroll-5", "mixer", "episode-sum-loss"];

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn mlp_case(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = [5, 8, 8, 3];
    let mut net = Mlp::new("q", &sizes, &mut rng);
    // keep every ReLU away from its kink
    let (x, cache) = loop {
        let x = uniform(&mut rng, sizes[0]);
        let (_, cache) = net.forward(&x)?;
        if cache.min_abs_preactivation() > 1e-3 {
            break (x, cache);
        }
    };
    let up = uniform(&mut rng, 3);
    net.backward(&cache, &up)?;
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
    Ok(grad_check(net.params(), &analytic, |p| {
        let m = Mlp::from_params(&sizes, p.to_vec()).expect("same shapes");
        let y = m.predict(&x).expect("same input size");
        y.iter().zip(&up).map(|(a, b)| a * b).sum()
    }))
}

fn lstm_case(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, hidden) = (4, 6);
    let mut cell = Lstm::new("cell", input, hidden, &mut rng);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| uniform(&mut rng, input)).collect();
    let up = uniform(&mut rng, 5);
    let mut state = cell.initial_state();
    let mut caches = Vec::new();
    for x in &xs {
        let (_, next, cache) = cell.step(x, &state)?;
        caches.push(cache);
        state = next;
    }
    cell.backward_sequence(&caches, &up)?;
    let analytic: Vec<Vec<f64>> = cell.params().iter().map(|p| p.grad.clone()).collect();
    Ok(grad_check(cell.params(), &analytic, |p| {
        let m = Lstm::from_params(input, hidden, p.to_vec()).expect("same shapes");
        let mut s = m.initial_state();
        let mut total = 0.0;
        for (x, u) in xs.iter().zip(&up) {
            let (o, n) = m.predict(x, &s).expect("same input size");
            total += o * u;
            s = n;
        }
        total
    }))
}

fn mixer_case(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MixingNet::new(3, 6, 5, &mut rng);
    let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c = uniform(&mut rng, 6);
    let (_, cache) = m.forward(&q, &c)?;
    m.backward(&cache, 1.0)?;
    let params: Vec<ParamTensor> = m.params().into_iter().cloned().collect();
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.clone()).collect();
    Ok(grad_check(&params, &analytic, |p| {
        let mut mm = m.clone();
        mm.load_values(p).expect("same shapes");
        mm.mix(&q, &c).expect("same sizes")
    }))
}

fn episode_loss_case(seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RewardModelConfig {
        input: 4,
        hidden: 5,
    };
    let mut m = RewardModel::new(&cfg, &mut rng);
    let episodes: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|k| (0..3 + k).map(|_| uniform(&mut rng, cfg.input)).collect())
        .collect();
    let gts: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
    m.loss_and_grad(&episodes, &gts)?;
    let analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad.clone()).collect();
    Ok(grad_check(m.params(), &analytic, |p| {
        RewardModel::from_params(&cfg, p.to_vec())
            .expect("same shapes")
            .loss(&episodes, &gts)
            .expect("same episodes")
    }))
}

/// Every component in [`GRADIENT_COMPONENTS`] at every seed.
pub fn gradient_suite(seeds: &[u64]) -> Result<Vec<GradientCase>> {
    let mut out = Vec::new();
    for &seed in seeds {
        for component in GRADIENT_COMPONENTS {
            let report = match component {
                "mlp" => mlp_case(seed)?,
                "lstm-unroll-5" => lstm_case(seed)?,
                "mixer" => mixer_case(seed)?,
                _ => episode_loss_case(seed)?,
            };
            out.push(GradientCase {
                component,
                seed,
                report,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_suite_residuals_are_tiny() {
        let checks = random_suite(&[3, 4], &InstanceShape::default()).unwrap();
        for c in checks {
            assert!(c.marginalization < 1e-9, "{c:?}");
            assert!(c.weighted_evaluation < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn gradient_suite_covers_components() {
        let cases = gradient_suite(&[1]).unwrap();
        assert_eq!(cases.len(), GRADIENT_COMPONENTS.len());
        for c in cases {
            assert!(c.report.max_rel_error < 1e-4, "{c:?}");
        }
    }
}
