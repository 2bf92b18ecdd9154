use rand::Rng;

use crate::error::{Error, Result};
use crate::neural::{Mlp, MlpCache, ParamTensor};

/// Monotone mixing network.
///
/// Hypernetworks map the conditioning vector to the mixing weights; the
/// weights pass through an absolute value so every partial derivative of
/// `Q_tot` with respect to an agent's `Q_i` is non-negative.
///
/// ```text
/// W1 = |hyper_w1(c)|  (n x e)    b1 = hyper_b1(c)  (e)
/// W2 = |hyper_w2(c)|  (e)        b2 = hyper_b2(c)  (scalar, two layers)
/// Q_tot = W2 . elu(q W1 + b1) + b2
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct MixingNet {
    n_agents: usize,
    cond_dim: usize,
    embed: usize,
    hyper_w1: Mlp,
    hyper_b1: Mlp,
    hyper_w2: Mlp,
    hyper_b2: Mlp,
}

#[derive(Clone, Debug)]
pub struct MixCache {
    q: Vec<f64>,
    w1_raw: Vec<f64>,
    w2_raw: Vec<f64>,
    z: Vec<f64>,
    h: Vec<f64>,
    c_w1: MlpCache,
    c_b1: MlpCache,
    c_w2: MlpCache,
    c_b2: MlpCache,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl MixingNet {
    pub fn new<R: Rng + ?Sized>(
        n_agents: usize,
        cond_dim: usize,
        embed: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            n_agents,
            cond_dim,
            embed,
            hyper_w1: Mlp::new("mixer.hw1", &[cond_dim, n_agents * embed], rng),
            hyper_b1: Mlp::new("mixer.hb1", &[cond_dim, embed], rng),
            hyper_w2: Mlp::new("mixer.hw2", &[cond_dim, embed], rng),
            hyper_b2: Mlp::new("mixer.hb2", &[cond_dim, embed, 1], rng),
        }
    }

    pub fn zeros(n_agents: usize, cond_dim: usize, embed: usize) -> Self {
        Self {
            n_agents,
            cond_dim,
            embed,
            hyper_w1: Mlp::zeros("mixer.hw1", &[cond_dim, n_agents * embed]),
            hyper_b1: Mlp::zeros("mixer.hb1", &[cond_dim, embed]),
            hyper_w2: Mlp::zeros("mixer.hw2", &[cond_dim, embed]),
            hyper_b2: Mlp::zeros("mixer.hb2", &[cond_dim, embed, 1]),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    fn nets(&self) -> [&Mlp; 4] {
        [
            &self.hyper_w1,
            &self.hyper_b1,
            &self.hyper_w2,
            &self.hyper_b2,
        ]
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.nets()
            .into_iter()
            .flat_map(|n| n.params().iter())
            .collect()
    }

    /// Mutable parameters. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let Self {
            hyper_w1,
            hyper_b1,
            hyper_w2,
            hyper_b2,
            ..
        } = self;
        hyper_w1
            .params_mut()
            .iter_mut()
            .chain(hyper_b1.params_mut().iter_mut())
            .chain(hyper_w2.params_mut().iter_mut())
            .chain(hyper_b2.params_mut().iter_mut())
            .collect()
    }

    /// Overwrites parameter values from a list in [`Self::params`] order.
    pub fn load_values(&mut self, values: &[ParamTensor]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Structural(format!(
                "mixer has {} tensors, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape != v.shape {
                return Err(Error::Structural(format!(
                    "tensor `{}` shape mismatch",
                    p.name
                )));
            }
            p.values.copy_from_slice(&v.values);
        }
        Ok(())
    }

    pub fn copy_values_from(&mut self, other: &MixingNet) {
        let values: Vec<ParamTensor> = other.params().into_iter().cloned().collect();
        self.load_values(&values).expect("same architecture");
    }

    fn check(&self, q: &[f64], cond: &[f64]) -> Result<()> {
        if q.len() != self.n_agents || cond.len() != self.cond_dim {
            return Err(Error::Structural(format!(
                "mixer expects {} agent values and {} conditioning features, got {} and {}",
                self.n_agents,
                self.cond_dim,
                q.len(),
                cond.len()
            )));
        }
        Ok(())
    }

    /// Effective (non-negative) first-layer weights, row-major `n x e`.
    pub fn effective_w1(&self, cond: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .hyper_w1
            .predict(cond)?
            .iter()
            .map(|w| w.abs())
            .collect())
    }

    pub fn mix(&self, q: &[f64], cond: &[f64]) -> Result<f64> {
        self.check(q, cond)?;
        let e = self.embed;
        let w1 = self.hyper_w1.predict(cond)?;
        let b1 = self.hyper_b1.predict(cond)?;
        let w2 = self.hyper_w2.predict(cond)?;
        let b2 = self.hyper_b2.predict(cond)?[0];
        let mut out = b2;
        for k in 0..e {
            let z = b1[k]
                + (0..self.n_agents)
                    .map(|i| q[i] * w1[i * e + k].abs())
                    .sum::<f64>();
            out += w2[k].abs() * elu(z);
        }
        Ok(out)
    }

    pub fn forward(&self, q: &[f64], cond: &[f64]) -> Result<(f64, MixCache)> {
        self.check(q, cond)?;
        let e = self.embed;
        let (w1_raw, c_w1) = self.hyper_w1.forward(cond)?;
        let (b1, c_b1) = self.hyper_b1.forward(cond)?;
        let (w2_raw, c_w2) = self.hyper_w2.forward(cond)?;
        let (b2, c_b2) = self.hyper_b2.forward(cond)?;
        let mut z = vec![0.0; e];
        let mut h = vec![0.0; e];
        let mut out = b2[0];
        for k in 0..e {
            z[k] = b1[k]
                + (0..self.n_agents)
                    .map(|i| q[i] * w1_raw[i * e + k].abs())
                    .sum::<f64>();
            h[k] = elu(z[k]);
            out += w2_raw[k].abs() * h[k];
        }
        Ok((
            out,
            MixCache {
                q: q.to_vec(),
                w1_raw,
                w2_raw,
                z,
                h,
                c_w1,
                c_b1,
                c_w2,
                c_b2,
            },
        ))
    }

    /// Accumulates hypernetwork gradients for `dL/dQ_tot = upstream` and
    /// returns `dL/dq`.
    pub fn backward(&mut self, cache: &MixCache, upstream: f64) -> Result<Vec<f64>> {
        let e = self.embed;
        let n = self.n_agents;
        self.hyper_b2.backward(&cache.c_b2, &[upstream])?;
        let mut d_w2 = vec![0.0; e];
        let mut dz = vec![0.0; e];
        for k in 0..e {
            d_w2[k] = upstream * cache.h[k] * sign(cache.w2_raw[k]);
            dz[k] = upstream * cache.w2_raw[k].abs() * elu_grad(cache.z[k]);
        }
        self.hyper_w2.backward(&cache.c_w2, &d_w2)?;
        self.hyper_b1.backward(&cache.c_b1, &dz)?;
        let mut d_w1 = vec![0.0; n * e];
        let mut dq = vec![0.0; n];
        for i in 0..n {
            for k in 0..e {
                let w = cache.w1_raw[i * e + k];
                d_w1[i * e + k] = dz[k] * cache.q[i] * sign(w);
                dq[i] += dz[k] * w.abs();
            }
        }
        self.hyper_w1.backward(&cache.c_w1, &d_w1)?;
        Ok(dq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, grad_check_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_agent_identity_mixer() {
        let mut m = MixingNet::zeros(1, 2, 1);
        {
            let mut p = m.params_mut();
            // hyper_w1 bias, hyper_w2 bias, hyper_b2 output bias
            p[1].values[0] = 1.0;
            p[5].values[0] = 1.0;
            p[9].values[0] = 0.25;
        }
        for q in [0.5, 2.0, 7.5] {
            assert!((m.mix(&[q], &[0.3, -0.4]).unwrap() - (q + 0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_hyper_weight_is_made_positive() {
        let mut m = MixingNet::zeros(1, 1, 1);
        {
            let mut p = m.params_mut();
            p[1].values[0] = -0.3;
            p[5].values[0] = 1.0;
        }
        assert_eq!(m.effective_w1(&[0.0]).unwrap(), vec![0.3]);
        assert!((m.mix(&[2.0], &[0.0]).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let m = MixingNet::zeros(2, 3, 4);
        assert!(matches!(
            m.mix(&[1.0], &[0.0; 3]),
            Err(Error::Structural(_))
        ));
        assert!(m.mix(&[1.0, 2.0], &[0.0; 2]).is_err());
    }

    #[test]
    fn forward_matches_mix() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = MixingNet::new(3, 5, 4, &mut rng);
        let q = [0.3, -1.2, 2.0];
        let c = [0.1, 0.2, -0.3, 0.9, -0.5];
        assert_eq!(m.forward(&q, &c).unwrap().0, m.mix(&q, &c).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = MixingNet::new(2, 3, 4, &mut rng);
            let q: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, cache) = m.forward(&q, &c).unwrap();
            let dq = m.backward(&cache, 1.0).unwrap();
            let params: Vec<ParamTensor> = m.params().into_iter().cloned().collect();
            let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.clone()).collect();
            let report = grad_check(&params, &analytic, |p| {
                let mut mm = m.clone();
                mm.load_values(p).unwrap();
                mm.mix(&q, &c).unwrap()
            });
            assert!(report.max_rel_error < 1e-4, "{report:?}");
            let report = grad_check_vec(&q, &dq, |qq| m.mix(qq, &c).unwrap());
            assert!(report.max_rel_error < 1e-4, "{report:?}");
            assert!(dq.iter().all(|d| *d >= 0.0));
        }
    }
}
