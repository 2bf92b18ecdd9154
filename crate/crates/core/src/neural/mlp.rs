use rand::Rng;

use super::tensor::{affine, affine_backward, ParamTensor};
use crate::error::{Error, Result};

/// Feed-forward network: affine layers with rectifiers between them and a
/// linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// `w0, b0, w1, b1, ...`
    params: Vec<ParamTensor>,
    version: u64,
}

/// Activations saved by [`Mlp::forward`] for the matching backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    version: u64,
    /// Input of every layer (post-rectifier for hidden layers).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Vec<f64>>,
}

impl MlpCache {
    /// Smallest absolute hidden pre-activation; near zero means the
    /// rectifier kink is close.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`, weights uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(prefix: &str, sizes: &[usize], rng: &mut R) -> Self {
        let mut params = Vec::new();
        for (l, pair) in sizes.windows(2).enumerate() {
            let scale = 1.0 / (pair[0] as f64).sqrt();
            params.push(ParamTensor::uniform(
                format!("{prefix}.w{l}"),
                &[pair[1], pair[0]],
                scale,
                rng,
            ));
            params.push(ParamTensor::uniform(
                format!("{prefix}.b{l}"),
                &[pair[1]],
                scale,
                rng,
            ));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
            version: 0,
        }
    }

    pub fn zeros(prefix: &str, sizes: &[usize]) -> Self {
        let mut params = Vec::new();
        for (l, pair) in sizes.windows(2).enumerate() {
            params.push(ParamTensor::zeros(
                format!("{prefix}.w{l}"),
                &[pair[1], pair[0]],
            ));
            params.push(ParamTensor::zeros(format!("{prefix}.b{l}"), &[pair[1]]));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
            version: 0,
        }
    }

    /// Rebuilds a network from its parameter list.
    pub fn from_params(sizes: &[usize], params: Vec<ParamTensor>) -> Result<Self> {
        if params.len() != 2 * (sizes.len() - 1) {
            return Err(Error::Structural(format!(
                "{} layers need {} tensors, got {}",
                sizes.len() - 1,
                2 * (sizes.len() - 1),
                params.len()
            )));
        }
        for (l, pair) in sizes.windows(2).enumerate() {
            if params[2 * l].shape != [pair[1], pair[0]] || params[2 * l + 1].shape != [pair[1]] {
                return Err(Error::Structural(format!(
                    "layer {l} tensors do not match sizes {sizes:?}"
                )));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
            version: 0,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    /// Mutable parameters. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        self.version += 1;
        &mut self.params
    }

    pub fn into_params(self) -> Vec<ParamTensor> {
        self.params
    }

    /// Copies parameter values (not gradients) from `other`.
    pub fn copy_values_from(&mut self, other: &Mlp) {
        for (p, q) in self.params_mut().iter_mut().zip(&other.params) {
            p.values.copy_from_slice(&q.values);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.sizes[0] {
            return Err(Error::Structural(format!(
                "network expects {} inputs, got {}",
                self.sizes[0],
                x.len()
            )));
        }
        Ok(())
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let layers = self.sizes.len() - 1;
        let mut cur = x.to_vec();
        for l in 0..layers {
            let mut next = vec![0.0; self.sizes[l + 1]];
            affine(
                &self.params[2 * l].values,
                &self.params[2 * l + 1].values,
                &cur,
                &mut next,
            );
            if l + 1 < layers {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        self.check_input(x)?;
        let layers = self.sizes.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers.saturating_sub(1));
        let mut cur = x.to_vec();
        for l in 0..layers {
            let mut z = vec![0.0; self.sizes[l + 1]];
            affine(
                &self.params[2 * l].values,
                &self.params[2 * l + 1].values,
                &cur,
                &mut z,
            );
            inputs.push(std::mem::take(&mut cur));
            if l + 1 < layers {
                cur = z.iter().map(|v| v.max(0.0)).collect();
                pre.push(z);
            } else {
                cur = z;
            }
        }
        Ok((
            cur,
            MlpCache {
                version: self.version,
                inputs,
                pre,
            },
        ))
    }

    /// Accumulates parameter gradients for `upstream = dL/doutput` and
    /// returns `dL/dinput`.
    pub fn backward(&mut self, cache: &MlpCache, upstream: &[f64]) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::Lifecycle(
                "backward called with a cache from before a parameter update".into(),
            ));
        }
        if upstream.len() != self.output_size() {
            return Err(Error::Structural(format!(
                "upstream gradient has {} entries, network outputs {}",
                upstream.len(),
                self.output_size()
            )));
        }
        let layers = self.sizes.len() - 1;
        let mut dy = upstream.to_vec();
        for l in (0..layers).rev() {
            let x = &cache.inputs[l];
            let mut dx = vec![0.0; x.len()];
            let (wp, rest) = self.params[2 * l..].split_at_mut(1);
            let w = &mut wp[0];
            let b = &mut rest[0];
            affine_backward(&w.values, x, &dy, &mut w.grad, &mut b.grad, Some(&mut dx));
            if l > 0 {
                for (d, z) in dx.iter_mut().zip(&cache.pre[l - 1]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            dy = dx;
        }
        Ok(dy)
    }
}
