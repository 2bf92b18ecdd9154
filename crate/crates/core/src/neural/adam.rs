use super::tensor::ParamTensor;
use crate::error::{Error, Result};

/// Adaptive-moment optimizer with bias correction.
///
/// Moment buffers are allocated lazily on the first update and are matched
/// to parameters by position, so the same parameter list must be passed in
/// the same order every time.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self::with_betas(learning_rate, 0.9, 0.999, 1e-8).expect("default betas are valid")
    }

    pub fn with_betas(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::Config(format!(
                "betas must lie in (0, 1), got {beta1} and {beta2}"
            )));
        }
        if !(learning_rate > 0.0) || !(epsilon > 0.0) {
            return Err(Error::Config(
                "learning rate and epsilon must be positive".into(),
            ));
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        })
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// A non-finite gradient aborts the update before anything changes.
    pub fn update<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut ParamTensor>,
    {
        let mut params: Vec<&mut ParamTensor> = params.into_iter().collect();
        for p in &params {
            if let Some(g) = p.grad.iter().find(|g| !g.is_finite()) {
                return Err(Error::fault(&p.name, format!("non-finite gradient {g}")));
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len()
            || self
                .first_moment
                .iter()
                .zip(&params)
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Structural(
                "optimizer state does not match parameter list".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for k in 0..p.values.len() {
                let g = p.grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p.values[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                p.grad[k] = 0.0;
            }
        }
        Ok(())
    }
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<'a, I>(params: I, max_norm: f64) -> f64
where
    I: IntoIterator<Item = &'a mut ParamTensor>,
{
    let mut params: Vec<&mut ParamTensor> = params.into_iter().collect();
    let norm = params
        .iter()
        .flat_map(|p| p.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        params
            .iter_mut()
            .for_each(|p| p.grad.iter_mut().for_each(|g| *g *= s));
    }
    norm
}
