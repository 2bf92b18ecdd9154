use rand::Rng;

use super::tensor::{affine_backward, ParamTensor};
use crate::error::{Error, Result};

const WX: usize = 0;
const WH: usize = 1;
const B: usize = 2;
const W_OUT: usize = 3;
const B_OUT: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(size: usize) -> Self {
        Self {
            hidden: vec![0.0; size],
            cell: vec![0.0; size],
        }
    }
}

/// Gated recurrent cell with a scalar linear read-out of the hidden state.
///
/// Gate rows in the stacked weight matrices are ordered input, forget,
/// candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    input: usize,
    hidden: usize,
    params: Vec<ParamTensor>,
    version: u64,
}

/// Values saved by one [`Lstm::step`] for backpropagation through time.
#[derive(Clone, Debug)]
pub struct LstmStepCache {
    version: u64,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`, each of hidden size.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        let mut b = ParamTensor::zeros(format!("{prefix}.b"), &[4 * hidden]);
        // forget gate starts open
        b.values[hidden..2 * hidden]
            .iter_mut()
            .for_each(|v| *v = 1.0);
        Self {
            input,
            hidden,
            params: vec![
                ParamTensor::uniform(format!("{prefix}.wx"), &[4 * hidden, input], scale, rng),
                ParamTensor::uniform(format!("{prefix}.wh"), &[4 * hidden, hidden], scale, rng),
                b,
                ParamTensor::uniform(format!("{prefix}.w_out"), &[1, hidden], scale, rng),
                ParamTensor::zeros(format!("{prefix}.b_out"), &[1]),
            ],
            version: 0,
        }
    }

    pub fn zeros(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            params: vec![
                ParamTensor::zeros(format!("{prefix}.wx"), &[4 * hidden, input]),
                ParamTensor::zeros(format!("{prefix}.wh"), &[4 * hidden, hidden]),
                ParamTensor::zeros(format!("{prefix}.b"), &[4 * hidden]),
                ParamTensor::zeros(format!("{prefix}.w_out"), &[1, hidden]),
                ParamTensor::zeros(format!("{prefix}.b_out"), &[1]),
            ],
            version: 0,
        }
    }

    pub fn from_params(input: usize, hidden: usize, params: Vec<ParamTensor>) -> Result<Self> {
        let shapes: [&[usize]; 5] = [
            &[4 * hidden, input],
            &[4 * hidden, hidden],
            &[4 * hidden],
            &[1, hidden],
            &[1],
        ];
        if params.len() != 5 || params.iter().zip(shapes).any(|(p, s)| p.shape != s) {
            return Err(Error::Structural(format!(
                "tensors do not describe a recurrent cell with input {input} and hidden {hidden}"
            )));
        }
        Ok(Self {
            input,
            hidden,
            params,
            version: 0,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.hidden)
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    /// Mutable parameters. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        self.version += 1;
        &mut self.params
    }

    fn check(&self, x: &[f64], state: &RecurrentState) -> Result<()> {
        if x.len() != self.input {
            return Err(Error::Structural(format!(
                "recurrent cell expects {} inputs, got {}",
                self.input,
                x.len()
            )));
        }
        if state.hidden.len() != self.hidden || state.cell.len() != self.hidden {
            return Err(Error::Structural(format!(
                "recurrent state sizes ({}, {}) do not match hidden size {}",
                state.hidden.len(),
                state.cell.len(),
                self.hidden
            )));
        }
        Ok(())
    }

    /// Returns `(output, next_state, activated gates, tanh(cell))`.
    fn compute(
        &self,
        x: &[f64],
        state: &RecurrentState,
    ) -> (f64, RecurrentState, Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let (wx, wh, b) = (
            &self.params[WX].values,
            &self.params[WH].values,
            &self.params[B].values,
        );
        let mut gates = vec![0.0; 4 * h];
        for (r, z) in gates.iter_mut().enumerate() {
            let rx = &wx[r * self.input..(r + 1) * self.input];
            let rh = &wh[r * h..(r + 1) * h];
            *z = b[r]
                + rx.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
                + rh.iter()
                    .zip(&state.hidden)
                    .map(|(a, c)| a * c)
                    .sum::<f64>();
        }
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if (2 * h..3 * h).contains(&r) {
                z.tanh()
            } else {
                sigmoid(*z)
            };
        }
        let mut cell = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            cell[k] = f * state.cell[k] + i * g;
            tanh_c[k] = cell[k].tanh();
            hidden[k] = o * tanh_c[k];
        }
        let out = self.params[B_OUT].values[0]
            + self.params[W_OUT]
                .values
                .iter()
                .zip(&hidden)
                .map(|(a, c)| a * c)
                .sum::<f64>();
        (out, RecurrentState { hidden, cell }, gates, tanh_c)
    }

    /// One step without keeping activations.
    pub fn predict(&self, x: &[f64], state: &RecurrentState) -> Result<(f64, RecurrentState)> {
        self.check(x, state)?;
        let (out, next, _, _) = self.compute(x, state);
        Ok((out, next))
    }

    pub fn step(
        &self,
        x: &[f64],
        state: &RecurrentState,
    ) -> Result<(f64, RecurrentState, LstmStepCache)> {
        self.check(x, state)?;
        let (out, next, gates, tanh_c) = self.compute(x, state);
        let cache = LstmStepCache {
            version: self.version,
            x: x.to_vec(),
            h_prev: state.hidden.clone(),
            c_prev: state.cell.clone(),
            gates,
            tanh_c,
            h: next.hidden.clone(),
        };
        Ok((out, next, cache))
    }

    /// Backpropagation through an unrolled sequence.
    ///
    /// `d_out[t]` is `dL/doutput_t`. The initial state is treated as a
    /// constant. Returns `dL/dx_t` for every step.
    pub fn backward_sequence(
        &mut self,
        caches: &[LstmStepCache],
        d_out: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        if caches.len() != d_out.len() {
            return Err(Error::Structural(format!(
                "{} cached steps but {} output gradients",
                caches.len(),
                d_out.len()
            )));
        }
        if caches.iter().any(|c| c.version != self.version) {
            return Err(Error::Lifecycle(
                "backward called with a cache from before a parameter update".into(),
            ));
        }
        let h = self.hidden;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dx_all = vec![Vec::new(); caches.len()];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..caches.len()).rev() {
            let c = &caches[t];
            let g_out = d_out[t];
            self.params[B_OUT].grad[0] += g_out;
            for k in 0..h {
                self.params[W_OUT].grad[k] += g_out * c.h[k];
            }
            for k in 0..h {
                let dh = g_out * self.params[W_OUT].values[k] + dh_next[k];
                let (i, f, g, o) = (
                    c.gates[k],
                    c.gates[h + k],
                    c.gates[2 * h + k],
                    c.gates[3 * h + k],
                );
                let tc = c.tanh_c[k];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c.c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let mut dx = vec![0.0; self.input];
            let (head, tail) = self.params.split_at_mut(WH);
            let (wh_part, b_part) = tail.split_at_mut(1);
            let wx = &mut head[WX];
            let wh = &mut wh_part[0];
            let b = &mut b_part[0];
            affine_backward(
                &wx.values,
                &c.x,
                &dz,
                &mut wx.grad,
                &mut b.grad,
                Some(&mut dx),
            );
            let mut scratch_b = vec![0.0; 4 * h];
            affine_backward(
                &wh.values,
                &c.h_prev,
                &dz,
                &mut wh.grad,
                &mut scratch_b,
                Some(&mut dh_next),
            );
            dx_all[t] = dx;
        }
        Ok(dx_all)
    }
}
