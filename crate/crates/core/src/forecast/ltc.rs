//! Liquid time-constant cell
//!
//! dx/dt = -(1/τ + f(x, I; θ)) ⊙ x + f(x, I; θ) ⊙ A
//!
//! with f a sigmoid dense layer over [x, I], integrated by the fused
//! semi-implicit step x ← (x + Δt f A) / (1 + Δt (1/τ + f)).

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForecastError;

/// Floor added to softplus so every τ stays strictly positive.
pub const TAU_FLOOR: f64 = 0.05;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Inverse of softplus, for initialising a target τ.
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtcCell {
    pub hidden: usize,
    pub inputs: usize,
    pub unfold_steps: usize,
    pub dt: f64,
    /// `w_x` (hidden×hidden), `w_i` (hidden×inputs), bias, raw τ, A.
    params: Vec<f64>,
}

impl LtcCell {
    /// All gate weights zero, τ = 1, A = 0.
    pub fn new(hidden: usize, inputs: usize, unfold_steps: usize, dt: f64) -> Self {
        let mut cell = Self { hidden, inputs, unfold_steps, dt, params: vec![0.0; Self::param_count(hidden, inputs)] };
        let raw = softplus_inv(1.0 - TAU_FLOOR);
        cell.tau_raw_mut().fill(raw);
        cell
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, inputs: usize, unfold_steps: usize, dt: f64, rng: &mut R) -> Self {
        let mut cell = Self::new(hidden, inputs, unfold_steps, dt);
        let limit = (6.0 / (hidden + inputs + hidden) as f64).sqrt();
        for w in cell.w_x_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        for w in cell.w_i_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        for a in cell.a_mut() {
            *a = rng.gen_range(-1.0..1.0);
        }
        cell
    }

    pub fn param_count(hidden: usize, inputs: usize) -> usize {
        hidden * hidden + hidden * inputs + 3 * hidden
    }

    fn ranges(&self) -> [Range<usize>; 5] {
        let (n, m) = (self.hidden, self.inputs);
        let wx = 0..n * n;
        let wi = wx.end..wx.end + n * m;
        let b = wi.end..wi.end + n;
        let t = b.end..b.end + n;
        let a = t.end..t.end + n;
        [wx, wi, b, t, a]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w_x(&self) -> &[f64] {
        &self.params[self.ranges()[0].clone()]
    }

    pub fn w_i(&self) -> &[f64] {
        &self.params[self.ranges()[1].clone()]
    }

    pub fn bias(&self) -> &[f64] {
        &self.params[self.ranges()[2].clone()]
    }

    pub fn tau_raw(&self) -> &[f64] {
        &self.params[self.ranges()[3].clone()]
    }

    pub fn a(&self) -> &[f64] {
        &self.params[self.ranges()[4].clone()]
    }

    pub fn w_x_mut(&mut self) -> &mut [f64] {
        let r = self.ranges()[0].clone();
        &mut self.params[r]
    }

    pub fn w_i_mut(&mut self) -> &mut [f64] {
        let r = self.ranges()[1].clone();
        &mut self.params[r]
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        let r = self.ranges()[2].clone();
        &mut self.params[r]
    }

    pub fn tau_raw_mut(&mut self) -> &mut [f64] {
        let r = self.ranges()[3].clone();
        &mut self.params[r]
    }

    pub fn a_mut(&mut self) -> &mut [f64] {
        let r = self.ranges()[4].clone();
        &mut self.params[r]
    }

    pub fn tau(&self) -> Vec<f64> {
        self.tau_raw().iter().map(|&r| softplus(r) + TAU_FLOOR).collect()
    }

    /// f = sigmoid(W_x x + W_i I + b).
    pub fn gate_into(&self, x: &[f64], input: &[f64], f: &mut [f64]) {
        let (n, m) = (self.hidden, self.inputs);
        let (wx, wi, b) = (self.w_x(), self.w_i(), self.bias());
        for i in 0..n {
            let mut z = b[i];
            let row = &wx[i * n..(i + 1) * n];
            for j in 0..n {
                z += row[j] * x[j];
            }
            let row = &wi[i * m..(i + 1) * m];
            for k in 0..m {
                z += row[k] * input[k];
            }
            f[i] = sigmoid(z);
        }
    }

    /// Right-hand side of the ODE at (x, I).
    pub fn rhs_into(&self, x: &[f64], input: &[f64], tau: &[f64], out: &mut [f64]) {
        self.gate_into(x, input, out);
        let a = self.a();
        for i in 0..self.hidden {
            let f = out[i];
            out[i] = -(1.0 / tau[i] + f) * x[i] + f * a[i];
        }
    }

    /// One fused sub-step in place. Leaves the gate in `f` and the
    /// denominator 1 + Δt(1/τ + f) in `d` for the backward pass.
    pub(crate) fn substep(&self, x: &mut [f64], input: &[f64], tau: &[f64], f: &mut [f64], d: &mut [f64]) {
        self.gate_into(x, input, f);
        let a = self.a();
        let dt = self.dt;
        for i in 0..self.hidden {
            d[i] = 1.0 + dt * (1.0 / tau[i] + f[i]);
            x[i] = (x[i] + dt * f[i] * a[i]) / d[i];
        }
    }

    /// Backward through one sub-step. On entry `g` holds dL/dx_new; on exit
    /// it holds dL/dx_prev. Parameter gradients accumulate into `grad`
    /// (same layout as the cell's parameters).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn substep_backward(
        &self,
        x_prev: &[f64],
        x_new: &[f64],
        f: &[f64],
        d: &[f64],
        tau: &[f64],
        input: &[f64],
        g: &mut [f64],
        grad: &mut [f64],
        gz: &mut [f64],
    ) {
        let (n, m) = (self.hidden, self.inputs);
        let dt = self.dt;
        let [rwx, rwi, rb, rt, ra] = self.ranges();
        let (a, raw) = (self.a(), self.tau_raw());
        for i in 0..n {
            let gi = g[i];
            let gf = gi * dt * (a[i] - x_new[i]) / d[i];
            gz[i] = gf * f[i] * (1.0 - f[i]);
            grad[rb.start + i] += gz[i];
            grad[ra.start + i] += gi * dt * f[i] / d[i];
            let gtau = gi * x_new[i] * dt / (tau[i] * tau[i] * d[i]);
            grad[rt.start + i] += gtau * sigmoid(raw[i]);
        }
        let wx = self.w_x();
        for i in 0..n {
            let gzi = gz[i];
            if gzi == 0.0 {
                continue;
            }
            let row = &mut grad[rwx.start + i * n..rwx.start + (i + 1) * n];
            for j in 0..n {
                row[j] += gzi * x_prev[j];
            }
            let row = &mut grad[rwi.start + i * m..rwi.start + (i + 1) * m];
            for k in 0..m {
                row[k] += gzi * input[k];
            }
        }
        for j in 0..n {
            g[j] /= d[j];
        }
        for i in 0..n {
            let gzi = gz[i];
            let row = &wx[i * n..(i + 1) * n];
            for j in 0..n {
                g[j] += row[j] * gzi;
            }
        }
    }
}

/// Advances `x` by `unfold_steps` fused sub-steps under a constant input.
pub fn ltc_step(cell: &LtcCell, x: &[f64], input: &[f64]) -> Result<Vec<f64>, ForecastError> {
    if x.len() != cell.hidden || input.len() != cell.inputs {
        return Err(ForecastError::InvalidConfig(format!(
            "cell expects state {} and input {}, got {} and {}",
            cell.hidden,
            cell.inputs,
            x.len(),
            input.len()
        )));
    }
    let tau = cell.tau();
    let mut x = x.to_vec();
    let mut f = vec![0.0; cell.hidden];
    let mut d = vec![0.0; cell.hidden];
    for _ in 0..cell.unfold_steps {
        cell.substep(&mut x, input, &tau, &mut f, &mut d);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite("LTC state"));
    }
    Ok(x)
}

/// Classical RK4 over `duration` with step `h`, input held constant. Used as
/// an independent reference for the fused solver.
pub fn reference_trajectory(cell: &LtcCell, x0: &[f64], input: &[f64], duration: f64, h: f64) -> Vec<f64> {
    let n = cell.hidden;
    let tau = cell.tau();
    let steps = (duration / h).round() as usize;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for _ in 0..steps {
        cell.rhs_into(&x, input, &tau, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        cell.rhs_into(&tmp, input, &tau, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        cell.rhs_into(&tmp, input, &tau, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        cell.rhs_into(&tmp, input, &tau, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}
