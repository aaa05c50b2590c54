//! Receding-horizon controller for one zone.
//!
//! The horizon cost
//!
//! ```text
//! J(u) = sum_{k=1..N} q (T_ref[k] - T[k])^2 + q w_H (H_ref[k] - H[k])^2 + r (u_h[k-1]^2 + u_f[k-1]^2)
//! ```
//!
//! is condensed into a box-constrained QP `1/2 u'Pu + g'u` over the stacked input
//! sequence and solved with accelerated projected gradient (FISTA with adaptive restart).
//! The step is `1/L` where `L` is the Gershgorin bound on the largest eigenvalue of `P`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ident::ZoneModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcConfigError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("{0} must be finite and non-negative")]
    Weight(&'static str),
    #[error("effort weight must be positive")]
    Effort,
    #[error("input bounds {0:?} must satisfy 0 <= lo <= hi <= 1")]
    Bounds([f64; 2]),
    #[error("sample period {period} s does not match plant tick {tick} s")]
    Period { period: f64, tick: f64 },
    #[error("solver settings are invalid")]
    Solver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub weight_tracking: f64,
    pub weight_humidity: f64,
    pub weight_effort: f64,
    pub heater_bounds: [f64; 2],
    pub fan_bounds: [f64; 2],
    pub sample_period_s: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            weight_tracking: 1.0,
            weight_humidity: 0.05,
            weight_effort: 0.05,
            heater_bounds: [0.0, 1.0],
            fan_bounds: [0.0, 1.0],
            sample_period_s: 5.0,
            max_iterations: 20_000,
            tolerance: 1e-12,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self, tick_s: f64) -> Result<(), MpcConfigError> {
        if self.horizon == 0 {
            return Err(MpcConfigError::ZeroHorizon);
        }
        if !(self.weight_tracking.is_finite() && self.weight_tracking >= 0.0) {
            return Err(MpcConfigError::Weight("tracking weight"));
        }
        if !(self.weight_humidity.is_finite() && self.weight_humidity >= 0.0) {
            return Err(MpcConfigError::Weight("humidity weight"));
        }
        if !(self.weight_effort.is_finite() && self.weight_effort > 0.0) {
            return Err(MpcConfigError::Effort);
        }
        for b in [self.heater_bounds, self.fan_bounds] {
            if !(0.0 <= b[0] && b[0] <= b[1] && b[1] <= 1.0) {
                return Err(MpcConfigError::Bounds(b));
            }
        }
        if (self.sample_period_s - tick_s).abs() > 1e-9 {
            return Err(MpcConfigError::Period { period: self.sample_period_s, tick: tick_s });
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(MpcConfigError::Solver);
        }
        Ok(())
    }
}

/// Everything the optimizer needs about the current instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcInput {
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub ambient_temperature_c: f64,
    pub ambient_humidity_pct: f64,
    /// Additive one-step offsets estimated by the disturbance observer.
    pub temperature_offset: f64,
    pub humidity_offset: f64,
    /// `(T_ref, H_ref)` for prediction steps `1..=N`; the last entry is repeated if short.
    pub references: Vec<(f64, f64)>,
}

impl MpcInput {
    pub fn constant(t: f64, h: f64, ambient_t: f64, ambient_h: f64, t_ref: f64, h_ref: f64) -> Self {
        Self {
            temperature_c: t,
            humidity_pct: h,
            ambient_temperature_c: ambient_t,
            ambient_humidity_pct: ambient_h,
            temperature_offset: 0.0,
            humidity_offset: 0.0,
            references: vec![(t_ref, h_ref)],
        }
    }

    fn reference(&self, k: usize) -> (f64, f64) {
        self.references
            .get(k)
            .or(self.references.last())
            .copied()
            .unwrap_or((self.temperature_c, self.humidity_pct))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// Solver could not produce a finite answer; all duties were set to zero.
    Fallback(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcSolution {
    pub heater: f64,
    pub fan: f64,
    /// Full optimized sequence `[u_h, u_f]` per step.
    pub sequence: Vec<[f64; 2]>,
    pub cost: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl MpcSolution {
    fn fallback(reason: String) -> Self {
        MpcSolution {
            heater: 0.0,
            fan: 0.0,
            sequence: Vec::new(),
            cost: f64::NAN,
            iterations: 0,
            status: SolveStatus::Fallback(reason),
        }
    }
}

/// Horizon cost of an input sequence, evaluated by direct rollout of the model.
pub fn sequence_cost(model: &ZoneModel, input: &MpcInput, cfg: &MpcConfig, sequence: &[[f64; 2]]) -> f64 {
    let mut t = input.temperature_c;
    let mut h = input.humidity_pct;
    let mut cost = 0.0;
    for (k, u) in sequence.iter().enumerate() {
        t = model.next_temperature(t, u[0], u[1], input.ambient_temperature_c) + input.temperature_offset;
        h = model.next_humidity(h, u[1], input.ambient_humidity_pct) + input.humidity_offset;
        let (t_ref, h_ref) = input.reference(k);
        cost += cfg.weight_tracking * (t_ref - t).powi(2)
            + cfg.weight_tracking * cfg.weight_humidity * (h_ref - h).powi(2)
            + cfg.weight_effort * (u[0] * u[0] + u[1] * u[1]);
    }
    cost
}

struct Qp {
    n: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Qp {
    fn build(model: &ZoneModel, input: &MpcInput, cfg: &MpcConfig) -> Self {
        let horizon = cfg.horizon;
        let n = 2 * horizon;
        // free response (all inputs zero) and input-to-output maps
        let mut free_t = Vec::with_capacity(horizon);
        let mut free_h = Vec::with_capacity(horizon);
        let (mut t, mut h) = (input.temperature_c, input.humidity_pct);
        for _ in 0..horizon {
            t = model.next_temperature(t, 0.0, 0.0, input.ambient_temperature_c) + input.temperature_offset;
            h = model.next_humidity(h, 0.0, input.ambient_humidity_pct) + input.humidity_offset;
            free_t.push(t);
            free_h.push(h);
        }
        let mut g_t = vec![0.0; horizon * n];
        let mut g_h = vec![0.0; horizon * n];
        for k in 0..horizon {
            for j in 0..=k {
                let p = (k - j) as i32;
                g_t[k * n + 2 * j] = model.a_t.powi(p) * model.b_h;
                g_t[k * n + 2 * j + 1] = model.a_t.powi(p) * model.b_f;
                g_h[k * n + 2 * j + 1] = model.a_h.powi(p) * model.d_f;
            }
        }
        let q_t = cfg.weight_tracking;
        let q_h = cfg.weight_tracking * cfg.weight_humidity;
        let mut hessian = vec![0.0; n * n];
        let mut linear = vec![0.0; n];
        for k in 0..horizon {
            let (t_ref, h_ref) = input.reference(k);
            let e_t = free_t[k] - t_ref;
            let e_h = free_h[k] - h_ref;
            let row_t = &g_t[k * n..(k + 1) * n];
            let row_h = &g_h[k * n..(k + 1) * n];
            for i in 0..n {
                linear[i] += 2.0 * (q_t * row_t[i] * e_t + q_h * row_h[i] * e_h);
                if row_t[i] == 0.0 && row_h[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    hessian[i * n + j] += 2.0 * (q_t * row_t[i] * row_t[j] + q_h * row_h[i] * row_h[j]);
                }
            }
        }
        for i in 0..n {
            hessian[i * n + i] += 2.0 * cfg.weight_effort;
        }
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for _ in 0..horizon {
            lower.extend([cfg.heater_bounds[0], cfg.fan_bounds[0]]);
            upper.extend([cfg.heater_bounds[1], cfg.fan_bounds[1]]);
        }
        Qp { n, hessian, linear, lower, upper }
    }

    fn gradient(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.hessian[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + self.linear[i];
        }
    }

    fn lipschitz(&self) -> f64 {
        (0..self.n)
            .map(|i| self.hessian[i * self.n..(i + 1) * self.n].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn project(&self, u: &mut [f64]) {
        for i in 0..self.n {
            u[i] = u[i].clamp(self.lower[i], self.upper[i]);
        }
    }

    fn solve(&self, max_iterations: usize, tolerance: f64) -> (Vec<f64>, usize, bool) {
        let step = 1.0 / self.lipschitz();
        let mut x = self.lower.clone();
        let mut y = x.clone();
        let mut x_next = vec![0.0; self.n];
        let mut grad = vec![0.0; self.n];
        let mut momentum = 1.0_f64;
        for iteration in 1..=max_iterations {
            self.gradient(&y, &mut grad);
            for i in 0..self.n {
                x_next[i] = y[i] - step * grad[i];
            }
            self.project(&mut x_next);
            let change = x_next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // restart when the momentum direction opposes the gradient step
            let opposed = y
                .iter()
                .zip(&x_next)
                .zip(&x)
                .map(|((yi, xn), xi)| (yi - xn) * (xn - xi))
                .sum::<f64>()
                > 0.0;
            let next_momentum = if opposed { 1.0 } else { (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0 };
            let beta = if opposed { 0.0 } else { (momentum - 1.0) / next_momentum };
            for i in 0..self.n {
                y[i] = x_next[i] + beta * (x_next[i] - x[i]);
            }
            std::mem::swap(&mut x, &mut x_next);
            momentum = next_momentum;
            if change <= tolerance {
                return (x, iteration, true);
            }
        }
        (x, max_iterations, false)
    }
}

/// Optimizes the horizon and returns the first input of the best sequence.
pub fn mpc_step(model: &ZoneModel, input: &MpcInput, cfg: &MpcConfig) -> MpcSolution {
    if cfg.horizon == 0 {
        return MpcSolution::fallback("horizon is zero".into());
    }
    if !model.is_finite() {
        return MpcSolution::fallback("model has non-finite coefficients".into());
    }
    if !model.is_stable() {
        return MpcSolution::fallback("model is unstable".into());
    }
    let qp = Qp::build(model, input, cfg);
    if qp.hessian.iter().chain(&qp.linear).any(|v| !v.is_finite()) {
        return MpcSolution::fallback("non-finite cost terms".into());
    }
    let (u, iterations, converged) = qp.solve(cfg.max_iterations, cfg.tolerance);
    let sequence: Vec<[f64; 2]> = u.chunks(2).map(|c| [c[0], c[1]]).collect();
    let cost = sequence_cost(model, input, cfg, &sequence);
    if !cost.is_finite() {
        return MpcSolution::fallback(format!("non-finite cost {cost}"));
    }
    MpcSolution {
        heater: sequence[0][0],
        fan: sequence[0][1],
        sequence,
        cost,
        iterations,
        status: if converged { SolveStatus::Converged } else { SolveStatus::IterationLimit },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ident::FitResidual;

    fn model() -> ZoneModel {
        ZoneModel {
            a_t: 0.95,
            b_h: 0.3,
            b_f: -0.2,
            c_t: 0.05,
            a_h: 0.97,
            d_f: -0.5,
            c_h: 0.03,
            fit_residual: FitResidual::default(),
        }
    }

    #[test]
    fn equilibrium_needs_no_effort() {
        let m = model();
        // 0.95*15 + 0.05*15 = 15, 0.97*40 + 0.03*40 = 40
        let input = MpcInput::constant(15.0, 40.0, 15.0, 40.0, 15.0, 40.0);
        let cfg = MpcConfig::default();
        let sol = mpc_step(&m, &input, &cfg);
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!(sol.heater.abs() < 1e-12 && sol.fan.abs() < 1e-12);
        assert!(sol.cost.abs() < 1e-18);
    }

    #[test]
    fn non_finite_state_falls_back() {
        let input = MpcInput::constant(f64::NAN, 40.0, 15.0, 40.0, 22.0, 45.0);
        let sol = mpc_step(&model(), &input, &MpcConfig::default());
        assert!(matches!(sol.status, SolveStatus::Fallback(_)));
        assert_eq!((sol.heater, sol.fan), (0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        let ok = MpcConfig::default();
        assert!(ok.validate(5.0).is_ok());
        assert_eq!(MpcConfig { horizon: 0, ..ok.clone() }.validate(5.0), Err(MpcConfigError::ZeroHorizon));
        assert_eq!(MpcConfig { weight_effort: 0.0, ..ok.clone() }.validate(5.0), Err(MpcConfigError::Effort));
        assert!(matches!(ok.validate(1.0), Err(MpcConfigError::Period { .. })));
        assert!(MpcConfig { fan_bounds: [0.5, 0.2], ..ok }.validate(5.0).is_err());
    }

    #[test]
    fn heating_demand_saturates_heater() {
        let input = MpcInput::constant(10.0, 45.0, 5.0, 45.0, 25.0, 45.0);
        let sol = mpc_step(&model(), &input, &MpcConfig::default());
        assert_eq!(sol.heater, 1.0);
        assert_eq!(sol.fan, 0.0);
    }
}
