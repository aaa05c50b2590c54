//! Independent reference solutions for the MPC problem.
//!
//! Nothing here calls into the solver: costs are evaluated by plain rollout and
//! minima are found by exhaustive search over a discretized input grid or by
//! solving the stationarity conditions of the one-step problem directly.

#![allow(dead_code)]

use rand::{Rng, RngCore};
use sb_core::control::{FitResidual, MpcConfig, MpcInput, ZoneModel};

pub struct Instance {
    pub model: ZoneModel,
    pub input: MpcInput,
    pub cfg: MpcConfig,
}

pub fn random_instance(rng: &mut impl RngCore, horizon: usize) -> Instance {
    let model = ZoneModel {
        a_t: rng.random_range(0.5..0.99),
        b_h: rng.random_range(0.05..1.0),
        b_f: rng.random_range(-0.5..0.0),
        c_t: rng.random_range(0.01..0.5),
        a_h: rng.random_range(0.5..0.99),
        d_f: rng.random_range(-1.5..0.0),
        c_h: rng.random_range(0.01..0.5),
        fit_residual: FitResidual::default(),
    };
    let input = MpcInput::constant(
        rng.random_range(10.0..30.0),
        rng.random_range(20.0..80.0),
        rng.random_range(5.0..25.0),
        rng.random_range(20.0..70.0),
        rng.random_range(18.0..26.0),
        rng.random_range(35.0..60.0),
    );
    let cfg = MpcConfig {
        horizon,
        weight_tracking: rng.random_range(0.1..10.0),
        weight_humidity: rng.random_range(0.0..1.0),
        weight_effort: rng.random_range(0.01..1.0),
        ..MpcConfig::default()
    };
    Instance { model, input, cfg }
}

/// Per-step cost contributions of applying `u` from state `(t, h)`.
#[inline]
fn step(inst: &Instance, t: f64, h: f64, u_h: f64, u_f: f64) -> (f64, f64, f64) {
    let m = &inst.model;
    let i = &inst.input;
    let (t_ref, h_ref) = i.references[0];
    let t1 = m.a_t * t + m.b_h * u_h + m.b_f * u_f + m.c_t * i.ambient_temperature_c;
    let h1 = m.a_h * h + m.d_f * u_f + m.c_h * i.ambient_humidity_pct;
    let q = inst.cfg.weight_tracking;
    let cost = q * (t_ref - t1).powi(2)
        + q * inst.cfg.weight_humidity * (h_ref - h1).powi(2)
        + inst.cfg.weight_effort * (u_h * u_h + u_f * u_f);
    (t1, h1, cost)
}

/// Cost of an input sequence by direct rollout (constant references only).
pub fn rollout_cost(inst: &Instance, sequence: &[[f64; 2]]) -> f64 {
    let (mut t, mut h) = (inst.input.temperature_c, inst.input.humidity_pct);
    let mut total = 0.0;
    for u in sequence {
        let (t1, h1, c) = step(inst, t, h, u[0], u[1]);
        total += c;
        t = t1;
        h = h1;
    }
    total
}

struct Search<'a> {
    inst: &'a Instance,
    levels: Vec<f64>,
    best: f64,
    best_seq: Vec<[f64; 2]>,
    current: Vec<[f64; 2]>,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, t: f64, h: f64, partial: f64) {
        let n = self.inst.cfg.horizon;
        let levels = self.levels.len();
        for i in 0..levels {
            let u_h = self.levels[i];
            for j in 0..levels {
                let u_f = self.levels[j];
                let (t1, h1, c) = step(self.inst, t, h, u_h, u_f);
                let total = partial + c;
                // every remaining term is non-negative, so a partial sum above the best is final
                if total >= self.best {
                    continue;
                }
                self.current[depth] = [u_h, u_f];
                if depth + 1 == n {
                    self.best = total;
                    self.best_seq.clone_from(&self.current);
                } else {
                    self.descend(depth + 1, t1, h1, total);
                }
            }
        }
    }
}

/// Exhaustive minimum over all sequences whose inputs lie on a `levels`-point grid of [0, 1].
pub fn grid_minimum(inst: &Instance, levels: usize) -> (f64, Vec<[f64; 2]>) {
    let grid: Vec<f64> = (0..levels).map(|i| i as f64 / (levels - 1) as f64).collect();
    let mut search = Search {
        inst,
        levels: grid,
        best: f64::INFINITY,
        best_seq: Vec::new(),
        current: vec![[0.0; 2]; inst.cfg.horizon],
    };
    search.descend(0, inst.input.temperature_c, inst.input.humidity_pct, 0.0);
    (search.best, search.best_seq)
}

/// Unconstrained minimizer of the one-step problem from its stationarity conditions.
pub fn one_step_unconstrained(inst: &Instance) -> (f64, f64) {
    let m = &inst.model;
    let i = &inst.input;
    let (t_ref, h_ref) = i.references[0];
    let q = inst.cfg.weight_tracking;
    let w = inst.cfg.weight_humidity;
    let r = inst.cfg.weight_effort;
    let e_t = t_ref - m.a_t * i.temperature_c - m.c_t * i.ambient_temperature_c;
    let e_h = h_ref - m.a_h * i.humidity_pct - m.c_h * i.ambient_humidity_pct;
    // [a11 a12; a12 a22] [u_h; u_f] = [r1; r2]
    let a11 = q * m.b_h * m.b_h + r;
    let a12 = q * m.b_h * m.b_f;
    let a22 = q * m.b_f * m.b_f + q * w * m.d_f * m.d_f + r;
    let r1 = q * m.b_h * e_t;
    let r2 = q * m.b_f * e_t + q * w * m.d_f * e_h;
    let det = a11 * a22 - a12 * a12;
    ((r1 * a22 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det)
}
