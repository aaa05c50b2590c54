//! Least-squares identification of the per-zone one-step models
//!
//! ```text
//! T[k+1] = a_T*T[k] + b_h*u_h[k] + b_f*u_f[k] + c_T*T_amb[k]
//! H[k+1] = a_H*H[k] + d_f*u_f[k] + c_H*H_amb[k]
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Samples required per fitted coefficient of the larger regression.
pub const MIN_SAMPLES_PER_COEFFICIENT: usize = 10;
const TEMPERATURE_COEFFICIENTS: usize = 4;
const HUMIDITY_COEFFICIENTS: usize = 3;
/// Smallest admissible ratio between the extreme singular values of a regressor.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IdentError {
    #[error("insufficient data: need {needed} transitions, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("inputs are constant over the whole history; nothing excites the plant")]
    Unexcited,
    #[error("{0} regressor is rank deficient")]
    RankDeficient(&'static str),
    #[error("identified model is unstable (a_T = {a_t}, a_H = {a_h})")]
    Unstable { a_t: f64, a_h: f64 },
    #[error("history contains non-finite values")]
    NonFinite,
}

/// One sampled instant: measured outputs, applied inputs and ambient data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentSample {
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub heater: f64,
    pub fan: f64,
    pub ambient_temperature_c: f64,
    pub ambient_humidity_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitResidual {
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneModel {
    pub a_t: f64,
    pub b_h: f64,
    pub b_f: f64,
    pub c_t: f64,
    pub a_h: f64,
    pub d_f: f64,
    pub c_h: f64,
    pub fit_residual: FitResidual,
}

impl ZoneModel {
    pub fn next_temperature(&self, t: f64, heater: f64, fan: f64, ambient_t: f64) -> f64 {
        self.a_t * t + self.b_h * heater + self.b_f * fan + self.c_t * ambient_t
    }

    pub fn next_humidity(&self, h: f64, fan: f64, ambient_h: f64) -> f64 {
        self.a_h * h + self.d_f * fan + self.c_h * ambient_h
    }

    pub fn is_stable(&self) -> bool {
        self.a_t.abs() < 1.0 && self.a_h.abs() < 1.0
    }

    pub fn is_finite(&self) -> bool {
        [self.a_t, self.b_h, self.b_f, self.c_t, self.a_h, self.d_f, self.c_h]
            .iter()
            .all(|v| v.is_finite())
    }
}

fn solve(regressor: DMatrix<f64>, target: DVector<f64>, name: &'static str) -> Result<(DVector<f64>, f64), IdentError> {
    let svd = regressor.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min / max < RANK_TOLERANCE {
        return Err(IdentError::RankDeficient(name));
    }
    let theta = svd.solve(&target, 0.0).map_err(|_| IdentError::RankDeficient(name))?;
    let residual = &target - &regressor * &theta;
    let rms = (residual.norm_squared() / target.len() as f64).sqrt();
    Ok((theta, rms))
}

/// Fits both one-step models to consecutive samples.
pub fn identify_model(history: &[IdentSample]) -> Result<ZoneModel, IdentError> {
    let needed = MIN_SAMPLES_PER_COEFFICIENT * TEMPERATURE_COEFFICIENTS.max(HUMIDITY_COEFFICIENTS);
    let transitions = history.len().saturating_sub(1);
    if transitions < needed {
        return Err(IdentError::InsufficientData { needed, got: transitions });
    }
    let finite = history.iter().all(|s| {
        [s.temperature_c, s.humidity_pct, s.heater, s.fan, s.ambient_temperature_c, s.ambient_humidity_pct]
            .iter()
            .all(|v| v.is_finite())
    });
    if !finite {
        return Err(IdentError::NonFinite);
    }
    let first = history[0];
    let constant = history[..transitions]
        .iter()
        .all(|s| s.heater == first.heater && s.fan == first.fan);
    if constant {
        return Err(IdentError::Unexcited);
    }

    let rows = &history[..transitions];
    let next = &history[1..];

    let x_t = DMatrix::from_fn(transitions, TEMPERATURE_COEFFICIENTS, |i, j| {
        let s = rows[i];
        [s.temperature_c, s.heater, s.fan, s.ambient_temperature_c][j]
    });
    let y_t = DVector::from_iterator(transitions, next.iter().map(|s| s.temperature_c));
    let (theta_t, rms_t) = solve(x_t, y_t, "temperature")?;

    let x_h = DMatrix::from_fn(transitions, HUMIDITY_COEFFICIENTS, |i, j| {
        let s = rows[i];
        [s.humidity_pct, s.fan, s.ambient_humidity_pct][j]
    });
    let y_h = DVector::from_iterator(transitions, next.iter().map(|s| s.humidity_pct));
    let (theta_h, rms_h) = solve(x_h, y_h, "humidity")?;

    let model = ZoneModel {
        a_t: theta_t[0],
        b_h: theta_t[1],
        b_f: theta_t[2],
        c_t: theta_t[3],
        a_h: theta_h[0],
        d_f: theta_h[1],
        c_h: theta_h[2],
        fit_residual: FitResidual { temperature_c: rms_t, humidity_pct: rms_h },
    };
    if !model.is_stable() {
        return Err(IdentError::Unstable { a_t: model.a_t, a_h: model.a_h });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthesize(model: &ZoneModel, n: usize, seed: u64) -> Vec<IdentSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 20.0;
        let mut h = 50.0;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let s = IdentSample {
                temperature_c: t,
                humidity_pct: h,
                heater: rng.random_range(0.0..1.0),
                fan: rng.random_range(0.0..1.0),
                ambient_temperature_c: 15.0 + 5.0 * (k as f64 / 40.0).sin(),
                ambient_humidity_pct: 40.0 + 3.0 * (k as f64 / 25.0).cos(),
            };
            t = model.next_temperature(t, s.heater, s.fan, s.ambient_temperature_c);
            h = model.next_humidity(h, s.fan, s.ambient_humidity_pct);
            out.push(s);
        }
        out
    }

    #[test]
    fn recovers_exact_model() {
        let truth = ZoneModel {
            a_t: 0.95,
            b_h: 0.3,
            b_f: -0.2,
            c_t: 0.05,
            a_h: 0.98,
            d_f: -0.4,
            c_h: 0.02,
            fit_residual: FitResidual::default(),
        };
        let fit = identify_model(&synthesize(&truth, 200, 3)).unwrap();
        for (got, want) in [
            (fit.a_t, truth.a_t),
            (fit.b_h, truth.b_h),
            (fit.b_f, truth.b_f),
            (fit.c_t, truth.c_t),
            (fit.a_h, truth.a_h),
            (fit.d_f, truth.d_f),
            (fit.c_h, truth.c_h),
        ] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!(fit.fit_residual.temperature_c < 1e-9);
    }

    #[test]
    fn rejects_bad_histories() {
        let zero = IdentSample {
            temperature_c: 20.0,
            humidity_pct: 50.0,
            heater: 0.0,
            fan: 0.0,
            ambient_temperature_c: 15.0,
            ambient_humidity_pct: 40.0,
        };
        assert_eq!(identify_model(&vec![zero; 100]), Err(IdentError::Unexcited));
        assert!(matches!(identify_model(&vec![zero; 10]), Err(IdentError::InsufficientData { needed: 40, got: 9 })));

        // heater excited, fan never moves: fan column is identically zero
        let mut rows = vec![zero; 100];
        for (i, r) in rows.iter_mut().enumerate() {
            r.heater = (i % 2) as f64;
            r.temperature_c = 20.0 + (i % 3) as f64;
        }
        assert!(matches!(identify_model(&rows), Err(IdentError::RankDeficient(_))));
    }

    #[test]
    fn rejects_unstable_fit() {
        let truth = ZoneModel {
            a_t: 1.02,
            b_h: 0.3,
            b_f: -0.2,
            c_t: 0.01,
            a_h: 0.9,
            d_f: -0.4,
            c_h: 0.1,
            fit_residual: FitResidual::default(),
        };
        assert!(matches!(identify_model(&synthesize(&truth, 60, 1)), Err(IdentError::Unstable { .. })));
    }
}
