mod oracle;

use oracle::{grid_minimum, one_step_unconstrained, random_instance, rollout_cost, Instance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sb_core::control::{mpc_step, FitResidual, MpcConfig, MpcInput, SolveStatus, ZoneModel};

fn solve(inst: &Instance) -> sb_core::control::MpcSolution {
    let sol = mpc_step(&inst.model, &inst.input, &inst.cfg);
    assert!(!matches!(sol.status, SolveStatus::Fallback(_)), "{:?}", sol.status);
    sol
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn scalar_one_step_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut checked = 0;
    while checked < 100 {
        let mut inst = random_instance(&mut rng, 1);
        inst.model.b_f = 0.0;
        inst.cfg.weight_humidity = 0.0;
        let m = &inst.model;
        let q = inst.cfg.weight_tracking;
        let r = inst.cfg.weight_effort;
        let (t_ref, _) = inst.input.references[0];
        let c = m.c_t * inst.input.ambient_temperature_c;
        let expected = q * m.b_h * (t_ref - m.a_t * inst.input.temperature_c - c) / (q * m.b_h * m.b_h + r);
        if !(0.02..0.98).contains(&expected) {
            continue;
        }
        let sol = solve(&inst);
        assert!(rel(sol.heater, expected) < 1e-9, "{} vs {expected}", sol.heater);
        assert_eq!(sol.fan, 0.0);
        checked += 1;
    }
}

#[test]
fn two_input_one_step_matches_stationarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0;
    while checked < 100 {
        let inst = random_instance(&mut rng, 1);
        let (u_h, u_f) = one_step_unconstrained(&inst);
        if !((0.02..0.98).contains(&u_h) && (0.02..0.98).contains(&u_f)) {
            continue;
        }
        let sol = solve(&inst);
        assert!(rel(sol.heater, u_h) < 1e-9, "{} vs {u_h}", sol.heater);
        assert!(rel(sol.fan, u_f) < 1e-9, "{} vs {u_f}", sol.fan);
        checked += 1;
    }
}

#[test]
fn one_step_boundary_cases_are_clipped_stationary_points() {
    // with a single input active the projection of the unconstrained optimum is exact
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..100 {
        let mut inst = random_instance(&mut rng, 1);
        inst.model.b_f = 0.0;
        inst.cfg.weight_humidity = 0.0;
        let (u_h, _) = one_step_unconstrained(&inst);
        let sol = solve(&inst);
        assert!((sol.heater - u_h.clamp(0.0, 1.0)).abs() < 1e-9);
    }
}

#[test]
fn never_worse_than_exhaustive_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..45 {
        let inst = random_instance(&mut rng, 1 + i % 3);
        let (grid_best, _) = grid_minimum(&inst, 21);
        let sol = solve(&inst);
        let cost = rollout_cost(&inst, &sol.sequence);
        assert!(cost <= grid_best + 1e-6, "instance {i}: {cost} > {grid_best}");
        assert!((cost - sol.cost).abs() <= 1e-9 * cost.max(1.0));
    }
}

#[test]
fn two_step_first_input_within_one_grid_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..30 {
        let inst = random_instance(&mut rng, 2);
        let (_, grid_seq) = grid_minimum(&inst, 21);
        let sol = solve(&inst);
        let cell = 1.0 / 20.0;
        assert!((sol.heater - grid_seq[0][0]).abs() <= cell + 1e-9, "instance {i}: heater {} vs {:?}", sol.heater, grid_seq[0]);
        assert!((sol.fan - grid_seq[0][1]).abs() <= cell + 1e-9, "instance {i}: fan {} vs {:?}", sol.fan, grid_seq[0]);
    }
}

#[test]
fn equilibrium_optimum_beats_probes() {
    let model = ZoneModel {
        a_t: 0.9,
        b_h: 0.4,
        b_f: -0.3,
        c_t: 0.1,
        a_h: 0.95,
        d_f: -0.6,
        c_h: 0.05,
        fit_residual: FitResidual::default(),
    };
    let input = MpcInput::constant(18.0, 40.0, 18.0, 40.0, 18.0, 40.0);
    let cfg = MpcConfig { horizon: 3, ..MpcConfig::default() };
    let sol = mpc_step(&model, &input, &cfg);
    assert_eq!((sol.heater, sol.fan), (0.0, 0.0));
    let inst = Instance { model, input, cfg };
    for probe in [[0.1, 0.0], [0.0, 0.1], [0.5, 0.5], [1.0, 1.0]] {
        assert!(sol.cost <= rollout_cost(&inst, &[probe; 3]));
    }
}

fn arb_model() -> impl Strategy<Value = ZoneModel> {
    (0.0..0.999f64, -2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64, 0.0..0.999f64, -2.0..2.0f64, -1.0..1.0f64).prop_map(
        |(a_t, b_h, b_f, c_t, a_h, d_f, c_h)| ZoneModel {
            a_t,
            b_h,
            b_f,
            c_t,
            a_h,
            d_f,
            c_h,
            fit_residual: FitResidual::default(),
        },
    )
}

fn arb_input() -> impl Strategy<Value = MpcInput> {
    (-20.0..50.0f64, 0.0..100.0f64, -20.0..40.0f64, 0.0..100.0f64, 10.0..30.0f64, 20.0..80.0f64)
        .prop_map(|(t, h, at, ah, tr, hr)| MpcInput::constant(t, h, at, ah, tr, hr))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn duties_are_saturated(model in arb_model(), input in arb_input(), horizon in 1usize..12, r in 0.001..5.0f64) {
        let cfg = MpcConfig { horizon, weight_effort: r, ..MpcConfig::default() };
        let sol = mpc_step(&model, &input, &cfg);
        prop_assert!((0.0..=1.0).contains(&sol.heater));
        prop_assert!((0.0..=1.0).contains(&sol.fan));
        for u in &sol.sequence {
            prop_assert!((0.0..=1.0).contains(&u[0]) && (0.0..=1.0).contains(&u[1]));
        }
    }

    #[test]
    fn cost_scaling_keeps_argmin(model in arb_model(), input in arb_input(), horizon in 1usize..6, lambda in 0.01..100.0f64) {
        let cfg = MpcConfig { horizon, ..MpcConfig::default() };
        let scaled = MpcConfig {
            weight_tracking: cfg.weight_tracking * lambda,
            weight_effort: cfg.weight_effort * lambda,
            ..cfg.clone()
        };
        let a = mpc_step(&model, &input, &cfg);
        let b = mpc_step(&model, &input, &scaled);
        prop_assert!((a.heater - b.heater).abs() < 1e-6, "{} vs {}", a.heater, b.heater);
        prop_assert!((a.fan - b.fan).abs() < 1e-6, "{} vs {}", a.fan, b.fan);
    }
}
