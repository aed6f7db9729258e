use super::*;
use crate::kernel::apply_operator;
use crate::models::{make_double_well, make_linear, simulate, NoiseCoeff, RealFn, SimulationConfig};
use crate::qmc::SequenceKind;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

fn zero_obs_model() -> DynamicsModel {
    let f: RealFn = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]);
    let h: RealFn = Arc::new(|_, out: &mut [f64]| out[0] = 0.0);
    DynamicsModel::new("no_obs", 1, 1, f, h)
        .unwrap()
        .with_analytic_div(Arc::new(|_| -1.0))
}

fn identity_obs_model() -> DynamicsModel {
    let f: RealFn = Arc::new(|_, out: &mut [f64]| out[0] = 0.0);
    let h: RealFn = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0]);
    DynamicsModel::new("id_obs", 1, 1, f, h)
        .unwrap()
        .with_analytic_div(Arc::new(|_| 0.0))
}

fn weights_sum(state: &FilterState) -> f64 {
    state.log_weights().iter().map(|w| w.exp()).sum()
}

#[test]
fn initial_weights_are_gaussian() {
    let model = make_linear(2);
    let cfg = FilterConfig::new(50, 3.0, 0.01).unwrap();
    let state = init_filter(&model, &cfg, &[0.0, 0.0]).unwrap();
    let c = state.log_weights()[0] + 0.5 * state.points().point(0).iter().map(|v| v * v).sum::<f64>();
    for (i, x) in state.points().iter().enumerate() {
        let want = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((state.log_weights()[i] - want - c).abs() < 1e-12);
    }
    assert!((weights_sum(&state) - 1.0).abs() < 1e-12);
    assert!(state.signs().iter().all(|&s| s == 1));
}

#[test]
fn symmetric_reference_gives_centred_estimate() {
    let model = make_linear(1);
    let rows: Vec<Vec<f64>> = (0..20)
        .flat_map(|k| {
            let u = 0.02 + 0.023 * k as f64;
            [vec![u], vec![1.0 - u]]
        })
        .collect();
    let unit = PointSet::from_points(&rows, Domain::unit(1)).unwrap();
    let cfg = FilterConfig::new(40, 4.0, 0.01).unwrap();
    let state = init_filter_with_reference(&model, &cfg, Arc::new(unit), &[0.0]).unwrap();
    assert!(state.estimate()[0].abs() < 1e-10 * 4.0);
}

#[test]
fn zero_observation_function_only_predicts() {
    let model = zero_obs_model();
    let cfg = FilterConfig::new(60, 3.0, 0.01).unwrap();
    let mut state = init_filter(&model, &cfg, &[0.5]).unwrap();
    let predicted = apply_operator(state.operator(), state.log_weights()).unwrap();
    step(&mut state, &model, &cfg, &[0.37]).unwrap();
    let mut want = predicted.log_abs.clone();
    crate::logsum::normalize_log_weights(&mut want).unwrap();
    for (a, b) in state.log_weights().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12 || (a.is_infinite() && b.is_infinite()));
    }
}

#[test]
fn zero_increment_penalises_by_half_dt_x_squared() {
    let model = identity_obs_model();
    let dt = 0.01;
    let cfg = FilterConfig::new(40, 2.0, dt).unwrap();
    let mut state = init_filter(&model, &cfg, &[0.0]).unwrap();
    let predicted = apply_operator(state.operator(), state.log_weights()).unwrap();
    step(&mut state, &model, &cfg, &[0.0]).unwrap();
    let shift: Vec<f64> = state
        .points()
        .iter()
        .enumerate()
        .map(|(i, x)| predicted.log_abs[i] - 0.005 * x[0] * x[0])
        .collect();
    let offset = state.log_weights()[0] - shift[0];
    for i in 0..40 {
        if predicted.sign[i] > 0 {
            assert!((state.log_weights()[i] - shift[i] - offset).abs() < 1e-12);
        }
    }
}

#[test]
fn ito_factor_has_unit_mean() {
    let h = [1.0, 2.0, 3.0];
    let dt: f64 = 0.01;
    let mut rng = crate::rng::stream_rng_raw(3, 0, 500);
    let draws = 200_000;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let dy: Vec<f64> = (0..3)
            .map(|_| dt.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let v = ito_log_factor(&h, &dy, dt).exp();
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / draws as f64;
    let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "{mean} +- {se}");
}

#[test]
fn restart_at_origin_reproduces_initial_points() {
    let model = make_linear(2);
    let cfg = FilterConfig::new(64, 1.5, 0.01).unwrap().with_restarts(4);
    let mut state = init_filter(&model, &cfg, &[0.0, 0.0]).unwrap();
    let initial = state.points().clone();
    let reference = Arc::clone(state.reference_unit());
    state.estimate = vec![0.0, 0.0];
    restart(&mut state, &model, &cfg).unwrap();
    assert_eq!(state.points(), &initial);
    assert!(Arc::ptr_eq(&reference, state.reference_unit()));
    let first = state.operator().clone();
    restart(&mut state, &model, &cfg).unwrap();
    assert_eq!(state.operator(), &first);
    assert_eq!(state.diagnostics().restarts, 2);
}

#[test]
fn restart_rejects_non_finite_estimate() {
    let model = make_linear(1);
    let cfg = FilterConfig::new(20, 1.0, 0.01).unwrap().with_restarts(2);
    let mut state = init_filter(&model, &cfg, &[0.0]).unwrap();
    state.estimate = vec![f64::NAN];
    assert!(matches!(restart(&mut state, &model, &cfg), Err(Error::RestartAborted { .. })));
}

#[test]
fn collapse_is_reported() {
    let model = make_linear(1);
    let cfg = FilterConfig::new(20, 1.0, 0.01).unwrap();
    let mut state = init_filter(&model, &cfg, &[0.0]).unwrap();
    assert!(matches!(
        state.set_log_weights(&[f64::NEG_INFINITY; 20]),
        Err(Error::FilterCollapse { .. })
    ));
}

fn linear_case(seed: u64) -> (DynamicsModel, Trajectory, ObservationPath) {
    let model = make_linear(1);
    let cfg = SimulationConfig::new(2.0, 200, seed);
    let (t, o) = simulate(&model, &[0.8], &cfg).unwrap();
    (model, t, o)
}

#[test]
fn run_invariants_hold() {
    let (model, truth, obs) = linear_case(11);
    let cfg = FilterConfig::new(80, 2.0, 0.01).unwrap().with_restarts(10);
    let mut state = init_filter(&model, &cfg, truth.initial()).unwrap();
    for k in 1..=obs.steps() {
        step(&mut state, &model, &cfg, obs.increment(k - 1)).unwrap();
        assert!((weights_sum(&state) - 1.0).abs() < 1e-12);
        let (lo, hi) = state
            .points()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x[0]), b.max(x[0])));
        assert!(state.estimate()[0] >= lo && state.estimate()[0] <= hi);
        if k % 10 == 0 && k < obs.steps() {
            restart(&mut state, &model, &cfg).unwrap();
        }
    }
    let res = run_filter(&model, &obs, &truth, &cfg).unwrap();
    assert!(res.rmse >= res.me);
    assert_eq!(res.steps(), 200);
    assert_eq!(res.diagnostics.restarts, 19);
}

#[test]
fn runs_are_deterministic() {
    let (model, truth, obs) = linear_case(5);
    let cfg = FilterConfig::new(64, 2.0, 0.01).unwrap().with_restarts(8);
    let a = run_filter(&model, &obs, &truth, &cfg).unwrap();
    let b = run_filter(&model, &obs, &truth, &cfg).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert_eq!(a.rmse.to_bits(), b.rmse.to_bits());
}

#[test]
fn interval_one_with_global_width_matches_plain_run() {
    let (model, truth, obs) = linear_case(9);
    let plain = FilterConfig::new(50, 3.0, 0.01).unwrap();
    let mut global = FilterConfig::new(50, 1.0, 0.01).unwrap();
    global.global_half_width = Some(3.0);
    let a = run_filter(&model, &obs, &truth, &plain).unwrap();
    let b = run_filter(&model, &obs, &truth, &global).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert_eq!(b.diagnostics.restarts, 0);
}

#[test]
fn observations_beat_frozen_prior() {
    let model = make_linear(1)
        .with_obs_noise(NoiseCoeff::Constant(DMatrix::from_element(1, 1, 0.05)))
        .unwrap();
    let sim = SimulationConfig::new(2.0, 200, 1);
    let (truth, obs) = simulate(&model, &[1.5], &sim).unwrap();
    let mut cfg = FilterConfig::new(200, 4.0, 0.01).unwrap();
    cfg.x0_guess = Some(vec![0.0]);
    let res = run_filter(&model, &obs, &truth, &cfg).unwrap();
    let frozen: Vec<f64> = vec![0.0; 200];
    let prior = crate::bench::metrics::rmse(&frozen, truth.after_initial(), 1).unwrap();
    assert!(res.rmse < 0.5 * prior, "{} vs {}", res.rmse, prior);
}

#[test]
fn noisy_models_run() {
    let model = make_double_well();
    let sim = SimulationConfig::new(1.0, 100, 2);
    let (truth, obs) = simulate(&model, &[0.0], &sim).unwrap();
    let mut cfg = FilterConfig::new(100, 3.0, 0.01).unwrap().with_order(2).unwrap();
    cfg.sequence = Some(SequenceKind::Sobol);
    let res = run_filter(&model, &obs, &truth, &cfg).unwrap();
    assert!(res.rmse.is_finite());
}

#[test]
fn mismatched_inputs_rejected() {
    let (model, truth, obs) = linear_case(1);
    let cfg = FilterConfig::new(20, 2.0, 0.02).unwrap();
    assert!(run_filter(&model, &obs, &truth, &cfg).is_err());
}
