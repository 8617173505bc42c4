use batwing_core::aero::{AeroEnvironment, SegmentWrench};
use batwing_core::control::{ControlOutput, ControllerConfig};
use batwing_core::dynamics::{DynamicState, JointCoupling, MassProperties};
use batwing_core::kinematics::{KinematicState, MechanismConfig};
use batwing_core::optim::{
    best_effort, cost_of_trajectory, evaluate_cost, minimize, optimize_zero_path, CostWeights, Method,
    OptimizationConfig, SearchConfig,
};
use batwing_core::sim::{EnergySample, Model, SimConfig, Trajectory, TrajectorySample};
use batwing_core::Error;
use nalgebra::{Matrix4, SVector, Vector3, Vector4};
use proptest::prelude::*;

const X_STAR: [f64; 4] = [0.3, -0.2, 0.5, -0.7];

/// SPD with off-diagonal coupling and a 10:1 spread of curvatures.
fn curvature() -> Matrix4<f64> {
    let b = Matrix4::new(
        1.0, 0.2, 0.0, 0.1, //
        0.0, 2.0, 0.3, 0.0, //
        0.1, 0.0, 1.5, 0.2, //
        0.0, 0.1, 0.0, 3.0,
    );
    b.transpose() * b
}

fn quadratic(center: [f64; 4], a: Matrix4<f64>) -> impl Fn(&[f64]) -> Option<f64> + Sync {
    move |x| {
        let d = Vector4::from_column_slice(x) - Vector4::from(center);
        Some(d.dot(&(a * d)))
    }
}

fn search(method: Method) -> SearchConfig {
    SearchConfig { method, budget: 500, seed: 7, ..Default::default() }
}

#[test]
fn bounded_quadratic_optimum_is_recovered_within_500_evaluations() {
    for method in [Method::NelderMead, Method::Cmaes] {
        let r =
            best_effort(minimize(quadratic(X_STAR, curvature()), &[0.0; 4], &[-1.0; 4], &[1.0; 4], &search(method)))
                .unwrap();
        assert!(r.evaluations <= 500);
        let err = r.best_params.iter().zip(X_STAR).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{method:?}: error {err}, {} evaluations", r.evaluations);
    }
}

#[test]
fn optimum_outside_the_box_lands_on_its_projection() {
    let a = Matrix4::from_diagonal(&Vector4::new(1.0, 4.0, 2.0, 0.5));
    let center = [2.0, -0.5, -3.0, 0.25];
    let projection = [1.0, -0.5, -1.0, 0.25];
    for method in [Method::NelderMead, Method::Cmaes] {
        let cfg = SearchConfig { budget: 2000, ..search(method) };
        let r = minimize(quadratic(center, a), &[0.0; 4], &[-1.0; 4], &[1.0; 4], &cfg).unwrap();
        for (p, q) in r.best_params.iter().zip(projection) {
            assert!((p - q).abs() < 1e-3, "{method:?}: {:?} {} {}", r.best_params, r.evaluations, r.converged);
        }
    }
}

#[test]
fn collapsed_bounds_return_the_point_without_searching() {
    let r = minimize(quadratic(X_STAR, curvature()), &[0.9; 4], &[0.1; 4], &[0.1; 4], &search(Method::Cmaes)).unwrap();
    assert_eq!(r.best_params, vec![0.1; 4]);
    assert_eq!(r.evaluations, 1);
    assert!(r.converged);
}

#[test]
fn seeded_searches_are_deterministic() {
    for method in [Method::NelderMead, Method::Cmaes] {
        let cfg = SearchConfig { budget: 120, ..search(method) };
        let run =
            || best_effort(minimize(quadratic(X_STAR, curvature()), &[0.0; 4], &[-1.0; 4], &[1.0; 4], &cfg)).unwrap();
        assert_eq!(run(), run());
    }
}

#[test]
fn best_cost_never_exceeds_the_initial_guess() {
    let cfg = SearchConfig { budget: 40, ..search(Method::Cmaes) };
    let r =
        best_effort(minimize(quadratic(X_STAR, curvature()), &[0.25, -0.2, 0.5, -0.7], &[-1.0; 4], &[1.0; 4], &cfg))
            .unwrap();
    assert!(r.best_cost <= r.initial_cost);
    assert_eq!(r.best_cost, r.best_so_far().last().copied().unwrap());
}

#[test]
fn failing_region_never_supplies_the_best_point() {
    // optimum sits inside the failing region; the search must settle outside it
    let f = |x: &[f64]| if x[0] > 0.2 { None } else { quadratic(X_STAR, curvature())(x) };
    for method in [Method::NelderMead, Method::Cmaes] {
        let r = best_effort(minimize(f, &[0.0; 4], &[-1.0; 4], &[1.0; 4], &search(method))).unwrap();
        assert!(r.best_params[0] <= 0.2);
        let best_entry = r.trace.iter().find(|e| e.cost == r.best_cost).unwrap();
        assert!(!best_entry.diverged);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_candidate_is_feasible_and_best_so_far_is_monotone(
        lo in prop::array::uniform4(-2.0f64..0.0),
        width in prop::array::uniform4(0.0f64..2.0),
        x0 in prop::array::uniform4(-3.0f64..3.0),
        seed in 0u64..1000,
        cmaes in any::<bool>(),
    ) {
        let hi: Vec<f64> = lo.iter().zip(width).map(|(l, w)| l + w).collect();
        let method = if cmaes { Method::Cmaes } else { Method::NelderMead };
        let cfg = SearchConfig { budget: 80, seed, ..search(method) };
        let r = best_effort(minimize(quadratic(X_STAR, curvature()), &x0, &lo, &hi, &cfg)).unwrap();
        for e in &r.trace {
            for i in 0..4 {
                prop_assert!(e.params[i] >= lo[i] && e.params[i] <= hi[i]);
            }
        }
        let best = r.best_so_far();
        prop_assert!(best.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(r.evaluations <= 80);
    }
}

fn sample(t: f64, pitch: f64, v: [f64; 3]) -> TrajectorySample {
    let mut dynamic = DynamicState::at_rest([0.0; 4]);
    dynamic.qd.fixed_rows_mut::<3>(0).copy_from_slice(&v);
    TrajectorySample {
        t,
        kinematic: KinematicState { q: SVector::zeros(), qd: SVector::zeros() },
        dynamic,
        control: ControlOutput { u_g: 0.0, u_p: Vector4::zeros(), l_ref: Vector4::zeros() },
        wrenches: [SegmentWrench::default(); 4],
        energy: EnergySample::default(),
        angular_momentum: Vector3::new(1e-3, 0.0, 0.0),
        pitch,
    }
}

fn constant_trajectory(dt: f64, duration: f64, pitch: f64) -> Trajectory {
    let mut traj = Trajectory::new(dt);
    for i in 0..=(duration / dt).round() as usize {
        traj.push(sample(i as f64 * dt, pitch, [3.0, 0.0, -4.0]));
    }
    traj
}

#[test]
fn all_zero_weights_give_zero_cost() {
    let w = CostWeights { w1: 0.0, w2: 0.0, w3: 0.0, ..Default::default() };
    assert_eq!(cost_of_trajectory(&constant_trajectory(1e-3, 4.0, 0.2), &w, 0.5), 0.0);
}

#[test]
fn constant_pitch_error_integrates_over_the_scored_window() {
    let e = 0.13;
    let w = CostWeights { w1: 0.0, w2: 0.0, w3: 1.0, ..Default::default() };
    let j = cost_of_trajectory(&constant_trajectory(1e-3, 4.0, 0.5 - e), &w, 0.5);
    let expected = e * e * (w.horizon_s - w.warmup_s);
    assert!((j - expected).abs() <= e * e * w.dt_s * (1.0 + 1e-9), "{j} vs {expected}");
}

#[test]
fn speed_and_momentum_terms_add_linearly() {
    let traj = constant_trajectory(1e-3, 4.0, 0.0);
    let w = CostWeights { w1: 2.0, w2: 0.5, w3: 0.0, ..Default::default() };
    let j = cost_of_trajectory(&traj, &w, 0.0);
    let per_second = 2.0 * 1e-6 + 0.5 * 25.0;
    assert!((j - per_second * 3.0).abs() < 1e-9 * j);
}

fn model() -> Model {
    Model::new(
        &MechanismConfig::default(),
        &MassProperties::default(),
        &JointCoupling::default(),
        &AeroEnvironment::default(),
    )
    .unwrap()
}

fn short_weights() -> CostWeights {
    CostWeights { horizon_s: 0.3, warmup_s: 0.1, ..Default::default() }
}

#[test]
fn episode_cost_is_deterministic_and_weight_free_cost_is_zero() {
    let m = model();
    let sim = SimConfig::default();
    let c = ControllerConfig::default();
    let a = evaluate_cost(&m, &sim, &c, &short_weights()).unwrap();
    assert_eq!(a, evaluate_cost(&m, &sim, &c, &short_weights()).unwrap());
    assert!(a.j > 0.0 && !a.diverged);
    let zero = CostWeights { w1: 0.0, w2: 0.0, w3: 0.0, ..short_weights() };
    assert_eq!(evaluate_cost(&m, &sim, &c, &zero).unwrap().j, 0.0);
}

#[test]
fn costing_step_must_divide_into_integrator_steps() {
    let w = CostWeights { dt_s: 2.5e-4 * 1.5, ..short_weights() };
    let err = evaluate_cost(&model(), &SimConfig::default(), &ControllerConfig::default(), &w).unwrap_err();
    assert!(matches!(err, Error::Validation { ref key, .. } if key == "optimization.weights.dt_s"));
}

#[test]
fn diverging_episode_is_penalized_not_propagated() {
    let sim = SimConfig { max_speed_m_per_s: 0.05, ..Default::default() };
    let r = evaluate_cost(&model(), &sim, &ControllerConfig::default(), &short_weights()).unwrap();
    assert!(r.diverged && r.failure.is_some());
}

#[test]
fn zero_path_search_with_collapsed_bounds_returns_the_configured_lengths() {
    let mut c = ControllerConfig::default();
    c.l_min_m = c.l_ref_zp_m;
    c.l_max_m = c.l_ref_zp_m;
    let cfg = OptimizationConfig { weights: short_weights(), ..Default::default() };
    let r = optimize_zero_path(&model(), &SimConfig::default(), &c, &cfg).unwrap();
    assert_eq!(r.best_params, c.l_ref_zp_m.to_vec());
    assert_eq!(r.evaluations, 1);
}
