use std::f64::consts::TAU;

use batwing_core::aero::{AeroEnvironment, SegmentWrench};
use batwing_core::control::{ControlOutput, ControllerConfig};
use batwing_core::dynamics::{
    angular_momentum, linear_momentum, pitch_angle, DynamicState, JointCoupling, MassProperties,
};
use batwing_core::kinematics::{coord, KinematicState, MechanismConfig};
use batwing_core::sim::{
    detect_limit_cycle, energy_audit, run_episode, EnergySample, LimitCycleConfig, Model, SimConfig, Trajectory,
    TrajectorySample,
};
use batwing_core::Error;
use nalgebra::{Matrix3, SVector, Vector3, Vector4};

fn model() -> Model {
    Model::new(
        &MechanismConfig::default(),
        &MassProperties::default(),
        &JointCoupling::default(),
        &AeroEnvironment::default(),
    )
    .unwrap()
}

fn passive() -> ControllerConfig {
    ControllerConfig { enabled: false, ..Default::default() }
}

/// Controllers off, no air; gravity as given.
fn bare(duration: f64, gravity: bool) -> SimConfig {
    SimConfig { duration_s: duration, gravity_on: gravity, aero_on: false, log_every: 1, ..Default::default() }
}

#[test]
fn unforced_equilibrium_stays_put() {
    let m = model();
    let traj = run_episode(&m, &bare(0.1, false), &passive()).unwrap();
    let first = &traj.samples[0];
    for s in &traj.samples {
        assert!((s.dynamic.q - first.dynamic.q).norm() < 1e-12);
        assert!(s.dynamic.qd.norm() < 1e-12 && s.dynamic.omega.norm() < 1e-12);
        assert!((s.kinematic.q - first.kinematic.q).norm() < 1e-12);
    }
}

#[test]
fn free_fall_follows_the_parabola() {
    let m = model();
    let mut sim = bare(0.5, true);
    sim.initial.position_m = [0.0, 0.0, 10.0];
    let traj = run_episode(&m, &sim, &passive()).unwrap();
    let g = sim.gravity_m_per_s2;
    for s in &traj.samples {
        let z = 10.0 - 0.5 * g * s.t * s.t;
        assert!((s.dynamic.q[2] - z).abs() < 1e-8, "t={} z={} expected {z}", s.t, s.dynamic.q[2]);
        assert!((s.dynamic.qd[2] + g * s.t).abs() < 1e-8);
    }
}

/// Conservative setup: no air, no dampers, crank spun up by its controller
/// from rest so that the stiff coupling modes stay quiet.
fn conservative(duration: f64, gravity: bool) -> SimConfig {
    let mut sim = SimConfig {
        duration_s: duration,
        gravity_on: gravity,
        aero_on: false,
        damping_on: false,
        log_every: 1,
        ..Default::default()
    };
    sim.initial.velocity_m_per_s = [1.0, 0.0, 0.5];
    sim.initial.angular_velocity_rad_per_s = [0.0, -1.0, 0.0];
    sim
}

#[test]
fn conservative_energy_drift_is_below_a_millionth_per_wingbeat() {
    let m = model();
    let sim = conservative(1.0, true);
    let traj = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    let audit = energy_audit(&traj);
    let beat = (0.1 / sim.dt_s).round() as usize;
    let worst = audit
        .rows
        .windows(beat + 1)
        .step_by(beat)
        .map(|w| (w[beat].residual - w[0].residual).abs() / audit.scale)
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "drift per wingbeat {worst:e}");
    assert!(audit.rows.last().unwrap().drive_work.abs() > 0.0);
}

#[test]
fn free_body_momentum_is_conserved() {
    let m = model();
    let mut sim = conservative(0.3, false);
    sim.damping_on = true;
    sim.log_every = 1000;
    let traj = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    for w in traj.samples.windows(2) {
        let (p0, p1) = (linear_momentum(&w[0].dynamic, &m.mass), linear_momentum(&w[1].dynamic, &m.mass));
        assert!((p1 - p0).norm() < 1e-8 * p0.norm(), "P drift {:e}", (p1 - p0).norm() / p0.norm());
        let (pi0, pi1) = (w[0].angular_momentum, w[1].angular_momentum);
        assert!((pi1 - pi0).norm() < 1e-8 * pi0.norm(), "Pi drift {:e}", (pi1 - pi0).norm() / pi0.norm());
    }
}

#[test]
fn dampers_only_remove_energy() {
    let m = model();
    let mut sim = bare(0.2, false);
    sim.initial.link_angle_offsets_rad = [0.05, -0.04, 0.03, 0.02];
    let traj = run_episode(&m, &sim, &passive()).unwrap();
    let energy: Vec<f64> = traj.samples.iter().map(|s| s.energy.total()).collect();
    assert!(energy.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(energy.last().unwrap() < &(0.5 * energy[0]));
    assert!(traj.samples.last().unwrap().energy.damping_work < 0.0);
}

fn final_state(dt: f64) -> SVector<f64, 14> {
    let m = model();
    let sim = SimConfig { dt_s: dt, duration_s: 0.02, log_every: (0.02 / dt).round() as usize, ..Default::default() };
    let mut sim = sim;
    sim.initial.crank_rate_rad_per_s = TAU * 10.0;
    sim.initial.velocity_m_per_s = [4.0, 0.0, -4.0];
    let traj = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    let s = traj.samples.last().unwrap();
    let mut x = SVector::<f64, 14>::zeros();
    x.fixed_rows_mut::<7>(0).copy_from(&s.dynamic.qd);
    x.fixed_rows_mut::<4>(7).copy_from(&s.dynamic.q.fixed_rows::<4>(3));
    x.fixed_rows_mut::<3>(11).copy_from(&s.dynamic.omega);
    x
}

#[test]
fn rk4_converges_at_fourth_order() {
    let reference = final_state(1.25e-5);
    let e1 = (final_state(1e-4) - reference).norm();
    let e2 = (final_state(5e-5) - reference).norm();
    let order = (e1 / e2).log2();
    assert!(order >= 3.5, "observed order {order} (errors {e1:e}, {e2:e})");
}

#[test]
fn episodes_are_bitwise_reproducible() {
    let m = model();
    let sim = SimConfig { duration_s: 0.05, ..Default::default() };
    let a = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    let b = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn logged_momentum_and_pitch_are_recomputable() {
    let m = model();
    let sim = SimConfig { duration_s: 0.05, ..Default::default() };
    let traj = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    for s in &traj.samples {
        let pi = angular_momentum(&s.dynamic, &m.mass);
        assert!((pi - s.angular_momentum).norm() <= 1e-12 * pi.norm().max(1e-12));
        assert!((pitch_angle(&s.dynamic.r_b) - s.pitch).abs() <= 1e-12);
    }
}

#[test]
fn binary_log_round_trips() {
    let m = model();
    let sim = SimConfig { duration_s: 0.01, ..Default::default() };
    let traj = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    let mut buf = Vec::new();
    traj.write_binary(&mut buf).unwrap();
    let (cols, rows) = Trajectory::read_binary(buf.as_slice()).unwrap();
    assert_eq!(cols, Trajectory::columns());
    assert_eq!(rows, traj.rows().collect::<Vec<_>>());
    assert!(Trajectory::read_binary(&buf[..10]).is_err());

    let mut csv = Vec::new();
    traj.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), traj.len() + 1);
    assert_eq!(text.lines().next().unwrap().split(',').count(), cols.len());
}

#[test]
fn crank_reaches_the_flap_rate() {
    let m = model();
    let sim = SimConfig { duration_s: 1.0, ..Default::default() };
    let traj = run_episode(&m, &sim, &ControllerConfig::default()).unwrap();
    let target = TAU * 10.0;
    for s in traj.samples.iter().filter(|s| s.t >= 0.5) {
        assert!(
            (s.kinematic.crank_rate() - target).abs() < 0.01 * target,
            "t={} rate={}",
            s.t,
            s.kinematic.crank_rate()
        );
    }
}

/// Logged sample on a synthetic orbit: crank at `t` turns per 0.1 s, pitch
/// and rates given by the caller.
fn synthetic(t: f64, pitch: f64, rate: f64) -> TrajectorySample {
    let mut kinematic = KinematicState { q: SVector::zeros(), qd: SVector::zeros() };
    kinematic.q[coord::THETA1] = TAU * 10.0 * t;
    kinematic.qd[coord::THETA1] = TAU * 10.0;
    let mut dynamic = DynamicState::at_rest([0.0; 4]);
    let (s, c) = pitch.sin_cos();
    dynamic.r_b = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
    dynamic.omega = Vector3::new(0.0, rate, 0.0);
    TrajectorySample {
        t,
        kinematic,
        dynamic,
        control: ControlOutput { u_g: 0.0, u_p: Vector4::zeros(), l_ref: Vector4::zeros() },
        wrenches: [SegmentWrench::default(); 4],
        energy: EnergySample::default(),
        angular_momentum: Vector3::zeros(),
        pitch,
    }
}

fn synthetic_trajectory(dt: f64, duration: f64, f: impl Fn(f64) -> (f64, f64)) -> Trajectory {
    let mut traj = Trajectory::new(dt);
    let n = (duration / dt).round() as usize;
    for i in 0..=n {
        let t = i as f64 * dt;
        let (p, r) = f(t);
        traj.push(synthetic(t, p, r));
    }
    traj
}

#[test]
fn periodic_signal_is_detected_with_its_period() {
    let dt = 1e-3;
    let traj = synthetic_trajectory(dt, 3.0, |t| {
        let decay = (-3.0 * t).exp();
        (0.6 + 0.02 * (TAU * 10.0 * t).sin() + 0.5 * decay, 2.0 * (TAU * 10.0 * t).cos() + 5.0 * decay)
    });
    let r = detect_limit_cycle(&traj, &LimitCycleConfig::default()).unwrap();
    assert!(r.detected);
    assert!((r.period_s - 0.1).abs() <= dt, "period {}", r.period_s);
    let end = r.transient_end_s.unwrap();
    assert!(end > 0.0 && end < 3.0);
}

#[test]
fn divergent_signal_is_not_detected() {
    let traj =
        synthetic_trajectory(1e-3, 3.0, |t| (0.6 + 0.01 * (2.0 * t).exp() * (TAU * 10.0 * t).cos(), 0.3 * t * t));
    let r = detect_limit_cycle(&traj, &LimitCycleConfig::default()).unwrap();
    assert!(!r.detected);
    assert!(r.transient_end_s.is_none());
}

#[test]
fn short_record_is_rejected() {
    let traj = synthetic_trajectory(1e-3, 0.35, |_| (0.5, 0.0));
    assert!(matches!(detect_limit_cycle(&traj, &LimitCycleConfig::default()), Err(Error::TooShort { .. })));
}

#[test]
fn divergence_is_reported_not_hidden() {
    let m = model();
    let mut sim = bare(0.1, true);
    sim.max_speed_m_per_s = 0.1;
    assert!(matches!(run_episode(&m, &sim, &passive()), Err(Error::SimDiverged { .. })));
}
