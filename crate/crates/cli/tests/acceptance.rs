//! End-to-end acceptance checks. Runs without the test harness: one PASS or
//! FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::TAU;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use batwing_cli::{run_command, Command, RunManifest};
use batwing_core::aero::{aero_generalized_force, aero_loads_with, AeroEnvironment, StripForce};
use batwing_core::control::{pitch_controller, ControllerConfig};
use batwing_core::dynamics::{
    angular_momentum, bias_forces, dynamics_accel, energies, linear_momentum, mass_matrix, DynamicState,
    MassProperties, PointKinematics,
};
use batwing_core::kinematics::{
    coord, sensitivity_analysis, Fdc, KinematicInput, LinkageTopology, MechanismConfig, SensitivityParameter,
};
use batwing_core::optim::{
    best_effort, evaluate_cost, minimize, optimize_pitch_gain, Method, OptimizationConfig, SearchConfig,
};
use batwing_core::sim::{
    detect_limit_cycle, energy_audit, run_episode, LimitCycleConfig, Model, SimConfig, Trajectory,
};
use batwing_core::Result;
use nalgebra::{Matrix4, Rotation3, SVector, Vector3, Vector4, Vector6};

/// Search budget for the gain optimization; each evaluation is a full episode.
const GAIN_BUDGET: usize = 20;

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn model() -> Model {
    Model::new(
        &MechanismConfig::default(),
        &MassProperties::default(),
        &Default::default(),
        &AeroEnvironment::default(),
    )
    .unwrap()
}

fn all(parts: &[(bool, String)]) -> (bool, String) {
    let pass = parts.iter().all(|(p, _)| *p);
    let detail = parts.iter().map(|(p, d)| format!("{}{d}", if *p { "" } else { "!" })).collect::<Vec<_>>().join("; ");
    (pass, detail)
}

/// Ten wingbeats from rest under full load, every step logged.
fn flight_episode(m: &Model) -> Result<(Trajectory, f64)> {
    let sim = SimConfig { duration_s: 1.0, log_every: 1, ..Default::default() };
    let t0 = Instant::now();
    let traj = run_episode(m, &sim, &ControllerConfig::default())?;
    Ok((traj, t0.elapsed().as_secs_f64()))
}

fn flapping_rate(traj: &Trajectory, wall: f64) -> Check {
    let target = TAU * 10.0;
    let worst = traj
        .samples
        .iter()
        .filter(|s| s.t >= 0.5)
        .map(|s| (s.kinematic.crank_rate() - target).abs() / target)
        .fold(0.0, f64::max);
    check(
        "flapping-rate regulation",
        worst < 0.01 && wall < 10.0,
        format!("max rate error after 0.5 s {:.3}%, wall {wall:.1} s", 100.0 * worst),
    )
}

fn zero_path_fixture() -> Check {
    let c = ControllerConfig::default();
    let zp = [7.8e-3, 10.5e-3, 6.2e-3, 7.2e-3];
    let exact = pitch_controller(c.theta_y_ref_rad, &c) == Vector4::from(zp) && c.l_ref_zp_m == zp;
    let err = 0.1;
    let l = pitch_controller(c.theta_y_ref_rad - err, &c);
    // K_c entries in mm/rad, times 0.1 rad, in meters
    let hand = [zp[0] + 4.2e-5, zp[1] - 2.6e-5, zp[2] - 3.8e-5, zp[3] - 9.7e-6];
    let dev = (0..4).map(|i| (l[i] - hand[i]).abs()).fold(0.0, f64::max);
    check(
        "zero-path fixture",
        exact && dev < 1e-12,
        format!("zero-error output exact: {exact}, offset error {dev:e} m"),
    )
}

fn optimized_flight(m: &Model) -> Result<(Check, Check)> {
    let sim = SimConfig::default();
    let base = ControllerConfig::default();
    let mut cfg = OptimizationConfig::default();
    cfg.search.budget = GAIN_BUDGET;
    let mut open = base.clone();
    open.k_c = [0.0; 4];
    let j_open = evaluate_cost(m, &sim, &open, &cfg.weights)?.j;
    let r = best_effort(optimize_pitch_gain(m, &sim, &base, &cfg))?;
    let mut tuned = base.clone();
    tuned.k_c.copy_from_slice(&r.best_params);
    let j_opt = evaluate_cost(m, &sim, &tuned, &cfg.weights)?.j;
    let gain = (j_open - j_opt) / j_open;
    let improvement = check(
        "optimization improvement",
        j_opt <= j_open && gain >= 0.05,
        format!("J(0) {j_open:.3}, J(opt) {j_opt:.3}, {:.1}% better, K_c {:?}", 100.0 * gain, r.best_params),
    );

    let long = SimConfig { duration_s: 6.0, ..Default::default() };
    let t0 = Instant::now();
    let traj = run_episode(m, &long, &tuned)?;
    let wall = t0.elapsed().as_secs_f64();
    let lc = detect_limit_cycle(&traj, &LimitCycleConfig::default())?;
    let flight = match lc.transient_end_s {
        Some(end) if lc.detected => {
            let band = traj
                .samples
                .iter()
                .filter(|s| s.t >= end)
                .map(|s| (s.pitch - tuned.theta_y_ref_rad).abs())
                .fold(0.0, f64::max);
            check(
                "pitch limit cycle",
                end <= 4.0 && band <= 8f64.to_radians() && wall < 60.0,
                format!(
                    "transient end {end:.2} s, period {:.4} s, max |pitch - ref| {:.2} deg, wall {wall:.1} s",
                    lc.period_s,
                    band.to_degrees()
                ),
            )
        }
        _ => check("pitch limit cycle", false, format!("no cycle detected, wall {wall:.1} s")),
    };
    Ok((improvement, flight))
}

fn quadratic_recovery() -> Check {
    let x_star = [0.3, -0.2, 0.5, -0.7];
    let b = Matrix4::new(1.0, 0.2, 0.0, 0.1, 0.0, 2.0, 0.3, 0.0, 0.1, 0.0, 1.5, 0.2, 0.0, 0.1, 0.0, 3.0);
    let a = b.transpose() * b;
    let f = |x: &[f64]| {
        let d = Vector4::from_column_slice(x) - Vector4::from(x_star);
        Some(d.dot(&(a * d)))
    };
    let parts: Vec<(bool, String)> = [Method::NelderMead, Method::Cmaes]
        .into_iter()
        .map(|method| {
            let cfg = SearchConfig { method, budget: 500, seed: 7, ..Default::default() };
            match best_effort(minimize(f, &[0.0; 4], &[-1.0; 4], &[1.0; 4], &cfg)) {
                Ok(r) => {
                    let err = r.best_params.iter().zip(x_star).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                    (
                        err < 1e-3 && r.evaluations <= 500,
                        format!("{method:?} error {err:.1e} in {} evaluations", r.evaluations),
                    )
                }
                Err(e) => (false, format!("{method:?} {e}")),
            }
        })
        .collect();
    let (pass, detail) = all(&parts);
    check("synthetic quadratic recovery", pass, detail)
}

fn closure_over_ten_beats(m: &Model, traj: &Trajectory) -> (bool, String) {
    let worst = traj.samples.iter().map(|s| m.topology.closure_residual(&s.kinematic.q)).fold(0.0, f64::max);
    (worst < 1e-8 && traj.samples.len() > 10_000, format!("closure {worst:.1e} m"))
}

/// No air or dampers; the crank is spun up from rest by its controller.
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

fn energy_drift(m: &Model) -> Result<(bool, String)> {
    let sim = conservative(1.0, true);
    let audit = energy_audit(&run_episode(m, &sim, &ControllerConfig::default())?);
    let beat = (0.1 / sim.dt_s).round() as usize;
    let worst = audit
        .rows
        .windows(beat + 1)
        .step_by(beat)
        .map(|w| (w[beat].residual - w[0].residual).abs() / audit.scale)
        .fold(0.0, f64::max);
    Ok((worst < 1e-6, format!("energy drift {worst:.1e}/beat")))
}

fn momentum(m: &Model) -> Result<(bool, String)> {
    let mut sim = conservative(0.3, false);
    sim.damping_on = true;
    sim.log_every = 1000;
    let traj = run_episode(m, &sim, &ControllerConfig::default())?;
    let mut worst = 0.0f64;
    for w in traj.samples.windows(2) {
        let (p0, p1) = (linear_momentum(&w[0].dynamic, &m.mass), linear_momentum(&w[1].dynamic, &m.mass));
        let (h0, h1) = (w[0].angular_momentum, w[1].angular_momentum);
        worst = worst.max((p1 - p0).norm() / p0.norm()).max((h1 - h0).norm() / h0.norm());
    }
    Ok((worst < 1e-8, format!("momentum {worst:.1e}/1000 steps")))
}

fn rk4_order(m: &Model) -> Result<(bool, String)> {
    let final_state = |dt: f64| -> Result<SVector<f64, 14>> {
        let mut sim =
            SimConfig { dt_s: dt, duration_s: 0.02, log_every: (0.02 / dt).round() as usize, ..Default::default() };
        sim.initial.crank_rate_rad_per_s = TAU * 10.0;
        sim.initial.velocity_m_per_s = [4.0, 0.0, -4.0];
        let traj = run_episode(m, &sim, &ControllerConfig::default())?;
        let s = &traj.samples.last().unwrap().dynamic;
        let mut x = SVector::<f64, 14>::zeros();
        x.fixed_rows_mut::<7>(0).copy_from(&s.qd);
        x.fixed_rows_mut::<4>(7).copy_from(&s.q.fixed_rows::<4>(3));
        x.fixed_rows_mut::<3>(11).copy_from(&s.omega);
        Ok(x)
    };
    let reference = final_state(1.25e-5)?;
    let e1 = (final_state(1e-4)? - reference).norm();
    let e2 = (final_state(5e-5)? - reference).norm();
    let order = (e1 / e2).log2();
    Ok((order >= 3.5, format!("RK4 order {order:.2}")))
}

fn flying_state() -> DynamicState {
    let mut s = DynamicState::at_rest([0.4, -0.7, 0.1, -1.1]);
    s.q.fixed_rows_mut::<3>(0).copy_from_slice(&[0.1, -0.2, 0.3]);
    s.qd.fixed_rows_mut::<7>(0).copy_from_slice(&[1.5, -0.4, 0.8, 3.0, -5.0, -2.0, 7.0]);
    s.omega = Vector3::new(2.0, -3.0, 1.0);
    s.r_b = Rotation3::new(Vector3::new(0.2, 0.5, -0.3)).into_inner();
    s
}

fn drift(s: &DynamicState, eps: f64) -> DynamicState {
    let mut out = *s;
    out.q += eps * s.qd;
    out.r_b = s.r_b * Rotation3::new(eps * s.omega).into_inner();
    out
}

/// Mass matrix against the momentum maps, bias forces against finite
/// differences of the Lagrangian, torque-free accelerations against momentum
/// and energy conservation, and the linkage EOM against re-solved closures.
fn finite_difference_oracles() -> (bool, String) {
    let p = MassProperties::default();
    let s = flying_state();
    let v = s.generalized_velocity();
    let eps = 1e-6;
    let mut parts = Vec::new();

    let m = mass_matrix(&s, &p).unwrap();
    let mv = m * v;
    let p_lin = linear_momentum(&s, &p);
    let spd = m.cholesky().is_some() && (m - m.transpose()).norm() < 1e-14 * m.norm();
    let row_err = (mv.fixed_rows::<3>(0) - p_lin).norm() / p_lin.norm();
    parts.push((spd && row_err < 1e-12, format!("M rows {row_err:.1e}")));

    let g = 9.81;
    let mm = |st: &DynamicState| mass_matrix(st, &p).unwrap();
    let kinetic = |st: &DynamicState| 0.5 * v.dot(&(mm(st) * v));
    let lagr = |st: &DynamicState| kinetic(st) - energies(st, &p, g).gravitational;
    let mut h = (mm(&drift(&s, eps)) - mm(&drift(&s, -eps))) / (2.0 * eps) * v;
    for i in 0..7 {
        let (mut fwd, mut back) = (s, s);
        fwd.q[i] += eps;
        back.q[i] -= eps;
        h[i] -= (lagr(&fwd) - lagr(&back)) / (2.0 * eps);
    }
    let gyro = s.omega.cross(&mv.fixed_rows::<3>(7).into_owned());
    for k in 0..3 {
        let (mut fwd, mut back) = (s, s);
        let eta = Vector3::ith(k, eps);
        fwd.r_b = s.r_b * Rotation3::new(eta).into_inner();
        back.r_b = s.r_b * Rotation3::new(-eta).into_inner();
        h[7 + k] += gyro[k] - (lagr(&fwd) - lagr(&back)) / (2.0 * eps);
    }
    let bias_err = (bias_forces(&s, &p, g) - h).norm() / h.norm();
    parts.push((bias_err < 1e-7, format!("bias {bias_err:.1e}")));

    let a = dynamics_accel(&s, &p, 0.0, &SVector::zeros()).unwrap();
    let advanced = |e: f64| {
        let mut out = drift(&s, e);
        out.qd += e * a.fixed_rows::<7>(0);
        out.omega += e * a.fixed_rows::<3>(7);
        out
    };
    let (fwd, back) = (advanced(eps), advanced(-eps));
    let pi_rate = (angular_momentum(&fwd, &p) - angular_momentum(&back, &p)).norm() / (2.0 * eps);
    let ke_rate = (energies(&fwd, &p, 0.0).kinetic - energies(&back, &p, 0.0).kinetic).abs() / (2.0 * eps);
    let pi_rel = pi_rate / angular_momentum(&s, &p).norm();
    let ke_rel = ke_rate / energies(&s, &p, 0.0).kinetic;
    parts.push((pi_rel < 1e-6 && ke_rel < 1e-6, format!("torque-free dPi {pi_rel:.1e}, dT {ke_rel:.1e}")));

    let t = LinkageTopology::new(&MechanismConfig::default()).unwrap();
    let nominal = Vector4::from(MechanismConfig::default().fdc.nominal_m);
    let (crank, rates, u) = (0.3, [1.5, 1e-3, -2e-3, 1.5e-3, 0.5e-3], [2.0, 0.1, -0.2, 0.05, 0.3]);
    let mut ks = t.solve_loop_closure(crank, &nominal, None).unwrap();
    for (k, &i) in coord::INDEPENDENT.iter().enumerate() {
        ks.qd[i] = rates[k];
    }
    t.project_velocity(&mut ks);
    let input = KinematicInput { u_g: u[0], u_p: Vector4::new(u[1], u[2], u[3], u[4]) };
    let qdd = t.kinematic_eom(&ks, &input).unwrap();
    let hk = 2e-4;
    let at = |tau: f64| {
        let l = Vector4::from_fn(|k, _| nominal[k] + rates[k + 1] * tau + 0.5 * u[k + 1] * tau * tau);
        t.solve_loop_closure(crank + rates[0] * tau + 0.5 * u[0] * tau * tau, &l, Some(&ks)).unwrap().q
    };
    let fd = (at(hk) - 2.0 * at(0.0) + at(-hk)) / (hk * hk);
    let eom_err = (0..12).map(|i| (fd[i] - qdd[i]).abs() / qdd[i].abs().max(1.0)).fold(0.0, f64::max);
    parts.push((eom_err < 1e-5, format!("linkage EOM {eom_err:.1e}")));
    all(&parts)
}

fn mechanics(m: &Model, flight: &Trajectory) -> Result<Check> {
    let parts =
        [closure_over_ten_beats(m, flight), energy_drift(m)?, momentum(m)?, rk4_order(m)?, finite_difference_oracles()];
    let (pass, detail) = all(&parts);
    Ok(check("mechanics verification", pass, detail))
}

fn aerodynamics(m: &Model, flight: &Trajectory) -> Check {
    let coarse = &m.aero;
    let fine = AeroEnvironment { strips_per_segment: 2 * coarse.strips_per_segment, ..coarse.clone() };
    let recorded: Vec<&DynamicState> = flight.samples.iter().step_by(250).skip(1).map(|s| &s.dynamic).collect();
    let mut refinement = 0.0f64;
    let mut power = 0.0f64;
    let mut virtual_work = 0.0f64;
    for s in &recorded {
        let (a, b) = (aero_generalized_force(s, &m.mass, coarse), aero_generalized_force(s, &m.mass, &fine));
        // body force and moment rows
        let wrench = |g: &SVector<f64, 10>| Vector6::from_fn(|i, _| g[if i < 3 { i } else { i + 4 }]);
        refinement =
            refinement.max((wrench(&a.generalized) - wrench(&b.generalized)).norm() / wrench(&b.generalized).norm());
        power = power.max((a.generalized.dot(&s.generalized_velocity()) - a.power).abs() / a.power.abs());

        let mut strips: Vec<StripForce> = Vec::new();
        let loads = aero_loads_with(s, &m.mass, coarse, |st| strips.push(*st));
        let eps = 1e-7;
        let (fwd, back) = (drift(s, eps), drift(s, -eps));
        let oracle: f64 = strips
            .iter()
            .map(|st| {
                let pt = st.element.pressure_point();
                let x1 = PointKinematics::of(&fwd, &m.mass, &pt).position(&fwd);
                let x0 = PointKinematics::of(&back, &m.mass, &pt).position(&back);
                st.force.dot(&((x1 - x0) / (2.0 * eps)))
            })
            .sum();
        virtual_work = virtual_work.max((oracle - loads.power).abs() / loads.power.abs());
    }

    let mut zero_exact = true;
    for v in [[0.0; 3], [0.0, 3.0, 0.0]] {
        let mut s = DynamicState::at_rest([0.0; 4]);
        s.qd.fixed_rows_mut::<3>(0).copy_from_slice(&v);
        let loads = aero_generalized_force(&s, &m.mass, coarse);
        zero_exact &= loads.generalized.iter().all(|&x| x == 0.0) && loads.power == 0.0;
    }
    let (pass, detail) = all(&[
        (refinement < 5e-3, format!("strip refinement {:.3}% over {} states", 100.0 * refinement, recorded.len())),
        (power < 1e-9, format!("power {power:.1e}")),
        (virtual_work < 1e-6, format!("FD virtual work {virtual_work:.1e}")),
        (zero_exact, format!("still/spanwise zero exact: {zero_exact}")),
    ]);
    check("aerodynamic correctness", pass, detail)
}

fn fdc_decoupling(m: &Model) -> Result<Check> {
    let mut parts = Vec::new();
    for fdc in [Fdc::L8b, Fdc::L10b] {
        // the report is per meter of change; scale back to meters
        let r = sensitivity_analysis(&m.topology, SensitivityParameter::Fdc(fdc), 1e-4, 360)?;
        let (j5, j16) = (r.max_dev_j5 * r.delta, r.max_dev_j16 * r.delta);
        parts.push((j5 < 1e-12 && j16 > 0.0, format!("{fdc} +0.1 mm: j5 {j5:.1e} m, j16 {j16:.1e} m")));
    }
    let (pass, detail) = all(&parts);
    Ok(check("FDC decoupling", pass, detail))
}

fn reproducibility() -> Result<Check> {
    let short =
        ["optimization.search.budget=3", "optimization.weights.warmup_s=0.1", "optimization.weights.horizon_s=0.3"];
    let runs: [(Command, &[&str]); 5] = [
        (Command::Simulate, &["sim.duration_s=0.2"]),
        (Command::Audit, &["sim.duration_s=0.2"]),
        (Command::Sensitivity, &["sensitivity.samples=72"]),
        (Command::OptimizeGain, &short),
        (Command::OptimizeZeroPath, &short),
    ];
    let mut parts = Vec::new();
    for (command, overrides) in runs {
        let summaries = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir()?;
                let manifest = RunManifest {
                    config: None,
                    command,
                    out_dir: dir.path().to_path_buf(),
                    seed: 11,
                    overrides: overrides.iter().map(|s| s.to_string()).collect(),
                };
                run_command(&manifest)?;
                Ok(fs::read(dir.path().join("summary.json"))?)
            })
            .collect::<Result<Vec<_>>>()?;
        parts.push((summaries[0] == summaries[1], format!("{command:?} identical: {}", summaries[0] == summaries[1])));
    }
    let (pass, detail) = all(&parts);
    Ok(check("CLI reproducibility", pass, detail))
}

fn run() -> Result<Vec<Check>> {
    let m = model();
    let (flight, wall) = flight_episode(&m)?;
    let (improvement, optimized) = optimized_flight(&m)?;
    let quadratic = quadratic_recovery();
    Ok(vec![
        flapping_rate(&flight, wall),
        zero_path_fixture(),
        optimized,
        check(
            improvement.name,
            improvement.pass && quadratic.pass,
            format!("{}; {}", improvement.detail, quadratic.detail),
        ),
        mechanics(&m, &flight)?,
        aerodynamics(&m, &flight),
        fdc_decoupling(&m)?,
        reproducibility()?,
    ])
}

fn main() -> ExitCode {
    match run() {
        Ok(checks) => {
            for (i, c) in checks.iter().enumerate() {
                println!("{} criterion {}: {} ({})", if c.pass { "PASS" } else { "FAIL" }, i + 1, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("FAIL acceptance aborted: {e}");
            ExitCode::FAILURE
        }
    }
}
