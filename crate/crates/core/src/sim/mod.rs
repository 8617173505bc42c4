//! Episode integration: controllers, linkage, massed bodies and aerodynamics
//! advanced together by fixed-step RK4.

mod analysis;
mod trajectory;

use nalgebra::{Matrix3, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::aero::{aero_loads_with, AeroEnvironment, SegmentWrench, StripForce};
use crate::control::{control_step, ControlOutput, ControllerConfig};
use crate::dynamics::{
    angular_momentum, coupling_forces, dynamics_accel, energies, orthonormalize, pitch_angle, DynamicState,
    JointCoupling, MassProperties,
};
use crate::error::{Error, Result};
use crate::kinematics::{KinematicInput, KinematicState, LinkageTopology, MechanismConfig};

pub use analysis::{
    detect_limit_cycle, energy_audit, EnergyAudit, EnergyLedgerRow, LimitCycleConfig, LimitCycleReport,
};
pub use trajectory::{EnergySample, Trajectory, TrajectorySample, TRAJECTORY_MAGIC, TRAJECTORY_VERSION};

const STATE_DIM: usize = 53;
type Flat = SVector<f64, STATE_DIM>;

mod layout {
    pub const QK: usize = 0;
    pub const QDK: usize = 12;
    pub const QD: usize = 24;
    pub const QDD: usize = 31;
    pub const R: usize = 38;
    pub const OMEGA: usize = 47;
    pub const W_DAMP: usize = 50;
    pub const W_AERO: usize = 51;
    pub const W_DRIVE: usize = 52;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    pub crank_angle_rad: f64,
    pub crank_rate_rad_per_s: f64,
    /// Starting FDC lengths; the controller's zero path when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdc_lengths_m: Option<[f64; 4]>,
    pub position_m: [f64; 3],
    pub velocity_m_per_s: [f64; 3],
    pub pitch_rad: f64,
    pub angular_velocity_rad_per_s: [f64; 3],
    /// Added to the massed link angles found from the linkage pose.
    pub link_angle_offsets_rad: [f64; 4],
    pub link_rates_rad_per_s: [f64; 4],
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            crank_angle_rad: 0.0,
            crank_rate_rad_per_s: 0.0,
            fdc_lengths_m: None,
            position_m: [0.0; 3],
            velocity_m_per_s: [0.0; 3],
            pitch_rad: 33f64.to_radians(),
            angular_velocity_rad_per_s: [0.0; 3],
            link_angle_offsets_rad: [0.0; 4],
            link_rates_rad_per_s: [0.0; 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_s: f64,
    pub duration_s: f64,
    pub gravity_on: bool,
    pub aero_on: bool,
    pub damping_on: bool,
    pub gravity_m_per_s2: f64,
    /// Log every n-th integration step.
    pub log_every: usize,
    pub max_speed_m_per_s: f64,
    pub max_rate_rad_per_s: f64,
    pub initial: InitialConditions,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 1e-4,
            duration_s: 4.0,
            gravity_on: true,
            aero_on: true,
            damping_on: true,
            gravity_m_per_s2: 9.81,
            log_every: 10,
            max_speed_m_per_s: 100.0,
            max_rate_rad_per_s: 1e4,
            initial: InitialConditions::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::validation("sim.dt_s", "must be positive"));
        }
        if !(self.duration_s >= self.dt_s && self.duration_s.is_finite()) {
            return Err(Error::validation("sim.duration_s", "must be at least one step"));
        }
        if self.log_every == 0 {
            return Err(Error::validation("sim.log_every", "must be at least 1"));
        }
        if !(self.gravity_m_per_s2 >= 0.0 && self.gravity_m_per_s2.is_finite()) {
            return Err(Error::validation("sim.gravity_m_per_s2", "must be non-negative"));
        }
        if !(self.max_speed_m_per_s > 0.0 && self.max_rate_rad_per_s > 0.0) {
            return Err(Error::validation("sim.max_speed_m_per_s", "divergence bounds must be positive"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    pub fn gravity(&self) -> f64 {
        if self.gravity_on {
            self.gravity_m_per_s2
        } else {
            0.0
        }
    }
}

/// The physical plant: linkage, massed bodies, couplings and air.
#[derive(Debug, Clone)]
pub struct Model {
    pub topology: LinkageTopology,
    pub mass: MassProperties,
    pub coupling: JointCoupling,
    pub aero: AeroEnvironment,
    /// Resolved `[humerus, radius]` spring attachments on the massed links.
    pub attachments: [[f64; 2]; 2],
}

impl Model {
    pub fn new(
        mechanism: &MechanismConfig,
        mass: &MassProperties,
        coupling: &JointCoupling,
        aero: &AeroEnvironment,
    ) -> Result<Self> {
        mass.validate()?;
        coupling.validate()?;
        aero.validate()?;
        if (mass.humerus.length_m - mechanism.elbow_distance_m).abs() > 1e-12 {
            return Err(Error::validation(
                "mass.humerus.length_m",
                format!("must equal mechanism.elbow_distance_m ({})", mechanism.elbow_distance_m),
            ));
        }
        let topology = LinkageTopology::new(mechanism)?;
        let [l3b, l3c, ..] = mechanism.fdc.nominal_m;
        let attachments = [
            coupling.humerus.attachment_m.unwrap_or(mechanism.joint5_in_humerus_frame(l3b, l3c)),
            coupling.radius.attachment_m.unwrap_or([mechanism.radius_output_arm_m, 0.0]),
        ];
        Ok(Self { topology, mass: mass.clone(), coupling: coupling.clone(), aero: aero.clone(), attachments })
    }

    /// Closed linkage and matching massed pose for the given initial conditions.
    pub fn initial_state(
        &self,
        sim: &SimConfig,
        controller: &ControllerConfig,
    ) -> Result<(KinematicState, DynamicState)> {
        let ic = &sim.initial;
        let lengths = Vector4::from(ic.fdc_lengths_m.unwrap_or(controller.l_ref_zp_m));
        let mut k = self.topology.solve_loop_closure(ic.crank_angle_rad, &lengths, None)?;
        k.qd[crate::kinematics::coord::THETA1] = ic.crank_rate_rad_per_s;
        self.topology.project_velocity(&mut k);

        let hum = self.topology.humerus_angle(&k.q);
        let rad = self.topology.radius_angle(&k.q) - hum;
        let mut d = DynamicState::at_rest([hum, rad, hum, rad]);
        for i in 0..4 {
            d.q[3 + i] += ic.link_angle_offsets_rad[i];
            d.qd[3 + i] = ic.link_rates_rad_per_s[i];
        }
        d.q.fixed_rows_mut::<3>(0).copy_from_slice(&ic.position_m);
        d.qd.fixed_rows_mut::<3>(0).copy_from_slice(&ic.velocity_m_per_s);
        let (s, c) = ic.pitch_rad.sin_cos();
        d.r_b = Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        d.omega = Vector3::from(ic.angular_velocity_rad_per_s);
        Ok((k, d))
    }
}

fn pack(k: &KinematicState, d: &DynamicState, work: [f64; 3]) -> Flat {
    let mut x = Flat::zeros();
    x.fixed_rows_mut::<12>(layout::QK).copy_from(&k.q);
    x.fixed_rows_mut::<12>(layout::QDK).copy_from(&k.qd);
    x.fixed_rows_mut::<7>(layout::QD).copy_from(&d.q);
    x.fixed_rows_mut::<7>(layout::QDD).copy_from(&d.qd);
    x.fixed_rows_mut::<9>(layout::R).copy_from_slice(d.r_b.as_slice());
    x.fixed_rows_mut::<3>(layout::OMEGA).copy_from(&d.omega);
    x[layout::W_DAMP] = work[0];
    x[layout::W_AERO] = work[1];
    x[layout::W_DRIVE] = work[2];
    x
}

fn unpack(x: &Flat) -> (KinematicState, DynamicState, [f64; 3]) {
    let k = KinematicState {
        q: x.fixed_rows::<12>(layout::QK).into_owned(),
        qd: x.fixed_rows::<12>(layout::QDK).into_owned(),
    };
    let d = DynamicState {
        q: x.fixed_rows::<7>(layout::QD).into_owned(),
        qd: x.fixed_rows::<7>(layout::QDD).into_owned(),
        r_b: Matrix3::from_column_slice(x.fixed_rows::<9>(layout::R).as_slice()),
        omega: x.fixed_rows::<3>(layout::OMEGA).into_owned(),
    };
    (k, d, [x[layout::W_DAMP], x[layout::W_AERO], x[layout::W_DRIVE]])
}

/// Everything evaluated at one instant, beyond the state itself.
struct Evaluation {
    derivative: Flat,
    control: ControlOutput,
    wrenches: [SegmentWrench; 4],
    spring_energy: f64,
}

struct Integrator<'a> {
    model: &'a Model,
    sim: &'a SimConfig,
    controller: &'a ControllerConfig,
}

impl Integrator<'_> {
    fn evaluate(&self, x: &Flat, strips: Option<&mut Vec<StripForce>>) -> Result<Evaluation> {
        let (k, d, _) = unpack(x);
        let m = self.model;
        let control =
            control_step(k.crank_rate(), &k.fdc_lengths(), &k.fdc_rates(), pitch_angle(&d.r_b), self.controller);
        let input = KinematicInput { u_g: control.u_g, u_p: control.u_p };
        let qdd_k = m.topology.kinematic_eom(&k, &input)?;
        let driven = m.topology.driven_joint_output(&k, &qdd_k);
        let coupling = coupling_forces(&d, &m.mass, &driven, &m.coupling, &m.attachments, self.sim.damping_on);

        let mut generalized = coupling.generalized;
        let mut wrenches = [SegmentWrench::default(); 4];
        let mut aero_power = 0.0;
        if self.sim.aero_on {
            let loads = match strips {
                Some(log) => aero_loads_with(&d, &m.mass, &m.aero, |s| log.push(*s)),
                None => aero_loads_with(&d, &m.mass, &m.aero, |_| {}),
            };
            generalized += loads.generalized;
            wrenches = loads.wrenches;
            aero_power = loads.power;
        }
        let accel = dynamics_accel(&d, &m.mass, self.sim.gravity(), &generalized)?;

        let mut dx = Flat::zeros();
        dx.fixed_rows_mut::<12>(layout::QK).copy_from(&k.qd);
        dx.fixed_rows_mut::<12>(layout::QDK).copy_from(&qdd_k);
        dx.fixed_rows_mut::<7>(layout::QD).copy_from(&d.qd);
        dx.fixed_rows_mut::<7>(layout::QDD).copy_from(&accel.fixed_rows::<7>(0));
        let r_dot = d.r_b * d.omega.cross_matrix();
        dx.fixed_rows_mut::<9>(layout::R).copy_from_slice(r_dot.as_slice());
        dx.fixed_rows_mut::<3>(layout::OMEGA).copy_from(&accel.fixed_rows::<3>(7));
        dx[layout::W_DAMP] = coupling.damping_power;
        dx[layout::W_AERO] = aero_power;
        dx[layout::W_DRIVE] = coupling.drive_power;
        Ok(Evaluation { derivative: dx, control, wrenches, spring_energy: coupling.spring_energy })
    }

    fn sample(&self, t: f64, x: &Flat, eval: &Evaluation) -> TrajectorySample {
        let (k, d, work) = unpack(x);
        let e = energies(&d, &self.model.mass, self.sim.gravity());
        TrajectorySample {
            t,
            kinematic: k,
            dynamic: d,
            control: eval.control,
            wrenches: eval.wrenches,
            energy: EnergySample {
                kinetic: e.kinetic,
                gravitational: e.gravitational,
                spring: eval.spring_energy,
                damping_work: work[0],
                aero_work: work[1],
                drive_work: work[2],
            },
            angular_momentum: angular_momentum(&d, &self.model.mass),
            pitch: pitch_angle(&d.r_b),
        }
    }

    fn check(&self, t: f64, x: &Flat) -> Result<()> {
        let diverged = |reason: String| Err(Error::SimDiverged { time: t, reason });
        if x.iter().any(|v| !v.is_finite()) {
            return diverged("non-finite state".into());
        }
        let speed = x.fixed_rows::<3>(layout::QDD).norm();
        if speed > self.sim.max_speed_m_per_s {
            return diverged(format!("body speed {speed:.3e} m/s"));
        }
        let rates = x
            .fixed_rows::<8>(layout::QDK)
            .iter()
            .chain(x.fixed_rows::<4>(layout::QDD + 3).iter())
            .chain(x.fixed_rows::<3>(layout::OMEGA).iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if rates > self.sim.max_rate_rad_per_s {
            return diverged(format!("angular rate {rates:.3e} rad/s"));
        }
        Ok(())
    }
}

/// Options for [`run_episode_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeOptions {
    /// Record every strip force at each logged sample.
    pub log_strips: bool,
}

/// Integrates one episode from the configured initial conditions.
pub fn run_episode(model: &Model, sim: &SimConfig, controller: &ControllerConfig) -> Result<Trajectory> {
    run_episode_with(model, sim, controller, EpisodeOptions::default())
}

pub fn run_episode_with(
    model: &Model,
    sim: &SimConfig,
    controller: &ControllerConfig,
    options: EpisodeOptions,
) -> Result<Trajectory> {
    sim.validate()?;
    controller.validate()?;
    let integ = Integrator { model, sim, controller };
    let (k0, d0) = model.initial_state(sim, controller)?;
    let mut x = pack(&k0, &d0, [0.0; 3]);
    let h = sim.dt_s;
    let steps = sim.steps();
    let mut traj = Trajectory::new(h * sim.log_every as f64);

    for n in 0..=steps {
        let t = n as f64 * h;
        let log_now = n % sim.log_every == 0;
        let mut strips = Vec::new();
        let k1 = integ.evaluate(&x, (log_now && options.log_strips).then_some(&mut strips))?;
        if log_now {
            traj.push(integ.sample(t, &x, &k1));
            traj.strips.extend(strips.into_iter().map(|s| (t, s)));
        }
        if n == steps {
            break;
        }
        let k2 = integ.evaluate(&(x + 0.5 * h * k1.derivative), None)?;
        let k3 = integ.evaluate(&(x + 0.5 * h * k2.derivative), None)?;
        let k4 = integ.evaluate(&(x + h * k3.derivative), None)?;
        x += h / 6.0 * (k1.derivative + 2.0 * k2.derivative + 2.0 * k3.derivative + k4.derivative);

        let (k, mut d, work) = unpack(&x);
        let k = model.topology.project(&k)?;
        d.r_b = orthonormalize(&d.r_b);
        x = pack(&k, &d, work);
        integ.check(t + h, &x)?;
    }
    Ok(traj)
}
