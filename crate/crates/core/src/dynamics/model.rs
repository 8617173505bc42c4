use nalgebra::{Matrix3, SMatrix, SVector, Vector2, Vector3};

use super::{DynamicState, GeneralizedForce, MassProperties, WingLink};
use crate::error::{Error, Result};

/// Above this 1-norm condition estimate the massed EOM is treated as singular.
const SINGULAR_CONDITION: f64 = 1e13;

/// A material point on a wing link: `along`/`across` in the link plane from
/// the link's joint, `x_offset` along the flapping axis (body x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPoint {
    pub link: WingLink,
    pub along: f64,
    pub across: f64,
    pub x_offset: f64,
}

impl LinkPoint {
    pub fn new(link: WingLink, along: f64, across: f64) -> Self {
        Self { link, along, across, x_offset: 0.0 }
    }
}

/// Body-frame kinematics of a [`LinkPoint`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKinematics {
    /// Position relative to the body origin.
    pub r: Vector3<f64>,
    /// Rate of `r` as seen in the body frame.
    pub r_dot: Vector3<f64>,
    /// `d r / d phi`.
    pub d: SMatrix<f64, 3, 4>,
    /// Second derivative of `r` in the body frame at zero `phi''`.
    pub quad: Vector3<f64>,
}

fn rot90(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn e(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

impl PointKinematics {
    pub fn of(state: &DynamicState, props: &MassProperties, point: &LinkPoint) -> Self {
        let link = point.link;
        let s = link.side();
        let slot = link.humerus_slot();
        let (h, hd) = (state.q[3 + slot], state.qd[3 + slot]);
        let local = |angle: f64| point.along * e(angle) + point.across * rot90(e(angle));

        let mut dp = [Vector2::zeros(); 2];
        let (p, acc) = if link.is_radius() {
            let (rel, reld) = (state.q[4 + slot], state.qd[4 + slot]);
            let psi = h + rel;
            let elbow = props.elbow_distance() * e(h);
            let prel = local(psi);
            let p = elbow + prel;
            dp[0] = rot90(p);
            dp[1] = rot90(prel);
            (p, -hd * hd * elbow - (hd + reld).powi(2) * prel)
        } else {
            let p = local(h);
            dp[0] = rot90(p);
            (p, -hd * hd * p)
        };

        let lift = |v: Vector2<f64>| Vector3::new(0.0, s * v.x, v.y);
        let mut d = SMatrix::<f64, 3, 4>::zeros();
        d.set_column(slot, &lift(dp[0]));
        if link.is_radius() {
            d.set_column(slot + 1, &lift(dp[1]));
        }
        let r = props.shoulder(s) + Vector3::new(point.x_offset, s * p.x, p.y);
        let r_dot = d * state.phi_rate();
        Self { r, r_dot, d, quad: lift(acc) }
    }

    /// Inertial velocity Jacobian `[I | R D | -R [r]x]`.
    pub fn jacobian(&self, r_b: &Matrix3<f64>) -> SMatrix<f64, 3, 10> {
        let mut j = SMatrix::<f64, 3, 10>::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        j.fixed_view_mut::<3, 4>(0, 3).copy_from(&(r_b * self.d));
        j.fixed_view_mut::<3, 3>(0, 7).copy_from(&(-r_b * self.r.cross_matrix()));
        j
    }

    pub fn position(&self, state: &DynamicState) -> Vector3<f64> {
        state.position() + state.r_b * self.r
    }

    pub fn velocity(&self, state: &DynamicState) -> Vector3<f64> {
        state.velocity() + state.r_b * (state.omega.cross(&self.r) + self.r_dot)
    }

    /// Inertial acceleration at zero generalized acceleration.
    pub fn accel_bias(&self, state: &DynamicState) -> Vector3<f64> {
        let w = &state.omega;
        state.r_b * (w.cross(&w.cross(&self.r)) + 2.0 * w.cross(&self.r_dot) + self.quad)
    }
}

/// Link frame to body frame: rotation about body x by the signed link angle,
/// after turning the right wing's frame half a turn about x.
pub fn link_rotation(state: &DynamicState, link: WingLink) -> Matrix3<f64> {
    let s = link.side();
    let (sn, cs) = (s * state.link_angle(link)).sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cs, -sn, 0.0, sn, cs);
    if s > 0.0 {
        rx
    } else {
        rx * Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))
    }
}

/// Per-link terms shared by the mass matrix, bias and momentum.
struct LinkTerms {
    mass: f64,
    inertia: Matrix3<f64>,
    jv: SMatrix<f64, 3, 10>,
    jw: SMatrix<f64, 3, 10>,
    com: PointKinematics,
    rot: Matrix3<f64>,
}

fn link_terms(state: &DynamicState, props: &MassProperties, link: WingLink) -> LinkTerms {
    let cfg = props.link(link);
    let com = PointKinematics::of(state, props, &LinkPoint::new(link, cfg.com_m[0], cfg.com_m[1]));
    let rot = link_rotation(state, link);
    let mut jw = SMatrix::<f64, 3, 10>::zeros();
    let s = link.side();
    let slot = link.humerus_slot();
    jw[(0, 3 + slot)] = s;
    if link.is_radius() {
        jw[(0, 4 + slot)] = s;
    }
    jw.fixed_view_mut::<3, 3>(0, 7).copy_from(&rot.transpose());
    LinkTerms {
        mass: cfg.mass_kg,
        inertia: Matrix3::from_diagonal(&Vector3::from(cfg.inertia_kg_m2)),
        jv: com.jacobian(&state.r_b),
        jw,
        com,
        rot,
    }
}

fn assemble(state: &DynamicState, props: &MassProperties) -> (SMatrix<f64, 10, 10>, [LinkTerms; 4]) {
    let mut m = SMatrix::<f64, 10, 10>::zeros();
    for i in 0..3 {
        m[(i, i)] = props.body_mass_kg;
    }
    m.fixed_view_mut::<3, 3>(7, 7).copy_from(&props.body_inertia());
    let links = WingLink::ALL.map(|l| link_terms(state, props, l));
    for t in &links {
        m += t.mass * t.jv.transpose() * t.jv + t.jw.transpose() * t.inertia * t.jw;
    }
    (m, links)
}

/// `M_d`: symmetric positive definite 10x10 generalized inertia.
pub fn mass_matrix(state: &DynamicState, props: &MassProperties) -> Result<SMatrix<f64, 10, 10>> {
    let (m, _) = assemble(state, props);
    if m.cholesky().is_none() {
        return Err(Error::NonPositiveDefinite);
    }
    Ok(m)
}

fn bias_with(state: &DynamicState, props: &MassProperties, gravity: f64, links: &[LinkTerms; 4]) -> SVector<f64, 10> {
    let v = state.generalized_velocity();
    let w = state.omega;
    let j = props.body_inertia();
    let mut h = SVector::<f64, 10>::zeros();
    h[2] += props.body_mass_kg * gravity;
    h.fixed_rows_mut::<3>(7).copy_from(&w.cross(&(j * w)));
    let up = Vector3::new(0.0, 0.0, gravity);
    for (t, link) in links.iter().zip(WingLink::ALL) {
        let a = t.com.accel_bias(state) + up;
        let w_link = t.jw * v;
        let omega_rel = Vector3::new(link.side() * state.phi_rate_of(link), 0.0, 0.0);
        let alpha = -t.rot.transpose() * omega_rel.cross(&w);
        h += t.mass * t.jv.transpose() * a
            + t.jw.transpose() * (t.inertia * alpha + w_link.cross(&(t.inertia * w_link)));
    }
    h
}

/// `h_d`: velocity-quadratic inertial terms plus the gravity load.
pub fn bias_forces(state: &DynamicState, props: &MassProperties, gravity: f64) -> SVector<f64, 10> {
    let links = WingLink::ALL.map(|l| link_terms(state, props, l));
    bias_with(state, props, gravity, &links)
}

/// `[p'', phi'', omega'] = M_d^{-1} (Q - h_d)`.
pub fn dynamics_accel(
    state: &DynamicState,
    props: &MassProperties,
    gravity: f64,
    forces: &GeneralizedForce,
) -> Result<SVector<f64, 10>> {
    let (m, links) = assemble(state, props);
    let h = bias_with(state, props, gravity, &links);
    let chol = m.cholesky().ok_or(Error::NonPositiveDefinite)?;
    let norm1 = |a: &SMatrix<f64, 10, 10>| a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let condition = norm1(&m) * norm1(&chol.inverse());
    if !(condition < SINGULAR_CONDITION) {
        return Err(Error::SingularMassMatrix { condition });
    }
    Ok(chol.solve(&(forces - h)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Energies {
    pub kinetic: f64,
    /// Gravitational potential relative to z = 0.
    pub gravitational: f64,
}

pub fn energies(state: &DynamicState, props: &MassProperties, gravity: f64) -> Energies {
    let v = state.generalized_velocity();
    let (m, links) = assemble(state, props);
    let mut potential = props.body_mass_kg * gravity * state.q[2];
    for t in &links {
        potential += t.mass * gravity * t.com.position(state).z;
    }
    Energies { kinetic: 0.5 * v.dot(&(m * v)), gravitational: potential }
}

pub fn total_mass(props: &MassProperties) -> f64 {
    props.body_mass_kg + 2.0 * (props.humerus.mass_kg + props.radius.mass_kg)
}

/// Position and velocity of the whole vehicle's center of mass, inertial.
pub fn vehicle_com(state: &DynamicState, props: &MassProperties) -> (Vector3<f64>, Vector3<f64>) {
    let mut x = props.body_mass_kg * state.position();
    let mut v = props.body_mass_kg * state.velocity();
    for link in WingLink::ALL {
        let cfg = props.link(link);
        let com = PointKinematics::of(state, props, &LinkPoint::new(link, cfg.com_m[0], cfg.com_m[1]));
        x += cfg.mass_kg * com.position(state);
        v += cfg.mass_kg * com.velocity(state);
    }
    let m = total_mass(props);
    (x / m, v / m)
}

pub fn linear_momentum(state: &DynamicState, props: &MassProperties) -> Vector3<f64> {
    vehicle_com(state, props).1 * total_mass(props)
}

/// `Pi`: angular momentum of body and links about the vehicle center of
/// mass, inertial frame.
pub fn angular_momentum(state: &DynamicState, props: &MassProperties) -> Vector3<f64> {
    let (xg, vg) = vehicle_com(state, props);
    let v = state.generalized_velocity();
    let mut pi = props.body_mass_kg * (state.position() - xg).cross(&(state.velocity() - vg))
        + state.r_b * (props.body_inertia() * state.omega);
    for link in WingLink::ALL {
        let t = link_terms(state, props, link);
        let (x, vel) = (t.com.position(state), t.com.velocity(state));
        pi += t.mass * (x - xg).cross(&(vel - vg)) + state.r_b * t.rot * (t.inertia * (t.jw * v));
    }
    pi
}

impl DynamicState {
    /// Absolute planar angular rate of a link.
    pub(crate) fn phi_rate_of(&self, link: WingLink) -> f64 {
        let slot = link.humerus_slot();
        if link.is_radius() {
            self.qd[3 + slot] + self.qd[4 + slot]
        } else {
            self.qd[3 + slot]
        }
    }
}
