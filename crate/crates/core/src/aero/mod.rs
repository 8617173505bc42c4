//! Quasi-steady blade-element loads on the four rectangular wing segments.
//!
//! Each segment rides on one massed link with its leading edge on the link
//! axis and its chord pointing aft along body -x. Flow is sampled at the
//! mid-chord point of each strip and the force acts at the quarter chord.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicState, GeneralizedForce, LinkPoint, MassProperties, PointKinematics, WingLink};
use crate::error::{Error, Result};

/// Below this projected speed (m/s) the flow angle is undefined.
pub const DEGENERATE_SPEED: f64 = 1e-9;

/// `C = c0 + c1 * sin(c2 * alpha + c3)` for lift and
/// `C = c0 - c1 * cos(c2 * alpha + c3)` for drag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientFit {
    pub lift: [f64; 4],
    pub drag: [f64; 4],
}

impl Default for CoefficientFit {
    fn default() -> Self {
        Self { lift: [0.0, 1.58, 2.0, 0.0], drag: [1.92, 1.55, 2.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentGeometry {
    pub chord_m: f64,
    pub span_m: f64,
    /// Distance of the segment's inboard edge from the link's joint.
    pub span_start_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroEnvironment {
    pub air_density_kg_m3: f64,
    pub strips_per_segment: usize,
    pub coefficients: CoefficientFit,
    pub humerus_segment: SegmentGeometry,
    pub radius_segment: SegmentGeometry,
}

impl Default for SegmentGeometry {
    fn default() -> Self {
        Self { chord_m: 0.06, span_m: 0.05, span_start_m: 0.0 }
    }
}

impl Default for AeroEnvironment {
    fn default() -> Self {
        Self {
            air_density_kg_m3: 1.225,
            strips_per_segment: 10,
            coefficients: CoefficientFit::default(),
            humerus_segment: SegmentGeometry::default(),
            radius_segment: SegmentGeometry { chord_m: 0.05, span_m: 0.10, span_start_m: 0.0 },
        }
    }
}

impl AeroEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.air_density_kg_m3 >= 0.0 && self.air_density_kg_m3.is_finite()) {
            return Err(Error::validation("aero.air_density_kg_m3", "must be finite and non-negative"));
        }
        if self.strips_per_segment == 0 {
            return Err(Error::validation("aero.strips_per_segment", "must be at least 1"));
        }
        for (key, g) in [("aero.humerus_segment", &self.humerus_segment), ("aero.radius_segment", &self.radius_segment)]
        {
            if !(g.chord_m > 0.0 && g.chord_m.is_finite()) {
                return Err(Error::validation(format!("{key}.chord_m"), "must be positive"));
            }
            if !(g.span_m > 0.0 && g.span_m.is_finite()) {
                return Err(Error::validation(format!("{key}.span_m"), "must be positive"));
            }
            if !(g.span_start_m >= 0.0 && g.span_start_m.is_finite()) {
                return Err(Error::validation(format!("{key}.span_start_m"), "must be non-negative"));
            }
        }
        let c = &self.coefficients;
        if c.lift.iter().chain(&c.drag).any(|x| !x.is_finite()) {
            return Err(Error::validation("aero.coefficients", "must be finite"));
        }
        if c.drag[0] < c.drag[1].abs() {
            return Err(Error::validation("aero.coefficients.drag", "c0 < |c1| allows negative drag"));
        }
        Ok(())
    }

    /// Segments of both wings in [`WingLink::ALL`] order.
    pub fn segments(&self) -> [WingSegment; 4] {
        WingLink::ALL.map(|link| {
            let g = if link.is_radius() { &self.radius_segment } else { &self.humerus_segment };
            WingSegment {
                link,
                chord: g.chord_m,
                span: g.span_m,
                span_start: g.span_start_m,
                strips: self.strips_per_segment,
            }
        })
    }

    /// Planform area of both wings.
    pub fn wing_area(&self) -> f64 {
        self.segments().iter().map(|s| s.chord * s.span).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WingSegment {
    pub link: WingLink,
    pub chord: f64,
    pub span: f64,
    pub span_start: f64,
    pub strips: usize,
}

/// One spanwise strip; positions are in the link plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BladeElement {
    pub link: WingLink,
    pub k: usize,
    pub chord: f64,
    pub width: f64,
    /// Distance of the strip center from the link's joint.
    pub along: f64,
}

impl BladeElement {
    /// Quarter-chord point (force application).
    pub fn pressure_point(&self) -> LinkPoint {
        LinkPoint { link: self.link, along: self.along, across: 0.0, x_offset: -0.25 * self.chord }
    }

    /// Mid-chord point (flow sampling).
    pub fn mid_chord_point(&self) -> LinkPoint {
        LinkPoint { link: self.link, along: self.along, across: 0.0, x_offset: -0.5 * self.chord }
    }
}

impl WingSegment {
    pub fn elements(&self) -> impl Iterator<Item = BladeElement> + '_ {
        let width = self.span / self.strips as f64;
        (0..self.strips).map(move |k| BladeElement {
            link: self.link,
            k,
            chord: self.chord,
            width,
            along: self.span_start + (k as f64 + 0.5) * width,
        })
    }

    /// Columns: chord (body x), span (along the link), normal; body frame.
    pub fn frame(&self, state: &DynamicState) -> Matrix3<f64> {
        let s = self.link.side();
        let (sn, cs) = state.link_angle(self.link).sin_cos();
        let x = Vector3::x();
        let span = Vector3::new(0.0, s * cs, sn);
        let normal = s * x.cross(&span);
        Matrix3::from_columns(&[x, span, normal])
    }
}

pub fn wrap_angle(alpha: f64) -> f64 {
    let a = alpha.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

/// `(C_L, C_D)` of the configured sinusoidal fit.
pub fn lift_drag_coefficients(alpha: f64, env: &AeroEnvironment) -> (f64, f64) {
    let a = wrap_angle(alpha);
    let [l0, l1, l2, l3] = env.coefficients.lift;
    let [d0, d1, d2, d3] = env.coefficients.drag;
    (l0 + l1 * (l2 * a + l3).sin(), d0 - d1 * (d2 * a + d3).cos())
}

/// Flow with a well-defined angle of attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Airspeed {
    pub v_r: f64,
    pub alpha: f64,
}

/// The chord-normal projection of the velocity vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegenerateFlow;

/// `velocity` in segment axes (chord, span, normal).
pub fn effective_airspeed(velocity: &Vector3<f64>) -> std::result::Result<Airspeed, DegenerateFlow> {
    let v_r = velocity.x.hypot(velocity.z);
    if !(v_r >= DEGENERATE_SPEED) {
        return Err(DegenerateFlow);
    }
    Ok(Airspeed { v_r, alpha: velocity.z.atan2(velocity.x) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripForce {
    pub element: BladeElement,
    pub alpha: f64,
    pub v_r: f64,
    pub lift: f64,
    pub drag: f64,
    /// `u_a`, inertial frame.
    pub force: Vector3<f64>,
    pub pressure_point: PointKinematics,
}

/// Lift and drag of one strip, rotated to the inertial frame.
pub fn strip_force(
    element: &BladeElement,
    segment: &WingSegment,
    state: &DynamicState,
    props: &MassProperties,
    env: &AeroEnvironment,
) -> StripForce {
    let frame = segment.frame(state);
    let mid = PointKinematics::of(state, props, &element.mid_chord_point());
    let pressure_point = PointKinematics::of(state, props, &element.pressure_point());
    let v_body = state.r_b.transpose() * mid.velocity(state);
    let v_seg = frame.transpose() * v_body;
    let mut out = StripForce {
        element: *element,
        alpha: 0.0,
        v_r: 0.0,
        lift: 0.0,
        drag: 0.0,
        force: Vector3::zeros(),
        pressure_point,
    };
    let Ok(Airspeed { v_r, alpha }) = effective_airspeed(&v_seg) else {
        return out;
    };
    let (cl, cd) = lift_drag_coefficients(alpha, env);
    let q = 0.5 * env.air_density_kg_m3 * v_r * v_r * element.chord * element.width;
    let span = frame.column(1).into_owned();
    let drag_dir = -(v_body - v_body.dot(&span) * span) / v_r;
    let lift_dir = segment.link.side() * drag_dir.cross(&span);
    let r_k = Matrix3::from_columns(&[lift_dir, drag_dir.cross(&lift_dir), drag_dir]);
    out.alpha = alpha;
    out.v_r = v_r;
    out.lift = q * cl;
    out.drag = q * cd;
    out.force = state.r_b * (r_k * Vector3::new(out.lift, 0.0, out.drag));
    out
}

/// Total aerodynamic load on one segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentWrench {
    /// Inertial force.
    pub force: Vector3<f64>,
    /// Inertial moment about the body origin.
    pub moment: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeroLoads {
    pub generalized: GeneralizedForce,
    pub wrenches: [SegmentWrench; 4],
    /// `sum u_a . p_a'`.
    pub power: f64,
}

/// Maps every strip force into the generalized velocity space through the
/// velocity Jacobian of its pressure point.
pub fn aero_generalized_force(state: &DynamicState, props: &MassProperties, env: &AeroEnvironment) -> AeroLoads {
    aero_loads_with(state, props, env, |_| {})
}

/// As [`aero_generalized_force`], handing every strip to `visit`.
pub fn aero_loads_with(
    state: &DynamicState,
    props: &MassProperties,
    env: &AeroEnvironment,
    mut visit: impl FnMut(&StripForce),
) -> AeroLoads {
    let mut loads = AeroLoads { generalized: SVector::zeros(), wrenches: [SegmentWrench::default(); 4], power: 0.0 };
    if env.air_density_kg_m3 == 0.0 {
        return loads;
    }
    let rt = state.r_b.transpose();
    for (i, segment) in env.segments().iter().enumerate() {
        for element in segment.elements() {
            let strip = strip_force(&element, segment, state, props, env);
            visit(&strip);
            let pk = &strip.pressure_point;
            let f = strip.force;
            let f_body = rt * f;
            let g = &mut loads.generalized;
            let mut rows = g.fixed_rows_mut::<3>(0);
            rows += f;
            let mut rows = g.fixed_rows_mut::<4>(3);
            rows += pk.d.transpose() * f_body;
            let mut rows = g.fixed_rows_mut::<3>(7);
            rows += pk.r.cross(&f_body);
            loads.wrenches[i].force += f;
            loads.wrenches[i].moment += state.r_b * pk.r.cross(&f_body);
            loads.power += f.dot(&pk.velocity(state));
        }
    }
    loads
}

/// Per-strip debug log: `time,segment,k,alpha,v_r,lift,drag`.
pub fn write_strip_csv<W: Write>(mut out: W, rows: &[(f64, StripForce)]) -> std::io::Result<()> {
    writeln!(out, "time,segment,k,alpha,v_r,lift,drag")?;
    for (t, s) in rows {
        writeln!(
            out,
            "{t:e},{},{},{:e},{:e},{:e},{:e}",
            s.element.link.label(),
            s.element.k,
            s.alpha,
            s.v_r,
            s.lift,
            s.drag
        )?;
    }
    Ok(())
}
