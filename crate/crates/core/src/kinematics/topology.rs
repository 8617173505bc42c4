use nalgebra::{SVector, Vector2};

use super::expr::{PointExpr, Term};
use super::{coord, Fdc, MechanismConfig};
use crate::error::{Error, Result};

/// Either end of a joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkRef {
    Ground,
    Link(u8),
    /// A massed link of the dynamic subsystem, reached through a coupling site.
    MassedHumerus,
    MassedRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    PrismaticFdc(Fdc),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentLength {
    Fixed(f64),
    Fdc(Fdc),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: &'static str,
    pub length: SegmentLength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: u8,
    pub name: &'static str,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub id: u8,
    pub kind: JointKind,
    pub parent: LinkRef,
    pub child: LinkRef,
    /// Planar position at the assembly reference pose (crank angle zero,
    /// nominal FDC lengths).
    pub anchor: Vector2<f64>,
}

/// One closed stage: `lhs(q) == rhs(q)`, where the last term of each side
/// carries one of the two unknown angles of the stage.
#[derive(Debug, Clone)]
pub(crate) struct Dyad {
    pub lhs: PointExpr,
    pub rhs: PointExpr,
    pub branch: f64,
    /// Coordinate rows of `M_k` taken by the two closure equations.
    pub rows: [usize; 2],
}

impl Dyad {
    pub fn unknowns(&self) -> [usize; 2] {
        [self.lhs.last_angle(), self.rhs.last_angle()]
    }

    pub fn residual(&self, q: &SVector<f64, 12>) -> Vector2<f64> {
        self.lhs.position(q) - self.rhs.position(q)
    }

    /// Sign of `(B - A) x (C - A)` for the current coordinates.
    pub fn branch_of(&self, q: &SVector<f64, 12>) -> f64 {
        let a = self.lhs.position_without_last(q);
        let b = self.rhs.position_without_last(q);
        let c = self.lhs.position(q);
        cross(&(b - a), &(c - a)).signum()
    }
}

pub(crate) fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// The massless linkage network of one wing.
///
/// Both wings share one set of kinematic coordinates: they are driven by a
/// single motor and their FDCs are commanded together.
#[derive(Debug, Clone)]
pub struct LinkageTopology {
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub crank_joints: [u8; 2],
    pub geometry: MechanismConfig,
    pub(crate) dyads: [Dyad; 3],
    pub(crate) joint5: PointExpr,
    pub(crate) joint16: PointExpr,
    pub(crate) elbow: PointExpr,
}

impl LinkageTopology {
    pub fn new(geometry: &MechanismConfig) -> Result<Self> {
        let g = geometry;
        let ground = |p: [f64; 2]| Vector2::new(p[0], p[1]);
        let hum = g.humerus_axis_offset_rad;
        let fdc = |f: Fdc| Some(f.coord());

        let d1 = Dyad {
            lhs: PointExpr::new(
                ground(g.crank_center_m),
                vec![
                    Term::fixed(coord::THETA1, 0.0, g.crank_length_m),
                    Term::fixed(coord::THETA2, 0.0, g.coupler_length_m),
                ],
            ),
            rhs: PointExpr::new(Vector2::zeros(), vec![Term::new(coord::THETA4, 0.0, 0.0, fdc(Fdc::L3b))]),
            branch: f64::from(g.branches[0]),
            rows: [coord::THETA2, coord::THETA4],
        };
        let d2 = Dyad {
            lhs: PointExpr::new(
                ground(g.second_crank_center_m),
                vec![
                    Term::fixed(coord::THETA9, 0.0, g.second_crank_length_m),
                    Term::new(coord::THETA10, 0.0, g.pushrod_fixed_length_m, fdc(Fdc::L8b)),
                ],
            ),
            rhs: PointExpr::new(
                Vector2::zeros(),
                vec![
                    Term::fixed(coord::THETA4, hum, g.bell_crank_pivot_m),
                    Term::fixed(coord::THETA12, 0.0, g.bell_crank_input_arm_m),
                ],
            ),
            branch: f64::from(g.branches[1]),
            rows: [coord::THETA10, coord::THETA12],
        };
        let d3 = Dyad {
            lhs: PointExpr::new(
                Vector2::zeros(),
                vec![
                    Term::fixed(coord::THETA4, hum, g.bell_crank_pivot_m),
                    Term::fixed(coord::THETA12, g.bell_crank_arm_angle_rad, g.bell_crank_output_arm_m),
                    Term::new(coord::THETA13, 0.0, g.radius_link_fixed_length_m, fdc(Fdc::L10b)),
                ],
            ),
            rhs: PointExpr::new(
                Vector2::zeros(),
                vec![
                    Term::fixed(coord::THETA4, hum, g.elbow_distance_m),
                    Term::fixed(coord::THETA14, 0.0, g.radius_crank_arm_m),
                ],
            ),
            branch: f64::from(g.branches[2]),
            rows: [coord::THETA13, coord::THETA14],
        };
        let joint5 = PointExpr::new(
            Vector2::zeros(),
            vec![
                Term::new(coord::THETA4, 0.0, 0.0, fdc(Fdc::L3b)),
                Term::new(coord::THETA4, g.output_arm_angle_rad, 0.0, fdc(Fdc::L3c)),
            ],
        );
        let elbow = PointExpr::new(Vector2::zeros(), vec![Term::fixed(coord::THETA4, hum, g.elbow_distance_m)]);
        let joint16 = PointExpr::new(
            Vector2::zeros(),
            vec![
                Term::fixed(coord::THETA4, hum, g.elbow_distance_m),
                Term::fixed(coord::THETA14, g.radius_output_angle_rad, g.radius_output_arm_m),
            ],
        );

        let mut topology = Self {
            links: Vec::new(),
            joints: Vec::new(),
            crank_joints: [1, 9],
            geometry: g.clone(),
            dyads: [d1, d2, d3],
            joint5,
            joint16,
            elbow,
        };
        topology.validate_geometry()?;
        let nominal = nalgebra::Vector4::from(g.fdc.nominal_m);
        let reference = topology.solve_loop_closure(0.0, &nominal, None)?;
        topology.links = links(g);
        topology.joints = topology.joints_at(&reference.q);
        topology.validate()?;
        Ok(topology)
    }

    fn validate_geometry(&self) -> Result<()> {
        let g = &self.geometry;
        let positive = [
            ("mechanism.crank_length_m", g.crank_length_m),
            ("mechanism.coupler_length_m", g.coupler_length_m),
            ("mechanism.second_crank_length_m", g.second_crank_length_m),
            ("mechanism.bell_crank_pivot_m", g.bell_crank_pivot_m),
            ("mechanism.bell_crank_input_arm_m", g.bell_crank_input_arm_m),
            ("mechanism.bell_crank_output_arm_m", g.bell_crank_output_arm_m),
            ("mechanism.elbow_distance_m", g.elbow_distance_m),
            ("mechanism.radius_crank_arm_m", g.radius_crank_arm_m),
            ("mechanism.radius_output_arm_m", g.radius_output_arm_m),
            ("mechanism.closure_tolerance_m", g.closure_tolerance_m),
            ("mechanism.branch_jump_threshold_rad", g.branch_jump_threshold_rad),
            ("mechanism.singular_condition_limit", g.singular_condition_limit),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::validation(key, format!("must be positive, got {value}")));
            }
        }
        for (key, value) in [
            ("mechanism.pushrod_fixed_length_m", g.pushrod_fixed_length_m),
            ("mechanism.radius_link_fixed_length_m", g.radius_link_fixed_length_m),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::validation(key, format!("must be non-negative, got {value}")));
            }
        }
        if g.branches.iter().any(|b| b.abs() != 1) {
            return Err(Error::validation("mechanism.branches", "each branch must be +1 or -1"));
        }
        if !g.gear_ratio.is_finite() || g.gear_ratio == 0.0 {
            return Err(Error::validation("mechanism.gear_ratio", "must be finite and nonzero"));
        }
        for i in 0..4 {
            let (lo, nom, hi) = (g.fdc.min_m[i], g.fdc.nominal_m[i], g.fdc.max_m[i]);
            let fdc = Fdc::ALL[i];
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::validation(
                    "mechanism.fdc.min_m",
                    format!("{fdc} needs 0 < min <= max, got [{lo}, {hi}]"),
                ));
            }
            if !(lo <= nom && nom <= hi) {
                return Err(Error::validation("mechanism.fdc.nominal_m", format!("{fdc}: {nom} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Structural invariants of the link/joint graph.
    pub fn validate(&self) -> Result<()> {
        if self.links.len() != 12 {
            return Err(Error::validation("topology.links", format!("expected 12 links, found {}", self.links.len())));
        }
        if self.joints.len() != 17 {
            return Err(Error::validation(
                "topology.joints",
                format!("expected 17 joints, found {}", self.joints.len()),
            ));
        }
        let mut fdcs: Vec<Fdc> = self
            .joints
            .iter()
            .filter_map(|j| match j.kind {
                JointKind::PrismaticFdc(f) => Some(f),
                JointKind::Revolute => None,
            })
            .collect();
        fdcs.sort_by_key(|f| f.index());
        if fdcs != Fdc::ALL {
            return Err(Error::validation(
                "topology.joints",
                "expected exactly one prismatic FDC joint for each of l_3b, l_3c, l_8b, l_10b",
            ));
        }
        for id in self.crank_joints {
            let joint = self
                .joint(id)
                .ok_or_else(|| Error::validation("topology.crank_joints", format!("missing joint j{id}")))?;
            if joint.kind != JointKind::Revolute || joint.parent != LinkRef::Ground {
                return Err(Error::validation(
                    "topology.crank_joints",
                    format!("j{id} must be a grounded revolute joint"),
                ));
            }
        }
        let loops = self.independent_loops();
        if loops < self.dyads.len() {
            return Err(Error::validation(
                "topology.joints",
                format!("{} closed loops for {} four-bar stages", loops, self.dyads.len()),
            ));
        }
        Ok(())
    }

    pub fn joint(&self, id: u8) -> Option<&Joint> {
        self.joints.iter().find(|j| j.id == id)
    }

    /// Cyclomatic number of the massless linkage graph (ground included,
    /// coupling sites to the massed links excluded).
    pub fn independent_loops(&self) -> usize {
        let node = |r: LinkRef| match r {
            LinkRef::Ground => Some(0usize),
            LinkRef::Link(i) => Some(i as usize),
            LinkRef::MassedHumerus | LinkRef::MassedRadius => None,
        };
        let n = self.links.len() + 1;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut cycles = 0;
        for j in &self.joints {
            let (Some(a), Some(b)) = (node(j.parent), node(j.child)) else { continue };
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                cycles += 1;
            } else {
                parent[ra] = rb;
            }
        }
        cycles
    }

    fn joints_at(&self, q: &SVector<f64, 12>) -> Vec<Joint> {
        use JointKind::*;
        use LinkRef::*;
        let g = &self.geometry;
        let p = |x: [f64; 2]| Vector2::new(x[0], x[1]);
        let d = &self.dyads;
        let crank_tip = d[0].lhs.position_without_last(q);
        let j3 = d[0].lhs.position(q);
        let j10 = d[1].lhs.position_without_last(q);
        let j11 = d[1].lhs.position(q);
        let pivot = d[1].rhs.position_without_last(q);
        let j13 = d[2].lhs.position_without_last(q);
        let j15 = d[2].lhs.position(q);
        let elbow = self.elbow.position(q);
        let j5 = self.joint5.position(q);
        let j16 = self.joint16.position(q);
        // prismatic joints sit at the middle of their segment
        let mid = |a: Vector2<f64>, b: Vector2<f64>| (a + b) / 2.0;
        let table: [(u8, JointKind, LinkRef, LinkRef, Vector2<f64>); 17] = [
            (1, Revolute, Ground, Link(1), p(g.crank_center_m)),
            (2, Revolute, Link(1), Link(2), crank_tip),
            (3, Revolute, Link(2), Link(4), j3),
            (4, Revolute, Ground, Link(3), Vector2::zeros()),
            (5, Revolute, Link(5), MassedHumerus, j5),
            (6, PrismaticFdc(Fdc::L3b), Link(3), Link(4), mid(Vector2::zeros(), j3)),
            (7, PrismaticFdc(Fdc::L3c), Link(3), Link(5), mid(j3, j5)),
            (8, Revolute, Link(3), Link(9), pivot),
            (9, Revolute, Ground, Link(6), p(g.second_crank_center_m)),
            (10, Revolute, Link(6), Link(8), j10),
            (11, Revolute, Link(7), Link(9), j11),
            (12, PrismaticFdc(Fdc::L8b), Link(8), Link(7), mid(j10, j11)),
            (13, Revolute, Link(9), Link(10), j13),
            (14, PrismaticFdc(Fdc::L10b), Link(10), Link(11), mid(j13, j15)),
            (15, Revolute, Link(11), Link(12), j15),
            (16, Revolute, Link(12), MassedRadius, j16),
            (17, Revolute, Link(3), Link(12), elbow),
        ];
        table.into_iter().map(|(id, kind, parent, child, anchor)| Joint { id, kind, parent, child, anchor }).collect()
    }
}

fn links(g: &MechanismConfig) -> Vec<Link> {
    use SegmentLength::*;
    let seg = |name, length| Segment { name, length };
    vec![
        Link { id: 1, name: "crank", segments: vec![seg("1a", Fixed(g.crank_length_m))] },
        Link { id: 2, name: "coupler", segments: vec![seg("2a", Fixed(g.coupler_length_m))] },
        Link {
            id: 3,
            name: "humerus rocker",
            segments: vec![
                seg("3a", Fixed(g.elbow_distance_m)),
                seg("3b", Fdc(super::Fdc::L3b)),
                seg("3c", Fdc(super::Fdc::L3c)),
            ],
        },
        Link { id: 4, name: "3b slider", segments: vec![] },
        Link { id: 5, name: "3c slider", segments: vec![] },
        Link { id: 6, name: "second crank", segments: vec![seg("6a", Fixed(g.second_crank_length_m))] },
        Link { id: 7, name: "8b slider", segments: vec![] },
        Link {
            id: 8,
            name: "push-rod",
            segments: vec![seg("8a", Fixed(g.pushrod_fixed_length_m)), seg("8b", Fdc(super::Fdc::L8b))],
        },
        Link {
            id: 9,
            name: "bell crank",
            segments: vec![seg("9a", Fixed(g.bell_crank_input_arm_m)), seg("9b", Fixed(g.bell_crank_output_arm_m))],
        },
        Link {
            id: 10,
            name: "radius link",
            segments: vec![seg("10a", Fixed(g.radius_link_fixed_length_m)), seg("10b", Fdc(super::Fdc::L10b))],
        },
        Link { id: 11, name: "10b slider", segments: vec![] },
        Link {
            id: 12,
            name: "radius crank",
            segments: vec![seg("12a", Fixed(g.radius_crank_arm_m)), seg("12c", Fixed(g.radius_output_arm_m))],
        },
    ]
}
