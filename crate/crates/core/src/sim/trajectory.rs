use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::aero::{SegmentWrench, StripForce};
use crate::control::ControlOutput;
use crate::dynamics::{DynamicState, LinkPoint, MassProperties, PointKinematics, WingLink};
use crate::kinematics::{coord, KinematicState};

pub const TRAJECTORY_MAGIC: [u8; 8] = *b"BWTRAJ\0\0";
pub const TRAJECTORY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergySample {
    pub kinetic: f64,
    pub gravitational: f64,
    pub spring: f64,
    /// Cumulative work since the start of the episode.
    pub damping_work: f64,
    pub aero_work: f64,
    pub drive_work: f64,
}

impl EnergySample {
    pub fn total(&self) -> f64 {
        self.kinetic + self.gravitational + self.spring
    }

    pub fn external_work(&self) -> f64 {
        self.damping_work + self.aero_work + self.drive_work
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub kinematic: KinematicState,
    pub dynamic: DynamicState,
    pub control: ControlOutput,
    pub wrenches: [SegmentWrench; 4],
    pub energy: EnergySample,
    /// Total angular momentum about the vehicle center of mass, inertial.
    pub angular_momentum: Vector3<f64>,
    pub pitch: f64,
}

impl TrajectorySample {
    fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(100);
        v.push(self.t);
        v.extend(self.kinematic.q.iter());
        v.extend(self.kinematic.qd.iter());
        v.extend(self.dynamic.q.iter());
        v.extend(self.dynamic.qd.iter());
        for r in 0..3 {
            for c in 0..3 {
                v.push(self.dynamic.r_b[(r, c)]);
            }
        }
        v.extend(self.dynamic.omega.iter());
        v.push(self.control.u_g);
        v.extend(self.control.u_p.iter());
        v.extend(self.control.l_ref.iter());
        for w in &self.wrenches {
            v.extend(w.force.iter());
            v.extend(w.moment.iter());
        }
        let e = &self.energy;
        v.extend([e.kinetic, e.gravitational, e.spring, e.damping_work, e.aero_work, e.drive_work]);
        v.extend(self.angular_momentum.iter());
        v.push(self.pitch);
        v
    }
}

/// Uniformly sampled log of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
    /// Per-strip forces with their sample time, when requested.
    pub strips: Vec<(f64, StripForce)>,
}

impl Trajectory {
    pub fn new(dt: f64) -> Self {
        Self { dt, samples: Vec::new(), strips: Vec::new() }
    }

    pub fn push(&mut self, sample: TrajectorySample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Column order of the CSV and binary exports.
    pub fn columns() -> Vec<String> {
        let mut c = vec!["t".to_string()];
        c.extend(coord::NAMES.iter().map(|n| n.to_string()));
        c.extend(coord::NAMES.iter().map(|n| format!("{n}_dot")));
        let phi = ["phi_lh", "phi_lr", "phi_rh", "phi_rr"];
        c.extend(["x", "y", "z"].iter().chain(&phi).map(|n| n.to_string()));
        c.extend(["x", "y", "z"].iter().chain(&phi).map(|n| format!("{n}_dot")));
        for r in 1..=3 {
            for col in 1..=3 {
                c.push(format!("r{r}{col}"));
            }
        }
        c.extend(["omega_x", "omega_y", "omega_z", "u_g"].map(String::from));
        c.extend(coord::NAMES[coord::L3B..].iter().map(|n| format!("u_{}", &n[2..])));
        c.extend(coord::NAMES[coord::L3B..].iter().map(|n| format!("{n}_ref")));
        for link in WingLink::ALL {
            for q in ["fx", "fy", "fz", "mx", "my", "mz"] {
                c.push(format!("aero_{}_{q}", link.label().to_lowercase()));
            }
        }
        c.extend(
            [
                "kinetic",
                "gravitational",
                "spring",
                "damping_work",
                "aero_work",
                "drive_work",
                "pi_x",
                "pi_y",
                "pi_z",
                "theta_y",
            ]
            .map(String::from),
        );
        c
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        self.samples.iter().map(TrajectorySample::values)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{}", Self::columns().join(","))?;
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        out.flush()
    }

    /// Magic, version, column manifest, row count, then little-endian f64 rows.
    pub fn write_binary<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        let columns = Self::columns();
        out.write_all(&TRAJECTORY_MAGIC)?;
        out.write_all(&TRAJECTORY_VERSION.to_le_bytes())?;
        out.write_all(&(columns.len() as u32).to_le_bytes())?;
        for c in &columns {
            out.write_all(&(c.len() as u16).to_le_bytes())?;
            out.write_all(c.as_bytes())?;
        }
        out.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for row in self.rows() {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()
    }

    /// Reads a binary dump back as `(columns, rows)`.
    pub fn read_binary<R: Read>(mut input: R) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if magic != TRAJECTORY_MAGIC {
            return Err(bad("not a trajectory dump"));
        }
        let mut u32b = [0u8; 4];
        input.read_exact(&mut u32b)?;
        if u32::from_le_bytes(u32b) != TRAJECTORY_VERSION {
            return Err(bad("unsupported trajectory version"));
        }
        input.read_exact(&mut u32b)?;
        let ncols = u32::from_le_bytes(u32b) as usize;
        let mut columns = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            let mut len = [0u8; 2];
            input.read_exact(&mut len)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            input.read_exact(&mut name)?;
            columns.push(String::from_utf8(name).map_err(|_| bad("column name is not UTF-8"))?);
        }
        let mut u64b = [0u8; 8];
        input.read_exact(&mut u64b)?;
        let nrows = u64::from_le_bytes(u64b) as usize;
        let mut rows = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            let mut row = Vec::with_capacity(ncols);
            for _ in 0..ncols {
                input.read_exact(&mut u64b)?;
                row.push(f64::from_le_bytes(u64b));
            }
            rows.push(row);
        }
        Ok((columns, rows))
    }

    /// Writes `pitch.csv`, `energy.csv` and `wingtip.csv` into `dir`.
    pub fn write_plot_data(&self, dir: &Path, mass: &MassProperties) -> io::Result<()> {
        let mut pitch = BufWriter::new(File::create(dir.join("pitch.csv"))?);
        writeln!(pitch, "t,theta_y")?;
        let mut energy = BufWriter::new(File::create(dir.join("energy.csv"))?);
        writeln!(energy, "t,kinetic,gravitational,spring,total,damping_work,aero_work,drive_work")?;
        let mut tip = BufWriter::new(File::create(dir.join("wingtip.csv"))?);
        writeln!(tip, "t,left_y_body,left_z_body,right_y_body,right_z_body")?;
        for s in &self.samples {
            writeln!(pitch, "{:e},{:e}", s.t, s.pitch)?;
            let e = &s.energy;
            writeln!(
                energy,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                s.t,
                e.kinetic,
                e.gravitational,
                e.spring,
                e.total(),
                e.damping_work,
                e.aero_work,
                e.drive_work
            )?;
            let at = |link| PointKinematics::of(&s.dynamic, mass, &LinkPoint::new(link, mass.radius.length_m, 0.0)).r;
            let (l, r) = (at(WingLink::LeftRadius), at(WingLink::RightRadius));
            writeln!(tip, "{:e},{:e},{:e},{:e},{:e}", s.t, l.y, l.z, r.y, r.z)?;
        }
        pitch.flush()?;
        energy.flush()?;
        tip.flush()
    }
}
