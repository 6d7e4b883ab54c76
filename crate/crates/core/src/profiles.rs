//! Named warp profiles: `sphere:r0`, `euclidean`, `cone:c[:s_moll]`, `wild`,
//! `custom:file`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warped::{Fiber, RadialGrid, Topology, WarpedMetric};

pub const DEFAULT_S_MOLL: f64 = 0.1;

/// Cone `w = sqrt(c) (s - s0)` whose tip is rounded off on `[0, s_moll]`.
///
/// On the mollified zone `w' = sqrt(c) + (1 - sqrt(c)) (1 - σ^2)^3` with
/// `σ = s / s_moll`; this is odd and smooth at the tip, concave, and joins
/// the linear part with three continuous derivatives. Matching `w` forces
/// the apex of the linear part to sit at `s0 < 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothedCone {
    pub c: f64,
    pub s_moll: f64,
}

impl SmoothedCone {
    pub fn new(c: f64, s_moll: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidArgument(format!("cone parameter {c} not in (0, 1]")));
        }
        if !(s_moll > 0.0) {
            return Err(Error::InvalidArgument(format!("mollifier width {s_moll}")));
        }
        Ok(SmoothedCone { c, s_moll })
    }

    /// Position of the apex of the linear part.
    pub fn apex_offset(&self) -> f64 {
        let a = self.c.sqrt();
        -(1.0 - a) * (16.0 / 35.0) * self.s_moll / a
    }

    pub fn eval(&self, s: f64) -> (f64, f64, f64) {
        let a = self.c.sqrt();
        let sm = self.s_moll;
        if s >= sm {
            return (a * (s - self.apex_offset()), a, 0.0);
        }
        let x = s / sm;
        let x2 = x * x;
        let b = 1.0 - x2;
        let w = a * s + (1.0 - a) * sm * x * (1.0 - x2 + 0.6 * x2 * x2 - x2 * x2 * x2 / 7.0);
        let w1 = a + (1.0 - a) * b * b * b;
        let w2 = -6.0 * (1.0 - a) * x * b * b / sm;
        (w, w1, w2)
    }

    /// Sectional curvatures of the linear part, `(k_rad, k_sph)`.
    pub fn exact_curvature(&self, s: f64) -> (f64, f64) {
        let d = s - self.apex_offset();
        (0.0, (1.0 - self.c) / (self.c * d * d))
    }

    /// The metric `(1/i) g`: same cone parameter, mollifier shrunk by `sqrt(i)`.
    pub fn rescaled(&self, i: f64) -> Self {
        SmoothedCone {
            c: self.c,
            s_moll: self.s_moll / i.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    Sphere { r0: f64 },
    Euclidean,
    Cone(SmoothedCone),
    /// `w = s (1 + 0.4 (1 - e^{-s^4}) sin(e^s))`: curvature grows like `e^{2s}`.
    Wild,
    Custom(PathBuf),
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number '{s}' in profile '{spec}'")))
        };
        match parts.as_slice() {
            ["sphere", r] => {
                let r0 = num(r)?;
                if !(r0 > 0.0) {
                    return Err(Error::InvalidArgument(format!("sphere radius {r0}")));
                }
                Ok(Profile::Sphere { r0 })
            }
            ["euclidean"] => Ok(Profile::Euclidean),
            ["cone", c] => Ok(Profile::Cone(SmoothedCone::new(num(c)?, DEFAULT_S_MOLL)?)),
            ["cone", c, sm] => Ok(Profile::Cone(SmoothedCone::new(num(c)?, num(sm)?)?)),
            ["wild"] => Ok(Profile::Wild),
            ["custom", _, ..] => Ok(Profile::Custom(PathBuf::from(&spec["custom:".len()..]))),
            _ => Err(Error::Parse(format!("unknown profile '{spec}'"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Sphere { r0 } => write!(f, "sphere:{r0}"),
            Profile::Euclidean => write!(f, "euclidean"),
            Profile::Cone(c) => write!(f, "cone:{}:{}", c.c, c.s_moll),
            Profile::Wild => write!(f, "wild"),
            Profile::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

fn wild(s: f64) -> (f64, f64, f64) {
    let e4 = (-s.powi(4)).exp();
    let a = 1.0 - e4;
    let a1 = 4.0 * s.powi(3) * e4;
    let a2 = (12.0 * s * s - 16.0 * s.powi(6)) * e4;
    let es = s.exp();
    let (sn, cs) = es.sin_cos();
    let b = sn;
    let b1 = es * cs;
    let b2 = es * cs - es * es * sn;
    let g = 1.0 + 0.4 * a * b;
    let g1 = 0.4 * (a1 * b + a * b1);
    let g2 = 0.4 * (a2 * b + 2.0 * a1 * b1 + a * b2);
    (s * g, g + s * g1, 2.0 * g1 + s * g2)
}

impl Profile {
    pub fn topology(&self) -> Topology {
        match self {
            Profile::Sphere { .. } => Topology::Closed,
            _ => Topology::Open,
        }
    }

    /// `(w, w', w'')` in closed form; `None` for tabulated profiles.
    pub fn eval(&self, s: f64) -> Option<(f64, f64, f64)> {
        match self {
            Profile::Sphere { r0 } => {
                let (sn, cs) = (s / r0).sin_cos();
                Some((r0 * sn, cs, -sn / r0))
            }
            Profile::Euclidean => Some((s, 1.0, 0.0)),
            Profile::Cone(c) => Some(c.eval(s)),
            Profile::Wild => Some(wild(s)),
            Profile::Custom(_) => None,
        }
    }

    /// Sample on a uniform grid of `nodes` points. Closed profiles use their
    /// own extent and ignore `s_max`; tabulated profiles use the file's grid.
    pub fn build(&self, nodes: usize, s_max: f64) -> Result<WarpedMetric> {
        match self {
            Profile::Sphere { r0 } => {
                let grid = RadialGrid::uniform(nodes, std::f64::consts::PI * r0, Topology::Closed)?;
                let n = grid.len();
                let mut w: Vec<f64> = grid.s().iter().map(|&s| r0 * (s / r0).sin()).collect();
                w[0] = 0.0;
                w[n - 1] = 0.0;
                WarpedMetric::new(grid, w, Fiber::Sphere2)
            }
            Profile::Custom(path) => load_csv(path),
            _ => {
                let grid = RadialGrid::uniform(nodes, s_max, Topology::Open)?;
                let w = grid.s().iter().map(|&s| self.eval(s).unwrap().0).collect();
                WarpedMetric::new(grid, w, Fiber::Sphere2)
            }
        }
    }

    /// Sample a closed-form open profile on a given grid.
    pub fn build_on(&self, grid: RadialGrid) -> Result<WarpedMetric> {
        if self.topology() != grid.topology() || matches!(self, Profile::Custom(_)) {
            return Err(Error::InvalidArgument(format!(
                "profile {self} cannot be sampled on this grid"
            )));
        }
        let w = grid.s().iter().map(|&s| self.eval(s).unwrap().0).collect();
        WarpedMetric::new(grid, w, Fiber::Sphere2)
    }
}

/// Read a two-column `s,w` table. Topology is closed when `w` vanishes at
/// the last node.
pub fn load_csv(path: &Path) -> Result<WarpedMetric> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "s" || &headers[1] != "w" {
        return Err(Error::Parse(format!(
            "{}: expected header 's,w'",
            path.display()
        )));
    }
    let mut s = Vec::new();
    let mut w = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad value '{}'", &rec[k])))
        };
        s.push(parse(0)?);
        w.push(parse(1)?);
    }
    let topology = if w.last().is_some_and(|&v| v == 0.0) && w.len() > 1 {
        Topology::Closed
    } else {
        Topology::Open
    };
    let grid = RadialGrid::new(s, topology)?;
    WarpedMetric::new(grid, w, Fiber::Sphere2)
}

/// Write a metric as an `s,w` table with round-trip float formatting.
pub fn write_csv(m: &WarpedMetric, out: &mut impl std::io::Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["s", "w"])?;
    for (s, w) in m.s().iter().zip(m.w()) {
        wtr.write_record([format!("{s:?}"), format!("{w:?}")])?;
    }
    wtr.flush()?;
    Ok(())
}
