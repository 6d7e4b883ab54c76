//! Rotationally symmetric 3-metrics `ds^2 + w(s)^2 g_fiber` on a radial grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GL5;
use crate::stencil::{extrapolate_to_zero, End, NodeSet, Parity, Stencil};

const DERIV_WIDTH: usize = 7;
const INTERP_WIDTH: usize = 6;
/// Tolerance on the extrapolated tip slope `|w'| = 1`.
pub const REGULARITY_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Ball-like: tip at `s = 0`, truncated at `s_max`.
    Open,
    /// Sphere-like: tips at both ends.
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fiber {
    Sphere2,
    Rp3Link,
}

#[derive(Clone, Debug)]
pub struct RadialGrid {
    nodes: NodeSet,
    topology: Topology,
}

impl RadialGrid {
    pub fn new(s: Vec<f64>, topology: Topology) -> Result<Self> {
        if s.len() < 16 {
            return Err(Error::InvalidGrid(format!(
                "{} nodes, at least 16 required",
                s.len()
            )));
        }
        if s[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node is {}, expected 0", s[0])));
        }
        for j in 1..s.len() {
            if !(s[j] > s[j - 1]) || !s[j].is_finite() {
                return Err(Error::InvalidGrid(format!("nodes not increasing at index {j}")));
            }
        }
        for j in 1..s.len() - 1 {
            let a = s[j] - s[j - 1];
            let b = s[j + 1] - s[j];
            let ratio = a.max(b) / a.min(b);
            if ratio > 2.0 + 1e-9 {
                return Err(Error::InvalidGrid(format!(
                    "spacing ratio {ratio:.3} exceeds 2 at index {j}"
                )));
            }
        }
        let right = match topology {
            Topology::Open => End::Open,
            Topology::Closed => End::Tip,
        };
        Ok(RadialGrid {
            nodes: NodeSet::new(s, End::Tip, right),
            topology,
        })
    }

    pub fn uniform(n: usize, s_max: f64, topology: Topology) -> Result<Self> {
        if n < 2 || !(s_max > 0.0) {
            return Err(Error::InvalidGrid(format!("n = {n}, s_max = {s_max}")));
        }
        let h = s_max / (n - 1) as f64;
        let mut s: Vec<f64> = (0..n).map(|j| j as f64 * h).collect();
        s[n - 1] = s_max;
        Self::new(s, topology)
    }

    /// Open grid whose spacing grows geometrically (factor 1.05) from
    /// `h_min` at the tip up to `h_max`.
    pub fn graded(h_min: f64, h_max: f64, s_max: f64) -> Result<Self> {
        if !(h_min > 0.0 && h_max >= h_min && s_max > h_min) {
            return Err(Error::InvalidGrid(format!(
                "h_min = {h_min}, h_max = {h_max}, s_max = {s_max}"
            )));
        }
        let mut s = vec![0.0];
        let mut h = h_min;
        let mut steps = 0;
        while *s.last().unwrap() + h < s_max {
            s.push(s.last().unwrap() + h);
            steps += 1;
            // A few uniform intervals at the tip keep the mirrored stencils
            // symmetric.
            if steps >= 8 {
                h = (h * 1.05).min(h_max);
            }
        }
        let last = *s.last().unwrap();
        if s_max - last < 0.5 * h && s.len() > 1 {
            s.pop();
        }
        s.push(s_max);
        Self::new(s, Topology::Open)
    }

    pub fn s(&self) -> &[f64] {
        &self.nodes.coords
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn s_max(&self) -> f64 {
        *self.s().last().unwrap()
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn node_set(&self) -> &NodeSet {
        &self.nodes
    }

    pub fn min_spacing(&self) -> f64 {
        self.s()
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct WarpedMetric {
    grid: RadialGrid,
    w: Vec<f64>,
    fiber: Fiber,
}

impl WarpedMetric {
    pub fn new(grid: RadialGrid, w: Vec<f64>, fiber: Fiber) -> Result<Self> {
        let n = grid.len();
        if w.len() != n {
            return Err(Error::InvalidMetric(format!(
                "{} warp values for {} nodes",
                w.len(),
                n
            )));
        }
        let last_interior = match grid.topology {
            Topology::Open => n,
            Topology::Closed => n - 1,
        };
        for (j, &v) in w.iter().enumerate().take(last_interior).skip(1) {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidMetric(format!("w = {v} at interior node {j}")));
            }
        }
        let m = WarpedMetric { grid, w, fiber };
        m.check_regularity()?;
        Ok(m)
    }

    pub fn from_fn(grid: RadialGrid, fiber: Fiber, f: impl Fn(f64) -> f64) -> Result<Self> {
        let w = grid.s().iter().map(|&s| f(s)).collect();
        Self::new(grid, w, fiber)
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn s(&self) -> &[f64] {
        self.grid.s()
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn fiber(&self) -> Fiber {
        self.fiber
    }

    pub fn topology(&self) -> Topology {
        self.grid.topology
    }

    pub fn s_max(&self) -> f64 {
        self.grid.s_max()
    }

    /// Manifold dimension; the flow is always three-dimensional.
    pub fn dim(&self) -> usize {
        3
    }

    fn check_regularity(&self) -> Result<()> {
        let scale = self.w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let s = self.s();
        let n = s.len();
        if self.w[0].abs() > 1e-10 * scale {
            return Err(Error::RegularityViolation(format!("w(0) = {:e}", self.w[0])));
        }
        let u0 = tip_limit(&s[1..5], &self.w[1..5], |si| si);
        if (u0 - 1.0).abs() > REGULARITY_TOL {
            return Err(Error::RegularityViolation(format!("w'(0) = {u0:.6}")));
        }
        if self.topology() == Topology::Closed {
            if self.w[n - 1].abs() > 1e-10 * scale {
                return Err(Error::RegularityViolation(format!(
                    "w(L) = {:e}",
                    self.w[n - 1]
                )));
            }
            let l = s[n - 1];
            let ds: Vec<f64> = (2..6).map(|k| l - s[n - k]).collect();
            let ws: Vec<f64> = (2..6).map(|k| self.w[n - k]).collect();
            let v0 = tip_limit(&ds, &ws, |d| d);
            if (v0 - 1.0).abs() > REGULARITY_TOL {
                return Err(Error::RegularityViolation(format!("|w'(L)| = {v0:.6}")));
            }
        }
        Ok(())
    }

    /// First and second arclength derivatives of `w` at every node.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        let ns = self.grid.node_set();
        let d1: Vec<Stencil> = ns.node_stencils(DERIV_WIDTH, 1, false);
        let d2: Vec<Stencil> = ns.node_stencils(DERIV_WIDTH, 2, false);
        let w1 = d1.iter().map(|st| st.apply(&self.w, Parity::Odd)).collect();
        let w2 = d2.iter().map(|st| st.apply(&self.w, Parity::Odd)).collect();
        (w1, w2)
    }

    /// Interpolated `(w, w')` at an arbitrary radius.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        self.grid
            .node_set()
            .interpolate(&self.w, Parity::Odd, s, INTERP_WIDTH)
    }

    /// The same metric multiplied by `lambda^2`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let s = self.s().iter().map(|v| v * lambda).collect();
        let grid = RadialGrid::new(s, self.topology())?;
        let w = self.w.iter().map(|v| v * lambda).collect();
        Self::new(grid, w, self.fiber)
    }
}

/// Limit at the tip of `w/d` where `d` is the distance to the tip; `w/d` is
/// even in `d`, so it is extrapolated in `d^2`.
fn tip_limit(d: &[f64], w: &[f64], dist: impl Fn(f64) -> f64) -> f64 {
    let u: Vec<f64> = d.iter().map(|&x| dist(x) * dist(x)).collect();
    let v: Vec<f64> = d.iter().zip(w).map(|(&x, &wv)| wv / dist(x)).collect();
    extrapolate_to_zero(&u, &v)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureField {
    pub s: Vec<f64>,
    pub k_rad: Vec<f64>,
    pub k_sph: Vec<f64>,
    pub ric_rad: Vec<f64>,
    pub ric_sph: Vec<f64>,
    pub scalar_r: Vec<f64>,
    pub riem_sup: Vec<f64>,
}

impl CurvatureField {
    /// Assemble the derived fields from the two sectional curvatures.
    pub fn from_sectional(s: Vec<f64>, k_rad: Vec<f64>, k_sph: Vec<f64>) -> Self {
        let ric_rad: Vec<f64> = k_rad.iter().map(|k| 2.0 * k).collect();
        let ric_sph: Vec<f64> = k_rad.iter().zip(&k_sph).map(|(a, b)| a + b).collect();
        let scalar_r = ric_rad
            .iter()
            .zip(&ric_sph)
            .map(|(a, b)| a + 2.0 * b)
            .collect();
        let mut riem_sup = Vec::with_capacity(s.len());
        let mut run = 0.0f64;
        for (a, b) in k_rad.iter().zip(&k_sph) {
            run = run.max(a.abs()).max(b.abs());
            riem_sup.push(run);
        }
        CurvatureField {
            s,
            k_rad,
            k_sph,
            ric_rad,
            ric_sph,
            scalar_r,
            riem_sup,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn ric_min(&self, j: usize) -> f64 {
        self.ric_rad[j].min(self.ric_sph[j])
    }

    pub fn ric_min_all(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.ric_min(j)).collect()
    }

    pub fn riem_abs(&self, j: usize) -> f64 {
        self.k_rad[j].abs().max(self.k_sph[j].abs())
    }

    /// `sup |Riem|` over all nodes with `s <= r`.
    pub fn riem_sup_within(&self, r: f64) -> f64 {
        let mut best = 0.0f64;
        for j in 0..self.len() {
            if self.s[j] > r {
                break;
            }
            best = self.riem_sup[j];
        }
        best
    }
}

pub fn curvature(m: &WarpedMetric) -> Result<CurvatureField> {
    let s = m.s();
    let w = m.w();
    let n = s.len();
    if n < DERIV_WIDTH {
        return Err(Error::GridTooCoarse(format!("{n} nodes")));
    }
    m.check_regularity()?;
    let closed = m.topology() == Topology::Closed;
    let l = m.s_max();
    let (_, w2) = m.derivatives();

    // Quotients w/s (and w/(L-s) near the far tip) are smooth and even about
    // their tip, so 1 - w'^2 can be formed without dividing by a vanishing w.
    let split = if closed { n / 2 } else { n };
    let mut q = vec![0.0; n];
    for j in 1..n {
        if j < split {
            q[j] = w[j] / s[j];
        } else if j < n - 1 {
            q[j] = w[j] / (l - s[j]);
        }
    }
    let left_half = NodeSet::new(
        s[..split].to_vec(),
        End::Tip,
        End::Open,
    );
    let right_half = closed.then(|| NodeSet::new(s[split..].to_vec(), End::Open, End::Tip));
    let mut k_rad = vec![0.0; n];
    let mut k_sph = vec![0.0; n];
    let interior_end = if closed { n - 1 } else { n };
    for j in 1..interior_end {
        k_rad[j] = -w2[j] / w[j];
        let (dist, wp) = if j < split {
            let qs = quotient_derivative(&left_half, 0, &q, s[j]);
            (s[j], q[j] + s[j] * qs)
        } else {
            let qs = quotient_derivative(right_half.as_ref().unwrap(), split, &q, s[j]);
            (l - s[j], -q[j] + (l - s[j]) * qs)
        };
        k_sph[j] = (1.0 - wp) * (1.0 + wp) / (dist * dist * q[j] * q[j]);
    }
    let tip = |vals: &[f64], idx: &[usize], dist: &dyn Fn(usize) -> f64| -> f64 {
        let u: Vec<f64> = idx.iter().map(|&j| dist(j).powi(2)).collect();
        let v: Vec<f64> = idx.iter().map(|&j| vals[j]).collect();
        extrapolate_to_zero(&u, &v)
    };
    let near: Vec<usize> = (1..5).collect();
    k_rad[0] = tip(&k_rad, &near, &|j| s[j]);
    k_sph[0] = k_rad[0];
    if closed {
        let far: Vec<usize> = (2..6).map(|k| n - k).collect();
        k_rad[n - 1] = tip(&k_rad, &far, &|j| l - s[j]);
        k_sph[n - 1] = k_rad[n - 1];
    }
    Ok(CurvatureField::from_sectional(s.to_vec(), k_rad, k_sph))
}

/// Derivative of a quotient field on its half of the grid; the stencils
/// never touch the tip node itself.
fn quotient_derivative(half: &NodeSet, offset: usize, q: &[f64], z: f64) -> f64 {
    let st = half.stencil(z, DERIV_WIDTH - 1, 1, true);
    st.nodes
        .iter()
        .zip(&st.weights)
        .map(|(&k, &wt)| wt * q[k + offset])
        .sum()
}

fn fiber_area(fiber: Fiber) -> Result<f64> {
    match fiber {
        Fiber::Sphere2 => Ok(4.0 * std::f64::consts::PI),
        Fiber::Rp3Link => Err(Error::InvalidArgument(
            "volumes are defined for the two-sphere fiber only".into(),
        )),
    }
}

/// `∫ w^2` over `[a, b]` inside one grid interval, on the local interpolant.
fn w2_integral(m: &WarpedMetric, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5.iter()
        .map(|&(x, wt)| {
            let (v, _) = m.eval(mid + half * x);
            wt * v * v
        })
        .sum::<f64>()
        * half
}

/// Volume of the metric ball of radius `r` about the tip.
pub fn ball_volume(m: &WarpedMetric, r: f64) -> Result<f64> {
    let s_max = m.s_max();
    if !(r > 0.0) || r > s_max * (1.0 + 1e-12) {
        return Err(Error::OutOfDomain { r, s_max });
    }
    let area = fiber_area(m.fiber())?;
    let s = m.s();
    let mut acc = 0.0;
    for j in 0..s.len() - 1 {
        if s[j] >= r {
            break;
        }
        acc += w2_integral(m, s[j], s[j + 1].min(r));
    }
    Ok(area * acc)
}

/// Ball volumes about the tip at every node radius.
pub fn ball_volumes(m: &WarpedMetric) -> Result<Vec<f64>> {
    let area = fiber_area(m.fiber())?;
    let s = m.s();
    let mut out = Vec::with_capacity(s.len());
    out.push(0.0);
    let mut acc = 0.0;
    for j in 0..s.len() - 1 {
        acc += w2_integral(m, s[j], s[j + 1]);
        out.push(area * acc);
    }
    Ok(out)
}

/// Volume of the ball of radius `r` in the simply connected model space of
/// constant sectional curvature `kappa`.
pub fn model_volume(kappa: f64, r: f64) -> f64 {
    use std::f64::consts::PI;
    if kappa.abs() < 1e-14 {
        4.0 * PI * r.powi(3) / 3.0
    } else if kappa > 0.0 {
        let q = kappa.sqrt();
        let rr = r.min(PI / q);
        (2.0 * PI / kappa) * (rr - (2.0 * q * rr).sin() / (2.0 * q))
    } else {
        let q = (-kappa).sqrt();
        (2.0 * PI / -kappa) * ((2.0 * q * r).sinh() / (2.0 * q) - r)
    }
}

/// `exp` applied `depth` times; saturates at infinity.
pub fn iterated_exp(depth: usize, x: f64) -> f64 {
    let mut v = x;
    for _ in 0..depth {
        v = v.exp();
        if v.is_infinite() {
            return f64::INFINITY;
        }
    }
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthReport {
    pub depth: usize,
    pub k: f64,
    /// Whether `sup_{B_r} |Riem| <= exp^depth(r)` at every grid radius.
    pub curvature_ok: bool,
    /// Radius from which `sup_{B_r} |Riem| > f(r)` persists to the domain edge.
    pub curvature_witness: Option<f64>,
    /// Smallest grid radius `R` with `w'/w <= k` on `[R, s_max]`, if any.
    pub hessian_radius: Option<f64>,
    pub holds: bool,
}

pub fn controlled_growth_check(m: &WarpedMetric, depth: usize, k: f64) -> Result<GrowthReport> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if m.topology() != Topology::Open {
        return Err(Error::InvalidArgument(
            "growth conditions are checked on open topologies only".into(),
        ));
    }
    let cf = curvature(m)?;
    let s = m.s();
    // The bound is asymptotic: only a violation that persists to the edge of
    // the sampled domain counts, and the witness is where it starts.
    let mut witness = None;
    for j in (0..s.len()).rev() {
        if cf.riem_sup[j] > iterated_exp(depth, s[j]) {
            witness = Some(s[j]);
        } else {
            break;
        }
    }
    let (w1, _) = m.derivatives();
    let w = m.w();
    let mut radius = None;
    for j in (1..s.len()).rev() {
        if w1[j] / w[j] <= k {
            radius = Some(s[j]);
        } else {
            break;
        }
    }
    Ok(GrowthReport {
        depth,
        k,
        curvature_ok: witness.is_none(),
        curvature_witness: witness,
        hessian_radius: radius,
        holds: witness.is_none() && radius.is_some(),
    })
}
