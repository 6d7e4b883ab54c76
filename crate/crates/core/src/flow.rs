//! Ricci flow of rotationally symmetric 3-metrics.
//!
//! The metric is `φ(x,t)^2 dx^2 + w(x,t)^2 g_{S^2}` on a fixed coordinate
//! grid `x`, initially the arclength grid of the starting metric (so `φ = 1`
//! at `t = 0`). With `∂_s = φ^{-1} ∂_x`,
//!
//! ```text
//! ∂_t φ = 2 φ w_ss / w,    ∂_t w = w_ss - (1 - w_s^2) / w.
//! ```
//!
//! The system is only weakly parabolic, and discretely the tip is unstable.
//! The solver integrates the DeTurck-modified flow instead, with the initial
//! metric `dx^2 + w̄(x)^2 g_{S^2}` as background:
//!
//! ```text
//! W = φ_x/φ^3 + (2/w) (w̄ w̄_x / w - w_x/φ^2)
//! ∂_t φ = 2 φ w_ss / w + (φ W)_x,    ∂_t w = w_ss - (1 - w_s^2)/w + W w_x
//! ```
//!
//! Material points of the Ricci flow drift through the coordinates as
//! `dx/dt = -W`; tracked points are integrated alongside the metric.
//! Ricci flow contracts high-curvature regions, which would bunch the nodes
//! up. Whenever `φ` strays from 1 by more than `REMESH_DRIFT`, the state is
//! resampled in arclength onto the initial node distribution (scaled to
//! the current length) and the background is reset to the current warp.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::surface_distance;
use crate::quad::GL5;
use crate::stencil::{extrapolate_to_zero, End, NodeSet, Parity, Stencil};
use crate::warped::{ball_volume, curvature, CurvatureField, Fiber, RadialGrid, Topology, WarpedMetric};

const WIDTH: usize = 5;
const INTERP_WIDTH: usize = 6;
/// Nodes held fixed at an open outer edge.
const HELD: usize = 2;
/// Diagnostics stay this many heat-kernel widths `sqrt(4t)` away from an
/// open outer edge.
const INFLUENCE_WIDTHS: f64 = 3.0;
const REMESH_DRIFT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// Heun's method.
    Rk2,
    /// Crank-Nicolson on a three-point `φ^{-2} w_xx`, Heun on the remainder.
    SemiImplicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub w: Vec<f64>,
    /// Warp of the DeTurck background `dx^2 + w̄^2 g_{S^2}`.
    pub background: Vec<f64>,
    pub topology: Topology,
    /// Current coordinates of tracked material points.
    pub tracked: Vec<f64>,
}

/// A pair of material points `(x1, ψ)` and `(x2, 0)`, labelled by their
/// initial arclength coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorPair {
    pub x1: f64,
    pub psi: f64,
    pub x2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub t_end: f64,
    pub safety: f64,
    pub stepper: Stepper,
    /// Times at which snapshots are kept; empty means five evenly spaced
    /// times from 0 to `t_end`.
    pub snapshot_times: Vec<f64>,
    pub monitor_pairs: Vec<MonitorPair>,
    /// Material points (initial arclength) whose positions are reported.
    pub tracked_points: Vec<f64>,
    /// Steps are rejected once `sup|Riem| > blowup_factor / h0^2`.
    pub blowup_factor: f64,
}

impl FlowConfig {
    pub fn new(t_end: f64) -> Self {
        FlowConfig {
            t_end,
            safety: 0.4,
            stepper: Stepper::Rk2,
            snapshot_times: Vec::new(),
            monitor_pairs: Vec::new(),
            tracked_points: Vec::new(),
            blowup_factor: 1e6,
        }
    }

    fn validate(&self) -> Result<Vec<f64>> {
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidArgument(format!("t_end = {}", self.t_end)));
        }
        if !(self.safety > 0.0 && self.safety <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "safety factor {} not in (0, 0.5]",
                self.safety
            )));
        }
        let times = if self.snapshot_times.is_empty() {
            (0..5).map(|k| self.t_end * k as f64 / 4.0).collect()
        } else {
            self.snapshot_times.clone()
        };
        for pair in times.windows(2) {
            if !(pair[1] > pair[0]) {
                return Err(Error::InvalidArgument(
                    "snapshot times must be strictly increasing".into(),
                ));
            }
        }
        if times[0] < 0.0 || *times.last().unwrap() > self.t_end * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "snapshot times must lie in [0, {}]",
                self.t_end
            )));
        }
        Ok(times)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub riem_sup: f64,
    pub ric_min: f64,
    /// Volume of the unit ball about the tip, when it fits in the trusted zone.
    pub vol_b1: Option<f64>,
    pub distances: Vec<Option<f64>>,
    /// Arclength position of each tracked point.
    pub positions: Vec<f64>,
    /// Arclength radius beyond which the outer boundary may have been felt.
    pub trusted_radius: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub state: FlowState,
    pub metric: WarpedMetric,
    pub curvature: CurvatureField,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub config: FlowConfig,
    pub snapshots: Vec<Snapshot>,
    /// `(t, sup|Riem|)` over the trusted zone after every step.
    pub history: Vec<(f64, f64)>,
    pub steps: usize,
}

impl FlowTrace {
    /// `sup t · sup|Riem|(t)` over the recorded steps with `t` in `[t0, t1]`.
    pub fn scaled_curvature_sup(&self, t0: f64, t1: f64) -> f64 {
        self.history
            .iter()
            .filter(|(t, _)| *t >= t0 && *t <= t1)
            .map(|(t, k)| t * k)
            .fold(0.0, f64::max)
    }

    /// A trace from externally produced states, such as an exact solution
    /// sampled in time. `x` must be material coordinates shared by all states.
    pub fn from_states(config: FlowConfig, states: Vec<FlowState>) -> Result<Self> {
        if states.windows(2).any(|p| !(p[1].t > p[0].t)) {
            return Err(Error::InvalidArgument("state times must be strictly increasing".into()));
        }
        let labels = tracked_labels(&config);
        let snapshots = states
            .into_iter()
            .map(|mut st| {
                if st.tracked.is_empty() {
                    st.tracked = labels.clone();
                }
                snapshot(&st, &config)
            })
            .collect::<Result<Vec<_>>>()?;
        let history = snapshots.iter().map(|s| (s.state.t, s.diagnostics.riem_sup)).collect();
        Ok(FlowTrace {
            config,
            snapshots,
            history,
            steps: 0,
        })
    }
}

struct Operators {
    ns: NodeSet,
    /// `w̄ w̄_x` of the background.
    bg: Vec<f64>,
    d1: Vec<Stencil>,
    d2: Vec<Stencil>,
    /// Three-point second-derivative weights `(left, centre, right)`.
    lap3: Vec<(f64, f64, f64)>,
    lo: usize,
    hi: usize,
}

impl Operators {
    fn new(st: &FlowState) -> Self {
        let (x, topology) = (&st.x, st.topology);
        let n = x.len();
        let right = match topology {
            Topology::Closed => End::Tip,
            Topology::Open => End::Open,
        };
        let ns = NodeSet::new(x.to_vec(), End::Tip, right);
        let d1 = ns.node_stencils(WIDTH, 1, false);
        let d2 = ns.node_stencils(WIDTH, 2, false);
        let hi = match topology {
            Topology::Closed => n - 1,
            Topology::Open => n - HELD,
        };
        let bg = (0..n)
            .map(|j| st.background[j] * d1[j].apply(&st.background, Parity::Odd))
            .collect();
        let mut lap3 = vec![(0.0, 0.0, 0.0); n];
        for j in 1..hi {
            let hl = x[j] - x[j - 1];
            let hr = x[j + 1] - x[j];
            let a = 2.0 / (hl * (hl + hr));
            let c = 2.0 / (hr * (hl + hr));
            lap3[j] = (a, -(a + c), c);
        }
        Operators {
            ns,
            bg,
            d1,
            d2,
            lap3,
            lo: 1,
            hi,
        }
    }
}

struct Rates {
    phi: Vec<f64>,
    w: Vec<f64>,
    gauge: Vec<f64>,
    k_rad: Vec<f64>,
    k_sph: Vec<f64>,
}

impl FlowState {
    /// Start from a metric in arclength gauge: `x = s`, `φ = 1`.
    pub fn from_metric(m: &WarpedMetric) -> Self {
        FlowState {
            t: 0.0,
            x: m.s().to_vec(),
            phi: vec![1.0; m.s().len()],
            w: m.w().to_vec(),
            background: m.w().to_vec(),
            topology: m.topology(),
            tracked: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Smallest coordinate spacing, which is the initial arclength spacing.
    pub fn initial_spacing(&self) -> f64 {
        self.x.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min)
    }

    /// Smallest current arclength spacing.
    pub fn min_arclength_spacing(&self) -> f64 {
        (0..self.len() - 1)
            .map(|j| 0.5 * (self.phi[j] + self.phi[j + 1]) * (self.x[j + 1] - self.x[j]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest step allowed by the parabolic bound `safety (Δs)^2 / 4`.
    pub fn max_step(&self, safety: f64) -> f64 {
        safety * self.min_arclength_spacing().powi(2) / 4.0
    }

    /// `s(x) = ∫_0^x φ`, by Gauss-Legendre on the local interpolant of `φ`.
    pub fn arclength(&self) -> Vec<f64> {
        let ns = self.node_set();
        let mut s = vec![0.0; self.len()];
        for j in 0..self.len() - 1 {
            let (a, b) = (self.x[j], self.x[j + 1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let seg: f64 = GL5
                .iter()
                .map(|&(z, wt)| wt * ns.interpolate(&self.phi, Parity::Even, mid + half * z, INTERP_WIDTH).0)
                .sum();
            s[j + 1] = s[j] + seg * half;
        }
        s
    }

    /// Arclength of the coordinate `x`.
    pub fn arclength_at(&self, x: f64) -> f64 {
        let ns = self.node_set();
        let s = self.arclength();
        arclength_from(self, &ns, &s, x)
    }

    /// Resample in arclength onto nodes at `fractions` (increasing, from 0
    /// to 1) of the current length. The result has `φ = 1` and its own warp
    /// as background.
    pub fn remeshed(&self, fractions: &[f64]) -> Result<FlowState> {
        let n = fractions.len();
        if n < 16 || fractions[0] != 0.0 || fractions[n - 1] != 1.0 {
            return Err(Error::InvalidGrid("remesh fractions must span [0, 1]".into()));
        }
        let ns = self.node_set();
        let s = self.arclength();
        let length = s[s.len() - 1];
        let right = match self.topology {
            Topology::Closed => End::Tip,
            Topology::Open => End::Open,
        };
        let by_s = NodeSet::new(s.clone(), End::Tip, right);
        let x: Vec<f64> = fractions.iter().map(|f| f * length).collect();
        let mut w: Vec<f64> = x
            .iter()
            .map(|&y| by_s.interpolate(&self.w, Parity::Odd, y, INTERP_WIDTH).0)
            .collect();
        w[0] = 0.0;
        if self.topology == Topology::Closed {
            w[n - 1] = 0.0;
        } else {
            // Held nodes keep their values.
            for k in 1..=HELD {
                w[n - k] = self.w[self.len() - k];
            }
        }
        let tracked = self.tracked.iter().map(|&p| arclength_from(self, &ns, &s, p)).collect();
        let mut out = FlowState {
            t: self.t,
            x,
            phi: vec![1.0; n],
            background: w.clone(),
            w,
            topology: self.topology,
            tracked,
        };
        // Tip lapse must match the interpolated slope, `w_x = ±φ`.
        let ops = Operators::new(&out);
        out.phi[0] = ops.d1[0].apply(&out.w, Parity::Odd);
        if self.topology == Topology::Closed {
            out.phi[n - 1] = -ops.d1[n - 1].apply(&out.w, Parity::Odd);
        }
        Ok(out)
    }

    fn lapse_drift(&self) -> f64 {
        self.phi.iter().map(|p| (p - 1.0).abs()).fold(0.0, f64::max)
    }

    fn node_set(&self) -> NodeSet {
        let right = match self.topology {
            Topology::Closed => End::Tip,
            Topology::Open => End::Open,
        };
        NodeSet::new(self.x.clone(), End::Tip, right)
    }

    /// The same geometry in arclength gauge.
    pub fn to_metric(&self) -> Result<WarpedMetric> {
        let s = self.arclength();
        let mut w = self.w.clone();
        w[0] = 0.0;
        if self.topology == Topology::Closed {
            *w.last_mut().unwrap() = 0.0;
        }
        WarpedMetric::new(RadialGrid::new(s, self.topology)?, w, Fiber::Sphere2)
    }

    /// Sectional curvatures `(k_rad, k_sph)` computed in the flow variables.
    pub fn curvature(&self) -> (Vec<f64>, Vec<f64>) {
        let ops = Operators::new(self);
        let r = rates(self, &ops);
        (r.k_rad, r.k_sph)
    }

    /// First node index outside the trusted zone.
    fn trusted_end(&self, s: &[f64]) -> usize {
        let n = self.len();
        match self.topology {
            Topology::Closed => n,
            Topology::Open => {
                let edge = s[n - 1];
                let h = s[n - 1] - s[n - 2];
                let cut = edge - INFLUENCE_WIDTHS * (4.0 * self.t).sqrt() - (WIDTH + HELD) as f64 * h;
                s.iter().position(|&v| v > cut).unwrap_or(n).max(1)
            }
        }
    }

    fn rough_arclength(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.len()];
        for j in 1..self.len() {
            s[j] = s[j - 1] + 0.5 * (self.phi[j] + self.phi[j - 1]) * (self.x[j] - self.x[j - 1]);
        }
        s
    }
}

fn arclength_from(st: &FlowState, ns: &NodeSet, s: &[f64], x: f64) -> f64 {
    let j = ns.locate(x).min(st.len() - 2);
    let a = st.x[j];
    let half = 0.5 * (x - a);
    let mid = 0.5 * (a + x);
    let seg: f64 = GL5
        .iter()
        .map(|&(z, wt)| wt * ns.interpolate(&st.phi, Parity::Even, mid + half * z, INTERP_WIDTH).0)
        .sum();
    s[j] + half * seg
}

fn tip_value(vals: &[f64], dist: impl Fn(usize) -> f64, idx: impl Iterator<Item = usize>) -> f64 {
    let idx: Vec<usize> = idx.collect();
    let u: Vec<f64> = idx.iter().map(|&j| dist(j).powi(2)).collect();
    let v: Vec<f64> = idx.iter().map(|&j| vals[j]).collect();
    extrapolate_to_zero(&u, &v)
}

fn rates(st: &FlowState, ops: &Operators) -> Rates {
    let n = st.len();
    let (phi, w, x) = (&st.phi, &st.w, &st.x);
    let mut r = Rates {
        phi: vec![0.0; n],
        w: vec![0.0; n],
        gauge: vec![0.0; n],
        k_rad: vec![0.0; n],
        k_sph: vec![0.0; n],
    };
    let closed = st.topology == Topology::Closed;
    let last = if closed { n - 1 } else { n };
    let mut ric = vec![0.0; n];
    let mut wx = vec![0.0; n];
    for j in 1..last {
        wx[j] = ops.d1[j].apply(w, Parity::Odd);
        let wxx = ops.d2[j].apply(w, Parity::Odd);
        let px = ops.d1[j].apply(phi, Parity::Even);
        let p2 = phi[j] * phi[j];
        let ws = wx[j] / phi[j];
        let wss = (wxx - wx[j] * px / phi[j]) / p2;
        let kr = -wss / w[j];
        let ks = (1.0 - ws) * (1.0 + ws) / (w[j] * w[j]);
        r.k_rad[j] = kr;
        r.k_sph[j] = ks;
        ric[j] = wss - ks * w[j];
        r.gauge[j] = px / (p2 * phi[j]) + 2.0 / w[j] * (ops.bg[j] / w[j] - wx[j] / p2);
    }
    let pw: Vec<f64> = (0..n).map(|j| phi[j] * r.gauge[j]).collect();
    for j in 1..ops.hi {
        r.w[j] = ric[j] + r.gauge[j] * wx[j];
        r.phi[j] = -2.0 * phi[j] * r.k_rad[j] + ops.d1[j].apply(&pw, Parity::Odd);
    }
    // Tip lapses follow w_x so that w_s = 1 is kept exactly.
    r.k_rad[0] = tip_value(&r.k_rad, |j| x[j], 1..5);
    r.k_sph[0] = r.k_rad[0];
    r.phi[0] = ops.d1[0].apply(&r.w, Parity::Odd);
    if closed {
        let l = x[n - 1];
        r.k_rad[n - 1] = tip_value(&r.k_rad, |j| l - x[j], (2..6).map(|k| n - k));
        r.k_sph[n - 1] = r.k_rad[n - 1];
        r.phi[n - 1] = -ops.d1[n - 1].apply(&r.w, Parity::Odd);
    }
    r
}

fn axpy(base: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    base.iter().zip(d).map(|(b, v)| b + a * v).collect()
}

fn check_stage(st: &FlowState, ops: &Operators, threshold: f64, r: Option<&Rates>) -> Result<()> {
    for j in ops.lo..ops.hi {
        if !(st.w[j] > 0.0) || !st.phi[j].is_finite() || !(st.phi[j] > 0.0) {
            return Err(Error::StepRejected {
                t: st.t,
                reason: format!("w = {:e}, phi = {:e} at node {j}", st.w[j], st.phi[j]),
                blowup_estimate: None,
            });
        }
    }
    if let Some(r) = r {
        let k = riem_sup(&r.k_rad, &r.k_sph, r.k_rad.len());
        if !(k <= threshold) {
            return Err(Error::StepRejected {
                t: st.t,
                reason: format!("sup|Riem| = {k:e} exceeds {threshold:e}"),
                blowup_estimate: None,
            });
        }
    }
    Ok(())
}

fn riem_sup(k_rad: &[f64], k_sph: &[f64], end: usize) -> f64 {
    k_rad[..end]
        .iter()
        .zip(&k_sph[..end])
        .map(|(a, b)| a.abs().max(b.abs()))
        .fold(0.0, |acc: f64, v| if v.is_nan() { f64::NAN } else { acc.max(v) })
}

fn blowup_threshold(st: &FlowState, factor: f64) -> f64 {
    factor / st.initial_spacing().powi(2)
}

/// Advance by `dt`, which must respect the parabolic bound at `safety = 0.5`.
pub fn step(state: &FlowState, dt: f64, stepper: Stepper) -> Result<FlowState> {
    let ops = Operators::new(state);
    step_with(state, dt, stepper, &ops, blowup_threshold(state, 1e6))
}

fn step_with(
    state: &FlowState,
    dt: f64,
    stepper: Stepper,
    ops: &Operators,
    threshold: f64,
) -> Result<FlowState> {
    let bound = state.max_step(0.5);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "time step {dt:e} outside the parabolic bound {bound:e}"
        )));
    }
    let r0 = rates(state, ops);
    check_stage(state, ops, threshold, Some(&r0))?;
    let mut mid = FlowState {
        t: state.t + dt,
        x: state.x.clone(),
        phi: axpy(&state.phi, dt, &r0.phi),
        w: axpy(&state.w, dt, &r0.w),
        background: state.background.clone(),
        topology: state.topology,
        tracked: state
            .tracked
            .iter()
            .map(|&p| p - dt * gauge_at(ops, &r0, p))
            .collect(),
    };
    match stepper {
        Stepper::Rk2 => {
            check_stage(&mid, ops, threshold, None)?;
            let r1 = rates(&mid, ops);
            for j in 0..state.len() {
                mid.phi[j] = state.phi[j] + 0.5 * dt * (r0.phi[j] + r1.phi[j]);
                mid.w[j] = state.w[j] + 0.5 * dt * (r0.w[j] + r1.w[j]);
            }
            heun_tracked(&mut mid, state, ops, &r0, &r1, dt);
        }
        Stepper::SemiImplicit => {
            // Predictor: implicit Euler in the three-point diffusion.
            let a0 = diffusion(state, ops, &state.w);
            let rhs: Vec<f64> = (0..state.len())
                .map(|j| state.w[j] + dt * (r0.w[j] - a0[j]))
                .collect();
            mid.w = solve_diffusion(state, ops, dt, &rhs);
            check_stage(&mid, ops, threshold, None)?;
            let r1 = rates(&mid, ops);
            heun_tracked(&mut mid, state, ops, &r0, &r1, dt);
            let a1 = diffusion(state, ops, &mid.w);
            let rhs: Vec<f64> = (0..state.len())
                .map(|j| state.w[j] + 0.5 * dt * (r0.w[j] + r1.w[j] - a1[j]))
                .collect();
            mid.w = solve_diffusion(state, ops, 0.5 * dt, &rhs);
            for j in 0..state.len() {
                mid.phi[j] = state.phi[j] + 0.5 * dt * (r0.phi[j] + r1.phi[j]);
            }
            let n = state.len();
            let dw: Vec<f64> = (0..n).map(|j| mid.w[j] - state.w[j]).collect();
            mid.phi[0] = state.phi[0] + ops.d1[0].apply(&dw, Parity::Odd);
            if state.topology == Topology::Closed {
                mid.phi[n - 1] = state.phi[n - 1] - ops.d1[n - 1].apply(&dw, Parity::Odd);
            }
        }
    }
    check_stage(&mid, ops, threshold, None)?;
    Ok(mid)
}

fn gauge_at(ops: &Operators, r: &Rates, p: f64) -> f64 {
    ops.ns.interpolate(&r.gauge, Parity::Odd, p, INTERP_WIDTH).0
}

fn heun_tracked(mid: &mut FlowState, state: &FlowState, ops: &Operators, r0: &Rates, r1: &Rates, dt: f64) {
    for (k, &p) in state.tracked.iter().enumerate() {
        let predicted = mid.tracked[k];
        mid.tracked[k] = p - 0.5 * dt * (gauge_at(ops, r0, p) + gauge_at(ops, r1, predicted));
    }
}

/// `φ^{-2} w_xx` with three-point weights, frozen `φ`.
fn diffusion(st: &FlowState, ops: &Operators, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for j in ops.lo..ops.hi {
        let (a, b, c) = ops.lap3[j];
        out[j] = (a * w[j - 1] + b * w[j] + c * w[j + 1]) / (st.phi[j] * st.phi[j]);
    }
    out
}

/// Solve `(I - dt A) w = rhs` on the evolving nodes; the others keep `rhs`.
fn solve_diffusion(st: &FlowState, ops: &Operators, dt: f64, rhs: &[f64]) -> Vec<f64> {
    let mut w = rhs.to_vec();
    let (lo, hi) = (ops.lo, ops.hi);
    let m = hi - lo;
    let mut sub = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m];
    let mut d = vec![0.0; m];
    for k in 0..m {
        let j = lo + k;
        let (a, b, c) = ops.lap3[j];
        let f = dt / (st.phi[j] * st.phi[j]);
        sub[k] = -f * a;
        diag[k] = 1.0 - f * b;
        sup[k] = -f * c;
        d[k] = rhs[j];
    }
    d[0] -= sub[0] * rhs[lo - 1];
    d[m - 1] -= sup[m - 1] * rhs[hi];
    for k in 1..m {
        let f = sub[k] / diag[k - 1];
        diag[k] -= f * sup[k - 1];
        d[k] -= f * d[k - 1];
    }
    w[hi - 1] = d[m - 1] / diag[m - 1];
    for k in (0..m - 1).rev() {
        w[lo + k] = (d[k] - sup[k] * w[lo + k + 1]) / diag[k];
    }
    w
}

/// Tracked points first, then both ends of every monitored pair.
fn tracked_labels(cfg: &FlowConfig) -> Vec<f64> {
    let mut labels = cfg.tracked_points.clone();
    for p in &cfg.monitor_pairs {
        labels.push(p.x1);
        labels.push(p.x2);
    }
    labels
}

fn diagnostics(state: &FlowState, metric: &WarpedMetric, cf: &CurvatureField, cfg: &FlowConfig) -> Diagnostics {
    let s = metric.s();
    let end = state.trusted_end(s);
    let trusted_radius = if end >= s.len() { metric.s_max() } else { s[end - 1] };
    let riem_sup = riem_sup(&cf.k_rad, &cf.k_sph, end);
    let ric_min = (0..end).map(|j| cf.ric_min(j)).fold(f64::INFINITY, f64::min);
    let vol_b1 = (trusted_radius >= 1.0).then(|| ball_volume(metric, 1.0).ok()).flatten();
    let ns = state.node_set();
    let at: Vec<f64> = state
        .tracked
        .iter()
        .map(|&x| arclength_from(state, &ns, s, x))
        .collect();
    let k = cfg.tracked_points.len();
    let distances = cfg
        .monitor_pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (s1, s2) = (at[k + 2 * i], at[k + 2 * i + 1]);
            if s1.max(s2) > trusted_radius {
                return None;
            }
            surface_distance(metric, s1, p.psi, s2).ok()
        })
        .collect();
    Diagnostics {
        t: state.t,
        riem_sup,
        ric_min,
        vol_b1,
        distances,
        positions: at[..k].to_vec(),
        trusted_radius,
    }
}

fn snapshot(state: &FlowState, cfg: &FlowConfig) -> Result<Snapshot> {
    let metric = state.to_metric()?;
    let cf = curvature(&metric)?;
    let diagnostics = diagnostics(state, &metric, &cf, cfg);
    Ok(Snapshot {
        state: state.clone(),
        metric,
        curvature: cf,
        diagnostics,
    })
}

/// Blow-up time from the last samples, assuming `sup|Riem| ~ C / (T - t)`.
fn blowup_estimate(history: &[(f64, f64)]) -> Option<f64> {
    let &(t2, k2) = history.last()?;
    if !(k2.is_finite() && k2 > 0.0) {
        return None;
    }
    let &(t1, k1) = history.iter().rev().find(|(_, k)| *k <= 0.5 * k2)?;
    let (u1, u2) = (1.0 / k1, 1.0 / k2);
    (u1 > u2).then(|| t2 + (t2 - t1) * u2 / (u1 - u2))
}

pub fn run(initial: &WarpedMetric, cfg: &FlowConfig) -> Result<FlowTrace> {
    let times = cfg.validate()?;
    if initial.fiber() != Fiber::Sphere2 {
        return Err(Error::InvalidArgument("flow runs on two-sphere fibers".into()));
    }
    let mut state = FlowState::from_metric(initial);
    state.tracked = tracked_labels(cfg);
    let fractions: Vec<f64> = state.x.iter().map(|x| x / state.x[state.len() - 1]).collect();
    let mut ops = Operators::new(&state);
    let threshold = blowup_threshold(&state, cfg.blowup_factor);
    let mut snapshots = Vec::with_capacity(times.len());
    let mut history = Vec::new();
    let mut steps = 0;
    let mut next = 0;
    if times[0] == 0.0 {
        snapshots.push(snapshot(&state, cfg)?);
        next = 1;
    }
    let with_estimate = |e: Error, history: &[(f64, f64)]| match e {
        Error::StepRejected { t, reason, .. } => Error::StepRejected {
            t,
            reason,
            blowup_estimate: blowup_estimate(history),
        },
        other => other,
    };
    while next < times.len() {
        let target = times[next];
        let mut dt = state.max_step(cfg.safety);
        let last = state.t + dt >= target * (1.0 - 1e-12);
        if last {
            dt = target - state.t;
        }
        if dt > 0.0 {
            state = step_with(&state, dt, cfg.stepper, &ops, threshold)
                .map_err(|e| with_estimate(e, &history))?;
            steps += 1;
        }
        if last {
            state.t = target;
        }
        if state.lapse_drift() > REMESH_DRIFT {
            state = state.remeshed(&fractions)?;
            ops = Operators::new(&state);
        }
        let (k_rad, k_sph) = {
            let r = rates(&state, &ops);
            (r.k_rad, r.k_sph)
        };
        let end = state.trusted_end(&state.rough_arclength());
        history.push((state.t, riem_sup(&k_rad, &k_sph, end)));
        if last {
            let snap = snapshot(&state, cfg).map_err(|e| match e {
                Error::RegularityViolation(reason) | Error::InvalidGrid(reason) => {
                    with_estimate(
                        Error::StepRejected {
                            t: state.t,
                            reason,
                            blowup_estimate: None,
                        },
                        &history,
                    )
                }
                other => other,
            })?;
            snapshots.push(snap);
            next += 1;
        }
    }
    Ok(FlowTrace {
        config: cfg.clone(),
        snapshots,
        history,
        steps,
    })
}

/// Round sphere of radius `r(t) = sqrt(r0^2 - 4t)` in arclength gauge.
pub fn exact_shrinking_sphere(r0: f64, t: f64, nodes: usize) -> Result<WarpedMetric> {
    let extinction = r0 * r0 / 4.0;
    if t >= extinction {
        return Err(Error::Extinct { t, extinction });
    }
    crate::profiles::Profile::Sphere {
        r0: (r0 * r0 - 4.0 * t).sqrt(),
    }
    .build(nodes, 0.0)
}

/// The shrinking sphere in the material coordinates of its initial
/// arclength, `w = r(t) sin(x / r0)` with lapse `r(t) / r0`.
pub fn exact_sphere_state(r0: f64, t: f64, nodes: usize) -> Result<FlowState> {
    let m = exact_shrinking_sphere(r0, t, nodes)?;
    let scale = m.s_max() / (std::f64::consts::PI * r0);
    let x: Vec<f64> = m.s().iter().map(|s| s / scale).collect();
    Ok(FlowState {
        t,
        phi: vec![scale; x.len()],
        background: m.w().to_vec(),
        w: m.w().to_vec(),
        x,
        topology: Topology::Closed,
        tracked: Vec::new(),
    })
}

/// Largest deviation from the round sphere of radius `r`, relative to `r`:
/// `max_s |w(s) - r sin(s/r)| / r`, together with the total length mismatch.
pub fn round_error(m: &WarpedMetric, r: f64) -> f64 {
    let pointwise = m
        .s()
        .iter()
        .zip(m.w())
        .map(|(&s, &w)| (w - r * (s / r).sin()).abs())
        .fold(0.0, f64::max);
    let length = (m.s_max() - std::f64::consts::PI * r).abs();
    pointwise.max(length) / r
}
