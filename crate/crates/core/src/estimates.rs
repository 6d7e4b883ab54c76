//! A-priori estimates fitted on flow traces.
//!
//! The theorems assert that constants exist; here each one is fitted as the
//! smallest value making its inequality hold over the trace, and inequalities
//! with constants derived from other fitted ones are checked for violations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowTrace, MonitorPair, Snapshot};
use crate::geodesic::ball_volume_at;
use crate::warped::{ball_volumes, curvature, model_volume, Topology, WarpedMetric};

/// Relative accuracy assumed for distances taken from traces.
pub const DISTANCE_TOL: f64 = 1e-3;
pub const BG_TOL: f64 = 1e-8;
/// Curvature hypotheses are checked up to this fraction of `sup|Riem|`,
/// which absorbs finite-difference error at profile junctions.
pub const HYPOTHESIS_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    /// Arclength position, or the pair index for distance inequalities.
    pub at: f64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub fitted: f64,
    pub binding_t: f64,
    /// `(t, margin)` per snapshot; negative margins are violations.
    pub margins: Vec<(f64, f64)>,
    pub violations: Vec<Violation>,
    pub pass: bool,
}

impl InequalityReport {
    fn new(name: &str, fitted: f64, binding_t: f64, margins: Vec<(f64, f64)>, violations: Vec<Violation>) -> Self {
        InequalityReport {
            name: name.into(),
            pass: violations.is_empty() && fitted.is_finite(),
            fitted,
            binding_t,
            margins,
            violations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowMonitorReport {
    pub window: (f64, f64),
    pub nodes: usize,
    /// The smallest `K²` for which (a), (c) and (d) all hold.
    pub k2: f64,
    pub binding: String,
    pub inequalities: Vec<InequalityReport>,
    pub pass: bool,
}

fn in_window(trace: &FlowTrace, window: (f64, f64)) -> Vec<&Snapshot> {
    trace
        .snapshots
        .iter()
        .filter(|s| s.state.t >= window.0 && s.state.t <= window.1)
        .collect()
}

/// `(d(s), d(t))` over snapshot pairs `s < t` for every monitored pair.
fn distance_pairs<'a>(snaps: &[&'a Snapshot]) -> Vec<(usize, &'a Snapshot, &'a Snapshot, f64, f64)> {
    let mut out = Vec::new();
    for (a, sa) in snaps.iter().enumerate() {
        for sb in &snaps[a + 1..] {
            for (p, (da, db)) in sa.diagnostics.distances.iter().zip(&sb.diagnostics.distances).enumerate() {
                if let (Some(da), Some(db)) = (da, db) {
                    out.push((p, *sa, *sb, *da, *db));
                }
            }
        }
    }
    out
}

/// Conditions (a)–(d): `Ric ≥ −K²`, `vol B₁ ≥ v₀/2`, `|Riem| ≤ K²/t` and
/// `d(t) ≥ d(s) − K²(√t − √s)`, over snapshots with `t` in `window`.
pub fn monitor_flow(trace: &FlowTrace, window: (f64, f64)) -> FlowMonitorReport {
    let snaps = in_window(trace, window);
    let nodes = trace.snapshots.first().map_or(0, |s| s.metric.s().len());

    let (mut ka, mut ta) = (0.0f64, f64::NAN);
    for s in &snaps {
        if -s.diagnostics.ric_min > ka {
            ka = -s.diagnostics.ric_min;
            ta = s.state.t;
        }
    }
    let (mut kc, mut tc) = (0.0f64, f64::NAN);
    for &(t, k) in trace.history.iter().filter(|(t, _)| *t >= window.0 && *t <= window.1) {
        if t * k > kc || k.is_nan() {
            kc = if k.is_nan() { f64::NAN } else { t * k };
            tc = t;
        }
    }
    let (mut kd, mut td) = (0.0f64, f64::NAN);
    for (_, sa, sb, da, db) in distance_pairs(&snaps) {
        let q = (da - db) / (sb.state.t.sqrt() - sa.state.t.sqrt());
        if q > kd {
            kd = q;
            td = sb.state.t;
        }
    }
    let k2 = ka.max(kc).max(kd);
    let binding = [("ricci", ka), ("curvature", kc), ("distance", kd)]
        .iter()
        .fold(("none", 0.0), |best, &(n, v)| if v > best.1 { (n, v) } else { best })
        .0
        .to_string();

    let a_margins = snaps.iter().map(|s| (s.state.t, s.diagnostics.ric_min + k2)).collect();
    let c_margins = snaps
        .iter()
        .filter(|s| s.state.t > 0.0)
        .map(|s| (s.state.t, k2 / s.state.t - s.diagnostics.riem_sup))
        .collect();
    let mut d_margins: Vec<(f64, f64)> = Vec::new();
    for (_, sa, sb, da, db) in distance_pairs(&snaps) {
        let m = db - da + k2 * (sb.state.t.sqrt() - sa.state.t.sqrt());
        match d_margins.iter_mut().find(|(t, _)| *t == sb.state.t) {
            Some(e) => e.1 = e.1.min(m),
            None => d_margins.push((sb.state.t, m)),
        }
    }

    let v0 = trace.snapshots.first().and_then(|s| s.diagnostics.vol_b1);
    let mut b_margins = Vec::new();
    let mut b_viol = Vec::new();
    let mut vmin = f64::INFINITY;
    if let Some(v0) = v0 {
        for s in &snaps {
            if let Some(v) = s.diagnostics.vol_b1 {
                let ratio = v / v0;
                vmin = vmin.min(ratio);
                b_margins.push((s.state.t, ratio - 0.5));
                if ratio < 0.5 {
                    b_viol.push(Violation {
                        t: s.state.t,
                        at: 0.0,
                        magnitude: 0.5 - ratio,
                    });
                }
            }
        }
    }
    let inequalities = vec![
        InequalityReport::new("(a) Ric >= -K^2", ka, ta, a_margins, Vec::new()),
        InequalityReport::new("(b) vol B1 >= v0/2", vmin, f64::NAN, b_margins, b_viol),
        InequalityReport::new("(c) |Riem| <= K^2/t", kc, tc, c_margins, Vec::new()),
        InequalityReport::new("(d) d(t) >= d(s) - K^2 (sqrt t - sqrt s)", kd, td, d_margins, Vec::new()),
    ];
    FlowMonitorReport {
        window,
        nodes,
        pass: k2.is_finite() && inequalities.iter().all(|q| q.violations.is_empty()),
        k2,
        binding,
        inequalities,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub window: (f64, f64),
    pub nodes: usize,
    /// `sup t · sup|Riem|` over the recorded steps in the window.
    pub c0: f64,
    pub argmax_t: f64,
    pub samples: usize,
}

pub fn smoothing_bound(trace: &FlowTrace, window: (f64, f64)) -> SmoothingReport {
    let mut best = (0.0f64, f64::NAN);
    let mut samples = 0;
    for &(t, k) in &trace.history {
        if t < window.0 || t > window.1 {
            continue;
        }
        samples += 1;
        if t * k > best.0 || k.is_nan() {
            best = (if k.is_nan() { f64::NAN } else { t * k }, t);
        }
    }
    SmoothingReport {
        window,
        nodes: trace.snapshots.first().map_or(0, |s| s.metric.s().len()),
        c0: best.0,
        argmax_t: best.1,
        samples,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchingMonitorReport {
    pub eps0: f64,
    pub k: f64,
    pub horizon: f64,
    pub min_margin: f64,
    pub min_margin_at: (f64, f64),
    pub violations: Vec<Violation>,
    pub pass: bool,
}

/// `Ric(x, t) ≥ −ε₀(1 + kt)(1 + t R(x, t))` on every trusted node of every
/// snapshot with `t ≤ 1/k`.
pub fn lemma52_monitor(trace: &FlowTrace, eps0: f64, k: f64) -> Result<PinchingMonitorReport> {
    let first = trace
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    if first.diagnostics.ric_min < -eps0 / 4.0 {
        return Err(Error::HypothesisViolated(format!(
            "initial min Ricci {} < -eps0/4 = {}",
            first.diagnostics.ric_min,
            -eps0 / 4.0
        )));
    }
    let horizon = 1.0 / k;
    let mut rep = PinchingMonitorReport {
        eps0,
        k,
        horizon,
        min_margin: f64::INFINITY,
        min_margin_at: (0.0, 0.0),
        violations: Vec::new(),
        pass: true,
    };
    for snap in trace.snapshots.iter().filter(|s| s.state.t <= horizon * (1.0 + 1e-12)) {
        let t = snap.state.t;
        let cf = &snap.curvature;
        for j in 0..cf.len() {
            if cf.s[j] > snap.diagnostics.trusted_radius {
                break;
            }
            let margin = cf.ric_min(j) + eps0 * (1.0 + k * t) * (1.0 + t * cf.scalar_r[j]);
            if margin < rep.min_margin {
                rep.min_margin = margin;
                rep.min_margin_at = (t, cf.s[j]);
            }
            if margin < 0.0 {
                rep.violations.push(Violation {
                    t,
                    at: cf.s[j],
                    magnitude: -margin,
                });
            }
        }
    }
    rep.pass = rep.violations.is_empty();
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub pairs: Vec<MonitorPair>,
    pub nodes: usize,
    /// Smallest constants with `d(t) ≤ e^{c₁(t−s)} d(s)` and
    /// `d(t) ≥ d(s) − c₂(√t − √s)` over all snapshot pairs.
    pub c1: f64,
    pub c2: f64,
    /// Constants implied by the trace: `c₁ = max(0, −min Ric)` and
    /// `c₂ = (20/3)(n−1)√c₀` with `c₀ = sup t|Riem|`.
    pub c1_implied: f64,
    pub c2_implied: f64,
    pub samples: usize,
    pub violations: Vec<Violation>,
    pub pass: bool,
}

pub fn distance_monitor(trace: &FlowTrace) -> DistanceReport {
    let snaps: Vec<&Snapshot> = trace.snapshots.iter().collect();
    let kappa = snaps.iter().map(|s| -s.diagnostics.ric_min).fold(0.0f64, f64::max);
    let c0 = smoothing_bound(trace, (0.0, f64::INFINITY)).c0;
    let c2_implied = 20.0 / 3.0 * 2.0 * c0.sqrt();
    let mut rep = DistanceReport {
        pairs: trace.config.monitor_pairs.clone(),
        nodes: snaps.first().map_or(0, |s| s.metric.s().len()),
        c1: 0.0,
        c2: 0.0,
        c1_implied: kappa,
        c2_implied,
        samples: 0,
        violations: Vec::new(),
        pass: true,
    };
    for (p, sa, sb, da, db) in distance_pairs(&snaps) {
        rep.samples += 1;
        let (s, t) = (sa.state.t, sb.state.t);
        if da > 0.0 && db > 0.0 {
            rep.c1 = rep.c1.max((db / da).ln() / (t - s));
        }
        rep.c2 = rep.c2.max((da - db) / (t.sqrt() - s.sqrt()));
        let tol = DISTANCE_TOL * da.max(db);
        let upper = (kappa * (t - s)).exp() * da + tol - db;
        let lower = db - da + c2_implied * (t.sqrt() - s.sqrt()) + tol;
        let worst = upper.min(lower);
        if worst < 0.0 {
            rep.violations.push(Violation {
                t,
                at: p as f64,
                magnitude: -worst,
            });
        }
    }
    rep.pass = rep.violations.is_empty() && rep.c1.is_finite() && rep.c2.is_finite();
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    /// Arclength positions of the centers at `t = 0`.
    pub centers: Vec<f64>,
    pub v0: f64,
    /// Whether every initial unit ball has volume at least `v0`.
    pub precondition_ok: bool,
    /// `(t, min_x vol B₁(x, t) / v₀)`, over centers whose ball is trusted.
    pub ratios: Vec<(f64, f64)>,
    /// Largest time up to which the ratio stays at least 2/3, interpolated
    /// linearly between snapshots; the trace end if it never drops.
    pub s_horizon: f64,
    pub pass: bool,
}

fn unit_volumes(snap: &Snapshot, centers: &[f64]) -> Result<Vec<Option<f64>>> {
    centers
        .iter()
        .map(|&c| {
            if c + 1.0 > snap.diagnostics.trusted_radius && snap.metric.topology() == Topology::Open {
                return Ok(None);
            }
            ball_volume_at(&snap.metric, c, 1.0).map(Some)
        })
        .collect()
}

/// Unit balls about the trace's tracked points (the tip if there are none).
pub fn volume_continuity(trace: &FlowTrace, v0: Option<f64>) -> Result<VolumeReport> {
    let first = trace
        .snapshots
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    let centers_of = |s: &Snapshot| -> Vec<f64> {
        if s.diagnostics.positions.is_empty() {
            vec![0.0]
        } else {
            s.diagnostics.positions.clone()
        }
    };
    let vols = trace
        .snapshots
        .par_iter()
        .map(|s| unit_volumes(s, &centers_of(s)))
        .collect::<Result<Vec<_>>>()?;
    let initial: Vec<f64> = vols[0].iter().flatten().copied().collect();
    let vmin0 = initial.iter().copied().fold(f64::INFINITY, f64::min);
    let v0 = v0.unwrap_or(vmin0);
    let mut ratios = Vec::new();
    for (s, v) in trace.snapshots.iter().zip(&vols) {
        let r = v.iter().flatten().map(|x| x / v0).fold(f64::INFINITY, f64::min);
        if r.is_finite() {
            ratios.push((s.state.t, r));
        }
    }
    let mut s_horizon = ratios.last().map_or(0.0, |r| r.0);
    for k in 0..ratios.len() {
        if ratios[k].1 < 2.0 / 3.0 {
            s_horizon = if k == 0 {
                0.0
            } else {
                let ((ta, ra), (tb, rb)) = (ratios[k - 1], ratios[k]);
                ta + (tb - ta) * (ra - 2.0 / 3.0) / (ra - rb)
            };
            break;
        }
    }
    Ok(VolumeReport {
        centers: centers_of(first),
        v0,
        precondition_ok: vmin0 >= v0 * (1.0 - 1e-12) && initial.len() == vols[0].len(),
        pass: s_horizon > 0.0,
        ratios,
        s_horizon,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BishopGromovReport {
    pub kappa: f64,
    pub radii: usize,
    /// Largest relative increase of `vol(B_r)/V_κ(r)` between neighbouring
    /// grid radii.
    pub max_upward: f64,
    pub max_upward_at: f64,
    /// Smallest grid radius from which the ratio decreases strictly.
    pub strictly_decreasing_from: Option<f64>,
    pub final_ratio: f64,
    pub pass: bool,
}

/// Monotonicity of `vol(B_r(tip)) / V_κ(r)` under `Ric ≥ 2κ`.
pub fn bishop_gromov_check(m: &WarpedMetric, kappa: f64) -> Result<BishopGromovReport> {
    let cf = curvature(m)?;
    let ric = cf.ric_min_all().into_iter().fold(f64::INFINITY, f64::min);
    let scale = cf.riem_sup.last().copied().unwrap_or(0.0).max(kappa.abs()).max(1.0);
    if ric < 2.0 * kappa - HYPOTHESIS_TOL * scale {
        return Err(Error::PreconditionFailed(format!("min Ricci {ric} < 2 kappa = {}", 2.0 * kappa)));
    }
    let vols = ball_volumes(m)?;
    let s = m.s();
    let top = if kappa > 0.0 { std::f64::consts::PI / kappa.sqrt() } else { f64::INFINITY };
    let ratio: Vec<(f64, f64)> = (1..s.len())
        .filter(|&j| s[j] <= top * (1.0 + 1e-12))
        .map(|j| (s[j], vols[j] / model_volume(kappa, s[j])))
        .collect();
    let mut rep = BishopGromovReport {
        kappa,
        radii: ratio.len(),
        max_upward: 0.0,
        max_upward_at: f64::NAN,
        strictly_decreasing_from: None,
        final_ratio: ratio.last().map_or(f64::NAN, |r| r.1),
        pass: true,
    };
    for p in ratio.windows(2) {
        let up = (p[1].1 - p[0].1) / p[0].1;
        if up > rep.max_upward {
            rep.max_upward = up;
            rep.max_upward_at = p[1].0;
        }
    }
    let mut from = None;
    for k in (0..ratio.len().saturating_sub(1)).rev() {
        if ratio[k + 1].1 < ratio[k].1 {
            from = Some(ratio[k].0);
        } else {
            break;
        }
    }
    rep.strictly_decreasing_from = from;
    rep.pass = rep.max_upward <= BG_TOL;
    Ok(rep)
}
