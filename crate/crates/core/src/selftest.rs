//! Closed-form examples run as a suite. The report depends only on the code,
//! so two runs serialize to the same bytes.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{jacobi_growth, r_bound, JacobiProblem};
use crate::error::Result;
use crate::estimates::{bishop_gromov_check, distance_monitor, monitor_flow, smoothing_bound, volume_continuity};
use crate::flow::{exact_shrinking_sphere, round_error, run, FlowConfig, MonitorPair};
use crate::geodesic::surface_distance;
use crate::gh::{
    gh_exact_small, gh_lower_bound, gh_upper_bound, sample_warped, ConeSpec, FiniteMetricSpace, Lattice, Link,
};
use crate::profiles::Profile;
use crate::reaction::{integrate_reaction, pinching_check, PinchingMode, PinchingParams, ReactionState};
use crate::taming::{conformal_ricci, tame, ConformalProfile, CutoffProfile, ExpComparison};
use crate::warped::{ball_volume, controlled_growth_check, curvature, WarpedMetric};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub version: String,
    pub cases: Vec<Case>,
    pub passed: usize,
    pub pass: bool,
}

type Check = fn() -> Result<(f64, f64, f64)>;

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

fn sphere(n: usize) -> Result<WarpedMetric> {
    Profile::Sphere { r0: 1.0 }.build(n, 0.0)
}

fn euclid(n: usize, s_max: f64) -> Result<WarpedMetric> {
    Profile::Euclidean.build(n, s_max)
}

fn unit_sphere_curvature() -> Result<(f64, f64, f64)> {
    let cf = curvature(&sphere(400)?)?;
    let err = max_abs(cf.k_rad.iter().chain(&cf.k_sph).map(|k| k - 1.0));
    Ok((err, 0.0, 1e-8))
}

fn flat_curvature() -> Result<(f64, f64, f64)> {
    let cf = curvature(&euclid(400, 4.0)?)?;
    Ok((max_abs(cf.k_rad.iter().chain(&cf.k_sph).copied()), 0.0, 1e-10))
}

fn flat_ball() -> Result<(f64, f64, f64)> {
    Ok((ball_volume(&euclid(400, 4.0)?, 1.0)?, 4.0 * PI / 3.0, 1e-8))
}

fn sphere_volume() -> Result<(f64, f64, f64)> {
    Ok((ball_volume(&sphere(400)?, PI)?, 2.0 * PI * PI, 1e-6))
}

fn radial_distance() -> Result<(f64, f64, f64)> {
    Ok((surface_distance(&Profile::Wild.build(400, 3.0)?, 0.7, 0.0, 2.2)?, 1.5, 1e-15))
}

fn planar_chord() -> Result<(f64, f64, f64)> {
    Ok((surface_distance(&euclid(401, 3.0)?, 1.0, PI / 2.0, 1.0)?, 2f64.sqrt(), 1e-3))
}

fn flat_growth() -> Result<(f64, f64, f64)> {
    let m = euclid(401, 6.0)?;
    let ok = [(1, 0.5), (2, 1.0)]
        .iter()
        .all(|&(d, k)| controlled_growth_check(&m, d, k).is_ok_and(|r| r.holds));
    Ok((ok as u8 as f64, 1.0, 0.0))
}

fn sphere_flow() -> Result<(f64, f64, f64)> {
    let trace = run(&sphere(400)?, &FlowConfig::new(0.2))?;
    let err = trace
        .snapshots
        .iter()
        .map(|s| round_error(&s.metric, (1.0 - 4.0 * s.state.t).sqrt()))
        .fold(0.0, f64::max);
    Ok((err, 0.0, 1e-3))
}

fn flat_flow() -> Result<(f64, f64, f64)> {
    let m = euclid(161, 4.0)?;
    let trace = run(&m, &FlowConfig::new(0.01))?;
    let last = trace.snapshots.last().unwrap();
    let end = last.state.w.len() / 2;
    let drift = max_abs((0..end).map(|j| last.metric.w()[j] - m.w()[j]));
    Ok((drift, 0.0, 1e-10 * trace.steps.max(1) as f64))
}

fn extinct_radius() -> Result<(f64, f64, f64)> {
    Ok((exact_shrinking_sphere(2.0, 0.25, 100)?.s_max() / PI, 3f64.sqrt(), 1e-12))
}

fn symmetric_ode() -> Result<(f64, f64, f64)> {
    let c = 0.5;
    let t = 0.4 / (2.0 * c);
    let traj = integrate_reaction(ReactionState::new(c, c, c), t, 1e-3)?;
    let end = traj.states.last().unwrap();
    let exact = c / (1.0 - 2.0 * c * t);
    Ok((end.gamma / exact - 1.0, 0.0, 1e-8))
}

fn zero_ode() -> Result<(f64, f64, f64)> {
    let params = PinchingParams::new(1e-3)?;
    let traj = integrate_reaction(ReactionState::new(0.0, 0.0, 0.0), params.t_horizon, 1e-4)?;
    let size = max_abs(traj.states.iter().flat_map(|s| [s.alpha, s.beta, s.gamma]));
    let holds = [PinchingMode::Ricci, PinchingMode::Sectional]
        .iter()
        .all(|&mode| pinching_check(&traj, &params, mode).is_ok_and(|r| r.holds));
    Ok((size + (!holds) as u8 as f64, 0.0, 0.0))
}

fn tame_beyond_domain() -> Result<(f64, f64, f64)> {
    let m = euclid(201, 3.0)?;
    let out = tame(&m, &CutoffProfile::new(ExpComparison::new(1)?, 5.0)?)?;
    Ok(((out.w() != m.w()) as u8 as f64, 0.0, 0.0))
}

fn wild_tamed_on_ball() -> Result<(f64, f64, f64)> {
    let m = Profile::Wild.build(2001, 4.0)?;
    let out = tame(&m, &CutoffProfile::new(ExpComparison::new(1)?, 2.0)?)?;
    let differ = (0..m.s().len())
        .take_while(|&j| m.s()[j] <= 2.0)
        .filter(|&j| out.w()[j].to_bits() != m.w()[j].to_bits() || out.s()[j].to_bits() != m.s()[j].to_bits())
        .count();
    Ok((differ as f64, 0.0, 0.0))
}

fn sphere_conformal_ricci() -> Result<(f64, f64, f64)> {
    let ric = conformal_ricci(&sphere(2001)?, &ConformalProfile::constant(0.0))?;
    Ok((max_abs(ric.ric_rad.iter().chain(&ric.ric_sph).map(|r| r - 2.0)), 0.0, 1e-6))
}

fn flat_jacobi() -> Result<(f64, f64, f64)> {
    let r = jacobi_growth(&JacobiProblem::constant(1.0, [[0.0; 2]; 2])?)?;
    Ok((r.max_norm2, 1.0, 1e-10))
}

fn hyperbolic_jacobi() -> Result<(f64, f64, f64)> {
    let r = jacobi_growth(&JacobiProblem::constant(2.0, [[-1.0, 0.0], [0.0, -1.0]])?)?;
    Ok((r.max_norm2 + (!r.holds) as u8 as f64, 1.0, 1e-10))
}

fn flat_r_bound() -> Result<(f64, f64, f64)> {
    Ok((r_bound(3.0, 0.0, 3), 0.0, 0.0))
}

fn flat_trace_estimates() -> Result<(f64, f64, f64)> {
    let mut cfg = FlowConfig::new(0.01);
    cfg.monitor_pairs = vec![MonitorPair { x1: 0.5, psi: 0.0, x2: 1.0 }];
    cfg.tracked_points = vec![0.0, 0.5];
    let trace = run(&euclid(161, 4.0)?, &cfg)?;
    let mon = monitor_flow(&trace, (0.0, 0.01));
    let d = distance_monitor(&trace);
    let v = volume_continuity(&trace, None)?;
    let worst = mon.k2.max(smoothing_bound(&trace, (0.0, 0.01)).c0).max(d.c1).max(d.c2);
    let ok = mon.pass && d.pass && v.s_horizon == 0.01;
    Ok((worst + (!ok) as u8 as f64, 0.0, 1e-9))
}

fn bishop_gromov_equality() -> Result<(f64, f64, f64)> {
    let flat = bishop_gromov_check(&euclid(801, 5.0)?, 0.0)?;
    let round = bishop_gromov_check(&sphere(801)?, 1.0)?;
    let err = (flat.final_ratio - 1.0).abs().max((round.final_ratio - 1.0).abs());
    let ok = flat.pass && round.pass;
    Ok((err + (!ok) as u8 as f64, 0.0, 1e-8))
}

fn cone_apex() -> Result<(f64, f64, f64)> {
    let spec = ConeSpec::new(0.25, Link::Sphere2)?;
    Ok((spec.distance(0.0, &[1.0, 0.0, 0.0], 1.3, &[0.0, 0.0, 1.0])?, 1.3, 0.0))
}

fn cone_same_ray() -> Result<(f64, f64, f64)> {
    let spec = ConeSpec::new(0.25, Link::Rp3)?;
    let x = [0.5, 0.5, 0.5, 0.5];
    Ok((spec.distance(0.4, &x, 1.9, &x)?, 1.5, 1e-15))
}

fn flat_lattice() -> Result<(f64, f64, f64)> {
    let lat = Lattice::new(3, 4, 2.0)?;
    let x = sample_warped(&euclid(801, 4.0)?, &lat)?;
    let mut worst = 0.0f64;
    for p in 0..lat.len() {
        for q in 0..lat.len() {
            let ((r, a), (s, b)) = (lat.point(p), lat.point(q));
            let exact = (r * r + s * s - 2.0 * r * s * (a - b).cos()).max(0.0).sqrt();
            worst = worst.max((x.d(p, q) - exact).abs());
        }
    }
    Ok((worst, 0.0, 2e-3))
}

fn single_orbit() -> Result<(f64, f64, f64)> {
    let x = sample_warped(&euclid(401, 3.0)?, &Lattice::new(1, 6, 1.0)?)?;
    Ok((x.len() as f64, 7.0, 0.0))
}

fn small_space() -> Result<FiniteMetricSpace> {
    FiniteMetricSpace::from_matrix(vec![
        vec![0.0, 1.0, 2.0, 1.5],
        vec![1.0, 0.0, 1.5, 2.0],
        vec![2.0, 1.5, 0.0, 1.0],
        vec![1.5, 2.0, 1.0, 0.0],
    ])
}

fn gh_identity() -> Result<(f64, f64, f64)> {
    let x = small_space()?;
    let v = gh_exact_small(&x, &x)? + gh_upper_bound(&x, &x) + gh_lower_bound(&x, &x);
    Ok((v, 0.0, 0.0))
}

fn gh_point() -> Result<(f64, f64, f64)> {
    let x = small_space()?;
    let p = FiniteMetricSpace::from_matrix(vec![vec![0.0]])?;
    Ok((gh_exact_small(&p, &x)?, 1.0, 0.0))
}

const CHECKS: &[(&str, Check)] = &[
    ("warped_geometry/unit_sphere_curvature", unit_sphere_curvature),
    ("warped_geometry/flat_curvature", flat_curvature),
    ("warped_geometry/flat_unit_ball", flat_ball),
    ("warped_geometry/sphere_volume", sphere_volume),
    ("warped_geometry/radial_distance", radial_distance),
    ("warped_geometry/planar_chord", planar_chord),
    ("warped_geometry/flat_controlled_growth", flat_growth),
    ("flow_solver/shrinking_sphere", sphere_flow),
    ("flow_solver/flat_fixed_point", flat_flow),
    ("flow_solver/exact_sphere_plug_in", extinct_radius),
    ("reaction_ode/symmetric_closed_form", symmetric_ode),
    ("reaction_ode/zero_state", zero_ode),
    ("taming/index_beyond_domain", tame_beyond_domain),
    ("taming/wild_identity_on_ball", wild_tamed_on_ball),
    ("taming/sphere_conformal_ricci", sphere_conformal_ricci),
    ("comparison/flat_jacobi", flat_jacobi),
    ("comparison/hyperbolic_jacobi", hyperbolic_jacobi),
    ("comparison/flat_r_bound", flat_r_bound),
    ("estimates/flat_trace", flat_trace_estimates),
    ("estimates/bishop_gromov_equality", bishop_gromov_equality),
    ("gh_metric/cone_apex", cone_apex),
    ("gh_metric/cone_same_ray", cone_same_ray),
    ("gh_metric/flat_lattice", flat_lattice),
    ("gh_metric/single_orbit", single_orbit),
    ("gh_metric/identity", gh_identity),
    ("gh_metric/single_point", gh_point),
];

pub fn selftest() -> SelftestReport {
    let cases: Vec<Case> = CHECKS
        .par_iter()
        .map(|&(name, check)| match check() {
            Ok((observed, expected, tolerance)) => Case {
                name: name.into(),
                observed,
                expected,
                tolerance,
                error: None,
                pass: (observed - expected).abs() <= tolerance,
            },
            Err(e) => Case {
                name: name.into(),
                observed: f64::NAN,
                expected: f64::NAN,
                tolerance: 0.0,
                error: Some(e.to_string()),
                pass: false,
            },
        })
        .collect();
    let passed = cases.iter().filter(|c| c.pass).count();
    SelftestReport {
        version: env!("CARGO_PKG_VERSION").into(),
        pass: passed == cases.len(),
        passed,
        cases,
    }
}
