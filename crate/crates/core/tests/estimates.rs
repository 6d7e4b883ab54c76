use std::f64::consts::PI;

use curveflow::estimates::{BishopGromovReport, BG_TOL};
use curveflow::{
    bishop_gromov_check, distance_monitor, exact_sphere_state, lemma52_monitor, monitor_flow, run,
    smoothing_bound, volume_continuity, Error, Fiber, FlowConfig, FlowTrace, MonitorPair, Profile,
    RadialGrid, Topology, WarpedMetric,
};

fn sphere_trace(r0: f64, times: &[f64], pairs: Vec<MonitorPair>) -> FlowTrace {
    let mut cfg = FlowConfig::new(*times.last().unwrap());
    cfg.snapshot_times = times.to_vec();
    cfg.monitor_pairs = pairs;
    let states = times.iter().map(|&t| exact_sphere_state(r0, t, 401).unwrap()).collect();
    FlowTrace::from_states(cfg, states).unwrap()
}

fn times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend((0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64));
    v
}

fn antipodal() -> MonitorPair {
    MonitorPair { x1: 0.0, psi: 0.0, x2: PI }
}

#[test]
fn shrinking_sphere_constants_match_the_exact_curves() {
    let ts = times(0.01, 0.2, 38);
    let trace = sphere_trace(1.0, &ts, vec![antipodal()]);
    let rep = monitor_flow(&trace, (0.01, 0.2));

    // Every sectional curvature of the round sphere of radius r is 1/r².
    let c_oracle = ts[1..].iter().map(|t| t / (1.0 - 4.0 * t)).fold(0.0, f64::max);
    let d = |t: f64| PI * (1.0 - 4.0 * t).sqrt();
    let mut d_oracle = 0.0f64;
    for (a, &s) in ts[1..].iter().enumerate() {
        for &t in &ts[a + 2..] {
            d_oracle = d_oracle.max((d(s) - d(t)) / (t.sqrt() - s.sqrt()));
        }
    }
    let c = &rep.inequalities[2];
    let dd = &rep.inequalities[3];
    assert!((c.fitted - c_oracle).abs() < 1e-6 * c_oracle, "{} vs {c_oracle}", c.fitted);
    assert_eq!(c.binding_t, 0.2);
    assert!((dd.fitted - d_oracle).abs() < 1e-6 * d_oracle, "{} vs {d_oracle}", dd.fitted);
    assert_eq!(rep.inequalities[0].fitted, 0.0);
    assert_eq!(rep.k2, dd.fitted.max(c.fitted));
    assert_eq!(rep.binding, "distance");
    // The unit ball about a tip drops below half its initial volume as the
    // sphere approaches extinction.
    let b = &rep.inequalities[1];
    assert!(!b.pass && !rep.pass);
    let first_bad = b.violations[0].t;
    assert!(first_bad > 0.15, "{first_bad}");
    assert!(b.violations.iter().all(|v| v.t >= first_bad));

    let s = smoothing_bound(&trace, (0.0, 0.2));
    assert!((s.c0 - 1.0).abs() < 1e-6);
    let part = smoothing_bound(&trace, (0.0, 0.1));
    assert!(part.c0 <= s.c0);
}

#[test]
fn smoothing_constant_is_invariant_under_parabolic_rescaling() {
    let ts = times(0.01, 0.2, 19);
    let a = smoothing_bound(&sphere_trace(1.0, &ts, vec![]), (0.0, 1.0)).c0;
    let scaled: Vec<f64> = ts.iter().map(|t| 4.0 * t).collect();
    let b = smoothing_bound(&sphere_trace(2.0, &scaled, vec![]), (0.0, 4.0)).c0;
    assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
}

#[test]
fn sphere_distances_follow_the_square_root_law() {
    let mut ts = times(0.01, 0.19, 19);
    ts.push(0.1901);
    let trace = sphere_trace(1.0, &ts, vec![antipodal()]);
    let rep = distance_monitor(&trace);
    assert_eq!(rep.c1, 0.0);
    assert!(rep.pass, "{:?}", rep.violations);
    assert!(rep.c2 <= rep.c2_implied);
    // Closest pair: the quotient approaches −2√t d'(t) = 4π√t / √(1 − 4t).
    let (s, t) = (0.19, 0.1901);
    let d = |t: f64| PI * (1.0 - 4.0 * t).sqrt();
    let q = (d(s) - d(t)) / (t.sqrt() - s.sqrt());
    let deriv = 4.0 * PI * t.sqrt() / (1.0 - 4.0 * t).sqrt();
    assert!((q / deriv - 1.0).abs() < 1e-3);
    let last = trace.snapshots.last().unwrap().diagnostics.distances[0].unwrap();
    assert!((last - d(t)).abs() < 1e-9);
}

/// Closed form for the unit ball about a tip of the round sphere of radius r.
fn sphere_unit_ball(r: f64) -> f64 {
    if PI * r <= 1.0 {
        2.0 * PI * PI * r.powi(3)
    } else {
        4.0 * PI * r * r * (0.5 - 0.25 * r * (2.0 / r).sin())
    }
}

#[test]
fn sphere_volume_horizon_matches_closed_form() {
    let ts = times(0.0025, 0.2, 79);
    let trace = sphere_trace(1.0, &ts, vec![]);
    let rep = volume_continuity(&trace, None).unwrap();
    let v0 = sphere_unit_ball(1.0);
    assert!((rep.v0 - v0).abs() < 1e-9 * v0);
    let (mut lo, mut hi) = (0.0f64, 0.2f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sphere_unit_ball((1.0 - 4.0 * mid).sqrt()) >= 2.0 / 3.0 * v0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((rep.s_horizon - lo).abs() < 1e-3 * lo, "{} vs {lo}", rep.s_horizon);
    assert!(rep.precondition_ok && rep.pass);
}

#[test]
fn euclidean_trace_is_trivial() {
    let m = Profile::Euclidean.build(161, 4.0).unwrap();
    let mut cfg = FlowConfig::new(0.01);
    cfg.monitor_pairs = vec![MonitorPair { x1: 0.5, psi: 0.0, x2: 1.0 }];
    cfg.tracked_points = vec![0.0, 0.5];
    let trace = run(&m, &cfg).unwrap();
    let rep = monitor_flow(&trace, (0.0, 0.01));
    assert!(rep.k2 < 1e-9, "{}", rep.k2);
    assert!(rep.pass);
    assert!(smoothing_bound(&trace, (0.0, 0.01)).c0 < 1e-9);
    let d = distance_monitor(&trace);
    assert!(d.c1 < 1e-9 && d.c2 < 1e-9 && d.pass);
    let v = volume_continuity(&trace, None).unwrap();
    assert_eq!(v.s_horizon, 0.01);
    let p = lemma52_monitor(&trace, 1e-3, 100.0).unwrap();
    assert!(p.pass && p.min_margin > 0.0);
}

#[test]
fn large_sphere_satisfies_pinching_trivially() {
    let ts = [0.0, 0.0025, 0.005, 0.0075, 0.01];
    let trace = sphere_trace(10.0, &ts, vec![]);
    let rep = lemma52_monitor(&trace, 1e-3, 100.0).unwrap();
    assert!(rep.pass);
    assert!(rep.min_margin > 0.02);
}

fn bump(a: f64) -> WarpedMetric {
    let grid = RadialGrid::uniform(321, 8.0, Topology::Open).unwrap();
    WarpedMetric::from_fn(grid, Fiber::Sphere2, |s| s * (1.0 + a * s * s * (-s * s).exp())).unwrap()
}

fn min_ric(m: &WarpedMetric) -> f64 {
    curveflow::curvature(m).unwrap().ric_min_all().into_iter().fold(f64::INFINITY, f64::min)
}

#[test]
fn near_flat_metric_at_the_pinching_threshold() {
    let eps0 = 1e-3;
    // Ricci depends almost linearly on the amplitude; two secant steps land
    // on min Ric = −ε₀/4 from above.
    let target = -eps0 / 4.0 * (1.0 - 1e-6);
    let (mut a0, mut a1) = (1e-4, 2e-4);
    for _ in 0..3 {
        let (r0, r1) = (min_ric(&bump(a0)), min_ric(&bump(a1)));
        let a2 = a1 + (target - r1) * (a1 - a0) / (r1 - r0);
        a0 = a1;
        a1 = a2;
    }
    let m = bump(a1);
    assert!((min_ric(&m) / target - 1.0).abs() < 1e-4);
    let mut cfg = FlowConfig::new(0.01);
    cfg.snapshot_times = (0..=10).map(|k| 1e-3 * k as f64).collect();
    let trace = run(&m, &cfg).unwrap();
    let rep = lemma52_monitor(&trace, eps0, 100.0).unwrap();
    assert!(rep.pass, "{:?}", &rep.violations[..rep.violations.len().min(5)]);

    let below = bump(2.0 * a1);
    let trace = FlowTrace::from_states(FlowConfig::new(1.0), vec![curveflow::FlowState::from_metric(&below)]).unwrap();
    assert!(matches!(lemma52_monitor(&trace, eps0, 100.0), Err(Error::HypothesisViolated(_))));
}

fn bg(m: &WarpedMetric, kappa: f64) -> BishopGromovReport {
    bishop_gromov_check(m, kappa).unwrap()
}

#[test]
fn bishop_gromov_equality_cases() {
    let flat = bg(&Profile::Euclidean.build(801, 5.0).unwrap(), 0.0);
    assert!(flat.pass && (flat.final_ratio - 1.0).abs() < 1e-10, "{flat:?}");
    let sphere = bg(&Profile::Sphere { r0: 1.0 }.build(801, 0.0).unwrap(), 1.0);
    assert!(sphere.pass && (sphere.final_ratio - 1.0).abs() < 1e-8, "{sphere:?}");
    assert!(sphere.max_upward <= BG_TOL);
}

#[test]
fn bishop_gromov_on_the_cone() {
    let m = "cone:0.25".parse::<Profile>().unwrap().build(2001, 6.0).unwrap();
    let rep = bg(&m, 0.0);
    assert!(rep.pass);
    let from = rep.strictly_decreasing_from.unwrap();
    assert!(from <= 0.1, "{from}");
    // Far out the ratio approaches c from above, like c (1 - s0/s)^3 with s0 < 0.
    let s0 = curveflow::SmoothedCone::new(0.25, 0.1).unwrap().apex_offset();
    let linear = 0.25 * (1.0 - s0 / 6.0).powi(3);
    assert!(rep.final_ratio > 0.25 && (rep.final_ratio / linear - 1.0).abs() < 1e-3, "{} vs {linear}", rep.final_ratio);
}

#[test]
fn bishop_gromov_hypothesis_gate() {
    let m = Profile::Sphere { r0: 1.0 }.build(401, 0.0).unwrap();
    assert!(matches!(bishop_gromov_check(&m, 2.0), Err(Error::PreconditionFailed(_))));
}
