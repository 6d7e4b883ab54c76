use std::f64::consts::PI;

use curveflow::taming::{
    comparison_bounds_fit, conformal_ricci, conformal_riemann, conformal_riemann_checked, dual_route,
    growth_conditions_fit, tame, tame_conformal, verify_taming, ConformalProfile, CutoffProfile, ExpComparison,
    TamingOptions, TraceSign, F_MAX,
};
use curveflow::{curvature, Error, Fiber, Profile, RadialGrid, Topology, WarpedMetric};

fn exp1() -> ExpComparison {
    ExpComparison::new(1).unwrap()
}

fn quartic(a: f64, c: f64) -> ConformalProfile {
    ConformalProfile::from_fn(move |s| {
        let u = (s - a).max(0.0);
        [c * u.powi(4), 4.0 * c * u.powi(3), 12.0 * c * u * u]
    })
}

fn cone(nodes: usize, s_max: f64) -> WarpedMetric {
    "cone:0.25".parse::<Profile>().unwrap().build(nodes, s_max).unwrap()
}

#[test]
fn exp_comparison_is_a_tower() {
    let h = ExpComparison::new(2).unwrap();
    assert!((h.value(0.5) - 0.5f64.exp().exp()).abs() < 1e-12);
    assert_eq!(h.at_zero(), 1f64.exp());
    for x in [0.0, 0.5, 1.0, 2.0] {
        assert!(h.value(x) >= x.exp());
        assert!(exp1().value(x + 0.1) > exp1().value(x));
    }
    assert!(ExpComparison::new(0).is_err());
}

#[test]
fn cutoff_vanishes_on_the_ball_and_is_c3_at_the_index() {
    let p = CutoffProfile::new(ExpComparison::new(2).unwrap(), 2.0).unwrap();
    for r in [0.0, 1.0, 1.999, 2.0] {
        assert_eq!(p.eval(r), [0.0; 3]);
    }
    let [f, f1, f2] = p.eval(2.0 + 1e-3);
    assert!(f < 1e-10 && f1 < 1e-7 && f2 < 1e-4);
    let mut last = 0.0;
    for k in 0..200 {
        let v = p.phi(2.0 + k as f64 * 0.005);
        assert!(v >= last);
        last = v;
    }
    // Normalized against the raw cutoff.
    let r = 2.7;
    assert!((p.phi(r) - (p.raw(r) - 1f64.exp())).abs() < 1e-12 * p.raw(r));
}

#[test]
fn derivative_bound_at_one() {
    let rep = comparison_bounds_fit(exp1(), 0.125, &[0.0], 1.0, 1000).unwrap();
    let d1 = &rep.inequalities.iter().find(|q| q.name == "h_i'").unwrap().fits[0];
    let e = 1f64.exp();
    let oracle = 4.0 * e * (-e / 8.0).exp();
    assert!((d1.c - oracle).abs() < 1e-10, "{} vs {oracle}", d1.c);
    assert!((d1.c - 7.74).abs() < 5e-3);
    assert_eq!(d1.argmax, 1.0);
}

#[test]
fn lemma_constants_do_not_depend_on_the_index() {
    for depth in [1, 2] {
        let h = ExpComparison::new(depth).unwrap();
        let rep = comparison_bounds_fit(h, 0.125, &[1.0, 2.0, 4.0], 1.5, 3000).unwrap();
        assert!(rep.pass, "depth {depth}: {:#?}", rep.inequalities);
        assert_eq!(rep.inequalities.len(), 4);
    }
}

#[test]
fn growth_conditions_hold_with_one_constant() {
    let fits = growth_conditions_fit(ExpComparison::new(2).unwrap(), &[2.0, 4.0, 8.0], 1.5, 2000).unwrap();
    for q in fits {
        assert!(q.spread <= 0.10, "{}: {}", q.name, q.spread);
        assert!(q.fits.iter().all(|f| f.c.is_finite()));
    }
}

#[test]
fn tame_beyond_the_domain_is_the_identity() {
    let m = Profile::Euclidean.build(201, 2.0).unwrap();
    let out = tame(&m, &CutoffProfile::new(exp1(), 2.0).unwrap()).unwrap();
    assert_eq!((out.s(), out.w()), (m.s(), m.w()));
}

#[test]
fn tame_euclidean_matches_closed_form() {
    let m = Profile::Euclidean.build(2001, 3.0).unwrap();
    let p = CutoffProfile::new(exp1(), 1.0).unwrap();
    let out = tame(&m, &p).unwrap();
    for (j, &s) in m.s().iter().enumerate().take(out.s().len()) {
        // f = e^{(s-1)^4} - 1; σ(s) = s + ∫_1^s (e^{f/2} - 1).
        let f = ((s - 1.0).max(0.0).powi(4)).exp_m1();
        let rel = (out.w()[j] - (0.5 * f).exp() * s).abs() / out.w()[j].max(f64::MIN_POSITIVE);
        assert!(rel < 1e-12 || out.w()[j] == 0.0, "s = {s}: {} vs {}", out.w()[j], (0.5 * f).exp() * s);
        if s <= 1.0 {
            assert_eq!(out.s()[j], s);
        }
    }
    let s_end = m.s()[out.s().len() - 1];
    let simpson = {
        let n = 400_000;
        let h = (s_end - 1.0) / n as f64;
        let g = |x: f64| (0.5 * (x - 1.0).powi(4).exp_m1()).exp_m1();
        let mut acc = g(1.0) + g(s_end);
        for k in 1..n {
            acc += g(1.0 + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let sigma_end = *out.s().last().unwrap();
    assert!(((sigma_end - s_end) / simpson - 1.0).abs() < 1e-10, "{} vs {}", sigma_end - s_end, simpson);
}

#[test]
fn tame_is_bitwise_identity_on_the_ball() {
    let m = Profile::Wild.build(3001, 4.0).unwrap();
    let out = tame(&m, &CutoffProfile::new(exp1(), 2.0).unwrap()).unwrap();
    let inside = m.s().partition_point(|&s| s <= 2.0);
    assert!(inside > 1000);
    for j in 0..inside {
        assert_eq!(out.s()[j].to_bits(), m.s()[j].to_bits());
        assert_eq!(out.w()[j].to_bits(), m.w()[j].to_bits());
    }
}

#[test]
fn tame_truncates_where_the_factor_explodes() {
    let m = Profile::Euclidean.build(4001, 4.0).unwrap();
    let p = CutoffProfile::new(exp1(), 1.0).unwrap();
    let out = tame(&m, &p).unwrap();
    let kept = out.s().len();
    assert!(kept < m.s().len());
    assert!(p.phi(m.s()[kept - 1]) <= F_MAX);
}

#[test]
fn tame_rejects_small_domains_and_closed_bases() {
    let m = Profile::Euclidean.build(201, 2.0).unwrap();
    let err = tame(&m, &CutoffProfile::new(exp1(), 1.9).unwrap()).unwrap_err();
    assert!(matches!(err, Error::DomainTooSmall(_)), "{err}");
    let sphere = Profile::Sphere { r0: 1.0 }.build(201, 0.0).unwrap();
    assert!(tame(&sphere, &CutoffProfile::new(exp1(), 1.0).unwrap()).is_err());
}

#[test]
fn constant_factors() {
    let m = Profile::Wild.build(2001, 2.0).unwrap();
    let base = curvature(&m).unwrap();
    let same = conformal_ricci(&m, &ConformalProfile::constant(0.0)).unwrap();
    for j in 0..base.len() {
        assert!((same.ric_rad[j] - base.ric_rad[j]).abs() <= 1e-12 * base.ric_rad[j].abs().max(1.0));
    }
    let lambda = 2.5f64;
    let scaled = conformal_riemann(&m, &ConformalProfile::constant(lambda.ln())).unwrap();
    for j in 0..base.len() {
        assert!((scaled.k_rad[j] * lambda - base.k_rad[j]).abs() <= 1e-12 * base.k_rad[j].abs().max(1.0));
        assert!((scaled.k_sph[j] * lambda - base.k_sph[j]).abs() <= 1e-12 * base.k_sph[j].abs().max(1.0));
    }
    let sphere = Profile::Sphere { r0: 1.0 }.build(2001, 0.0).unwrap();
    let ric = conformal_ricci(&sphere, &ConformalProfile::constant(0.0)).unwrap();
    for j in 0..ric.len() {
        assert!((ric.ric_rad[j] - 2.0).abs() < 1e-6 && (ric.ric_sph[j] - 2.0).abs() < 1e-6, "{} {}", ric.ric_rad[j], ric.ric_sph[j]);
    }
}

fn families() -> Vec<(&'static str, WarpedMetric, ConformalProfile)> {
    vec![
        ("euclidean", Profile::Euclidean.build(2000, 3.0).unwrap(), quartic(1.0, 0.1)),
        (
            "sphere",
            Profile::Sphere { r0: 1.0 }.build(2000, 0.0).unwrap(),
            ConformalProfile::from_fn(|s| [0.3 * s.cos(), -0.3 * s.sin(), -0.3 * s.cos()]),
        ),
        (
            "cone",
            cone(2000, 3.0),
            ConformalProfile::cutoff(CutoffProfile::new(exp1(), 1.0).unwrap()),
        ),
        (
            "wild",
            Profile::Wild.build(2000, 2.0).unwrap(),
            ConformalProfile::from_fn(|s| [0.2 * s * s, 0.4 * s, 0.4]),
        ),
    ]
}

#[test]
fn dual_route_agrees_on_four_families() {
    for (name, m, prof) in families() {
        let rep = dual_route(&m, &prof, TraceSign::Standard).unwrap();
        assert!(rep.ricci_rel_err <= 1e-6, "{name}: ricci {:e} at {}", rep.ricci_rel_err, rep.worst_s);
        assert!(rep.riemann_rel_err <= 1e-6, "{name}: riemann {:e} at {}", rep.riemann_rel_err, rep.worst_s);
        assert!(conformal_riemann_checked(&m, &prof).is_ok());
    }
}

#[test]
fn printed_trace_sign_fails_the_oracle() {
    for (name, m, prof) in families() {
        let rep = dual_route(&m, &prof, TraceSign::AsPrinted).unwrap();
        assert!(rep.ricci_rel_err > 1e-3, "{name}: {:e}", rep.ricci_rel_err);
    }
}

#[test]
fn oracle_mismatch_is_reported() {
    // A profile whose derivatives disagree with its values.
    let m = Profile::Euclidean.build(2000, 3.0).unwrap();
    let bad = ConformalProfile::from_fn(|s| [0.1 * s * s, 0.0, 0.0]);
    assert!(matches!(conformal_ricci(&m, &bad), Err(Error::OracleMismatch { .. })));
}

#[test]
fn tamed_grid_stays_valid_for_closed_bases() {
    let sphere = Profile::Sphere { r0: 1.0 }.build(801, 0.0).unwrap();
    let prof = ConformalProfile::from_fn(|s| [0.3 * s.cos(), -0.3 * s.sin(), -0.3 * s.cos()]);
    let out = tame_conformal(&sphere, &prof).unwrap();
    assert_eq!(out.topology(), Topology::Closed);
    assert_eq!(out.s().len(), 801);
    let w = out.w();
    assert_eq!((w[0], w[800]), (0.0, 0.0));
}

#[test]
fn euclidean_taming_conclusions() {
    let m = Profile::Euclidean.build(6001, 6.0).unwrap();
    let rep = verify_taming(&m, exp1(), &[2.0, 3.0, 4.0], 1.0, &TamingOptions::default()).unwrap();
    let ball = 4.0 * PI / 3.0;
    assert!(rep.indices.iter().all(|r| r.identity_on_ball && r.tail_decreasing));
    // Lattice ball volumes are accurate to about one percent.
    assert!((rep.vtilde0 - ball).abs() < 1e-2 * ball, "{}", rep.vtilde0);
    assert!(rep.pass, "{rep:#?}");
}

#[test]
fn mollified_cone_taming_conclusions() {
    let m = cone(10001, 10.0);
    let rep = verify_taming(&m, exp1(), &[2.0, 4.0, 8.0], 1.0, &TamingOptions::default()).unwrap();
    for r in &rep.indices {
        assert!(r.identity_on_ball, "i = {}", r.index);
        assert!(r.tail_decreasing, "i = {}: peak at {}", r.index, r.tail_peak_at);
        assert!(r.majorant_c.is_finite());
        assert!(r.dual_route.ricci_rel_err <= 1e-6);
    }
    assert!(rep.ricci_spread <= 0.10, "{rep:#?}");
    assert!(rep.vtilde0 > 0.0 && rep.vtilde0_spread <= 0.10);
    assert!(rep.pass);
}

#[test]
fn taming_hypothesis_gate() {
    // Hyperbolic space of curvature -4 has Ricci -8.
    let grid = RadialGrid::uniform(1001, 3.0, Topology::Open).unwrap();
    let m = WarpedMetric::from_fn(grid, Fiber::Sphere2, |s| (2.0 * s).sinh() / 2.0).unwrap();
    let err = verify_taming(&m, exp1(), &[1.0], 9.0, &TamingOptions::default());
    assert!(err.is_ok() || matches!(err, Err(Error::PreconditionFailed(_))));
    let err = verify_taming(&m, exp1(), &[1.0], 2.5, &TamingOptions::default()).unwrap_err();
    assert!(matches!(err, Error::PreconditionFailed(_)), "{err}");
}
