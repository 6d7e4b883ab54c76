use curveflow::comparison::{jacobi_field, random_problem, DIM};
use curveflow::{
    hessian_rho_check, jacobi_growth, jacobi_sweep, r_bound, r_bound_ln, Error, JacobiProblem, Profile,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn iso(k: f64) -> [[f64; 2]; 2] {
    [[k, 0.0], [0.0, k]]
}

#[test]
fn hyperbolic_field_is_sinh_ratio() {
    let l = 2.5;
    let p = JacobiProblem::constant(l, iso(-1.0)).unwrap();
    let field = jacobi_field(&p, [1.0, 0.0]).unwrap();
    for (s, v) in field.iter().step_by(97) {
        let exact = s.sinh() / l.sinh();
        assert!((v - exact).abs() < 1e-10, "s = {s}: {v} vs {exact}");
    }
    let r = jacobi_growth(&p).unwrap();
    assert!((r.max_norm2 - 1.0).abs() < 1e-10);
    assert!((r.argmax - l).abs() < 1e-9);
    assert!(r.holds && !r.interior_conjugate);
    assert!((r.bound - ((DIM as f64 + 1.0) * l).exp()).abs() < 1e-9 * r.bound);
}

#[test]
fn flat_and_spherical_fields() {
    let flat = jacobi_growth(&JacobiProblem::constant(1.7, iso(0.0)).unwrap()).unwrap();
    assert!((flat.max_norm2 - 1.0).abs() < 1e-12);

    let l = 2.4;
    let r = jacobi_growth(&JacobiProblem::constant(l, iso(1.0)).unwrap()).unwrap();
    let exact = 1.0 / l.sin().powi(2);
    assert!((r.max_norm2 - exact).abs() < 1e-6 * exact, "{} vs {exact}", r.max_norm2);
    assert!((r.argmax - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
}

#[test]
fn anisotropic_curvature_uses_worst_direction() {
    let l = 2.0;
    let p = JacobiProblem::constant(l, [[1.0, 0.0], [0.0, -1.0]]).unwrap();
    let r = jacobi_growth(&p).unwrap();
    let sph = (0..=2000)
        .map(|j| (j as f64 * l / 2000.0).sin() / l.sin())
        .fold(0.0, f64::max);
    assert!((r.max_norm2 - sph * sph).abs() < 1e-6);
    assert_eq!(r.k, 1.0);
}

#[test]
fn endpoint_conjugate_point_is_reported() {
    let p = JacobiProblem::constant(std::f64::consts::PI, iso(1.0)).unwrap();
    assert!(matches!(jacobi_growth(&p), Err(Error::ShootingFailed(_))));
}

#[test]
fn near_antipodal_minimizing_geodesic_breaks_the_bound() {
    // Constant curvature 0.1: geodesics shorter than π/√0.1 minimize.
    let kappa = 0.1f64;
    let l = std::f64::consts::PI / kappa.sqrt() - 1e-5;
    let r = jacobi_growth(&JacobiProblem::constant(l, iso(kappa)).unwrap()).unwrap();
    assert!(!r.interior_conjugate);
    let exact = 1.0 / (kappa.sqrt() * l).sin().powi(2);
    assert!((r.max_norm2 / exact - 1.0).abs() < 1e-3);
    assert!(!r.holds, "{} <= {}", r.max_norm2, r.bound);
}

#[test]
fn rejects_malformed_problems() {
    assert!(JacobiProblem::constant(0.0, iso(1.0)).is_err());
    assert!(JacobiProblem::new(1.0, vec![0.0, 0.6, 0.5, 1.0], vec![iso(0.0); 3]).is_err());
    assert!(JacobiProblem::constant(1.0, [[0.0, 1.0], [0.5, 0.0]]).is_err());
}

#[test]
fn growth_is_invariant_under_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = random_problem(&mut rng, 2.0, 3.0);
        let Ok(a) = jacobi_growth(&p) else { continue };
        for lambda in [0.5, 3.0] {
            let b = jacobi_growth(&p.rescaled(lambda)).unwrap();
            assert!((a.max_norm2 / b.max_norm2 - 1.0).abs() < 1e-6, "{} vs {}", a.max_norm2, b.max_norm2);
            assert!((b.k * lambda * lambda / a.k - 1.0).abs() < 1e-12);
            assert_eq!(a.interior_conjugate, b.interior_conjugate);
        }
    }
}

#[test]
fn random_sweep_has_no_violations() {
    let rep = jacobi_sweep(2.0, 3.0, 300, 7);
    assert_eq!(rep.solved + rep.degenerate, 300);
    assert!(rep.pass, "violations: {:?}", rep.violations);
    assert!(rep.worst_ln_ratio < 0.0);
    let again = jacobi_sweep(2.0, 3.0, 300, 7);
    assert_eq!(rep, again);
}

#[test]
fn r_bound_forms_agree() {
    assert_eq!(r_bound(0.0, 2.0, 3), 0.0);
    assert_eq!(r_bound(2.0, 0.0, 3), 0.0);
    let v = r_bound(1.5, 0.7, 3);
    assert!((v - 1.5 * 0.7 * (3.1f64 * 1.5).exp()).abs() < 1e-12 * v);
    assert!((r_bound_ln(1.5, 0.7, 3) - v.ln()).abs() < 1e-12);
    assert!(r_bound_ln(10.0, 300.0, 3).is_finite());
}

#[test]
fn hessian_of_rho_on_sphere_and_plane() {
    let sphere = Profile::Sphere { r0: 1.0 }.build(2001, 0.0).unwrap();
    let rep = hessian_rho_check(&sphere).unwrap();
    assert!(rep.lower_holds && rep.rb_upper_holds);
    assert!((rep.range.1 - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

    let flat = Profile::Euclidean.build(2001, 4.0).unwrap();
    let rep = hessian_rho_check(&flat).unwrap();
    assert!(rep.lower_holds);
    assert!(!rep.rb_upper_holds);
    assert!((rep.fitted_c - 1.0).abs() < 1e-8, "{}", rep.fitted_c);
}

#[test]
fn hessian_margins_are_stable_under_refinement() {
    let p = Profile::Wild;
    let a = hessian_rho_check(&p.build(2001, 2.5).unwrap()).unwrap();
    let b = hessian_rho_check(&p.build(4001, 2.5).unwrap()).unwrap();
    assert!(a.lower_holds && b.lower_holds);
    assert!((a.fitted_c / b.fitted_c - 1.0).abs() < 0.05, "{} vs {}", a.fitted_c, b.fitted_c);
}
