use std::f64::consts::PI;

use curveflow::profiles::{load_csv, write_csv};
use curveflow::{gh_exact_small, gh_lower_bound, gh_upper_bound, ConeSpec, FiniteMetricSpace, Link, Profile};
use proptest::prelude::*;

fn unit(v: [f64; 3]) -> Vec<f64> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.iter().map(|x| x / n).collect()
}

fn direction() -> impl Strategy<Value = Vec<f64>> {
    prop::array::uniform3(-1.0..1.0f64).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2).prop_map(unit)
}

fn plane_points(max: usize) -> impl Strategy<Value = FiniteMetricSpace> {
    prop::collection::vec((0.0..3.0f64, 0.0..3.0f64), 1..=max).prop_filter_map("distinct", |pts| {
        let d = pts.iter().map(|a| pts.iter().map(|b| (a.0 - b.0).hypot(a.1 - b.1)).collect()).collect();
        FiniteMetricSpace::from_matrix(d).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cone_distance_is_a_metric(
        c in 0.05..1.0f64,
        (r1, r2, r3) in (0.0..4.0f64, 0.0..4.0f64, 0.0..4.0f64),
        (x, y, z) in (direction(), direction(), direction()),
    ) {
        let cone = ConeSpec::new(c, Link::Sphere2).unwrap();
        let dxy = cone.distance(r1, &x, r2, &y).unwrap();
        let dyx = cone.distance(r2, &y, r1, &x).unwrap();
        let dxz = cone.distance(r1, &x, r3, &z).unwrap();
        let dzy = cone.distance(r3, &z, r2, &y).unwrap();
        prop_assert!((dxy - dyx).abs() <= 1e-12);
        prop_assert!(dxy <= dxz + dzy + 1e-12);
        prop_assert!(dxy >= (r1 - r2).abs() - 1e-12 && dxy <= r1 + r2 + 1e-12);
        prop_assert!(cone.distance(r1, &x, r1, &x).unwrap() <= 1e-7);
    }

    #[test]
    fn cone_distance_scales(c in 0.05..1.0f64, r in 0.0..4.0f64, s in 0.0..4.0f64, psi in 0.0..PI, lam in 0.1..10.0f64) {
        let cone = ConeSpec::new(c, Link::Sphere2).unwrap();
        let d = cone.distance_psi(r, s, psi);
        prop_assert!((cone.distance_psi(lam * r, lam * s, psi) - lam * d).abs() <= 1e-12 * (1.0 + lam * d));
    }

    #[test]
    fn gh_to_a_rescaling(x in plane_points(5), lam in 0.2..5.0f64) {
        let y = x.scaled(lam).unwrap();
        let exact = gh_exact_small(&x, &y).unwrap();
        // The identity correspondence has distortion |λ − 1| diam.
        prop_assert!(exact <= 0.5 * (lam - 1.0).abs() * x.diam() + 1e-12);
        prop_assert!(gh_lower_bound(&x, &y) <= exact + 1e-12);
        prop_assert!(exact <= gh_upper_bound(&x, &y) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn profile_csv_round_trip(r0 in 0.2..5.0f64, nodes in 16usize..300) {
        let m = Profile::Sphere { r0 }.build(nodes, 8.0).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        write_csv(&m, &mut file.as_file()).unwrap();
        let back = load_csv(file.path()).unwrap();
        prop_assert_eq!(m.s(), back.s());
        prop_assert_eq!(m.w(), back.w());
        prop_assert_eq!(m.grid().topology(), back.grid().topology());
    }
}
