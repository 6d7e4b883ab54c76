use std::f64::consts::PI;

use curveflow::gh::{rescaled_cone, Correspondence};
use curveflow::{
    cone_convergence_experiment, gh_exact_small, gh_lower_bound, gh_upper_bound, sample_cone, sample_warped,
    ConeSpec, ConvergenceOptions, Error, FiniteMetricSpace, Lattice, Link, Profile, SmoothedCone,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn space(d: Vec<Vec<f64>>) -> FiniteMetricSpace {
    FiniteMetricSpace::from_matrix(d).unwrap()
}

/// Random points in the plane under the ℓ¹ or ℓ² norm.
fn random_space(rng: &mut ChaCha8Rng) -> FiniteMetricSpace {
    let n = rng.random_range(1..=6);
    let l1 = rng.random_bool(0.5);
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.0..3.0))).collect();
    let d = pts
        .iter()
        .map(|a| {
            pts.iter()
                .map(|b| {
                    let (dx, dy) = ((a.0 - b.0).abs(), (a.1 - b.1).abs());
                    if l1 {
                        dx + dy
                    } else {
                        dx.hypot(dy)
                    }
                })
                .collect()
        })
        .collect();
    space(d)
}

/// Every surjective relation, by subset enumeration over `X × Y`.
fn brute_force(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> f64 {
    let (nx, ny) = (x.len(), y.len());
    let all: Vec<(usize, usize)> = (0..nx).flat_map(|a| (0..ny).map(move |b| (a, b))).collect();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << all.len()) {
        let pairs: Vec<_> = (0..all.len()).filter(|k| mask >> k & 1 == 1).map(|k| all[k]).collect();
        let r = Correspondence { pairs };
        if r.is_surjective(nx, ny) {
            best = best.min(r.distortion(x, y));
        }
    }
    0.5 * best
}

#[test]
fn cone_distance_examples() {
    let spec = ConeSpec::new(0.25, Link::Sphere2).unwrap();
    let (e1, e2) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    let d = spec.distance(1.0, &e1, 1.0, &e2).unwrap();
    assert!((d - (2.0 - 2.0f64.sqrt()).sqrt()).abs() < 1e-15);
    assert_eq!(spec.distance(0.0, &e1, 1.7, &e2).unwrap(), 1.7);
    assert!((spec.distance(0.5, &e1, 2.0, &e1).unwrap() - 1.5).abs() < 1e-15);
    // Antipodal points at c = 1 sit on a line through the apex.
    let flat = ConeSpec::new(1.0, Link::Sphere2).unwrap();
    assert!((flat.distance(1.0, &e1, 2.0, &[-1.0, 0.0, 0.0]).unwrap() - 3.0).abs() < 1e-12);
    assert!(ConeSpec::new(1.5, Link::Sphere2).is_err());
    assert!(spec.distance(1.0, &e1, 1.0, &[1.0, 0.0]).is_err());
}

#[test]
fn rp3_link_identifies_antipodes() {
    let spec = ConeSpec::new(1.0, Link::Rp3).unwrap();
    let v = [0.5, 0.5, 0.5, 0.5];
    let minus: Vec<f64> = v.iter().map(|a| -a).collect();
    assert!(spec.link_distance(&v, &minus).unwrap() < 1e-7);
    let w = [0.5, -0.5, 0.5, -0.5];
    assert!((spec.link_distance(&v, &w).unwrap() - PI / 2.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = spec.link_distance(&a, &b).unwrap();
        assert!((0.0..=PI / 2.0 + 1e-12).contains(&psi));
    }
}

#[test]
fn metric_space_validation() {
    assert!(matches!(
        FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0, 5.0], vec![1.0, 0.0, 1.0], vec![5.0, 1.0, 0.0]]),
        Err(Error::MetricViolation { .. })
    ));
    assert!(FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
    assert!(FiniteMetricSpace::from_matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).is_err());
    assert!(FiniteMetricSpace::from_matrix(vec![vec![1.0]]).is_err());
    assert!(FiniteMetricSpace::from_matrix(vec![]).is_err());
}

#[test]
fn csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_space(&mut rng);
    let mut buf = Vec::new();
    x.write_csv(&mut buf).unwrap();
    let y = FiniteMetricSpace::read_csv(buf.as_slice()).unwrap();
    assert_eq!(x, y);
}

#[test]
fn exact_small_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = random_space(&mut rng);
    assert_eq!(gh_exact_small(&y, &y).unwrap(), 0.0);
    let point = space(vec![vec![0.0]]);
    assert_eq!(gh_exact_small(&point, &y).unwrap(), 0.5 * y.diam());
    for (a, b) in [(1.0, 3.0), (2.5, 0.5), (1.0, 1.0)] {
        let x = space(vec![vec![0.0, a], vec![a, 0.0]]);
        let z = space(vec![vec![0.0, b], vec![b, 0.0]]);
        assert_eq!(gh_exact_small(&x, &z).unwrap(), 0.5 * (a - b).abs());
    }
    let big = space((0..7).map(|i| (0..7).map(|j| (i as f64 - j as f64).abs()).collect()).collect());
    assert!(matches!(gh_exact_small(&big, &point), Err(Error::TooLarge { size: 7, cap: 6 })));
}

#[test]
fn exact_search_agrees_with_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut done = 0;
    while done < 40 {
        let (x, y) = (random_space(&mut rng), random_space(&mut rng));
        if x.len() * y.len() > 16 {
            continue;
        }
        assert_eq!(gh_exact_small(&x, &y).unwrap(), brute_force(&x, &y));
        done += 1;
    }
}

#[test]
fn bounds_sandwich_the_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (x, y) = (random_space(&mut rng), random_space(&mut rng));
        let exact = gh_exact_small(&x, &y).unwrap();
        let (lo, hi) = (gh_lower_bound(&x, &y), gh_upper_bound(&x, &y));
        assert!(lo <= exact && exact <= hi, "{lo} {exact} {hi}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_space(&mut rng);
    assert_eq!((gh_lower_bound(&x, &x), gh_upper_bound(&x, &x)), (0.0, 0.0));
}

#[test]
fn scaling_is_homogeneous() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (x, y) = (random_space(&mut rng), random_space(&mut rng));
        let lambda = 2.0;
        let a = gh_exact_small(&x, &y).unwrap();
        let b = gh_exact_small(&x.scaled(lambda).unwrap(), &y.scaled(lambda).unwrap()).unwrap();
        assert_eq!(b, lambda * a);
        let l = 3.0;
        assert!(gh_lower_bound(&x.scaled(l).unwrap(), &x) >= 0.5 * (l - 1.0) * x.diam() * (1.0 - 1e-15));
    }
}

#[test]
fn upper_bounds_compose() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..30 {
        let (x, y, z) = (random_space(&mut rng), random_space(&mut rng), random_space(&mut rng));
        let (dxy, r) = curveflow::gh::gh_upper_with(&x, &y);
        let (dyz, s) = curveflow::gh::gh_upper_with(&y, &z);
        let rs = r.compose(&s);
        assert!(rs.is_surjective(x.len(), z.len()));
        let composed = 0.5 * rs.distortion(&x, &z);
        assert!(composed <= dxy + dyz + 1e-12);
        assert!(gh_exact_small(&x, &z).unwrap() <= composed);
    }
}

#[test]
fn euclidean_lattice_follows_the_law_of_cosines() {
    let m = Profile::Euclidean.build(801, 4.0).unwrap();
    let lat = Lattice::new(3, 4, 2.0).unwrap();
    let x = sample_warped(&m, &lat).unwrap();
    let mut worst = 0.0f64;
    for p in 0..lat.len() {
        for q in 0..lat.len() {
            let ((r, a), (s, b)) = (lat.point(p), lat.point(q));
            let exact = (r * r + s * s - 2.0 * r * s * (a - b).cos()).max(0.0).sqrt();
            worst = worst.max((x.d(p, q) - exact).abs());
        }
    }
    assert!(worst <= 2e-3, "{worst}");
    let single = sample_warped(&m, &Lattice::new(1, 4, 2.0).unwrap()).unwrap();
    assert_eq!(single.len(), 5);
    assert!(sample_warped(&m, &Lattice::new(2, 2, 5.0).unwrap()).is_err());
}

#[test]
fn smoothed_cone_lattice_matches_the_developed_cone() {
    let c = 0.25;
    let m = rescaled_cone(c, 0.1, 1.0, 3.0).unwrap();
    let lat = Lattice::new(4, 8, 2.0).unwrap();
    let x = sample_warped(&m, &lat).unwrap();
    // On the linear part the cone unrolls to a plane sector with apex at s0,
    // and the angle √c ψ ≤ π/2 keeps every geodesic off the rounded tip.
    let s0 = SmoothedCone::new(c, 0.1).unwrap().apex_offset();
    let mut worst = 0.0f64;
    for p in 1..lat.len() {
        for q in 1..lat.len() {
            let ((r, a), (s, b)) = (lat.point(p), lat.point(q));
            let psi = (a - b).abs().min(2.0 * PI - (a - b).abs());
            let (r, s) = (r - s0, s - s0);
            let exact = (r * r + s * s - 2.0 * r * s * (c.sqrt() * psi).cos()).max(0.0).sqrt();
            worst = worst.max((x.d(p, q) - exact).abs());
        }
    }
    assert!(worst <= 5e-3, "{worst}");
}

#[test]
fn flat_cone_has_no_gap() {
    let opts = ConvergenceOptions {
        c: 1.0,
        scales: vec![1.0, 4.0],
        lattice: Lattice::new(4, 8, 2.0).unwrap(),
        ..Default::default()
    };
    let rep = cone_convergence_experiment(&opts).unwrap();
    assert!(rep.upper.iter().all(|&u| u <= 2e-3), "{:?}", rep.upper);
    assert!(rep.pass);
}

#[test]
fn smoothing_is_visible_at_scale_one() {
    let c = 0.25;
    let lat = Lattice::new(4, 8, 2.0).unwrap();
    let exact = sample_cone(&ConeSpec::new(c, Link::Sphere2).unwrap(), &lat).unwrap();
    let x = sample_warped(&rescaled_cone(c, 0.1, 1.0, 3.0).unwrap(), &lat).unwrap();
    let (lo, hi) = (gh_lower_bound(&x, &exact), gh_upper_bound(&x, &exact));
    assert!(lo > 0.0 && lo <= hi, "{lo} {hi}");
}

#[test]
fn sampling_settles_under_refinement() {
    let lat = Lattice::new(4, 6, 2.0).unwrap();
    let sample = |nodes| sample_warped(&"cone:0.25".parse::<Profile>().unwrap().build(nodes, 6.0).unwrap(), &lat).unwrap();
    let (a, b, c) = (sample(300), sample(600), sample(1200));
    let change = |x: &FiniteMetricSpace, y: &FiniteMetricSpace| {
        let mut m: f64 = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                m = m.max((x.d(i, j) - y.d(i, j)).abs());
            }
        }
        m
    };
    let (coarse, fine) = (change(&a, &b), change(&b, &c));
    assert!(fine <= 1e-3, "{coarse} {fine}");
    assert!(fine <= coarse + 1e-12, "{coarse} {fine}");
}
