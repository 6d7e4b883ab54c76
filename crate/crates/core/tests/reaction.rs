use curveflow::reaction::{n11, n11_lambda, pinching_eps, max_reaction_step};
use curveflow::{
    integrate_reaction, pinching_check, pinching_sweep, verify_n11, Error, PinchingMode, PinchingParams,
    ReactionState,
};

fn symmetric(c: f64, t: f64) -> f64 {
    c / (1.0 - 2.0 * c * t)
}

#[test]
fn symmetric_solution_matches_closed_form() {
    let c = 1.5;
    let t_end = 0.4 / (2.0 * c);
    let s0 = ReactionState::new(c, c, c);
    let traj = integrate_reaction(s0, t_end, 1e-4).unwrap();
    let last = traj.states.last().unwrap();
    let exact = symmetric(c, t_end);
    for v in [last.alpha, last.beta, last.gamma] {
        assert!(((v - exact) / exact).abs() < 1e-8);
    }
    assert_eq!(last.alpha, last.beta);
    assert_eq!(last.beta, last.gamma);
}

#[test]
fn rk4_is_fourth_order() {
    let c = 1.0;
    let t_end = 0.2;
    let err = |dt: f64| {
        let traj = integrate_reaction(ReactionState::new(c, c, c), t_end, dt).unwrap();
        (traj.states.last().unwrap().gamma - symmetric(c, t_end)).abs()
    };
    let ratio = err(1e-3) / err(5e-4);
    assert!(ratio >= 14.0, "ratio {ratio}");
}

#[test]
fn zero_stays_zero() {
    let traj = integrate_reaction(ReactionState::new(0.0, 0.0, 0.0), 1.0, 1e-3).unwrap();
    assert!(traj.states.iter().all(|s| s.alpha == 0.0 && s.beta == 0.0 && s.gamma == 0.0));
}

#[test]
fn blowup_is_bracketed() {
    let c = 1.0;
    match integrate_reaction(ReactionState::new(c, c, c), 1.0, 1e-3) {
        Err(Error::BlowUp { t_low, t_high }) => {
            assert!(t_low < 0.5 && t_high > 0.49 && t_high - t_low <= 1e-3 + 1e-15);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn step_bound_enforced() {
    let s0 = ReactionState::new(0.0, 1.0, 10.0);
    assert!(integrate_reaction(s0, 0.01, 2.0 * max_reaction_step(&s0)).is_err());
}

#[test]
fn ordering_preserved_and_difference_factorizes() {
    let s0 = ReactionState::new(-0.001, 0.3, 0.5);
    for dt in [1e-3, 5e-4] {
        let traj = integrate_reaction(s0, 0.01, dt).unwrap();
        for s in &traj.states {
            assert!(s.alpha <= s.beta && s.beta <= s.gamma);
        }
        // α = -0.001 needs eps0 ≥ 0.004 for the sectional hypothesis.
        let p = PinchingParams::new(5e-3).unwrap();
        for mode in [PinchingMode::Ricci, PinchingMode::Sectional] {
            assert!(pinching_check(&traj, &p, mode).unwrap().holds);
        }
    }
    // d/dt (β-α) = (β-α)(α+β-γ): compare the rate with a centred difference.
    let traj = integrate_reaction(s0, 0.02, 1e-4).unwrap();
    let gap: Vec<f64> = traj.states.iter().map(|s| s.beta - s.alpha).collect();
    for j in 1..gap.len() - 1 {
        let s = traj.states[j];
        let fd = (gap[j + 1] - gap[j - 1]) / 2e-4;
        let exact = (s.beta - s.alpha) * (s.alpha + s.beta - s.gamma);
        assert!((fd - exact).abs() < 1e-7);
    }
}

#[test]
fn pinching_symmetric_negative_oracle() {
    let eps0 = 1e-3;
    let p = PinchingParams::new(eps0).unwrap();
    let l0 = -eps0 / 12.0;
    let traj = integrate_reaction(ReactionState::new(l0, l0, l0), 0.01, 1e-3).unwrap();
    let rep = pinching_check(&traj, &p, PinchingMode::Ricci).unwrap();
    assert!(rep.holds);
    for (&t, s) in traj.t.iter().zip(&traj.states) {
        let l = l0 / (1.0 - 2.0 * l0 * t);
        assert!((s.alpha - l).abs() < 1e-14);
        let bound = -eps0 * (1.0 + 100.0 * t) * (1.0 + t * 6.0 * l);
        assert!(2.0 * l >= bound);
    }
}

#[test]
fn pinching_hypothesis_gate() {
    let p = PinchingParams::new(1e-3).unwrap();
    let traj = integrate_reaction(ReactionState::new(-1e-3, -1e-3, 1.0), 0.01, 1e-3).unwrap();
    assert!(matches!(
        pinching_check(&traj, &p, PinchingMode::Sectional),
        Err(Error::HypothesisViolated(_))
    ));
    assert!(PinchingParams::new(0.02).is_err());
}

#[test]
fn sweep_small_and_deterministic() {
    let p = PinchingParams::new(1e-3).unwrap();
    for mode in [PinchingMode::Ricci, PinchingMode::Sectional] {
        let a = pinching_sweep(&p, mode, 500, 7).unwrap();
        let b = pinching_sweep(&p, mode, 500, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.pass && a.violations.is_empty());
        assert!(a.scalar_floor_margin >= 0.0);
        assert_eq!(a.horizon_passed, 0.01);
    }
}

#[test]
fn n11_worst_cases() {
    let (eps0, k) = (1e-3, 100.0);
    // μ = ν = 0, t → 0: λ = -ε and N_11 = kε₀ + O(ε₀²).
    let t = 1e-9;
    let eps = pinching_eps(eps0, k, t);
    let l = n11_lambda(eps, t, 0.0, 0.0);
    assert!((l + eps).abs() < 1e-12);
    let v = n11(eps0, k, t, l, 0.0, 0.0);
    assert!((v - k * eps0).abs() < 2.0 * eps0 * eps0);
    // μ + ν = -ε: N_11 ≥ (k-1)ε₀ - O(ε₀²).
    for t in [1e-4, 5e-3, 1e-2] {
        let eps = pinching_eps(eps0, k, t);
        let (mu, nu) = (-eps / 2.0, -eps / 2.0);
        let l = n11_lambda(eps, t, mu, nu);
        let v = n11(eps0, k, t, l, mu, nu);
        assert!(v >= (k - 1.0) * eps0 - 10.0 * eps0 * eps0, "{v}");
    }
}

#[test]
fn n11_sweep_positive() {
    for eps0 in [1e-4, 1e-3, 1e-2 * 0.999] {
        let rep = verify_n11(20_000, eps0, 100.0, 3);
        assert!(rep.pass, "{rep:?}");
        let m = rep.argmin.unwrap();
        assert!(m.lambda <= m.mu && m.mu <= m.nu);
        assert!(m.lambda + m.mu + m.nu >= -eps0 - 1e-15);
    }
}
