//! Hamilton's reaction ODE for the curvature operator in dimension three,
//!
//! ```text
//! α' = α² + βγ,   β' = β² + αγ,   γ' = γ² + αβ,
//! ```
//!
//! the pinching inequalities it is meant to preserve, and a brute-force
//! check of the `N_11 > 0` algebra behind them.
//!
//! `(α, β, γ)` are read as sectional curvatures of the coordinate planes, so
//! the Ricci eigenvalues are the pairwise sums and `R = 2(α + β + γ)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const K_UNIVERSAL: f64 = 100.0;
const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReactionState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ReactionState {
    /// Sorts the eigenvalues.
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        ReactionState {
            alpha: v[0],
            beta: v[1],
            gamma: v[2],
        }
    }

    /// Ricci eigenvalues `(β+γ, α+γ, α+β)`.
    pub fn ricci(&self) -> [f64; 3] {
        [self.beta + self.gamma, self.alpha + self.gamma, self.alpha + self.beta]
    }

    pub fn ric_min(&self) -> f64 {
        self.ricci().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn sec_min(&self) -> f64 {
        self.alpha.min(self.beta).min(self.gamma)
    }

    pub fn scalar(&self) -> f64 {
        2.0 * (self.alpha + self.beta + self.gamma)
    }

    /// `|Ric|²`.
    pub fn ric_norm2(&self) -> f64 {
        self.ricci().iter().map(|l| l * l).sum()
    }

    fn rate(&self) -> [f64; 3] {
        let (a, b, c) = (self.alpha, self.beta, self.gamma);
        [a * a + b * c, b * b + a * c, c * c + a * b]
    }

    fn axpy(&self, h: f64, d: [f64; 3]) -> Self {
        ReactionState {
            alpha: self.alpha + h * d[0],
            beta: self.beta + h * d[1],
            gamma: self.gamma + h * d[2],
        }
    }

    fn max_abs(&self) -> f64 {
        self.alpha.abs().max(self.beta.abs()).max(self.gamma.abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<ReactionState>,
}

fn rk4(y: &ReactionState, dt: f64) -> ReactionState {
    let k1 = y.rate();
    let k2 = y.axpy(0.5 * dt, k1).rate();
    let k3 = y.axpy(0.5 * dt, k2).rate();
    let k4 = y.axpy(dt, k3).rate();
    let d = [0, 1, 2].map(|i| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0);
    y.axpy(dt, d)
}

/// Largest step accepted by [`integrate_reaction`].
pub fn max_reaction_step(s0: &ReactionState) -> f64 {
    1e-3 / s0.gamma.abs().max(1.0)
}

/// Classical RK4 with fixed step; the last step is shortened to land on
/// `t_end`. Blow-up is declared once some eigenvalue exceeds `1/dt`.
pub fn integrate_reaction(s0: ReactionState, t_end: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt <= max_reaction_step(&s0) * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "step {dt} exceeds 1e-3 / max(1, |γ(0)|) = {}",
            max_reaction_step(&s0)
        )));
    }
    if !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut t = vec![0.0];
    let mut states = vec![s0];
    let mut y = s0;
    for n in 0..steps {
        let t0 = n as f64 * dt;
        let h = dt.min(t_end - t0);
        y = rk4(&y, h);
        if !(y.max_abs() <= 1.0 / dt) {
            return Err(Error::BlowUp {
                t_low: t0,
                t_high: t0 + h,
            });
        }
        t.push(t0 + h);
        states.push(y);
    }
    Ok(Trajectory { t, states })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinchingMode {
    Ricci,
    Sectional,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchingParams {
    pub eps0: f64,
    pub k: f64,
    pub t_horizon: f64,
}

impl PinchingParams {
    pub fn new(eps0: f64) -> Result<Self> {
        Self::with_cap(eps0, f64::INFINITY)
    }

    /// Horizon `min(1/k, cap)`.
    pub fn with_cap(eps0: f64, cap: f64) -> Result<Self> {
        if !(eps0 > 0.0 && eps0 < 0.01) {
            return Err(Error::InvalidArgument(format!("eps0 = {eps0} not in (0, 1/100)")));
        }
        Ok(PinchingParams {
            eps0,
            k: K_UNIVERSAL,
            t_horizon: (1.0 / K_UNIVERSAL).min(cap),
        })
    }

    /// Signed distance of the state above the lower bound at time `t`.
    pub fn margin(&self, mode: PinchingMode, s: &ReactionState, t: f64) -> f64 {
        let r = s.scalar();
        match mode {
            PinchingMode::Ricci => {
                let e = self.eps0 * (1.0 + self.k * t);
                s.ric_min() + e + e * t * r
            }
            PinchingMode::Sectional => {
                let e = self.eps0 * (0.5 + self.k * t);
                s.sec_min() + e + e * t * r
            }
        }
    }

    pub fn admissible(&self, mode: PinchingMode, s: &ReactionState) -> bool {
        let floor = -self.eps0 / 4.0;
        match mode {
            PinchingMode::Ricci => s.ric_min() >= floor,
            PinchingMode::Sectional => s.sec_min() >= floor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchingViolation {
    pub t: f64,
    pub margin: f64,
    pub state: ReactionState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    pub mode: PinchingMode,
    pub holds: bool,
    pub min_margin: f64,
    pub samples: usize,
    pub first_violation: Option<PinchingViolation>,
}

pub fn pinching_check(traj: &Trajectory, params: &PinchingParams, mode: PinchingMode) -> Result<PinchingReport> {
    let s0 = traj
        .states
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    if !params.admissible(mode, s0) {
        return Err(Error::HypothesisViolated(format!(
            "{mode:?} lower bound of the initial state is below -eps0/4 = {}",
            -params.eps0 / 4.0
        )));
    }
    let mut min_margin = f64::INFINITY;
    let mut first_violation = None;
    let mut samples = 0;
    for (&t, s) in traj.t.iter().zip(&traj.states) {
        if t > params.t_horizon * (1.0 + 1e-12) {
            break;
        }
        samples += 1;
        let m = params.margin(mode, s, t);
        min_margin = min_margin.min(m);
        if m < 0.0 && first_violation.is_none() {
            first_violation = Some(PinchingViolation { t, margin: m, state: *s });
        }
    }
    Ok(PinchingReport {
        mode,
        holds: first_violation.is_none(),
        min_margin,
        samples,
        first_violation,
    })
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

/// Run `per_chunk` on fixed-size chunks of `0..count` in parallel; results
/// come back in chunk order, so the outcome does not depend on scheduling.
fn chunked<T: Send>(count: usize, seed: u64, per_chunk: impl Fn(&mut ChaCha8Rng, usize) -> T + Sync) -> Vec<T> {
    let chunks = count.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            per_chunk(&mut rng, CHUNK.min(count - c * CHUNK))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: PinchingMode,
    pub eps0: f64,
    pub k: f64,
    pub seed: u64,
    pub samples: usize,
    /// Sampling box for each eigenvalue before sorting.
    pub range: (f64, f64),
    pub t_horizon: f64,
    pub min_margin: f64,
    /// Largest time up to the horizon before which no sample violated the bound.
    pub horizon_passed: f64,
    /// `min R(t) + 3 eps0` over all samples starting with `R ≥ -3 eps0`.
    pub scalar_floor_margin: f64,
    pub violations: Vec<PinchingViolation>,
    pub pass: bool,
}

const MAX_LISTED: usize = 20;

/// Random admissible initial states in `[-eps0/4, 1]³`, each integrated to
/// the horizon and checked against the pinching bound.
pub fn pinching_sweep(params: &PinchingParams, mode: PinchingMode, samples: usize, seed: u64) -> Result<SweepReport> {
    let range = (-params.eps0 / 4.0, 1.0);
    let parts = chunked(samples, seed, |rng, n| -> Result<(f64, f64, f64, Vec<PinchingViolation>)> {
        let mut min_margin = f64::INFINITY;
        let mut horizon = params.t_horizon;
        let mut floor = f64::INFINITY;
        let mut violations = Vec::new();
        let mut done = 0;
        while done < n {
            let s0 = ReactionState::new(
                rng.random_range(range.0..=range.1),
                rng.random_range(range.0..=range.1),
                rng.random_range(range.0..=range.1),
            );
            if !params.admissible(mode, &s0) {
                continue;
            }
            done += 1;
            let dt = max_reaction_step(&s0).min(params.t_horizon / 20.0);
            let traj = integrate_reaction(s0, params.t_horizon, dt)?;
            let rep = pinching_check(&traj, params, mode)?;
            min_margin = min_margin.min(rep.min_margin);
            if let Some(v) = rep.first_violation {
                horizon = horizon.min(v.t);
                violations.push(v);
            }
            if s0.scalar() >= -3.0 * params.eps0 {
                let r = traj.states.iter().map(ReactionState::scalar).fold(f64::INFINITY, f64::min);
                floor = floor.min(r + 3.0 * params.eps0);
            }
        }
        Ok((min_margin, horizon, floor, violations))
    });
    let mut report = SweepReport {
        mode,
        eps0: params.eps0,
        k: params.k,
        seed,
        samples,
        range,
        t_horizon: params.t_horizon,
        min_margin: f64::INFINITY,
        horizon_passed: params.t_horizon,
        scalar_floor_margin: f64::INFINITY,
        violations: Vec::new(),
        pass: true,
    };
    let mut total_violations = 0;
    for part in parts {
        let (m, h, f, v) = part?;
        report.min_margin = report.min_margin.min(m);
        report.horizon_passed = report.horizon_passed.min(h);
        report.scalar_floor_margin = report.scalar_floor_margin.min(f);
        total_violations += v.len();
        report.violations.extend(v.into_iter().take(MAX_LISTED - report.violations.len().min(MAX_LISTED)));
    }
    report.pass = total_violations == 0;
    Ok(report)
}

/// `ε = ε₀(1 + kt)`.
pub fn pinching_eps(eps0: f64, k: f64, t: f64) -> f64 {
    eps0 * (1.0 + k * t)
}

/// The eigenvalue forced by `L_11 = λ + εtR + ε = 0` with `R = λ + μ + ν`.
pub fn n11_lambda(eps: f64, t: f64, mu: f64, nu: f64) -> f64 {
    (-eps * t * (mu + nu) - eps) / (1.0 + eps * t)
}

/// `N_11` in the `σ → 0` limit, term by term:
/// `(μ-ν)² + λ(μ+ν) + 2εt(λ²+μ²+ν²) + εR + kε₀tR + kε₀`.
pub fn n11(eps0: f64, k: f64, t: f64, lambda: f64, mu: f64, nu: f64) -> f64 {
    let eps = pinching_eps(eps0, k, t);
    let r = lambda + mu + nu;
    (mu - nu).powi(2)
        + lambda * (mu + nu)
        + 2.0 * eps * t * (lambda * lambda + mu * mu + nu * nu)
        + eps * r
        + k * eps0 * t * r
        + k * eps0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct N11Sample {
    pub t: f64,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub a: f64,
    pub n11: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct N11Report {
    pub eps0: f64,
    pub k: f64,
    pub seed: u64,
    pub samples: usize,
    /// Range of the curvature scale `a`; samples have `μ + ν ≤ a/100`.
    pub a_range: (f64, f64),
    pub min_n11: f64,
    pub argmin: Option<N11Sample>,
    pub nonpositive: Vec<N11Sample>,
    pub pass: bool,
}

pub const N11_A_RANGE: (f64, f64) = (1e-2, 1e4);

/// One admissible sample, or `None` if the draw is rejected.
fn n11_draw(rng: &mut ChaCha8Rng, eps0: f64, k: f64) -> Option<N11Sample> {
    let t = (1.0 - rng.random::<f64>()) / k;
    let eps = pinching_eps(eps0, k, t);
    let a = N11_A_RANGE.0 * (N11_A_RANGE.1 / N11_A_RANGE.0).powf(rng.random::<f64>());
    let sum = rng.random_range(-eps..=(a / 100.0).max(-eps));
    let lambda = n11_lambda(eps, t, sum / 2.0, sum / 2.0);
    // λ ≤ μ = (sum - d)/2 bounds the spread d.
    let d_max = sum - 2.0 * lambda;
    if d_max < 0.0 || lambda + sum < -eps0 {
        return None;
    }
    let d = rng.random_range(0.0..=d_max);
    let (mu, nu) = ((sum - d) / 2.0, (sum + d) / 2.0);
    Some(N11Sample {
        t,
        lambda,
        mu,
        nu,
        a,
        n11: n11(eps0, k, t, lambda, mu, nu),
    })
}

/// Random admissible `(t, λ, μ, ν)` with `L_11 = 0`; every `N_11` must be positive.
pub fn verify_n11(samples: usize, eps0: f64, k: f64, seed: u64) -> N11Report {
    let parts = chunked(samples, seed, |rng, n| {
        let mut best: Option<N11Sample> = None;
        let mut bad = Vec::new();
        let mut done = 0;
        while done < n {
            let Some(s) = n11_draw(rng, eps0, k) else {
                continue;
            };
            done += 1;
            if !(s.n11 > 0.0) {
                bad.push(s);
            }
            if best.is_none_or(|b| s.n11 < b.n11) {
                best = Some(s);
            }
        }
        (best, bad)
    });
    let mut argmin: Option<N11Sample> = None;
    let mut nonpositive = Vec::new();
    let mut count = 0;
    for (best, bad) in parts {
        if let Some(b) = best {
            if argmin.is_none_or(|a| b.n11 < a.n11) {
                argmin = Some(b);
            }
        }
        count += bad.len();
        nonpositive.extend(bad.into_iter().take(MAX_LISTED.saturating_sub(nonpositive.len())));
    }
    N11Report {
        eps0,
        k,
        seed,
        samples,
        a_range: N11_A_RANGE,
        min_n11: argmin.map_or(f64::INFINITY, |a| a.n11),
        argmin,
        nonpositive,
        pass: count == 0 && samples > 0,
    }
}
