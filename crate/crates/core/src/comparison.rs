//! Jacobi-field growth along a geodesic, the bound function
//! `R_B(r) = r K e^{(nK+1) r}`, and the Hessian of the distance from the tip.
//!
//! Sign convention: `sec(v, w) = Riem(v, w, v, w)`, positive on the sphere.
//! Along `γ` the curvature enters through the symmetric matrix
//! `S_ij(s) = Riem(E_i, γ', E_j, γ')` on the normal space, and the Jacobi
//! equation in a parallel frame reads `f'' = -S f`.

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warped::{curvature, Topology, WarpedMetric};

/// Manifold dimension in the bound `e^{(kn+1) l}`.
pub const DIM: usize = 3;
const STEPS_PER_UNIT: f64 = 2000.0;
/// Shooting is declared degenerate when `Y(l)` nearly loses rank relative to `sup ‖Y‖`.
const MAX_CONDITION: f64 = 1e10;

/// Piecewise-constant normal curvature matrices along a unit-speed
/// geodesic of length `length`; piece `k` covers `[breaks[k], breaks[k+1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobiProblem {
    pub length: f64,
    pub breaks: Vec<f64>,
    pub pieces: Vec<[[f64; 2]; 2]>,
}

impl JacobiProblem {
    pub fn constant(length: f64, s: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(length, vec![0.0, length], vec![s])
    }

    pub fn new(length: f64, breaks: Vec<f64>, pieces: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidArgument(format!("geodesic length {length}")));
        }
        if breaks.len() != pieces.len() + 1
            || breaks[0] != 0.0
            || (breaks[breaks.len() - 1] - length).abs() > 1e-12 * length
            || breaks.windows(2).any(|p| !(p[1] > p[0]))
        {
            return Err(Error::InvalidArgument("breaks must increase from 0 to the length".into()));
        }
        if pieces.iter().any(|m| m[0][1] != m[1][0]) {
            return Err(Error::InvalidArgument("curvature matrices must be symmetric".into()));
        }
        Ok(JacobiProblem { length, breaks, pieces })
    }

    fn matrix(&self, k: usize) -> Matrix2<f64> {
        let m = self.pieces[k];
        Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    /// `sup_s ‖S(s)‖` (operator norm).
    pub fn curvature_bound(&self) -> f64 {
        (0..self.pieces.len())
            .map(|k| {
                let e = SymmetricEigen::new(self.matrix(k)).eigenvalues;
                e[0].abs().max(e[1].abs())
            })
            .fold(0.0, f64::max)
    }

    /// The problem for `λ γ(s/λ)` on the metric `λ² g`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        JacobiProblem {
            length: self.length * lambda,
            breaks: self.breaks.iter().map(|b| b * lambda).collect(),
            pieces: self
                .pieces
                .iter()
                .map(|m| m.map(|row| row.map(|v| v / (lambda * lambda))))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobiResult {
    /// `max_s |X̃(s)|²`, maximized over unit endpoint values `X_q`.
    pub max_norm2: f64,
    pub argmax: f64,
    pub k: f64,
    /// `e^{(kn+1) l}`.
    pub bound: f64,
    pub holds: bool,
    /// The Jacobi fields vanishing at 0 become degenerate somewhere in `(0, l)`.
    pub interior_conjugate: bool,
}

/// Fundamental solution `Y` (`Y(0) = 0`, `Y'(0) = I`) sampled on the RK4 grid.
fn fundamental(p: &JacobiProblem) -> Vec<(f64, Matrix2<f64>)> {
    let mut out = Vec::new();
    let mut y = Matrix2::zeros();
    let mut v = Matrix2::identity();
    out.push((0.0, y));
    for k in 0..p.pieces.len() {
        let (a, b) = (p.breaks[k], p.breaks[k + 1]);
        let s = p.matrix(k);
        let n = ((b - a) * STEPS_PER_UNIT).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for j in 0..n {
            let acc = |y: &Matrix2<f64>| -s * y;
            let (k1y, k1v) = (v, acc(&y));
            let (k2y, k2v) = (v + 0.5 * h * k1v, acc(&(y + 0.5 * h * k1y)));
            let (k3y, k3v) = (v + 0.5 * h * k2v, acc(&(y + 0.5 * h * k2y)));
            let (k4y, k4v) = (v + h * k3v, acc(&(y + h * k3y)));
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            out.push((a + (j + 1) as f64 * h, y));
        }
    }
    out
}

fn op_norm(m: &Matrix2<f64>) -> f64 {
    m.singular_values().max()
}

pub fn jacobi_growth(p: &JacobiProblem) -> Result<JacobiResult> {
    let path = fundamental(p);
    let yl = path.last().unwrap().1;
    let scale = path.iter().map(|(_, y)| op_norm(y)).fold(0.0, f64::max);
    let smin = yl.singular_values().min();
    if !(smin > 0.0) || scale / smin > MAX_CONDITION {
        return Err(Error::ShootingFailed(format!(
            "conjugate point at l = {} (relative size {:.3e})",
            p.length,
            smin / scale
        )));
    }
    let inv = yl.try_inverse().ok_or_else(|| Error::ShootingFailed("singular endpoint map".into()))?;
    let mut best = (0.0, 0.0);
    let det0 = path[1].1.determinant().signum();
    let mut interior_conjugate = false;
    for (s, y) in &path[1..] {
        let v = op_norm(&(y * inv)).powi(2);
        if v > best.0 {
            best = (v, *s);
        }
        if y.determinant().signum() != det0 {
            interior_conjugate = true;
        }
    }
    let k = p.curvature_bound();
    let bound = ((k * DIM as f64 + 1.0) * p.length).exp();
    Ok(JacobiResult {
        max_norm2: best.0,
        argmax: best.1,
        k,
        bound,
        holds: best.0 <= bound,
        interior_conjugate,
    })
}

/// `|X̃(s)|` for one endpoint value, for callers who want the field itself.
pub fn jacobi_field(p: &JacobiProblem, x_q: [f64; 2]) -> Result<Vec<(f64, f64)>> {
    let path = fundamental(p);
    let inv = path
        .last()
        .unwrap()
        .1
        .try_inverse()
        .ok_or_else(|| Error::ShootingFailed("singular endpoint map".into()))?;
    let c = inv * Vector2::new(x_q[0], x_q[1]);
    Ok(path.iter().map(|(s, y)| (*s, (y * c).norm())).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobiSweepReport {
    pub k_max: f64,
    pub l_max: f64,
    pub samples: usize,
    pub seed: u64,
    pub solved: usize,
    pub degenerate: usize,
    pub with_interior_conjugate: usize,
    pub violations: Vec<(JacobiProblem, JacobiResult)>,
    /// `max ln(|X̃|² / bound)` over solved samples; negative when all hold.
    pub worst_ln_ratio: f64,
    pub pass: bool,
}

/// Random profile: 1 to 5 pieces, each `R(θ) diag(a, b) R(θ)^T` with
/// `a, b ∈ [-k, k]`, and `l ∈ (0, l_max]`.
pub fn random_problem(rng: &mut ChaCha8Rng, k_max: f64, l_max: f64) -> JacobiProblem {
    let l = l_max * (1.0 - rng.random::<f64>());
    let pieces = rng.random_range(1..=5usize);
    let mut breaks: Vec<f64> = (1..pieces).map(|_| rng.random::<f64>() * l).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.insert(0, 0.0);
    breaks.push(l);
    breaks.dedup();
    let mats = (0..breaks.len() - 1)
        .map(|_| {
            let a = rng.random_range(-k_max..=k_max);
            let b = rng.random_range(-k_max..=k_max);
            let th = rng.random_range(0.0..std::f64::consts::PI);
            let (sn, cs) = th.sin_cos();
            let m00 = a * cs * cs + b * sn * sn;
            let m11 = a * sn * sn + b * cs * cs;
            let m01 = (a - b) * sn * cs;
            [[m00, m01], [m01, m11]]
        })
        .collect();
    JacobiProblem {
        length: l,
        breaks,
        pieces: mats,
    }
}

pub fn jacobi_sweep(k_max: f64, l_max: f64, samples: usize, seed: u64) -> JacobiSweepReport {
    let results: Vec<(JacobiProblem, Result<JacobiResult>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let p = random_problem(&mut rng, k_max, l_max);
            let r = jacobi_growth(&p);
            (p, r)
        })
        .collect();
    let mut rep = JacobiSweepReport {
        k_max,
        l_max,
        samples,
        seed,
        solved: 0,
        degenerate: 0,
        with_interior_conjugate: 0,
        violations: Vec::new(),
        worst_ln_ratio: f64::NEG_INFINITY,
        pass: true,
    };
    for (p, r) in results {
        match r {
            Ok(r) => {
                rep.solved += 1;
                rep.with_interior_conjugate += r.interior_conjugate as usize;
                rep.worst_ln_ratio = rep.worst_ln_ratio.max(r.max_norm2.ln() - r.bound.ln());
                if !r.holds {
                    rep.violations.push((p, r));
                }
            }
            Err(_) => rep.degenerate += 1,
        }
    }
    rep.pass = rep.violations.is_empty();
    rep
}

/// `R_B(r) = r K e^{(nK+1) r}`.
pub fn r_bound(r: f64, riem_sup_ball: f64, n: usize) -> f64 {
    if r == 0.0 || riem_sup_ball == 0.0 {
        return 0.0;
    }
    r * riem_sup_ball * ((n as f64 * riem_sup_ball + 1.0) * r).exp()
}

/// `ln R_B(r)`, finite far beyond where `R_B` itself overflows.
pub fn r_bound_ln(r: f64, riem_sup_ball: f64, n: usize) -> f64 {
    if r == 0.0 || riem_sup_ball == 0.0 {
        return f64::NEG_INFINITY;
    }
    r.ln() + riem_sup_ball.ln() + (n as f64 * riem_sup_ball + 1.0) * r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    /// Radii tested, `[1, s_top]`.
    pub range: (f64, f64),
    pub samples: usize,
    /// `min_s (w'/w + R_B(s))`; the lower bound holds when this is `≥ 0`.
    pub lower_margin: f64,
    pub lower_holds: bool,
    /// Whether `w'/w ≤ R_B(s)` at every tested radius.
    pub rb_upper_holds: bool,
    /// Minimal `c` in `w'/w ≤ c s (R_B(s) + (k+1))`.
    pub fitted_c: f64,
    /// `k = max(0, -min sec)` over the metric.
    pub k: f64,
}

/// Checks the Hessian of `ρ = s`, whose eigenvalues are `{0, w'/w, w'/w}`.
/// Closed metrics are tested only on their first half, where `ρ` is smooth.
pub fn hessian_rho_check(m: &WarpedMetric) -> Result<HessianReport> {
    let cf = curvature(m)?;
    let (w1, _) = m.derivatives();
    let s = m.s();
    let top = match m.topology() {
        Topology::Open => m.s_max(),
        Topology::Closed => 0.5 * m.s_max(),
    };
    let k = (0..cf.len())
        .map(|j| cf.k_rad[j].min(cf.k_sph[j]))
        .fold(0.0f64, f64::min)
        .abs();
    let mut lower_margin = f64::INFINITY;
    let mut rb_upper = true;
    let mut ln_c = f64::NEG_INFINITY;
    let mut samples = 0;
    for j in 0..s.len() {
        if s[j] < 1.0 || s[j] > top * (1.0 + 1e-12) {
            continue;
        }
        samples += 1;
        let hess = w1[j] / m.w()[j];
        let ln_rb = r_bound_ln(s[j], cf.riem_sup[j], DIM);
        let rb = ln_rb.exp().min(f64::MAX);
        lower_margin = lower_margin.min(hess + rb);
        if hess > rb {
            rb_upper = false;
        }
        if hess > 0.0 {
            let ln_scale = s[j].ln() + logaddexp(ln_rb, (k + 1.0).ln());
            ln_c = ln_c.max(hess.ln() - ln_scale);
        }
    }
    if samples == 0 {
        return Err(Error::DomainTooSmall(format!("no grid radius in [1, {top}]")));
    }
    Ok(HessianReport {
        range: (1.0, top),
        samples,
        lower_margin,
        lower_holds: lower_margin >= 0.0,
        rb_upper_holds: rb_upper,
        fitted_c: ln_c.exp(),
        k,
    })
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_problems_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let p = random_problem(&mut rng, 2.0, 3.0);
            assert!(p.length <= 3.0 && p.curvature_bound() <= 2.0 + 1e-12);
            assert!(JacobiProblem::new(p.length, p.breaks.clone(), p.pieces.clone()).is_ok());
        }
    }
}
