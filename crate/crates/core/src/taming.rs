//! Conformal taming `g_i = e^{φ_i(ρ)} g` of a warped metric.
//!
//! With `ρ = s` the factor is radial, so `g_i` is again a warped product:
//! arclength `dσ = e^{f/2} ds` and warp `e^{f/2} w`.
//!
//! The cutoff is normalized, `φ_i(r) = h((r-i)^4_+) - h(0)`, so that it
//! vanishes identically on `B_i` and `g_i = g` there.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::r_bound_ln;
use crate::error::{Error, Result};
use crate::geodesic::ball_volume_at;
use crate::quad::GL5;
use crate::warped::{controlled_growth_check, curvature, CurvatureField, RadialGrid, Topology, WarpedMetric};

/// The tamed metric is cut off where the conformal exponent exceeds this.
pub const F_MAX: f64 = 40.0;
pub const ORACLE_TOL: f64 = 1e-6;
/// Nodes next to an open outer edge excluded from comparisons.
const EDGE: usize = 4;

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_infinite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `exp ∘ ⋯ ∘ exp` (`depth` times).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpComparison {
    pub depth: usize,
}

impl ExpComparison {
    pub fn new(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        Ok(ExpComparison { depth })
    }

    /// `e_0 = x, e_{j+1} = exp(e_j)` for `j < depth`, i.e. `ln h = e_{depth-1}`.
    fn tower(&self, x: f64) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.depth);
        e.push(x);
        for _ in 1..self.depth {
            let last = *e.last().unwrap();
            e.push(last.exp());
        }
        e
    }

    pub fn value(&self, x: f64) -> f64 {
        self.ln_value(x).exp()
    }

    pub fn ln_value(&self, x: f64) -> f64 {
        *self.tower(x).last().unwrap()
    }

    /// `ln h'(x) = e_0 + ⋯ + e_{depth-1}`.
    pub fn ln_d1(&self, x: f64) -> f64 {
        self.tower(x).iter().sum()
    }

    /// `ln(h''/h')`; `h''/h' = 1 + Σ_j e_1 ⋯ e_j`.
    pub fn ln_d2_over_d1(&self, x: f64) -> f64 {
        let e = self.tower(x);
        let mut terms = vec![0.0];
        let mut acc = 0.0;
        for ej in e.iter().take(self.depth - 1) {
            acc += ej;
            terms.push(acc);
        }
        logsumexp(&terms)
    }

    pub fn ln_d2(&self, x: f64) -> f64 {
        self.ln_d1(x) + self.ln_d2_over_d1(x)
    }

    /// `h(y) - h(0)` without cancellation.
    pub fn shifted(&self, y: f64) -> f64 {
        let mut base = 0.0f64;
        let mut d = y;
        for _ in 0..self.depth {
            base = base.exp();
            d = base * d.exp_m1();
        }
        d
    }

    pub fn at_zero(&self) -> f64 {
        self.value(0.0)
    }
}

/// `φ_i(r) = h((r-i)^4_+) - h(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub h: ExpComparison,
    pub index: f64,
}

impl CutoffProfile {
    pub fn new(h: ExpComparison, index: f64) -> Result<Self> {
        if !(index >= 0.0 && index.is_finite()) {
            return Err(Error::InvalidArgument(format!("index {index}")));
        }
        Ok(CutoffProfile { h, index })
    }

    fn u(&self, r: f64) -> f64 {
        (r - self.index).max(0.0)
    }

    /// The unnormalized `h_i(r) = h((r-i)^4_+)`.
    pub fn raw(&self, r: f64) -> f64 {
        self.h.value(self.u(r).powi(4))
    }

    pub fn ln_raw(&self, r: f64) -> f64 {
        self.h.ln_value(self.u(r).powi(4))
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.h.shifted(self.u(r).powi(4))
    }

    /// `ln|φ'|`; `-∞` on `[0, i]`.
    pub fn ln_d1(&self, r: f64) -> f64 {
        let u = self.u(r);
        if u == 0.0 {
            return f64::NEG_INFINITY;
        }
        4f64.ln() + 3.0 * u.ln() + self.h.ln_d1(u.powi(4))
    }

    /// `ln|φ''|` with `φ'' = h'(y) (16 u^6 h''/h' + 12 u^2)`.
    pub fn ln_d2(&self, r: f64) -> f64 {
        let u = self.u(r);
        if u == 0.0 {
            return f64::NEG_INFINITY;
        }
        let y = u.powi(4);
        let lu = u.ln();
        self.h.ln_d1(y) + logsumexp(&[16f64.ln() + 6.0 * lu + self.h.ln_d2_over_d1(y), 12f64.ln() + 2.0 * lu])
    }

    /// `(φ, φ', φ'')` in plain floating point.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        if r <= self.index {
            return [0.0; 3];
        }
        [self.phi(r), self.ln_d1(r).exp(), self.ln_d2(r).exp()]
    }

    /// Smallest `u` with `φ(i + u) ≥ 1`.
    pub fn ramp_width(&self) -> f64 {
        let (mut lo, mut hi) = (0.0, 4.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.phi(self.index + mid) >= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

type RadialFn = Arc<dyn Fn(f64) -> [f64; 3] + Send + Sync>;

/// A radial conformal exponent `f(s)` with its first two derivatives,
/// `ψ = e^f`.
#[derive(Clone)]
pub struct ConformalProfile {
    eval: RadialFn,
}

impl std::fmt::Debug for ConformalProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ConformalProfile")
    }
}

impl ConformalProfile {
    /// `f` must be even about each tip of the metric it is applied to.
    pub fn from_fn(f: impl Fn(f64) -> [f64; 3] + Send + Sync + 'static) -> Self {
        ConformalProfile { eval: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(move |_| [c, 0.0, 0.0])
    }

    pub fn cutoff(p: CutoffProfile) -> Self {
        Self::from_fn(move |r| p.eval(r))
    }

    pub fn eval(&self, s: f64) -> [f64; 3] {
        (self.eval)(s)
    }

    /// `(ψ, ψ', ψ'')` divided by `ψ`.
    pub fn psi_scaled(&self, s: f64) -> [f64; 3] {
        let [_, f1, f2] = self.eval(s);
        [1.0, f1, f2 + f1 * f1]
    }
}

/// Number of leading nodes kept by the tamed metric.
fn kept_nodes(m: &WarpedMetric, prof: &ConformalProfile) -> usize {
    let s = m.s();
    let n = s.len();
    if m.topology() == Topology::Closed {
        return n;
    }
    let mut keep = n;
    for (j, &sj) in s.iter().enumerate() {
        if !(prof.eval(sj)[0] <= F_MAX) {
            keep = j;
            break;
        }
    }
    keep
}

/// `g̃ = e^f g` in its own arclength gauge, truncated where `f > F_MAX`
/// or where the stretched grid would stop being quasi-uniform.
pub fn tame_conformal(m: &WarpedMetric, prof: &ConformalProfile) -> Result<WarpedMetric> {
    let s = m.s();
    let keep = kept_nodes(m, prof);
    let stretch = |x: f64| (0.5 * prof.eval(x)[0]).exp_m1();
    let mut sigma = Vec::with_capacity(keep);
    let mut w = Vec::with_capacity(keep);
    let mut extra = 0.0;
    for j in 0..keep {
        if j > 0 {
            let (a, b) = (s[j - 1], s[j]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            extra += half * GL5.iter().map(|&(x, wt)| wt * stretch(mid + half * x)).sum::<f64>();
        }
        let sj = s[j] + extra;
        if j >= 2 {
            let (h0, h1) = (sigma[j - 1] - sigma[j - 2], sj - sigma[j - 1]);
            if h1 > 2.0 * h0 || h0 > 2.0 * h1 {
                break;
            }
        }
        sigma.push(sj);
        w.push((0.5 * prof.eval(s[j])[0]).exp() * m.w()[j]);
    }
    if sigma.len() < keep && m.topology() == Topology::Closed {
        return Err(Error::GridTooCoarse("conformal factor varies too fast for the grid".into()));
    }
    let grid = RadialGrid::new(sigma, m.topology())?;
    WarpedMetric::new(grid, w, m.fiber())
}

pub fn tame(m: &WarpedMetric, profile: &CutoffProfile) -> Result<WarpedMetric> {
    if m.topology() != Topology::Open {
        return Err(Error::InvalidArgument("taming needs an open topology".into()));
    }
    let s_max = m.s_max();
    if profile.index >= s_max {
        return Ok(m.clone());
    }
    let ramp = profile.ramp_width();
    if profile.index + ramp > s_max {
        return Err(Error::DomainTooSmall(format!(
            "cutoff at {} needs the domain to reach {}, s_max = {s_max}",
            profile.index,
            profile.index + ramp
        )));
    }
    let out = tame_conformal(m, &ConformalProfile::cutoff(*profile))?;
    let reached = m.s()[out.s().len() - 1];
    if reached < profile.index + ramp {
        return Err(Error::DomainTooSmall(format!(
            "the grid resolves the ramp only up to s = {reached}"
        )));
    }
    Ok(out)
}

/// Coefficient of `|∇f|^2` inside the trace term of the conformal Ricci
/// formula, `-½(Δf + c |∇f|^2) g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceSign {
    /// `c = +(n-2)/2`.
    Standard,
    /// `c = -(n-2)/2`.
    AsPrinted,
}

/// Radial data of the base needed by both conformal formulas, on the kept
/// nodes: sectional curvatures and `f'·w'/w` with its tip limit `f''`.
struct Base {
    s: Vec<f64>,
    k_rad: Vec<f64>,
    k_sph: Vec<f64>,
    /// `w'/w`, with `NaN` at tips.
    log_w1: Vec<f64>,
    tips: Vec<bool>,
}

fn base_data(m: &WarpedMetric, keep: usize) -> Result<Base> {
    let cf = curvature(m)?;
    let (w1, _) = m.derivatives();
    let n = m.s().len();
    let tips: Vec<bool> = (0..keep)
        .map(|j| j == 0 || (m.topology() == Topology::Closed && j == n - 1))
        .collect();
    let log_w1 = (0..keep)
        .map(|j| if tips[j] { f64::NAN } else { w1[j] / m.w()[j] })
        .collect();
    Ok(Base {
        s: m.s()[..keep].to_vec(),
        k_rad: cf.k_rad[..keep].to_vec(),
        k_sph: cf.k_sph[..keep].to_vec(),
        log_w1,
        tips,
    })
}

/// `(H_rr, H_fiber)` of a radial function with derivatives `(d1, d2)`;
/// `d1·w'/w → d2` at a tip.
fn radial_hessian(b: &Base, j: usize, d1: f64, d2: f64) -> (f64, f64) {
    if b.tips[j] {
        (d2, d2)
    } else {
        (d2, d1 * b.log_w1[j])
    }
}

fn tamed_arclength(m: &WarpedMetric, prof: &ConformalProfile) -> Result<Vec<f64>> {
    Ok(tame_conformal(m, prof)?.s().to_vec())
}

/// Ricci of `e^f g` from
/// `Ric - (n-2)/2 ∇²f + (n-2)/4 df⊗df - ½(Δf ± (n-2)/2 |∇f|²) g`,
/// as eigenvalues in a `g̃`-orthonormal frame.
pub fn conformal_ricci_formula(m: &WarpedMetric, prof: &ConformalProfile, sign: TraceSign) -> Result<CurvatureField> {
    let sigma = tamed_arclength(m, prof)?;
    let keep = sigma.len();
    let b = base_data(m, keep)?;
    let n = m.dim() as f64;
    let c = match sign {
        TraceSign::Standard => (n - 2.0) / 2.0,
        TraceSign::AsPrinted => -(n - 2.0) / 2.0,
    };
    let mut k_rad = Vec::with_capacity(keep);
    let mut k_sph = Vec::with_capacity(keep);
    for j in 0..keep {
        let [f, f1, f2] = prof.eval(b.s[j]);
        let (h_rr, h_ff) = radial_hessian(&b, j, f1, f2);
        let lap = h_rr + 2.0 * h_ff;
        let ric_rad = 2.0 * b.k_rad[j];
        let ric_sph = b.k_rad[j] + b.k_sph[j];
        let trace = -0.5 * (lap + c * f1 * f1);
        let e = (-f).exp();
        let rr = e * (ric_rad - 0.5 * (n - 2.0) * h_rr + 0.25 * (n - 2.0) * f1 * f1 + trace);
        let rs = e * (ric_sph - 0.5 * (n - 2.0) * h_ff + trace);
        k_rad.push(0.5 * rr);
        k_sph.push(rs - 0.5 * rr);
    }
    Ok(CurvatureField::from_sectional(sigma, k_rad, k_sph))
}

/// Sectional curvature `R̃iem(ẽ_i, ẽ_j, ẽ_i, ẽ_j)` of `ψ g` for an orthonormal
/// pair of a frame diagonalizing `∇²ψ`, term by term from
/// `ψ Riem + ½(g ∘ ∇²ψ) + 3/(4ψ)(g ∘ dψ⊗dψ) + 1/(4ψ)(g ∘ g)|∇ψ|²`.
/// All `ψ`-quantities are passed divided by `ψ`.
#[allow(clippy::too_many_arguments)]
fn shi_sectional(inv_psi: f64, k: f64, hess_ii: f64, hess_jj: f64, grad_i: f64, grad_j: f64, grad2: f64) -> f64 {
    // With i = k, j = l: g_jk = g_il = 0, g_jl = g_ik = 1.
    let hess = 0.5 * (-hess_ii - hess_jj);
    let grads = 0.75 * (grad_j * grad_j + grad_i * grad_i);
    let norm = 0.25 * (0.0 - 1.0) * grad2;
    inv_psi * (k + hess + grads + norm)
}

/// Sectional curvatures of `ψ g` from the Riemann transformation formula.
pub fn conformal_riemann(m: &WarpedMetric, prof: &ConformalProfile) -> Result<CurvatureField> {
    let sigma = tamed_arclength(m, prof)?;
    let keep = sigma.len();
    let b = base_data(m, keep)?;
    let mut k_rad = Vec::with_capacity(keep);
    let mut k_sph = Vec::with_capacity(keep);
    for j in 0..keep {
        let [f, ..] = prof.eval(b.s[j]);
        let [_, p1, p2] = prof.psi_scaled(b.s[j]);
        let (h_rr, h_ff) = radial_hessian(&b, j, p1, p2);
        let inv = (-f).exp();
        k_rad.push(shi_sectional(inv, b.k_rad[j], h_rr, h_ff, p1, 0.0, p1 * p1));
        k_sph.push(shi_sectional(inv, b.k_sph[j], h_ff, h_ff, 0.0, 0.0, p1 * p1));
    }
    Ok(CurvatureField::from_sectional(sigma, k_rad, k_sph))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualRouteReport {
    pub nodes: usize,
    /// Max over nodes of `|formula - direct| / sup|direct|`, per field.
    pub ricci_rel_err: f64,
    pub riemann_rel_err: f64,
    pub worst_s: f64,
}

fn rel_err(a: &[f64], b: &[f64], range: std::ops::Range<usize>) -> (f64, usize) {
    let scale = b[range.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut worst = (0.0, range.start);
    for j in range {
        let e = (a[j] - b[j]).abs() / scale;
        if e > worst.0 {
            worst = (e, j);
        }
    }
    worst
}

/// Both formula routes against the curvature of the tamed metric itself.
pub fn dual_route(m: &WarpedMetric, prof: &ConformalProfile, sign: TraceSign) -> Result<DualRouteReport> {
    let tamed = tame_conformal(m, prof)?;
    let direct = curvature(&tamed)?;
    let ric = conformal_ricci_formula(m, prof, sign)?;
    let riem = conformal_riemann(m, prof)?;
    let n = direct.len();
    let end = match m.topology() {
        Topology::Closed => n,
        Topology::Open => n.saturating_sub(EDGE),
    };
    let mut worst = (0.0, 0);
    let mut ricci = 0.0f64;
    for (a, b) in [(&ric.ric_rad, &direct.ric_rad), (&ric.ric_sph, &direct.ric_sph)] {
        let e = rel_err(a, b, 0..end);
        ricci = ricci.max(e.0);
        if e.0 > worst.0 {
            worst = e;
        }
    }
    let mut riemann = 0.0f64;
    for (a, b) in [(&riem.k_rad, &direct.k_rad), (&riem.k_sph, &direct.k_sph)] {
        let e = rel_err(a, b, 0..end);
        riemann = riemann.max(e.0);
        if e.0 > worst.0 {
            worst = e;
        }
    }
    Ok(DualRouteReport {
        nodes: n,
        ricci_rel_err: ricci,
        riemann_rel_err: riemann,
        worst_s: direct.s[worst.1],
    })
}

/// Conformal Ricci, checked against the direct recomputation.
pub fn conformal_ricci(m: &WarpedMetric, prof: &ConformalProfile) -> Result<CurvatureField> {
    let rep = dual_route(m, prof, TraceSign::Standard)?;
    if rep.ricci_rel_err > ORACLE_TOL {
        return Err(Error::OracleMismatch {
            s: rep.worst_s,
            rel_err: rep.ricci_rel_err,
        });
    }
    conformal_ricci_formula(m, prof, TraceSign::Standard)
}

/// Conformal sectional curvatures, checked against the direct recomputation.
pub fn conformal_riemann_checked(m: &WarpedMetric, prof: &ConformalProfile) -> Result<CurvatureField> {
    let rep = dual_route(m, prof, TraceSign::Standard)?;
    if rep.riemann_rel_err > ORACLE_TOL {
        return Err(Error::OracleMismatch {
            s: rep.worst_s,
            rel_err: rep.riemann_rel_err,
        });
    }
    conformal_riemann(m, prof)
}

/// Minimal `c` with `lhs ≤ c e^{rhs}` on a grid, both sides given as logs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantFit {
    pub index: f64,
    pub ln_c: f64,
    pub c: f64,
    /// Where the bound is tight.
    pub argmax: f64,
    /// False if the tight point is the last grid point.
    pub interior: bool,
}

fn fit_on(index: f64, ys: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<ConstantFit> {
    let mut best = (f64::NEG_INFINITY, ys[0], 0);
    for (k, &y) in ys.iter().enumerate() {
        let v = f(y)?;
        if v > best.0 {
            best = (v, y, k);
        }
    }
    Ok(ConstantFit {
        index,
        ln_c: best.0,
        c: best.0.exp(),
        argmax: best.1,
        interior: best.2 + 1 < ys.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityFit {
    pub name: String,
    pub fits: Vec<ConstantFit>,
    /// `(max c - min c) / min c` over the indices.
    pub spread: f64,
}

impl InequalityFit {
    fn new(name: &str, fits: Vec<ConstantFit>) -> Self {
        let lo = fits.iter().map(|f| f.c).fold(f64::INFINITY, f64::min);
        let hi = fits.iter().map(|f| f.c).fold(0.0f64, f64::max);
        InequalityFit {
            name: name.into(),
            spread: if fits.is_empty() || lo == hi { 0.0 } else { (hi - lo) / lo },
            fits,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaFitReport {
    pub depth: usize,
    pub k: f64,
    pub y_span: f64,
    pub inequalities: Vec<InequalityFit>,
    pub max_spread: f64,
    pub pass: bool,
}

fn check_ln(v: f64, radius: f64) -> Result<f64> {
    if v.is_nan() || v == f64::INFINITY {
        Err(Error::Overflow { radius })
    } else {
        Ok(v)
    }
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect()
}

pub const MAX_SPREAD: f64 = 0.10;

/// Minimal constants of
/// `|r| + |h| + |h'| + |h''| ≤ c e^{kh}`, `|h_i| ≤ c e^{k h_i}`,
/// `|h_i'| ≤ c e^{k h_i}` and `|h_i''| ≤ c e^{k h_i}` (for `y > i`),
/// over `y ∈ [0, i + y_span]`.
pub fn comparison_bounds_fit(
    h: ExpComparison,
    k: f64,
    indices: &[f64],
    y_span: f64,
    samples: usize,
) -> Result<LemmaFitReport> {
    if !(k > 0.0) {
        return Err(Error::InvalidArgument(format!("k = {k}")));
    }
    let base_grid = grid(0.0, y_span, samples);
    let base = fit_on(0.0, &base_grid, |r| {
        let terms = [r.ln(), h.ln_value(r), h.ln_d1(r), h.ln_d2(r)];
        let lhs = logsumexp(&terms);
        Ok(lhs - k * check_ln(h.ln_value(r), r)?.exp())
    })?;
    let mut value = Vec::new();
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    for &i in indices {
        let p = CutoffProfile::new(h, i)?;
        let ys = grid(0.0, i + y_span, samples);
        let tail = grid(i, i + y_span, samples);
        let tail = &tail[1..];
        let ln_e = |y: f64| -> Result<f64> { Ok(k * check_ln(p.ln_raw(y), y)?.exp()) };
        value.push(fit_on(i, &ys, |y| Ok(p.ln_raw(y) - ln_e(y)?))?);
        d1.push(fit_on(i, tail, |y| Ok(p.ln_d1(y) - ln_e(y)?))?);
        d2.push(fit_on(i, tail, |y| Ok(p.ln_d2(y) - ln_e(y)?))?);
    }
    let inequalities = vec![
        InequalityFit::new("base", vec![base]),
        InequalityFit::new("h_i", value),
        InequalityFit::new("h_i'", d1),
        InequalityFit::new("h_i''", d2),
    ];
    let max_spread = inequalities.iter().map(|q| q.spread).fold(0.0, f64::max);
    Ok(LemmaFitReport {
        depth: h.depth,
        k,
        y_span,
        pass: max_spread <= MAX_SPREAD,
        inequalities,
        max_spread,
    })
}

/// Constants of `|φ'| ≤ c e^{φ/8}`, `|φ'|² ≤ c e^{φ/4}`, `|φ''| ≤ c e^{φ/8}`
/// for the normalized cutoffs.
pub fn growth_conditions_fit(h: ExpComparison, indices: &[f64], y_span: f64, samples: usize) -> Result<Vec<InequalityFit>> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut c = Vec::new();
    for &i in indices {
        let p = CutoffProfile::new(h, i)?;
        let tail = grid(i, i + y_span, samples);
        let tail = &tail[1..];
        let phi = |y: f64| -> Result<f64> {
            let v = p.phi(y);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Overflow { radius: y })
            }
        };
        a.push(fit_on(i, tail, |y| Ok(p.ln_d1(y) - phi(y)? / 8.0))?);
        b.push(fit_on(i, tail, |y| Ok(2.0 * p.ln_d1(y) - phi(y)? / 4.0))?);
        c.push(fit_on(i, tail, |y| Ok(p.ln_d2(y) - phi(y)? / 8.0))?);
    }
    Ok(vec![
        InequalityFit::new("|phi'| <= c e^(phi/8)", a),
        InequalityFit::new("|phi'|^2 <= c e^(phi/4)", b),
        InequalityFit::new("|phi''| <= c e^(phi/8)", c),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: f64,
    /// `g_i` and `g` agree bit for bit on every node with `s ≤ i`.
    pub identity_on_ball: bool,
    pub ric_min: f64,
    pub ric_min_at: f64,
    pub riem_sup: f64,
    /// Fitted constant of the curvature majorant
    /// `|Riem|/ψ + c ψ^{-3/4} (ρ+2)(R_B(ρ+2) + (k+1))` beyond `B_i`.
    pub majorant_c: f64,
    /// `|Riem(g_i)|` is nonincreasing beyond its peak outside `B_i`.
    pub tail_decreasing: bool,
    pub tail_peak_at: f64,
    /// Tamed arclength of the ball centers and the unit-ball volumes there.
    pub centers: Vec<f64>,
    pub volumes: Vec<f64>,
    pub nodes: usize,
    pub dual_route: DualRouteReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TamingReport {
    pub normalization: String,
    pub depth: usize,
    pub k: f64,
    pub indices: Vec<IndexReport>,
    /// `c` with `Ric(g_i) ≥ -c` for all indices.
    pub ricci_lower: f64,
    pub ricci_spread: f64,
    pub vtilde0: f64,
    pub vtilde0_spread: f64,
    pub growth: Vec<InequalityFit>,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TamingOptions {
    pub centers: usize,
    /// Ball centers stay where the tamed exponent is at most this.
    pub center_f_max: f64,
    pub growth_span: f64,
}

impl Default for TamingOptions {
    fn default() -> Self {
        TamingOptions {
            centers: 8,
            center_f_max: 4.0,
            growth_span: 1.5,
        }
    }
}

fn spread(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let lo = v.clone().fold(f64::INFINITY, f64::min);
    let hi = v.fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        0.0
    } else {
        (hi - lo) / lo.abs().min(hi.abs())
    }
}

fn verify_index(base: &WarpedMetric, base_cf: &CurvatureField, h: ExpComparison, i: f64, k: f64, opts: &TamingOptions) -> Result<IndexReport> {
    let p = CutoffProfile::new(h, i)?;
    let tamed = tame(base, &p)?;
    let cf = curvature(&tamed)?;
    let prof = ConformalProfile::cutoff(p);
    let dual = dual_route(base, &prof, TraceSign::Standard)?;
    let n = cf.len();
    let end = n.saturating_sub(EDGE);
    let s = base.s();
    let identity_on_ball = (0..n)
        .take_while(|&j| s[j] <= i)
        .all(|j| tamed.s()[j].to_bits() == s[j].to_bits() && tamed.w()[j].to_bits() == base.w()[j].to_bits());
    let (mut ric_min, mut ric_at) = (f64::INFINITY, 0.0);
    for j in 0..end {
        if cf.ric_min(j) < ric_min {
            ric_min = cf.ric_min(j);
            ric_at = cf.s[j];
        }
    }
    let riem_sup = (0..end).map(|j| cf.riem_abs(j)).fold(0.0, f64::max);
    let first = s.partition_point(|&x| x <= i);
    let mut ln_c = f64::NEG_INFINITY;
    for j in first..end {
        let [f, ..] = p.eval(s[j]);
        let excess = cf.riem_abs(j) - base_cf.riem_abs(j) * (-f).exp();
        if excess <= 0.0 {
            continue;
        }
        let r = s[j] + 2.0;
        let kb = base_cf.riem_sup_within(r);
        let ln_rb = r_bound_ln(r, kb, 3);
        let ln_maj = -0.75 * f + r.ln() + logsumexp(&[ln_rb, (k + 1.0).ln()]);
        ln_c = ln_c.max(excess.ln() - ln_maj);
    }
    let peak = (first..end).max_by(|&a, &b| cf.riem_abs(a).total_cmp(&cf.riem_abs(b))).unwrap_or(first);
    let tail_decreasing = (peak..end.saturating_sub(1)).all(|j| cf.riem_abs(j + 1) <= cf.riem_abs(j) * (1.0 + 1e-9));
    let sigma = tamed.s();
    let top_node = (0..n).take_while(|&j| p.eval(s[j])[0] <= opts.center_f_max).last().unwrap_or(0);
    let top = (sigma[top_node] - 1.0).max(0.5);
    let mut centers = vec![0.0];
    for c in 1..opts.centers {
        centers.push(0.5 + (top - 0.5) * (c - 1) as f64 / (opts.centers.max(3) - 2) as f64);
    }
    let volumes = centers
        .iter()
        .map(|&c| ball_volume_at(&tamed, c, 1.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok(IndexReport {
        index: i,
        identity_on_ball,
        ric_min,
        ric_min_at: ric_at,
        riem_sup,
        majorant_c: ln_c.exp(),
        tail_decreasing,
        tail_peak_at: cf.s[peak],
        centers,
        volumes,
        nodes: n,
        dual_route: dual,
    })
}

/// Tame `base` at every index and check the theorem's conclusions.
pub fn verify_taming(base: &WarpedMetric, h: ExpComparison, indices: &[f64], k: f64, opts: &TamingOptions) -> Result<TamingReport> {
    let growth = controlled_growth_check(base, h.depth, k)?;
    if !growth.holds {
        return Err(Error::PreconditionFailed(format!(
            "controlled geometry at infinity fails (curvature witness {:?}, hessian radius {:?})",
            growth.curvature_witness, growth.hessian_radius
        )));
    }
    let base_cf = curvature(base)?;
    let ric0 = base_cf.ric_min_all().into_iter().fold(f64::INFINITY, f64::min);
    if ric0 < -k {
        return Err(Error::PreconditionFailed(format!("min Ricci {ric0} < -k = {}", -k)));
    }
    let reports = indices
        .par_iter()
        .map(|&i| verify_index(base, &base_cf, h, i, k, opts))
        .collect::<Result<Vec<_>>>()?;
    let ricci_lower = reports.iter().map(|r| -r.ric_min).fold(0.0f64, f64::max);
    let ricci_spread = spread(reports.iter().map(|r| r.ric_min));
    let vmins: Vec<f64> = reports
        .iter()
        .map(|r| r.volumes.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let vtilde0 = vmins.iter().copied().fold(f64::INFINITY, f64::min);
    let vtilde0_spread = spread(vmins.iter().copied());
    let growth = growth_conditions_fit(h, indices, opts.growth_span, 2000)?;
    let pass = reports.iter().all(|r| r.identity_on_ball && r.riem_sup.is_finite() && r.tail_decreasing)
        && ricci_spread <= MAX_SPREAD
        && vtilde0 > 0.0
        && vtilde0_spread <= MAX_SPREAD
        && growth.iter().all(|g| g.spread <= MAX_SPREAD);
    Ok(TamingReport {
        normalization: "phi_i(r) = h((r - i)^4_+) - h(0)".into(),
        depth: h.depth,
        k,
        indices: reports,
        ricci_lower,
        ricci_spread,
        vtilde0,
        vtilde0_spread,
        growth,
        pass,
    })
}
