//! Finite metric spaces and Gromov–Hausdorff distance bounds.
//!
//! `d_GH(X, Y) = ½ inf_R dis R` over correspondences `R ⊂ X × Y`. A minimal
//! correspondence is always the union of the graphs of some `f: X → Y` and
//! `g: Y → X`, which is what the exact search enumerates.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::surface_distance;
use crate::profiles::{Profile, SmoothedCone};
use crate::warped::{RadialGrid, WarpedMetric};

pub const TRIANGLE_TOL: f64 = 1e-9;
pub const CLOSURE_TOL: f64 = 1e-6;
pub const EXACT_CAP: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<Vec<f64>>,
    base: usize,
}

impl FiniteMetricSpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>, base: usize) -> Result<Self> {
        let n = labels.len();
        if n == 0 || dist.len() != n || dist.iter().any(|r| r.len() != n) || base >= n {
            return Err(Error::InvalidArgument("distance matrix shape does not match the labels".into()));
        }
        let scale = dist.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..n {
            if dist[i][i] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let d = dist[i][j];
                if !(d >= 0.0 && d.is_finite()) || (d - dist[j][i]).abs() > TRIANGLE_TOL * scale {
                    return Err(Error::InvalidArgument(format!("entry ({i}, {j}) = {d} is not a symmetric distance")));
                }
                if i != j && d <= TRIANGLE_TOL * scale {
                    return Err(Error::InvalidArgument(format!("points {i} and {j} coincide")));
                }
            }
        }
        let excess = triangle_excess(&dist);
        if excess > TRIANGLE_TOL * scale {
            return Err(Error::MetricViolation { excess });
        }
        Ok(FiniteMetricSpace { labels, dist, base })
    }

    /// Labels `0, 1, …` and base point 0.
    pub fn from_matrix(dist: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..dist.len()).map(|i| i.to_string()).collect();
        Self::new(labels, dist, 0)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn diam(&self) -> f64 {
        self.dist.iter().flatten().fold(0.0, |m: f64, &v| m.max(v))
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("scale {lambda}")));
        }
        Ok(FiniteMetricSpace {
            labels: self.labels.clone(),
            dist: self.dist.iter().map(|r| r.iter().map(|v| v * lambda).collect()).collect(),
            base: self.base,
        })
    }

    /// CSV matrix with a header row of labels; the base point comes first.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.labels)?;
        for row in &self.dist {
            w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let labels: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut dist = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad distance '{v}'"))))
                .collect::<Result<Vec<f64>>>()?;
            dist.push(row);
        }
        Self::new(labels, dist, 0)
    }
}

fn triangle_excess(d: &[Vec<f64>]) -> f64 {
    let n = d.len();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                worst = worst.max(d[i][j] - d[i][k] - d[k][j]);
            }
        }
    }
    worst
}

/// Link of a metric cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Round unit two-sphere; points are unit vectors in `ℝ³`.
    Sphere2,
    /// `ℝP³`; points are unit vectors in `ℝ⁴` representing `±v`.
    Rp3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub c: f64,
    pub link: Link,
}

impl ConeSpec {
    pub fn new(c: f64, link: Link) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::InvalidArgument(format!("cone parameter {c} not in (0, 1]")));
        }
        Ok(ConeSpec { c, link })
    }

    /// Link distance of two unit vectors.
    pub fn link_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let dim = match self.link {
            Link::Sphere2 => 3,
            Link::Rp3 => 4,
        };
        if x.len() != dim || y.len() != dim {
            return Err(Error::InvalidArgument(format!("link points must have {dim} coordinates")));
        }
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let norms = (x.iter().map(|a| a * a).sum::<f64>() * y.iter().map(|a| a * a).sum::<f64>()).sqrt();
        let theta = (dot / norms).clamp(-1.0, 1.0).acos();
        Ok(match self.link {
            Link::Sphere2 => theta,
            Link::Rp3 => theta.min(PI - theta),
        })
    }

    /// `√(r² + s² − 2rs cos(min(√c ψ, π)))`.
    pub fn distance_psi(&self, r: f64, s: f64, psi: f64) -> f64 {
        let angle = (self.c.sqrt() * psi).min(PI);
        (r * r + s * s - 2.0 * r * s * angle.cos()).max(0.0).sqrt()
    }

    pub fn distance(&self, r: f64, x: &[f64], s: f64, y: &[f64]) -> Result<f64> {
        if r < 0.0 || s < 0.0 {
            return Err(Error::InvalidArgument("cone radii must be nonnegative".into()));
        }
        Ok(self.distance_psi(r, s, self.link_distance(x, y)?))
    }
}

pub fn cone_distance(spec: &ConeSpec, r: f64, x: &[f64], s: f64, y: &[f64]) -> Result<f64> {
    spec.distance(r, x, s, y)
}

/// The tip, then `n_radial` radii `r_max k / n_radial`, each with
/// `n_angular` points equally spaced on one great circle of the fiber.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub n_radial: usize,
    pub n_angular: usize,
    pub r_max: f64,
}

impl Lattice {
    pub fn new(n_radial: usize, n_angular: usize, r_max: f64) -> Result<Self> {
        if n_radial == 0 || n_angular == 0 || !(r_max > 0.0) {
            return Err(Error::InvalidArgument("lattice needs positive sizes and radius".into()));
        }
        Ok(Lattice { n_radial, n_angular, r_max })
    }

    pub fn len(&self) -> usize {
        1 + self.n_radial * self.n_angular
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(radius, angle)` of point `p`.
    pub fn point(&self, p: usize) -> (f64, f64) {
        if p == 0 {
            return (0.0, 0.0);
        }
        let k = (p - 1) / self.n_angular;
        let j = (p - 1) % self.n_angular;
        (
            self.r_max * (k + 1) as f64 / self.n_radial as f64,
            2.0 * PI * j as f64 / self.n_angular as f64,
        )
    }

    fn labels(&self) -> Vec<String> {
        (0..self.len())
            .map(|p| {
                if p == 0 {
                    "tip".to_string()
                } else {
                    let k = (p - 1) / self.n_angular;
                    let j = (p - 1) % self.n_angular;
                    format!("r{k}a{j}")
                }
            })
            .collect()
    }

    fn angle_steps(&self, p: usize, q: usize) -> usize {
        let (a, b) = ((p - 1) % self.n_angular, (q - 1) % self.n_angular);
        let d = a.abs_diff(b);
        d.min(self.n_angular - d)
    }

    /// Fill the matrix from a distance depending on `(k1, k2, angle steps)`.
    fn fill(&self, d: impl Fn(f64, f64, f64) -> Result<f64> + Sync) -> Result<Vec<Vec<f64>>> {
        let nr = self.n_radial;
        let na = self.n_angular / 2 + 1;
        let radius = |k: usize| self.r_max * (k + 1) as f64 / nr as f64;
        let keys: Vec<(usize, usize, usize)> = (0..nr)
            .flat_map(|a| (a..nr).flat_map(move |b| (0..na).map(move |m| (a, b, m))))
            .collect();
        let vals = keys
            .par_iter()
            .map(|&(a, b, m)| d(radius(a), radius(b), 2.0 * PI * m as f64 / self.n_angular as f64))
            .collect::<Result<Vec<f64>>>()?;
        let idx = |a: usize, b: usize, m: usize| -> f64 {
            let (a, b) = (a.min(b), a.max(b));
            let pos = keys.partition_point(|&key| key < (a, b, m));
            vals[pos]
        };
        let n = self.len();
        let mut out = vec![vec![0.0; n]; n];
        for p in 1..n {
            let (r, _) = self.point(p);
            out[0][p] = r;
            out[p][0] = r;
            for q in p + 1..n {
                let (ka, kb) = ((p - 1) / self.n_angular, (q - 1) / self.n_angular);
                let v = idx(ka, kb, self.angle_steps(p, q));
                out[p][q] = v;
                out[q][p] = v;
            }
        }
        Ok(out)
    }
}

/// Floyd–Warshall closure; returns the largest change.
fn close(d: &mut [Vec<f64>]) -> f64 {
    let n = d.len();
    let mut change = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    change = change.max(d[i][j] - via);
                    d[i][j] = via;
                }
            }
        }
    }
    change
}

/// The lattice on a warped metric, with distances from `surface_distance`.
pub fn sample_warped(m: &WarpedMetric, lattice: &Lattice) -> Result<FiniteMetricSpace> {
    if lattice.r_max > m.s_max() {
        return Err(Error::OutOfDomain {
            r: lattice.r_max,
            s_max: m.s_max(),
        });
    }
    let mut d = lattice.fill(|r, s, psi| {
        if psi == 0.0 {
            Ok((r - s).abs())
        } else {
            surface_distance(m, r, psi, s)
        }
    })?;
    let change = close(&mut d);
    if change > CLOSURE_TOL {
        return Err(Error::MetricViolation { excess: change });
    }
    FiniteMetricSpace::new(lattice.labels(), d, 0)
}

/// The same lattice on the exact cone, apex at the tip.
pub fn sample_cone(spec: &ConeSpec, lattice: &Lattice) -> Result<FiniteMetricSpace> {
    let d = lattice.fill(|r, s, psi| Ok(spec.distance_psi(r, s, psi)))?;
    FiniteMetricSpace::new(lattice.labels(), d, 0)
}

/// Pairs `(x, y)` of a relation between two finite spaces.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    /// Graph of `f: X → Y` together with the transposed graph of `g: Y → X`.
    pub fn from_maps(f: &[usize], g: &[usize]) -> Self {
        let mut pairs: Vec<(usize, usize)> = f.iter().enumerate().map(|(x, &y)| (x, y)).collect();
        pairs.extend(g.iter().enumerate().map(|(y, &x)| (x, y)));
        pairs.sort_unstable();
        pairs.dedup();
        Correspondence { pairs }
    }

    pub fn is_surjective(&self, nx: usize, ny: usize) -> bool {
        let mut sx = vec![false; nx];
        let mut sy = vec![false; ny];
        for &(x, y) in &self.pairs {
            sx[x] = true;
            sy[y] = true;
        }
        sx.iter().all(|&b| b) && sy.iter().all(|&b| b)
    }

    pub fn distortion(&self, x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> f64 {
        let mut worst = 0.0f64;
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            for &(c, d) in &self.pairs[i + 1..] {
                worst = worst.max((x.d(a, c) - y.d(b, d)).abs());
            }
        }
        worst
    }

    /// `{(x, z) : (x, y) ∈ self, (y, z) ∈ other}`.
    pub fn compose(&self, other: &Correspondence) -> Correspondence {
        let mut pairs = Vec::new();
        for &(x, y) in &self.pairs {
            for &(y2, z) in &other.pairs {
                if y == y2 {
                    pairs.push((x, z));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Correspondence { pairs }
    }
}

/// Exhaustive search for `|X|, |Y| ≤ 6`.
pub fn gh_exact_small(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> Result<f64> {
    let size = x.len().max(y.len());
    if size > EXACT_CAP {
        return Err(Error::TooLarge { size, cap: EXACT_CAP });
    }
    let mut cands: Vec<f64> = Vec::new();
    for a in x.matrix().iter().flatten() {
        for b in y.matrix().iter().flatten() {
            cands.push((a - b).abs());
        }
    }
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    // The answer is one of the candidates; find the smallest feasible one.
    let (mut lo, mut hi) = (0, cands.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(x, y, cands[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(0.5 * cands[lo])
}

/// Is there a correspondence with distortion `≤ eps`? Backtracking over
/// `f(0), …, f(nx−1), g(0), …, g(ny−1)`.
fn feasible(x: &FiniteMetricSpace, y: &FiniteMetricSpace, eps: f64) -> bool {
    let (nx, ny) = (x.len(), y.len());
    let ok = |a: (usize, usize), b: (usize, usize)| (x.d(a.0, b.0) - y.d(a.1, b.1)).abs() <= eps;
    fn go(
        k: usize,
        nx: usize,
        ny: usize,
        chosen: &mut Vec<(usize, usize)>,
        ok: &dyn Fn((usize, usize), (usize, usize)) -> bool,
    ) -> bool {
        if k == nx + ny {
            return true;
        }
        let options: Box<dyn Iterator<Item = (usize, usize)>> = if k < nx {
            Box::new((0..ny).map(move |b| (k, b)))
        } else {
            Box::new((0..nx).map(move |a| (a, k - nx)))
        };
        for pair in options {
            if ok(pair, pair) && chosen.iter().all(|&p| ok(p, pair)) {
                chosen.push(pair);
                if go(k + 1, nx, ny, chosen, ok) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    go(0, nx, ny, &mut Vec::with_capacity(nx + ny), &ok)
}

/// Distances from one point, sorted.
fn profile(x: &FiniteMetricSpace, i: usize) -> Vec<f64> {
    let mut v = x.matrix()[i].clone();
    v.sort_by(f64::total_cmp);
    v
}

/// Hausdorff distance of two finite subsets of the line, both sorted.
fn hausdorff_1d(a: &[f64], b: &[f64]) -> f64 {
    let one_sided = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .map(|&v| {
                let k = b.partition_point(|&u| u < v);
                let mut best = f64::INFINITY;
                if k < b.len() {
                    best = best.min(b[k] - v);
                }
                if k > 0 {
                    best = best.min(v - b[k - 1]);
                }
                best
            })
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// `max(½|diam X − diam Y|, ½ max_x min_y H(D_x, D_y), and symmetrically)`,
/// where `D_x` is the set of distances from `x`: a correspondent `y` of `x`
/// must see every distance from `x` within `2ε`.
pub fn gh_lower_bound(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> f64 {
    let px: Vec<Vec<f64>> = (0..x.len()).map(|i| profile(x, i)).collect();
    let py: Vec<Vec<f64>> = (0..y.len()).map(|i| profile(y, i)).collect();
    let side = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        a.iter()
            .map(|pa| b.iter().map(|pb| hausdorff_1d(pa, pb)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let diam = (x.diam() - y.diam()).abs();
    0.5 * diam.max(side(&px, &py)).max(side(&py, &px))
}

/// Greedy matching on distance to the base point, improved by local search
/// on the elements of the worst pair. Returns `½ dis R` and `R`.
pub fn gh_upper_with(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> (f64, Correspondence) {
    let (nx, ny) = (x.len(), y.len());
    let nearest = |v: f64, s: &FiniteMetricSpace| -> usize {
        (0..s.len())
            .min_by(|&a, &b| (s.d(s.base(), a) - v).abs().total_cmp(&(s.d(s.base(), b) - v).abs()))
            .unwrap()
    };
    let mut candidates = Vec::new();
    if x.labels() == y.labels() {
        let id: Vec<usize> = (0..nx).collect();
        candidates.push((id.clone(), id));
    }
    let f: Vec<usize> = (0..nx).map(|a| nearest(x.d(x.base(), a), y)).collect();
    let g: Vec<usize> = (0..ny).map(|b| nearest(y.d(y.base(), b), x)).collect();
    candidates.push((f, g));
    let mut best: Option<(f64, Correspondence)> = None;
    for (mut f, mut g) in candidates {
        let mut dis = Correspondence::from_maps(&f, &g).distortion(x, y);
        for _ in 0..64 {
            let mut improved = false;
            let r = Correspondence::from_maps(&f, &g);
            let worst = worst_pair(&r, x, y);
            let involved: Vec<usize> = [worst.0 .0, worst.1 .0].to_vec();
            for &a in &involved {
                for b in 0..ny {
                    let old = f[a];
                    f[a] = b;
                    let d = Correspondence::from_maps(&f, &g).distortion(x, y);
                    if d < dis {
                        dis = d;
                        improved = true;
                    } else {
                        f[a] = old;
                    }
                }
            }
            let involved: Vec<usize> = [worst.0 .1, worst.1 .1].to_vec();
            for &b in &involved {
                for a in 0..nx {
                    let old = g[b];
                    g[b] = a;
                    let d = Correspondence::from_maps(&f, &g).distortion(x, y);
                    if d < dis {
                        dis = d;
                        improved = true;
                    } else {
                        g[b] = old;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        let r = Correspondence::from_maps(&f, &g);
        if best.as_ref().is_none_or(|(d, _)| dis < *d) {
            best = Some((dis, r));
        }
    }
    let (dis, r) = best.unwrap();
    (0.5 * dis, r)
}

fn worst_pair(r: &Correspondence, x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> ((usize, usize), (usize, usize)) {
    let mut worst = (-1.0, r.pairs[0], r.pairs[0]);
    for (i, &p) in r.pairs.iter().enumerate() {
        for &q in &r.pairs[i..] {
            let v = (x.d(p.0, q.0) - y.d(p.1, q.1)).abs();
            if v > worst.0 {
                worst = (v, p, q);
            }
        }
    }
    (worst.1, worst.2)
}

pub fn gh_upper_bound(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> f64 {
    gh_upper_with(x, y).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub c: f64,
    pub s_moll: f64,
    pub scales: Vec<f64>,
    pub lattice: Lattice,
    /// Extra domain beyond `r_max` so that geodesics never meet the edge.
    pub margin: f64,
    pub noise_band: f64,
    pub target: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            c: 0.25,
            s_moll: crate::profiles::DEFAULT_S_MOLL,
            scales: vec![1.0, 4.0, 16.0, 64.0],
            lattice: Lattice {
                n_radial: 12,
                n_angular: 16,
                r_max: 2.0,
            },
            margin: 1.0,
            noise_band: 0.10,
            target: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub options: ConvergenceOptions,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// `upper[k+1] ≤ (1 + noise_band) upper[k]` for every `k`.
    pub nonincreasing: bool,
    pub below_target: bool,
    pub pass: bool,
}

/// The smoothed cone `(1/i) h` on a graded grid resolving its mollifier.
pub fn rescaled_cone(c: f64, s_moll: f64, scale: f64, s_max: f64) -> Result<WarpedMetric> {
    let cone = SmoothedCone::new(c, s_moll)?.rescaled(scale);
    let h_min = (cone.s_moll / 20.0).min(0.01);
    let grid = RadialGrid::graded(h_min, 0.01, s_max)?;
    Profile::Cone(cone).build_on(grid)
}

pub fn cone_convergence_experiment(opts: &ConvergenceOptions) -> Result<ConvergenceReport> {
    let spec = ConeSpec::new(opts.c, Link::Sphere2)?;
    let exact = sample_cone(&spec, &opts.lattice)?;
    let results = opts
        .scales
        .iter()
        .map(|&i| {
            let m = rescaled_cone(opts.c, opts.s_moll, i, opts.lattice.r_max + opts.margin)?;
            let x = sample_warped(&m, &opts.lattice)?;
            Ok((gh_upper_bound(&x, &exact), gh_lower_bound(&x, &exact)))
        })
        .collect::<Result<Vec<_>>>()?;
    let upper: Vec<f64> = results.iter().map(|r| r.0).collect();
    let lower = results.iter().map(|r| r.1).collect();
    let nonincreasing = upper.windows(2).all(|p| p[1] <= p[0] * (1.0 + opts.noise_band));
    let below_target = upper.last().is_some_and(|&u| u <= opts.target);
    Ok(ConvergenceReport {
        options: opts.clone(),
        pass: nonincreasing && below_target,
        upper,
        lower,
        nonincreasing,
        below_target,
    })
}
