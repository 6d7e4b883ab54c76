//! Distances in a warped product.
//!
//! Two points at radii `s1`, `s2` whose fiber directions are `psi` apart lie
//! on a common totally geodesic surface `ds^2 + w(s)^2 dθ^2`, so their
//! distance is a shortest-path problem on that surface. Along a geodesic θ is
//! monotone, so the search lattice only spans `θ ∈ [0, psi]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::GL5;
use crate::warped::{Topology, WarpedMetric};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistanceOptions {
    /// Largest accepted disagreement between the two refinement levels.
    pub tolerance: f64,
    /// Radial lattice rows at the coarse level.
    pub rows: usize,
    /// Angular lattice intervals at the coarse level.
    pub cols: usize,
    /// Edges join nodes up to this many rows and columns apart.
    pub window: usize,
    /// Path vertices after polishing at the coarse level.
    pub vertices: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            tolerance: 1e-3,
            rows: 24,
            cols: 12,
            window: 3,
            vertices: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    /// Disagreement between the two refinement levels.
    pub tolerance: f64,
    /// Length of the best radial-orbit-radial path; always an upper bound.
    pub upper_bound: f64,
}

/// Geodesic distance between `(s1, psi)` and `(s2, 0)` with default options.
pub fn surface_distance(m: &WarpedMetric, s1: f64, psi: f64, s2: f64) -> Result<f64> {
    surface_distance_with(m, s1, psi, s2, &DistanceOptions::default()).map(|e| e.value)
}

pub fn surface_distance_with(
    m: &WarpedMetric,
    s1: f64,
    psi: f64,
    s2: f64,
    opts: &DistanceOptions,
) -> Result<DistanceEstimate> {
    let s_max = m.s_max();
    for r in [s1, s2] {
        if !(0.0..=s_max).contains(&r) {
            return Err(Error::OutOfDomain { r, s_max });
        }
    }
    if !(0.0..=PI + 1e-12).contains(&psi) {
        return Err(Error::InvalidArgument(format!("fiber angle {psi} outside [0, π]")));
    }
    let radial = (s1 - s2).abs();
    if psi == 0.0 || s1 == 0.0 || s2 == 0.0 {
        return Ok(DistanceEstimate {
            value: radial,
            tolerance: 0.0,
            upper_bound: radial,
        });
    }
    let upper = orbit_bound(m, s1, psi, s2);
    let level = |k: usize| -> f64 {
        let lat = Lattice::for_pair(m, s1, s2, psi, upper, opts.rows * k, opts.cols * k, opts.window);
        let (graph, path) = lat.shortest_path();
        match polish(m, &path, opts.vertices * k) {
            Some(p) => p.min(graph),
            None => graph,
        }
    };
    let coarse = level(1);
    let fine = level(2);
    let diff = (fine - coarse).abs();
    let floor = upper.min(coarse).min(fine);
    if upper <= coarse.min(fine) + opts.tolerance && upper == floor {
        // The orbit path (possibly through the tip) is at least as short as
        // anything the lattice found.
        return Ok(DistanceEstimate {
            value: upper,
            tolerance: (fine.min(coarse) - upper).max(0.0),
            upper_bound: upper,
        });
    }
    if diff > opts.tolerance {
        return Err(Error::NotConverged {
            difference: diff,
            tolerance: opts.tolerance,
        });
    }
    let extrapolated = fine + (fine - coarse) / 15.0;
    let value = extrapolated.min(fine).min(upper).max(radial);
    Ok(DistanceEstimate {
        value,
        tolerance: diff,
        upper_bound: upper,
    })
}

/// Shortest path that runs radially to some radius, along the fiber circle
/// there, and radially back out.
pub fn orbit_bound(m: &WarpedMetric, s1: f64, psi: f64, s2: f64) -> f64 {
    let lo = s1.min(s2);
    let hi = s1.max(s2);
    let mut best = s1 + s2;
    let w = m.w();
    for (j, &s) in m.s().iter().enumerate() {
        let len = (s1 - s).abs() + (s - s2).abs() + w[j].abs() * psi;
        best = best.min(len);
    }
    for s in [lo, hi] {
        let (ws, _) = m.eval(s);
        best = best.min(hi - lo + ws.abs() * psi);
    }
    best
}

/// Length of the curve from `a` to `b` (in `(s, θ)`) that follows the
/// geodesic equation to second order about the midpoint.
fn arc_length(m: &WarpedMetric, a: (f64, f64), b: (f64, f64)) -> f64 {
    let ds = b.0 - a.0;
    let dt = b.1 - a.1;
    let (ka, kb) = bend(m, a, b);
    GL5.iter()
        .map(|&(x, wt)| {
            let tau = 0.5 * (x + 1.0);
            let s = a.0 + ds * tau + 0.5 * ka * (tau * tau - tau);
            let sp = ds + ka * (tau - 0.5);
            let tp = dt + kb * (tau - 0.5);
            let (w, _) = m.eval(s);
            0.5 * wt * (sp * sp + w * w * tp * tp).sqrt()
        })
        .sum()
}

/// Second-derivative correction `(s'', θ'')` of the geodesic through the
/// midpoint of `a`–`b`, parametrized over `[0, 1]`.
fn bend(m: &WarpedMetric, a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let ds = b.0 - a.0;
    let dt = b.1 - a.1;
    if dt == 0.0 {
        return (0.0, 0.0);
    }
    let mid = 0.5 * (a.0 + b.0);
    // The expansion needs the segment to be short compared with its
    // distance to a tip.
    let ratio = tip_ratio(m, a, b) / 2.0;
    let damp = 1.0 / (1.0 + ratio.powi(8));
    let (w, w1) = m.eval(mid);
    if !(w > 0.0) {
        return (0.0, 0.0);
    }
    (damp * w * w1 * dt * dt, -2.0 * damp * (w1 / w) * ds * dt)
}

/// Coordinate length of a segment over the distance of its midpoint to the
/// nearest tip.
fn tip_ratio(m: &WarpedMetric, a: (f64, f64), b: (f64, f64)) -> f64 {
    let mid = 0.5 * (a.0 + b.0);
    ((b.0 - a.0).powi(2) + (mid * (b.1 - a.1)).powi(2)).sqrt() / tip_room(m, mid)
}

fn tip_room(m: &WarpedMetric, s: f64) -> f64 {
    match m.topology() {
        Topology::Open => s,
        Topology::Closed => s.min(m.s_max() - s),
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Structured `(s, θ)` lattice on the surface. When the first row is the
/// tip it is a single node.
pub struct Lattice {
    rows: Vec<f64>,
    ncols: usize,
    dtheta: f64,
    window: usize,
    tip: bool,
    /// `weights[r][dr + K][|dc|]`: edge length from row `r` to row `r + dr`.
    weights: Vec<Vec<Vec<f64>>>,
    source: (usize, usize),
    target: (usize, usize),
}

impl Lattice {
    #[allow(clippy::too_many_arguments)]
    fn for_pair(
        m: &WarpedMetric,
        s1: f64,
        s2: f64,
        psi: f64,
        upper: f64,
        rows: usize,
        cols: usize,
        window: usize,
    ) -> Self {
        // Any point on a path no longer than `upper` has radius within these
        // bounds.
        let top = (0.5 * (s1 + s2 + upper)).min(m.s_max());
        let bottom = (0.5 * (s1 + s2 - upper)).max(0.0);
        let mut r = uniform_rows(bottom, top, rows, &[s1, s2]);
        if bottom > 0.0 && r[0] > bottom {
            r.insert(0, bottom);
        }
        let src_row = r.iter().position(|&v| v == s1).unwrap();
        let dst_row = r.iter().position(|&v| v == s2).unwrap();
        let mut lat = Lattice::new(m, r, cols + 1, psi / cols as f64, window);
        lat.source = (src_row, cols);
        lat.target = (dst_row, 0);
        lat
    }

    fn new(m: &WarpedMetric, rows: Vec<f64>, ncols: usize, dtheta: f64, window: usize) -> Self {
        let tip = rows[0] == 0.0;
        let k = window as isize;
        let weights = (0..rows.len())
            .map(|r| {
                (-k..=k)
                    .map(|dr| {
                        let r2 = r as isize + dr;
                        (0..=window)
                            .map(|dc| {
                                if r2 < 0 || r2 >= rows.len() as isize || (dr == 0 && dc == 0) {
                                    return f64::INFINITY;
                                }
                                let (a, b) = (rows[r], rows[r2 as usize]);
                                if tip && (r == 0 || r2 == 0) {
                                    return (a - b).abs();
                                }
                                arc_length(m, (a, 0.0), (b, dc as f64 * dtheta))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Lattice {
            rows,
            ncols,
            dtheta,
            window,
            tip,
            weights,
            source: (0, 0),
            target: (0, 0),
        }
    }

    fn id(&self, r: usize, c: usize) -> usize {
        if self.tip {
            if r == 0 {
                0
            } else {
                1 + (r - 1) * self.ncols + c
            }
        } else {
            r * self.ncols + c
        }
    }

    fn coords(&self, id: usize) -> (usize, usize) {
        if self.tip {
            if id == 0 {
                (0, 0)
            } else {
                (1 + (id - 1) / self.ncols, (id - 1) % self.ncols)
            }
        } else {
            (id / self.ncols, id % self.ncols)
        }
    }

    fn node_count(&self) -> usize {
        if self.tip {
            1 + (self.rows.len() - 1) * self.ncols
        } else {
            self.rows.len() * self.ncols
        }
    }

    /// Single-source Dijkstra; returns distances and predecessors.
    fn dijkstra(&self, src: usize) -> (Vec<f64>, Vec<usize>) {
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Item(0.0, src));
        let k = self.window as isize;
        let nrows = self.rows.len() as isize;
        let ncols = self.ncols as isize;
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            let (r, c) = self.coords(u);
            let at_tip = self.tip && r == 0;
            for dr in -k..=k {
                let r2 = r as isize + dr;
                if r2 < 0 || r2 >= nrows {
                    continue;
                }
                let row_w = &self.weights[r][(dr + k) as usize];
                let (c_lo, c_hi) = if at_tip {
                    (0, ncols - 1)
                } else {
                    ((c as isize - k).max(0), (c as isize + k).min(ncols - 1))
                };
                for c2 in c_lo..=c_hi {
                    let dc = (c2 - c as isize).unsigned_abs();
                    let wgt = if at_tip || (self.tip && r2 == 0) {
                        row_w[0]
                    } else {
                        row_w[dc]
                    };
                    if !wgt.is_finite() {
                        continue;
                    }
                    let v = self.id(r2 as usize, c2 as usize);
                    let nd = d + wgt;
                    if nd < dist[v] {
                        dist[v] = nd;
                        prev[v] = u;
                        heap.push(Item(nd, v));
                    }
                    if self.tip && r2 == 0 {
                        break;
                    }
                }
            }
        }
        (dist, prev)
    }

    fn shortest_path(&self) -> (f64, Vec<(f64, f64)>) {
        let src = self.id(self.source.0, self.source.1);
        let dst = self.id(self.target.0, self.target.1);
        let (dist, prev) = self.dijkstra(src);
        let mut path = Vec::new();
        let mut u = dst;
        loop {
            let (r, c) = self.coords(u);
            path.push((self.rows[r], c as f64 * self.dtheta));
            if u == src || prev[u] == usize::MAX {
                break;
            }
            u = prev[u];
        }
        path.reverse();
        // Through the tip the angle is arbitrary; put it on the next column.
        for k in 0..path.len() {
            if path[k].0 == 0.0 && k + 1 < path.len() {
                path[k].1 = path[k + 1].1;
            }
        }
        (dist[dst], path)
    }
}

/// Uniform rows on `[a, b]` with the `exact` radii inserted; uniform rows
/// closer than a third of the spacing to an inserted one are dropped.
fn uniform_rows(a: f64, b: f64, n: usize, exact: &[f64]) -> Vec<f64> {
    let h = (b - a) / n as f64;
    let mut rows: Vec<f64> = (0..=n)
        .map(|j| a + j as f64 * h)
        .filter(|&v| exact.iter().all(|&e| (v - e).abs() > h / 3.0))
        .collect();
    rows.extend_from_slice(exact);
    rows.sort_by(|x, y| x.total_cmp(y));
    rows.dedup();
    if a == 0.0 && rows[0] != 0.0 {
        rows.insert(0, 0.0);
    }
    rows
}

/// Straighten a lattice path into a geodesic: the path is resampled to
/// `vertices` segments and the discrete energy `Σ ℓ_k^2` is minimized by
/// damped Newton iteration. Returns the length, or `None` on failure.
fn polish(m: &WarpedMetric, path: &[(f64, f64)], vertices: usize) -> Option<f64> {
    if path.len() < 2 {
        return None;
    }
    let (lo, hi) = clamp_range(m);
    // Lattice paths may run through a tip, where θ is meaningless; drop
    // those vertices so the path only comes close to it.
    let last = path.len() - 1;
    let path: Vec<(f64, f64)> = path
        .iter()
        .enumerate()
        .filter(|&(k, p)| k == 0 || k == last || (p.0 > lo && p.0 < hi))
        .map(|(_, &p)| p)
        .collect();
    let scale = path.iter().fold(0.0f64, |a, p| a.max(p.0));
    let mut pts = resample(&path, vertices.max(2));
    loop {
        // Weighting the energy by the distance to the nearest tip makes the
        // minimizer grade its segments toward the tip.
        let weights: Vec<f64> = pts
            .windows(2)
            .map(|p| tip_room(m, 0.5 * (p[0].0 + p[1].0)).max(1e-6 * scale))
            .collect();
        minimize_energy(m, &mut pts, &weights, lo, hi)?;
        if pts.windows(2).all(|p| tip_ratio(m, p[0], p[1]) <= 0.1) {
            break;
        }
        let closest = pts.iter().fold(f64::INFINITY, |a, p| a.min(tip_room(m, p.0)));
        if pts.len() > 2048 || closest < 1e-4 * scale {
            // Effectively through the tip: the orbit bound covers this.
            return None;
        }
        pts = resample(&pts, 2 * (pts.len() - 1));
    }
    Some(pts.windows(2).map(|p| arc_length(m, p[0], p[1])).sum())
}

fn energy(m: &WarpedMetric, pts: &[(f64, f64)], weights: &[f64]) -> f64 {
    pts.windows(2)
        .zip(weights)
        .map(|(p, wt)| arc_length(m, p[0], p[1]).powi(2) / wt)
        .sum()
}

/// Gradient and Hessian of `ℓ(a, b)^2` in `(a.s, a.θ, b.s, b.θ)` by central
/// differences.
fn segment_derivatives(
    m: &WarpedMetric,
    a: (f64, f64),
    b: (f64, f64),
    h: [f64; 4],
) -> ([f64; 4], [[f64; 4]; 4]) {
    let x0 = [a.0, a.1, b.0, b.1];
    let e = |x: &[f64; 4]| arc_length(m, (x[0], x[1]), (x[2], x[3])).powi(2);
    let shift = |i: usize, di: f64, j: usize, dj: f64| {
        let mut x = x0;
        x[i] += di;
        x[j] += dj;
        e(&x)
    };
    let e0 = e(&x0);
    let mut g = [0.0; 4];
    let mut hess = [[0.0; 4]; 4];
    for i in 0..4 {
        let p = shift(i, h[i], i, 0.0);
        let q = shift(i, -h[i], i, 0.0);
        g[i] = (p - q) / (2.0 * h[i]);
        hess[i][i] = (p - 2.0 * e0 + q) / (h[i] * h[i]);
        for j in 0..i {
            let v = (shift(i, h[i], j, h[j]) - shift(i, h[i], j, -h[j]) - shift(i, -h[i], j, h[j])
                + shift(i, -h[i], j, -h[j]))
                / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    (g, hess)
}

fn minimize_energy(
    m: &WarpedMetric,
    pts: &mut [(f64, f64)],
    weights: &[f64],
    lo: f64,
    hi: f64,
) -> Option<()> {
    use nalgebra::{Matrix2, Vector2};
    let n = pts.len() - 1;
    if n < 2 {
        return Some(());
    }
    let scale = pts.iter().fold(0.0f64, |a, p| a.max(p.0.abs())).max(1e-300);
    let h = [1e-4 * scale, 1e-4, 1e-4 * scale, 1e-4];
    let mut mu = 0.0;
    let mut e_cur = energy(m, pts, weights);
    for _ in 0..100 {
        // Block-tridiagonal system over the interior vertices 1..n-1.
        let mut diag = vec![Matrix2::zeros(); n + 1];
        let mut upper = vec![Matrix2::zeros(); n + 1];
        let mut grad = vec![Vector2::zeros(); n + 1];
        for k in 0..n {
            let (mut g, mut hs) = segment_derivatives(m, pts[k], pts[k + 1], h);
            for i in 0..4 {
                g[i] /= weights[k];
                for j in 0..4 {
                    hs[i][j] /= weights[k];
                }
            }
            grad[k] += Vector2::new(g[0], g[1]);
            grad[k + 1] += Vector2::new(g[2], g[3]);
            diag[k] += Matrix2::new(hs[0][0], hs[0][1], hs[1][0], hs[1][1]);
            diag[k + 1] += Matrix2::new(hs[2][2], hs[2][3], hs[3][2], hs[3][3]);
            upper[k] += Matrix2::new(hs[0][2], hs[0][3], hs[1][2], hs[1][3]);
        }
        let gnorm = (1..n).map(|k| grad[k].amax()).fold(0.0, f64::max);
        let mut accepted = false;
        for _ in 0..30 {
            let Some(step) = solve_block_tridiagonal(&diag, &upper, &grad, n, mu) else {
                mu = if mu == 0.0 { 1e-6 * (1.0 + gnorm) } else { mu * 10.0 };
                continue;
            };
            let mut trial = pts.to_vec();
            for k in 1..n {
                trial[k].0 = (trial[k].0 - step[k][0]).clamp(lo, hi);
                trial[k].1 -= step[k][1];
            }
            let e_new = energy(m, &trial, weights);
            if e_new.is_finite() && e_new <= e_cur * (1.0 + 1e-15) {
                let moved = (1..n)
                    .map(|k| (step[k][0] / scale).abs().max(step[k][1].abs()))
                    .fold(0.0, f64::max);
                pts.copy_from_slice(&trial);
                e_cur = e_new;
                mu *= 0.1;
                accepted = true;
                if moved < 1e-11 {
                    return Some(());
                }
                break;
            }
            mu = if mu == 0.0 { 1e-6 * (1.0 + gnorm) } else { mu * 10.0 };
        }
        if !accepted {
            return if gnorm < 1e-9 * e_cur { Some(()) } else { None };
        }
    }
    None
}

/// Solve `(H + mu I) x = g` for block-tridiagonal symmetric `H` with 2x2
/// blocks on interior indices `1..n`.
fn solve_block_tridiagonal(
    diag: &[nalgebra::Matrix2<f64>],
    upper: &[nalgebra::Matrix2<f64>],
    rhs: &[nalgebra::Vector2<f64>],
    n: usize,
    mu: f64,
) -> Option<Vec<nalgebra::Vector2<f64>>> {
    use nalgebra::{Matrix2, Vector2};
    let mut c = vec![Matrix2::zeros(); n + 1];
    let mut d = vec![Vector2::zeros(); n + 1];
    for k in 1..n {
        let mut a = diag[k] + Matrix2::identity() * mu;
        let mut r = rhs[k];
        if k > 1 {
            let lower = upper[k - 1].transpose();
            a -= lower * c[k - 1];
            r -= lower * d[k - 1];
        }
        let inv = a.try_inverse()?;
        c[k] = inv * upper[k];
        d[k] = inv * r;
    }
    let mut x = vec![Vector2::zeros(); n + 1];
    for k in (1..n).rev() {
        x[k] = if k + 1 < n { d[k] - c[k] * x[k + 1] } else { d[k] };
    }
    Some(x)
}

/// Radii a polished path may occupy: tips are approached but never reached.
fn clamp_range(m: &WarpedMetric) -> (f64, f64) {
    let delta = 1e-6 * m.s_max();
    match m.topology() {
        Topology::Open => (delta, m.s_max()),
        Topology::Closed => (delta, m.s_max() - delta),
    }
}

/// `n + 1` points equally spaced along the polyline in the flat `(s, θ)`
/// parameter.
fn resample(path: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let mut cum = vec![0.0];
    for p in path.windows(2) {
        let d = ((p[1].0 - p[0].0).powi(2) + (p[1].0.max(p[0].0) * (p[1].1 - p[0].1)).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for k in 0..=n {
        let target = total * k as f64 / n as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let f = if span > 0.0 { (target - cum[seg]) / span } else { 0.0 };
        let a = path[seg];
        let b = path[seg + 1];
        out.push((a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1)));
    }
    out[0] = path[0];
    out[n] = *path.last().unwrap();
    out
}

/// Lattice-path distances from `(s_c, θ = 0)` to every node of an
/// `(s, θ)` lattice with `θ ∈ [0, theta_top]`.
pub struct DistanceField {
    pub rows: Vec<f64>,
    pub thetas: Vec<f64>,
    /// `dist[r][c]`.
    pub dist: Vec<Vec<f64>>,
}

impl DistanceField {
    pub fn new(
        m: &WarpedMetric,
        s_c: f64,
        reach: f64,
        theta_top: f64,
        rows: usize,
        cols: usize,
        window: usize,
    ) -> Result<Self> {
        let s_max = m.s_max();
        if !(0.0..=s_max).contains(&s_c) {
            return Err(Error::OutOfDomain { r: s_c, s_max });
        }
        let top = (s_c + reach).min(s_max);
        let bottom = (s_c - reach).max(0.0);
        let r = uniform_rows(bottom, top, rows, &[s_c]);
        let dtheta = theta_top / cols as f64;
        let lat = Lattice::new(m, r.clone(), cols + 1, dtheta, window);
        let src_row = r.iter().position(|&v| v == s_c).unwrap();
        let (d, _) = lat.dijkstra(lat.id(src_row, 0));
        let dist = (0..r.len())
            .map(|i| (0..=cols).map(|c| d[lat.id(i, c)]).collect())
            .collect();
        Ok(DistanceField {
            rows: r,
            thetas: (0..=cols).map(|c| c as f64 * dtheta).collect(),
            dist,
        })
    }

    /// Largest fiber angle within distance `radius` on row `r`.
    pub fn angular_reach(&self, r: usize, radius: f64) -> f64 {
        let d = &self.dist[r];
        if d[0] > radius {
            return 0.0;
        }
        for c in 1..d.len() {
            if d[c] > radius {
                let f = (radius - d[c - 1]) / (d[c] - d[c - 1]);
                return self.thetas[c - 1] + f * (self.thetas[c] - self.thetas[c - 1]);
            }
        }
        *self.thetas.last().unwrap()
    }
}

/// Volume of the ball of radius `radius` about the point `(s_c, θ = 0)`,
/// from a lattice distance field (accurate to about one percent).
pub fn ball_volume_at(m: &WarpedMetric, s_c: f64, radius: f64) -> Result<f64> {
    if s_c == 0.0 {
        return crate::warped::ball_volume(m, radius.min(m.s_max()));
    }
    let rows = 100;
    let ds = 2.0 * radius / rows as f64;
    // Square lattice cells near the center; widen the angular span until
    // the ball fits inside it.
    let dtheta = ds / s_c.max(radius);
    let mut theta_top = (3.0 * radius / s_c).min(PI);
    loop {
        let cols = ((theta_top / dtheta).ceil() as usize).max(8);
        let field = DistanceField::new(m, s_c, radius, theta_top, rows, cols, 6)?;
        let reach: Vec<f64> = (0..field.rows.len()).map(|r| field.angular_reach(r, radius)).collect();
        if theta_top < PI && reach.iter().any(|&p| p >= theta_top) {
            theta_top = (2.0 * theta_top).min(PI);
            continue;
        }
        let f = |r: usize| -> f64 {
            let (w, _) = m.eval(field.rows[r]);
            w * w * 2.0 * PI * (1.0 - reach[r].cos())
        };
        let mut acc = 0.0;
        for r in 1..field.rows.len() {
            acc += 0.5 * (f(r - 1) + f(r)) * (field.rows[r] - field.rows[r - 1]);
        }
        return Ok(acc);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_contain_exact_radii() {
        let r = uniform_rows(0.0, 2.0, 10, &[0.71, 1.3]);
        assert!(r.contains(&0.71) && r.contains(&1.3) && r[0] == 0.0);
        assert!(r.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn resample_keeps_endpoints() {
        let p = [(1.0, 0.0), (1.5, 0.2), (2.0, 0.4)];
        let q = resample(&p, 5);
        assert_eq!(q.len(), 6);
        assert_eq!(q[0], p[0]);
        assert_eq!(q[5], p[2]);
    }
}
