//! Finite-difference and interpolation weights on arbitrary node sets.
//!
//! Rotation centres ("tips") are handled by mirroring: a field sampled on
//! `[x0, ...]` is extended across `x0` as an odd or even function, so the
//! stencils near a tip stay centred. Open ends fall back to one-sided windows.

/// Widest stencil supported by the fixed-size weight buffers.
pub const MAX_WIDTH: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Odd => -1.0,
            Parity::Even => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    /// Rotation centre: the field is mirrored across the end node.
    Tip,
    /// Truncated domain: stencils become one-sided.
    Open,
}

/// Fornberg's recursion: weights for derivatives `0..=m` at `z` on nodes `x`.
/// `c[k][j]` is the weight of node `j` for derivative `k`.
pub fn fornberg(z: f64, x: &[f64], m: usize, c: &mut [[f64; MAX_WIDTH]; 3]) {
    let n = x.len();
    debug_assert!(n <= MAX_WIDTH && m <= 2);
    for row in c.iter_mut() {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
}

#[derive(Clone, Copy, Debug)]
struct Point {
    pos: f64,
    node: usize,
    mirrored: bool,
}

/// A node set with end conditions; the shared geometry for all stencils.
#[derive(Clone, Debug)]
pub struct NodeSet {
    pub coords: Vec<f64>,
    pub left: End,
    pub right: End,
}

impl NodeSet {
    pub fn new(coords: Vec<f64>, left: End, right: End) -> Self {
        NodeSet { coords, left, right }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Index `j` with `coords[j] <= z < coords[j+1]`, clamped to the valid range.
    pub fn locate(&self, z: f64) -> usize {
        let x = &self.coords;
        let n = x.len();
        if z <= x[0] {
            return 0;
        }
        if z >= x[n - 1] {
            return n - 2;
        }
        match x.binary_search_by(|v| v.partial_cmp(&z).unwrap()) {
            Ok(j) => j.min(n - 2),
            Err(j) => j - 1,
        }
    }

    /// The `width` points (real or mirrored) closest to `z`, balanced between
    /// sides on ties. With `skip_tips`, the tip nodes themselves are excluded
    /// (used for quotient fields like `w/s` that are undefined there).
    fn select(&self, z: f64, width: usize, skip_tips: bool) -> Vec<Point> {
        let x = &self.coords;
        let n = x.len();
        let j0 = self.locate(z);
        let lo = j0.saturating_sub(width + 1);
        let hi = (j0 + width + 2).min(n - 1);
        let mut cand: Vec<Point> = Vec::with_capacity(3 * width + 4);
        for j in lo..=hi {
            if skip_tips
                && ((j == 0 && self.left == End::Tip) || (j == n - 1 && self.right == End::Tip))
            {
                continue;
            }
            cand.push(Point {
                pos: x[j],
                node: j,
                mirrored: false,
            });
        }
        if self.left == End::Tip && j0 <= width + 1 {
            for k in 1..=(width + 1).min(n - 1) {
                cand.push(Point {
                    pos: 2.0 * x[0] - x[k],
                    node: k,
                    mirrored: true,
                });
            }
        }
        if self.right == End::Tip && j0 + width + 2 >= n {
            for k in 1..=(width + 1).min(n - 1) {
                cand.push(Point {
                    pos: 2.0 * x[n - 1] - x[n - 1 - k],
                    node: n - 1 - k,
                    mirrored: true,
                });
            }
        }
        let scale = (x[n - 1] - x[0]).abs().max(1e-300);
        let tol = 1e-12 * scale;
        let mut chosen: Vec<Point> = Vec::with_capacity(width);
        let mut left_count = 0usize;
        let mut right_count = 0usize;
        let mut used = vec![false; cand.len()];
        while chosen.len() < width {
            let mut best: Option<usize> = None;
            let mut best_d = f64::INFINITY;
            for (k, p) in cand.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let d = (p.pos - z).abs();
                if d < best_d - tol {
                    best_d = d;
                    best = Some(k);
                } else if (d - best_d).abs() <= tol {
                    // Tie: prefer the side with fewer points so far.
                    let b = best.unwrap();
                    let side_new = p.pos < z;
                    let side_old = cand[b].pos < z;
                    if side_new != side_old {
                        let want_left = left_count <= right_count;
                        if side_new == want_left {
                            best = Some(k);
                        }
                    }
                }
            }
            let Some(b) = best else { break };
            used[b] = true;
            if cand[b].pos < z {
                left_count += 1;
            } else if cand[b].pos > z {
                right_count += 1;
            }
            chosen.push(cand[b]);
        }
        chosen.sort_by(|a, b| a.pos.partial_cmp(&b.pos).unwrap());
        chosen
    }

    /// Stencil for derivative order `deriv` (0, 1 or 2) at coordinate `z`.
    pub fn stencil(&self, z: f64, width: usize, deriv: usize, skip_tips: bool) -> Stencil {
        let pts = self.select(z, width, skip_tips);
        let xs: Vec<f64> = pts.iter().map(|p| p.pos).collect();
        let mut c = [[0.0; MAX_WIDTH]; 3];
        fornberg(z, &xs, deriv, &mut c);
        Stencil {
            nodes: pts.iter().map(|p| p.node).collect(),
            mirrored: pts.iter().map(|p| p.mirrored).collect(),
            weights: c[deriv][..pts.len()].to_vec(),
        }
    }

    /// Per-node stencils for one derivative order.
    pub fn node_stencils(&self, width: usize, deriv: usize, skip_tips: bool) -> Vec<Stencil> {
        self.coords
            .iter()
            .map(|&z| self.stencil(z, width, deriv, skip_tips))
            .collect()
    }

    /// Value and first derivative of the local interpolant through the
    /// `width` nearest points.
    pub fn interpolate(&self, f: &[f64], parity: Parity, z: f64, width: usize) -> (f64, f64) {
        let x = &self.coords;
        let n = x.len();
        let j = self.locate(z);
        let half = width / 2;
        let mut c = [[0.0; MAX_WIDTH]; 3];
        // Fast path: a contiguous window of real nodes.
        if j + 1 >= half && j + 1 - half + width <= n {
            let start = j + 1 - half;
            {
                let xs = &x[start..start + width];
                fornberg(z, xs, 1, &mut c);
                let mut v = 0.0;
                let mut d = 0.0;
                for k in 0..width {
                    v += c[0][k] * f[start + k];
                    d += c[1][k] * f[start + k];
                }
                return (v, d);
            }
        }
        let pts = self.select(z, width, false);
        let xs: Vec<f64> = pts.iter().map(|p| p.pos).collect();
        fornberg(z, &xs, 1, &mut c);
        let mut v = 0.0;
        let mut d = 0.0;
        for (k, p) in pts.iter().enumerate() {
            let val = if p.mirrored {
                parity.sign() * f[p.node]
            } else {
                f[p.node]
            };
            v += c[0][k] * val;
            d += c[1][k] * val;
        }
        (v, d)
    }
}

/// Weights bound to node indices; ghost points carry the mirror flag.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub nodes: Vec<usize>,
    pub mirrored: Vec<bool>,
    pub weights: Vec<f64>,
}

impl Stencil {
    #[inline]
    pub fn apply(&self, f: &[f64], parity: Parity) -> f64 {
        let sign = parity.sign();
        let mut acc = 0.0;
        for k in 0..self.nodes.len() {
            let v = f[self.nodes[k]];
            acc += self.weights[k] * if self.mirrored[k] { sign * v } else { v };
        }
        acc
    }
}

/// Value at `u = 0` of the polynomial in `u` through `(u_k, v_k)`.
/// Used to extrapolate even functions to a tip with `u = s^2`.
pub fn extrapolate_to_zero(u: &[f64], v: &[f64]) -> f64 {
    let mut c = [[0.0; MAX_WIDTH]; 3];
    fornberg(0.0, u, 0, &mut c);
    u.iter().enumerate().map(|(k, _)| c[0][k] * v[k]).sum()
}
