//! Gauss–Legendre rules on `[-1, 1]`.

/// Five-point rule as `(node, weight)` pairs; exact for degree 9.
pub const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Integrate `f` over `[a, b]` with the five-point rule.
pub fn gl5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}
