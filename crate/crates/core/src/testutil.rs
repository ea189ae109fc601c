//! Quadrature oracles shared by unit tests.

/// Five-point Gauss–Legendre rule on `[a, b]`.
pub fn gauss5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    X.iter().zip(W).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Adaptive Gauss–Kronrod-free bisection on top of `gauss5`.
pub fn adaptive(a: f64, b: f64, tol: f64, f: &impl Fn(f64) -> f64) -> f64 {
    fn rec(a: f64, b: f64, whole: f64, tol: f64, depth: u32, f: &impl Fn(f64) -> f64) -> f64 {
        let m = 0.5 * (a + b);
        let left = gauss5(a, m, f);
        let right = gauss5(m, b, f);
        if depth > 40 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            rec(a, m, left, 0.5 * tol, depth + 1, f) + rec(m, b, right, 0.5 * tol, depth + 1, f)
        }
    }
    rec(a, b, gauss5(a, b, f), tol, 0, f)
}

/// `(I^β v)(t) = Γ(β)^{-1} ∫_0^t (t-s)^{β-1} v(s) ds`, with the endpoint
/// singularity removed by `s = t - σ^{1/β}`.
pub fn abel_integral(beta: f64, t: f64, v: impl Fn(f64) -> f64) -> f64 {
    let g = libm::tgamma(beta);
    let upper = t.powf(beta);
    let integrand = |sigma: f64| v(t - sigma.powf(1.0 / beta));
    adaptive(0.0, upper, 1e-15, &integrand) / (beta * g)
}
