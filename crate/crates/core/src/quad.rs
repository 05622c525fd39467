//! One-dimensional quadrature rules.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl10() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(10))
}

fn gl_panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let (x, w) = gl10();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    let mut sa = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        let fx = f(mid + half * xi);
        s += wi * fx;
        sa += wi * fx.abs();
    }
    (s * half, sa * half.abs())
}

/// Adaptive Gauss–Legendre integration of `f` over [a, b] to relative
/// tolerance `rtol`. Failures of `f` propagate.
pub fn adaptive_gl<E, F>(mut f: F, a: f64, b: f64, rtol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    if a == b {
        return Ok(0.0);
    }
    let mut err: Option<E> = None;
    let mut g = |x: f64| -> f64 {
        if err.is_some() {
            return 0.0;
        }
        match f(x) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    };
    let (whole, abs_whole) = gl_panel(&mut g, a, b);
    let value = refine(&mut g, a, b, whole, rtol, abs_whole, 0);
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

fn refine<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, whole: f64, rtol: f64, abs_scale: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (l, _) = gl_panel(f, a, m);
    let (r, _) = gl_panel(f, m, b);
    let halves = l + r;
    let tol = (rtol * halves.abs()).max(1e-15 * abs_scale);
    if (halves - whole).abs() <= tol || depth >= 40 {
        return halves;
    }
    refine(f, a, m, l, rtol, abs_scale, depth + 1) + refine(f, m, b, r, rtol, abs_scale, depth + 1)
}

/// Trapezoid weights for `n` uniformly spaced nodes with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}
