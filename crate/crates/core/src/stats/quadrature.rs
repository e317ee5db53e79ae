//! Gauss-Legendre quadrature with adaptive panel splitting.

use std::sync::LazyLock;

pub const ORDER: usize = 64;

/// Nodes and weights on [-1, 1], computed by Newton iteration on P_n.
static RULE: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| legendre_rule(ORDER));

fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p0 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order rule on `[a, b]`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = &*RULE;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        sum += w * f(mid + half * x);
    }
    sum * half
}

/// Nodes and weights of the fixed-order rule mapped onto `[a, b]`.
pub fn nodes_on(a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (nodes, weights) = &*RULE;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(weights)
        .map(move |(x, w)| (mid + half * x, w * half))
}

/// Integrates over each of the given panels, splitting a panel in two until
/// the halves agree with the whole to within `tol`.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: f64) -> f64 {
    const MAX_DEPTH: u32 = 24;
    fn panel<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gauss_legendre(&mut *f, a, mid);
        let right = gauss_legendre(&mut *f, mid, b);
        let refined = left + right;
        if (refined - whole).abs() <= tol || depth >= MAX_DEPTH {
            refined
        } else {
            panel(f, a, mid, left, 0.5 * tol, depth + 1)
                + panel(f, mid, b, right, 0.5 * tol, depth + 1)
        }
    }
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let whole = gauss_legendre(&mut f, a, b);
        total += panel(&mut f, a, b, whole, tol, 0);
    }
    total
}
