//! CDFs used for p-values: F, chi-squared, Student t and the studentized
//! range.

use std::sync::LazyLock;

use super::quadrature::{self, adaptive};
use super::special::{
    ln_gamma, normal_cdf, normal_pdf, regularized_beta, regularized_beta_complement,
    regularized_gamma_p, regularized_gamma_q,
};
use super::StatsError;

/// Above this many degrees of freedom the studentized range uses the
/// infinite-df (known variance) form.
pub const INFINITE_DF: f64 = 1e6;

fn check_positive(name: &str, v: f64) -> Result<(), StatsError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(StatsError::DomainError(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn check_nonnegative(name: &str, v: f64) -> Result<(), StatsError> {
    if v >= 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(StatsError::DomainError(format!("{name} must be >= 0, got {v}")))
    }
}

/// `P(X <= x)` for `X ~ F(d1, d2)`.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_nonnegative("x", x)?;
    check_positive("d1", d1)?;
    check_positive("d2", d2)?;
    if x.is_infinite() {
        return Ok(1.0);
    }
    let y = d1 * x / (d1 * x + d2);
    Ok(regularized_beta(y, d1 / 2.0, d2 / 2.0))
}

/// `P(X > x)` for `X ~ F(d1, d2)`, accurate in the upper tail.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_nonnegative("x", x)?;
    check_positive("d1", d1)?;
    check_positive("d2", d2)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let y = d1 * x / (d1 * x + d2);
    Ok(regularized_beta_complement(y, d1 / 2.0, d2 / 2.0))
}

pub fn chisq_cdf(x: f64, df: f64) -> Result<f64, StatsError> {
    check_nonnegative("x", x)?;
    check_positive("df", df)?;
    Ok(regularized_gamma_p(df / 2.0, x / 2.0))
}

pub fn chisq_sf(x: f64, df: f64) -> Result<f64, StatsError> {
    check_nonnegative("x", x)?;
    check_positive("df", df)?;
    Ok(regularized_gamma_q(df / 2.0, x / 2.0))
}

/// Student t CDF.
pub fn t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_positive("df", df)?;
    if t.is_nan() {
        return Err(StatsError::DomainError("t is NaN".into()));
    }
    let tail = 0.5 * regularized_beta(df / (df + t * t), df / 2.0, 0.5);
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// Inverse of [`t_cdf`] for `0 < p < 1`.
pub fn t_quantile(p: f64, df: f64) -> Result<f64, StatsError> {
    check_positive("df", df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::DomainError(format!("probability must be in (0, 1), got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let upper = p.max(1.0 - p);
    let mut hi = 1.0;
    while t_cdf(hi, df)? < upper {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(StatsError::DomainError("t quantile did not bracket".into()));
        }
    }
    let q = invert_increasing(|t| t_cdf(t, df).unwrap_or(f64::NAN), upper, 0.0, hi, 1e-12);
    Ok(if p > 0.5 { q } else { -q })
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` for nondecreasing `f`
/// (Brent's method: inverse quadratic interpolation guarded by bisection).
pub(crate) fn invert_increasing<F: FnMut(f64) -> f64>(
    mut f: F,
    target: f64,
    lo: f64,
    hi: f64,
    xtol: f64,
) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a) - target;
    let mut fb = f(b) - target;
    if fa >= 0.0 {
        return a;
    }
    if fb <= 0.0 {
        return b;
    }
    let (mut c, mut fc) = (b, fb);
    let (mut d, mut e) = (b - a, b - a);
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b) - target;
    }
    b
}

/// Inner quadrature nodes: `(z, weight * φ(z), Φ(z))` for two fixed
/// 64-point panels on [-8.5, 0] and [0, 8.5]. The integrand is entire and
/// negligible beyond |z| = 8.5, so this is accurate to ~1e-15 for every `k`
/// and `w`, and fixed nodes keep `W` exactly monotone in `w`.
static RANGE_NODES: LazyLock<Vec<(f64, f64, f64)>> = LazyLock::new(|| {
    let mut nodes = Vec::with_capacity(2 * quadrature::ORDER);
    for (a, b) in [(-8.5, 0.0), (0.0, 8.5)] {
        for (z, w) in quadrature::nodes_on(a, b) {
            nodes.push((z, w * normal_pdf(z), normal_cdf(z)));
        }
    }
    nodes
});

/// Distribution of the range of `k` standard normals,
/// `W(w) = k ∫ φ(z) [Φ(z) − Φ(z − w)]^(k−1) dz`.
fn normal_range_cdf(w: f64, k: u32) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    if w.is_infinite() {
        return 1.0;
    }
    let km1 = (k - 1) as i32;
    let v: f64 = RANGE_NODES
        .iter()
        .map(|&(z, wphi, cdf)| wphi * (cdf - normal_cdf(z - w)).powi(km1))
        .sum();
    (k as f64 * v).clamp(0.0, 1.0)
}

/// Log density of `S = sqrt(X / df)` with `X ~ chi^2(df)`.
fn ln_scaled_chi_pdf(s: f64, df: f64) -> f64 {
    let h = 0.5 * df;
    std::f64::consts::LN_2 + h * h.ln() - ln_gamma(h) + (df - 1.0) * s.ln() - h * s * s
}

/// Panel boundaries for the outer integral over `s`: the effective support
/// of the scaled chi density, refined around its mode and around the region
/// where `W(q s)` rises.
fn outer_breaks(q: f64, df: f64) -> Vec<f64> {
    let mode = if df > 1.0 { ((df - 1.0) / df).sqrt() } else { 0.0 };
    let sd = (1.0 / (2.0 * df)).sqrt().min(1.0);
    let ln_peak = if mode > 0.0 {
        ln_scaled_chi_pdf(mode, df)
    } else {
        ln_scaled_chi_pdf(sd.min(0.5), df)
    };
    let cutoff = ln_peak - 45.0;

    let mut upper = mode.max(sd);
    let mut step = sd;
    while ln_scaled_chi_pdf(upper, df) > cutoff {
        upper += step;
        step *= 1.5;
    }
    let mut lower = 0.0;
    if mode > 0.0 {
        let mut step = sd;
        let mut s = mode;
        while s > 0.0 && ln_scaled_chi_pdf(s, df) > cutoff {
            s -= step;
            step *= 1.5;
        }
        lower = s.max(0.0);
    }

    let mut breaks = vec![lower, upper];
    breaks.push(8.0 / q);
    breaks.retain(|b| b.is_finite() && *b >= lower && *b <= upper);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    breaks
}

/// `P(Q <= q)` for the studentized range with `k` groups and `df` degrees of
/// freedom.
pub fn studentized_range_cdf(q: f64, k: u32, df: f64) -> Result<f64, StatsError> {
    if q.is_nan() || q < 0.0 {
        return Err(StatsError::DomainError(format!("q must be >= 0, got {q}")));
    }
    if k < 2 {
        return Err(StatsError::DomainError(format!("k must be >= 2, got {k}")));
    }
    check_positive("df", df)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(1.0);
    }
    if df >= INFINITE_DF {
        return Ok(normal_range_cdf(q, k));
    }
    let breaks = outer_breaks(q, df);
    let v = adaptive(
        |s| {
            if s <= 0.0 {
                0.0
            } else {
                ln_scaled_chi_pdf(s, df).exp() * normal_range_cdf(q * s, k)
            }
        },
        &breaks,
        1e-9,
    );
    Ok(v.clamp(0.0, 1.0))
}

/// `P(Q > q)`.
pub fn studentized_range_sf(q: f64, k: u32, df: f64) -> Result<f64, StatsError> {
    Ok((1.0 - studentized_range_cdf(q, k, df)?).clamp(0.0, 1.0))
}

/// The `q` with `P(Q <= q) = p`.
pub fn studentized_range_quantile(p: f64, k: u32, df: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::DomainError(format!("probability must be in (0, 1), got {p}")));
    }
    let cdf = |q: f64| studentized_range_cdf(q, k, df);
    // walk geometrically from a typical critical value to a tight bracket
    let (mut lo, mut hi) = (3.0, 3.0);
    if cdf(lo)? < p {
        loop {
            lo = hi;
            hi *= 1.3;
            if cdf(hi)? >= p {
                break;
            }
            if hi > 1e8 {
                return Err(StatsError::DomainError(
                    "studentized range quantile did not bracket".into(),
                ));
            }
        }
    } else {
        loop {
            hi = lo;
            lo /= 1.3;
            if cdf(lo)? < p || lo < 1e-12 {
                break;
            }
        }
    }
    Ok(invert_increasing(|q| cdf(q).unwrap_or(f64::NAN), p, lo, hi, 1e-9))
}
