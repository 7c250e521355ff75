//! Adaptive Gauss–Legendre quadrature on finite intervals.

use std::sync::OnceLock;

use crate::normal;

const ORDER: usize = 16;
const MAX_DEPTH: u32 = 30;
const REL_TOL: f64 = 1e-14;

fn rule() -> &'static [(f64, f64); ORDER] {
    static RULE: OnceLock<[(f64, f64); ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        // Newton iteration on P_n from the Chebyshev-like initial guesses.
        let n = ORDER;
        let mut out = [(0.0, 0.0); ORDER];
        for (i, slot) in out.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        out
    })
}

fn fixed<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule().iter().map(|&(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// ∫_a^b f by recursive bisection until the one-panel and two-panel
/// estimates agree to `abs_tol` or to 1e-14 relative.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let whole = fixed(&f, a, b);
    recurse(&f, a, b, whole, abs_tol.max(1e-300), 0)
}

fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = fixed(f, a, m);
    let right = fixed(f, m, b);
    let two = left + right;
    if (two - whole).abs() <= tol.max(REL_TOL * two.abs()) || depth >= MAX_DEPTH {
        return two;
    }
    recurse(f, a, m, left, 0.5 * tol, depth + 1) + recurse(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Width of the standard-normal window outside of which the weighted
/// integrands used in this crate are negligible.
pub const NORMAL_WINDOW: f64 = 14.0;

/// ∫ g(z) φ(z) dz over [za, zb] ∩ [center − W, center + W], where `center`
/// is where g·φ peaks (for g(z) ~ e^{kz} that is z = k).
pub fn integrate_normal<G: Fn(f64) -> f64>(
    g: G,
    za: f64,
    zb: f64,
    center: f64,
    abs_tol: f64,
) -> f64 {
    let lo = za.max(center.min(0.0) - NORMAL_WINDOW);
    let hi = zb.min(center.max(0.0) + NORMAL_WINDOW);
    if !(hi > lo) {
        return 0.0;
    }
    // Panels of unit width keep the bisection shallow for peaked integrands.
    let panels = ((hi - lo).ceil() as usize).max(1);
    let w = (hi - lo) / panels as f64;
    let per = abs_tol / panels as f64;
    (0..panels)
        .map(|k| {
            let a = lo + k as f64 * w;
            integrate(|z| g(z) * normal::pdf(z), a, a + w, per)
        })
        .sum()
}
