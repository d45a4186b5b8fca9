//! Scalar root bracketing and bisection.

use alloc::vec::Vec;

/// Bisection on a bracketing interval until `|b - a| <= tol` or the midpoint
/// stops moving. Returns `None` when `f(a)` and `f(b)` have the same strict
/// sign or either is not finite.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if (fa > 0.0) == (fb > 0.0) {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        let fm = f(m);
        if !fm.is_finite() {
            return None;
        }
        if fm == 0.0 {
            return Some(m);
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Sample `f` on `samples + 1` equispaced points of `[lo, hi]` and return the
/// subintervals on which it changes sign, in increasing order. Each bracket
/// carries the function values at its ends.
pub fn sign_changes<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    samples: usize,
) -> Vec<(f64, f64, f64, f64)> {
    let mut out = Vec::new();
    let h = (hi - lo) / samples as f64;
    let mut x0 = lo;
    let mut f0 = f(x0);
    for k in 1..=samples {
        let x1 = if k == samples { hi } else { lo + h * k as f64 };
        let f1 = f(x1);
        if f0.is_finite() && f1.is_finite() && ((f0 < 0.0 && f1 >= 0.0) || (f0 > 0.0 && f1 <= 0.0))
        {
            out.push((x0, x1, f0, f1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// All roots of `f` on `[lo, hi]` resolvable on a grid of `samples`
/// subintervals, refined by bisection to `tol`.
pub fn find_roots<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    samples: usize,
    tol: f64,
) -> Vec<f64> {
    let brackets = sign_changes(&mut f, lo, hi, samples);
    brackets
        .into_iter()
        .filter_map(|(a, b, _, _)| bisect(&mut f, a, b, tol))
        .collect()
}
