//! Eigenvalues of 2x2 and 3x3 real matrices.

use libm::{cbrt, cos, fabs, sqrt};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub const fn real(re: f64) -> Self {
        Self { re, im: 0.0 }
    }

    pub fn abs(&self) -> f64 {
        libm::hypot(self.re, self.im)
    }

    pub fn is_real(&self) -> bool {
        self.im == 0.0
    }

    pub fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

pub type Mat2 = [[f64; 2]; 2];
pub type Mat3 = [[f64; 3]; 3];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn trace3(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

/// Roots of `x^2 + b x + c`, computed without cancellation.
fn quadratic_roots(b: f64, c: f64) -> [Complex; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = sqrt(disc);
        let q = -0.5 * (b + if b >= 0.0 { s } else { -s });
        if q == 0.0 {
            return [Complex::real(0.0), Complex::real(0.0)];
        }
        let (r1, r2) = (q, c / q);
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        [Complex::real(lo), Complex::real(hi)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * sqrt(-disc);
        [Complex::new(re, -im), Complex::new(re, im)]
    }
}

/// Eigenvalues of a 2x2 matrix. Real pairs are sorted ascending; complex
/// pairs come as `(re - i im, re + i im)`.
pub fn eig2(m: &Mat2) -> [Complex; 2] {
    quadratic_roots(-(m[0][0] + m[1][1]), det2(m))
}

/// Unit eigenvector of a 2x2 matrix for a real eigenvalue.
pub fn eigvec2(m: &Mat2, lambda: f64) -> [f64; 2] {
    let a = [m[0][1], lambda - m[0][0]];
    let b = [lambda - m[1][1], m[1][0]];
    let na = libm::hypot(a[0], a[1]);
    let nb = libm::hypot(b[0], b[1]);
    let (v, n) = if na >= nb { (a, na) } else { (b, nb) };
    if n == 0.0 {
        // scalar multiple of the identity: any direction works
        return [1.0, 0.0];
    }
    [v[0] / n, v[1] / n]
}

/// Eigenvalues of a 3x3 matrix from its characteristic polynomial.
///
/// One real root is found in closed form, polished by Newton iteration and
/// deflated; the remaining quadratic is solved directly. Real eigenvalues are
/// listed before complex ones.
pub fn eig3(m: &Mat3) -> [Complex; 3] {
    // lambda^3 + a lambda^2 + b lambda + c
    let a = -trace3(m);
    let b = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let c = -det3(m);
    let poly = |x: f64| ((x + a) * x + b) * x + c;
    let dpoly = |x: f64| (3.0 * x + 2.0 * a) * x + b;

    // depressed cubic t^3 + pt + q with lambda = t - a/3
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut root = if disc > 0.0 {
        let s = sqrt(disc);
        let u = cbrt(-q / 2.0 + s);
        let w = cbrt(-q / 2.0 - s);
        u + w - shift
    } else {
        // three real roots: take the one of largest magnitude for a stable deflation
        let r = sqrt(-p / 3.0);
        if r == 0.0 {
            -shift
        } else {
            let arg = (-q / (2.0 * r * r * r)).clamp(-1.0, 1.0);
            let phi = libm::acos(arg);
            let third = core::f64::consts::PI * 2.0 / 3.0;
            let mut best = 2.0 * r * cos(phi / 3.0) - shift;
            for k in 1..3 {
                let cand = 2.0 * r * cos(phi / 3.0 - third * k as f64) - shift;
                if fabs(cand) > fabs(best) {
                    best = cand;
                }
            }
            best
        }
    };
    for _ in 0..4 {
        let d = dpoly(root);
        if d == 0.0 {
            break;
        }
        let step = poly(root) / d;
        if !step.is_finite() {
            break;
        }
        root -= step;
    }
    // deflate: (lambda - root)(lambda^2 + b1 lambda + c1)
    let b1 = a + root;
    let c1 = b + root * b1;
    let [r1, r2] = quadratic_roots(b1, c1);
    if r1.is_real() {
        let mut all = [Complex::real(root), r1, r2];
        all.sort_by(|x, y| {
            x.re.partial_cmp(&y.re)
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        all
    } else {
        [Complex::real(root), r1, r2]
    }
}
