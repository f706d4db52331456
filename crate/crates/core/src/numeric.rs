//! Small numerical kernels: torus arithmetic, compensated summation,
//! double-double residual evaluation and 2x2 matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Reduce a coordinate into the fundamental domain [0, 1).
pub fn reduce_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid of a tiny negative number can round up to exactly 1.0,
    // and rem_euclid(-0.0) keeps the negative zero
    if r >= 1.0 || r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Shortest representative of x modulo 1, in [-1/2, 1/2].
pub fn wrap_half(x: f64) -> f64 {
    x - x.round()
}

/// Shortest displacement vector between two torus points.
pub fn torus_displacement(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [wrap_half(a[0] - b[0]), wrap_half(a[1] - b[1])]
}

/// Distance on the flat torus.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = torus_displacement(a, b);
    d[0].hypot(d[1])
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated complex accumulator (independent real/imaginary channels).
#[derive(Debug, Clone, Copy, Default)]
pub struct ComplexKahanSum {
    re: KahanSum,
    im: KahanSum,
}

impl ComplexKahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Unevaluated double-double value hi + lo.
///
/// Used only to evaluate periodic-orbit defects T^n(x) - x - k, where the
/// cancellation at the root would otherwise be swamped by the O(|DT^n| u)
/// rounding of a plain f64 orbit.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

impl Dd {
    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn add_f64(self, x: f64) -> Dd {
        self.add(Dd::from_f64(x))
    }

    pub fn mul_f64(self, x: f64) -> Dd {
        let (p, e) = two_prod(self.hi, x);
        let e = e + self.lo * x;
        let (hi, lo) = two_sum(p, e);
        Dd { hi, lo }
    }
}

/// Dense 2x2 real matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn identity() -> Self {
        Mat2([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn zeros() -> Self {
        Mat2([[0.0; 2]; 2])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn mul(&self, other: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &other.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn add(&self, other: &Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] + other.0[0][0], self.0[0][1] + other.0[0][1]],
            [self.0[1][0] + other.0[1][0], self.0[1][1] + other.0[1][1]],
        ])
    }

    pub fn sub(&self, other: &Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] - other.0[0][0], self.0[0][1] - other.0[0][1]],
            [self.0[1][0] - other.0[1][0], self.0[1][1] - other.0[1][1]],
        ])
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2([
            [self.0[0][0] * s, self.0[0][1] * s],
            [self.0[1][0] * s, self.0[1][1] * s],
        ])
    }

    /// Inverse; `None` when |det| underflows.
    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d.abs() < f64::MIN_POSITIVE * 4.0 {
            return None;
        }
        Some(Mat2([
            [self.0[1][1] / d, -self.0[0][1] / d],
            [-self.0[1][0] / d, self.0[0][0] / d],
        ]))
    }

    /// Solve M x = b.
    pub fn solve(&self, b: [f64; 2]) -> Option<[f64; 2]> {
        let d = self.det();
        if d.abs() < f64::MIN_POSITIVE * 4.0 {
            return None;
        }
        Some([
            (b[0] * self.0[1][1] - b[1] * self.0[0][1]) / d,
            (b[1] * self.0[0][0] - b[0] * self.0[1][0]) / d,
        ])
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2([
            [self.0[0][0], self.0[1][0]],
            [self.0[0][1], self.0[1][1]],
        ])
    }

    pub fn norm_inf(&self) -> f64 {
        let r0 = self.0[0][0].abs() + self.0[0][1].abs();
        let r1 = self.0[1][0].abs() + self.0[1][1].abs();
        r0.max(r1)
    }

    /// Largest singular value (closed form for 2x2).
    pub fn sigma_max(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        let q = a * a + b * b + c * c + d * d;
        let det = self.det();
        // sigma^2 are roots of s^2 - q s + det^2
        let disc = (q * q - 4.0 * det * det).max(0.0).sqrt();
        (0.5 * (q + disc)).sqrt()
    }

    /// Smallest singular value.
    pub fn sigma_min(&self) -> f64 {
        let smax = self.sigma_max();
        if smax == 0.0 {
            0.0
        } else {
            self.det().abs() / smax
        }
    }

    /// Eigenvalues when real (trace^2 >= 4 det); ordered |mu1| >= |mu2|.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let t = self.trace();
        let d = self.det();
        let disc = t * t - 4.0 * d;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        let (m1, m2) = ((t + s) / 2.0, (t - s) / 2.0);
        if m1.abs() >= m2.abs() {
            Some((m1, m2))
        } else {
            Some((m2, m1))
        }
    }

    /// Unit eigenvector for a real eigenvalue.
    pub fn eigenvector(&self, mu: f64) -> [f64; 2] {
        let [[a, b], [c, d]] = self.0;
        // (A - mu) v = 0: pick the better-conditioned row
        let v = if b.abs() + (a - mu).abs() >= c.abs() + (d - mu).abs() {
            [b, mu - a]
        } else {
            [mu - d, c]
        };
        let n = v[0].hypot(v[1]);
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [v[0] / n, v[1] / n]
        }
    }
}
