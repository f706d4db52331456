//! Uniform tensor quadrature on the torus.
//!
//! The trapezoidal rule on [0,1)^2 with periodic data is plain node
//! averaging, and it integrates trigonometric polynomials below the Nyquist
//! frequency exactly, which is what the operator-identity checks rely on.

use crate::numeric::ComplexKahanSum;
use num_complex::Complex64;

/// Uniform m x m grid on the torus with cell weight 1/m^2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureGrid {
    m: usize,
}

impl QuadratureGrid {
    pub fn new(m: usize) -> Self {
        assert!(m >= 2, "quadrature grid needs at least 2 nodes per axis");
        QuadratureGrid { m }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cell_weight(&self) -> f64 {
        1.0 / (self.m as f64 * self.m as f64)
    }

    /// Visit nodes in row-major order (deterministic reduction order).
    pub fn for_each_node(&self, mut f: impl FnMut([f64; 2])) {
        let m = self.m as f64;
        for i in 0..self.m {
            let x0 = i as f64 / m;
            for j in 0..self.m {
                f([x0, j as f64 / m]);
            }
        }
    }

    /// Compensated quadrature of a complex integrand.
    pub fn integrate(&self, mut f: impl FnMut([f64; 2]) -> Complex64) -> Complex64 {
        let mut acc = ComplexKahanSum::new();
        self.for_each_node(|x| acc.add(f(x)));
        acc.value() * Complex64::new(self.cell_weight(), 0.0)
    }
}
