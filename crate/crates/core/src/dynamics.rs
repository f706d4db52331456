//! Hyperbolic torus maps T(x) = Ax + eps*v(x) mod Z^2, their lifts, inverses
//! and Jacobians, together with the weights g of the transfer operator
//! T_g h = g * (h o T) and the tensor weight of the doubled map T^{-1} x T.
//!
//! The perturbation v is a vector of trigonometric polynomials, so every
//! derivative is available in closed form and the linear case eps = 0 stays
//! exact in double precision on dyadic rationals.

use crate::digest::digest_json;
use crate::error::{Error, Result};
use crate::numeric::{reduce_unit, torus_displacement, Mat2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Default tolerance for the inverse-map Newton iteration.
pub const DEFAULT_INVERSE_TOL: f64 = 1e-13;
/// Iteration cap for the inverse-map Newton iteration.
pub const INVERSE_MAX_ITER: usize = 50;

// ---------------------------------------------------------------------------
// Torus points

/// A point of the torus with every coordinate reduced into [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Reduce arbitrary coordinates into the fundamental domain.
    pub fn new(coords: Vec<f64>) -> Self {
        TorusPoint {
            coords: coords.into_iter().map(reduce_unit).collect(),
        }
    }

    pub fn new2(x: f64, y: f64) -> Self {
        TorusPoint::new(vec![x, y])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Fixed-size view; valid because every map constructor rejects d != 2.
    pub fn as2(&self) -> [f64; 2] {
        assert!(self.coords.len() == 2, "operation requires a 2-torus point");
        [self.coords[0], self.coords[1]]
    }
}

impl From<[f64; 2]> for TorusPoint {
    fn from(p: [f64; 2]) -> Self {
        TorusPoint::new2(p[0], p[1])
    }
}

// ---------------------------------------------------------------------------
// Integer matrices

/// Square integer matrix, the linear part of a torus diffeomorphism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerMatrix {
    entries: Vec<Vec<i64>>,
}

impl IntegerMatrix {
    pub fn new(entries: Vec<Vec<i64>>) -> Result<Self> {
        let d = entries.len();
        if d == 0 || entries.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidMap("matrix must be square".into()));
        }
        let m = IntegerMatrix { entries };
        if m.det_i128().unsigned_abs() != 1 {
            return Err(Error::InvalidMap(format!(
                "|det A| must be 1 for a torus diffeomorphism, got {}",
                m.det_i128()
            )));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn at(&self, i: usize, j: usize) -> i64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.entries
    }

    pub fn trace(&self) -> i64 {
        (0..self.dim()).map(|i| self.entries[i][i]).sum()
    }

    /// Determinant by cofactor expansion (d stays tiny).
    pub fn det_i128(&self) -> i128 {
        fn det(rows: &[Vec<i128>]) -> i128 {
            let d = rows.len();
            if d == 1 {
                return rows[0][0];
            }
            let mut acc = 0i128;
            for j in 0..d {
                let minor: Vec<Vec<i128>> = rows[1..]
                    .iter()
                    .map(|r| {
                        r.iter()
                            .enumerate()
                            .filter(|(jj, _)| *jj != j)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let sign = if j % 2 == 0 { 1 } else { -1 };
                acc += sign * rows[0][j] * det(&minor);
            }
            acc
        }
        let wide: Vec<Vec<i128>> = self
            .entries
            .iter()
            .map(|r| r.iter().map(|&v| v as i128).collect())
            .collect();
        det(&wide)
    }

    pub fn to_mat2(&self) -> Mat2 {
        assert!(self.dim() == 2);
        Mat2([
            [self.entries[0][0] as f64, self.entries[0][1] as f64],
            [self.entries[1][0] as f64, self.entries[1][1] as f64],
        ])
    }

    /// Exact inverse of a 2x2 unimodular matrix (again integer).
    pub fn inverse_unimodular2(&self) -> [[i64; 2]; 2] {
        assert!(self.dim() == 2);
        let det = self.det_i128() as i64; // +-1
        let [a, b] = [self.entries[0][0], self.entries[0][1]];
        let [c, d] = [self.entries[1][0], self.entries[1][1]];
        [[d * det, -b * det], [-c * det, a * det]]
    }

    /// Exact n-th power of a 2x2 integer matrix with overflow checks.
    pub fn pow2(&self, n: u32) -> Result<[[i128; 2]; 2]> {
        assert!(self.dim() == 2);
        let mut acc: [[i128; 2]; 2] = [[1, 0], [0, 1]];
        let base: [[i128; 2]; 2] = [
            [self.entries[0][0] as i128, self.entries[0][1] as i128],
            [self.entries[1][0] as i128, self.entries[1][1] as i128],
        ];
        for _ in 0..n {
            acc = mat2_i128_mul(acc, base).ok_or_else(|| {
                Error::InvalidArgument(format!("integer overflow computing A^{n}"))
            })?;
        }
        Ok(acc)
    }

    /// Spectrally hyperbolic linear part: no eigenvalue on the unit circle.
    /// For det = +1 this is the familiar |trace| > 2; det = -1 needs trace != 0.
    pub fn is_hyperbolic2(&self) -> bool {
        assert!(self.dim() == 2);
        let det = self.det_i128();
        let tr = self.trace();
        match det {
            1 => tr.abs() > 2,
            -1 => tr != 0,
            _ => false,
        }
    }
}

fn mat2_i128_mul(a: [[i128; 2]; 2], b: [[i128; 2]; 2]) -> Option<[[i128; 2]; 2]> {
    let mut out = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let p1 = a[i][0].checked_mul(b[0][j])?;
            let p2 = a[i][1].checked_mul(b[1][j])?;
            out[i][j] = p1.checked_add(p2)?;
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// Trigonometric polynomials

/// One Fourier mode c * e^{2 pi i k.x}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i64>,
    pub coeff: Complex64,
}

/// Finite Fourier sum P(x) = sum_k c_k e^{2 pi i k.x}, kept in a canonical
/// (frequency-sorted, merged) form so equal polynomials hash equally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPolynomial {
    terms: Vec<TrigTerm>,
}

impl TrigPolynomial {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        let mut merged: Vec<TrigTerm> = Vec::with_capacity(terms.len());
        let mut sorted = terms;
        sorted.sort_by(|a, b| a.freq.cmp(&b.freq));
        for t in sorted {
            match merged.last_mut() {
                Some(last) if last.freq == t.freq => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
        TrigPolynomial { terms: merged }
    }

    pub fn zero() -> Self {
        TrigPolynomial { terms: Vec::new() }
    }

    /// a * cos(2 pi k.x) as a conjugate-symmetric pair of modes.
    pub fn real_cosine(amplitude: f64, freq: Vec<i64>) -> Self {
        let neg: Vec<i64> = freq.iter().map(|&k| -k).collect();
        TrigPolynomial::new(vec![
            TrigTerm {
                freq,
                coeff: Complex64::new(amplitude / 2.0, 0.0),
            },
            TrigTerm {
                freq: neg,
                coeff: Complex64::new(amplitude / 2.0, 0.0),
            },
        ])
    }

    /// a * sin(2 pi k.x).
    pub fn real_sine(amplitude: f64, freq: Vec<i64>) -> Self {
        let neg: Vec<i64> = freq.iter().map(|&k| -k).collect();
        TrigPolynomial::new(vec![
            TrigTerm {
                freq,
                coeff: Complex64::new(0.0, -amplitude / 2.0),
            },
            TrigTerm {
                freq: neg,
                coeff: Complex64::new(0.0, amplitude / 2.0),
            },
        ])
    }

    pub fn add(&self, other: &TrigPolynomial) -> TrigPolynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        TrigPolynomial::new(terms)
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let phase: f64 = t
                .freq
                .iter()
                .zip(x)
                .map(|(&k, &xi)| k as f64 * xi)
                .sum();
            acc += t.coeff * Complex64::from_polar(1.0, TAU * phase);
        }
        acc
    }

    /// Real evaluation; meaningful for conjugate-symmetric coefficient sets.
    pub fn eval_real(&self, x: &[f64]) -> f64 {
        self.eval(x).re
    }

    /// Analytic gradient (d/dx_j) evaluated at x.
    pub fn grad(&self, x: &[f64]) -> Vec<Complex64> {
        let d = x.len();
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for t in &self.terms {
            let phase: f64 = t
                .freq
                .iter()
                .zip(x)
                .map(|(&k, &xi)| k as f64 * xi)
                .sum();
            let e = t.coeff * Complex64::from_polar(1.0, TAU * phase);
            for j in 0..d {
                out[j] += e * Complex64::new(0.0, TAU * t.freq[j] as f64);
            }
        }
        out
    }

    /// Rigorous sup bound sum |c_k|.
    pub fn coeff_abs_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).sum()
    }

    /// Sup bound on |d P / d x_j|.
    pub fn partial_abs_bound(&self, j: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff.norm() * TAU * (t.freq[j].abs() as f64))
            .sum()
    }

    pub fn max_freq_inf(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|t| t.freq.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Coefficients come in conjugate-symmetric pairs (real-valued polynomial)?
    pub fn is_conjugate_symmetric(&self, tol: f64) -> bool {
        for t in &self.terms {
            let neg: Vec<i64> = t.freq.iter().map(|&k| -k).collect();
            let partner = self
                .terms
                .iter()
                .find(|s| s.freq == neg)
                .map(|s| s.coeff)
                .unwrap_or(Complex64::new(0.0, 0.0));
            if (partner - t.coeff.conj()).norm() > tol * (1.0 + t.coeff.norm()) {
                return false;
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Weights

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    Constant,
    Trig,
    ExpTrig,
}

/// Weight g of the transfer operator, with a rigorous sup-norm bound.
///
/// The bound is the coefficient sum (exp-trig: its exponential), never a grid
/// estimate: certified radii must rely on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    kind: WeightKind,
    constant: Complex64,
    poly: TrigPolynomial,
    sup_norm_bound: f64,
}

impl WeightSpec {
    pub fn constant(c: Complex64) -> Self {
        WeightSpec {
            kind: WeightKind::Constant,
            constant: c,
            poly: TrigPolynomial::zero(),
            sup_norm_bound: c.norm(),
        }
    }

    pub fn one() -> Self {
        WeightSpec::constant(Complex64::new(1.0, 0.0))
    }

    pub fn trig(poly: TrigPolynomial) -> Self {
        let bound = poly.coeff_abs_sum();
        WeightSpec {
            kind: WeightKind::Trig,
            constant: Complex64::new(0.0, 0.0),
            poly,
            sup_norm_bound: bound,
        }
    }

    /// g = exp(P) with |g| <= exp(sum |c_k|).
    pub fn exp_trig(poly: TrigPolynomial) -> Self {
        let bound = poly.coeff_abs_sum().exp();
        WeightSpec {
            kind: WeightKind::ExpTrig,
            constant: Complex64::new(0.0, 0.0),
            poly,
            sup_norm_bound: bound,
        }
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn poly(&self) -> &TrigPolynomial {
        &self.poly
    }

    pub fn constant_value(&self) -> Complex64 {
        self.constant
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self.kind {
            WeightKind::Constant => self.constant,
            WeightKind::Trig => self.poly.eval(x),
            WeightKind::ExpTrig => self.poly.eval(x).exp(),
        }
    }

    pub fn sup_norm_bound(&self) -> f64 {
        self.sup_norm_bound
    }

    /// Max of |g| over an m x m sample grid, reported alongside the bound.
    pub fn grid_sup_estimate(&self, m: usize) -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x = [i as f64 / m as f64, j as f64 / m as f64];
                sup = sup.max(self.eval(&x).norm());
            }
        }
        sup
    }

    pub fn is_real(&self, tol: f64) -> bool {
        match self.kind {
            WeightKind::Constant => self.constant.im.abs() <= tol,
            WeightKind::Trig | WeightKind::ExpTrig => self.poly.is_conjugate_symmetric(tol),
        }
    }

    pub fn digest(&self) -> String {
        digest_json("weight-v1", self)
    }
}

// ---------------------------------------------------------------------------
// Map specification

/// T(x) = Ax + eps * v(x) mod Z^2; v is one trigonometric polynomial per
/// component, with real (conjugate-symmetric) coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    matrix: IntegerMatrix,
    epsilon: f64,
    perturbation: Vec<TrigPolynomial>,
    smoothness_r: f64,
}

#[derive(Serialize)]
struct MapDigestView<'a> {
    matrix: &'a IntegerMatrix,
    epsilon: f64,
    perturbation: &'a [TrigPolynomial],
}

impl MapSpec {
    pub fn new(
        matrix: IntegerMatrix,
        epsilon: f64,
        perturbation: Vec<TrigPolynomial>,
        smoothness_r: f64,
    ) -> Result<Self> {
        let d = matrix.dim();
        if d != 2 {
            return Err(Error::UnsupportedDimension { d });
        }
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidMap("epsilon must be finite and >= 0".into()));
        }
        if !(smoothness_r > 0.0) {
            return Err(Error::InvalidMap("smoothness r must be positive".into()));
        }
        let perturbation = if perturbation.is_empty() {
            vec![TrigPolynomial::zero(); d]
        } else {
            perturbation
        };
        if perturbation.len() != d {
            return Err(Error::InvalidMap(format!(
                "perturbation must have {d} components, got {}",
                perturbation.len()
            )));
        }
        for (i, comp) in perturbation.iter().enumerate() {
            if comp.terms().iter().any(|t| t.freq.len() != d) {
                return Err(Error::InvalidMap(format!(
                    "perturbation component {i} has frequencies of wrong dimension"
                )));
            }
            if !comp.is_conjugate_symmetric(1e-12) {
                return Err(Error::InvalidMap(format!(
                    "perturbation component {i} is not real-valued"
                )));
            }
        }
        Ok(MapSpec {
            matrix,
            epsilon,
            perturbation,
            smoothness_r,
        })
    }

    /// Unperturbed toral automorphism.
    pub fn linear(matrix: IntegerMatrix) -> Result<Self> {
        MapSpec::new(matrix, 0.0, Vec::new(), f64::INFINITY)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &IntegerMatrix {
        &self.matrix
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn smoothness_r(&self) -> f64 {
        self.smoothness_r
    }

    pub fn perturbation(&self) -> &[TrigPolynomial] {
        &self.perturbation
    }

    /// Same map with a different perturbation strength (continuation ladders).
    pub fn with_epsilon(&self, epsilon: f64) -> Result<MapSpec> {
        MapSpec::new(
            self.matrix.clone(),
            epsilon,
            self.perturbation.clone(),
            self.smoothness_r,
        )
    }

    /// Digest of the dynamical content only. eps = 0 maps with different
    /// perturbation fields are the same dynamical system and hash equally;
    /// the smoothness parameter does not influence orbits and is excluded.
    pub fn dynamics_digest(&self) -> String {
        let empty: Vec<TrigPolynomial> = Vec::new();
        let view = MapDigestView {
            matrix: &self.matrix,
            epsilon: self.epsilon,
            perturbation: if self.epsilon == 0.0 {
                &empty
            } else {
                &self.perturbation
            },
        };
        digest_json("map-v1", &view)
    }

    fn a2(&self) -> Mat2 {
        self.matrix.to_mat2()
    }

    fn a_inv2(&self) -> Mat2 {
        let inv = self.matrix.inverse_unimodular2();
        Mat2([
            [inv[0][0] as f64, inv[0][1] as f64],
            [inv[1][0] as f64, inv[1][1] as f64],
        ])
    }

    /// eps * v at a reduced point.
    pub fn perturbation_at(&self, x: [f64; 2]) -> [f64; 2] {
        if self.epsilon == 0.0 {
            return [0.0, 0.0];
        }
        [
            self.epsilon * self.perturbation[0].eval_real(&x),
            self.epsilon * self.perturbation[1].eval_real(&x),
        ]
    }

    /// eps * Dv at a reduced point (analytic, term by term).
    pub fn perturbation_jacobian(&self, x: [f64; 2]) -> Mat2 {
        if self.epsilon == 0.0 {
            return Mat2::zeros();
        }
        let g0 = self.perturbation[0].grad(&x);
        let g1 = self.perturbation[1].grad(&x);
        Mat2([
            [self.epsilon * g0[0].re, self.epsilon * g0[1].re],
            [self.epsilon * g1[0].re, self.epsilon * g1[1].re],
        ])
    }

    /// Lift evaluation without reduction: A y + eps v(y mod 1).
    pub fn lift2(&self, y: [f64; 2]) -> [f64; 2] {
        let a = self.a2();
        let lin = a.apply(y);
        if self.epsilon == 0.0 {
            return lin;
        }
        let red = [reduce_unit(y[0]), reduce_unit(y[1])];
        let v = self.perturbation_at(red);
        [lin[0] + v[0], lin[1] + v[1]]
    }

    /// Lift evaluation for arbitrary-dimension input (d = 2 enforced upstream).
    pub fn eval_lift(&self, y: &[f64]) -> Vec<f64> {
        let out = self.lift2([y[0], y[1]]);
        vec![out[0], out[1]]
    }

    /// One application of the torus map.
    pub fn eval2(&self, x: [f64; 2]) -> [f64; 2] {
        let y = self.lift2(x);
        [reduce_unit(y[0]), reduce_unit(y[1])]
    }

    pub fn eval(&self, x: &TorusPoint) -> TorusPoint {
        TorusPoint::from(self.eval2(x.as2()))
    }

    /// n-fold application, reduced every step.
    pub fn iterate2(&self, x: [f64; 2], n: u32) -> [f64; 2] {
        let mut p = x;
        for _ in 0..n {
            p = self.eval2(p);
        }
        p
    }

    pub fn iterate(&self, x: &TorusPoint, n: u32) -> TorusPoint {
        TorusPoint::from(self.iterate2(x.as2(), n))
    }

    /// DT(x) = A + eps Dv(x).
    pub fn jacobian2(&self, x: [f64; 2]) -> Mat2 {
        self.a2().add(&self.perturbation_jacobian(x))
    }

    pub fn jacobian(&self, x: &TorusPoint) -> Mat2 {
        self.jacobian2(x.as2())
    }

    /// DT^n(x) as the chain product of step Jacobians.
    pub fn monodromy2(&self, x: [f64; 2], n: u32) -> Mat2 {
        let mut p = x;
        let mut j = Mat2::identity();
        for _ in 0..n {
            j = self.jacobian2(p).mul(&j);
            p = self.eval2(p);
        }
        j
    }

    /// Sufficient contraction bound eps * sup|Dv|_inf * |A^{-1}|_inf for the
    /// inverse-map fixed point x -> A^{-1}(y - eps v(x)).
    pub fn inverse_contraction_bound(&self) -> f64 {
        if self.epsilon == 0.0 {
            return 0.0;
        }
        let dv_bound = (0..2)
            .map(|i| {
                self.perturbation[i].partial_abs_bound(0)
                    + self.perturbation[i].partial_abs_bound(1)
            })
            .fold(0.0f64, f64::max);
        self.epsilon * dv_bound * self.a_inv2().norm_inf()
    }

    /// Solve T(x) = y on the torus. Exact unimodular inverse when eps = 0,
    /// otherwise Newton on the shortest torus displacement seeded at A^{-1}y.
    pub fn inverse2(&self, y: [f64; 2], tol: f64) -> Result<[f64; 2]> {
        let ainv = self.a_inv2();
        let seed = ainv.apply(y);
        let mut x = [reduce_unit(seed[0]), reduce_unit(seed[1])];
        if self.epsilon == 0.0 {
            return Ok(x);
        }
        let bound = self.inverse_contraction_bound();
        if bound >= 1.0 {
            return Err(Error::NonConvergence {
                residual: f64::INFINITY,
                tol,
                detail: format!("contraction precheck failed: eps*|Dv|*|A^-1| = {bound:.3}"),
            });
        }
        let mut residual = f64::INFINITY;
        for _ in 0..INVERSE_MAX_ITER {
            let d = torus_displacement(self.eval2(x), y);
            residual = d[0].hypot(d[1]);
            if residual <= tol {
                return Ok(x);
            }
            let step = self
                .jacobian2(x)
                .solve(d)
                .ok_or(Error::SingularMonodromy { det: 0.0 })?;
            x = [reduce_unit(x[0] - step[0]), reduce_unit(x[1] - step[1])];
        }
        Err(Error::NonConvergence {
            residual,
            tol,
            detail: "inverse-map Newton exhausted its iteration budget".into(),
        })
    }

    pub fn inverse(&self, y: &TorusPoint, tol: f64) -> Result<TorusPoint> {
        Ok(TorusPoint::from(self.inverse2(y.as2(), tol)?))
    }

    /// n-fold inverse, reduced every step.
    pub fn inverse_iterate2(&self, x: [f64; 2], n: u32, tol: f64) -> Result<[f64; 2]> {
        let mut p = x;
        for _ in 0..n {
            p = self.inverse2(p, tol)?;
        }
        Ok(p)
    }

    /// Invariant-cone certificate and contraction-rate estimate.
    pub fn estimate_hyperbolicity(
        &self,
        grid_m: usize,
        iterates: u32,
    ) -> Result<HyperbolicityEstimate> {
        assert!(grid_m >= 32, "hyperbolicity grid must have m >= 32");
        assert!(iterates >= 1);
        if !self.matrix.is_hyperbolic2() {
            return Err(Error::NotHyperbolic(format!(
                "linear part with trace {} and det {} has an eigenvalue on the unit circle",
                self.matrix.trace(),
                self.matrix.det_i128()
            )));
        }
        let a = self.a2();
        let (mu_u, mu_s) = a
            .real_eigenvalues()
            .ok_or_else(|| Error::NotHyperbolic("complex eigenvalues".into()))?;
        let e_u = a.eigenvector(mu_u);
        let e_s = a.eigenvector(mu_s);
        // coordinates adapted to the linear splitting
        let basis = Mat2([[e_u[0], e_s[0]], [e_u[1], e_s[1]]]);
        let basis_inv = basis
            .inverse()
            .ok_or_else(|| Error::NotHyperbolic("degenerate eigenbasis".into()))?;

        let aperture = 0.5;
        let mut worst_u: f64 = 0.0;
        let mut worst_s: f64 = 0.0;
        let mut lambda_obs: f64 = 0.0;
        let mut c_obs: f64 = 1.0;

        let ainv = self.a_inv2();
        for i in 0..grid_m {
            for j in 0..grid_m {
                let x = [i as f64 / grid_m as f64, j as f64 / grid_m as f64];
                let dt = self.jacobian2(x);
                // forward map on the unstable cone |v_s| <= a |v_u|
                let m = basis_inv.mul(&dt).mul(&basis);
                worst_u = worst_u.max(cone_image_slope(&m, aperture));
                // backward map on the stable cone (axes swapped)
                let dt_inv = match dt.inverse() {
                    Some(v) => v,
                    None => {
                        return Err(Error::NotHyperbolic(
                            "singular Jacobian on sample grid".into(),
                        ))
                    }
                };
                let mi = basis_inv.mul(&dt_inv).mul(&basis);
                let swapped = Mat2([[mi.0[1][1], mi.0[1][0]], [mi.0[0][1], mi.0[0][0]]]);
                worst_s = worst_s.max(cone_image_slope(&swapped, aperture));

                if self.epsilon > 0.0 {
                    // n-step contraction factor along the orbit of x
                    let mut p = x;
                    let mut prod = Mat2::identity();
                    for step in 1..=iterates {
                        prod = self.jacobian2(p).mul(&prod);
                        p = self.eval2(p);
                        let smin = prod.sigma_min();
                        if step == iterates {
                            lambda_obs = lambda_obs.max(smin.powf(1.0 / iterates as f64));
                        }
                        c_obs = c_obs.max(smin / mu_s.abs().powi(step as i32));
                    }
                }
            }
        }
        let _ = ainv;

        let (lambda, c) = if self.epsilon == 0.0 {
            // the stable bundle is exactly the eigenline: contraction is |mu_s|^n
            (mu_s.abs(), 1.0)
        } else {
            (lambda_obs, c_obs)
        };
        let margin = aperture - worst_u.max(worst_s);
        let certified = worst_u < aperture && worst_s < aperture && lambda < 1.0;
        Ok(HyperbolicityEstimate {
            lambda,
            c,
            cone_aperture: aperture,
            cone_margin: margin,
            certified,
        })
    }
}

/// Worst slope of the image of the cone |v_2| <= a |v_1| under M, measured
/// against the first axis. Strictly below `a` means strict cone invariance.
fn cone_image_slope(m: &Mat2, a: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for t in [-a, 0.0, a] {
        let num = (m.0[1][0] + m.0[1][1] * t).abs();
        let den = (m.0[0][0] + m.0[0][1] * t).abs();
        if den == 0.0 {
            return f64::INFINITY;
        }
        worst = worst.max(num / den);
    }
    worst
}

/// Grid-heuristic hyperbolicity certificate. `certified` records that the
/// invariant-cone check passed at every sample point; it is not a
/// computer-assisted proof.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HyperbolicityEstimate {
    pub lambda: f64,
    pub c: f64,
    pub cone_aperture: f64,
    pub cone_margin: f64,
    pub certified: bool,
}

/// Tensor weight of the doubled map T^{-1} x T:
/// g~(x, y) = g(T^{-1}x) |det D_{T^{-1}x} T|^{-1} g(y).
pub fn tensor_weight(
    map: &MapSpec,
    weight: &WeightSpec,
    x: &TorusPoint,
    y: &TorusPoint,
) -> Result<Complex64> {
    let xi = map.inverse2(x.as2(), DEFAULT_INVERSE_TOL)?;
    let det = map.jacobian2(xi).det().abs();
    Ok(weight.eval(&xi) * weight.eval(&y.as2()) / det)
}


impl TrigPolynomial {
    /// The constant polynomial 1 (frequency zero).
    pub fn constant_one() -> Self {
        TrigPolynomial::new(vec![TrigTerm {
            freq: vec![0, 0],
            coeff: Complex64::new(1.0, 0.0),
        }])
    }
}
