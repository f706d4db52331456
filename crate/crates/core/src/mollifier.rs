//! Mollified delta-kernel traces.
//!
//! A unit-mass kernel j_eps supported in a ball of radius eps stands in for
//! the diagonal delta functional: pairing it with the orbit displacement of
//! T^n turns each fixed point into a contribution g_n(x)/|det(DT^n - Id)|
//! as eps -> 0, reproducing the orbit sums tr_n without enumerating orbits.
//! The tensor variants smooth the doubled operator of T^{-1} x T and target
//! tr_{2n} and tr_{2n+1}.

use crate::dynamics::{MapSpec, WeightSpec, DEFAULT_INVERSE_TOL};
use crate::error::{Error, Result};
use crate::grid::QuadratureGrid;
use crate::numeric::{wrap_half, ComplexKahanSum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierShape {
    /// Compactly supported C-infinity bump exp(-1/(1 - (r/eps)^2)).
    Bump,
    /// Gaussian with sigma = eps/4 cut at the support radius (8 sigma across).
    TruncatedGaussian,
}

/// Smoothing kernel j_eps: unit mass, support radius eps.
///
/// Normalization happens on the evaluation grid, so the discrete mass is
/// exactly 1 and the cut discontinuity of the truncated Gaussian cannot leak
/// fixed-point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    pub epsilon: f64,
    pub shape: MollifierShape,
}

impl MollifierSpec {
    pub fn new(epsilon: f64, shape: MollifierShape) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(
                "mollifier width must be positive".into(),
            ));
        }
        // support must fit inside the injectivity scale of the torus
        if 2.0 * epsilon >= 0.5 {
            return Err(Error::InvalidArgument(format!(
                "mollifier width {epsilon} too large: need 2 eps < 0.5"
            )));
        }
        Ok(MollifierSpec { epsilon, shape })
    }

    pub fn truncated_gaussian(epsilon: f64) -> Result<Self> {
        MollifierSpec::new(epsilon, MollifierShape::TruncatedGaussian)
    }

    /// Unnormalized profile as a function of squared distance.
    pub fn profile(&self, r2: f64) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        if r2 >= e2 {
            return 0.0;
        }
        match self.shape {
            MollifierShape::Bump => (-1.0 / (1.0 - r2 / e2)).exp(),
            MollifierShape::TruncatedGaussian => {
                // sigma = eps / 4
                let sigma2 = e2 / 16.0;
                (-r2 / (2.0 * sigma2)).exp()
            }
        }
    }

    /// Discrete mass of the unnormalized profile on the grid.
    pub fn grid_mass(&self, grid: &QuadratureGrid) -> f64 {
        let m = grid.m();
        let reach = (self.epsilon * m as f64).ceil() as i64 + 1;
        let mut acc = 0.0;
        for di in -reach..=reach {
            let x = di as f64 / m as f64;
            let x = wrap_half(x);
            for dj in -reach..=reach {
                let y = wrap_half(dj as f64 / m as f64);
                acc += self.profile(x * x + y * y);
            }
        }
        acc * grid.cell_weight()
    }

    /// Continuum mass (closed form for the truncated Gaussian, radial
    /// quadrature for the bump); reference value for tests.
    pub fn analytic_mass(&self) -> f64 {
        match self.shape {
            MollifierShape::TruncatedGaussian => {
                let sigma2 = self.epsilon * self.epsilon / 16.0;
                let cut = self.epsilon * self.epsilon / (2.0 * sigma2);
                std::f64::consts::TAU * sigma2 * (1.0 - (-cut).exp())
            }
            MollifierShape::Bump => {
                // 2 pi int_0^eps r exp(-1/(1-(r/eps)^2)) dr, midpoint rule
                let steps = 20000;
                let h = self.epsilon / steps as f64;
                let mut acc = 0.0;
                for i in 0..steps {
                    let r = (i as f64 + 0.5) * h;
                    acc += r * self.profile(r * r);
                }
                std::f64::consts::TAU * acc * h
            }
        }
    }

    fn require_resolved(&self, grid: &QuadratureGrid) -> Result<f64> {
        if (grid.m() as f64) * self.epsilon < 8.0 {
            return Err(Error::GridTooCoarse {
                m: grid.m(),
                epsilon: self.epsilon,
            });
        }
        let mass = self.grid_mass(grid);
        if !(mass > 0.0) {
            return Err(Error::GridTooCoarse {
                m: grid.m(),
                epsilon: self.epsilon,
            });
        }
        Ok(1.0 / mass)
    }
}

fn displacement2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = wrap_half(a[0] - b[0]);
    let dy = wrap_half(a[1] - b[1]);
    dx * dx + dy * dy
}

/// int g_n(x) j_eps(T^n x - x) dx: the mollified flat trace of T_g^n.
pub fn mollified_trace(
    map: &MapSpec,
    weight: &WeightSpec,
    n: u32,
    moll: &MollifierSpec,
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    let norm = moll.require_resolved(grid)?;
    let eps2 = moll.epsilon * moll.epsilon;
    let mut acc = ComplexKahanSum::new();
    grid.for_each_node(|x| {
        let mut p = x;
        let mut g = Complex64::new(1.0, 0.0);
        for _ in 0..n {
            g *= weight.eval(&p);
            p = map.eval2(p);
        }
        let r2 = displacement2(p, x);
        if r2 < eps2 {
            acc.add(g * moll.profile(r2));
        }
    });
    Ok(acc.value() * Complex64::new(norm * grid.cell_weight(), 0.0))
}

/// Orbit data shared by the tensor traces: backward points x, T^{-1}x, ...
/// and forward points x, Tx, ...
fn two_sided_orbit(
    map: &MapSpec,
    x: [f64; 2],
    back: u32,
    fwd: u32,
) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>)> {
    let mut bwd = Vec::with_capacity(back as usize + 1);
    bwd.push(x);
    let mut q = x;
    for _ in 0..back {
        q = map.inverse2(q, DEFAULT_INVERSE_TOL)?;
        bwd.push(q);
    }
    let mut fwdv = Vec::with_capacity(fwd as usize + 1);
    fwdv.push(x);
    let mut p = x;
    for _ in 0..fwd {
        p = map.eval2(p);
        fwdv.push(p);
    }
    Ok((bwd, fwdv))
}

/// Weight of the doubled map along the diagonal orbit:
/// prod_{i=0}^{n-1} g~(T^{-i}x, T^i x) with
/// g~(a, b) = g(T^{-1}a) g(b) / |det DT(T^{-1}a)|.
fn tensor_weight_along(
    map: &MapSpec,
    weight: &WeightSpec,
    bwd: &[[f64; 2]],
    fwd: &[[f64; 2]],
    n: u32,
) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for i in 0..n as usize {
        let pre = bwd[i + 1]; // T^{-1} of bwd[i]
        let det = map.jacobian2(pre).det().abs();
        acc *= weight.eval(&pre) * weight.eval(&fwd[i]) / det;
    }
    acc
}

/// Mollified pairing of (T_g* (x) T_g)^n with the diagonal delta; the
/// eps -> 0 limit is tr_{2n}.
pub fn mollified_tensor_trace_even(
    map: &MapSpec,
    weight: &WeightSpec,
    n: u32,
    moll: &MollifierSpec,
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    let norm = moll.require_resolved(grid)?;
    let eps2 = moll.epsilon * moll.epsilon;
    let mut acc = ComplexKahanSum::new();
    let mut failure = None;
    grid.for_each_node(|x| {
        if failure.is_some() {
            return;
        }
        match two_sided_orbit(map, x, n, n) {
            Ok((bwd, fwd)) => {
                let r2 = displacement2(bwd[n as usize], fwd[n as usize]);
                if r2 < eps2 {
                    let g = tensor_weight_along(map, weight, &bwd, &fwd, n);
                    acc.add(g * moll.profile(r2));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(acc.value() * Complex64::new(norm * grid.cell_weight(), 0.0))
}

/// Same pairing against the shifted delta (T_g* (x) Id) delta; the limit is
/// tr_{2n+1}.
pub fn mollified_tensor_trace_odd(
    map: &MapSpec,
    weight: &WeightSpec,
    n: u32,
    moll: &MollifierSpec,
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    let norm = moll.require_resolved(grid)?;
    let eps2 = moll.epsilon * moll.epsilon;
    let mut acc = ComplexKahanSum::new();
    let mut failure = None;
    grid.for_each_node(|x| {
        if failure.is_some() {
            return;
        }
        match two_sided_orbit(map, x, n + 1, n) {
            Ok((bwd, fwd)) => {
                let r2 = displacement2(bwd[(n + 1) as usize], fwd[n as usize]);
                if r2 < eps2 {
                    let g = tensor_weight_along(map, weight, &bwd, &fwd, n);
                    let last = bwd[(n + 1) as usize];
                    let extra = weight.eval(&last) / map.jacobian2(last).det().abs();
                    acc.add(g * extra * moll.profile(r2));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(acc.value() * Complex64::new(norm * grid.cell_weight(), 0.0))
}

// ---------------------------------------------------------------------------
// Richardson extrapolation in eps

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Extrapolation {
    pub value: Complex64,
    pub error_estimate: f64,
    /// Fitted convergence exponent, absent for constant ladders.
    pub exponent: Option<f64>,
}

/// Fit value(eps) = a + b eps^p on a geometric ladder (eps descending) and
/// return a. The exponent comes from successive difference ratios, clamped
/// to [1, 3]; differences at the noise floor short-circuit to the last value.
pub fn epsilon_extrapolate(values: &[(f64, Complex64)]) -> Result<Extrapolation> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(
            "extrapolation needs at least 3 ladder values".into(),
        ));
    }
    let mut ladder = values.to_vec();
    ladder.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for w in ladder.windows(2) {
        if !(w[0].0 > w[1].0 && w[1].0 > 0.0) {
            return Err(Error::InvalidArgument(
                "ladder epsilons must be positive and distinct".into(),
            ));
        }
    }
    let last = ladder[ladder.len() - 1];
    let diffs: Vec<(f64, f64, Complex64)> = ladder
        .windows(2)
        .map(|w| (w[0].0, w[1].0, w[0].1 - w[1].1))
        .collect();
    let floor = 1e-13 * (1.0 + last.1.norm());
    if diffs.iter().all(|d| d.2.norm() <= floor) {
        return Ok(Extrapolation {
            value: last.1,
            error_estimate: 0.0,
            exponent: None,
        });
    }
    for w in diffs.windows(2) {
        let (prev, next) = (w[0].2.norm(), w[1].2.norm());
        if next > prev && next > floor {
            return Err(Error::NonMonotone(format!(
                "difference grew from {prev:.3e} to {next:.3e} along the ladder"
            )));
        }
    }
    // exponent from consecutive difference ratios (exact on geometric ladders)
    let mut exponents: Vec<f64> = Vec::new();
    for w in diffs.windows(2) {
        let (m0, m1) = (w[0].2.norm(), w[1].2.norm());
        if m0 > floor && m1 > floor {
            let ratio_eps = w[0].0 / w[1].0;
            exponents.push((m0 / m1).ln() / ratio_eps.ln());
        }
    }
    let p = if exponents.is_empty() {
        2.0
    } else {
        exponents.sort_by(|a, b| a.partial_cmp(b).unwrap());
        exponents[exponents.len() / 2]
    }
    .clamp(1.0, 3.0);

    let (e_prev, e_last, d_last) = diffs[diffs.len() - 1];
    let denom = e_prev.powf(p) - e_last.powf(p);
    let b = d_last / denom;
    let value = last.1 - b * e_last.powf(p);
    let rho = e_last / e_prev;
    Ok(Extrapolation {
        value,
        error_estimate: d_last.norm() * rho.powf(p),
        exponent: Some(p),
    })
}

/// err_{i+1} <= allowance * err_i, with an absolute noise floor exempting
/// steps that already sit at quadrature accuracy.
pub fn ladder_errors_decrease(errors: &[f64], allowance: f64, floor: f64) -> bool {
    errors
        .windows(2)
        .all(|w| w[1] <= (allowance * w[0]).max(floor))
}

/// Extrapolate, falling back to the finest value when the ladder carries no
/// monotone trend (grid noise dominating): the value is then known only to
/// within the ladder scatter, which becomes the error estimate. The returned
/// string records the downgrade.
pub fn extrapolate_or_scatter(
    values: &[(f64, Complex64)],
) -> Result<(Extrapolation, Option<String>)> {
    match epsilon_extrapolate(values) {
        Ok(ex) => Ok((ex, None)),
        Err(Error::NonMonotone(msg)) => {
            let mut ladder = values.to_vec();
            ladder.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let scatter = ladder
                .windows(2)
                .map(|w| (w[0].1 - w[1].1).norm())
                .fold(0.0f64, f64::max);
            Ok((
                Extrapolation {
                    value: ladder.last().expect("nonempty ladder").1,
                    error_estimate: scatter,
                    exponent: None,
                },
                Some(msg),
            ))
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// Ladder serialization

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRow {
    pub epsilon: f64,
    pub grid_m: usize,
    pub value: Complex64,
    pub reference: Complex64,
    pub abs_error: f64,
}

/// CSV epsilon,grid_m,re_value,im_value,reference_re,reference_im,abs_error.
pub fn write_ladder_csv(label: &str, rows: &[LadderRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "label,epsilon,grid_m,re_value,im_value,reference_re,reference_im,abs_error"
    )?;
    for r in rows {
        writeln!(
            w,
            "{label},{},{},{},{},{},{},{}",
            r.epsilon, r.grid_m, r.value.re, r.value.im, r.reference.re, r.reference.im, r.abs_error
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IntegerMatrix, MapSpec};

    fn cat_map() -> MapSpec {
        MapSpec::linear(IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap()).unwrap()
    }

    #[test]
    fn grid_mass_normalizes_to_one() {
        for shape in [MollifierShape::TruncatedGaussian, MollifierShape::Bump] {
            for eps in [0.1, 0.05, 0.025] {
                let moll = MollifierSpec::new(eps, shape).unwrap();
                let grid = QuadratureGrid::new(1024);
                let norm = 1.0 / moll.grid_mass(&grid);
                // normalized discrete mass is 1 by construction
                let mass = moll.grid_mass(&grid) * norm;
                assert!((mass - 1.0).abs() < 1e-12);
                // and the grid mass agrees with the continuum at quadrature accuracy
                let analytic = moll.analytic_mass();
                assert!(
                    (moll.grid_mass(&grid) - analytic).abs() / analytic < 2e-3,
                    "{shape:?} eps={eps}: grid {} vs analytic {analytic}",
                    moll.grid_mass(&grid)
                );
            }
        }
    }

    #[test]
    fn rejects_oversized_support_and_coarse_grids() {
        assert!(MollifierSpec::truncated_gaussian(0.25).is_err());
        let moll = MollifierSpec::truncated_gaussian(0.05).unwrap();
        let grid = QuadratureGrid::new(64); // 64 * 0.05 = 3.2 < 8
        let err = mollified_trace(&cat_map(), &WeightSpec::one(), 1, &moll, &grid).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse { .. }));
    }

    #[test]
    fn mollified_trace_hits_cat_map_value() {
        let map = cat_map();
        let moll = MollifierSpec::truncated_gaussian(0.05).unwrap();
        let grid = QuadratureGrid::new(1024);
        let v = mollified_trace(&map, &WeightSpec::one(), 1, &moll, &grid).unwrap();
        assert!((v.re - 1.0).abs() <= 3e-2, "got {v}");
        assert!(v.im.abs() <= 1e-10);
    }

    #[test]
    fn zero_weight_gives_zero() {
        let map = cat_map();
        let moll = MollifierSpec::truncated_gaussian(0.05).unwrap();
        let grid = QuadratureGrid::new(256);
        let zero = WeightSpec::constant(Complex64::new(0.0, 0.0));
        let v = mollified_trace(&map, &zero, 2, &moll, &grid).unwrap();
        assert_eq!(v, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn homogeneity_in_the_weight() {
        let map = cat_map();
        let moll = MollifierSpec::truncated_gaussian(0.06).unwrap();
        let grid = QuadratureGrid::new(512);
        let c = Complex64::new(0.8, 0.1);
        let one = WeightSpec::one();
        let cw = WeightSpec::constant(c);
        let n = 2;
        let base = mollified_trace(&map, &one, n, &moll, &grid).unwrap();
        let scaled = mollified_trace(&map, &cw, n, &moll, &grid).unwrap();
        assert!((scaled - base * c.powi(n as i32)).norm() <= 1e-12);

        // tensor functionals are homogeneous of degree 2n and 2n+1
        let base_e = mollified_tensor_trace_even(&map, &one, 1, &moll, &grid).unwrap();
        let scaled_e = mollified_tensor_trace_even(&map, &cw, 1, &moll, &grid).unwrap();
        assert!((scaled_e - base_e * c.powi(2)).norm() <= 1e-12);
        let base_o = mollified_tensor_trace_odd(&map, &one, 1, &moll, &grid).unwrap();
        let scaled_o = mollified_tensor_trace_odd(&map, &cw, 1, &moll, &grid).unwrap();
        assert!((scaled_o - base_o * c.powi(3)).norm() <= 1e-12);
    }

    #[test]
    fn tensor_even_matches_tr2() {
        let map = cat_map();
        let moll = MollifierSpec::truncated_gaussian(0.05).unwrap();
        let grid = QuadratureGrid::new(1024);
        let v = mollified_tensor_trace_even(&map, &WeightSpec::one(), 1, &moll, &grid).unwrap();
        assert!((v.re - 1.0).abs() <= 5e-2, "got {v}");
    }

    #[test]
    fn tensor_odd_reduces_to_tr1_and_tr3() {
        let map = cat_map();
        let moll = MollifierSpec::truncated_gaussian(0.05).unwrap();
        let grid = QuadratureGrid::new(1024);
        let v0 = mollified_tensor_trace_odd(&map, &WeightSpec::one(), 0, &moll, &grid).unwrap();
        assert!((v0.re - 1.0).abs() <= 3e-2, "n=0 got {v0}");
        let v1 = mollified_tensor_trace_odd(&map, &WeightSpec::one(), 1, &moll, &grid).unwrap();
        assert!((v1.re - 1.0).abs() <= 5e-2, "n=1 got {v1}");
    }

    #[test]
    fn extrapolation_recovers_quadratic_model() {
        let a = Complex64::new(0.73, -0.12);
        let b = Complex64::new(2.1, 0.4);
        let data: Vec<(f64, Complex64)> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| (e, a + b * e * e))
            .collect();
        let ex = epsilon_extrapolate(&data).unwrap();
        assert!((ex.value - a).norm() <= 1e-12);
        assert!((ex.exponent.unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn extrapolation_constant_ladder() {
        let a = Complex64::new(1.0, 0.0);
        let data = vec![(0.1, a), (0.05, a), (0.025, a)];
        let ex = epsilon_extrapolate(&data).unwrap();
        assert_eq!(ex.value, a);
        assert_eq!(ex.error_estimate, 0.0);
        assert!(ex.exponent.is_none());
    }

    #[test]
    fn extrapolation_rejects_growing_differences() {
        let data = vec![
            (0.1, Complex64::new(1.0, 0.0)),
            (0.05, Complex64::new(1.001, 0.0)),
            (0.025, Complex64::new(1.1, 0.0)),
        ];
        let err = epsilon_extrapolate(&data).unwrap_err();
        assert!(matches!(err, Error::NonMonotone(_)));
    }

    #[test]
    fn ladder_monotonicity_helper() {
        assert!(ladder_errors_decrease(&[1e-2, 5e-3, 2e-3], 1.2, 1e-9));
        assert!(!ladder_errors_decrease(&[1e-2, 5e-3, 7e-3], 1.2, 1e-9));
        // noise-floor exemption
        assert!(ladder_errors_decrease(&[1e-10, 3e-11, 8e-11], 1.2, 1e-9));
    }
}
