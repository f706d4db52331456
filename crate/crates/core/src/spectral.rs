//! Fourier-Galerkin discretization of the transfer operator T_g h = g (h o T)
//! on the torus: the independent spectral oracle.
//!
//! Matrix entries are M_{jk} = <e_j, T_g e_k>: column k holds the Fourier
//! coefficients of g(x) e^{2 pi i k.T(x)}, sampled on an m x m grid and
//! transformed. Frequencies are ordered by max-norm shell, lexicographic
//! within a shell; the ordering is part of the serialization contract.

use crate::determinant::check_sigma_gap;
use crate::dynamics::{MapSpec, WeightSpec};
use crate::error::{Error, Result};
use crate::lapack::zgeev_right;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Frequency basis

/// Frequencies with |k|_inf <= K in maxnorm-lex order.
#[derive(Debug, Clone)]
pub struct FrequencyBasis {
    cutoff: i64,
    k_list: Vec<[i64; 2]>,
    index: HashMap<(i64, i64), usize>,
}

impl FrequencyBasis {
    pub fn new(cutoff: i64) -> Self {
        assert!(cutoff >= 0);
        let mut k_list = Vec::new();
        for shell in 0..=cutoff {
            let mut members = Vec::new();
            for k1 in -shell..=shell {
                for k2 in -shell..=shell {
                    if k1.abs().max(k2.abs()) == shell {
                        members.push([k1, k2]);
                    }
                }
            }
            members.sort();
            k_list.extend(members);
        }
        let index = k_list
            .iter()
            .enumerate()
            .map(|(i, k)| ((k[0], k[1]), i))
            .collect();
        FrequencyBasis {
            cutoff,
            k_list,
            index,
        }
    }

    pub fn cutoff(&self) -> i64 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.k_list.len()
    }

    pub fn at(&self, i: usize) -> [i64; 2] {
        self.k_list[i]
    }

    pub fn position(&self, k: [i64; 2]) -> Option<usize> {
        self.index.get(&(k[0], k[1])).copied()
    }
}

// ---------------------------------------------------------------------------
// Galerkin operator

/// Dense Galerkin matrix with its sampling metadata.
#[derive(Debug, Clone)]
pub struct GalerkinOperator {
    pub basis: FrequencyBasis,
    pub grid_m: usize,
    /// Column-major (2K+1)^2-square matrix.
    matrix: Vec<Complex64>,
    /// Worst column tail-energy fraction beyond the cutoff.
    pub max_tail_ratio: f64,
    /// Tail energy above 1e-6 of a column norm somewhere.
    pub aliasing_warning: bool,
}

impl GalerkinOperator {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[col * self.dim() + row]
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (col, &vc) in v.iter().enumerate() {
            if vc == Complex64::new(0.0, 0.0) {
                continue;
            }
            let column = &self.matrix[col * n..(col + 1) * n];
            for (o, &m) in out.iter_mut().zip(column) {
                *o += m * vc;
            }
        }
        out
    }

    /// Max column 2-norm.
    pub fn max_column_norm(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|c| {
                self.matrix[c * n..(c + 1) * n]
                    .iter()
                    .map(|z| z.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

fn fft2_in_place(buf: &mut [Complex64], m: usize, fft: &Arc<dyn Fft<f64>>) {
    // rows (contiguous), then columns via gather/scatter
    for row in 0..m {
        fft.process(&mut buf[row * m..(row + 1) * m]);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = buf[i * m + j];
        }
        fft.process(&mut col);
        for i in 0..m {
            buf[i * m + j] = col[i];
        }
    }
}

/// Build the Galerkin matrix for cutoff K on an m x m sampling grid
/// (m >= 4K + 4 for anti-aliasing headroom).
pub fn build_galerkin(
    map: &MapSpec,
    weight: &WeightSpec,
    cutoff: i64,
    grid_m: usize,
) -> Result<GalerkinOperator> {
    if (grid_m as i64) < 4 * cutoff + 4 {
        return Err(Error::InvalidArgument(format!(
            "grid m = {grid_m} too small for cutoff K = {cutoff} (need m >= 4K + 4)"
        )));
    }
    let basis = FrequencyBasis::new(cutoff);
    let dim = basis.dim();
    let m = grid_m;
    let mf = m as f64;

    // image of every grid node under T, as phases, plus the weight samples
    let mut theta1 = vec![0.0f64; m * m];
    let mut theta2 = vec![0.0f64; m * m];
    let mut gvals = vec![Complex64::new(0.0, 0.0); m * m];
    for a in 0..m {
        for b in 0..m {
            let x = [a as f64 / mf, b as f64 / mf];
            let tx = map.lift2(x);
            let idx = a * m + b;
            theta1[idx] = TAU * tx[0];
            theta2[idx] = TAU * tx[1];
            gvals[idx] = weight.eval(&x);
        }
    }

    let fft = FftPlanner::new().plan_fft_forward(m);
    let mut matrix = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
    let mut max_tail_ratio: f64 = 0.0;
    let norm = 1.0 / (mf * mf);

    for col in 0..dim {
        let k = basis.at(col);
        let (k1, k2) = (k[0] as f64, k[1] as f64);
        for idx in 0..m * m {
            let phase = k1 * theta1[idx] + k2 * theta2[idx];
            buf[idx] = gvals[idx] * Complex64::from_polar(1.0, phase);
        }
        fft2_in_place(&mut buf, m, &fft);

        let mut total_energy = 0.0;
        for v in buf.iter() {
            total_energy += v.norm_sqr();
        }
        let mut window_energy = 0.0;
        let column = &mut matrix[col * dim..(col + 1) * dim];
        for row in 0..dim {
            let j = basis.at(row);
            let i1 = (j[0].rem_euclid(m as i64)) as usize;
            let i2 = (j[1].rem_euclid(m as i64)) as usize;
            let coeff = buf[i1 * m + i2] * norm;
            column[row] = coeff;
        }
        for j1 in -cutoff..=cutoff {
            for j2 in -cutoff..=cutoff {
                let i1 = (j1.rem_euclid(m as i64)) as usize;
                let i2 = (j2.rem_euclid(m as i64)) as usize;
                window_energy += buf[i1 * m + i2].norm_sqr();
            }
        }
        if total_energy > 0.0 {
            let tail = ((total_energy - window_energy).max(0.0) / total_energy).sqrt();
            max_tail_ratio = max_tail_ratio.max(tail);
        }
    }

    Ok(GalerkinOperator {
        basis,
        grid_m: m,
        matrix,
        max_tail_ratio,
        aliasing_warning: max_tail_ratio > 1e-6,
    })
}

// ---------------------------------------------------------------------------
// Eigensolver with residual certificates

/// Eigenvalues sorted by descending modulus with residual certificates and
/// (when produced by a scan) cross-cutoff spreads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub eigenvalues: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub k_spread: Vec<Option<f64>>,
}

impl SpectrumEstimate {
    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }
}

/// Residual contract for reported eigenpairs.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Spectrum of a matrix that is numerically a weighted partial permutation
/// (at most one significant entry per column). Cycles of the functional
/// digraph contribute c-th roots of their weight product, everything else is
/// nilpotent. QR iteration smears exactly-nilpotent blocks into eigenvalue
/// rings of radius ~ u^(1/chain length), so this is the only route to the
/// true spectrum of unperturbed toral automorphisms.
fn permutation_spectrum(matrix: &[Complex64], n: usize) -> Option<(Vec<Complex64>, Vec<f64>)> {
    let max_entry = matrix.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let thr = 1e-12 * max_entry.max(1e-30);
    let mut succ: Vec<Option<(usize, Complex64)>> = Vec::with_capacity(n);
    let mut defect: f64 = 0.0;
    for col in 0..n {
        let column = &matrix[col * n..(col + 1) * n];
        let mut big: Option<(usize, Complex64)> = None;
        for (row, &z) in column.iter().enumerate() {
            if z.norm() >= thr {
                if big.is_some() {
                    return None; // a second significant entry: not structural
                }
                big = Some((row, z));
            } else {
                defect = defect.max(z.norm());
            }
        }
        succ.push(big);
    }

    // cycle extraction on the functional graph col -> row
    let mut state = vec![0u8; n]; // 0 unseen, 1 on current walk, 2 done
    let mut eigenvalues: Vec<Complex64> = Vec::new();
    let mut residual_vectors: Vec<Vec<Complex64>> = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut walk = Vec::new();
        let mut node = start;
        loop {
            if state[node] == 1 {
                let pos = walk.iter().position(|&w| w == node).expect("on walk");
                let cycle = &walk[pos..];
                let weights: Vec<Complex64> = cycle
                    .iter()
                    .map(|&i: &usize| succ[i].expect("cycle edge").1)
                    .collect();
                let product: Complex64 = weights.iter().product();
                let c = cycle.len() as f64;
                let r = product.norm().powf(1.0 / c);
                let base_arg = product.arg();
                for j in 0..cycle.len() {
                    let lambda = Complex64::from_polar(
                        r,
                        (base_arg + std::f64::consts::TAU * j as f64) / c,
                    );
                    // eigenvector supported on the cycle
                    let mut v = vec![Complex64::new(0.0, 0.0); n];
                    let mut coef = Complex64::new(1.0, 0.0);
                    v[cycle[0]] = coef;
                    for m in 0..cycle.len() - 1 {
                        coef = coef * weights[m] / lambda;
                        v[cycle[m + 1]] = coef;
                    }
                    eigenvalues.push(lambda);
                    residual_vectors.push(v);
                }
                break;
            }
            if state[node] == 2 {
                break;
            }
            state[node] = 1;
            walk.push(node);
            match succ[node] {
                Some((next, _)) => node = next,
                None => break,
            }
        }
        for &w in &walk {
            state[w] = 2;
        }
    }

    // honest residuals through the full matrix, suppressed entries included
    let mut residuals = Vec::with_capacity(eigenvalues.len());
    for (lambda, v) in eigenvalues.iter().zip(&residual_vectors) {
        let mut rnorm = 0.0;
        let mut vnorm = 0.0;
        for row in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (col, &vc) in v.iter().enumerate() {
                if vc != Complex64::new(0.0, 0.0) {
                    acc += matrix[col * n + row] * vc;
                }
            }
            rnorm += (acc - lambda * v[row]).norm_sqr();
            vnorm += v[row].norm_sqr();
        }
        residuals.push(rnorm.sqrt() / vnorm.sqrt().max(f64::MIN_POSITIVE));
    }
    // nilpotent remainder: zeros certified by the permutation defect
    while eigenvalues.len() < n {
        eigenvalues.push(Complex64::new(0.0, 0.0));
        residuals.push(defect);
    }
    Some((eigenvalues, residuals))
}

/// Dense eigensolve of an explicit matrix (column-major), reporting the
/// `count` largest-modulus eigenvalues with residuals |Mv - lambda v|/|v|.
/// Weighted partial permutations take the exact structural route instead of
/// QR iteration.
pub fn eigen_solve_matrix(
    matrix: &[Complex64],
    n: usize,
    count: usize,
) -> Result<SpectrumEstimate> {
    if count > n {
        return Err(Error::InvalidArgument(format!(
            "requested {count} eigenvalues from a dimension-{n} operator"
        )));
    }
    if let Some((mut w, mut res)) = permutation_spectrum(matrix, n) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            let a = (w[i].norm(), w[i].re, w[i].im);
            let b = (w[j].norm(), w[j].re, w[j].im);
            b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
        });
        w = order.iter().map(|&i| w[i]).collect();
        res = order.iter().map(|&i| res[i]).collect();
        w.truncate(count);
        res.truncate(count);
        if let Some(worst) = res.iter().copied().reduce(f64::max) {
            if worst > EIGEN_RESIDUAL_TOL {
                return Err(Error::EigenFailure(format!(
                    "structural eigenpair residual {worst:.3e} exceeds {EIGEN_RESIDUAL_TOL:.1e}"
                )));
            }
        }
        let k_spread = vec![None; w.len()];
        return Ok(SpectrumEstimate {
            eigenvalues: w,
            residuals: res,
            k_spread,
        });
    }
    let (w, vr) = zgeev_right(matrix.to_vec(), n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let a = (w[i].norm(), w[i].re, w[i].im);
        let b = (w[j].norm(), w[j].re, w[j].im);
        b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut eigenvalues = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for &i in order.iter().take(count) {
        let v = &vr[i * n..(i + 1) * n];
        let mut vnorm = 0.0;
        for x in v {
            vnorm += x.norm_sqr();
        }
        let vnorm = vnorm.sqrt();
        // residual |Mv - lambda v| via one matvec against the original matrix
        let mut rnorm = 0.0;
        for row in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..n {
                acc += matrix[col * n + row] * v[col];
            }
            rnorm += (acc - w[i] * v[row]).norm_sqr();
        }
        let residual = rnorm.sqrt() / vnorm.max(f64::MIN_POSITIVE);
        if residual > EIGEN_RESIDUAL_TOL {
            return Err(Error::EigenFailure(format!(
                "eigenpair residual {residual:.3e} for lambda = {} exceeds {EIGEN_RESIDUAL_TOL:.1e}",
                w[i]
            )));
        }
        eigenvalues.push(w[i]);
        residuals.push(residual);
    }
    let k_spread = vec![None; eigenvalues.len()];
    Ok(SpectrumEstimate {
        eigenvalues,
        residuals,
        k_spread,
    })
}

/// Residual-certified spectrum of a Galerkin operator.
pub fn eigen_solve(op: &GalerkinOperator, count: usize) -> Result<SpectrumEstimate> {
    eigen_solve_matrix(op.matrix(), op.dim(), count)
}

// ---------------------------------------------------------------------------
// Projector traces and matching

/// Tr P^n = sum over eigenvalues outside the cut, n = 1..n_max.
pub fn projector_traces(
    spec: &SpectrumEstimate,
    sigma: f64,
    n_max: u32,
    gap_rel: f64,
) -> Result<Vec<Complex64>> {
    check_sigma_gap(sigma, &spec.moduli(), gap_rel)?;
    let outside: Vec<Complex64> = spec
        .eigenvalues
        .iter()
        .copied()
        .filter(|z| z.norm() > sigma)
        .collect();
    let mut out = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let mut acc = Complex64::new(0.0, 0.0);
        for z in &outside {
            acc += z.powi(n as i32);
        }
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MatchedPair {
    pub zero_index: usize,
    pub eig_index: usize,
    pub zero: Complex64,
    pub eig: Complex64,
    /// |z * lambda - 1|.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_zeros: Vec<usize>,
    pub unmatched_eigs: Vec<usize>,
}

/// Greedy bipartite matching minimizing |z * lambda - 1|.
pub fn match_resonances(
    zeros: &[Complex64],
    eigs: &[Complex64],
    tol: f64,
) -> MatchReport {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, z) in zeros.iter().enumerate() {
        for (j, l) in eigs.iter().enumerate() {
            let res = (z * l - Complex64::new(1.0, 0.0)).norm();
            if res <= tol {
                candidates.push((res, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut zero_used = vec![false; zeros.len()];
    let mut eig_used = vec![false; eigs.len()];
    let mut pairs = Vec::new();
    for (res, i, j) in candidates {
        if zero_used[i] || eig_used[j] {
            continue;
        }
        zero_used[i] = true;
        eig_used[j] = true;
        pairs.push(MatchedPair {
            zero_index: i,
            eig_index: j,
            zero: zeros[i],
            eig: eigs[j],
            residual: res,
        });
    }
    MatchReport {
        pairs,
        unmatched_zeros: (0..zeros.len()).filter(|&i| !zero_used[i]).collect(),
        unmatched_eigs: (0..eigs.len()).filter(|&j| !eig_used[j]).collect(),
    }
}

// ---------------------------------------------------------------------------
// Convergence scan across cutoffs

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackedEigenvalue {
    /// Value at the largest cutoff.
    pub value: Complex64,
    /// Max pairwise distance across cutoffs.
    pub spread: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceScan {
    pub k_values: Vec<i64>,
    pub spectra: Vec<SpectrumEstimate>,
    pub tracked: Vec<TrackedEigenvalue>,
}

/// Sampling grid for a cutoff: at least the configured base, at least 4K+4,
/// rounded to a power of two for the FFT.
pub fn galerkin_grid_for(cutoff: i64, base: usize) -> usize {
    let need = (4 * cutoff + 4) as usize;
    base.max(need).next_power_of_two()
}

/// Track eigenvalues across increasing cutoffs by modulus-ordered greedy
/// pairing against the largest cutoff. Returns the tracked table and the
/// per-reference-eigenvalue spreads.
pub fn track_across_cutoffs(
    spectra: &[SpectrumEstimate],
    spread_tol: f64,
) -> (Vec<TrackedEigenvalue>, Vec<Option<f64>>) {
    let (reference, others) = spectra.split_last().expect("nonempty");
    let mut used: Vec<Vec<bool>> = others
        .iter()
        .map(|s| vec![false; s.eigenvalues.len()])
        .collect();
    let mut tracked = Vec::with_capacity(reference.eigenvalues.len());
    let mut ref_spreads = vec![None; reference.eigenvalues.len()];
    for (i, &z) in reference.eigenvalues.iter().enumerate() {
        let mut family = vec![z];
        let mut complete = true;
        for (spec, used) in others.iter().zip(used.iter_mut()) {
            let mut best: Option<(usize, f64)> = None;
            for (j, &cand) in spec.eigenvalues.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = (cand - z).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    family.push(spec.eigenvalues[j]);
                }
                None => complete = false,
            }
        }
        let mut spread: f64 = 0.0;
        for a in 0..family.len() {
            for b in (a + 1)..family.len() {
                spread = spread.max((family[a] - family[b]).norm());
            }
        }
        if !complete {
            spread = f64::INFINITY;
        }
        ref_spreads[i] = Some(spread);
        tracked.push(TrackedEigenvalue {
            value: z,
            spread,
            converged: complete && spread <= spread_tol,
        });
    }
    (tracked, ref_spreads)
}

/// Build, solve and track spectra for every cutoff in `k_list`.
pub fn convergence_scan(
    map: &MapSpec,
    weight: &WeightSpec,
    k_list: &[i64],
    count: usize,
    grid_base: usize,
    spread_tol: f64,
) -> Result<ConvergenceScan> {
    if k_list.len() < 2 {
        return Err(Error::InvalidArgument(
            "convergence scan needs at least two cutoffs".into(),
        ));
    }
    let mut sorted = k_list.to_vec();
    sorted.sort_unstable();
    let mut spectra = Vec::with_capacity(sorted.len());
    for &k in &sorted {
        let op = build_galerkin(map, weight, k, galerkin_grid_for(k, grid_base))?;
        let c = count.min(op.dim());
        spectra.push(eigen_solve(&op, c)?);
    }
    let (tracked, ref_spreads) = track_across_cutoffs(&spectra, spread_tol);
    if let Some(last) = spectra.last_mut() {
        last.k_spread = ref_spreads;
    }
    Ok(ConvergenceScan {
        k_values: sorted,
        spectra,
        tracked,
    })
}

// ---------------------------------------------------------------------------
// Serialization

/// CSV rank,re_lambda,im_lambda,modulus,residual,k_spread.
pub fn write_spectrum_csv(spec: &SpectrumEstimate, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "rank,re_lambda,im_lambda,modulus,residual,k_spread")?;
    for (i, (z, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        let spread = spec.k_spread[i]
            .map(|s| s.to_string())
            .unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", i + 1, z.re, z.im, z.norm(), r, spread)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MatrixDumpHeader<'a> {
    schema: &'a str,
    #[serde(rename = "K")]
    k: i64,
    d: usize,
    ordering: &'a str,
    m: usize,
}

/// Diagnostic matrix dump: JSON header, then row-major entries, one row per
/// line as alternating re im values.
pub fn write_matrix_dump(op: &GalerkinOperator, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = MatrixDumpHeader {
        schema: "galerkin-v1",
        k: op.basis.cutoff(),
        d: 2,
        ordering: "maxnorm-lex",
        m: op.grid_m,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    let n = op.dim();
    for row in 0..n {
        let mut line = String::with_capacity(n * 8);
        for col in 0..n {
            let z = op.entry(row, col);
            if col > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{} {}", z.re, z.im));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}
