//! The dynamical determinant d(z) = exp(-sum_n tr_n z^n / n): Taylor
//! coefficients from the trace table, the certified disk radius, zero
//! extraction stabilized across truncation orders, and the spectral
//! factorization check against oracle eigenvalues.

use crate::error::{Error, Result};
use crate::numeric::ComplexKahanSum;
use crate::roots::{all_roots, PolishedRoot, RootFindOptions};
use crate::traces::TraceTable;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

// ---------------------------------------------------------------------------
// Series coefficients

/// Taylor coefficients c_0..c_N of d(z), with c_0 = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterminantSeries {
    pub map_digest: String,
    pub weight_digest: String,
    pub coefficients: Vec<Complex64>,
}

impl DeterminantSeries {
    pub fn truncation_order(&self) -> u32 {
        (self.coefficients.len() - 1) as u32
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coefficients.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }
}

/// c_0 = 1, c_m = -(1/m) sum_{k=1}^{m} tr_k c_{m-k}.
pub fn coefficients_from_traces(traces: &TraceTable, n: u32) -> Result<DeterminantSeries> {
    if n > traces.n_max {
        return Err(Error::InsufficientTraces {
            have: traces.n_max,
            need: n,
        });
    }
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for m in 1..=n as usize {
        let mut acc = ComplexKahanSum::new();
        for k in 1..=m {
            acc.add(traces.get(k as u32).expect("checked above") * c[m - k]);
        }
        c.push(-acc.value() / m as f64);
    }
    Ok(DeterminantSeries {
        map_digest: traces.map_digest.clone(),
        weight_digest: traces.weight_digest.clone(),
        coefficients: c,
    })
}

/// Independent re-check of the Newton recursion, not the generating path:
/// max_m |m c_m + sum_k tr_k c_{m-k}| (plain summation order reversed).
pub fn recursion_residual(series: &DeterminantSeries, traces: &TraceTable) -> f64 {
    let c = &series.coefficients;
    let mut worst: f64 = 0.0;
    for m in 1..c.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (1..=m).rev() {
            if let Some(tr) = traces.get(k as u32) {
                acc += tr * c[m - k];
            }
        }
        worst = worst.max((Complex64::new(m as f64, 0.0) * c[m] + acc).norm());
    }
    worst
}

/// Invert the recursion: recover power sums tr_n from coefficients.
pub fn power_sums_from_coefficients(series: &DeterminantSeries) -> Vec<Complex64> {
    let c = &series.coefficients;
    let mut tr: Vec<Complex64> = Vec::with_capacity(c.len().saturating_sub(1));
    for m in 1..c.len() {
        let mut acc = -Complex64::new(m as f64, 0.0) * c[m];
        for k in 1..m {
            acc -= tr[k - 1] * c[m - k];
        }
        tr.push(acc);
    }
    tr
}

// ---------------------------------------------------------------------------
// Certified radius

/// Closest integer; `None` exactly at half-integer ties.
fn closest_integer(a: f64) -> Option<f64> {
    let fl = a.floor();
    let frac = a - fl;
    if frac == 0.5 {
        None
    } else {
        Some(if frac < 0.5 { fl } else { fl + 1.0 })
    }
}

/// Parameters of the spectral bounds: p = [r/2], q -> r - p,
/// alpha_r = min(p, r - p), rho = lambda^alpha |g|, rho~ = rho |g|,
/// rho* = max(rho, sqrt(rho~)) (= |g| lambda^{alpha/2} for lambda < 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralBoundParams {
    pub r: f64,
    pub p: f64,
    pub q: f64,
    pub alpha_r: f64,
    pub lambda: f64,
    pub g_sup: f64,
    pub rho: f64,
    pub rho_tilde: f64,
    pub rho_star: f64,
    pub sigma: Option<f64>,
}

impl SpectralBoundParams {
    pub fn new(r: f64, lambda: f64, g_sup: f64) -> Result<Self> {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "smoothness r must be finite and positive, got {r}"
            )));
        }
        if !(0.0 < lambda && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "contraction rate lambda must lie in (0,1), got {lambda}"
            )));
        }
        if !(g_sup > 0.0) {
            return Err(Error::InvalidArgument("weight bound must be positive".into()));
        }
        let p = closest_integer(r / 2.0).ok_or(Error::AmbiguousRounding { r })?;
        let q = r - p;
        let alpha_r = p.min(q);
        let rho = lambda.powf(alpha_r) * g_sup;
        let rho_tilde = rho * g_sup;
        let rho_star = rho.max(rho_tilde.sqrt());
        Ok(SpectralBoundParams {
            r,
            p,
            q,
            alpha_r,
            lambda,
            g_sup,
            rho,
            rho_tilde,
            rho_star,
            sigma: None,
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }
}

/// Radius of the certified disk, 1 / rho*.
pub fn certified_radius(params: &SpectralBoundParams) -> f64 {
    1.0 / params.rho_star
}

/// Spectral cut: log-midpoint of the widest gap of the oracle moduli, raised
/// to respect sigma > max(rho, rho~) whenever the gap permits. Refuses cuts
/// within the relative gap of an eigenvalue modulus.
pub fn choose_sigma(
    params: &SpectralBoundParams,
    moduli: &[f64],
    gap_rel: f64,
) -> Result<f64> {
    const FLOOR: f64 = 1e-6;
    let mut mods: Vec<f64> = moduli.iter().copied().filter(|&m| m >= FLOOR).collect();
    mods.sort_by(|a, b| b.partial_cmp(a).unwrap());
    mods.push(FLOOR);
    if mods.len() < 2 {
        return Err(Error::InvalidArgument(
            "no eigenvalues above the sigma floor".into(),
        ));
    }
    let mut best = (0usize, 0.0f64);
    for i in 0..mods.len() - 1 {
        let gap = mods[i] / mods[i + 1];
        if gap > best.1 {
            best = (i, gap);
        }
    }
    let upper = mods[best.0];
    let mut lower = mods[best.0 + 1];
    let certified_floor = params.rho.max(params.rho_tilde);
    if certified_floor > lower && certified_floor < upper {
        lower = certified_floor;
    }
    let sigma = (lower * upper).sqrt();
    check_sigma_gap(sigma, moduli, gap_rel)?;
    Ok(sigma)
}

/// No eigenvalue modulus may sit within the relative gap of the cut circle.
pub fn check_sigma_gap(sigma: f64, moduli: &[f64], gap_rel: f64) -> Result<()> {
    for &m in moduli {
        if m > 0.0 && (m / sigma).ln().abs() < (1.0 + gap_rel).ln() {
            return Err(Error::SigmaOnEigenvalue { sigma, modulus: m });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Zeros

/// Roots of the truncated series inside |z| < radius.
pub fn find_zeros(
    series: &DeterminantSeries,
    radius: f64,
    opts: &RootFindOptions,
) -> Result<Vec<PolishedRoot>> {
    assert!(
        (series.coefficients[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12,
        "determinant series must start at c_0 = 1"
    );
    let roots = all_roots(&series.coefficients, opts)?;
    Ok(roots.into_iter().filter(|r| r.z.norm() < radius).collect())
}

/// A zero tracked across truncation orders.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StableZero {
    pub z: Complex64,
    pub stability_spread: f64,
    pub inside_certified: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroStabilityReport {
    /// Zeros present at every truncation with spread below tolerance,
    /// inside the reporting radius.
    pub stable: Vec<StableZero>,
    /// Candidates that failed pairing or the spread tolerance.
    pub unstable: Vec<StableZero>,
}

/// Track roots across truncations N in `series_list` (ascending order) by
/// greedy nearest pairing against the largest truncation; keep those present
/// everywhere with spread <= spread_tol and |z| < radius.
pub fn stable_zeros(
    series_list: &[&DeterminantSeries],
    radius: f64,
    spread_tol: f64,
    opts: &RootFindOptions,
) -> Result<ZeroStabilityReport> {
    assert!(series_list.len() >= 2, "stability needs at least two truncations");
    let mut all: Vec<Vec<PolishedRoot>> = Vec::with_capacity(series_list.len());
    for s in series_list {
        all.push(all_roots(&s.coefficients, opts)?);
    }
    let (reference, others) = all.split_last().expect("nonempty");
    let pair_radius = 0.1f64.max(50.0 * spread_tol);

    let mut used: Vec<Vec<bool>> = others.iter().map(|v| vec![false; v.len()]).collect();
    let mut stable = Vec::new();
    let mut unstable = Vec::new();
    for root in reference {
        if root.z.norm() >= radius {
            continue;
        }
        let mut family = vec![root.z];
        let mut complete = true;
        for (set, used) in others.iter().zip(used.iter_mut()) {
            let mut best: Option<(usize, f64)> = None;
            for (j, cand) in set.iter().enumerate() {
                if used[j] {
                    continue;
                }
                let d = (cand.z - root.z).norm();
                if d <= pair_radius && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            match best {
                Some((j, _)) => {
                    used[j] = true;
                    family.push(set[j].z);
                }
                None => complete = false,
            }
        }
        let mut spread: f64 = 0.0;
        for i in 0..family.len() {
            for j in (i + 1)..family.len() {
                spread = spread.max((family[i] - family[j]).norm());
            }
        }
        let entry = StableZero {
            z: root.z,
            stability_spread: if complete { spread } else { f64::INFINITY },
            inside_certified: root.z.norm() < radius,
            residual: root.rel_residual,
        };
        if complete && spread <= spread_tol {
            stable.push(entry);
        } else {
            unstable.push(entry);
        }
    }
    Ok(ZeroStabilityReport { stable, unstable })
}

// ---------------------------------------------------------------------------
// Factorization check

/// Outcome of fitting |tr_n - Tr P^n| ~ C s^n.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitReport {
    /// Fitted geometric rate; 0 when every remainder sits in noise.
    pub rate: f64,
    pub points_used: usize,
    /// Max deviation of the log-linear fit.
    pub fit_residual: f64,
    /// Remainders decayed into the noise floor before enough points accrued.
    pub tail_in_noise: bool,
}

/// Fit the remainder sequence rem_n = tr_n - Tr P^n for n > n_lo by
/// log-linear regression. The low-n cut absorbs the polynomial nuisance term
/// of the factorization; remainders below 1e-13 (1 + |tr_n|) count as noise.
pub fn factorization_check(
    traces: &TraceTable,
    projector_traces: &[Complex64],
    n_lo: u32,
) -> Result<FitReport> {
    let n_max = (traces.n_max as usize).min(projector_traces.len());
    let candidates: Vec<(f64, f64)> = (1..=n_max)
        .filter(|&n| n as u32 > n_lo)
        .map(|n| {
            let tr = traces.get(n as u32).expect("within n_max");
            let rem = (tr - projector_traces[n - 1]).norm();
            let floor = 1e-13 * (1.0 + tr.norm());
            (n as f64, if rem > floor { rem } else { -1.0 })
        })
        .collect();
    if candidates.len() < 4 {
        return Err(Error::DegenerateFit {
            usable: candidates.len(),
        });
    }
    let usable: Vec<(f64, f64)> = candidates
        .iter()
        .filter(|&&(_, r)| r > 0.0)
        .map(|&(n, r)| (n, r.ln()))
        .collect();
    if usable.len() < 2 {
        // everything at noise level: super-geometric decay, report rate 0
        return Ok(FitReport {
            rate: 0.0,
            points_used: 0,
            fit_residual: 0.0,
            tail_in_noise: true,
        });
    }
    let tail_in_noise = usable.len() < candidates.len();
    // least squares ln|rem| = a + b n
    let m = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateFit { usable: usable.len() });
    }
    let b = (m * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / m;
    let fit_residual = usable
        .iter()
        .map(|&(n, y)| (y - (a + b * n)).abs())
        .fold(0.0f64, f64::max);
    Ok(FitReport {
        rate: b.exp(),
        points_used: usable.len(),
        fit_residual,
        tail_in_noise,
    })
}

// ---------------------------------------------------------------------------
// Resonance report and serialization

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportedZero {
    pub z: Complex64,
    pub stability_spread: f64,
    pub inside_certified: bool,
    pub matched_eig: Option<Complex64>,
    pub pairing_residual: Option<f64>,
}

/// Zeros in the certified disk paired with oracle eigenvalues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub certified_radius: f64,
    pub reporting_radius: f64,
    pub zeros: Vec<ReportedZero>,
    pub params: SpectralBoundParams,
}

/// CSV m,re_c,im_c.
pub fn write_series_csv(series: &DeterminantSeries, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "m,re_c,im_c")?;
    for (m, c) in series.coefficients.iter().enumerate() {
        writeln!(w, "{m},{},{}", c.re, c.im)?;
    }
    Ok(())
}

/// CSV re_z,im_z,modulus,stability_spread,inside_certified,matched_eig_re,matched_eig_im,pairing_residual.
pub fn write_resonance_csv(report: &ResonanceReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "re_z,im_z,modulus,stability_spread,inside_certified,matched_eig_re,matched_eig_im,pairing_residual"
    )?;
    for z in &report.zeros {
        let (mre, mim, pres) = match (z.matched_eig, z.pairing_residual) {
            (Some(e), Some(r)) => (e.re.to_string(), e.im.to_string(), r.to_string()),
            _ => (String::new(), String::new(), String::new()),
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            z.z.re,
            z.z.im,
            z.z.norm(),
            z.stability_spread,
            z.inside_certified,
            mre,
            mim,
            pres
        )?;
    }
    Ok(())
}
