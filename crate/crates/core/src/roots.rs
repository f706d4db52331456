//! Simultaneous polynomial root finding (Aberth-Ehrlich) with Newton polish.
//!
//! Initial guesses sit on a circle at the root-magnitude scale with seeded
//! phase jitter, so runs are reproducible for a fixed seed.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct RootFindOptions {
    pub max_iterations: usize,
    pub seed: u64,
    /// Target for |p(z)| / sum_m |c_m||z|^m.
    pub target_rel_residual: f64,
}

impl Default for RootFindOptions {
    fn default() -> Self {
        RootFindOptions {
            max_iterations: 400,
            seed: 0,
            target_rel_residual: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PolishedRoot {
    pub z: Complex64,
    /// |p(z)|.
    pub residual: f64,
    /// |p(z)| scaled by sum_m |c_m| |z|^m.
    pub rel_residual: f64,
}

fn horner(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

fn scale_at(coeffs: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    let mut scale = 0.0;
    let mut rp = 1.0;
    for c in coeffs {
        scale += c.norm() * rp;
        rp *= r;
    }
    scale
}

/// All complex roots of sum_m c_m z^m, multiplicities included.
///
/// Trailing coefficients below 1e-14 * max|c| are treated as zero: the
/// truncated determinant series routinely ends in numerical noise and the
/// phantom degrees would place meaningless roots at huge radii.
pub fn all_roots(coeffs: &[Complex64], opts: &RootFindOptions) -> Result<Vec<PolishedRoot>> {
    let max_c = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if max_c == 0.0 {
        return Ok(Vec::new());
    }
    let degree = match coeffs.iter().rposition(|c| c.norm() > 1e-14 * max_c) {
        Some(d) if d > 0 => d,
        _ => return Ok(Vec::new()),
    };
    let c = &coeffs[..=degree];

    if degree == 1 {
        let z = -c[0] / c[1];
        let (p, _) = horner(c, z);
        return Ok(vec![PolishedRoot {
            z,
            residual: p.norm(),
            rel_residual: p.norm() / scale_at(c, z).max(f64::MIN_POSITIVE),
        }]);
    }

    // initial circle at the geometric root-magnitude scale
    let lead = c[degree].norm();
    let r0 = if c[0].norm() > 0.0 {
        (c[0].norm() / lead).powf(1.0 / degree as f64)
    } else {
        1.0
    }
    .clamp(1e-3, 1e3);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut z: Vec<Complex64> = (0..degree)
        .map(|i| {
            let jitter: f64 = rng.gen_range(-0.05..0.05);
            let theta = std::f64::consts::TAU * (i as f64 + 0.37) / degree as f64 + jitter;
            Complex64::from_polar(r0, theta)
        })
        .collect();

    let mut converged = vec![false; degree];
    for _ in 0..opts.max_iterations {
        let mut all_done = true;
        for i in 0..degree {
            if converged[i] {
                continue;
            }
            let (p, dp) = horner(c, z[i]);
            if p.norm() <= opts.target_rel_residual * scale_at(c, z[i]) {
                converged[i] = true;
                continue;
            }
            all_done = false;
            let w = if dp.norm() > 0.0 {
                p / dp
            } else {
                Complex64::new(1e-8, 1e-8)
            };
            let mut repulsion = Complex64::new(0.0, 0.0);
            for j in 0..degree {
                if j != i {
                    let diff = z[i] - z[j];
                    if diff.norm() > 1e-300 {
                        repulsion += diff.inv();
                    } else {
                        repulsion += Complex64::new(1e150, 0.0);
                    }
                }
            }
            let denom = Complex64::new(1.0, 0.0) - w * repulsion;
            let step = if denom.norm() > 1e-12 { w / denom } else { w };
            z[i] -= step;
        }
        if all_done {
            break;
        }
    }

    // Newton polish
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(c, *zi);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *zi -= step;
        }
    }

    let mut out: Vec<PolishedRoot> = z
        .into_iter()
        .map(|zi| {
            let (p, _) = horner(c, zi);
            let scale = scale_at(c, zi).max(f64::MIN_POSITIVE);
            PolishedRoot {
                z: zi,
                residual: p.norm(),
                rel_residual: p.norm() / scale,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.z.norm(), a.z.re, a.z.im)
            .partial_cmp(&(b.z.norm(), b.z.re, b.z.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let worst = out.iter().map(|r| r.rel_residual).fold(0.0f64, f64::max);
    if worst > opts.target_rel_residual * 10.0 {
        return Err(Error::RootIterationStall {
            residual: worst,
            target: opts.target_rel_residual,
        });
    }
    Ok(out)
}
