//! Enumeration of Fix T^n.
//!
//! For a toral automorphism the fixed points of A^n are the lattice points
//! x = (A^n - Id)^{-1} k, k integer, inside the fundamental domain; they are
//! enumerated with exact integer arithmetic (Cramer over i128) so the
//! acceptance counts are exact. Perturbed maps reuse the lift class k as the
//! continuation invariant: each linear solution is Newton-continued to a
//! solution of T~^n(x) = x + k.
//!
//! Defects T~^n(x) - x - k are evaluated in double-double arithmetic; a plain
//! f64 orbit would bury the residual under O(|DT^n| u) rounding noise at the
//! default tolerance.

use crate::dynamics::{IntegerMatrix, MapSpec, TorusPoint};
use crate::error::{Error, Result};
use crate::numeric::{reduce_unit, torus_distance, Dd, Mat2};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Default residual tolerance for periodic points.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-11;
/// Newton iteration cap per continuation stage.
pub const NEWTON_MAX_ITER: usize = 25;
/// Torus distance for primitive-period detection.
const PRIMITIVE_PERIOD_TOL: f64 = 1e-8;

/// A point of Fix T^n with its lift class and monodromy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub n: u32,
    /// Integer vector with T~^n(x) = x + k.
    pub k: Vec<i64>,
    pub x: TorusPoint,
    /// |T~^n(x) - x - k| (0 for exact-arithmetic enumeration).
    pub residual: f64,
    /// DT^n(x).
    pub monodromy: Mat2,
    pub primitive_period: u32,
}

/// All of Fix T^n for one map, sorted by lift class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSet {
    pub map_digest: String,
    pub n: u32,
    /// |det(A^n - Id)|.
    pub expected_count: u64,
    pub points: Vec<PeriodicPoint>,
}

// ---------------------------------------------------------------------------
// Exact enumeration for toral automorphisms

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    let r = a % b;
    if r != 0 && ((r < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

/// Integer t with c*t in [lo, hi); `None` when empty, `Err(())` marks the
/// degenerate c = 0, constraint-holds case (every t admissible).
fn linear_interval(c: i128, lo: i128, hi: i128) -> std::result::Result<Option<(i128, i128)>, ()> {
    if c == 0 {
        return if lo <= 0 && 0 < hi { Err(()) } else { Ok(None) };
    }
    let (min_t, max_t) = if c > 0 {
        (div_ceil(lo, c), div_ceil(hi, c) - 1)
    } else {
        (div_floor(hi, c) + 1, div_floor(lo, c))
    };
    if min_t > max_t {
        Ok(None)
    } else {
        Ok(Some((min_t, max_t)))
    }
}

fn divisors(n: u32) -> Vec<u32> {
    let mut out: Vec<u32> = (1..=n).filter(|m| n % m == 0).collect();
    out.sort_unstable();
    out
}

/// Exact enumeration of Fix A^n for a hyperbolic toral automorphism.
///
/// Scans lift classes k column by column: for fixed k_1 the admissible k_2
/// form an integer interval given by the two Cramer inequalities, so the cost
/// is O(range(k_1) + |det|) instead of the full bounding box.
pub fn enumerate_linear(a: &IntegerMatrix, n: u32) -> Result<OrbitSet> {
    if a.dim() != 2 {
        return Err(Error::UnsupportedDimension { d: a.dim() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("period n must be >= 1".into()));
    }
    let an = a.pow2(n)?;
    let m = [[an[0][0] - 1, an[0][1]], [an[1][0], an[1][1] - 1]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0 {
        return Err(Error::Degenerate { n });
    }
    let abs_det = det.unsigned_abs();
    let s: i128 = det.signum();

    let linear_map = MapSpec::linear(a.clone()).expect("validated matrix");
    let monodromy = Mat2([
        [an[0][0] as f64, an[0][1] as f64],
        [an[1][0] as f64, an[1][1] as f64],
    ]);
    let dets_f = det as f64;

    // precompute A^m - Id for primitive-period tests
    let divs = divisors(n);
    let mut div_mats: Vec<(u32, [[i128; 2]; 2])> = Vec::with_capacity(divs.len());
    for &mm in &divs {
        let am = a.pow2(mm)?;
        div_mats.push((mm, [[am[0][0] - 1, am[0][1]], [am[1][0], am[1][1] - 1]]));
    }

    let corners = [0, m[0][0], m[0][1], m[0][0] + m[0][1]];
    let k1_lo = *corners.iter().min().unwrap();
    let k1_hi = *corners.iter().max().unwrap();

    let mut points = Vec::with_capacity(abs_det as usize);
    for k1 in k1_lo..=k1_hi {
        // x0 = s(m11 k1 - m01 k2) / |det| in [0,1), x1 = s(-m10 k1 + m00 k2) / |det|
        let i1 = linear_interval(-s * m[0][1], -s * m[1][1] * k1, abs_det as i128 - s * m[1][1] * k1);
        let i2 = linear_interval(s * m[0][0], s * m[1][0] * k1, abs_det as i128 + s * m[1][0] * k1);
        let range = match (i1, i2) {
            (Ok(None), _) | (_, Ok(None)) => continue,
            (Ok(Some(r)), Err(())) | (Err(()), Ok(Some(r))) => r,
            (Ok(Some((a1, b1))), Ok(Some((a2, b2)))) => {
                let lo = a1.max(a2);
                let hi = b1.min(b2);
                if lo > hi {
                    continue;
                }
                (lo, hi)
            }
            (Err(()), Err(())) => {
                return Err(Error::Degenerate { n });
            }
        };
        for k2 in range.0..=range.1 {
            let num0 = m[1][1] * k1 - m[0][1] * k2;
            let num1 = -m[1][0] * k1 + m[0][0] * k2;
            // Cramer solution must reproduce k exactly
            debug_assert_eq!(m[0][0] * num0 + m[0][1] * num1, det * k1);
            debug_assert_eq!(m[1][0] * num0 + m[1][1] * num1, det * k2);
            let x = [
                reduce_unit(num0 as f64 / dets_f),
                reduce_unit(num1 as f64 / dets_f),
            ];
            let mut primitive = n;
            for &(mm, dm) in &div_mats {
                let r0 = (dm[0][0] * num0 + dm[0][1] * num1).rem_euclid(det);
                let r1 = (dm[1][0] * num0 + dm[1][1] * num1).rem_euclid(det);
                if r0 == 0 && r1 == 0 {
                    primitive = mm;
                    break;
                }
            }
            points.push(PeriodicPoint {
                n,
                k: vec![k1 as i64, k2 as i64],
                x: TorusPoint::new2(x[0], x[1]),
                residual: 0.0,
                monodromy,
                primitive_period: primitive,
            });
        }
    }
    assert_eq!(
        points.len() as u64,
        abs_det as u64,
        "lattice scan disagrees with |det(A^n - Id)|"
    );
    Ok(OrbitSet {
        map_digest: linear_map.dynamics_digest(),
        n,
        expected_count: abs_det as u64,
        points,
    })
}

// ---------------------------------------------------------------------------
// Double-double defect evaluation

/// |T~^n(x) - x - k| with the linear part carried in double-double.
pub fn orbit_defect(map: &MapSpec, n: u32, x: [f64; 2], k: [i64; 2]) -> f64 {
    let a = map.matrix();
    let (a00, a01, a10, a11) = (
        a.at(0, 0) as f64,
        a.at(0, 1) as f64,
        a.at(1, 0) as f64,
        a.at(1, 1) as f64,
    );
    let mut y = [Dd::from_f64(x[0]), Dd::from_f64(x[1])];
    for _ in 0..n {
        let red = [reduce_unit(y[0].to_f64()), reduce_unit(y[1].to_f64())];
        let v = map.perturbation_at(red);
        let y0 = y[0].mul_f64(a00).add(y[1].mul_f64(a01)).add_f64(v[0]);
        let y1 = y[0].mul_f64(a10).add(y[1].mul_f64(a11)).add_f64(v[1]);
        y = [y0, y1];
    }
    let f0 = y[0].add_f64(-x[0]).add_f64(-(k[0] as f64)).to_f64();
    let f1 = y[1].add_f64(-x[1]).add_f64(-(k[1] as f64)).to_f64();
    f0.hypot(f1)
}

/// Nudge x through its 3x3 ulp neighborhood to minimize the defect; Newton in
/// f64 lands within an ulp of the root but not always on the best neighbor.
fn polish_ulp(map: &MapSpec, n: u32, x: [f64; 2], k: [i64; 2]) -> ([f64; 2], f64) {
    let mut best = x;
    let mut best_defect = orbit_defect(map, n, x, k);
    for dx in [-1i32, 0, 1] {
        for dy in [-1i32, 0, 1] {
            if dx == 0 && dy == 0 {
                continue;
            }
            let cand = [step_ulp(x[0], dx), step_ulp(x[1], dy)];
            let d = orbit_defect(map, n, cand, k);
            if d < best_defect {
                best_defect = d;
                best = cand;
            }
        }
    }
    (best, best_defect)
}

fn step_ulp(x: f64, dir: i32) -> f64 {
    let eps = (x.abs().max(1e-3)) * f64::EPSILON;
    x + dir as f64 * eps
}

// ---------------------------------------------------------------------------
// Newton continuation

/// Newton-solve T~^n(x) = x + k from the seed, keeping k fixed.
/// Returns the solution in lifted coordinates plus the iteration count.
pub fn newton_continue_point(
    map: &MapSpec,
    n: u32,
    k: [i64; 2],
    seed: [f64; 2],
    tol: f64,
) -> Result<([f64; 2], f64, usize)> {
    let mut x = seed;
    let mut last_norm = f64::INFINITY;
    for iter in 0..NEWTON_MAX_ITER {
        // forward lift orbit with chain-rule Jacobian
        let mut y = x;
        let mut jac = Mat2::identity();
        for _ in 0..n {
            let red = [reduce_unit(y[0]), reduce_unit(y[1])];
            jac = map.jacobian2(red).mul(&jac);
            y = map.lift2(y);
        }
        let f = [x[0] + k[0] as f64 - y[0], x[1] + k[1] as f64 - y[1]];
        let fnorm = f[0].hypot(f[1]);
        if fnorm <= tol * 0.25 || fnorm >= last_norm * 0.9999 && fnorm < 1e-9 {
            let (bx, bd) = polish_ulp(map, n, x, k);
            if bd <= tol {
                return Ok((bx, bd, iter));
            }
        }
        let df = jac.sub(&Mat2::identity());
        let mut step = df.solve([-f[0], -f[1]]).ok_or_else(|| Error::ContinuationFailure {
            k: vec![k[0], k[1]],
            detail: "singular DF = DT^n - Id".into(),
        })?;
        // damping on overshoot
        let mut damping = 0;
        loop {
            let cand = [x[0] - step[0], x[1] - step[1]];
            let cd = forward_defect(map, n, cand, k);
            if cd < fnorm || damping >= 4 {
                x = cand;
                break;
            }
            step = [step[0] / 2.0, step[1] / 2.0];
            damping += 1;
        }
        last_norm = fnorm;
    }
    let (bx, bd) = polish_ulp(map, n, x, k);
    if bd <= tol {
        return Ok((bx, bd, NEWTON_MAX_ITER));
    }
    Err(Error::ContinuationFailure {
        k: vec![k[0], k[1]],
        detail: format!("Newton stalled at defect {bd:.3e} (tol {tol:.1e})"),
    })
}

fn forward_defect(map: &MapSpec, n: u32, x: [f64; 2], k: [i64; 2]) -> f64 {
    let mut y = x;
    for _ in 0..n {
        y = map.lift2(y);
    }
    (y[0] - x[0] - k[0] as f64).hypot(y[1] - x[1] - k[1] as f64)
}

/// Continue a linear orbit set to the perturbed map, lift class by lift class.
///
/// Direct Newton first; seeds that stall retry through the eps/4, eps/2, eps
/// ladder. Points that drift out of the fundamental domain are reduced back,
/// with the lift class adjusted by k -> k - (A^n - Id) m.
pub fn continue_orbits(
    map: &MapSpec,
    n: u32,
    seeds: &OrbitSet,
    tol: f64,
) -> Result<OrbitSet> {
    if seeds.n != n {
        return Err(Error::InvalidArgument(format!(
            "seed set is for n = {}, requested n = {n}",
            seeds.n
        )));
    }
    let linear_digest = MapSpec::linear(map.matrix().clone())
        .expect("validated matrix")
        .dynamics_digest();
    if seeds.map_digest != linear_digest {
        return Err(Error::DigestMismatch {
            expected: linear_digest,
            found: seeds.map_digest.clone(),
        });
    }
    if map.epsilon() == 0.0 {
        return Ok(seeds.clone());
    }

    let an = map.matrix().pow2(n)?;
    let m_int = [[an[0][0] - 1, an[0][1]], [an[1][0], an[1][1] - 1]];
    let ladder: Vec<MapSpec> = [0.25, 0.5]
        .iter()
        .map(|&f| map.with_epsilon(map.epsilon() * f))
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::with_capacity(seeds.points.len());
    for seed in &seeds.points {
        let k0 = [seed.k[0], seed.k[1]];
        let x0 = seed.x.as2();
        let solved = match newton_continue_point(map, n, k0, x0, tol) {
            Ok(v) => v,
            Err(_) => {
                // eps ladder: quarter, half, full
                let mut x = x0;
                for stage in &ladder {
                    let (xs, _, _) = newton_continue_point(stage, n, k0, x, tol)?;
                    x = xs;
                }
                newton_continue_point(map, n, k0, x, tol)?
            }
        };
        let (x_raw, residual, _iters) = solved;
        // normal form: x in [0,1)^2 with adjusted lift class; the shift is
        // re-derived from the reduced point so that boundary values rounding
        // up to exactly 1.0 cannot desynchronize x from k
        let x_red = [reduce_unit(x_raw[0]), reduce_unit(x_raw[1])];
        let (m0, m1) = (
            (x_raw[0] - x_red[0]).round() as i128,
            (x_raw[1] - x_red[1]).round() as i128,
        );
        let k = [
            i64::try_from(k0[0] as i128 - (m_int[0][0] * m0 + m_int[0][1] * m1)).map_err(|_| {
                Error::ContinuationFailure {
                    k: vec![k0[0], k0[1]],
                    detail: "lift-class adjustment overflowed".into(),
                }
            })?,
            i64::try_from(k0[1] as i128 - (m_int[1][0] * m0 + m_int[1][1] * m1)).map_err(|_| {
                Error::ContinuationFailure {
                    k: vec![k0[0], k0[1]],
                    detail: "lift-class adjustment overflowed".into(),
                }
            })?,
        ];
        let monodromy = map.monodromy2(x_red, n);
        let det_gap = Mat2::identity().sub(&monodromy).det().abs();
        if det_gap < 1e-14 {
            return Err(Error::SingularMonodromy { det: det_gap });
        }
        let primitive = primitive_period(map, x_red, n);
        points.push(PeriodicPoint {
            n,
            k: vec![k[0], k[1]],
            x: TorusPoint::new2(x_red[0], x_red[1]),
            residual,
            monodromy,
            primitive_period: primitive,
        });
    }

    points.sort_by(|a, b| {
        a.k.cmp(&b.k).then_with(|| {
            a.x.coords()
                .partial_cmp(b.x.coords())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    check_collisions(&points, tol)?;
    Ok(OrbitSet {
        map_digest: map.dynamics_digest(),
        n,
        expected_count: seeds.expected_count,
        points,
    })
}

fn primitive_period(map: &MapSpec, x: [f64; 2], n: u32) -> u32 {
    let mut p = x;
    let mut best = n;
    for m in 1..=n {
        p = map.eval2(p);
        if n % m == 0 && torus_distance(p, x) <= PRIMITIVE_PERIOD_TOL {
            best = m;
            break;
        }
    }
    best
}

/// Bucket-hash pairwise separation check (10 tol exclusion radius).
fn check_collisions(points: &[PeriodicPoint], tol: f64) -> Result<()> {
    let radius = 10.0 * tol;
    let cell = radius.max(1e-9);
    let cells_per_axis = (1.0 / cell).floor().max(1.0) as i64;
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let key = |x: [f64; 2]| {
        (
            ((x[0] * cells_per_axis as f64) as i64).min(cells_per_axis - 1),
            ((x[1] * cells_per_axis as f64) as i64).min(cells_per_axis - 1),
        )
    };
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p.x.as2())).or_default().push(i);
    }
    for (i, p) in points.iter().enumerate() {
        let (ci, cj) = key(p.x.as2());
        for di in -1..=1i64 {
            for dj in -1..=1i64 {
                let nk = (
                    (ci + di).rem_euclid(cells_per_axis),
                    (cj + dj).rem_euclid(cells_per_axis),
                );
                if let Some(list) = buckets.get(&nk) {
                    for &j in list {
                        if j <= i {
                            continue;
                        }
                        let d = torus_distance(p.x.as2(), points[j].x.as2());
                        if d <= radius {
                            return Err(Error::CollisionDetected {
                                k1: p.k.clone(),
                                k2: points[j].k.clone(),
                                dist: d,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation

/// Outcome of re-deriving every orbit-set invariant from scratch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: u32,
    pub points: usize,
    pub expected_count: u64,
    pub max_residual: f64,
    pub min_separation: f64,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Recompute residuals, the count law, pairwise separation, primitive periods
/// and monodromies; every discrepancy lands in `failures`.
pub fn validate_orbit_set(set: &OrbitSet, map: &MapSpec, tol: f64) -> ValidationReport {
    let mut failures = Vec::new();
    let n = set.n;
    if set.map_digest != map.dynamics_digest() {
        failures.push(format!(
            "digest mismatch: set {} vs map {}",
            set.map_digest,
            map.dynamics_digest()
        ));
    }

    let expected = match map.matrix().pow2(n) {
        Ok(an) => {
            let m = [[an[0][0] - 1, an[0][1]], [an[1][0], an[1][1] - 1]];
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]).unsigned_abs() as u64
        }
        Err(_) => 0,
    };
    if set.points.len() as u64 != expected || set.expected_count != expected {
        failures.push(format!(
            "count law: {} points, header {}, |det(A^n - Id)| = {expected}",
            set.points.len(),
            set.expected_count
        ));
    }

    let exact = map.epsilon() == 0.0;
    let exact_data = if exact {
        map.matrix().pow2(n).ok().map(|an| {
            let m = [[an[0][0] - 1, an[0][1]], [an[1][0], an[1][1] - 1]];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            (m, det)
        })
    } else {
        None
    };

    let mut max_residual: f64 = 0.0;
    for (i, p) in set.points.iter().enumerate() {
        let x = p.x.as2();
        let residual = if let Some((m, det)) = exact_data {
            // reconstruct the rational solution and verify it exactly
            let num0 = (x[0] * det as f64).round() as i128;
            let num1 = (x[1] * det as f64).round() as i128;
            let consistent = (x[0] * det as f64 - num0 as f64).abs() < 1e-6
                && (x[1] * det as f64 - num1 as f64).abs() < 1e-6
                && m[0][0] * num0 + m[0][1] * num1 == det * p.k[0] as i128
                && m[1][0] * num0 + m[1][1] * num1 == det * p.k[1] as i128;
            if consistent {
                0.0
            } else {
                orbit_defect(map, n, x, [p.k[0], p.k[1]])
            }
        } else {
            orbit_defect(map, n, x, [p.k[0], p.k[1]])
        };
        max_residual = max_residual.max(residual);
        if residual > tol {
            failures.push(format!(
                "point {i} (k = {:?}): residual {residual:.3e} > {tol:.1e}",
                p.k
            ));
        }
        let det_gap = Mat2::identity().sub(&p.monodromy).det().abs();
        if det_gap < 1e-14 {
            failures.push(format!("point {i}: |det(Id - DT^n)| = {det_gap:.3e}"));
        }
        // recompute monodromy and primitive period along one forward pass
        let recomputed = map.monodromy2(x, n);
        let diff = recomputed.sub(&p.monodromy).norm_inf();
        if diff > 1e-8 * (1.0 + p.monodromy.norm_inf()) {
            failures.push(format!("point {i}: monodromy drift {diff:.3e}"));
        }
        let prim = recompute_primitive(map, &exact_data, x, p, n);
        if prim != p.primitive_period {
            failures.push(format!(
                "point {i}: primitive period {} recomputed as {prim}",
                p.primitive_period
            ));
        }
    }

    let mut min_separation = f64::INFINITY;
    match check_collisions(&set.points, tol) {
        Ok(()) => {
            // representative sample of nearest distances for the report
            for w in set.points.windows(2).take(512) {
                min_separation =
                    min_separation.min(torus_distance(w[0].x.as2(), w[1].x.as2()));
            }
        }
        Err(e) => failures.push(e.to_string()),
    }

    ValidationReport {
        n,
        points: set.points.len(),
        expected_count: set.expected_count,
        max_residual,
        min_separation,
        failures,
    }
}

fn recompute_primitive(
    map: &MapSpec,
    exact_data: &Option<([[i128; 2]; 2], i128)>,
    x: [f64; 2],
    p: &PeriodicPoint,
    n: u32,
) -> u32 {
    if let Some((_, det)) = exact_data {
        let num0 = (x[0] * *det as f64).round() as i128;
        let num1 = (x[1] * *det as f64).round() as i128;
        for m in divisors(n) {
            if let Ok(am) = map.matrix().pow2(m) {
                let dm = [[am[0][0] - 1, am[0][1]], [am[1][0], am[1][1] - 1]];
                let r0 = (dm[0][0] * num0 + dm[0][1] * num1).rem_euclid(*det);
                let r1 = (dm[1][0] * num0 + dm[1][1] * num1).rem_euclid(*det);
                if r0 == 0 && r1 == 0 {
                    return m;
                }
            }
        }
        let _ = p;
        n
    } else {
        primitive_period(map, x, n)
    }
}

// ---------------------------------------------------------------------------
// Cache I/O (newline-delimited JSON, schema orbitset-v1)

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    schema: String,
    map_digest: String,
    n: u32,
    expected_count: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    k: Vec<i64>,
    x: Vec<f64>,
    residual: f64,
    monodromy: [[f64; 2]; 2],
    primitive_period: u32,
}

pub fn orbit_cache_store(set: &OrbitSet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let header = CacheHeader {
        schema: "orbitset-v1".into(),
        map_digest: set.map_digest.clone(),
        n: set.n,
        expected_count: set.expected_count,
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for p in &set.points {
        let rec = CacheRecord {
            k: p.k.clone(),
            x: p.x.coords().to_vec(),
            residual: p.residual,
            monodromy: p.monodromy.0,
            primitive_period: p.primitive_period,
        };
        writeln!(w, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}

/// Load a cached orbit set, checking digest and period against expectations.
pub fn orbit_cache_load(
    path: &Path,
    expected_digest: Option<&str>,
    expected_n: Option<u32>,
) -> Result<OrbitSet> {
    let mut lines = BufReader::new(std::fs::File::open(path)?).lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::SchemaMismatch("empty cache file".into())),
    };
    let header: CacheHeader = serde_json::from_str(&first)
        .map_err(|e| Error::SchemaMismatch(format!("bad header: {e}")))?;
    if header.schema != "orbitset-v1" {
        return Err(Error::SchemaMismatch(format!(
            "unknown schema {:?}",
            header.schema
        )));
    }
    if let Some(d) = expected_digest {
        if header.map_digest != d {
            return Err(Error::DigestMismatch {
                expected: d.to_string(),
                found: header.map_digest,
            });
        }
    }
    if let Some(n) = expected_n {
        if header.n != n {
            return Err(Error::SchemaMismatch(format!(
                "cache holds n = {}, wanted n = {n}",
                header.n
            )));
        }
    }
    let mut points = Vec::with_capacity(header.expected_count as usize);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CacheRecord = serde_json::from_str(&line)
            .map_err(|e| Error::SchemaMismatch(format!("bad record: {e}")))?;
        let coords = rec.x.clone();
        points.push(PeriodicPoint {
            n: header.n,
            k: rec.k,
            x: TorusPoint::new(coords),
            residual: rec.residual,
            monodromy: Mat2(rec.monodromy),
            primitive_period: rec.primitive_period,
        });
    }
    if points.len() as u64 != header.expected_count {
        return Err(Error::SchemaMismatch(format!(
            "cache truncated: {} records, header says {}",
            points.len(),
            header.expected_count
        )));
    }
    Ok(OrbitSet {
        map_digest: header.map_digest,
        n: header.n,
        expected_count: header.expected_count,
        points,
    })
}

// ---------------------------------------------------------------------------
// Orbit source: compute-or-load with per-period bookkeeping

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Computed,
    Hit,
}

/// Hands out validated orbit sets per period, backed by an optional on-disk
/// cache. Computation enumerates the linear lattice and continues when the
/// map is perturbed.
pub struct OrbitSource<'a> {
    map: &'a MapSpec,
    residual_tol: f64,
    cache_dir: Option<PathBuf>,
    sets: BTreeMap<u32, OrbitSet>,
    status: BTreeMap<u32, CacheStatus>,
}

impl<'a> OrbitSource<'a> {
    pub fn new(map: &'a MapSpec, residual_tol: f64) -> Self {
        OrbitSource {
            map,
            residual_tol,
            cache_dir: None,
            sets: BTreeMap::new(),
            status: BTreeMap::new(),
        }
    }

    pub fn with_cache_dir(mut self, dir: PathBuf) -> Self {
        self.cache_dir = Some(dir);
        self
    }

    pub fn map(&self) -> &MapSpec {
        self.map
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    pub fn cache_path(&self, n: u32) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| {
            d.join(format!(
                "orbits-{}-n{:02}.ndjson",
                crate::digest::short(&self.map.dynamics_digest()),
                n
            ))
        })
    }

    pub fn status(&self, n: u32) -> Option<CacheStatus> {
        self.status.get(&n).copied()
    }

    pub fn get(&mut self, n: u32) -> Result<&OrbitSet> {
        if !self.sets.contains_key(&n) {
            let digest = self.map.dynamics_digest();
            let mut loaded = None;
            if let Some(path) = self.cache_path(n) {
                if path.exists() {
                    if let Ok(set) = orbit_cache_load(&path, Some(&digest), Some(n)) {
                        loaded = Some(set);
                    }
                }
            }
            let (set, status) = match loaded {
                Some(set) => (set, CacheStatus::Hit),
                None => {
                    let linear = enumerate_linear(self.map.matrix(), n)?;
                    let set = if self.map.epsilon() > 0.0 {
                        continue_orbits(self.map, n, &linear, self.residual_tol)?
                    } else {
                        linear
                    };
                    let report = validate_orbit_set(&set, self.map, self.residual_tol);
                    if !report.is_clean() {
                        return Err(Error::ValidationFailed(report.failures.join("; ")));
                    }
                    if let Some(path) = self.cache_path(n) {
                        orbit_cache_store(&set, &path)?;
                    }
                    (set, CacheStatus::Computed)
                }
            };
            self.sets.insert(n, set);
            self.status.insert(n, status);
        }
        Ok(self.sets.get(&n).expect("just inserted"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrigPolynomial;

    fn cat_matrix() -> IntegerMatrix {
        IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn perturbed_cat(eps: f64) -> MapSpec {
        MapSpec::new(
            cat_matrix(),
            eps,
            vec![
                TrigPolynomial::real_sine(1.0, vec![0, 1]),
                TrigPolynomial::zero(),
            ],
            4.0,
        )
        .unwrap()
    }

    /// Brute-force bounding-box enumeration, the oracle for the interval scan.
    fn enumerate_bruteforce(a: &IntegerMatrix, n: u32) -> Vec<(i64, i64)> {
        let an = a.pow2(n).unwrap();
        let m = [[an[0][0] - 1, an[0][1]], [an[1][0], an[1][1] - 1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let s = det.signum();
        let d = det.abs();
        let c1 = [0, m[0][0], m[0][1], m[0][0] + m[0][1]];
        let c2 = [0, m[1][0], m[1][1], m[1][0] + m[1][1]];
        let mut out = Vec::new();
        for k1 in *c1.iter().min().unwrap()..=*c1.iter().max().unwrap() {
            for k2 in *c2.iter().min().unwrap()..=*c2.iter().max().unwrap() {
                let num0 = s * (m[1][1] * k1 - m[0][1] * k2);
                let num1 = s * (-m[1][0] * k1 + m[0][0] * k2);
                if (0..d).contains(&num0) && (0..d).contains(&num1) {
                    out.push((k1 as i64, k2 as i64));
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn fixed_points_of_cat_map() {
        let set = enumerate_linear(&cat_matrix(), 1).unwrap();
        assert_eq!(set.expected_count, 1);
        assert_eq!(set.points.len(), 1);
        assert_eq!(set.points[0].x.coords(), &[0.0, 0.0]);
        assert_eq!(set.points[0].k, vec![0, 0]);
    }

    #[test]
    fn period_two_has_five_points() {
        let set = enumerate_linear(&cat_matrix(), 2).unwrap();
        assert_eq!(set.expected_count, 5);
        assert_eq!(set.points.len(), 5);
        // origin is always among them
        assert!(set
            .points
            .iter()
            .any(|p| p.x.coords() == [0.0, 0.0] && p.k == vec![0, 0]));
    }

    #[test]
    fn interval_scan_matches_bruteforce() {
        for n in 1..=6 {
            let set = enumerate_linear(&cat_matrix(), n).unwrap();
            let fast: Vec<(i64, i64)> = set.points.iter().map(|p| (p.k[0], p.k[1])).collect();
            assert_eq!(fast, enumerate_bruteforce(&cat_matrix(), n), "n = {n}");
        }
        // a det = -1 automorphism exercises the sign handling
        let fib = IntegerMatrix::new(vec![vec![1, 1], vec![1, 0]]).unwrap();
        for n in 2..=6 {
            let set = enumerate_linear(&fib, n).unwrap();
            let fast: Vec<(i64, i64)> = set.points.iter().map(|p| (p.k[0], p.k[1])).collect();
            assert_eq!(fast, enumerate_bruteforce(&fib, n), "fib n = {n}");
        }
    }

    #[test]
    fn count_law_matches_trace_recurrence() {
        // |det(A^n - Id)| = trace(A^n) - 2 via t_{n+1} = 3 t_n - t_{n-1}
        let expected = [
            1u64, 5, 16, 45, 121, 320, 841, 2205, 5776, 15125, 39601, 103680,
        ];
        for (i, &count) in expected.iter().enumerate() {
            let n = (i + 1) as u32;
            let set = enumerate_linear(&cat_matrix(), n).unwrap();
            assert_eq!(set.expected_count, count, "n = {n}");
            assert_eq!(set.points.len() as u64, count, "n = {n}");
        }
    }

    #[test]
    fn parabolic_matrix_is_degenerate() {
        let parab = IntegerMatrix::new(vec![vec![1, 1], vec![0, 1]]).unwrap();
        let err = enumerate_linear(&parab, 1).unwrap_err();
        assert!(matches!(err, Error::Degenerate { n: 1 }));
    }

    #[test]
    fn closure_under_dynamics() {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        let set = enumerate_linear(&cat_matrix(), 4).unwrap();
        for p in &set.points {
            let image = map.eval2(p.x.as2());
            let hit = set
                .points
                .iter()
                .any(|q| torus_distance(q.x.as2(), image) <= 1e-10);
            assert!(hit, "image of {:?} missing from Fix T^4", p.x.coords());
        }
    }

    #[test]
    fn primitive_periods_divide() {
        let set = enumerate_linear(&cat_matrix(), 6).unwrap();
        for p in &set.points {
            assert_eq!(6 % p.primitive_period, 0);
        }
        // the origin is a genuine fixed point inside Fix T^6
        let origin = set
            .points
            .iter()
            .find(|p| p.x.coords() == [0.0, 0.0])
            .unwrap();
        assert_eq!(origin.primitive_period, 1);
        // period-2 points from Fix T^2 appear with primitive period 2
        let two = enumerate_linear(&cat_matrix(), 2).unwrap();
        let n_prim2_in_6 = set.points.iter().filter(|p| p.primitive_period == 2).count();
        let n_prim2 = two.points.iter().filter(|p| p.primitive_period == 2).count();
        assert_eq!(n_prim2_in_6, n_prim2);
    }

    #[test]
    fn continuation_is_identity_at_zero_epsilon() {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        let seeds = enumerate_linear(&cat_matrix(), 3).unwrap();
        let out = continue_orbits(&map, 3, &seeds, 1e-11).unwrap();
        assert_eq!(out, seeds);
    }

    #[test]
    fn newton_converges_quadratically_at_origin() {
        let map = perturbed_cat(0.01);
        let (x, defect, iters) =
            newton_continue_point(&map, 1, [0, 0], [0.0, 0.0], 1e-12).unwrap();
        assert!(iters <= 8, "took {iters} iterations");
        assert!(defect <= 1e-12, "defect {defect:.3e}");
        // fixed point moved O(eps) away from the origin
        let dist = torus_distance([reduce_unit(x[0]), reduce_unit(x[1])], [0.0, 0.0]);
        assert!(dist <= 0.05, "fixed point drifted by {dist}");
    }

    #[test]
    fn continuation_preserves_count_n4() {
        let map = perturbed_cat(0.01);
        let seeds = enumerate_linear(&cat_matrix(), 4).unwrap();
        let out = continue_orbits(&map, 4, &seeds, 1e-11).unwrap();
        assert_eq!(out.points.len(), 45);
        let report = validate_orbit_set(&out, &map, 1e-11);
        assert!(report.is_clean(), "failures: {:?}", report.failures);
    }

    #[test]
    fn continuation_rejects_mismatched_seeds() {
        let map = perturbed_cat(0.01);
        let fib = IntegerMatrix::new(vec![vec![1, 1], vec![1, 0]]).unwrap();
        let seeds = enumerate_linear(&fib, 2).unwrap();
        let err = continue_orbits(&map, 2, &seeds, 1e-11).unwrap_err();
        assert!(matches!(err, Error::DigestMismatch { .. }));
    }

    #[test]
    fn validation_flags_injected_fault() {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        let mut set = enumerate_linear(&cat_matrix(), 2).unwrap();
        let bad = set.points[3].x.coords()[0] + 1e-3;
        set.points[3].x = TorusPoint::new2(bad, set.points[3].x.coords()[1]);
        let report = validate_orbit_set(&set, &map, 1e-11);
        assert!(!report.is_clean());
        assert!(report.failures.iter().any(|f| f.contains("residual")));
    }

    #[test]
    fn clean_validation_for_exact_sets() {
        let map = MapSpec::linear(cat_matrix()).unwrap();
        for n in 1..=10 {
            let set = enumerate_linear(&cat_matrix(), n).unwrap();
            let report = validate_orbit_set(&set, &map, 1e-11);
            assert!(report.is_clean(), "n = {n}: {:?}", report.failures);
        }
    }

    #[test]
    fn monodromy_has_constant_spectrum_along_orbits() {
        let map = perturbed_cat(0.01);
        let seeds = enumerate_linear(&cat_matrix(), 3).unwrap();
        let set = continue_orbits(&map, 3, &seeds, 1e-11).unwrap();
        for p in &set.points {
            let mut y = p.x.as2();
            let (tr0, det0) = (p.monodromy.trace(), p.monodromy.det());
            for _ in 0..2 {
                y = map.eval2(y);
                let m = map.monodromy2(y, 3);
                assert!((m.trace() - tr0).abs() <= 1e-8 * (1.0 + tr0.abs()));
                assert!((m.det() - det0).abs() <= 1e-8 * (1.0 + det0.abs()));
            }
        }
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let map = perturbed_cat(0.01);
        let seeds = enumerate_linear(&cat_matrix(), 5).unwrap();
        let set = continue_orbits(&map, 5, &seeds, 1e-11).unwrap();
        let path = dir.path().join("orbits.ndjson");
        orbit_cache_store(&set, &path).unwrap();
        let loaded = orbit_cache_load(&path, Some(&set.map_digest), Some(5)).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn cache_rejects_wrong_digest_and_bad_schema() {
        let dir = tempfile::tempdir().unwrap();
        let set = enumerate_linear(&cat_matrix(), 2).unwrap();
        let path = dir.path().join("orbits.ndjson");
        orbit_cache_store(&set, &path).unwrap();
        let err = orbit_cache_load(&path, Some("deadbeef"), Some(2)).unwrap_err();
        assert!(matches!(err, Error::DigestMismatch { .. }));

        let empty = dir.path().join("empty.ndjson");
        std::fs::write(&empty, "").unwrap();
        let err = orbit_cache_load(&empty, None, None).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn orbit_source_reports_cache_hits() {
        let dir = tempfile::tempdir().unwrap();
        let map = MapSpec::linear(cat_matrix()).unwrap();
        {
            let mut src = OrbitSource::new(&map, 1e-11).with_cache_dir(dir.path().into());
            src.get(3).unwrap();
            assert_eq!(src.status(3), Some(CacheStatus::Computed));
        }
        let mut src = OrbitSource::new(&map, 1e-11).with_cache_dir(dir.path().into());
        src.get(3).unwrap();
        assert_eq!(src.status(3), Some(CacheStatus::Hit));
    }
}


