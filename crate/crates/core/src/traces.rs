//! Weighted periodic-orbit trace sums
//!
//! ```text
//! tr_n = sum_{x in Fix T^n} g_n(x) / |det(Id - DT^n(x))|,
//! g_n(x) = prod_{i=0}^{n-1} g(T^i x),
//! ```
//!
//! plus quadrature checks of the transfer-operator identities: the duality
//! <T_g h, f> = <h, T_g* f> and the tensor-power identity relating
//! (T_g* (x) T_g)^n to T_g^{2n}.

use crate::dynamics::{MapSpec, TorusPoint, TrigPolynomial, WeightKind, WeightSpec};
use crate::error::{Error, Result};
use crate::grid::QuadratureGrid;
use crate::numeric::ComplexKahanSum;
use crate::orbits::{OrbitSet, OrbitSource};
use crate::dynamics::DEFAULT_INVERSE_TOL;
use crate::numeric::Mat2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// tr_n for n = 1..n_max, no gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTable {
    pub map_digest: String,
    pub weight_digest: String,
    pub n_max: u32,
    entries: Vec<Complex64>,
}

impl TraceTable {
    pub fn new(
        map_digest: String,
        weight_digest: String,
        entries: Vec<Complex64>,
    ) -> Self {
        TraceTable {
            map_digest,
            weight_digest,
            n_max: entries.len() as u32,
            entries,
        }
    }

    pub fn get(&self, n: u32) -> Option<Complex64> {
        if n == 0 || n > self.n_max {
            None
        } else {
            Some(self.entries[(n - 1) as usize])
        }
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}

/// g_n(x) = prod_{i=0}^{n-1} g(T^i x).
pub fn weight_along_orbit(
    map: &MapSpec,
    weight: &WeightSpec,
    x: &TorusPoint,
    n: u32,
) -> Complex64 {
    if weight.kind() == WeightKind::Constant {
        return weight.constant_value().powi(n as i32);
    }
    let mut p = x.as2();
    let mut acc = Complex64::new(1.0, 0.0);
    for i in 0..n {
        acc *= weight.eval(&p);
        if i + 1 < n {
            p = map.eval2(p);
        }
    }
    acc
}

/// One inner sum of the determinant series, in sorted-k order with
/// compensated accumulation.
pub fn trace_from_orbits(
    set: &OrbitSet,
    map: &MapSpec,
    weight: &WeightSpec,
) -> Result<Complex64> {
    let mut acc = ComplexKahanSum::new();
    for p in &set.points {
        let denom = Mat2::identity().sub(&p.monodromy).det().abs();
        if denom < 1e-14 {
            return Err(Error::SingularMonodromy { det: denom });
        }
        let w = weight_along_orbit(map, weight, &p.x, set.n);
        acc.add(w / denom);
    }
    Ok(acc.value())
}

/// Assemble tr_1..tr_n_max from an orbit source.
pub fn trace_table(
    map: &MapSpec,
    weight: &WeightSpec,
    n_max: u32,
    source: &mut OrbitSource,
) -> Result<TraceTable> {
    let mut entries = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let set = source.get(n)?;
        entries.push(trace_from_orbits(set, map, weight)?);
    }
    Ok(TraceTable::new(
        map.dynamics_digest(),
        weight.digest(),
        entries,
    ))
}

fn check_nyquist(
    grid_m: usize,
    polys: &[&TrigPolynomial],
    weight: &WeightSpec,
) -> Result<()> {
    let mut max_freq = weight.poly().max_freq_inf();
    for p in polys {
        max_freq = max_freq.max(p.max_freq_inf());
    }
    if (grid_m as i64) <= 2 * max_freq {
        return Err(Error::InvalidArgument(format!(
            "grid m = {grid_m} cannot integrate frequencies up to {max_freq} exactly"
        )));
    }
    Ok(())
}

/// | <T_g h, f> - <h, T_g* f> | by grid quadrature, with
/// T_g h = g (h o T) and T_g* f = |det DT^{-1}| (g f) o T^{-1}.
pub fn duality_check(
    map: &MapSpec,
    weight: &WeightSpec,
    h: &TrigPolynomial,
    f: &TrigPolynomial,
    grid_m: usize,
) -> Result<f64> {
    check_nyquist(grid_m, &[h, f], weight)?;
    let grid = QuadratureGrid::new(grid_m);
    let mut lhs = ComplexKahanSum::new();
    let mut rhs = ComplexKahanSum::new();
    let mut failure = None;
    grid.for_each_node(|x| {
        if failure.is_some() {
            return;
        }
        let tx = map.eval2(x);
        lhs.add(weight.eval(&x) * h.eval(&tx) * f.eval(&x));
        match map.inverse2(x, DEFAULT_INVERSE_TOL) {
            Ok(xi) => {
                let det = map.jacobian2(xi).det().abs();
                rhs.add(h.eval(&x) * weight.eval(&xi) * f.eval(&xi) / det);
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let w = Complex64::new(grid.cell_weight(), 0.0);
    Ok((lhs.value() * w - rhs.value() * w).norm())
}

/// | int (T_g^n h)(T_g*^n f) - int (T_g^{2n} h) f | by grid quadrature,
/// operators applied pointwise by composition.
pub fn powers_identity_check(
    map: &MapSpec,
    weight: &WeightSpec,
    h: &TrigPolynomial,
    f: &TrigPolynomial,
    n: u32,
    grid_m: usize,
) -> Result<f64> {
    check_nyquist(grid_m, &[h, f], weight)?;
    let grid = QuadratureGrid::new(grid_m);
    let mut lhs = ComplexKahanSum::new();
    let mut rhs = ComplexKahanSum::new();
    let mut failure = None;
    grid.for_each_node(|x| {
        if failure.is_some() {
            return;
        }
        // forward orbit x, Tx, ..., T^{2n} x
        let mut fwd = [x; 1].to_vec();
        let mut p = x;
        for _ in 0..(2 * n) {
            p = map.eval2(p);
            fwd.push(p);
        }
        // backward orbit x, T^{-1}x, ..., T^{-n} x
        let mut bwd = vec![x];
        let mut q = x;
        for _ in 0..n {
            match map.inverse2(q, DEFAULT_INVERSE_TOL) {
                Ok(v) => {
                    q = v;
                    bwd.push(v);
                }
                Err(e) => {
                    failure = Some(e);
                    return;
                }
            }
        }
        let mut g_fwd_n = Complex64::new(1.0, 0.0);
        for pt in fwd.iter().take(n as usize) {
            g_fwd_n *= weight.eval(pt);
        }
        let mut g_fwd_2n = g_fwd_n;
        for pt in fwd.iter().take(2 * n as usize).skip(n as usize) {
            g_fwd_2n *= weight.eval(pt);
        }
        let mut adj = Complex64::new(1.0, 0.0);
        for pt in bwd.iter().skip(1) {
            adj *= weight.eval(pt) / map.jacobian2(*pt).det().abs();
        }
        let t_n_h = g_fwd_n * h.eval(&fwd[n as usize]);
        let t_star_n_f = adj * f.eval(&bwd[n as usize]);
        lhs.add(t_n_h * t_star_n_f);
        rhs.add(g_fwd_2n * h.eval(&fwd[2 * n as usize]) * f.eval(&x));
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let w = Complex64::new(grid.cell_weight(), 0.0);
    Ok((lhs.value() * w - rhs.value() * w).norm())
}

// ---------------------------------------------------------------------------
// Serialization

/// CSV with header n,re_tr,im_tr.
pub fn write_trace_csv(table: &TraceTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "n,re_tr,im_tr")?;
    for (i, tr) in table.entries.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, tr.re, tr.im)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub map_digest: String,
    pub weight_digest: String,
    pub n_max: u32,
    pub tolerances: BTreeMap<String, f64>,
}

pub fn write_trace_sidecar(
    table: &TraceTable,
    tolerances: &BTreeMap<String, f64>,
    path: &Path,
) -> Result<()> {
    let sidecar = TraceSidecar {
        map_digest: table.map_digest.clone(),
        weight_digest: table.weight_digest.clone(),
        n_max: table.n_max,
        tolerances: tolerances.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::IntegerMatrix;
    use crate::numeric::KahanSum;
    use crate::orbits::enumerate_linear;

    fn cat_matrix() -> IntegerMatrix {
        IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn cat_map() -> MapSpec {
        MapSpec::linear(cat_matrix()).unwrap()
    }

    fn cos_weight(amp: f64) -> WeightSpec {
        WeightSpec::trig(
            TrigPolynomial::constant_one().add(&TrigPolynomial::real_cosine(amp, vec![1, 0])),
        )
    }

    #[test]
    fn weight_along_orbit_constants_and_fixed_point() {
        let map = cat_map();
        let c = WeightSpec::constant(Complex64::new(0.3, 0.1));
        let x = TorusPoint::new2(0.7, 0.2);
        let got = weight_along_orbit(&map, &c, &x, 5);
        assert!((got - Complex64::new(0.3, 0.1).powi(5)).norm() < 1e-15);

        let w = cos_weight(0.1);
        assert!((weight_along_orbit(&map, &w, &TorusPoint::new2(0.4, 0.9), 1)
            - w.eval(&[0.4, 0.9]))
        .norm()
            < 1e-15);
        // T(0,0) = (0,0): g_2(0) = 1.1^2
        let got = weight_along_orbit(&map, &w, &TorusPoint::new2(0.0, 0.0), 2);
        assert!((got - Complex64::new(1.21, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn cat_map_traces_are_one() {
        let map = cat_map();
        let one = WeightSpec::one();
        let mut src = OrbitSource::new(&map, 1e-11);
        let table = trace_table(&map, &one, 8, &mut src).unwrap();
        for n in 1..=8 {
            let tr = table.get(n).unwrap();
            assert!(
                (tr - Complex64::new(1.0, 0.0)).norm() <= 1e-10,
                "tr_{n} = {tr}"
            );
        }
    }

    #[test]
    fn constant_weight_traces_are_powers() {
        let map = cat_map();
        let mut src = OrbitSource::new(&map, 1e-11);
        let zero = trace_table(&map, &WeightSpec::constant(Complex64::new(0.0, 0.0)), 4, &mut src)
            .unwrap();
        assert!(zero.entries().iter().all(|t| t.norm() == 0.0));

        let mut src = OrbitSource::new(&map, 1e-11);
        let half =
            trace_table(&map, &WeightSpec::constant(Complex64::new(0.5, 0.0)), 8, &mut src)
                .unwrap();
        for n in 1..=8u32 {
            let expect = 0.5f64.powi(n as i32);
            assert!((half.get(n).unwrap().re - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn trace_one_of_cosine_weight() {
        // single fixed point at the origin, |det(Id - A)| = 1
        let map = cat_map();
        let set = enumerate_linear(&cat_matrix(), 1).unwrap();
        let tr = trace_from_orbits(&set, &map, &cos_weight(0.1)).unwrap();
        assert!((tr - Complex64::new(1.1, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn scaling_covariance() {
        let map = cat_map();
        let base = cos_weight(0.1);
        let c = 0.7;
        let scaled = WeightSpec::trig(
            TrigPolynomial::new(
                base.poly()
                    .terms()
                    .iter()
                    .map(|t| crate::dynamics::TrigTerm {
                        freq: t.freq.clone(),
                        coeff: t.coeff * c,
                    })
                    .collect(),
            ),
        );
        let mut src = OrbitSource::new(&map, 1e-11);
        let t1 = trace_table(&map, &base, 6, &mut src).unwrap();
        let mut src = OrbitSource::new(&map, 1e-11);
        let t2 = trace_table(&map, &scaled, 6, &mut src).unwrap();
        for n in 1..=6u32 {
            let expect = t1.get(n).unwrap() * c.powi(n as i32);
            let got = t2.get(n).unwrap();
            assert!(
                (got - expect).norm() <= 1e-10 * (1.0 + expect.norm()),
                "n = {n}"
            );
        }
    }

    #[test]
    fn real_weight_gives_real_traces() {
        let map = cat_map();
        let mut src = OrbitSource::new(&map, 1e-11);
        let table = trace_table(&map, &cos_weight(0.3), 8, &mut src).unwrap();
        for n in 1..=8 {
            let tr = table.get(n).unwrap();
            assert!(tr.im.abs() <= 1e-10 * (1.0 + tr.norm()));
        }
    }

    #[test]
    fn summation_order_independence() {
        let map = cat_map();
        let w = cos_weight(0.2);
        let set = enumerate_linear(&cat_matrix(), 8).unwrap();
        let forward = trace_from_orbits(&set, &map, &w).unwrap();
        // reversed deterministic order with the same compensated accumulator
        let mut re = KahanSum::new();
        let mut im = KahanSum::new();
        for p in set.points.iter().rev() {
            let denom = Mat2::identity().sub(&p.monodromy).det().abs();
            let v = weight_along_orbit(&map, &w, &p.x, set.n) / denom;
            re.add(v.re);
            im.add(v.im);
        }
        let reversed = Complex64::new(re.value(), im.value());
        assert!((forward - reversed).norm() <= 1e-12);
    }

    #[test]
    fn duality_trivial_and_characters() {
        let map = cat_map();
        let one_poly = TrigPolynomial::constant_one();
        let d = duality_check(&map, &WeightSpec::one(), &one_poly, &one_poly, 64).unwrap();
        assert!(d <= 1e-12, "constant case: {d:.3e}");

        // characters: both sides equal [A^T a + b = 0] by orthogonality
        let e = |k: Vec<i64>| {
            TrigPolynomial::new(vec![crate::dynamics::TrigTerm {
                freq: k,
                coeff: Complex64::new(1.0, 0.0),
            }])
        };
        let d = duality_check(&map, &WeightSpec::one(), &e(vec![1, 0]), &e(vec![0, 1]), 64)
            .unwrap();
        assert!(d <= 1e-10);
        // A^T (1,0) = (2,1); pairing with b = (-2,-1) is 1 on both sides
        let d = duality_check(&map, &WeightSpec::one(), &e(vec![1, 0]), &e(vec![-2, -1]), 64)
            .unwrap();
        assert!(d <= 1e-10);
    }

    #[test]
    fn duality_perturbed_quadrature() {
        let map = MapSpec::new(
            cat_matrix(),
            0.01,
            vec![
                TrigPolynomial::real_sine(1.0, vec![0, 1]),
                TrigPolynomial::zero(),
            ],
            4.0,
        )
        .unwrap();
        let w = cos_weight(0.2);
        let h = TrigPolynomial::real_cosine(1.0, vec![1, 0]);
        let f = TrigPolynomial::real_cosine(1.0, vec![0, 1]);
        let d128 = duality_check(&map, &w, &h, &f, 128).unwrap();
        let d256 = duality_check(&map, &w, &h, &f, 256).unwrap();
        assert!(d256 <= 1e-8, "discrepancy {d256:.3e}");
        assert!(d256 <= d128 * 2.0 + 1e-12, "no convergence: {d128:.3e} -> {d256:.3e}");
    }

    #[test]
    fn powers_identity_trivial_and_characters() {
        let map = cat_map();
        let one_poly = TrigPolynomial::constant_one();
        for n in [1u32, 2, 3] {
            let d =
                powers_identity_check(&map, &WeightSpec::one(), &one_poly, &one_poly, n, 32)
                    .unwrap();
            assert!(d <= 1e-12, "n = {n}: {d:.3e}");
        }
        let e = |k: Vec<i64>| {
            TrigPolynomial::new(vec![crate::dynamics::TrigTerm {
                freq: k,
                coeff: Complex64::new(1.0, 0.0),
            }])
        };
        let d = powers_identity_check(
            &map,
            &WeightSpec::one(),
            &e(vec![1, 0]),
            &e(vec![0, 1]),
            1,
            64,
        )
        .unwrap();
        assert!(d <= 1e-10);
    }

    #[test]
    fn trace_csv_round_trip_text() {
        let dir = tempfile::tempdir().unwrap();
        let table = TraceTable::new(
            "m".into(),
            "w".into(),
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.25, -0.5)],
        );
        let path = dir.path().join("traces.csv");
        write_trace_csv(&table, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "n,re_tr,im_tr\n1,1,0\n2,0.25,-0.5\n");
    }
}
