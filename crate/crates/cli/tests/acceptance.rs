//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! The perturbed cross-validation run (criteria 7-9) executes the full CLI
//! pipeline once into a shared directory; criterion 9 repeats it cold and
//! compares every artifact byte for byte.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use zetalab_cli::config::RunConfig;
use zetalab_cli::verify::{cmd_verify, Verdict};
use zetalab_cli::{pipeline, CliError};
use zetalab_core::determinant::{
    certified_radius, choose_sigma, coefficients_from_traces, factorization_check, stable_zeros,
    SpectralBoundParams,
};
use zetalab_core::dynamics::{IntegerMatrix, MapSpec, TrigPolynomial, WeightSpec};
use zetalab_core::grid::QuadratureGrid;
use zetalab_core::mollifier::{
    epsilon_extrapolate, extrapolate_or_scatter, ladder_errors_decrease,
    mollified_tensor_trace_even, mollified_tensor_trace_odd, mollified_trace, MollifierSpec,
};
use zetalab_core::orbits::OrbitSource;
use zetalab_core::roots::RootFindOptions;
use zetalab_core::spectral::{build_galerkin, eigen_solve, projector_traces};
use zetalab_core::traces::{duality_check, powers_identity_check, trace_table};

const EXPECTED_COUNTS: [u64; 12] = [
    1, 5, 16, 45, 121, 320, 841, 2205, 5776, 15125, 39601, 103680,
];

fn criterion(n: u32, name: &str, budget: Option<Duration>, body: impl FnOnce()) {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    match outcome {
        Ok(()) => {
            if let Some(b) = budget {
                assert!(
                    elapsed <= b,
                    "criterion {n} exceeded its runtime budget: {elapsed:?} > {b:?}"
                );
            }
            println!("ACCEPTANCE {n} ({name}): PASS [{:.1} s]", elapsed.as_secs_f64());
        }
        Err(e) => {
            println!("ACCEPTANCE {n} ({name}): FAIL [{:.1} s]", elapsed.as_secs_f64());
            std::panic::resume_unwind(e);
        }
    }
}

fn cat_matrix() -> IntegerMatrix {
    IntegerMatrix::new(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

fn cat_map() -> MapSpec {
    MapSpec::linear(cat_matrix()).unwrap()
}

fn cat_lambda() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}

fn stable_zero_set(
    map: &MapSpec,
    weight: &WeightSpec,
    n_list: &[u32],
    radius: f64,
    spread_tol: f64,
) -> Vec<zetalab_core::determinant::StableZero> {
    let mut src = OrbitSource::new(map, 1e-11);
    let table = trace_table(map, weight, *n_list.last().unwrap(), &mut src).unwrap();
    let series: Vec<_> = n_list
        .iter()
        .map(|&n| coefficients_from_traces(&table, n).unwrap())
        .collect();
    let refs: Vec<_> = series.iter().collect();
    stable_zeros(&refs, radius, spread_tol, &RootFindOptions::default())
        .unwrap()
        .stable
}

// ---------------------------------------------------------------------------
// Criterion 1: the exact cat-map suite

#[test]
fn criterion_1_cat_map_exact_suite() {
    criterion(1, "cat-map exact suite", Some(Duration::from_secs(60)), || {
        let map = cat_map();
        let weight = WeightSpec::one();
        let mut src = OrbitSource::new(&map, 1e-11);
        for (i, &expected) in EXPECTED_COUNTS.iter().enumerate() {
            let set = src.get((i + 1) as u32).unwrap();
            assert_eq!(set.points.len() as u64, expected, "count at n = {}", i + 1);
            assert_eq!(set.expected_count, expected);
        }
        let table = trace_table(&map, &weight, 12, &mut src).unwrap();
        for n in 1..=12 {
            let tr = table.get(n).unwrap();
            assert!(
                (tr - Complex64::new(1.0, 0.0)).norm() <= 1e-10,
                "tr_{n} = {tr}"
            );
        }
        let series = coefficients_from_traces(&table, 12).unwrap();
        assert!((series.coefficients[0] - Complex64::new(1.0, 0.0)).norm() <= 1e-9);
        assert!((series.coefficients[1] + Complex64::new(1.0, 0.0)).norm() <= 1e-9);
        for m in 2..=12 {
            assert!(
                series.coefficients[m].norm() <= 1e-9,
                "c_{m} = {}",
                series.coefficients[m]
            );
        }
        let params = SpectralBoundParams::new(4.0, cat_lambda(), 1.0).unwrap();
        let zeros = stable_zero_set(&map, &weight, &[8, 10, 12], certified_radius(&params), 1e-6);
        assert_eq!(zeros.len(), 1, "stable zeros: {zeros:?}");
        assert!((zeros[0].z - Complex64::new(1.0, 0.0)).norm() <= 1e-8);
        assert!(zeros[0].stability_spread <= 1e-8);
    });
}

// ---------------------------------------------------------------------------
// Criterion 2: constant-weight covariance

#[test]
fn criterion_2_constant_weight_covariance() {
    criterion(2, "constant-weight covariance", Some(Duration::from_secs(60)), || {
        let map = cat_map();
        let weight = WeightSpec::constant(Complex64::new(0.7, 0.0));
        let mut src = OrbitSource::new(&map, 1e-11);
        let table = trace_table(&map, &weight, 12, &mut src).unwrap();
        for n in 1..=12u32 {
            let expect = 0.7f64.powi(n as i32);
            assert!(
                (table.get(n).unwrap() - Complex64::new(expect, 0.0)).norm() <= 1e-10,
                "tr_{n}"
            );
        }
        let params = SpectralBoundParams::new(4.0, cat_lambda(), 0.7).unwrap();
        let zeros = stable_zero_set(&map, &weight, &[8, 10, 12], certified_radius(&params), 1e-6);
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0].z - Complex64::new(1.0 / 0.7, 0.0)).norm() <= 1e-6);

        // Galerkin spectrum {0.7} plus a nilpotent block
        let op = build_galerkin(&map, &weight, 8, 64).unwrap();
        let spec = eigen_solve(&op, op.dim()).unwrap();
        assert!((spec.eigenvalues[0] - Complex64::new(0.7, 0.0)).norm() <= 1e-10);
        for z in &spec.eigenvalues[1..] {
            assert!(z.norm() <= 1e-10, "off-eigenvalue {z}");
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 3: certified radius values

#[test]
fn criterion_3_certified_radius() {
    criterion(3, "certified radius", Some(Duration::from_secs(1)), || {
        let lambda = cat_lambda();
        let r4 = certified_radius(&SpectralBoundParams::new(4.0, lambda, 1.0).unwrap());
        assert!((r4 - 2.6180340).abs() <= 1e-5, "r = 4 radius {r4}");
        let r2 = certified_radius(&SpectralBoundParams::new(2.0, lambda, 1.0).unwrap());
        assert!((r2 - 1.6180340).abs() <= 1e-5, "r = 2 radius {r2}");
        let doubled = certified_radius(&SpectralBoundParams::new(4.0, lambda, 2.0).unwrap());
        assert_eq!(doubled, r4 / 2.0, "doubling |g| must halve the radius exactly");
    });
}

// ---------------------------------------------------------------------------
// Criterion 4: mollifier convergence

#[test]
fn criterion_4_mollifier_convergence() {
    criterion(4, "mollifier convergence", Some(Duration::from_secs(300)), || {
        let map = cat_map();
        let weight = WeightSpec::one();
        let mut src = OrbitSource::new(&map, 1e-11);
        let table = trace_table(&map, &weight, 2, &mut src).unwrap();
        for n in [1u32, 2] {
            let reference = table.get(n).unwrap();
            let mut ladder = Vec::new();
            let mut errors = Vec::new();
            for eps in [0.1, 0.05, 0.025] {
                let m = pipeline::mollifier_grid_m(1024, eps);
                assert!(m as f64 * eps >= 8.0);
                let moll = MollifierSpec::truncated_gaussian(eps).unwrap();
                let grid = QuadratureGrid::new(m);
                let v = mollified_trace(&map, &weight, n, &moll, &grid).unwrap();
                errors.push((v - reference).norm());
                ladder.push((eps, v));
            }
            assert!(
                ladder_errors_decrease(&errors, 1.2, 1e-9),
                "n = {n}: ladder errors {errors:?}"
            );
            let ex = epsilon_extrapolate(&ladder).unwrap();
            assert!(
                (ex.value - Complex64::new(1.0, 0.0)).norm() <= 1e-3,
                "n = {n}: extrapolated {}",
                ex.value
            );
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 5: the tensor-pairing identities, numerically

#[test]
fn criterion_5_lemma_tensor_pairings() {
    criterion(5, "tensor pairing vs orbit sums", Some(Duration::from_secs(600)), || {
        let map = cat_map();
        let weight = WeightSpec::one();
        let mut src = OrbitSource::new(&map, 1e-11);
        let table = trace_table(&map, &weight, 3, &mut src).unwrap();
        for (odd, target_n) in [(false, 2u32), (true, 3u32)] {
            let target = table.get(target_n).unwrap();
            let mut ladder = Vec::new();
            for eps in [0.1, 0.05, 0.025] {
                let m = pipeline::mollifier_grid_m(2048, eps);
                let moll = MollifierSpec::truncated_gaussian(eps).unwrap();
                let grid = QuadratureGrid::new(m);
                let v = if odd {
                    mollified_tensor_trace_odd(&map, &weight, 1, &moll, &grid).unwrap()
                } else {
                    mollified_tensor_trace_even(&map, &weight, 1, &moll, &grid).unwrap()
                };
                ladder.push((eps, v));
            }
            // the exact cat map has no resolvable eps-trend here, so the
            // ladder may degrade to its finest value plus a scatter bar
            let (ex, _note) = extrapolate_or_scatter(&ladder).unwrap();
            assert!(
                (ex.value - target).norm() <= 2e-2 && ex.error_estimate <= 2e-2,
                "odd = {odd}: extrapolated {} +- {:.2e} vs tr_{target_n} = {target}",
                ex.value,
                ex.error_estimate
            );
        }
    });
}

// ---------------------------------------------------------------------------
// Criterion 6: operator identities on the perturbed map

#[test]
fn criterion_6_operator_identities() {
    criterion(6, "operator identities", Some(Duration::from_secs(120)), || {
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
        let weight = WeightSpec::trig(
            TrigPolynomial::constant_one().add(&TrigPolynomial::real_cosine(0.2, vec![1, 0])),
        );
        let h = TrigPolynomial::real_cosine(1.0, vec![1, 0]);
        let f = TrigPolynomial::real_cosine(1.0, vec![0, 1])
            .add(&TrigPolynomial::real_sine(0.5, vec![1, 1]));
        let d = duality_check(&map, &weight, &h, &f, 256).unwrap();
        assert!(d <= 1e-8, "duality discrepancy {d:.3e}");
        for n in [1u32, 2] {
            let p = powers_identity_check(&map, &weight, &h, &f, n, 256).unwrap();
            assert!(p <= 1e-8, "powers identity n = {n}: {p:.3e}");
        }
    });
}

// ---------------------------------------------------------------------------
// Criteria 7-9: the shared perturbed cross-validation run

struct PerturbedRun {
    _dir: tempfile::TempDir,
    cfg: RunConfig,
    verdicts: Vec<Verdict>,
    artifacts: BTreeMap<String, Vec<u8>>,
    elapsed: Duration,
}

fn perturbed_config(base: &Path) -> RunConfig {
    let toml = format!(
        r#"
[map]
matrix = [[2, 1], [1, 1]]
epsilon = 0.02

[[map.perturbation]]
component = 0
amplitude = 1.0
frequency = [0, 1]
phase = "sin"

[weight]
kind = "constant"
value = {{ re = 1.0 }}

[output]
out_dir = "{}"
cache_dir = "{}"
"#,
        base.join("out").display(),
        base.join("cache").display()
    );
    let cfg = RunConfig::from_toml(&toml).unwrap();
    cfg.validate(false).unwrap();
    cfg
}

fn run_pipeline(cfg: &RunConfig) -> Result<Vec<Verdict>, CliError> {
    pipeline::cmd_orbits(cfg, None)?;
    pipeline::cmd_traces(cfg)?;
    pipeline::cmd_determinant(cfg)?;
    pipeline::cmd_galerkin(cfg, None, None)?;
    let verdicts = cmd_verify(cfg, "crosscheck")?;
    pipeline::cmd_report(cfg, "json")?;
    pipeline::cmd_report(cfg, "csv")?;
    Ok(verdicts)
}

fn read_artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            out.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            );
        }
    }
    out
}

fn perturbed_run() -> &'static PerturbedRun {
    static RUN: OnceLock<PerturbedRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = perturbed_config(dir.path());
        let start = Instant::now();
        let verdicts = run_pipeline(&cfg).expect("perturbed pipeline");
        let elapsed = start.elapsed();
        let artifacts = read_artifacts(&cfg.output.out_dir);
        PerturbedRun {
            _dir: dir,
            cfg,
            verdicts,
            artifacts,
            elapsed,
        }
    })
}

fn report_param(run: &PerturbedRun, name: &str) -> f64 {
    let report: serde_json::Value =
        serde_json::from_slice(run.artifacts.get("report.json").expect("report.json")).unwrap();
    report["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["record_type"] == "param" && r["tag"] == name)
        .unwrap_or_else(|| panic!("param {name} missing from report"))["re"]
        .as_f64()
        .unwrap()
}

#[test]
fn criterion_7_theorem_cross_validation() {
    criterion(7, "zeros <-> eigenvalues cross-validation", None, || {
        let run = perturbed_run();
        assert!(
            run.elapsed <= Duration::from_secs(900),
            "pipeline took {:?} (budget 15 min)",
            run.elapsed
        );
        let by_name = |name: &str| -> &Verdict {
            run.verdicts
                .iter()
                .find(|v| v.check_name == name)
                .unwrap_or_else(|| panic!("verdict {name} missing"))
        };
        // (a) d(1) = 0: a stable zero within 1e-6 of z = 1
        let srb = by_name("srb_zero_at_one");
        assert!(srb.pass, "srb zero: |z - 1| = {:.3e}", srb.lhs);
        // (b) + (c) matching in both directions with |z lambda - 1| <= 1e-3
        assert!(by_name("all_stable_zeros_matched").pass);
        assert!(by_name("all_converged_eigs_matched").pass);
        let pairing = by_name("pairing_residual");
        assert!(
            pairing.pass && pairing.lhs <= 1e-3,
            "pairing residual {:.3e}",
            pairing.lhs
        );
        // at least one genuine pair must exist (z = 1 <-> lambda = 1)
        let matched = report_param(run, "matched_pairs");
        assert!(matched >= 1.0, "no matched pairs");
        assert_eq!(report_param(run, "unmatched_zeros"), 0.0);
        assert_eq!(report_param(run, "unmatched_eigs"), 0.0);
    });
}

#[test]
fn criterion_8_factorization_rates() {
    criterion(8, "spectral factorization rate", None, || {
        // runs of criteria 1 and 2: exact cat map with g = 1 and g = 0.7
        for g in [1.0, 0.7] {
            let map = cat_map();
            let weight = WeightSpec::constant(Complex64::new(g, 0.0));
            let mut src = OrbitSource::new(&map, 1e-11);
            let table = trace_table(&map, &weight, 12, &mut src).unwrap();
            let op = build_galerkin(&map, &weight, 8, 64).unwrap();
            let spec = eigen_solve(&op, 16).unwrap();
            let params = SpectralBoundParams::new(4.0, cat_lambda(), g).unwrap();
            let sigma = choose_sigma(&params, &spec.moduli(), 0.02).unwrap();
            let proj = projector_traces(&spec, sigma, 12, 0.02).unwrap();
            let fit = factorization_check(&table, &proj, 4).unwrap();
            let bound = sigma.sqrt() + 0.05;
            assert!(
                fit.rate <= bound,
                "g = {g}: rate {} > bound {bound}",
                fit.rate
            );
        }
        // run of criterion 7: rates recorded in its report
        let run = perturbed_run();
        let rate = report_param(run, "fitted_rate");
        let bound = report_param(run, "rate_bound");
        assert!(
            rate.is_nan() || rate <= bound,
            "perturbed rate {rate} > bound {bound}"
        );
        let v = run
            .verdicts
            .iter()
            .find(|v| v.check_name == "factorization_rate")
            .expect("factorization verdict");
        assert!(v.pass, "factorization verdict failed: rate {}", v.lhs);
    });
}

#[test]
fn criterion_9_determinism() {
    criterion(9, "bit-identical rerun", None, || {
        let first = perturbed_run();
        let dir = tempfile::tempdir().unwrap();
        let cfg = perturbed_config(dir.path());
        run_pipeline(&cfg).expect("second perturbed pipeline");
        let second = read_artifacts(&cfg.output.out_dir);
        assert_eq!(
            first.artifacts.keys().collect::<Vec<_>>(),
            second.keys().collect::<Vec<_>>(),
            "artifact sets differ"
        );
        for (name, bytes) in &first.artifacts {
            assert_eq!(
                bytes,
                second.get(name).unwrap(),
                "artifact {name} differs between runs"
            );
        }
        // the config round-trips unchanged alongside the run artifacts
        let text = first.cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), first.cfg);
    });
}
