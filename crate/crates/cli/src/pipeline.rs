//! Pipeline stages. Each writes deterministic artifacts into the output
//! directory and stays independently runnable; stages share state only
//! through the orbit cache and the files they emit.

use crate::config::{RunConfig, SigmaChoice};
use crate::CliError;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use zetalab_core::determinant::{
    certified_radius, choose_sigma, coefficients_from_traces, factorization_check, stable_zeros,
    write_resonance_csv, write_series_csv, DeterminantSeries, FitReport, ReportedZero,
    ResonanceReport, SpectralBoundParams, StableZero,
};
use zetalab_core::dynamics::{HyperbolicityEstimate, MapSpec};
use zetalab_core::grid::QuadratureGrid;
use zetalab_core::mollifier::{
    extrapolate_or_scatter, mollified_tensor_trace_even, mollified_tensor_trace_odd,
    mollified_trace, write_ladder_csv, LadderRow, MollifierSpec,
};
use zetalab_core::orbits::{validate_orbit_set, OrbitSource};
use zetalab_core::roots::RootFindOptions;
use zetalab_core::spectral::{
    build_galerkin, eigen_solve, galerkin_grid_for, match_resonances, track_across_cutoffs,
    write_matrix_dump, write_spectrum_csv, TrackedEigenvalue,
};
use zetalab_core::traces::{trace_table, write_trace_csv, write_trace_sidecar, TraceTable};

pub fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.out_dir.join(name)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output.out_dir)?;
    Ok(())
}

fn root_opts(cfg: &RunConfig) -> RootFindOptions {
    RootFindOptions {
        seed: cfg.run.seed,
        ..RootFindOptions::default()
    }
}

/// Orbit source backed by the tolerance-scoped cache directory.
pub fn orbit_source<'a>(cfg: &RunConfig, map: &'a MapSpec) -> OrbitSource<'a> {
    OrbitSource::new(map, cfg.run.tolerances.orbit_residual)
        .with_cache_dir(cfg.orbit_cache_dir())
}

// ---------------------------------------------------------------------------
// orbits

#[derive(Debug, Serialize, Deserialize)]
pub struct OrbitRow {
    pub n: u32,
    pub count: u64,
    pub expected_count: u64,
    pub max_residual: f64,
    pub clean: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OrbitsSummary {
    pub schema: String,
    pub map_digest: String,
    pub residual_tol: f64,
    pub rows: Vec<OrbitRow>,
}

/// Enumerate/continue and cache Fix T^n for n = 1..N, validating each set.
pub fn cmd_orbits(cfg: &RunConfig, n_override: Option<u32>) -> Result<OrbitsSummary, CliError> {
    ensure_out_dir(cfg)?;
    let map = cfg.map_spec()?;
    let n_max = n_override.unwrap_or(cfg.run.n_max);
    let tol = cfg.run.tolerances.orbit_residual;
    let mut source = orbit_source(cfg, &map);
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let start = std::time::Instant::now();
        source.get(n)?;
        let status = source
            .status(n)
            .map(|s| format!("{s:?}").to_lowercase())
            .unwrap_or_default();
        let set = source.get(n)?;
        let report = validate_orbit_set(set, &map, tol);
        // timing and cache status go to the log only: artifacts stay
        // byte-identical across reruns
        println!(
            "orbits n={n}: {} points (expected {}), max residual {:.2e}, {:.1} ms [{}]",
            set.points.len(),
            set.expected_count,
            report.max_residual,
            start.elapsed().as_secs_f64() * 1e3,
            status,
        );
        if !report.is_clean() {
            return Err(CliError::Core(zetalab_core::Error::ValidationFailed(
                report.failures.join("; "),
            )));
        }
        rows.push(OrbitRow {
            n,
            count: set.points.len() as u64,
            expected_count: set.expected_count,
            max_residual: report.max_residual,
            clean: report.is_clean(),
        });
    }
    let summary = OrbitsSummary {
        schema: "orbits-summary-v1".into(),
        map_digest: map.dynamics_digest(),
        residual_tol: tol,
        rows,
    };
    write_json(&out_path(cfg, "orbits_summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// traces

/// Trace table over 1..n_max from cached orbits; CSV plus JSON sidecar.
pub fn cmd_traces(cfg: &RunConfig) -> Result<TraceTable, CliError> {
    ensure_out_dir(cfg)?;
    let map = cfg.map_spec()?;
    let weight = cfg.weight_spec()?;
    let mut source = orbit_source(cfg, &map);
    let table = trace_table(&map, &weight, cfg.run.n_max, &mut source)?;
    write_trace_csv(&table, &out_path(cfg, "traces.csv"))?;
    let mut tolerances = std::collections::BTreeMap::new();
    tolerances.insert("orbit_residual".to_string(), cfg.run.tolerances.orbit_residual);
    tolerances.insert("inverse".to_string(), cfg.run.tolerances.inverse);
    write_trace_sidecar(&table, &tolerances, &out_path(cfg, "traces_meta.json"))?;
    Ok(table)
}

fn load_traces(cfg: &RunConfig) -> Result<TraceTable, CliError> {
    let path = out_path(cfg, "traces.csv");
    if !path.exists() {
        return Err(CliError::MissingArtifacts(format!(
            "{} (run `zetalab traces` first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::Core(zetalab_core::Error::SchemaMismatch(format!(
                "traces.csv line {i} malformed"
            ))));
        }
        let re: f64 = parts[1].parse().map_err(|_| {
            CliError::Core(zetalab_core::Error::SchemaMismatch("bad float".into()))
        })?;
        let im: f64 = parts[2].parse().map_err(|_| {
            CliError::Core(zetalab_core::Error::SchemaMismatch("bad float".into()))
        })?;
        entries.push(Complex64::new(re, im));
    }
    let map = cfg.map_spec()?;
    let weight = cfg.weight_spec()?;
    Ok(TraceTable::new(
        map.dynamics_digest(),
        weight.digest(),
        entries,
    ))
}

// ---------------------------------------------------------------------------
// determinant

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundParamsArtifact {
    pub schema: String,
    pub params: SpectralBoundParams,
    pub certified_radius: f64,
    pub hyperbolicity: HyperbolicityEstimate,
    pub weight_sup_bound: f64,
    pub weight_grid_sup: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ZerosArtifact {
    pub schema: String,
    pub map_digest: String,
    pub weight_digest: String,
    pub n_list: Vec<u32>,
    pub certified_radius: f64,
    pub reporting_radius: f64,
    pub stable: Vec<StableZero>,
    pub unstable: Vec<StableZero>,
}

pub struct DeterminantOutput {
    pub series: DeterminantSeries,
    pub params: SpectralBoundParams,
    pub zeros: ZerosArtifact,
}

/// Series coefficients, certified radius and truncation-stable zeros.
pub fn cmd_determinant(cfg: &RunConfig) -> Result<DeterminantOutput, CliError> {
    ensure_out_dir(cfg)?;
    let map = cfg.map_spec()?;
    let weight = cfg.weight_spec()?;
    let mut source = orbit_source(cfg, &map);
    let table = trace_table(&map, &weight, cfg.run.n_max, &mut source)?;

    let hyp = map.estimate_hyperbolicity(cfg.run.hyperbolicity_grid, cfg.run.hyperbolicity_iterates)?;
    let params = SpectralBoundParams::new(cfg.run.r, hyp.lambda, weight.sup_norm_bound())?;
    let radius = certified_radius(&params);

    let series = coefficients_from_traces(&table, cfg.run.n_max)?;
    write_series_csv(&series, &out_path(cfg, "series.csv"))?;

    let truncations: Vec<DeterminantSeries> = cfg
        .run
        .n_list
        .iter()
        .map(|&n| coefficients_from_traces(&table, n))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&DeterminantSeries> = truncations.iter().collect();
    let report = stable_zeros(
        &refs,
        radius,
        cfg.run.tolerances.zero_stability_spread,
        &root_opts(cfg),
    )?;

    let zeros = ZerosArtifact {
        schema: "zeros-v1".into(),
        map_digest: map.dynamics_digest(),
        weight_digest: weight.digest(),
        n_list: cfg.run.n_list.clone(),
        certified_radius: radius,
        reporting_radius: radius,
        stable: report.stable,
        unstable: report.unstable,
    };
    write_json(&out_path(cfg, "zeros.json"), &zeros)?;

    let bound = BoundParamsArtifact {
        schema: "bound-params-v1".into(),
        params,
        certified_radius: radius,
        hyperbolicity: hyp,
        weight_sup_bound: weight.sup_norm_bound(),
        weight_grid_sup: weight.grid_sup_estimate(512),
    };
    write_json(&out_path(cfg, "bound_params.json"), &bound)?;

    // resonance CSV without oracle pairing; `report` merges the matching
    let resonance = ResonanceReport {
        certified_radius: radius,
        reporting_radius: radius,
        params,
        zeros: zeros
            .stable
            .iter()
            .map(|z| ReportedZero {
                z: z.z,
                stability_spread: z.stability_spread,
                inside_certified: z.inside_certified,
                matched_eig: None,
                pairing_residual: None,
            })
            .collect(),
    };
    write_resonance_csv(&resonance, &out_path(cfg, "resonance_report.csv"))?;
    println!(
        "determinant: N = {}, certified radius {:.7}, {} stable zero(s)",
        cfg.run.n_max,
        radius,
        zeros.stable.len()
    );
    Ok(DeterminantOutput {
        series,
        params,
        zeros,
    })
}

// ---------------------------------------------------------------------------
// galerkin

#[derive(Debug, Serialize, Deserialize)]
pub struct ScanArtifact {
    pub schema: String,
    pub k_values: Vec<i64>,
    pub eigen_count: usize,
    pub tracked: Vec<TrackedEigenvalue>,
    pub max_tail_ratios: Vec<f64>,
}

/// Build and solve the Galerkin operators for every configured cutoff, then
/// track eigenvalues across cutoffs.
pub fn cmd_galerkin(
    cfg: &RunConfig,
    k_override: Option<i64>,
    dump_matrix: Option<&Path>,
) -> Result<ScanArtifact, CliError> {
    ensure_out_dir(cfg)?;
    let map = cfg.map_spec()?;
    let weight = cfg.weight_spec()?;
    let k_values: Vec<i64> = match k_override {
        Some(k) => vec![k],
        None => cfg.run.k_list.clone(),
    };

    let mut tail_ratios = Vec::new();
    let mut spectra = Vec::with_capacity(k_values.len());
    for &k in &k_values {
        let grid = galerkin_grid_for(k, cfg.run.grid_m);
        let start = std::time::Instant::now();
        let op = build_galerkin(&map, &weight, k, grid)?;
        if op.aliasing_warning {
            eprintln!(
                "warning: K = {k}: column tail energy ratio {:.2e} beyond cutoff (aliasing risk)",
                op.max_tail_ratio
            );
        }
        tail_ratios.push(op.max_tail_ratio);
        let count = cfg.run.eigen_count.min(op.dim());
        let spec = eigen_solve(&op, count)?;
        println!(
            "galerkin K={k}: dim {} built+solved in {:.1} s, leading |lambda| = {:.6}",
            op.dim(),
            start.elapsed().as_secs_f64(),
            spec.eigenvalues.first().map(|z| z.norm()).unwrap_or(0.0)
        );
        write_spectrum_csv(&spec, &out_path(cfg, &format!("spectrum-K{k:02}.csv")))?;
        if let Some(path) = dump_matrix {
            if Some(k) == k_values.last().copied() {
                write_matrix_dump(&op, path)?;
            }
        }
        spectra.push(spec);
    }

    // cross-cutoff tracking reuses the spectra solved above
    let tracked: Vec<TrackedEigenvalue> = if spectra.len() >= 2 {
        let (tracked, ref_spreads) =
            track_across_cutoffs(&spectra, cfg.run.tolerances.converged_spread);
        if let Some(last) = spectra.last_mut() {
            last.k_spread = ref_spreads;
        }
        tracked
    } else {
        spectra[0]
            .eigenvalues
            .iter()
            .map(|&value| TrackedEigenvalue {
                value,
                spread: f64::INFINITY,
                converged: false,
            })
            .collect()
    };
    if let Some(last) = spectra.last() {
        write_spectrum_csv(last, &out_path(cfg, "spectrum_scan.csv"))?;
    }
    let artifact = ScanArtifact {
        schema: "galerkin-scan-v1".into(),
        k_values,
        eigen_count: cfg.run.eigen_count,
        tracked,
        max_tail_ratios: tail_ratios,
    };
    write_json(&out_path(cfg, "scan.json"), &artifact)?;
    Ok(artifact)
}

pub(crate) fn load_scan(cfg: &RunConfig) -> Result<ScanArtifact, CliError> {
    let path = out_path(cfg, "scan.json");
    if !path.exists() {
        return Err(CliError::MissingArtifacts(format!(
            "{} (run `zetalab galerkin` first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Core(zetalab_core::Error::SchemaMismatch(e.to_string())))
}

fn load_zeros(cfg: &RunConfig) -> Result<ZerosArtifact, CliError> {
    let path = out_path(cfg, "zeros.json");
    if !path.exists() {
        return Err(CliError::MissingArtifacts(format!(
            "{} (run `zetalab determinant` first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Core(zetalab_core::Error::SchemaMismatch(e.to_string())))
}

fn load_bound_params(cfg: &RunConfig) -> Result<BoundParamsArtifact, CliError> {
    let path = out_path(cfg, "bound_params.json");
    if !path.exists() {
        return Err(CliError::MissingArtifacts(format!(
            "{} (run `zetalab determinant` first)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Core(zetalab_core::Error::SchemaMismatch(e.to_string())))
}

// ---------------------------------------------------------------------------
// mollifier

#[derive(Debug, Serialize, Deserialize)]
pub struct MollifierEntry {
    pub label: String,
    pub reference: Complex64,
    pub extrapolated: Complex64,
    pub abs_error: f64,
    pub exponent: Option<f64>,
    pub ladder_errors: Vec<f64>,
    /// Set when the ladder carried no trend and the finest value stood in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MollifierSummary {
    pub schema: String,
    pub entries: Vec<MollifierEntry>,
}

/// Mollified-trace ladders against the orbit-sum references, with
/// extrapolation in the mollifier width.
pub fn cmd_mollifier(cfg: &RunConfig) -> Result<MollifierSummary, CliError> {
    ensure_out_dir(cfg)?;
    let map = cfg.map_spec()?;
    let weight = cfg.weight_spec()?;
    let mut source = orbit_source(cfg, &map);
    let table = trace_table(&map, &weight, 3, &mut source)?;

    let mut all_rows: Vec<(String, Vec<LadderRow>)> = Vec::new();
    let mut entries = Vec::new();

    let jobs: Vec<(String, u32, Complex64, MollKind, usize)> = vec![
        ("trace-n1".into(), 1, table.get(1).unwrap(), MollKind::Plain, cfg.run.mollifier_grid),
        ("trace-n2".into(), 2, table.get(2).unwrap(), MollKind::Plain, cfg.run.mollifier_grid),
        ("tensor-even-n1".into(), 1, table.get(2).unwrap(), MollKind::Even, cfg.run.tensor_grid),
        ("tensor-odd-n1".into(), 1, table.get(3).unwrap(), MollKind::Odd, cfg.run.tensor_grid),
    ];

    for (label, n, reference, kind, base_grid) in jobs {
        let mut rows = Vec::new();
        let mut ladder = Vec::new();
        for &eps in &cfg.run.epsilon_ladder {
            let m = mollifier_grid_m(base_grid, eps);
            let grid = QuadratureGrid::new(m);
            let moll = MollifierSpec::truncated_gaussian(eps)?;
            let value = match kind {
                MollKind::Plain => mollified_trace(&map, &weight, n, &moll, &grid)?,
                MollKind::Even => mollified_tensor_trace_even(&map, &weight, n, &moll, &grid)?,
                MollKind::Odd => mollified_tensor_trace_odd(&map, &weight, n, &moll, &grid)?,
            };
            rows.push(LadderRow {
                epsilon: eps,
                grid_m: m,
                value,
                reference,
                abs_error: (value - reference).norm(),
            });
            ladder.push((eps, value));
        }
        let (ex, note) = extrapolate_or_scatter(&ladder)?;
        println!(
            "mollifier {label}: extrapolated {:.6} + {:.2e}i vs reference {:.6} (|err| {:.2e})",
            ex.value.re,
            ex.value.im,
            reference.re,
            (ex.value - reference).norm()
        );
        entries.push(MollifierEntry {
            label: label.clone(),
            reference,
            extrapolated: ex.value,
            abs_error: (ex.value - reference).norm(),
            exponent: ex.exponent,
            ladder_errors: rows.iter().map(|r| r.abs_error).collect(),
            note,
        });
        all_rows.push((label, rows));
    }

    // single CSV, label column distinguishes the ladders
    let flat: Vec<LadderRow> = all_rows.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    let labels: Vec<String> = all_rows
        .iter()
        .flat_map(|(l, r)| std::iter::repeat(l.clone()).take(r.len()))
        .collect();
    write_labeled_ladder_csv(&labels, &flat, &out_path(cfg, "mollifier_ladder.csv"))?;

    let summary = MollifierSummary {
        schema: "mollifier-v1".into(),
        entries,
    };
    write_json(&out_path(cfg, "mollifier_summary.json"), &summary)?;
    Ok(summary)
}

enum MollKind {
    Plain,
    Even,
    Odd,
}

/// Power-of-two grid honoring m * eps >= 8 on top of the configured base.
pub fn mollifier_grid_m(base: usize, eps: f64) -> usize {
    let need = (8.0 / eps).ceil() as usize + 1;
    base.max(need).next_power_of_two()
}

fn write_labeled_ladder_csv(
    labels: &[String],
    rows: &[LadderRow],
    path: &Path,
) -> Result<(), CliError> {
    // reuse the core CSV writer per label would shuffle ordering; write flat
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        w,
        "label,epsilon,grid_m,re_value,im_value,reference_re,reference_im,abs_error"
    )?;
    for (label, r) in labels.iter().zip(rows) {
        writeln!(
            w,
            "{label},{},{},{},{},{},{},{}",
            r.epsilon, r.grid_m, r.value.re, r.value.im, r.reference.re, r.reference.im,
            r.abs_error
        )?;
    }
    let _ = write_ladder_csv;
    Ok(())
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub record_type: String,
    pub index: usize,
    pub re: f64,
    pub im: f64,
    pub aux1: f64,
    pub aux2: f64,
    pub aux3: f64,
    pub tag: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub records: Vec<ReportRecord>,
}

/// Merge series, spectrum and the zero/eigenvalue matching into one report,
/// with plot-ready scatter rows (zeros and reciprocal eigenvalues).
pub fn cmd_report(cfg: &RunConfig, format: &str) -> Result<Report, CliError> {
    ensure_out_dir(cfg)?;
    if !matches!(format, "csv" | "json") {
        return Err(CliError::Config(format!(
            "report format must be csv or json, got {format:?}"
        )));
    }
    let traces = load_traces(cfg)?;
    let zeros = load_zeros(cfg)?;
    let scan = load_scan(cfg)?;
    let bound = load_bound_params(cfg)?;

    let series = coefficients_from_traces(&traces, cfg.run.n_max)?;
    let mut records = Vec::new();
    for (m, c) in series.coefficients.iter().enumerate() {
        records.push(ReportRecord {
            record_type: "series_coeff".into(),
            index: m,
            re: c.re,
            im: c.im,
            aux1: 0.0,
            aux2: 0.0,
            aux3: 0.0,
            tag: String::new(),
        });
    }

    let stable: Vec<Complex64> = zeros.stable.iter().map(|z| z.z).collect();
    for (i, z) in zeros.stable.iter().enumerate() {
        records.push(ReportRecord {
            record_type: "stable_zero".into(),
            index: i,
            re: z.z.re,
            im: z.z.im,
            aux1: z.stability_spread,
            aux2: z.residual,
            aux3: 0.0,
            tag: if z.inside_certified {
                "inside_certified".into()
            } else {
                "outside".into()
            },
        });
    }

    let converged: Vec<Complex64> = scan
        .tracked
        .iter()
        .filter(|t| t.converged)
        .map(|t| t.value)
        .collect();
    for (i, t) in scan.tracked.iter().enumerate() {
        records.push(ReportRecord {
            record_type: "eigenvalue".into(),
            index: i,
            re: t.value.re,
            im: t.value.im,
            aux1: if t.spread.is_finite() { t.spread } else { -1.0 },
            aux2: 0.0,
            aux3: 0.0,
            tag: if t.converged {
                "converged".into()
            } else {
                "unconverged".into()
            },
        });
    }

    let matching = match_resonances(&stable, &converged, cfg.run.tolerances.match_tol);
    for (i, p) in matching.pairs.iter().enumerate() {
        records.push(ReportRecord {
            record_type: "matched_pair".into(),
            index: i,
            re: p.zero.re,
            im: p.zero.im,
            aux1: p.eig.re,
            aux2: p.eig.im,
            aux3: p.residual,
            tag: String::new(),
        });
    }

    // factorization against the converged spectrum
    let sigma = resolve_sigma(cfg, &bound.params, &converged)?;
    let proj: Vec<Complex64> = (1..=traces.n_max)
        .map(|n| {
            converged
                .iter()
                .filter(|l| l.norm() > sigma)
                .map(|l| l.powi(n as i32))
                .sum()
        })
        .collect();
    let fit: Option<FitReport> =
        factorization_check(&traces, &proj, cfg.run.factorization_n_lo).ok();

    for (name, value) in [
        ("certified_radius", bound.certified_radius),
        ("lambda", bound.params.lambda),
        ("sigma", sigma),
        ("rate_bound", sigma.sqrt() + 0.05),
        ("fitted_rate", fit.map(|f| f.rate).unwrap_or(f64::NAN)),
        ("matched_pairs", matching.pairs.len() as f64),
        ("unmatched_zeros", matching.unmatched_zeros.len() as f64),
        ("unmatched_eigs", matching.unmatched_eigs.len() as f64),
    ] {
        records.push(ReportRecord {
            record_type: "param".into(),
            index: 0,
            re: value,
            im: 0.0,
            aux1: 0.0,
            aux2: 0.0,
            aux3: 0.0,
            tag: name.into(),
        });
    }

    // plot-ready scatter: zeros and reciprocal eigenvalues should coincide
    for (i, z) in stable.iter().enumerate() {
        records.push(ReportRecord {
            record_type: "scatter".into(),
            index: i,
            re: z.re,
            im: z.im,
            aux1: 0.0,
            aux2: 0.0,
            aux3: 0.0,
            tag: "zero".into(),
        });
    }
    for (i, l) in converged.iter().enumerate() {
        if l.norm() > 0.0 {
            let inv = l.inv();
            records.push(ReportRecord {
                record_type: "scatter".into(),
                index: i,
                re: inv.re,
                im: inv.im,
                aux1: 0.0,
                aux2: 0.0,
                aux3: 0.0,
                tag: "eigenvalue_reciprocal".into(),
            });
        }
    }

    let report = Report {
        schema: "report-v1".into(),
        records,
    };
    match format {
        "json" => write_json(&out_path(cfg, "report.json"), &report)?,
        _ => write_report_csv(&report, &out_path(cfg, "report.csv"))?,
    }
    println!(
        "report: {} records, {} matched pair(s)",
        report.records.len(),
        matching.pairs.len()
    );
    Ok(report)
}

pub fn resolve_sigma(
    cfg: &RunConfig,
    params: &SpectralBoundParams,
    eigenvalues: &[Complex64],
) -> Result<f64, CliError> {
    match &cfg.run.sigma {
        SigmaChoice::Value(v) => {
            let moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
            zetalab_core::determinant::check_sigma_gap(*v, &moduli, cfg.run.tolerances.sigma_gap)?;
            Ok(*v)
        }
        SigmaChoice::Named(_) => {
            let moduli: Vec<f64> = eigenvalues.iter().map(|z| z.norm()).collect();
            Ok(choose_sigma(params, &moduli, cfg.run.tolerances.sigma_gap)?)
        }
    }
}

pub fn write_report_csv(report: &Report, path: &Path) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "record_type,index,re,im,aux1,aux2,aux3,tag")?;
    for r in &report.records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.record_type, r.index, r.re, r.im, r.aux1, r.aux2, r.aux3, r.tag
        )?;
    }
    Ok(())
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRecord>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(8, ',').collect();
        if parts.len() != 8 {
            return Err(CliError::Core(zetalab_core::Error::SchemaMismatch(format!(
                "report.csv line {i} malformed"
            ))));
        }
        let f = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Core(zetalab_core::Error::SchemaMismatch("bad float".into())))
        };
        out.push(ReportRecord {
            record_type: parts[0].to_string(),
            index: parts[1].parse().map_err(|_| {
                CliError::Core(zetalab_core::Error::SchemaMismatch("bad index".into()))
            })?,
            re: f(parts[2])?,
            im: f(parts[3])?,
            aux1: f(parts[4])?,
            aux2: f(parts[5])?,
            aux3: f(parts[6])?,
            tag: parts[7].to_string(),
        });
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(zetalab_core::Error::from)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
