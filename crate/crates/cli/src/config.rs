//! Run configuration: TOML schema, validation and conversion into the core
//! domain types.

use crate::CliError;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use zetalab_core::digest::digest_json;
use zetalab_core::dynamics::{
    IntegerMatrix, MapSpec, TrigPolynomial, WeightKind, WeightSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerm {
    pub component: usize,
    pub amplitude: f64,
    pub frequency: Vec<i64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSection {
    pub matrix: Vec<Vec<i64>>,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub perturbation: Vec<PerturbationTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexField {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<ComplexField> for Complex64 {
    fn from(c: ComplexField) -> Self {
        Complex64::new(c.re, c.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTerm {
    pub frequency: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSection {
    /// constant | trig | exp-trig
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ComplexField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<WeightTerm>>,
}

/// Spectral cut: a number, or "auto" for the gap-midpoint rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaChoice {
    Value(f64),
    Named(String),
}

impl Default for SigmaChoice {
    fn default() -> Self {
        SigmaChoice::Named("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub orbit_residual: f64,
    pub inverse: f64,
    pub zero_stability_spread: f64,
    pub match_tol: f64,
    pub converged_spread: f64,
    pub sigma_gap: f64,
    pub identity_tol: f64,
    pub lemma_tol: f64,
    pub mollifier_extrapolation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            orbit_residual: 1e-11,
            inverse: 1e-13,
            zero_stability_spread: 1e-6,
            match_tol: 1e-3,
            converged_spread: 1e-3,
            sigma_gap: 0.02,
            identity_tol: 1e-8,
            lemma_tol: 2e-2,
            mollifier_extrapolation: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub n_max: u32,
    pub n_list: Vec<u32>,
    pub galerkin_k: i64,
    pub k_list: Vec<i64>,
    pub grid_m: usize,
    pub mollifier_grid: usize,
    pub tensor_grid: usize,
    pub epsilon_ladder: Vec<f64>,
    pub sigma: SigmaChoice,
    pub r: f64,
    pub seed: u64,
    pub eigen_count: usize,
    pub hyperbolicity_grid: usize,
    pub hyperbolicity_iterates: u32,
    pub factorization_n_lo: u32,
    pub tolerances: Tolerances,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            n_max: 12,
            n_list: vec![8, 10, 12],
            galerkin_k: 32,
            k_list: vec![24, 32],
            grid_m: 256,
            mollifier_grid: 1024,
            tensor_grid: 2048,
            epsilon_ladder: vec![0.1, 0.05, 0.025],
            sigma: SigmaChoice::default(),
            r: 4.0,
            seed: 0,
            eigen_count: 16,
            hyperbolicity_grid: 64,
            hyperbolicity_iterates: 8,
            factorization_n_lo: 4,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub out_dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            out_dir: PathBuf::from("out"),
            cache_dir: PathBuf::from("cache"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub map: MapSection,
    pub weight: WeightSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self, allow_large: bool) -> Result<(), CliError> {
        if self.run.n_max == 0 {
            return Err(CliError::Config("n_max must be at least 1".into()));
        }
        if self.run.n_max > 16 && !allow_large {
            return Err(CliError::Config(format!(
                "n_max = {} exceeds 16; pass --allow-large to override",
                self.run.n_max
            )));
        }
        if self.run.n_list.is_empty()
            || self.run.n_list.windows(2).any(|w| w[0] >= w[1])
            || *self.run.n_list.last().unwrap() > self.run.n_max
        {
            return Err(CliError::Config(
                "n_list must be strictly increasing and bounded by n_max".into(),
            ));
        }
        if self.run.k_list.is_empty() || self.run.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("k_list must be strictly increasing".into()));
        }
        if self.run.epsilon_ladder.len() < 3
            || self
                .run
                .epsilon_ladder
                .windows(2)
                .any(|w| w[0] <= w[1] || w[1] <= 0.0)
        {
            return Err(CliError::Config(
                "epsilon_ladder needs at least 3 strictly decreasing positive widths".into(),
            ));
        }
        let t = &self.run.tolerances;
        for (name, v) in [
            ("orbit_residual", t.orbit_residual),
            ("inverse", t.inverse),
            ("zero_stability_spread", t.zero_stability_spread),
            ("match_tol", t.match_tol),
            ("converged_spread", t.converged_spread),
            ("sigma_gap", t.sigma_gap),
            ("identity_tol", t.identity_tol),
            ("lemma_tol", t.lemma_tol),
            ("mollifier_extrapolation", t.mollifier_extrapolation),
        ] {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("tolerance {name} must be positive")));
            }
        }
        if let SigmaChoice::Named(name) = &self.run.sigma {
            if name != "auto" {
                return Err(CliError::Config(format!(
                    "sigma must be a number or \"auto\", got {name:?}"
                )));
            }
        }
        // constructing the domain objects performs the structural checks
        self.map_spec()?;
        self.weight_spec()?;
        Ok(())
    }

    pub fn map_spec(&self) -> Result<MapSpec, CliError> {
        let matrix = IntegerMatrix::new(self.map.matrix.clone())?;
        let d = matrix.dim();
        let mut components = vec![TrigPolynomial::zero(); d];
        for term in &self.map.perturbation {
            if term.component >= d {
                return Err(CliError::Config(format!(
                    "perturbation component {} out of range for d = {d}",
                    term.component
                )));
            }
            if term.frequency.len() != d {
                return Err(CliError::Config(format!(
                    "perturbation frequency {:?} has wrong dimension",
                    term.frequency
                )));
            }
            let poly = match term.phase {
                Phase::Sin => TrigPolynomial::real_sine(term.amplitude, term.frequency.clone()),
                Phase::Cos => TrigPolynomial::real_cosine(term.amplitude, term.frequency.clone()),
            };
            components[term.component] = components[term.component].add(&poly);
        }
        Ok(MapSpec::new(
            matrix,
            self.map.epsilon,
            components,
            self.run.r,
        )?)
    }

    pub fn weight_spec(&self) -> Result<WeightSpec, CliError> {
        match self.weight.kind.as_str() {
            "constant" => {
                let v = self.weight.value.ok_or_else(|| {
                    CliError::Config("constant weight needs weight.value".into())
                })?;
                Ok(WeightSpec::constant(v.into()))
            }
            "trig" | "exp-trig" => {
                let terms = self.weight.terms.as_ref().ok_or_else(|| {
                    CliError::Config(format!("{} weight needs weight.terms", self.weight.kind))
                })?;
                let poly = TrigPolynomial::new(
                    terms
                        .iter()
                        .map(|t| zetalab_core::dynamics::TrigTerm {
                            freq: t.frequency.clone(),
                            coeff: Complex64::new(t.re, t.im),
                        })
                        .collect(),
                );
                if self.weight.kind == "trig" {
                    Ok(WeightSpec::trig(poly))
                } else {
                    Ok(WeightSpec::exp_trig(poly))
                }
            }
            other => Err(CliError::Config(format!(
                "weight.kind must be constant, trig or exp-trig, got {other:?}"
            ))),
        }
    }

    pub fn weight_kind(&self) -> Option<WeightKind> {
        match self.weight.kind.as_str() {
            "constant" => Some(WeightKind::Constant),
            "trig" => Some(WeightKind::Trig),
            "exp-trig" => Some(WeightKind::ExpTrig),
            _ => None,
        }
    }

    /// Digest covering map, weight and run parameters; stamps artifacts.
    pub fn run_digest(&self) -> String {
        digest_json("run-v1", self)
    }

    /// Orbit caches live under a tolerance-scoped subdirectory, so changing
    /// tolerances invalidates them along with the map digest in file names.
    pub fn orbit_cache_dir(&self) -> PathBuf {
        let tol_digest = digest_json("orbit-tol-v1", &self.run.tolerances.orbit_residual);
        self.output
            .cache_dir
            .join(format!("tol-{}", zetalab_core::digest::short(&tol_digest)))
    }
}
