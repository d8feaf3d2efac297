//! Run configuration (sectioned TOML), diagnostics CSV and JSON output.
//!
//! ```toml
//! schema_version = 1
//!
//! [grid]
//! dim = 1
//! bounds = [[-1.0, 1.0]]
//! cells = [200]
//!
//! [problem]
//! alpha = 2.0
//! lambda = 2.0
//! d = { kind = "constant", value = 5.0 }
//! phi = { kind = "quadratic", lambda = 2.0 }
//! rho0 = { kind = "gaussian-bump", amplitude = 1.0, width = 0.3, center = [0.0], base = 0.5 }
//!
//! [solver]
//! t_end = 5.0
//! ```
//!
//! Every key outside the schema is rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::StudyOptions;
use crate::error::{Error, Result};
use crate::functionals::DiagnosticsRecord;
use crate::grid::Grid;
use crate::problem::{CoefficientSpec, Problem, ProblemSpec, SolverControls};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 6] = ["t", "mass", "F", "D", "rho_min", "rho_max"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub bounds: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
}

impl GridSection {
    pub fn build(&self) -> Result<Grid> {
        let bounds: Vec<(f64, f64)> = self.bounds.iter().map(|b| (b[0], b[1])).collect();
        Grid::new(self.dim, &bounds, &self.cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub alpha: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_min: Option<f64>,
    pub d: CoefficientSpec,
    pub phi: CoefficientSpec,
    pub rho0: CoefficientSpec,
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}
fn default_prefix() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), prefix: default_prefix() }
    }
}

impl OutputSection {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }
}

fn default_resolved_floor() -> f64 {
    1e-18
}
fn default_equilibrium_tol() -> f64 {
    1e-13
}
fn default_dt_list() -> Vec<f64> {
    vec![4e-7, 2e-7, 1e-7]
}
fn default_n_list() -> Vec<usize> {
    vec![100, 200, 400]
}
fn default_bound_rel_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Fit window; when absent the second half of the resolved run is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    /// D below `resolved_floor · max D` counts as roundoff.
    #[serde(default = "default_resolved_floor")]
    pub resolved_floor: f64,
    #[serde(default = "default_equilibrium_tol")]
    pub equilibrium_tol: f64,
    #[serde(default = "default_dt_list")]
    pub dt_list: Vec<f64>,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub study: StudyOptions,
    #[serde(default)]
    pub c17: f64,
    #[serde(default)]
    pub c18: f64,
    #[serde(default = "default_bound_rel_tol")]
    pub bound_rel_tol: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            window: None,
            resolved_floor: default_resolved_floor(),
            equilibrium_tol: default_equilibrium_tol(),
            dt_list: default_dt_list(),
            n_list: default_n_list(),
            study: StudyOptions::default(),
            c17: 0.0,
            c18: 0.0,
            bound_rel_tol: default_bound_rel_tol(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_g0() -> Vec<f64> {
    vec![0.1]
}
fn default_gronwall_t_end() -> f64 {
    20.0
}
fn default_rtol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GronwallSection {
    #[serde(default = "one")]
    pub c7: f64,
    #[serde(default = "one")]
    pub c8: f64,
    #[serde(default = "one")]
    pub c9: f64,
    #[serde(default = "default_g0")]
    pub g0: Vec<f64>,
    #[serde(default = "default_gronwall_t_end")]
    pub t_end: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

impl Default for GronwallSection {
    fn default() -> Self {
        Self { c7: 1.0, c8: 1.0, c9: 1.0, g0: default_g0(), t_end: default_gronwall_t_end(), rtol: default_rtol() }
    }
}

fn default_seed() -> u64 {
    2024
}
fn default_trials() -> usize {
    2000
}
fn default_samples() -> usize {
    1000
}
fn default_c2() -> f64 {
    0.5
}
fn default_c3() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpSection {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Sobolev-constant trials.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// (v, ρ) pairs tested against the inequality.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_c3")]
    pub c3: f64,
}

impl Default for InterpSection {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            trials: default_trials(),
            samples: default_samples(),
            c2: default_c2(),
            c3: default_c3(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridSection,
    pub problem: ProblemSection,
    pub solver: SolverControls,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub gronwall: GronwallSection,
    #[serde(default)]
    pub interp: InterpSection,
}

impl RunConfig {
    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        Ok(ProblemSpec {
            alpha: self.problem.alpha,
            grid: self.grid.build()?,
            d: self.problem.d.clone(),
            phi: self.problem.phi.clone(),
            rho0: self.problem.rho0.clone(),
            lambda: self.problem.lambda,
            d_min: self.problem.d_min,
            solver: self.solver.clone(),
        })
    }

    pub fn build_problem(&self) -> Result<Problem> {
        Problem::new(self.problem_spec()?)
    }

    /// Canonical TOML with every default written out.
    pub fn to_canonical_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.problem.alpha > 1.0) {
            return Err(Error::Config(format!("problem.alpha must be > 1, got {}", self.problem.alpha)));
        }
        self.grid.build()?;
        self.solver.validate()?;
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// CSV text with 17 significant digits per value.
pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Analysis("no diagnostics records to write".into()));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in records {
        let row = [r.t, r.mass, r.energy, r.dissipation, r.rho_min, r.rho_max].map(|v| format!("{v:.16e}"));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ASCII output"))
}

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let text = diagnostics_csv(records)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    parse_diagnostics_csv(&fs::read_to_string(path)?)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}
