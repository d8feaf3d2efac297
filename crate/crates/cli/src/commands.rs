use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nfp_core::analysis::{
    check_theorem_hypotheses, fit_decay, identity_convergence_study, resolved_window, subsequence_decay, DecayFit,
    HypothesisReport, SubsequenceDecay,
};
use nfp_core::config::{load_config, read_diagnostics_csv, to_json, write_diagnostics_csv, write_json, RunConfig};
use nfp_core::equilibrium::{l1_distance, solve_equilibrium};
use nfp_core::ineqlab::{
    check_interpolation, estimate_sobolev_constant, gronwall_threshold, gronwall_verify, sobolev_exponent, Threshold,
};
use nfp_core::problem::validate_problem;
use nfp_core::solver::run;
use nfp_core::{DiagnosticsRecord, Error};
use serde::Serialize;

use crate::ReportOut;

pub enum Outcome {
    Success,
    CheckFailed(String),
}

#[derive(Debug)]
pub struct CliError {
    validation: bool,
    message: String,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        if self.validation {
            1
        } else {
            2
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self { validation: true, message: message.into() }
    }

    fn context(self, what: &str) -> Self {
        Self { message: format!("{what}: {}", self.message), ..self }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let validation = matches!(
            e,
            Error::Config(_)
                | Error::InvalidGrid(_)
                | Error::InvalidCoefficient(_)
                | Error::InvalidProblem(_)
                | Error::NonPositiveDensity { .. }
                | Error::GridMismatch(_)
        );
        Self { validation, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<nfp_core::SolverError> for CliError {
    fn from(e: nfp_core::SolverError) -> Self {
        Error::from(e).into()
    }
}

type CliResult<T = Outcome> = Result<T, CliError>;

fn load(path: &Path) -> CliResult<RunConfig> {
    load_config(path).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn emit<T: Serialize>(value: &T, out: &ReportOut) -> CliResult<()> {
    match &out.output {
        Some(path) => write_json(value, path)?,
        None => print!("{}", to_json(value)?),
    }
    Ok(())
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Outcome::Success
    } else {
        Outcome::CheckFailed(msg())
    }
}

#[derive(Serialize)]
struct SimulationSummary {
    config: PathBuf,
    accepted_steps: usize,
    rejected_steps: usize,
    records: usize,
    last: DiagnosticsRecord,
    rho_min: f64,
    rho_max: f64,
    max_mass_drift: f64,
    decay_fit: Option<DecayFit>,
    hypotheses: HypothesisReport,
    subsequence: SubsequenceDecay,
    equilibrium_constant: f64,
    /// ‖ρ(t_end) − ρ∞‖_{L¹}
    l1_to_equilibrium: f64,
}

fn simulate_one(path: &Path) -> CliResult<String> {
    let cfg = load(path)?;
    let problem = cfg.build_problem()?;
    let out = run(&problem)?;
    let records = &out.records;
    let window = match cfg.analysis.window {
        Some([a, b]) => (a, b),
        None => resolved_window(records, cfg.analysis.resolved_floor)?,
    };
    // a short run may not hold enough samples for a fit; that is not fatal
    let decay_fit = fit_decay(records, window).ok();
    let eq = solve_equilibrium(&problem, cfg.analysis.equilibrium_tol)?;
    let summary = SimulationSummary {
        config: path.to_path_buf(),
        accepted_steps: out.accepted_steps,
        rejected_steps: out.rejected_steps,
        records: records.len(),
        last: *records.last().expect("run records the initial state"),
        rho_min: out.rho_min,
        rho_max: out.rho_max,
        max_mass_drift: records.iter().map(|r| (r.mass - 1.0).abs()).fold(0.0, f64::max),
        decay_fit,
        hypotheses: check_theorem_hypotheses(&problem, records)?,
        subsequence: subsequence_decay(records),
        equilibrium_constant: eq.constant,
        l1_to_equilibrium: l1_distance(out.final_state.rho(), &eq.rho_inf)?,
    };
    fs::create_dir_all(&cfg.output.dir)?;
    let csv = cfg.output.path("diagnostics.csv");
    write_diagnostics_csv(records, &csv)?;
    write_json(&summary, &cfg.output.path("summary.json"))?;
    fs::write(cfg.output.path("config.toml"), cfg.to_canonical_string()?)?;
    Ok(format!(
        "{}: {} steps, t = {}, F = {:.6e}, D = {:.6e} -> {}",
        path.display(),
        out.accepted_steps,
        summary.last.t,
        summary.last.energy,
        summary.last.dissipation,
        csv.display()
    ))
}

pub fn simulate(configs: &[PathBuf], jobs: usize) -> CliResult {
    if jobs == 0 {
        return Err(CliError::validation("--jobs must be at least 1"));
    }
    // two jobs writing the same files would clobber each other
    let mut seen = HashSet::new();
    for path in configs {
        let cfg = load(path)?;
        let target = cfg.output.path("");
        if !seen.insert(target.clone()) {
            return Err(CliError::validation(format!(
                "{}: output prefix {} is shared with another config",
                path.display(),
                target.display()
            )));
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<String>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = configs.get(i) else { break };
                let r = simulate_one(path).map_err(|e| e.context(&path.display().to_string()));
                results.lock().expect("no panics while held")[i] = Some(r);
            });
        }
    });
    let mut worst: Option<CliError> = None;
    for r in results.into_inner().expect("threads joined").into_iter().flatten() {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("nfp: {e}");
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    match worst {
        None => Ok(Outcome::Success),
        Some(e) => Err(CliError { message: "one or more jobs failed".into(), ..e }),
    }
}

pub fn equilibrium(config: &Path, out: &ReportOut) -> CliResult {
    let cfg = load(config)?;
    let problem = cfg.build_problem()?;
    let eq = solve_equilibrium(&problem, cfg.analysis.equilibrium_tol)?;
    emit(&eq, out)?;
    Ok(Outcome::Success)
}

pub fn decay_fit(csv: &Path, window: Option<(f64, f64)>, floor: f64, out: &ReportOut) -> CliResult {
    let records = read_diagnostics_csv(csv)?;
    let window = match window {
        Some(w) => w,
        None => resolved_window(&records, floor)?,
    };
    let fit = fit_decay(&records, window)?;
    emit(&fit, out)?;
    Ok(check(fit.valid, || format!("non-positive D inside window [{}, {}]", window.0, window.1)))
}

pub fn identity_check(config: &Path, out: &ReportOut) -> CliResult {
    let cfg = load(config)?;
    let problem = cfg.build_problem()?;
    let a = &cfg.analysis;
    let study = identity_convergence_study(&problem, &a.dt_list, &a.n_list, a.study)?;
    let mut table = String::from("# energy identity: max |ΔF/dt + D|\n#          dt     residual_1     order\n");
    for (i, r) in study.dt_rows.iter().enumerate() {
        let order = if i == 0 { String::from("-") } else { format!("{:.3}", study.dt_orders[i - 1]) };
        table += &format!("{:>13.4e}  {:>13.6e}  {order:>8}\n", r.dt, r.residual_1);
    }
    table += "# decomposition: relative error of d²F/dt²\n#       cells     residual_2     order\n";
    for (i, r) in study.n_rows.iter().enumerate() {
        let order = if i == 0 { String::from("-") } else { format!("{:.3}", study.n_orders[i - 1]) };
        table += &format!("{:>13}  {:>13.6e}  {order:>8}\n", r.cells, r.residual_2);
    }
    match &out.output {
        Some(path) => {
            print!("{table}");
            write_json(&study, path)?;
        }
        None => print!("{table}"),
    }
    Ok(Outcome::Success)
}

pub struct GronwallOverrides {
    pub c7: Option<f64>,
    pub c8: Option<f64>,
    pub c9: Option<f64>,
    pub g0: Option<Vec<f64>>,
    pub t_end: Option<f64>,
    pub rtol: Option<f64>,
}

#[derive(Serialize)]
struct GronwallSummary {
    threshold: Threshold,
    reports: Vec<nfp_core::ineqlab::GronwallReport>,
}

pub fn gronwall(config: Option<&Path>, o: GronwallOverrides, out: &ReportOut) -> CliResult {
    let base = match config {
        Some(path) => load(path)?.gronwall,
        None => Default::default(),
    };
    let c7 = o.c7.unwrap_or(base.c7);
    let c8 = o.c8.unwrap_or(base.c8);
    let c9 = o.c9.unwrap_or(base.c9);
    let g0 = o.g0.unwrap_or(base.g0);
    let t_end = o.t_end.unwrap_or(base.t_end);
    let rtol = o.rtol.unwrap_or(base.rtol);
    let params = gronwall_threshold(c7, c8, c9).map_err(|e| CliError::validation(e.to_string()))?;
    match params.threshold {
        Threshold::Infinite => eprintln!("no finite threshold: every g0 > 0 decays"),
        Threshold::Finite { value } => eprintln!("threshold = {value:.16e}"),
    }
    let reports = g0.iter().map(|&g| gronwall_verify(&params, g, t_end, rtol)).collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        let verdict = match r.bound_holds {
            Some(true) => "bound verified",
            Some(false) => "bound VIOLATED",
            None => "above threshold, no bound",
        };
        eprintln!("g0 = {:.6e}: {verdict}", r.g0);
    }
    let failed: Vec<f64> = reports.iter().filter(|r| r.bound_holds == Some(false)).map(|r| r.g0).collect();
    emit(&GronwallSummary { threshold: params.threshold, reports }, out)?;
    Ok(check(failed.is_empty(), || format!("bound violated for g0 = {failed:?}")))
}

#[derive(Serialize)]
struct InterpSummary {
    sobolev: nfp_core::ineqlab::SobolevEstimate,
    interpolation: nfp_core::ineqlab::InterpReport,
}

pub fn interp_check(config: &Path, out: &ReportOut) -> CliResult {
    let cfg = load(config)?;
    let grid = cfg.grid.build()?;
    let i = &cfg.interp;
    let sobolev = estimate_sobolev_constant(&grid, sobolev_exponent(grid.dim())?, i.trials, i.seed)?;
    // distinct stream for the (v, ρ) samples
    let report = check_interpolation(&grid, (i.c2, i.c3), &sobolev, i.samples, i.seed.wrapping_add(1))?;
    let passed = report.passed();
    let violations = report.violations;
    emit(&InterpSummary { sobolev, interpolation: report }, out)?;
    Ok(check(passed, || format!("{violations} interpolation violations")))
}

#[derive(Serialize)]
#[serde(untagged)]
enum ValidateReport {
    Static(nfp_core::problem::ValidationReport),
    Run(HypothesisReport),
}

pub fn validate(config: &Path, with_run: bool, out: &ReportOut) -> CliResult {
    let cfg = load(config)?;
    let spec = cfg.problem_spec()?;
    let report = if with_run {
        let problem = nfp_core::Problem::new(spec)?;
        let out = run(&problem)?;
        ValidateReport::Run(check_theorem_hypotheses(&problem, &out.records)?)
    } else {
        ValidateReport::Static(validate_problem(&spec)?)
    };
    let (ok, warnings) = match &report {
        ValidateReport::Static(r) => (r.is_clean(), r.warnings.clone()),
        ValidateReport::Run(r) => (r.all_hold(), r.warnings.clone()),
    };
    emit(&report, out)?;
    Ok(check(ok, || if warnings.is_empty() { "hypotheses do not hold".into() } else { warnings.join("; ") }))
}
