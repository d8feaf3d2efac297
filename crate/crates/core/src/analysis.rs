//! Post-processing of recorded diagnostics: exponential decay fits for D,
//! theorem-hypothesis bookkeeping, subsequence decay, and refinement studies
//! of the energy identity and the second-derivative decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{dissipation, entropy_terms, DiagnosticsRecord, EntropyTerms};
use crate::problem::{validate_problem, Problem};
use crate::solver::{Integrator, State};

const MIN_FIT_SAMPLES: usize = 10;
/// Halvings of D(t₀) required before `subsequence_decay` reports success.
pub const SUBSEQUENCE_LEVELS: usize = 5;

/// Least-squares fit of ln D = ln A − σ t over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub rate: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub samples: usize,
    /// false when some D in the window is not positive; the fit fields are
    /// then NaN.
    pub valid: bool,
}

fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0.is_finite() && window.1.is_finite() && window.0 < window.1) {
        return Err(Error::Analysis(format!("invalid window [{}, {}]", window.0, window.1)));
    }
    Ok(())
}

pub fn fit_decay(records: &[DiagnosticsRecord], window: (f64, f64)) -> Result<DecayFit> {
    check_window(window)?;
    let sel: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.t >= window.0 && r.t <= window.1).collect();
    if sel.len() < MIN_FIT_SAMPLES {
        return Err(Error::Analysis(format!(
            "window [{}, {}] holds {} records, need at least {MIN_FIT_SAMPLES}",
            window.0,
            window.1,
            sel.len()
        )));
    }
    if sel.iter().any(|r| !(r.dissipation > 0.0)) {
        return Ok(DecayFit {
            window,
            rate: f64::NAN,
            amplitude: f64::NAN,
            r_squared: f64::NAN,
            samples: sel.len(),
            valid: false,
        });
    }
    let n = sel.len() as f64;
    let t_mean = sel.iter().map(|r| r.t).sum::<f64>() / n;
    let y_mean = sel.iter().map(|r| r.dissipation.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for r in &sel {
        let dt = r.t - t_mean;
        let dy = r.dissipation.ln() - y_mean;
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::Analysis("all window samples share one time".into()));
    }
    let slope = sty / stt;
    let intercept = y_mean - slope * t_mean;
    let ss_res = (syy - slope * sty).max(0.0);
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayFit { window, rate: -slope, amplitude: intercept.exp(), r_squared, samples: sel.len(), valid: true })
}

/// Second half of the recorded time span.
pub fn default_window(records: &[DiagnosticsRecord]) -> Result<(f64, f64)> {
    let (first, last) = span(records)?;
    Ok((0.5 * (first + last), last))
}

/// Second half of the part of the run before D first drops below
/// `floor_rel · max D`. Past that point D is dominated by roundoff in μ
/// and carries no decay information.
pub fn resolved_window(records: &[DiagnosticsRecord], floor_rel: f64) -> Result<(f64, f64)> {
    let (first, last) = span(records)?;
    let d_max = records.iter().map(|r| r.dissipation).fold(0.0, f64::max);
    let floor = floor_rel * d_max;
    let end = records.iter().find(|r| r.dissipation < floor).map_or(last, |r| r.t);
    Ok((0.5 * (first + end), end))
}

fn span(records: &[DiagnosticsRecord]) -> Result<(f64, f64)> {
    match (records.first(), records.last()) {
        (Some(a), Some(b)) if b.t > a.t => Ok((a.t, b.t)),
        _ => Err(Error::Analysis("need records spanning a positive time interval".into())),
    }
}

/// Measurable quantities behind the decay theorem's hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    /// Observed lower density bound over the records.
    pub c2: f64,
    /// Observed upper density bound over the records.
    pub c3: f64,
    pub positivity: bool,
    pub min_d: f64,
    pub d_min_declared: Option<f64>,
    pub d_min_satisfied: Option<bool>,
    pub sup_grad_d: f64,
    pub sup_grad_phi: f64,
    pub lambda: f64,
    pub lambda_positive: bool,
    /// D[ρ₀].
    pub initial_dissipation: f64,
    pub max_mass_drift: f64,
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.positivity && self.lambda_positive && self.d_min_satisfied != Some(false) && self.warnings.is_empty()
    }
}

pub fn check_theorem_hypotheses(problem: &Problem, records: &[DiagnosticsRecord]) -> Result<HypothesisReport> {
    let validation = validate_problem(problem.spec())?;
    let c2 = records.iter().map(|r| r.rho_min).fold(f64::INFINITY, f64::min);
    let c3 = records.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max);
    let max_mass_drift = records.iter().map(|r| (r.mass - 1.0).abs()).fold(0.0, f64::max);
    Ok(HypothesisReport {
        c2,
        c3,
        positivity: c2.is_finite() && c2 > problem.controls().positivity_floor,
        min_d: validation.min_d,
        d_min_declared: validation.d_min_declared,
        d_min_satisfied: validation.d_min_satisfied,
        sup_grad_d: validation.sup_grad_d,
        sup_grad_phi: validation.sup_grad_phi,
        lambda: problem.lambda(),
        lambda_positive: problem.lambda() > 0.0,
        initial_dissipation: dissipation(&State::initial(problem), problem),
        max_mass_drift,
        warnings: validation.warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub level: usize,
    pub t: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsequenceDecay {
    pub found: bool,
    pub levels: usize,
    pub witnesses: Vec<Witness>,
}

/// Increasing times t_k at which D first falls below 2^{−k}·D(t₀).
pub fn subsequence_decay(records: &[DiagnosticsRecord]) -> SubsequenceDecay {
    let mut witnesses = Vec::new();
    if let Some(first) = records.first() {
        let d0 = first.dissipation;
        let mut level = 1;
        let mut threshold = 0.5 * d0;
        for r in &records[1..] {
            while d0 > 0.0 && r.dissipation < threshold && level <= 1000 {
                witnesses.push(Witness { level, t: r.t, dissipation: r.dissipation });
                level += 1;
                threshold *= 0.5;
            }
        }
    }
    SubsequenceDecay { found: witnesses.len() >= SUBSEQUENCE_LEVELS, levels: witnesses.len(), witnesses }
}

/// f'(t₁) from three samples with possibly unequal spacing.
pub fn three_point_derivative(t: [f64; 3], f: [f64; 3]) -> f64 {
    let h0 = t[1] - t[0];
    let h1 = t[2] - t[1];
    -h1 / (h0 * (h0 + h1)) * f[0] + (h1 - h0) / (h0 * h1) * f[1] + h0 / (h1 * (h0 + h1)) * f[2]
}

/// (t, dD/dt) at every interior record.
pub fn dissipation_rate(records: &[DiagnosticsRecord]) -> Vec<(f64, f64)> {
    records
        .windows(3)
        .map(|w| {
            let t = [w[0].t, w[1].t, w[2].t];
            let f = [w[0].dissipation, w[1].dissipation, w[2].dissipation];
            (t[1], three_point_derivative(t, f))
        })
        .collect()
}

/// −dD/dt against the reconstructed d²F/dt² at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionCheck {
    pub t: f64,
    pub n_cells: usize,
    pub minus_dd_dt: f64,
    pub d2f_reconstructed: f64,
    pub relative_error: f64,
    pub terms: EntropyTerms,
}

/// Integrate to exactly t_mid − δ, t_mid and t_mid + δ, difference D
/// across the three states and compare with the decomposition at t_mid.
pub fn decomposition_check(problem: &Problem, t_mid: f64, delta: f64) -> Result<DecompositionCheck> {
    if !(delta > 0.0 && t_mid - delta > 0.0) {
        return Err(Error::Analysis(format!("need 0 < delta < t_mid, got delta = {delta}, t_mid = {t_mid}")));
    }
    let mut integ = Integrator::new(problem);
    let mut samples = [0.0; 3];
    let mut terms = None;
    for (k, target) in [t_mid - delta, t_mid, t_mid + delta].into_iter().enumerate() {
        while integ.state().t() < target {
            integ.step_adaptive(target)?;
        }
        samples[k] = integ.dissipation();
        if k == 1 {
            terms = Some(entropy_terms(integ.state(), problem));
        }
    }
    let terms = terms.expect("middle sample taken");
    let minus_dd_dt = -(samples[2] - samples[0]) / (2.0 * delta);
    let d2f = terms.d2f_reconstructed;
    Ok(DecompositionCheck {
        t: t_mid,
        n_cells: problem.grid().n_cells(),
        minus_dd_dt,
        d2f_reconstructed: d2f,
        relative_error: (minus_dd_dt - d2f).abs() / d2f.abs(),
        terms,
    })
}

/// max_n |(F_{n+1} − F_n)/dt + D_n| over fixed steps of size `dt` up to `horizon`.
pub fn identity_residual(problem: &Problem, dt: f64, horizon: f64) -> Result<f64> {
    if !(dt > 0.0 && horizon >= dt) {
        return Err(Error::Analysis(format!("need 0 < dt <= horizon, got dt = {dt}, horizon = {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    let mut integ = Integrator::new(problem);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let d = integ.dissipation();
        let report = integ.try_step(dt)?;
        worst = worst.max(((report.energy_after - report.energy_before) / dt + d).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOptions {
    /// Integration horizon for the fixed-dt identity residual.
    pub horizon: f64,
    /// Time at which the decomposition is compared with −dD/dt.
    pub t_mid: f64,
    /// Half-width of the centered difference for dD/dt.
    pub delta: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { horizon: 0.01, t_mid: 0.01, delta: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityRow {
    pub dt: f64,
    pub cells: usize,
    pub residual_1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub cells: usize,
    pub residual_2: f64,
}

/// Refinement table. `dt_rows` run on the problem's own grid; `n_rows`
/// rerun the problem with `n` cells along the first axis (second axis scaled
/// in proportion) under the adaptive step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityStudy {
    pub options: StudyOptions,
    pub dt_rows: Vec<IdentityRow>,
    /// log₂(r_i / r_{i+1}) normalised by log₂(dt_i / dt_{i+1}).
    pub dt_orders: Vec<f64>,
    pub n_rows: Vec<DecompositionRow>,
    pub n_orders: Vec<f64>,
}

fn orders(x: &[f64], r: &[f64]) -> Vec<f64> {
    x.windows(2).zip(r.windows(2)).map(|(x, r)| (r[0] / r[1]).log2() / (x[0] / x[1]).log2()).collect()
}

pub fn identity_convergence_study(
    problem: &Problem,
    dt_list: &[f64],
    n_list: &[usize],
    options: StudyOptions,
) -> Result<IdentityStudy> {
    let mut dt_rows = Vec::new();
    for &dt in dt_list {
        dt_rows.push(IdentityRow {
            dt,
            cells: problem.grid().n_cells(),
            residual_1: identity_residual(problem, dt, options.horizon)?,
        });
    }
    let mut n_rows = Vec::new();
    let shape = problem.grid().shape();
    for &n in n_list {
        let cells = if problem.grid().dim() == 1 { vec![n] } else { vec![n, (n * shape[1]).div_ceil(shape[0])] };
        let refined = problem.refined(&cells)?;
        let check = decomposition_check(&refined, options.t_mid, options.delta)?;
        n_rows.push(DecompositionRow { cells: n, residual_2: check.relative_error });
    }
    let dts: Vec<f64> = dt_rows.iter().map(|r| r.dt).collect();
    let r1: Vec<f64> = dt_rows.iter().map(|r| r.residual_1).collect();
    // orders in h = 1/n
    let hs: Vec<f64> = n_rows.iter().map(|r| 1.0 / r.cells as f64).collect();
    let r2: Vec<f64> = n_rows.iter().map(|r| r.residual_2).collect();
    Ok(IdentityStudy { options, dt_orders: orders(&dts, &r1), n_orders: orders(&hs, &r2), dt_rows, n_rows })
}

/// Residuals of −dD/dt ≥ λD − C17·D³ − C18·D^{3/2} along a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayBoundReport {
    pub lambda: f64,
    pub c17: f64,
    pub c18: f64,
    /// (t, λD − C17D³ − C18D^{3/2} + dD/dt); the inequality holds where ≤ 0.
    pub residuals: Vec<(f64, f64)>,
    pub violations: usize,
    /// Smallest s ≥ 0 such that the inequality with (s·C17, s·C18) holds at
    /// every interior record up to `rel_tol·λD`; None if no scaling helps.
    pub min_scaling: Option<f64>,
    pub rel_tol: f64,
}

pub fn decay_bound_check(
    records: &[DiagnosticsRecord],
    lambda: f64,
    c17: f64,
    c18: f64,
    rel_tol: f64,
) -> Result<DecayBoundReport> {
    if let Some(r) = records.iter().find(|r| !(r.dissipation > 0.0)) {
        return Err(Error::Analysis(format!("non-positive D = {} at t = {}", r.dissipation, r.t)));
    }
    if records.len() < 3 {
        return Err(Error::Analysis("need at least 3 records".into()));
    }
    let mut residuals = Vec::new();
    let mut violations = 0;
    let mut min_scaling = Some(0.0f64);
    for (w, (t, rate)) in records.windows(3).zip(dissipation_rate(records)) {
        let d = w[1].dissipation;
        let linear = lambda * d + rate;
        let nonlinear = c17 * d * d * d + c18 * d.powf(1.5);
        let residual = linear - nonlinear;
        if residual > 0.0 {
            violations += 1;
        }
        residuals.push((t, residual));
        let excess = linear - rel_tol * lambda * d;
        if excess > 0.0 {
            min_scaling = match min_scaling {
                Some(s) if nonlinear > 0.0 => Some(s.max(excess / nonlinear)),
                _ => None,
            };
        }
    }
    Ok(DecayBoundReport { lambda, c17, c18, residuals, violations, min_scaling, rel_tol })
}
