//! Explicit finite-volume time stepping for ρ_t = Div(ρ∇μ) with
//! μ = αdρ^{α−1} + φ and zero flux through the boundary.
//!
//! The update is written in flux form, so discrete mass is conserved up to
//! roundoff. Steps that would push any cell to or below the positivity
//! floor are rejected and retried with half the step; energy increase is a
//! hard error.

use crate::error::{Error, Result, SolverError};
use crate::functionals::{dissipation_of, free_energy_of, DiagnosticsRecord};
use crate::grid::{divergence_into, FaceField, Field};
use crate::problem::{FaceDensity, Problem};
use crate::util::pow;

/// Density field and simulation time. The density is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    rho: Field,
    t: f64,
}

impl State {
    pub fn new(rho: Field, t: f64) -> Result<Self> {
        if let Some((cell, &value)) = rho.values().iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveDensity { cell, value });
        }
        Ok(Self { rho, t })
    }

    pub fn initial(problem: &Problem) -> Self {
        Self { rho: problem.rho0().clone(), t: 0.0 }
    }

    pub fn rho(&self) -> &Field {
        &self.rho
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn into_rho(self) -> Field {
        self.rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub dt_used: f64,
    /// max |∇μ| over interior faces before the step.
    pub max_face_speed: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// A larger step was rejected for positivity before this one was accepted.
    pub positivity_clipped: bool,
}

/// μ_i = α d_i ρ_i^{α−1} + φ_i
pub fn chemical_potential(state: &State, problem: &Problem) -> Field {
    let mut out = vec![0.0; problem.grid().n_cells()];
    chemical_potential_into(state.rho().values(), problem, &mut out);
    Field::new(*problem.grid(), out).expect("sizes match")
}

pub(crate) fn chemical_potential_into(rho: &[f64], problem: &Problem, out: &mut [f64]) {
    let alpha = problem.alpha();
    let d = problem.d().values();
    let phi = problem.phi().values();
    for (((o, &r), &d), &p) in out.iter_mut().zip(rho).zip(d).zip(phi) {
        *o = alpha * d * pow(r, alpha - 1.0) + p;
    }
}

/// Face fluxes ρ_f·g_f with velocity g_f = −(μ_R − μ_L)/h_k, using the
/// face density rule from the problem's solver controls.
pub fn face_flux(state: &State, problem: &Problem) -> FaceField {
    face_flux_with(state, problem, problem.controls().face_density)
}

pub fn face_flux_with(state: &State, problem: &Problem, density: FaceDensity) -> FaceField {
    let grid = *problem.grid();
    let mut mu = vec![0.0; grid.n_cells()];
    chemical_potential_into(state.rho().values(), problem, &mut mu);
    let mut flux = FaceField::zeros(grid);
    fill_flux(state.rho().values(), &mu, density, &mut flux);
    flux
}

/// Writes interior fluxes and returns max |g| over interior faces.
fn fill_flux(rho: &[f64], mu: &[f64], density: FaceDensity, flux: &mut FaceField) -> f64 {
    let grid = *flux.grid();
    let inv_h = [1.0 / grid.spacing(0), if grid.dim() == 2 { 1.0 / grid.spacing(1) } else { 0.0 }];
    let mut max_speed: f64 = 0.0;
    grid.for_each_interior_face(|k, face, l, r| {
        let g = -(mu[r] - mu[l]) * inv_h[k];
        let rf = match density {
            FaceDensity::Mean => 0.5 * (rho[l] + rho[r]),
            FaceDensity::Upwind => {
                if g > 0.0 {
                    rho[l]
                } else {
                    rho[r]
                }
            }
        };
        flux.axis_mut(k)[face] = g * rf;
        max_speed = max_speed.max(g.abs());
    });
    max_speed
}

fn parabolic_dt(rho: &[f64], problem: &Problem) -> f64 {
    let alpha = problem.alpha();
    let grid = problem.grid();
    let stiff = rho
        .iter()
        .zip(problem.d().values())
        .map(|(&r, &d)| alpha * (alpha - 1.0) * d * pow(r, alpha - 1.0))
        .fold(0.0, f64::max);
    let h = grid.min_spacing();
    let c = problem.controls().cfl;
    if stiff > 0.0 {
        c * h * h / (2.0 * grid.dim() as f64 * stiff)
    } else {
        f64::INFINITY
    }
}

fn advective_dt(max_speed: f64, problem: &Problem) -> f64 {
    if max_speed > 0.0 {
        problem.controls().cfl * problem.grid().min_spacing() / max_speed
    } else {
        f64::INFINITY
    }
}

/// Stable explicit step: the minimum of the parabolic restriction, the
/// advective restriction and `dt_init`.
pub fn adaptive_dt(state: &State, problem: &Problem) -> f64 {
    let grid = problem.grid();
    let mut mu = vec![0.0; grid.n_cells()];
    chemical_potential_into(state.rho().values(), problem, &mut mu);
    let mut max_speed: f64 = 0.0;
    let inv_h = [1.0 / grid.spacing(0), if grid.dim() == 2 { 1.0 / grid.spacing(1) } else { 0.0 }];
    grid.for_each_interior_face(|k, _, l, r| max_speed = max_speed.max(((mu[r] - mu[l]) * inv_h[k]).abs()));
    combine_dt(state.rho().values(), max_speed, problem)
}

fn combine_dt(rho: &[f64], max_speed: f64, problem: &Problem) -> f64 {
    parabolic_dt(rho, problem).min(advective_dt(max_speed, problem)).min(problem.controls().dt_init)
}

/// One explicit Euler step `ρ ← ρ + dt·Div(ρ∇μ)`.
pub fn step(state: &State, problem: &Problem, dt: f64) -> Result<(State, StepReport), SolverError> {
    let mut integ = Integrator::from_state(problem, state.clone());
    let report = integ.try_step(dt)?;
    Ok((integ.state, report))
}

/// Stateful stepper with reusable buffers.
pub struct Integrator<'p> {
    problem: &'p Problem,
    state: State,
    energy: f64,
    mu: Vec<f64>,
    flux: FaceField,
    div: Vec<f64>,
    next: Vec<f64>,
    accepted: usize,
    rejected: usize,
    rho_min: f64,
    rho_max: f64,
}

impl<'p> Integrator<'p> {
    pub fn new(problem: &'p Problem) -> Self {
        Self::from_state(problem, State::initial(problem))
    }

    pub fn from_state(problem: &'p Problem, state: State) -> Self {
        let grid = *problem.grid();
        let n = grid.n_cells();
        let energy = free_energy_of(state.rho().values(), problem);
        let (rho_min, rho_max) = (state.rho().min(), state.rho().max());
        Self {
            problem,
            state,
            energy,
            mu: vec![0.0; n],
            flux: FaceField::zeros(grid),
            div: vec![0.0; n],
            next: vec![0.0; n],
            accepted: 0,
            rejected: 0,
            rho_min,
            rho_max,
        }
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn into_state(self) -> State {
        self.state
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn dissipation(&mut self) -> f64 {
        chemical_potential_into(self.state.rho.values(), self.problem, &mut self.mu);
        dissipation_of(self.state.rho.values(), &self.mu, self.problem.grid())
    }

    pub fn record(&mut self) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t: self.state.t,
            mass: self.state.rho.integral(),
            energy: self.energy,
            dissipation: self.dissipation(),
            rho_min: self.state.rho.min(),
            rho_max: self.state.rho.max(),
        }
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// Smallest and largest cell density seen at any accepted step.
    pub fn observed_bounds(&self) -> (f64, f64) {
        (self.rho_min, self.rho_max)
    }

    /// Attempt a step of exactly `dt`; the state is untouched on rejection.
    pub fn try_step(&mut self, dt: f64) -> Result<StepReport, SolverError> {
        let problem = self.problem;
        let rho = self.state.rho.values();
        chemical_potential_into(rho, problem, &mut self.mu);
        let max_speed = fill_flux(rho, &self.mu, problem.controls().face_density, &mut self.flux);
        divergence_into(&self.flux, &mut self.div);
        self.apply(dt, max_speed, false)
    }

    fn apply(&mut self, dt: f64, max_speed: f64, clipped: bool) -> Result<StepReport, SolverError> {
        let floor = self.problem.controls().positivity_floor;
        let rho = self.state.rho.values();
        for (i, ((n, &r), &dv)) in self.next.iter_mut().zip(rho).zip(&self.div).enumerate() {
            let v = r - dt * dv;
            if !v.is_finite() {
                return Err(SolverError::NonFinite { t: self.state.t });
            }
            if v <= floor {
                return Err(SolverError::PositivityViolation { cell: i, value: v });
            }
            *n = v;
        }
        let before = self.energy;
        let after = free_energy_of(&self.next, self.problem);
        std::mem::swap(self.state.rho.values_vec_mut(), &mut self.next);
        self.state.t += dt;
        self.energy = after;
        self.accepted += 1;
        let rho = self.state.rho.values();
        self.rho_min = rho.iter().copied().fold(self.rho_min, f64::min);
        self.rho_max = rho.iter().copied().fold(self.rho_max, f64::max);
        Ok(StepReport {
            dt_used: dt,
            max_face_speed: max_speed,
            energy_before: before,
            energy_after: after,
            positivity_clipped: clipped,
        })
    }

    /// Adaptive step not exceeding `t_limit − t`, halving on positivity
    /// rejection, and enforcing energy monotonicity.
    pub fn step_adaptive(&mut self, t_limit: f64) -> Result<StepReport, SolverError> {
        let problem = self.problem;
        let rho = self.state.rho.values();
        chemical_potential_into(rho, problem, &mut self.mu);
        let max_speed = fill_flux(rho, &self.mu, problem.controls().face_density, &mut self.flux);
        divergence_into(&self.flux, &mut self.div);
        let dt_init = problem.controls().dt_init;
        let mut dt = combine_dt(rho, max_speed, problem).min(t_limit - self.state.t);
        let limit = 1e-12 * dt_init;
        let mut clipped = false;
        loop {
            if dt < limit {
                return Err(SolverError::StepUnderflow { t: self.state.t, dt, limit });
            }
            match self.apply(dt, max_speed, clipped) {
                Ok(report) => {
                    let slack = 1e-12 * (1.0 + report.energy_before.abs());
                    if report.energy_after > report.energy_before + slack {
                        return Err(SolverError::EnergyIncrease {
                            t: self.state.t,
                            before: report.energy_before,
                            after: report.energy_after,
                        });
                    }
                    return Ok(report);
                }
                Err(SolverError::PositivityViolation { .. }) => {
                    self.rejected += 1;
                    clipped = true;
                    dt *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Result of integrating a problem to `t_end`.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: State,
    pub records: Vec<DiagnosticsRecord>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Density bounds over every accepted step.
    pub rho_min: f64,
    pub rho_max: f64,
}

pub fn run(problem: &Problem) -> Result<RunOutput, SolverError> {
    run_observed(problem, |_, _| {})
}

/// [`run`] with a callback at every recorded state.
pub fn run_observed(
    problem: &Problem,
    mut observer: impl FnMut(&State, &DiagnosticsRecord),
) -> Result<RunOutput, SolverError> {
    let controls = problem.controls();
    let t_end = controls.t_end;
    let mut integ = Integrator::new(problem);
    let mut records = Vec::new();
    let first = integ.record();
    observer(integ.state(), &first);
    records.push(first);
    let mut since_record = 0;
    let done = |t: f64| t >= t_end * (1.0 - 1e-14);
    while !done(integ.state().t()) {
        integ.step_adaptive(t_end)?;
        since_record += 1;
        if since_record == controls.record_every || done(integ.state().t()) {
            since_record = 0;
            let rec = integ.record();
            observer(integ.state(), &rec);
            records.push(rec);
        }
    }
    let (rho_min, rho_max) = integ.observed_bounds();
    Ok(RunOutput {
        accepted_steps: integ.accepted_steps(),
        rejected_steps: integ.rejected_steps(),
        final_state: integ.into_state(),
        records,
        rho_min,
        rho_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{l1_distance, solve_equilibrium};
    use crate::grid::{divergence, Grid};
    use crate::problem::{CoefficientSpec, ProblemSpec, SolverControls};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(grid: Grid, alpha: f64, d: CoefficientSpec, phi: CoefficientSpec, rho0: CoefficientSpec) -> ProblemSpec {
        ProblemSpec { alpha, grid, d, phi, rho0, lambda: 0.0, d_min: None, solver: SolverControls::new(1.0) }
    }

    fn problem(grid: Grid, alpha: f64, d: f64, phi: f64) -> Problem {
        Problem::new(spec(
            grid,
            alpha,
            CoefficientSpec::constant(d),
            CoefficientSpec::constant(phi),
            CoefficientSpec::constant(1.0),
        ))
        .unwrap()
    }

    fn random_state(grid: Grid, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..grid.n_cells()).map(|_| rng.gen_range(0.2..2.0)).collect();
        State::new(Field::new(grid, v).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn potential_examples() {
        let g = Grid::interval(0.0, 1.0, 8).unwrap();
        let p = problem(g, 2.0, 1.0, 0.0);
        assert!(chemical_potential(&State::initial(&p), &p).values().iter().all(|&m| m == 2.0));
        let p = problem(g, 3.0, 2.0, 3.0);
        assert!(chemical_potential(&State::initial(&p), &p).values().iter().all(|&m| m == 9.0));
    }

    #[test]
    fn potential_matches_pointwise_oracle() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), [7, 9]).unwrap();
        let p = Problem::new(spec(
            g,
            2.7,
            CoefficientSpec::gaussian_bump(1.0, 0.5, &[0.5, 1.0], 2.0),
            CoefficientSpec::quadratic(1.5, &[0.2, 0.3], -1.0),
            CoefficientSpec::constant(1.0),
        ))
        .unwrap();
        let s = random_state(g, 5);
        let mu = chemical_potential(&s, &p);
        for i in 0..g.n_cells() {
            let oracle = 2.7 * p.d().values()[i] * s.rho().values()[i].powf(1.7) + p.phi().values()[i];
            assert!((mu.values()[i] - oracle).abs() <= 1e-14 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn negative_density_is_rejected() {
        let g = Grid::interval(0.0, 1.0, 4).unwrap();
        assert!(State::new(Field::new(g, vec![1.0, 0.0, 1.0, 1.0]).unwrap(), 0.0).is_err());
        assert!(State::new(Field::new(g, vec![1.0, -1.0, 1.0, 1.0]).unwrap(), 0.0).is_err());
    }

    /// μ_L = 0, μ_R = 1, h = 1, ρ_L = 2, ρ_R = 3: g = −1, upwind flux −3.
    #[test]
    fn two_cell_upwind_flux() {
        // α = 2, d = 1/4, φ chosen so μ = (0, 1) on the middle pair
        let g = Grid::interval(0.0, 4.0, 4).unwrap();
        let rho = vec![2.0, 2.0, 3.0, 3.0];
        let phi: Vec<f64> = rho.iter().zip([0.0, 0.0, 1.0, 1.0]).map(|(r, m)| m - 0.5 * r).collect();
        let p = Problem::new(spec(
            g,
            2.0,
            CoefficientSpec::constant(0.25),
            CoefficientSpec::Tabulated { values: phi },
            CoefficientSpec::constant(1.0),
        ))
        .unwrap();
        let s = State::new(Field::new(g, rho).unwrap(), 0.0).unwrap();
        let up = face_flux_with(&s, &p, FaceDensity::Upwind);
        assert!((up.axis(0)[2] + 3.0).abs() < 1e-15);
        assert_eq!(up.axis(0)[0], 0.0);
        assert_eq!(up.axis(0)[4], 0.0);
        let mean = face_flux_with(&s, &p, FaceDensity::Mean);
        assert!((mean.axis(0)[2] + 2.5).abs() < 1e-15);
    }

    #[test]
    fn flux_matches_scalar_loop() {
        let g = Grid::rectangle((0.0, 1.0), (0.0, 1.0), [6, 5]).unwrap();
        let p = Problem::new(spec(
            g,
            2.0,
            CoefficientSpec::gaussian_bump(1.0, 0.3, &[0.4, 0.6], 1.0),
            CoefficientSpec::quadratic(2.0, &[0.5, 0.5], 0.0),
            CoefficientSpec::constant(1.0),
        ))
        .unwrap();
        let s = random_state(g, 9);
        let mu = chemical_potential(&s, &p);
        let (m, r) = (mu.values(), s.rho().values());
        for density in [FaceDensity::Upwind, FaceDensity::Mean] {
            let flux = face_flux_with(&s, &p, density);
            let (h, k) = (g.spacing(0), g.spacing(1));
            for j in 0..5 {
                for i in 0..7 {
                    let v = flux.axis(0)[j * 7 + i];
                    if i == 0 || i == 6 {
                        assert_eq!(v, 0.0);
                        continue;
                    }
                    let (a, b) = (j * 6 + i - 1, j * 6 + i);
                    let gv = -(m[b] - m[a]) / h;
                    let rf = match density {
                        FaceDensity::Upwind => {
                            if gv > 0.0 {
                                r[a]
                            } else {
                                r[b]
                            }
                        }
                        FaceDensity::Mean => 0.5 * (r[a] + r[b]),
                    };
                    assert!((v - gv * rf).abs() <= 1e-14 * (gv * rf).abs().max(1.0));
                }
            }
            for j in 0..6 {
                for i in 0..6 {
                    let v = flux.axis(1)[j * 6 + i];
                    if j == 0 || j == 5 {
                        assert_eq!(v, 0.0);
                        continue;
                    }
                    let (a, b) = ((j - 1) * 6 + i, j * 6 + i);
                    let gv = -(m[b] - m[a]) / k;
                    let rf = match density {
                        FaceDensity::Upwind => {
                            if gv > 0.0 {
                                r[a]
                            } else {
                                r[b]
                            }
                        }
                        FaceDensity::Mean => 0.5 * (r[a] + r[b]),
                    };
                    assert!((v - gv * rf).abs() <= 1e-14 * (gv * rf).abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn step_follows_divergence_form() {
        let g = Grid::interval(0.0, 1.0, 12).unwrap();
        let p = Problem::new(spec(
            g,
            2.0,
            CoefficientSpec::polynomial(&[1.0, 0.5]),
            CoefficientSpec::quadratic(2.0, &[0.3], 0.0),
            CoefficientSpec::constant(1.0),
        ))
        .unwrap();
        let s = random_state(g, 3);
        let dt = 1e-5;
        let (next, report) = step(&s, &p, dt).unwrap();
        let div = divergence(&face_flux(&s, &p));
        for i in 0..12 {
            let oracle = s.rho().values()[i] - dt * div.values()[i];
            assert!((next.rho().values()[i] - oracle).abs() < 1e-15);
        }
        assert_eq!(next.t(), dt);
        assert_eq!(report.dt_used, dt);
        assert!(report.energy_after <= report.energy_before);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let g = Grid::interval(0.0, 1.0, 32).unwrap();
        let p = problem(g, 2.0, 1.0, 0.0);
        let s = State::initial(&p);
        let (next, _) = step(&s, &p, 1e-4).unwrap();
        assert_eq!(next.rho().values(), s.rho().values());
    }

    #[test]
    fn steps_conserve_mass() {
        let g = Grid::rectangle((-1.0, 1.0), (0.0, 1.0), [20, 10]).unwrap();
        let p = Problem::new(spec(
            g,
            2.5,
            CoefficientSpec::gaussian_bump(1.0, 0.5, &[0.0, 0.5], 2.0),
            CoefficientSpec::quadratic(2.0, &[0.1, 0.4], 0.0),
            CoefficientSpec::gaussian_bump(1.0, 0.3, &[0.2, 0.5], 0.3),
        ))
        .unwrap();
        let mut integ = Integrator::new(&p);
        let mut m = integ.state().rho().integral();
        for _ in 0..200 {
            integ.step_adaptive(1.0).unwrap();
            let next = integ.state().rho().integral();
            assert!((next - m).abs() <= 1e-15, "{}", (next - m).abs());
            m = next;
        }
    }

    #[test]
    fn positivity_rejection_leaves_state_untouched() {
        let g = Grid::interval(0.0, 1.0, 16).unwrap();
        let p = Problem::new(spec(
            g,
            2.0,
            CoefficientSpec::constant(1.0),
            CoefficientSpec::constant(0.0),
            CoefficientSpec::gaussian_bump(1.0, 0.05, &[0.5], 1e-3),
        ))
        .unwrap();
        let mut integ = Integrator::new(&p);
        let before = integ.state().clone();
        match integ.try_step(1.0) {
            Err(SolverError::PositivityViolation { .. }) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
        assert_eq!(integ.state(), &before);
        // the adaptive stepper recovers by halving
        let report = integ.step_adaptive(1.0).unwrap();
        assert!(report.dt_used > 0.0);
    }

    #[test]
    fn adaptive_dt_formula() {
        let g = Grid::interval(0.0, 1.0, 10).unwrap();
        let p = problem(g, 2.0, 1.0, 0.0);
        let s = State::initial(&p);
        // the default dt_init = 1e-3 caps the formula value
        assert_eq!(adaptive_dt(&s, &p), 1e-3);
        let mut ctl = p.controls().clone();
        ctl.dt_init = 1.0;
        let p1 = p.with_controls(ctl.clone()).unwrap();
        assert!((adaptive_dt(&s, &p1) - 1.25e-3).abs() < 1e-18);
        let p2 = problem(g, 2.0, 2.0, 0.0).with_controls(ctl).unwrap();
        let (a, b) = (adaptive_dt(&s, &p1), adaptive_dt(&s, &p2));
        assert!((a / b - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_dt_respects_both_restrictions() {
        let g = Grid::rectangle((0.0, 2.0), (0.0, 1.0), [16, 12]).unwrap();
        let p = Problem::new(spec(
            g,
            3.0,
            CoefficientSpec::gaussian_bump(2.0, 0.4, &[1.0, 0.5], 1.0),
            CoefficientSpec::quadratic(4.0, &[0.5, 0.5], 0.0),
            CoefficientSpec::constant(1.0),
        ))
        .unwrap();
        for seed in 0..5 {
            let s = random_state(g, seed);
            let dt = adaptive_dt(&s, &p);
            let mu = chemical_potential(&s, &p);
            let (m, r) = (mu.values(), s.rho().values());
            let mut stiff: f64 = 0.0;
            for (&d, &rho) in p.d().values().iter().zip(r) {
                stiff = stiff.max(6.0 * d * rho * rho);
            }
            let h = g.min_spacing();
            let parab = 0.5 * h * h / (4.0 * stiff);
            let mut speed: f64 = 0.0;
            for j in 0..12 {
                for i in 0..16 {
                    let c = j * 16 + i;
                    if i + 1 < 16 {
                        speed = speed.max(((m[c + 1] - m[c]) / g.spacing(0)).abs());
                    }
                    if j + 1 < 12 {
                        speed = speed.max(((m[c + 16] - m[c]) / g.spacing(1)).abs());
                    }
                }
            }
            let adv = 0.5 * h / speed;
            assert!(dt <= parab * (1.0 + 1e-14) && dt <= adv * (1.0 + 1e-14));
            assert!(dt >= parab.min(adv).min(1e-3) * (1.0 - 1e-14));
        }
    }

    #[test]
    fn run_from_equilibrium_is_stationary() {
        let g = Grid::interval(0.0, 1.0, 40).unwrap();
        let mut s = spec(
            g,
            2.0,
            CoefficientSpec::constant(1.0),
            CoefficientSpec::constant(0.0),
            CoefficientSpec::constant(1.0),
        );
        s.solver = SolverControls { record_every: 10, ..SolverControls::new(0.1) };
        let out = run(&Problem::new(s).unwrap()).unwrap();
        for r in &out.records {
            assert!(r.dissipation <= 1e-12);
            assert_eq!(r.energy, out.records[0].energy);
        }
    }

    fn porous_medium(n: usize, t_end: f64) -> Problem {
        let g = Grid::interval(0.0, 1.0, n).unwrap();
        let mut s = spec(
            g,
            2.0,
            CoefficientSpec::constant(1.0),
            CoefficientSpec::constant(0.0),
            CoefficientSpec::gaussian_bump(1.0, 0.1, &[0.3], 0.5),
        );
        s.solver = SolverControls { record_every: 1000, ..SolverControls::new(t_end) };
        Problem::new(s).unwrap()
    }

    /// Coarse solutions averaged onto the reference grid by cell aggregation.
    fn coarse_error(n: usize, reference: &[f64], n_ref: usize) -> f64 {
        let out = run(&porous_medium(n, 0.05)).unwrap();
        let ratio = n_ref / n;
        let h_ref = 1.0 / n_ref as f64;
        let mut err = 0.0;
        for (i, &v) in out.final_state.rho().values().iter().enumerate() {
            for k in 0..ratio {
                err += (v - reference[i * ratio + k]).abs() * h_ref;
            }
        }
        err
    }

    #[test]
    fn self_convergence_in_space() {
        let reference = run(&porous_medium(800, 0.05)).unwrap().final_state.into_rho().into_values();
        let e100 = coarse_error(100, &reference, 800);
        let e200 = coarse_error(200, &reference, 800);
        let ratio = e100 / e200;
        assert!(e100 < 0.1, "{e100}");
        assert!((1.5..=3.0).contains(&ratio), "e100 = {e100}, e200 = {e200}, ratio = {ratio}");
    }

    #[test]
    fn porous_medium_reaches_uniform_state() {
        let p = porous_medium(100, 5.0);
        let out = run(&p).unwrap();
        let eq = solve_equilibrium(&p, 1e-14).unwrap();
        let dist = l1_distance(out.final_state.rho(), &eq.rho_inf).unwrap();
        assert!(dist < 1e-3, "{dist}");
        assert!(out.final_state.rho().values().iter().all(|&v| (v - 1.0).abs() < 1e-3));
        for w in out.records.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12 * (1.0 + w[0].energy.abs()));
            assert!((w[1].mass - 1.0).abs() < 1e-10);
        }
    }
}
