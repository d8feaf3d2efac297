//! Stationary states: α d ρ∞^{α−1} + φ = C on the support of ρ∞, with the
//! constant C fixed by unit mass.
//!
//! Where C − φ < 0 the positive part is taken, so compactly supported
//! equilibria are returned too; `positivity` tells the two regimes apart.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::problem::Problem;
use crate::util::pow;

const MAX_DOUBLINGS: usize = 60;
const MAX_BISECTIONS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumResult {
    #[serde(rename = "C")]
    pub constant: f64,
    #[serde(serialize_with = "ser_field")]
    pub rho_inf: Field,
    pub mass_residual: f64,
    pub dissipation_residual: f64,
    pub positivity: bool,
    pub iterations: usize,
}

fn ser_field<S: serde::Serializer>(f: &Field, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(f.values())
}

#[inline]
fn cell_density(c: f64, phi: f64, d: f64, alpha: f64) -> f64 {
    let excess = c - phi;
    if excess <= 0.0 {
        0.0
    } else {
        pow(excess / (alpha * d), 1.0 / (alpha - 1.0))
    }
}

/// m(C) = Σ ((C − φ_i)_+ / (α d_i))^{1/(α−1)}·vol
pub fn equilibrium_mass(c: f64, problem: &Problem) -> f64 {
    let alpha = problem.alpha();
    let sum: f64 =
        problem.phi().values().iter().zip(problem.d().values()).map(|(&p, &d)| cell_density(c, p, d, alpha)).sum();
    sum * problem.grid().cell_volume()
}

/// Density for a given constant C.
pub fn equilibrium_density(c: f64, problem: &Problem) -> Field {
    let alpha = problem.alpha();
    let values =
        problem.phi().values().iter().zip(problem.d().values()).map(|(&p, &d)| cell_density(c, p, d, alpha)).collect();
    Field::new(*problem.grid(), values).expect("sizes match")
}

/// Bracket C from min φ by doubling, then bisect until |m(C) − 1| ≤ tol.
pub fn solve_equilibrium(problem: &Problem, tol: f64) -> Result<EquilibriumResult> {
    if !(tol > 0.0) {
        return Err(Error::Equilibrium(format!("tolerance must be positive, got {tol}")));
    }
    let phi = problem.phi();
    let lo0 = phi.min();
    let mut width = 1.0;
    let mut doublings = 0;
    while equilibrium_mass(lo0 + width, problem) < 1.0 {
        width *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Equilibrium("bracket expansion exceeded 60 doublings".into()));
        }
    }
    let (mut lo, mut hi) = (lo0, lo0 + width);
    let mut c = hi;
    let mut m = equilibrium_mass(c, problem);
    let mut iterations = 0;
    while (m - 1.0).abs() > tol && iterations < MAX_BISECTIONS {
        c = 0.5 * (lo + hi);
        m = equilibrium_mass(c, problem);
        if m < 1.0 {
            lo = c;
        } else {
            hi = c;
        }
        iterations += 1;
    }
    let rho_inf = equilibrium_density(c, problem);
    let dissipation_residual = support_dissipation(&rho_inf, problem);
    Ok(EquilibriumResult {
        constant: c,
        mass_residual: rho_inf.integral() - 1.0,
        dissipation_residual,
        positivity: c > phi.max(),
        rho_inf,
        iterations,
    })
}

/// Face-mean dissipation restricted to faces between two cells of the support.
fn support_dissipation(rho: &Field, problem: &Problem) -> f64 {
    let grid = problem.grid();
    let alpha = problem.alpha();
    let r = rho.values();
    let d = problem.d().values();
    let phi = problem.phi().values();
    let mu: Vec<f64> = (0..r.len()).map(|i| alpha * d[i] * pow(r[i], alpha - 1.0) + phi[i]).collect();
    let mut sum = 0.0;
    grid.for_each_interior_face(|k, _, l, rr| {
        if r[l] > 0.0 && r[rr] > 0.0 {
            let g = (mu[rr] - mu[l]) / grid.spacing(k);
            sum += g * g * 0.5 * (r[l] + r[rr]);
        }
    });
    sum * grid.cell_volume()
}

/// Σ |a − b|·vol
pub fn l1_distance(a: &Field, b: &Field) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch("l1_distance on different grids".into()));
    }
    let sum: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum * a.grid().cell_volume())
}
