//! Discrete integral quantities: mass, free energy F, dissipation D and the
//! seven-term decomposition of d²F/dt².

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::problem::Problem;
use crate::solver::{chemical_potential_into, State};
use crate::util::pow;

/// Scalar observables of one recorded state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    #[serde(rename = "F")]
    pub energy: f64,
    #[serde(rename = "D")]
    pub dissipation: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

impl DiagnosticsRecord {
    pub fn capture(state: &State, problem: &Problem) -> Self {
        let rho = state.rho();
        Self {
            t: state.t(),
            mass: mass(state),
            energy: free_energy(state, problem),
            dissipation: dissipation(state, problem),
            rho_min: rho.min(),
            rho_max: rho.max(),
        }
    }
}

/// Σ ρ_i·vol_i
pub fn mass(state: &State) -> f64 {
    state.rho().integral()
}

/// Σ (d_i ρ_i^α + ρ_i φ_i)·vol_i
pub fn free_energy(state: &State, problem: &Problem) -> f64 {
    free_energy_of(state.rho().values(), problem)
}

pub(crate) fn free_energy_of(rho: &[f64], problem: &Problem) -> f64 {
    let alpha = problem.alpha();
    let d = problem.d().values();
    let phi = problem.phi().values();
    let sum: f64 = rho.iter().zip(d).zip(phi).map(|((&r, &d), &p)| d * pow(r, alpha) + r * p).sum();
    sum * problem.grid().cell_volume()
}

/// Σ_faces |∇μ|²·ρ̄·vol over interior faces, ρ̄ the arithmetic face mean.
pub fn dissipation(state: &State, problem: &Problem) -> f64 {
    let mut mu = vec![0.0; problem.grid().n_cells()];
    chemical_potential_into(state.rho().values(), problem, &mut mu);
    dissipation_of(state.rho().values(), &mu, problem.grid())
}

pub(crate) fn dissipation_of(rho: &[f64], mu: &[f64], grid: &Grid) -> f64 {
    let inv_h = [1.0 / grid.spacing(0), if grid.dim() == 2 { 1.0 / grid.spacing(1) } else { 0.0 }];
    let mut sum = 0.0;
    grid.for_each_interior_face(|k, _, l, r| {
        let g = (mu[r] - mu[l]) * inv_h[k];
        sum += g * g * 0.5 * (rho[l] + rho[r]);
    });
    sum * grid.cell_volume()
}

/// The integrals I₁…I₇ of the second time derivative of F, evaluated with
/// centered differences at interior cells (boundary cells excluded).
///
/// `I₄` is the boundary term carrying the second fundamental form of ∂Ω;
/// on box domains with discrete zero flux it has no counterpart and is
/// reported as exactly 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTerms {
    /// ∫ (∇μ·∇²φ ∇μ) ρ
    pub i1: f64,
    /// ∫ d |∇²μ|² ρ^α
    pub i2: f64,
    /// ∫ d (Δμ)² ρ^α
    pub i3: f64,
    pub i4: f64,
    /// ∫ (∇d·∇²μ ∇μ) ρ^α
    pub i5: f64,
    /// ∫ (∇d·∇μ) Δμ ρ^α
    pub i6: f64,
    /// ∫ (∇d·∇μ)(∇ρ·∇μ) ρ^{α−1}
    pub i7: f64,
    /// Σ |∇μ|² ρ over the same interior cells (centered gradients).
    pub dissipation_interior: f64,
    pub alpha: f64,
    /// 2I₁ + 2(α−1)I₂ + 2(α−1)²I₃ − 2I₅ − 2(2α−1)I₆ − 2αI₇
    pub d2f_reconstructed: f64,
}

impl EntropyTerms {
    /// The terms that survive when ∇d ≡ 0.
    pub fn constant_d_part(&self) -> f64 {
        let a = self.alpha;
        2.0 * self.i1 + 2.0 * (a - 1.0) * self.i2 + 2.0 * (a - 1.0) * (a - 1.0) * self.i3
    }

    /// The contribution of the ∇d terms.
    pub fn inhomogeneous_part(&self) -> f64 {
        let a = self.alpha;
        -2.0 * self.i5 - 2.0 * (2.0 * a - 1.0) * self.i6 - 2.0 * a * self.i7
    }
}

type Vec2 = [f64; 2];
type Mat2 = [[f64; 2]; 2];

fn centered(grid: &Grid, f: &[f64], idx: usize) -> (Vec2, Mat2) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for k in 0..grid.dim() {
        let hk = grid.spacing(k);
        let m = grid.neighbour(idx, k, -1).expect("interior cell");
        let p = grid.neighbour(idx, k, 1).expect("interior cell");
        g[k] = (f[p] - f[m]) / (2.0 * hk);
        h[k][k] = (f[p] - 2.0 * f[idx] + f[m]) / (hk * hk);
    }
    if grid.dim() == 2 {
        let at = |di: isize, dj: isize| f[grid.neighbour(grid.neighbour(idx, 0, di).unwrap(), 1, dj).unwrap()];
        let fxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * grid.spacing(0) * grid.spacing(1));
        h[0][1] = fxy;
        h[1][0] = fxy;
    }
    (g, h)
}

#[inline]
fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn entropy_terms(state: &State, problem: &Problem) -> EntropyTerms {
    let grid = problem.grid();
    let alpha = problem.alpha();
    let rho = state.rho().values();
    let d = problem.d().values();
    let phi = problem.phi().values();
    let mut mu = vec![0.0; grid.n_cells()];
    chemical_potential_into(rho, problem, &mut mu);

    let (mut i1, mut i2, mut i3, mut i5, mut i6, mut i7, mut dint) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for idx in (0..grid.n_cells()).filter(|&i| grid.is_interior_cell(i)) {
        let (gmu, hmu) = centered(grid, &mu, idx);
        let (_, hphi) = centered(grid, phi, idx);
        let (gd, _) = centered(grid, d, idx);
        let (grho, _) = centered(grid, rho, idx);
        let r = rho[idx];
        let r_a = pow(r, alpha);
        let r_am1 = pow(r, alpha - 1.0);
        let lap = hmu[0][0] + hmu[1][1];
        let hess_sq = hmu[0][0] * hmu[0][0] + 2.0 * hmu[0][1] * hmu[1][0] + hmu[1][1] * hmu[1][1];
        let d_gmu = dot(gd, gmu);

        i1 += dot(gmu, mat_vec(&hphi, gmu)) * r;
        i2 += d[idx] * hess_sq * r_a;
        i3 += d[idx] * lap * lap * r_a;
        i5 += dot(gd, mat_vec(&hmu, gmu)) * r_a;
        i6 += d_gmu * lap * r_a;
        i7 += d_gmu * dot(grho, gmu) * r_am1;
        dint += dot(gmu, gmu) * r;
    }
    let vol = grid.cell_volume();
    let (i1, i2, i3, i5, i6, i7) = (i1 * vol, i2 * vol, i3 * vol, i5 * vol, i6 * vol, i7 * vol);
    let a = alpha;
    let d2f = 2.0 * i1 + 2.0 * (a - 1.0) * i2 + 2.0 * (a - 1.0) * (a - 1.0) * i3
        - 2.0 * i5
        - 2.0 * (2.0 * a - 1.0) * i6
        - 2.0 * a * i7;
    EntropyTerms { i1, i2, i3, i4: 0.0, i5, i6, i7, dissipation_interior: dint * vol, alpha, d2f_reconstructed: d2f }
}
