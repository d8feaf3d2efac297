//! Problem description: exponent, coefficient fields, initial density and
//! solver controls, plus numerical checks of the standing assumptions
//! (positive diffusion coefficient, bounded gradients, convex potential,
//! positive unit-mass initial density).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// How a coefficient field is sampled at cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    /// `lambda·|x − center|²/2 + offset`
    Quadratic {
        lambda: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `base + amplitude·exp(−|x − center|²/(2·width²))`
    GaussianBump {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Vec<f64>,
        #[serde(default)]
        base: f64,
    },
    /// `Σ coeffs[k]·x_axis^k`
    #[serde(rename = "polynomial-1d")]
    Polynomial1d {
        coeffs: Vec<f64>,
        #[serde(default)]
        axis: usize,
    },
    Tabulated {
        values: Vec<f64>,
    },
}

impl CoefficientSpec {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn quadratic(lambda: f64, center: &[f64], offset: f64) -> Self {
        Self::Quadratic { lambda, center: center.to_vec(), offset }
    }

    pub fn gaussian_bump(amplitude: f64, width: f64, center: &[f64], base: f64) -> Self {
        Self::GaussianBump { amplitude, width, center: center.to_vec(), base }
    }

    pub fn polynomial(coeffs: &[f64]) -> Self {
        Self::Polynomial1d { coeffs: coeffs.to_vec(), axis: 0 }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Quadratic { .. } => "quadratic",
            Self::GaussianBump { .. } => "gaussian-bump",
            Self::Polynomial1d { .. } => "polynomial-1d",
            Self::Tabulated { .. } => "tabulated",
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Self::Constant { value } => vec![*value],
            Self::Quadratic { lambda, center, offset } => {
                let mut p = center.clone();
                p.extend([*lambda, *offset]);
                p
            }
            Self::GaussianBump { amplitude, width, center, base } => {
                let mut p = center.clone();
                p.extend([*amplitude, *width, *base]);
                p
            }
            Self::Polynomial1d { coeffs, .. } => coeffs.clone(),
            Self::Tabulated { values } => values.clone(),
        }
    }

    /// Sample at every cell center of `grid`.
    pub fn evaluate(&self, grid: &Grid) -> Result<Field> {
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCoefficient(format!("{}: non-finite parameter", self.kind_name())));
        }
        let dim = grid.dim();
        let center_of = |c: &[f64]| -> Result<[f64; 2]> {
            match c.len() {
                0 => Ok([0.0; 2]),
                n if n == dim => Ok([c[0], if dim == 2 { c[1] } else { 0.0 }]),
                n => Err(Error::InvalidCoefficient(format!("center has {n} components on a {dim}D grid"))),
            }
        };
        let sq_dist = move |x: [f64; 2], c: [f64; 2]| {
            let dx = x[0] - c[0];
            let dy = x[1] - c[1];
            dx * dx + dy * dy
        };
        match self {
            Self::Constant { value } => Ok(Field::constant(*grid, *value)),
            Self::Quadratic { lambda, center, offset } => {
                let c = center_of(center)?;
                Ok(Field::from_fn(*grid, |x| 0.5 * lambda * sq_dist(x, c) + offset))
            }
            Self::GaussianBump { amplitude, width, center, base } => {
                if *width <= 0.0 {
                    return Err(Error::InvalidCoefficient("gaussian-bump width must be positive".into()));
                }
                let c = center_of(center)?;
                let denom = 2.0 * width * width;
                Ok(Field::from_fn(*grid, |x| base + amplitude * (-sq_dist(x, c) / denom).exp()))
            }
            Self::Polynomial1d { coeffs, axis } => {
                if *axis >= dim {
                    return Err(Error::InvalidCoefficient(format!("polynomial axis {axis} on a {dim}D grid")));
                }
                let a = *axis;
                // Horner
                Ok(Field::from_fn(*grid, |x| coeffs.iter().rev().fold(0.0, |acc, &c| acc * x[a] + c)))
            }
            Self::Tabulated { values } => {
                if values.len() != grid.n_cells() {
                    return Err(Error::InvalidCoefficient(format!(
                        "tabulated field has {} values, grid has {} cells",
                        values.len(),
                        grid.n_cells()
                    )));
                }
                Field::new(*grid, values.clone())
            }
        }
    }
}

/// Face density used in the transport flux.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceDensity {
    /// Arithmetic mean of the two adjacent cells. The scheme's energy rate
    /// then equals the face-mean dissipation quadrature exactly.
    #[default]
    Mean,
    /// Density of the cell the velocity flows out of.
    Upwind,
}

fn default_dt_init() -> f64 {
    1e-3
}
fn default_cfl() -> f64 {
    0.5
}
fn default_record_every() -> usize {
    100
}
fn default_positivity_floor() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverControls {
    #[serde(default = "default_dt_init")]
    pub dt_init: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_end: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_positivity_floor")]
    pub positivity_floor: f64,
    #[serde(default)]
    pub face_density: FaceDensity,
}

impl SolverControls {
    pub fn new(t_end: f64) -> Self {
        Self {
            dt_init: default_dt_init(),
            cfl: default_cfl(),
            t_end,
            record_every: default_record_every(),
            positivity_floor: default_positivity_floor(),
            face_density: FaceDensity::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidProblem(format!("solver: {msg}")));
        if !(self.dt_init > 0.0 && self.dt_init.is_finite()) {
            return bad("dt_init must be positive");
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad("cfl must lie in (0, 1]");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be positive");
        }
        if !(self.positivity_floor >= 0.0) {
            return bad("positivity_floor must be non-negative");
        }
        Ok(())
    }
}

/// Unevaluated problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub grid: Grid,
    pub d: CoefficientSpec,
    pub phi: CoefficientSpec,
    pub rho0: CoefficientSpec,
    /// Declared convexity modulus of φ (∇²φ ≥ λI).
    pub lambda: f64,
    /// Declared lower bound on d, if any.
    pub d_min: Option<f64>,
    pub solver: SolverControls,
}

/// A problem with all coefficient fields sampled and ρ₀ normalized.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    d: Field,
    phi: Field,
    rho0: Field,
}

impl Problem {
    /// Evaluate and check the fatal preconditions (α > 1, d > 0, ρ₀ > 0).
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        check_alpha(spec.alpha)?;
        if !(spec.lambda >= 0.0 && spec.lambda.is_finite()) {
            return Err(Error::InvalidProblem(format!("lambda must be finite and >= 0, got {}", spec.lambda)));
        }
        spec.solver.validate()?;
        let d = spec.d.evaluate(&spec.grid)?;
        if let Some((cell, &value)) = d.values().iter().enumerate().find(|(_, &v)| v.is_nan() || v <= 0.0) {
            return Err(Error::InvalidProblem(format!("d must be positive, found {value} in cell {cell}")));
        }
        let phi = spec.phi.evaluate(&spec.grid)?;
        let rho0 = normalize_density(&spec.rho0.evaluate(&spec.grid)?)?;
        Ok(Self { spec, d, phi, rho0 })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    pub fn grid(&self) -> &Grid {
        &self.spec.grid
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    pub fn controls(&self) -> &SolverControls {
        &self.spec.solver
    }

    pub fn d(&self) -> &Field {
        &self.d
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    /// The normalized initial density.
    pub fn rho0(&self) -> &Field {
        &self.rho0
    }

    /// Same coefficients on a grid with different resolution.
    pub fn refined(&self, cells: &[usize]) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.grid = spec.grid.with_cells(cells)?;
        Self::new(spec)
    }

    pub fn with_controls(&self, solver: SolverControls) -> Result<Self> {
        solver.validate()?;
        let mut out = self.clone();
        out.spec.solver = solver;
        Ok(out)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidProblem(format!("alpha must be > 1, got {alpha}")));
    }
    Ok(())
}

/// Scale a strictly positive density to unit discrete mass.
pub fn normalize_density(rho: &Field) -> Result<Field> {
    if let Some((cell, &value)) = rho.values().iter().enumerate().find(|(_, &v)| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveDensity { cell, value });
    }
    let mass = rho.integral();
    Ok(rho.map(|v| v / mass))
}

/// Per-cell gradient estimate: centered differences inside, one-sided at
/// the boundary cells.
pub fn cell_gradients(f: &Field) -> Vec<[f64; 2]> {
    let grid = f.grid();
    let v = f.values();
    (0..grid.n_cells())
        .map(|idx| {
            let mut g = [0.0; 2];
            for (k, gk) in g.iter_mut().enumerate().take(grid.dim()) {
                let h = grid.spacing(k);
                *gk = match (grid.neighbour(idx, k, -1), grid.neighbour(idx, k, 1)) {
                    (Some(m), Some(p)) => (v[p] - v[m]) / (2.0 * h),
                    (None, Some(p)) => (v[p] - v[idx]) / h,
                    (Some(m), None) => (v[idx] - v[m]) / h,
                    (None, None) => 0.0,
                };
            }
            g
        })
        .collect()
}

/// max over cells of |∇f| using [`cell_gradients`].
pub fn sup_gradient(f: &Field) -> f64 {
    cell_gradients(f).iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max)
}

/// Finite-difference Hessian `[[fxx, fxy], [fxy, fyy]]` at interior cells.
#[allow(clippy::needless_range_loop)]
pub fn interior_hessians(f: &Field) -> Vec<(usize, [[f64; 2]; 2])> {
    let grid = f.grid();
    let v = f.values();
    (0..grid.n_cells())
        .filter(|&idx| grid.is_interior_cell(idx))
        .map(|idx| {
            let mut hess = [[0.0; 2]; 2];
            for k in 0..grid.dim() {
                let h = grid.spacing(k);
                let m = grid.neighbour(idx, k, -1).unwrap();
                let p = grid.neighbour(idx, k, 1).unwrap();
                hess[k][k] = (v[p] - 2.0 * v[idx] + v[m]) / (h * h);
            }
            if grid.dim() == 2 {
                let (hx, hy) = (grid.spacing(0), grid.spacing(1));
                let at = |di: isize, dj: isize| {
                    let a = grid.neighbour(idx, 0, di).unwrap();
                    v[grid.neighbour(a, 1, dj).unwrap()]
                };
                let fxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hx * hy);
                hess[0][1] = fxy;
                hess[1][0] = fxy;
            }
            (idx, hess)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ConvexityCheck {
    /// Finite-difference Hessian agrees with the declared modulus.
    Verified {
        hessian_min_eig: f64,
    },
    Mismatch {
        declared: f64,
        estimated_min_eig: f64,
    },
    /// The potential kind does not allow a cheap certification.
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub alpha: f64,
    pub min_d: f64,
    pub d_min_declared: Option<f64>,
    pub d_min_satisfied: Option<bool>,
    pub sup_grad_d: f64,
    pub sup_grad_phi: f64,
    pub lambda: f64,
    pub convexity: ConvexityCheck,
    pub rho0_positive: bool,
    /// Mass of the sampled ρ₀ before normalization.
    pub rho0_raw_mass: f64,
    pub rho0_mass: f64,
    pub smoothness_unverified: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

fn min_eigenvalue(h: &[[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return h[0][0];
    }
    let tr = h[0][0] + h[1][1];
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr - disc
}

/// Check the standing assumptions. Hard violations (α ≤ 1, d ≤ 0, ρ₀ ≤ 0)
/// are errors; everything else becomes a warning in the report.
pub fn validate_problem(spec: &ProblemSpec) -> Result<ValidationReport> {
    check_alpha(spec.alpha)?;
    let grid = &spec.grid;
    let d = spec.d.evaluate(grid)?;
    if let Some((cell, &value)) = d.values().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::InvalidProblem(format!("d must be positive, found {value} in cell {cell}")));
    }
    let phi = spec.phi.evaluate(grid)?;
    let rho_raw = spec.rho0.evaluate(grid)?;
    let rho0 = normalize_density(&rho_raw)?;

    let mut warnings = Vec::new();
    let min_d = d.min();
    let d_min_satisfied = spec.d_min.map(|declared| min_d >= declared);
    if d_min_satisfied == Some(false) {
        warnings.push(format!("min d = {min_d} is below the declared lower bound {}", spec.d_min.unwrap()));
    }

    let hessians = interior_hessians(&phi);
    let est_min = hessians.iter().map(|(_, h)| min_eigenvalue(h, grid.dim())).fold(f64::INFINITY, f64::min);
    let lambda = spec.lambda;
    let convexity = match &spec.phi {
        CoefficientSpec::Quadratic { lambda: kind_lambda, .. } => {
            if (kind_lambda - lambda).abs() > 1e-12 * (1.0 + lambda.abs()) {
                warnings.push(format!("declared lambda {lambda} differs from quadratic modulus {kind_lambda}"));
            }
            if (est_min - lambda).abs() <= 1e-6 * (1.0 + lambda.abs()) {
                ConvexityCheck::Verified { hessian_min_eig: est_min }
            } else {
                ConvexityCheck::Mismatch { declared: lambda, estimated_min_eig: est_min }
            }
        }
        CoefficientSpec::Constant { .. } => {
            if lambda != 0.0 {
                warnings.push(format!("constant potential has modulus 0, declared lambda {lambda}"));
                ConvexityCheck::Mismatch { declared: lambda, estimated_min_eig: 0.0 }
            } else {
                ConvexityCheck::Verified { hessian_min_eig: 0.0 }
            }
        }
        _ => {
            warnings.push(format!("convexity of {} potential is unverified", spec.phi.kind_name()));
            ConvexityCheck::Unverified
        }
    };
    if lambda <= 0.0 {
        warnings.push("lambda = 0: no uniform convexity, exponential decay is not guaranteed".into());
    }

    let smoothness_unverified =
        [&spec.d, &spec.phi, &spec.rho0].iter().any(|c| matches!(c, CoefficientSpec::Tabulated { .. }));
    if smoothness_unverified {
        warnings.push("tabulated coefficient: smoothness unverified".into());
    }

    Ok(ValidationReport {
        alpha: spec.alpha,
        min_d,
        d_min_declared: spec.d_min,
        d_min_satisfied,
        sup_grad_d: sup_gradient(&d),
        sup_grad_phi: sup_gradient(&phi),
        lambda,
        convexity,
        rho0_positive: true,
        rho0_raw_mass: rho_raw.integral(),
        rho0_mass: rho0.integral(),
        smoothness_unverified,
        warnings,
    })
}
