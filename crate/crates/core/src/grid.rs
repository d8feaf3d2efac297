//! Uniform cell-centered grids on intervals and axis-aligned rectangles.
//!
//! Cells are stored with the x index varying fastest. Faces along axis `k`
//! include the two boundary layers, so an axis with `n` cells has `n + 1`
//! face positions. Boundary faces carry zero in every field produced here,
//! which is the discrete form of the no-flux condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible number of cells per axis (second differences need
/// at least one interior cell with two neighbours on each side of the strip).
pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Center of cell `i`, measured from the axis midpoint so that grids on
    /// symmetric intervals have exactly mirrored coordinates.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        let mid = 0.5 * (self.lo + self.hi);
        mid + (i as f64 + 0.5 - 0.5 * self.cells as f64) * self.spacing()
    }
}

/// A 1D or 2D tensor grid. Unused axes of a 1D grid are not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    axes: [Axis; 2],
}

impl Grid {
    pub fn new(dim: usize, bounds: &[(f64, f64)], cells: &[usize]) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if bounds.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} bounds and cell counts, got {} and {}",
                bounds.len(),
                cells.len()
            )));
        }
        let mut axes = [Axis { lo: 0.0, hi: 1.0, cells: 1 }; 2];
        for k in 0..dim {
            let (lo, hi) = bounds[k];
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::InvalidGrid(format!("axis {k}: bounds ({lo}, {hi}) are not ordered")));
            }
            if cells[k] < MIN_CELLS {
                return Err(Error::InvalidGrid(format!("axis {k}: {} cells, need at least {MIN_CELLS}", cells[k])));
            }
            axes[k] = Axis { lo, hi, cells: cells[k] };
        }
        Ok(Self { dim, axes })
    }

    pub fn interval(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(1, &[(lo, hi)], &[cells])
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64), cells: [usize; 2]) -> Result<Self> {
        Self::new(2, &[x, y], &cells)
    }

    /// Same domain, different resolution.
    pub fn with_cells(&self, cells: &[usize]) -> Result<Self> {
        let bounds: Vec<_> = self.axes().iter().map(|a| (a.lo, a.hi)).collect();
        Self::new(self.dim, &bounds, cells)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn axes(&self) -> &[Axis] {
        &self.axes[..self.dim]
    }

    #[inline]
    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes()[k]
    }

    #[inline]
    pub fn spacing(&self, k: usize) -> f64 {
        self.axis(k).spacing()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes().iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Cells per axis; a 1D grid reports `[n, 1]`.
    #[inline]
    pub fn shape(&self) -> [usize; 2] {
        [self.axes[0].cells, if self.dim == 2 { self.axes[1].cells } else { 1 }]
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        let [nx, ny] = self.shape();
        nx * ny
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.axes().iter().map(Axis::spacing).product()
    }

    pub fn measure(&self) -> f64 {
        self.axes().iter().map(Axis::length).product()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.axes[0].cells * j
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize) {
        let nx = self.axes[0].cells;
        (idx % nx, idx / nx)
    }

    /// Cell-center coordinates; the second entry is 0 for 1D grids.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.unravel(idx);
        let x = self.axes[0].center(i);
        let y = if self.dim == 2 { self.axes[1].center(j) } else { 0.0 };
        [x, y]
    }

    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.n_cells()).map(move |idx| self.center(idx))
    }

    /// Number of face positions (including boundary faces) along axis `k`.
    pub fn n_faces(&self, k: usize) -> usize {
        let [nx, ny] = self.shape();
        match k {
            0 => (nx + 1) * ny,
            _ => nx * (ny + 1),
        }
    }

    /// Index of the face between cell `(i, j)` and its `+k` neighbour.
    #[inline]
    pub fn face_after(&self, k: usize, i: usize, j: usize) -> usize {
        let nx = self.axes[0].cells;
        match k {
            0 => (i + 1) + (nx + 1) * j,
            _ => i + nx * (j + 1),
        }
    }

    /// Index of the face between cell `(i, j)` and its `−k` neighbour.
    #[inline]
    pub fn face_before(&self, k: usize, i: usize, j: usize) -> usize {
        let nx = self.axes[0].cells;
        match k {
            0 => i + (nx + 1) * j,
            _ => i + nx * j,
        }
    }

    /// Visit every interior face along every axis as
    /// `(axis, face index, left cell, right cell)`.
    pub fn for_each_interior_face(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let [nx, ny] = self.shape();
        for j in 0..ny {
            for i in 0..nx - 1 {
                f(0, self.face_after(0, i, j), self.index(i, j), self.index(i + 1, j));
            }
        }
        if self.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    f(1, self.face_after(1, i, j), self.index(i, j), self.index(i, j + 1));
                }
            }
        }
    }

    /// True when the cell has two neighbours along every axis.
    #[inline]
    pub fn is_interior_cell(&self, idx: usize) -> bool {
        let (i, j) = self.unravel(idx);
        let [nx, ny] = self.shape();
        let x_ok = i > 0 && i + 1 < nx;
        let y_ok = self.dim == 1 || (j > 0 && j + 1 < ny);
        x_ok && y_ok
    }

    /// Neighbour of `idx` shifted by `offset` along axis `k`, if it exists.
    #[inline]
    pub fn neighbour(&self, idx: usize, k: usize, offset: isize) -> Option<usize> {
        let (i, j) = self.unravel(idx);
        let [nx, ny] = self.shape();
        match k {
            0 => {
                let ii = i as isize + offset;
                (ii >= 0 && (ii as usize) < nx).then(|| self.index(ii as usize, j))
            }
            _ => {
                let jj = j as isize + offset;
                (jj >= 0 && (jj as usize) < ny).then(|| self.index(i, jj as usize))
            }
        }
    }
}

/// Cell-centered values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { values: vec![value; grid.n_cells()], grid }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grid.centers().map(f).collect();
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn values_vec_mut(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Σ value·cell volume.
    pub fn integral(&self) -> f64 {
        compensated_sum(&self.values) * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Values on cell faces, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    values: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        let values = (0..grid.dim()).map(|k| vec![0.0; grid.n_faces(k)]).collect();
        Self { grid, values }
    }

    pub fn new(grid: Grid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.dim() || (0..grid.dim()).any(|k| values[k].len() != grid.n_faces(k)) {
            return Err(Error::GridMismatch("face arrays do not match grid".into()));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn axis(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    #[inline]
    pub fn axis_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k]
    }

    /// Zero every boundary face.
    pub fn clear_boundary(&mut self) {
        let grid = self.grid;
        let [nx, ny] = grid.shape();
        for j in 0..ny {
            self.values[0][grid.face_before(0, 0, j)] = 0.0;
            self.values[0][grid.face_after(0, nx - 1, j)] = 0.0;
        }
        if grid.dim() == 2 {
            for i in 0..nx {
                self.values[1][grid.face_before(1, i, 0)] = 0.0;
                self.values[1][grid.face_after(1, i, ny - 1)] = 0.0;
            }
        }
    }
}

/// Neumaier summation, so mass bookkeeping stays at roundoff level on large grids.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Face differences `(f_R − f_L)/h_k`; boundary faces are 0.
pub fn gradient(f: &Field) -> FaceField {
    let grid = *f.grid();
    let mut out = FaceField::zeros(grid);
    gradient_into(f.values(), &grid, &mut out);
    out
}

pub(crate) fn gradient_into(f: &[f64], grid: &Grid, out: &mut FaceField) {
    let inv_h = [1.0 / grid.spacing(0), if grid.dim() == 2 { 1.0 / grid.spacing(1) } else { 0.0 }];
    grid.for_each_interior_face(|k, face, l, r| {
        out.values[k][face] = (f[r] - f[l]) * inv_h[k];
    });
}

/// Σ_k (F_{k,i+½} − F_{k,i−½}) / h_k per cell.
pub fn divergence(flux: &FaceField) -> Field {
    let grid = *flux.grid();
    let mut out = vec![0.0; grid.n_cells()];
    divergence_into(flux, &mut out);
    Field { grid, values: out }
}

pub(crate) fn divergence_into(flux: &FaceField, out: &mut [f64]) {
    let grid = flux.grid();
    let [nx, ny] = grid.shape();
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for k in 0..grid.dim() {
                let a = flux.values[k][grid.face_after(k, i, j)];
                let b = flux.values[k][grid.face_before(k, i, j)];
                acc += (a - b) / grid.spacing(k);
            }
            out[grid.index(i, j)] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_interval_spacing_and_centers() {
        let g = Grid::interval(0.0, 1.0, 10).unwrap();
        assert!((g.spacing(0) - 0.1).abs() < 1e-15);
        for (i, c) in g.centers().enumerate() {
            assert!((c[0] - (0.05 + 0.1 * i as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn rectangle_cells() {
        let g = Grid::rectangle((-1.0, 1.0), (0.0, 2.0), [8, 8]).unwrap();
        assert_eq!(g.n_cells(), 64);
        assert_eq!(g.spacing(0), 0.25);
        assert_eq!(g.spacing(1), 0.25);
        assert_eq!(g.measure(), 4.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::interval(0.0, 1.0, 3).is_err());
        assert!(Grid::interval(1.0, 0.0, 10).is_err());
        assert!(Grid::new(3, &[(0.0, 1.0); 3], &[4; 3]).is_err());
        assert!(Grid::new(1, &[(0.0, f64::NAN)], &[4]).is_err());
    }

    #[test]
    fn symmetric_centers_mirror_exactly() {
        let g = Grid::interval(-1.0, 1.0, 201).unwrap();
        let n = g.n_cells();
        for i in 0..n {
            assert_eq!(g.center(i)[0], -g.center(n - 1 - i)[0]);
        }
    }

    #[test]
    fn gradient_of_constant_and_affine() {
        let g = Grid::interval(0.0, 1.0, 10).unwrap();
        let c = Field::constant(g, 4.2);
        assert!(gradient(&c).axis(0).iter().all(|&v| v == 0.0));

        let f = Field::from_fn(g, |x| 3.0 * x[0] + 2.0);
        let gr = gradient(&f);
        let faces = gr.axis(0);
        assert_eq!(faces[0], 0.0);
        assert_eq!(faces[10], 0.0);
        for &v in &faces[1..10] {
            assert!((v - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Grid::rectangle((0.0, 1.0), (0.0, 2.0), [7, 5]).unwrap();
        let f = Field::new(g, (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let gr = gradient(&f);
        let (hx, hy) = (g.spacing(0), g.spacing(1));
        for j in 0..5 {
            for i in 0..8 {
                let v = gr.axis(0)[i + 8 * j];
                let expect =
                    if i == 0 || i == 7 { 0.0 } else { (f.values()[i + 7 * j] - f.values()[i - 1 + 7 * j]) / hx };
                assert!((v - expect).abs() <= 1e-14 * (1.0 + expect.abs()));
            }
        }
        for j in 0..6 {
            for i in 0..7 {
                let v = gr.axis(1)[i + 7 * j];
                let expect =
                    if j == 0 || j == 5 { 0.0 } else { (f.values()[i + 7 * j] - f.values()[i + 7 * (j - 1)]) / hy };
                assert!((v - expect).abs() <= 1e-14 * (1.0 + expect.abs()));
            }
        }
    }

    fn random_flux(g: Grid, rng: &mut ChaCha8Rng) -> FaceField {
        let mut ff = FaceField::zeros(g);
        for k in 0..g.dim() {
            for v in ff.axis_mut(k) {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        ff.clear_boundary();
        ff
    }

    #[test]
    fn divergence_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [Grid::interval(0.0, 1.0, 13).unwrap(), Grid::rectangle((0.0, 1.0), (-1.0, 1.0), [6, 9]).unwrap()] {
            let ff = random_flux(g, &mut rng);
            let total = divergence(&ff).integral();
            assert!(total.abs() < 1e-12);
        }
        let zero = divergence(&FaceField::zeros(Grid::interval(0.0, 1.0, 5).unwrap()));
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn summation_by_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let g = if trial % 2 == 0 {
                Grid::interval(-1.0, 2.0, 17).unwrap()
            } else {
                Grid::rectangle((0.0, 1.0), (0.0, 3.0), [5, 8]).unwrap()
            };
            let f = Field::new(g, (0..g.n_cells()).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let ff = random_flux(g, &mut rng);
            let vol = g.cell_volume();
            let lhs: f64 = f.values().iter().zip(divergence(&ff).values()).map(|(a, b)| a * b * vol).sum();
            let gr = gradient(&f);
            let mut rhs = 0.0;
            for k in 0..g.dim() {
                rhs -= gr.axis(k).iter().zip(ff.axis(k)).map(|(a, b)| a * b * vol).sum::<f64>();
            }
            assert!((lhs - rhs).abs() < 1e-12, "trial {trial}: {lhs} vs {rhs}");
        }
    }
}
