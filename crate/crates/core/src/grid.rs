//! Uniform square grid over [0, extent]^2, scalar fields on it, and the
//! tumour region mask.
//!
//! Node (i, j) sits at (i*h, j*h) with spacing h; fields are stored row
//! major with j outer, so the flat index is j*n + i.

use crate::error::{Error, Result};
use crate::parallel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    spacing: f64,
    extent: f64,
}

impl Grid {
    /// Builds the node grid with floor(extent/spacing) + 1 nodes per axis.
    pub fn new(extent: f64, spacing: f64) -> Result<Self> {
        if !extent.is_finite() || extent <= 0.0 {
            return Err(Error::Grid(format!(
                "extent must be positive and finite, got {extent}"
            )));
        }
        if !spacing.is_finite() || spacing <= 0.0 {
            return Err(Error::Grid(format!(
                "spacing must be positive and finite, got {spacing}"
            )));
        }
        if spacing > extent {
            return Err(Error::Grid(format!(
                "spacing {spacing} exceeds extent {extent}"
            )));
        }
        let n = (extent / spacing + 1e-9).floor() as usize + 1;
        Ok(Self { n, spacing, extent })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn extent(&self) -> f64 {
        self.extent
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        j * self.n + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        debug_assert!(k < self.nodes());
        (k % self.n, k / self.n)
    }

    #[inline]
    pub fn pos(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 * self.spacing, j as f64 * self.spacing]
    }

    #[inline]
    pub fn pos_of(&self, k: usize) -> [f64; 2] {
        let (i, j) = self.coords(k);
        self.pos(i, j)
    }

    /// Node whose cell contains `p`, or None outside the covered area.
    #[inline]
    pub fn nearest_node(&self, p: [f64; 2]) -> Option<usize> {
        let i = (p[0] / self.spacing).round();
        let j = (p[1] / self.spacing).round();
        if i < 0.0 || j < 0.0 || i > (self.n - 1) as f64 || j > (self.n - 1) as f64 {
            return None;
        }
        Some(self.idx(i as usize, j as usize))
    }

    #[inline]
    pub fn center(&self) -> [f64; 2] {
        [self.extent * 0.5, self.extent * 0.5]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.nodes()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.nodes()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.nodes());
        for j in 0..grid.n() {
            for i in 0..grid.n() {
                values.push(f(grid.pos(i, j)));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(Error::Grid(format!(
                "field length {} does not match the grid ({} nodes)",
                values.len(),
                grid.nodes()
            )));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = value;
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Node sum times the cell area, accumulated in index order.
    pub fn mass(&self) -> f64 {
        let h = self.grid.spacing();
        self.values.iter().sum::<f64>() * h * h
    }
}

/// Connected set of grid nodes occupied by the tumour. The mask only ever
/// grows; c and i live on it and are zero elsewhere.
#[derive(Clone, Debug)]
pub struct TumourRegion {
    grid: Grid,
    mask: Vec<bool>,
    members: Vec<usize>,
    boundary: Vec<usize>,
}

impl TumourRegion {
    pub fn from_mask(grid: Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.nodes() {
            return Err(Error::Grid(format!(
                "mask length {} does not match the grid ({} nodes)",
                mask.len(),
                grid.nodes()
            )));
        }
        let members: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
        if members.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let boundary = extract_boundary(grid, &mask);
        Ok(Self {
            grid,
            mask,
            members,
            boundary,
        })
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.mask[k]
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Member node indices in row-major order.
    #[inline]
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Boundary node indices in row-major order.
    #[inline]
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.members.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Adds nodes to the mask and returns how many were new. Indices must
    /// lie on the grid.
    pub fn expand(&mut self, new_nodes: &[usize]) -> Result<usize> {
        for &k in new_nodes {
            if k >= self.grid.nodes() {
                return Err(Error::Grid(format!(
                    "node index {k} is outside the grid ({} nodes)",
                    self.grid.nodes()
                )));
            }
        }
        let mut added = 0;
        for &k in new_nodes {
            if !self.mask[k] {
                self.mask[k] = true;
                added += 1;
            }
        }
        if added > 0 {
            self.members = (0..self.mask.len()).filter(|&k| self.mask[k]).collect();
            self.boundary = extract_boundary(self.grid, &self.mask);
        }
        Ok(added)
    }
}

/// Mask nodes with at least one 4-neighbour outside the mask or off the
/// grid, in row-major order.
pub fn extract_boundary(grid: Grid, mask: &[bool]) -> Vec<usize> {
    let n = grid.n();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let k = grid.idx(i, j);
            if !mask[k] {
                continue;
            }
            let exposed = i == 0
                || i == n - 1
                || j == 0
                || j == n - 1
                || !mask[k - 1]
                || !mask[k + 1]
                || !mask[k - n]
                || !mask[k + n];
            if exposed {
                out.push(k);
            }
        }
    }
    out
}

/// Central-difference gradient, one-sided at the outer frame. Exact for
/// fields linear in position.
pub fn gradient_into(field: &ScalarField, out: &mut [[f64; 2]]) {
    gradient_slice_into(field.grid(), field.values(), out);
}

pub fn gradient_slice_into(grid: Grid, u: &[f64], out: &mut [[f64; 2]]) {
    let n = grid.n();
    let inv_h = 1.0 / grid.spacing();
    let inv_2h = 0.5 * inv_h;
    parallel::fill_indexed(out, |k| {
        let i = k % n;
        let j = k / n;
        let gx = if i == 0 {
            (u[k + 1] - u[k]) * inv_h
        } else if i == n - 1 {
            (u[k] - u[k - 1]) * inv_h
        } else {
            (u[k + 1] - u[k - 1]) * inv_2h
        };
        let gy = if j == 0 {
            (u[k + n] - u[k]) * inv_h
        } else if j == n - 1 {
            (u[k] - u[k - n]) * inv_h
        } else {
            (u[k + n] - u[k - n]) * inv_2h
        };
        [gx, gy]
    });
}

pub fn gradient(field: &ScalarField) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; field.grid().nodes()];
    gradient_into(field, &mut out);
    out
}

/// Gradient restricted to a mask: central where both neighbours are inside,
/// one-sided toward the interior where one leaves the mask, zero where both
/// are outside. Zero at non-member nodes.
pub fn gradient_masked_into(field: &ScalarField, mask: &[bool], out: &mut [[f64; 2]]) {
    gradient_masked_slice_into(field.grid(), field.values(), mask, out);
}

pub fn gradient_masked_slice_into(grid: Grid, u: &[f64], mask: &[bool], out: &mut [[f64; 2]]) {
    let n = grid.n();
    let inv_h = 1.0 / grid.spacing();
    let inv_2h = 0.5 * inv_h;
    parallel::fill_indexed(out, |k| {
        if !mask[k] {
            return [0.0, 0.0];
        }
        let i = k % n;
        let j = k / n;
        let left = i > 0 && mask[k - 1];
        let right = i + 1 < n && mask[k + 1];
        let gx = match (left, right) {
            (true, true) => (u[k + 1] - u[k - 1]) * inv_2h,
            (true, false) => (u[k] - u[k - 1]) * inv_h,
            (false, true) => (u[k + 1] - u[k]) * inv_h,
            (false, false) => 0.0,
        };
        let down = j > 0 && mask[k - n];
        let up = j + 1 < n && mask[k + n];
        let gy = match (down, up) {
            (true, true) => (u[k + n] - u[k - n]) * inv_2h,
            (true, false) => (u[k] - u[k - n]) * inv_h,
            (false, true) => (u[k + n] - u[k]) * inv_h,
            (false, false) => 0.0,
        };
        [gx, gy]
    });
}

pub fn gradient_masked(field: &ScalarField, mask: &[bool]) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; field.grid().nodes()];
    gradient_masked_into(field, mask, &mut out);
    out
}

/// Five-point Laplacian; neighbours outside the mask or the grid mirror the
/// centre value, which closes the operator with zero flux there. Zero at
/// non-member nodes.
pub fn laplacian_masked_into(field: &ScalarField, mask: &[bool], out: &mut [f64]) {
    laplacian_masked_slice_into(field.grid(), field.values(), mask, out);
}

pub fn laplacian_masked_slice_into(grid: Grid, u: &[f64], mask: &[bool], out: &mut [f64]) {
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    parallel::fill_indexed(out, |k| {
        if !mask[k] {
            return 0.0;
        }
        let i = k % n;
        let j = k / n;
        let mut acc = 0.0;
        if i + 1 < n && mask[k + 1] {
            acc += u[k + 1] - u[k];
        }
        if i > 0 && mask[k - 1] {
            acc += u[k - 1] - u[k];
        }
        if j + 1 < n && mask[k + n] {
            acc += u[k + n] - u[k];
        }
        if j > 0 && mask[k - n] {
            acc += u[k - n] - u[k];
        }
        acc * inv_h2
    });
}

pub fn laplacian_masked(field: &ScalarField, mask: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; field.grid().nodes()];
    laplacian_masked_into(field, mask, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        assert_eq!(Grid::new(4.0, 0.03125).unwrap().n(), 129);
        assert_eq!(Grid::new(4.0, 2.0).unwrap().n(), 3);
        assert_eq!(Grid::new(1.0, 0.25).unwrap().n(), 5);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Grid::new(0.0, 0.1).is_err());
        assert!(Grid::new(4.0, 0.0).is_err());
        assert!(Grid::new(4.0, -1.0).is_err());
        assert!(Grid::new(1.0, 2.0).is_err());
        assert!(Grid::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(1.0, 0.25).unwrap();
        for j in 0..g.n() {
            for i in 0..g.n() {
                assert_eq!(g.coords(g.idx(i, j)), (i, j));
            }
        }
        assert_eq!(g.pos(2, 3), [0.5, 0.75]);
    }

    #[test]
    fn nearest_node_rounds_and_rejects() {
        let g = Grid::new(1.0, 0.25).unwrap();
        assert_eq!(g.nearest_node([0.26, 0.0]), Some(g.idx(1, 0)));
        assert_eq!(g.nearest_node([0.12, 0.0]), Some(g.idx(0, 0)));
        assert_eq!(g.nearest_node([-0.2, 0.0]), None);
        assert_eq!(g.nearest_node([0.0, 1.2]), None);
    }

    fn block_region(g: Grid, i0: usize, j0: usize, w: usize) -> TumourRegion {
        let mut mask = vec![false; g.nodes()];
        for j in j0..j0 + w {
            for i in i0..i0 + w {
                mask[g.idx(i, j)] = true;
            }
        }
        TumourRegion::from_mask(g, mask).unwrap()
    }

    #[test]
    fn boundary_of_single_node_is_itself() {
        let g = Grid::new(1.0, 0.25).unwrap();
        let mut mask = vec![false; g.nodes()];
        mask[g.idx(2, 2)] = true;
        let r = TumourRegion::from_mask(g, mask).unwrap();
        assert_eq!(r.boundary(), &[g.idx(2, 2)]);
    }

    #[test]
    fn boundary_of_full_grid_is_the_frame() {
        let g = Grid::new(1.0, 0.25).unwrap();
        let r = TumourRegion::from_mask(g, vec![true; g.nodes()]).unwrap();
        // Brute-force oracle: frame nodes by coordinate test.
        let expected: Vec<usize> = (0..g.nodes())
            .filter(|&k| {
                let (i, j) = g.coords(k);
                i == 0 || j == 0 || i == g.n() - 1 || j == g.n() - 1
            })
            .collect();
        assert_eq!(r.boundary(), expected.as_slice());
    }

    #[test]
    fn boundary_of_block_is_its_perimeter() {
        let g = Grid::new(2.0, 0.25).unwrap();
        let r = block_region(g, 2, 2, 3);
        // Independent neighbour scan.
        let expected: Vec<usize> = r
            .members()
            .iter()
            .copied()
            .filter(|&k| {
                let (i, j) = g.coords(k);
                [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)].iter().any(|&(di, dj)| {
                    let ii = i as i64 + di;
                    let jj = j as i64 + dj;
                    ii < 0
                        || jj < 0
                        || ii >= g.n() as i64
                        || jj >= g.n() as i64
                        || !r.contains(g.idx(ii as usize, jj as usize))
                })
            })
            .collect();
        assert_eq!(r.boundary().len(), 8);
        assert_eq!(r.boundary(), expected.as_slice());
    }

    #[test]
    fn expand_is_monotone_and_idempotent() {
        let g = Grid::new(2.0, 0.25).unwrap();
        let mut r = block_region(g, 2, 2, 3);
        let before = r.members().to_vec();
        assert_eq!(r.expand(&before).unwrap(), 0);
        assert_eq!(r.members(), before.as_slice());

        let extra = g.idx(5, 3);
        assert_eq!(r.expand(&[extra]).unwrap(), 1);
        assert_eq!(r.len(), 10);
        assert!(before.iter().all(|&k| r.contains(k)));
        assert!(r.contains(extra));
    }

    #[test]
    fn expand_rejects_off_grid_indices() {
        let g = Grid::new(1.0, 0.25).unwrap();
        let mut r = block_region(g, 1, 1, 2);
        assert!(r.expand(&[g.nodes()]).is_err());
    }

    #[test]
    fn empty_mask_is_rejected() {
        let g = Grid::new(1.0, 0.25).unwrap();
        assert!(matches!(
            TumourRegion::from_mask(g, vec![false; g.nodes()]),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn gradient_exact_for_linear_fields() {
        let g = Grid::new(1.0, 0.125).unwrap();
        let f = ScalarField::from_fn(g, |p| 3.0 * p[0] - 2.0 * p[1] + 0.5);
        for grad in gradient(&f) {
            assert!((grad[0] - 3.0).abs() < 1e-12);
            assert!((grad[1] + 2.0).abs() < 1e-12);
        }
        let mask = vec![true; g.nodes()];
        for grad in gradient_masked(&f, &mask) {
            assert!((grad[0] - 3.0).abs() < 1e-12);
            assert!((grad[1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Grid::new(1.0, 0.125).unwrap();
        let f = ScalarField::constant(g, 4.2);
        let mut mask = vec![true; g.nodes()];
        mask[g.idx(3, 4)] = false;
        for lap in laplacian_masked(&f, &mask) {
            assert_eq!(lap, 0.0);
        }
    }

    #[test]
    fn mass_is_area_weighted() {
        let g = Grid::new(1.0, 0.5).unwrap();
        let f = ScalarField::constant(g, 2.0);
        assert!((f.mass() - 2.0 * 9.0 * 0.25).abs() < 1e-15);
    }
}
