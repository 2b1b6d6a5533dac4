//! Nonlocal cell adhesion: sensing-disc stencil, matrix-dependent bond
//! strength, and the resulting velocity field.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::parallel;

/// Bond strength as a function of the local matrix level, saturating at
/// `s_max` when the matrix is full. Levels are clamped to [0, 1]; at zero
/// matrix the exponent diverges to -inf and the strength underflows to
/// exactly 0.
#[inline]
pub fn adhesion_strength(matrix_level: f64, s_max: f64) -> f64 {
    if s_max == 0.0 {
        return 0.0;
    }
    let e = matrix_level.clamp(0.0, 1.0);
    if e >= 1.0 {
        return s_max;
    }
    let d = 1.0 - (1.0 - e) * (1.0 - e);
    s_max * (1.0 - 1.0 / d).exp()
}

/// Radial interaction kernel on the sensing disc, linearly decaying and
/// normalised to unit continuum mass over the disc of radius `radius`.
#[inline]
pub fn kernel(r: f64, radius: f64) -> f64 {
    if r > radius {
        return 0.0;
    }
    3.0 / (2.0 * std::f64::consts::PI * radius * radius) * (1.0 - r / (2.0 * radius))
}

/// Direction a cell at offset `y` is pulled toward when bonds form along
/// fibres with macroscopic orientation `theta`. Zero offset gives no pull.
#[inline]
pub fn fibre_biased_direction(y: [f64; 2], theta: [f64; 2]) -> [f64; 2] {
    if y[0] == 0.0 && y[1] == 0.0 {
        return [0.0, 0.0];
    }
    let s = [y[0] + theta[0], y[1] + theta[1]];
    let norm = (s[0] * s[0] + s[1] * s[1]).sqrt();
    if norm == 0.0 {
        return [0.0, 0.0];
    }
    [s[0] / norm, s[1] / norm]
}

#[derive(Clone, Copy, Debug)]
pub struct StencilOffset {
    pub di: i32,
    pub dj: i32,
    /// Quadrature weight, kernel value times cell area after renormalising
    /// the stencil to unit discrete mass.
    pub weight: f64,
    /// Unit vector from the centre node toward the sample, zero at the
    /// centre itself.
    pub dir: [f64; 2],
    /// Physical offset of the sample.
    pub y: [f64; 2],
}

/// Discretisation of the sensing disc on the grid. Weights are midpoint
/// samples of the kernel renormalised so they sum to exactly one, which
/// keeps the sensed average of a constant field equal to that constant at
/// any resolution.
#[derive(Clone, Debug)]
pub struct SensingStencil {
    radius: f64,
    spacing: f64,
    offsets: Vec<StencilOffset>,
    raw_mass: f64,
    reach: i32,
}

impl SensingStencil {
    pub fn build(radius: f64, spacing: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) || !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Grid(format!(
                "sensing radius {radius} and spacing {spacing} must be positive and finite"
            )));
        }
        if radius < spacing {
            return Err(Error::UnderResolvedStencil { radius, spacing });
        }
        let reach = (radius / spacing).ceil() as i32;
        let area = spacing * spacing;
        let lim = radius * (1.0 + 1e-12);
        let mut offsets = Vec::new();
        let mut raw_mass = 0.0;
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let y = [di as f64 * spacing, dj as f64 * spacing];
                let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
                if r > lim {
                    continue;
                }
                let w = kernel(r.min(radius), radius) * area;
                let dir = if r == 0.0 {
                    [0.0, 0.0]
                } else {
                    [y[0] / r, y[1] / r]
                };
                offsets.push(StencilOffset {
                    di,
                    dj,
                    weight: w,
                    dir,
                    y,
                });
                raw_mass += w;
            }
        }
        for o in &mut offsets {
            o.weight /= raw_mass;
        }
        Ok(Self {
            radius,
            spacing,
            offsets,
            raw_mass,
            reach,
        })
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    #[inline]
    pub fn offsets(&self) -> &[StencilOffset] {
        &self.offsets
    }

    /// Quadrature mass before renormalisation; a resolution diagnostic.
    #[inline]
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    #[inline]
    pub fn reach(&self) -> i32 {
        self.reach
    }
}

/// Bond strengths for one population sensing its surroundings.
#[derive(Clone, Copy, Debug)]
pub struct AdhesionStrengths {
    /// Same-population bond ceiling (matrix dependent).
    pub self_cell: f64,
    /// Other-population bond ceiling (matrix dependent).
    pub cross_cell: f64,
    /// Constant cell-matrix strength.
    pub matrix: f64,
    /// Constant cell-fibre strength.
    pub fibre: f64,
}

/// Fields the flux evaluation reads. Slices are full-grid, row major.
pub struct FluxInputs<'a> {
    pub grid: Grid,
    pub mask: &'a [bool],
    pub self_density: &'a [f64],
    pub other_density: &'a [f64],
    pub matrix: &'a [f64],
    pub fibre_mag: &'a [f64],
    pub fibre_dir: &'a [[f64; 2]],
    pub packing: &'a [f64],
}

/// Adhesion velocity at every node: masked samples of available room times
/// attraction, steered radially and along fibres, summed over the sensing
/// disc and scaled by 1/R. Samples outside the tumour mask or the grid
/// contribute nothing.
pub fn eval_adhesion_flux(
    stencil: &SensingStencil,
    input: &FluxInputs<'_>,
    s: AdhesionStrengths,
    out: &mut [[f64; 2]],
) {
    let n = input.grid.n() as i32;
    let nodes = input.grid.nodes();

    // Per-node factors of the integrand, zero off the mask so skipped
    // samples and masked samples coincide.
    let mut attract = vec![0.0; nodes];
    let mut fibre = vec![0.0; nodes];
    parallel::fill_indexed(&mut attract, |k| {
        if !input.mask[k] {
            return 0.0;
        }
        let room = (1.0 - input.packing[k]).max(0.0);
        let e = input.matrix[k];
        room * (adhesion_strength(e, s.self_cell) * input.self_density[k]
            + adhesion_strength(e, s.cross_cell) * input.other_density[k]
            + s.matrix * e)
    });
    parallel::fill_indexed(&mut fibre, |k| {
        if !input.mask[k] {
            return 0.0;
        }
        (1.0 - input.packing[k]).max(0.0) * s.fibre * input.fibre_mag[k]
    });

    let inv_r = 1.0 / stencil.radius();
    let offsets = stencil.offsets();
    parallel::fill_indexed(out, |k| {
        let ci = (k % input.grid.n()) as i32;
        let cj = (k / input.grid.n()) as i32;
        let mut acc = [0.0; 2];
        for o in offsets {
            let i = ci + o.di;
            let j = cj + o.dj;
            if i < 0 || j < 0 || i >= n || j >= n {
                continue;
            }
            let kk = (j * n + i) as usize;
            let a = attract[kk];
            let f = fibre[kk];
            if a == 0.0 && f == 0.0 {
                continue;
            }
            let w = o.weight;
            if a != 0.0 {
                acc[0] += w * a * o.dir[0];
                acc[1] += w * a * o.dir[1];
            }
            if f != 0.0 {
                let nd = fibre_biased_direction(o.y, input.fibre_dir[kk]);
                acc[0] += w * f * nd[0];
                acc[1] += w * f * nd[1];
            }
        }
        [acc[0] * inv_r, acc[1] * inv_r]
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strength_saturates_and_vanishes() {
        assert_eq!(adhesion_strength(1.0, 0.3), 0.3);
        assert_eq!(adhesion_strength(0.0, 0.3), 0.0);
        assert_eq!(adhesion_strength(-0.5, 0.3), 0.0);
        assert_eq!(adhesion_strength(2.0, 0.3), 0.3);
        assert_eq!(adhesion_strength(0.7, 0.0), 0.0);
    }

    #[test]
    fn strength_midpoint_value() {
        // exp(1 - 1/(1 - 0.25)) = exp(-1/3)
        let got = adhesion_strength(0.5, 1.0);
        assert!((got - 0.716_531_310_573_789_3).abs() < 1e-15);
    }

    #[test]
    fn strength_is_monotone() {
        let mut prev = adhesion_strength(0.0, 1.0);
        for k in 1..=1000 {
            let cur = adhesion_strength(k as f64 / 1000.0, 1.0);
            assert!(cur >= prev, "dip at {k}");
            prev = cur;
        }
    }

    #[test]
    fn kernel_peak_and_cutoff() {
        let r = 0.15;
        let peak = 3.0 / (2.0 * std::f64::consts::PI * r * r);
        assert!((kernel(0.0, r) - peak).abs() < 1e-12);
        assert!((kernel(0.0, r) - 21.220_659_078_919_38).abs() < 1e-10);
        assert!((kernel(r, r) - 0.5 * peak).abs() < 1e-12);
        assert_eq!(kernel(r * 1.01, r), 0.0);
    }

    #[test]
    fn stencil_weights_sum_to_one() {
        for &(r, h) in &[(0.15, 0.03125), (0.1, 0.0125), (0.3, 0.0375)] {
            let s = SensingStencil::build(r, h).unwrap();
            let total: f64 = s.offsets().iter().map(|o| o.weight).sum();
            assert!((total - 1.0).abs() < 1e-12, "r={r} h={h}: {total}");
            // Raw midpoint quadrature is itself close to one.
            assert!((s.raw_mass() - 1.0).abs() < 0.05, "raw {}", s.raw_mass());
        }
    }

    #[test]
    fn stencil_rejects_coarse_grids() {
        assert!(matches!(
            SensingStencil::build(0.1, 0.25),
            Err(Error::UnderResolvedStencil { .. })
        ));
    }

    #[test]
    fn stencil_is_symmetric() {
        let s = SensingStencil::build(0.15, 0.03125).unwrap();
        let mut by_key: std::collections::BTreeMap<(i32, i32), f64> = Default::default();
        for o in s.offsets() {
            by_key.insert((o.di, o.dj), o.weight);
        }
        for (&(di, dj), &w) in &by_key {
            assert_eq!(by_key.get(&(-di, -dj)), Some(&w));
            assert_eq!(by_key.get(&(dj, di)), Some(&w));
        }
    }

    #[test]
    fn fibre_direction_handles_degenerate_inputs() {
        assert_eq!(fibre_biased_direction([0.0, 0.0], [1.0, 0.0]), [0.0, 0.0]);
        assert_eq!(fibre_biased_direction([1.0, 0.0], [-1.0, 0.0]), [0.0, 0.0]);
        let d = fibre_biased_direction([1.0, 0.0], [0.0, 1.0]);
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
        assert!((norm - 1.0).abs() < 1e-15);
        assert!((d[0] - d[1]).abs() < 1e-15);
    }

    /// Uniform density, full matrix, no fibres: attraction is isotropic so
    /// the interior flux cancels to rounding noise.
    #[test]
    fn uniform_state_gives_no_interior_flux() {
        let grid = Grid::new(1.0, 0.05).unwrap();
        let stencil = SensingStencil::build(0.2, 0.05).unwrap();
        let nodes = grid.nodes();
        let mask = vec![true; nodes];
        let c = vec![0.3; nodes];
        let zero = vec![0.0; nodes];
        let e = vec![0.5; nodes];
        let dirs = vec![[0.0, 0.0]; nodes];
        let packing: Vec<f64> = c.iter().map(|&x| x + 0.5).collect();
        let mut out = vec![[0.0; 2]; nodes];
        eval_adhesion_flux(
            &stencil,
            &FluxInputs {
                grid,
                mask: &mask,
                self_density: &c,
                other_density: &zero,
                matrix: &e,
                fibre_mag: &zero,
                fibre_dir: &dirs,
                packing: &packing,
            },
            AdhesionStrengths {
                self_cell: 0.1,
                cross_cell: 0.0,
                matrix: 0.5,
                fibre: 0.2,
            },
            &mut out,
        );
        let reach = stencil.reach() as usize;
        for j in reach..grid.n() - reach {
            for i in reach..grid.n() - reach {
                let v = out[grid.idx(i, j)];
                assert!(v[0].abs() < 1e-13 && v[1].abs() < 1e-13, "({i},{j}): {v:?}");
            }
        }
        // Near the frame, missing samples leave a net inward pull.
        let edge = out[grid.idx(0, grid.n() / 2)];
        assert!(edge[0] > 1e-3);
    }

    /// A density step along x pulls cells toward the dense side.
    #[test]
    fn flux_points_up_density_gradients() {
        let grid = Grid::new(1.0, 0.05).unwrap();
        let stencil = SensingStencil::build(0.2, 0.05).unwrap();
        let nodes = grid.nodes();
        let mask = vec![true; nodes];
        let c: Vec<f64> = (0..nodes)
            .map(|k| if k % grid.n() >= grid.n() / 2 { 0.6 } else { 0.1 })
            .collect();
        let zero = vec![0.0; nodes];
        let e = vec![1.0; nodes];
        let dirs = vec![[0.0, 0.0]; nodes];
        let mut out = vec![[0.0; 2]; nodes];
        eval_adhesion_flux(
            &stencil,
            &FluxInputs {
                grid,
                mask: &mask,
                self_density: &c,
                other_density: &zero,
                matrix: &e,
                fibre_mag: &zero,
                fibre_dir: &dirs,
                packing: &c,
            },
            AdhesionStrengths {
                self_cell: 0.1,
                cross_cell: 0.0,
                matrix: 0.0,
                fibre: 0.0,
            },
            &mut out,
        );
        let mid = grid.n() / 2;
        let v = out[grid.idx(mid - 2, mid)];
        assert!(v[0] > 0.0, "expected pull toward the dense side, got {v:?}");
        assert!(v[1].abs() < 1e-12);
    }

    /// Fibres laid along +x steer the fibre term even where the cell term
    /// cancels.
    #[test]
    fn fibre_term_follows_orientation() {
        let grid = Grid::new(1.0, 0.05).unwrap();
        let stencil = SensingStencil::build(0.2, 0.05).unwrap();
        let nodes = grid.nodes();
        let mask = vec![true; nodes];
        let zero = vec![0.0; nodes];
        let f_mag = vec![0.4; nodes];
        let dirs = vec![[1.0, 0.0]; nodes];
        let mut out = vec![[0.0; 2]; nodes];
        eval_adhesion_flux(
            &stencil,
            &FluxInputs {
                grid,
                mask: &mask,
                self_density: &zero,
                other_density: &zero,
                matrix: &zero,
                fibre_mag: &f_mag,
                fibre_dir: &dirs,
                packing: &zero,
            },
            AdhesionStrengths {
                self_cell: 0.0,
                cross_cell: 0.0,
                matrix: 0.0,
                fibre: 0.2,
            },
            &mut out,
        );
        let mid = grid.n() / 2;
        let v = out[grid.idx(mid, mid)];
        assert!(v[0] > 1e-4, "expected drift along the fibres, got {v:?}");
        assert!(v[1].abs() < 1e-12);
    }

    /// Masked-out samples contribute nothing: flux with a half mask equals
    /// flux with the other half's densities zeroed.
    #[test]
    fn mask_matches_zeroed_densities() {
        let grid = Grid::new(1.0, 0.05).unwrap();
        let stencil = SensingStencil::build(0.2, 0.05).unwrap();
        let nodes = grid.nodes();
        let half_mask: Vec<bool> = (0..nodes).map(|k| k % grid.n() < grid.n() / 2).collect();
        let c: Vec<f64> = (0..nodes).map(|k| 0.1 + 0.3 * (k % 7) as f64 / 7.0).collect();
        let e = vec![0.8; nodes];
        let zero = vec![0.0; nodes];
        let dirs = vec![[0.0, 0.0]; nodes];
        let strengths = AdhesionStrengths {
            self_cell: 0.1,
            cross_cell: 0.05,
            matrix: 0.5,
            fibre: 0.0,
        };

        let mut with_mask = vec![[0.0; 2]; nodes];
        eval_adhesion_flux(
            &stencil,
            &FluxInputs {
                grid,
                mask: &half_mask,
                self_density: &c,
                other_density: &c,
                matrix: &e,
                fibre_mag: &zero,
                fibre_dir: &dirs,
                packing: &c,
            },
            strengths,
            &mut with_mask,
        );

        // The masked evaluation also zeroes the matrix term off-mask, so
        // zero every per-node factor outside the mask for the comparison.
        let c2: Vec<f64> = c
            .iter()
            .zip(&half_mask)
            .map(|(&x, &m)| if m { x } else { 0.0 })
            .collect();
        let e2: Vec<f64> = e
            .iter()
            .zip(&half_mask)
            .map(|(&x, &m)| if m { x } else { 0.0 })
            .collect();
        let full_mask = vec![true; nodes];
        let mut without_mask = vec![[0.0; 2]; nodes];
        eval_adhesion_flux(
            &stencil,
            &FluxInputs {
                grid,
                mask: &full_mask,
                self_density: &c2,
                other_density: &c2,
                matrix: &e2,
                fibre_mag: &zero,
                fibre_dir: &dirs,
                packing: &c2,
            },
            strengths,
            &mut without_mask,
        );

        for k in 0..nodes {
            assert!((with_mask[k][0] - without_mask[k][0]).abs() < 1e-15);
            assert!((with_mask[k][1] - without_mask[k][1]).abs() < 1e-15);
        }
    }
}
