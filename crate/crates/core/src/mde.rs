//! Matrix-degrading-enzyme microscale on the tumour boundary.
//!
//! Every boundary node carries a square patch of half-width `eps` holding a
//! fine lattice. Enzyme is sourced on the lattice nodes that sit inside the
//! tumour, diffuses over the patch for one macro stage, and the mass that
//! ends up outside decides whether and how far the interface advances
//! there.

use crate::banded::BandedCholesky;
use crate::error::{Error, Result};
use crate::grid::{Grid, TumourRegion};

/// One enzyme patch, centred on a tumour boundary node.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryPatch {
    pub center_node: usize,
    pub center: [f64; 2],
}

/// The set of patches covering the boundary, one per boundary node in
/// row-major order, plus the shared lattice geometry.
#[derive(Clone, Debug)]
pub struct BoundaryBundle {
    pub patches: Vec<BoundaryPatch>,
    pub nodes_per_side: usize,
    pub half_width: f64,
    pub micro_spacing: f64,
}

impl BoundaryBundle {
    #[inline]
    pub fn lattice_len(&self) -> usize {
        self.nodes_per_side * self.nodes_per_side
    }

    /// Physical offset of micro node `(a, b)` from the patch centre.
    #[inline]
    pub fn offset(&self, a: usize, b: usize) -> [f64; 2] {
        let half = (self.nodes_per_side - 1) as f64 * 0.5;
        [
            (a as f64 - half) * self.micro_spacing,
            (b as f64 - half) * self.micro_spacing,
        ]
    }
}

/// Builds one patch per boundary node of the region.
pub fn cover_boundary(region: &TumourRegion, eps: f64, p: usize) -> Result<BoundaryBundle> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Grid(format!("patch half-width must be positive, got {eps}")));
    }
    if p < 3 {
        return Err(Error::Grid(format!("patch lattice needs at least 3 nodes per side, got {p}")));
    }
    let grid = region.grid();
    let patches = region
        .boundary()
        .iter()
        .map(|&k| BoundaryPatch {
            center_node: k,
            center: grid.pos_of(k),
        })
        .collect();
    Ok(BoundaryBundle {
        patches,
        nodes_per_side: p,
        half_width: eps,
        micro_spacing: 2.0 * eps / (p - 1) as f64,
    })
}

/// Nearest grid index along one axis for coordinate `t` (in index units).
/// Exact half-way ties resolve away from `anchor`, then away from the grid
/// centre, so symmetric states snap symmetrically.
fn snap_axis(t: f64, anchor: f64, n: usize) -> Option<usize> {
    let k = t.floor();
    let frac = t - k;
    let cand = if frac < 0.5 {
        k
    } else if frac > 0.5 {
        k + 1.0
    } else {
        let d0 = (k - anchor).abs();
        let d1 = (k + 1.0 - anchor).abs();
        if d1 > d0 {
            k + 1.0
        } else if d0 > d1 {
            k
        } else {
            let mid = (n as f64 - 1.0) * 0.5;
            if (k + 1.0 - mid).abs() >= (k - mid).abs() {
                k + 1.0
            } else {
                k
            }
        }
    };
    if cand < 0.0 || cand > (n - 1) as f64 {
        None
    } else {
        Some(cand as usize)
    }
}

/// Macro node a point snaps to, with ties broken away from `anchor`.
pub fn snap_to_grid(grid: Grid, p: [f64; 2], anchor: [f64; 2]) -> Option<usize> {
    let h = grid.spacing();
    let i = snap_axis(p[0] / h, anchor[0] / h, grid.n())?;
    let j = snap_axis(p[1] / h, anchor[1] / h, grid.n())?;
    Some(grid.idx(i, j))
}

/// Flags each micro node of a patch as inside the tumour (its snapped macro
/// node is on the grid and in the mask), row major over the lattice.
pub fn micro_inside_flags(
    bundle: &BoundaryBundle,
    patch: &BoundaryPatch,
    grid: Grid,
    mask: &[bool],
) -> Vec<bool> {
    let p = bundle.nodes_per_side;
    let mut flags = Vec::with_capacity(p * p);
    for b in 0..p {
        for a in 0..p {
            let o = bundle.offset(a, b);
            let z = [patch.center[0] + o[0], patch.center[1] + o[1]];
            let inside = snap_to_grid(grid, z, patch.center)
                .map(|k| mask[k])
                .unwrap_or(false);
            flags.push(inside);
        }
    }
    flags
}

/// Macro fields the enzyme source reads.
pub struct SourceInputs<'a> {
    pub grid: Grid,
    pub mask: &'a [bool],
    pub c: &'a [f64],
    pub i: &'a [f64],
    pub weight_c: f64,
    pub weight_i: f64,
    /// Chebyshev radius of the averaging ball around each micro node.
    pub ball_radius: f64,
}

/// Enzyme production per micro node: the mean of the weighted cell
/// densities over tumour nodes within the averaging ball, zero at micro
/// nodes outside the tumour. Held constant over the stage.
pub fn mde_source(
    bundle: &BoundaryBundle,
    patch: &BoundaryPatch,
    inside: &[bool],
    inp: &SourceInputs<'_>,
) -> Vec<f64> {
    let p = bundle.nodes_per_side;
    let h = inp.grid.spacing();
    let n = inp.grid.n() as i64;
    let reach = (inp.ball_radius / h + 1e-9).floor() as i64;
    let lim = inp.ball_radius * (1.0 + 1e-12);
    let mut g = Vec::with_capacity(p * p);
    for b in 0..p {
        for a in 0..p {
            let k = b * p + a;
            if !inside[k] {
                g.push(0.0);
                continue;
            }
            let o = bundle.offset(a, b);
            let z = [patch.center[0] + o[0], patch.center[1] + o[1]];
            let ci = (z[0] / h).round() as i64;
            let cj = (z[1] / h).round() as i64;
            let mut sum = 0.0;
            let mut count = 0usize;
            for jj in (cj - reach - 1).max(0)..=(cj + reach + 1).min(n - 1) {
                for ii in (ci - reach - 1).max(0)..=(ci + reach + 1).min(n - 1) {
                    let dx = (ii as f64 * h - z[0]).abs();
                    let dy = (jj as f64 * h - z[1]).abs();
                    if dx > lim || dy > lim {
                        continue;
                    }
                    let kk = (jj * n + ii) as usize;
                    if !inp.mask[kk] {
                        continue;
                    }
                    sum += inp.weight_c * inp.c[kk] + inp.weight_i * inp.i[kk];
                    count += 1;
                }
            }
            g.push(if count > 0 { sum / count as f64 } else { 0.0 });
        }
    }
    g
}

/// Implicit diffusion of enzyme over one macro stage: backward Euler with a
/// zero-flux lattice Laplacian, factored once and reused for every patch.
pub struct MdeSolver {
    p: usize,
    dt: f64,
    substeps: usize,
    chol: BandedCholesky,
}

impl MdeSolver {
    pub fn new(
        p: usize,
        micro_spacing: f64,
        diffusion: f64,
        stage_dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::Solver("enzyme stage needs at least one substep".into()));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite()) {
            return Err(Error::Solver(format!(
                "enzyme diffusion must be non-negative, got {diffusion}"
            )));
        }
        let dt = stage_dt / substeps as f64;
        let r = dt * diffusion / (micro_spacing * micro_spacing);
        let nodes = p * p;
        let stride = p + 1;
        let mut band = vec![0.0; nodes * stride];
        for b in 0..p {
            for a in 0..p {
                let k = b * p + a;
                let mut deg = 0.0;
                if a > 0 {
                    deg += 1.0;
                    band[k * stride + 1] = -r;
                }
                if a + 1 < p {
                    deg += 1.0;
                }
                if b > 0 {
                    deg += 1.0;
                    band[k * stride + p] = -r;
                }
                if b + 1 < p {
                    deg += 1.0;
                }
                band[k * stride] = 1.0 + r * deg;
            }
        }
        let chol = BandedCholesky::factor(nodes, p, &band)?;
        Ok(Self { p, dt, substeps, chol })
    }

    #[inline]
    pub fn lattice_len(&self) -> usize {
        self.p * self.p
    }

    /// Evolves enzyme from zero under the frozen source `g`, returning the
    /// lattice values at the end of the stage. The implicit operator has
    /// unit row sums, so total enzyme grows by exactly `dt * sum(g)` per
    /// substep.
    pub fn evolve(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.lattice_len(), "source length mismatch");
        let mut m = vec![0.0; g.len()];
        let mut rhs = vec![0.0; g.len()];
        for _ in 0..self.substeps {
            for k in 0..g.len() {
                rhs[k] = m[k] + self.dt * g[k];
            }
            self.chol.solve_into(&mut rhs);
            std::mem::swap(&mut m, &mut rhs);
        }
        m
    }
}

/// Where and how far one patch pushes the interface.
#[derive(Clone, Copy, Debug)]
pub struct Relocation {
    pub node: usize,
    pub direction: [f64; 2],
    pub displacement: f64,
    pub active: bool,
    pub outside_fraction: f64,
}

/// Reads the evolved enzyme of one patch: the interface moves along the
/// first moment of the mass that escaped the tumour, by `kappa` times the
/// escaped fraction of the patch half-width, provided that fraction clears
/// the activation threshold.
pub fn boundary_relocation(
    bundle: &BoundaryBundle,
    patch: &BoundaryPatch,
    m: &[f64],
    inside: &[bool],
    kappa: f64,
    threshold: f64,
) -> Relocation {
    let p = bundle.nodes_per_side;
    let mut total = 0.0;
    let mut outside = 0.0;
    let mut moment = [0.0f64; 2];
    for b in 0..p {
        for a in 0..p {
            let k = b * p + a;
            let v = m[k];
            total += v;
            if !inside[k] {
                outside += v;
                let o = bundle.offset(a, b);
                moment[0] += v * o[0];
                moment[1] += v * o[1];
            }
        }
    }
    let inactive = Relocation {
        node: patch.center_node,
        direction: [0.0, 0.0],
        displacement: 0.0,
        active: false,
        outside_fraction: 0.0,
    };
    if !(total > 0.0) || !(outside > 0.0) {
        return inactive;
    }
    let frac = outside / total;
    let norm = (moment[0] * moment[0] + moment[1] * moment[1]).sqrt();
    if norm == 0.0 {
        return Relocation { outside_fraction: frac, ..inactive };
    }
    Relocation {
        node: patch.center_node,
        direction: [moment[0] / norm, moment[1] / norm],
        displacement: kappa * frac * bundle.half_width,
        active: outside > threshold * total,
        outside_fraction: frac,
    }
}

/// Applies the active relocations: every boundary node within a patch's
/// footprint sweeps along the patch direction in half-cell steps up to the
/// displacement, and the swept nodes join the tumour. Relocations whose
/// direction does not point toward the patch node's own outside
/// neighbours are ignored, so the mask only ever advances outward.
/// Collection happens against the pre-expansion boundary so patch order
/// cannot matter. Returns how many nodes were added.
pub fn expand_tumour(
    region: &mut TumourRegion,
    bundle: &BoundaryBundle,
    relocations: &[Relocation],
) -> Result<usize> {
    let grid = region.grid();
    let n = grid.n();
    let h = grid.spacing();
    let step = 0.5 * h;
    let reach = (bundle.half_width / h + 1e-9).floor() as i64;
    let boundary = region.boundary().to_vec();
    let mask = region.mask().to_vec();
    let outward = |k: usize| -> [f64; 2] {
        let (i, j) = grid.coords(k);
        let mut nx = 0.0;
        let mut ny = 0.0;
        if i + 1 < n && !mask[k + 1] {
            nx += 1.0;
        }
        if i > 0 && !mask[k - 1] {
            nx -= 1.0;
        }
        if j + 1 < n && !mask[k + n] {
            ny += 1.0;
        }
        if j > 0 && !mask[k - n] {
            ny -= 1.0;
        }
        [nx, ny]
    };
    let mut new_nodes = Vec::new();
    for r in relocations {
        if !r.active || !(r.displacement > 0.0) {
            continue;
        }
        let nrm = outward(r.node);
        if r.direction[0] * nrm[0] + r.direction[1] * nrm[1] <= 0.0 {
            continue;
        }
        let (ci, cj) = grid.coords(r.node);
        let anchor = grid.pos_of(r.node);
        let steps = (r.displacement / step + 1e-9).floor() as usize;
        for &bn in &boundary {
            let (bi, bj) = grid.coords(bn);
            if (bi as i64 - ci as i64).abs() > reach || (bj as i64 - cj as i64).abs() > reach {
                continue;
            }
            let start = grid.pos_of(bn);
            for s in 1..=steps {
                let d = s as f64 * step;
                let q = [start[0] + d * r.direction[0], start[1] + d * r.direction[1]];
                if let Some(k) = snap_to_grid(grid, q, anchor) {
                    new_nodes.push(k);
                }
            }
        }
    }
    region.expand(&new_nodes)
}
