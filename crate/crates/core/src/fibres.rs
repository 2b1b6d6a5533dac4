//! Oriented-fibre microscale.
//!
//! Each macro node owns a small square lattice of fibre mass. The lattice's
//! first moment defines the node's macroscopic fibre orientation and
//! magnitude; cell fluxes push lattice mass between neighbouring nodes,
//! reorienting the fibres, and cells degrade the mass where they sit.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::parallel;

#[inline]
pub fn norm2(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Blend of the cell flux and the current orientation that drives fibre
/// rearrangement: the flux wins where cells are plentiful, the existing
/// orientation where fibres dominate.
#[inline]
pub fn rearrangement_vector(flux: [f64; 2], theta: [f64; 2], cell_total: f64) -> [f64; 2] {
    let f = norm2(theta);
    let denom = cell_total + f;
    if denom <= 0.0 {
        return [0.0, 0.0];
    }
    let w = cell_total / denom;
    [
        w * flux[0] + (1.0 - w) * theta[0],
        w * flux[1] + (1.0 - w) * theta[1],
    ]
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RelocateReport {
    /// Transfers that targeted a different lattice cell.
    pub transfers: usize,
    /// Moves whose target domain was clamped to the neighbour ring or the
    /// grid edge.
    pub truncated: usize,
    /// Mass that actually changed cells after capacity saturation.
    pub moved_mass: f64,
}

#[derive(Clone, Debug)]
pub struct FibreLayer {
    grid: Grid,
    m: usize,
    sigma: f64,
    f_max: f64,
    /// Cell-centre offsets from the node along one axis.
    offsets: Vec<f64>,
    /// Lattice masses, node major then row major over the lattice.
    f: Vec<f64>,
    theta: Vec<[f64; 2]>,
    mag: Vec<f64>,
}

struct Transfer {
    src: usize,
    dst: usize,
    amount: f64,
}

impl FibreLayer {
    /// Seeds every node with the same two-strip lattice pattern, scaled so
    /// the node's mean lattice mass equals `target`. The strips sit off
    /// centre, so any node with mass also carries a nonzero orientation.
    pub fn seeded(
        grid: Grid,
        m: usize,
        sigma: f64,
        target: &[f64],
        f_max_override: Option<f64>,
    ) -> Result<Self> {
        if m < 5 {
            return Err(Error::Grid(format!(
                "fibre lattice needs at least 5 cells per side, got {m}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Grid(format!(
                "fibre lattice width must be positive, got {sigma}"
            )));
        }
        if target.len() != grid.nodes() {
            return Err(Error::Grid(format!(
                "fibre target length {} does not match the grid ({} nodes)",
                target.len(),
                grid.nodes()
            )));
        }
        if let Some(bad) = target.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::Grid(format!(
                "fibre targets must be non-negative and finite, got {bad}"
            )));
        }
        let offsets: Vec<f64> = (0..m)
            .map(|a| (a as f64 + 0.5) * sigma / m as f64 - 0.5 * sigma)
            .collect();
        // One vertical and one horizontal strip, each a sixth of the cell
        // wide, offset from the centre so the pattern has a first moment.
        let strip = sigma / 12.0;
        let pattern: Vec<f64> = (0..m * m)
            .map(|k| {
                let x = offsets[k % m];
                let y = offsets[k / m];
                let vertical = (x - sigma / 8.0).abs() <= strip;
                let horizontal = (y + sigma / 6.0).abs() <= strip;
                if vertical || horizontal {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let covered: f64 = pattern.iter().sum();
        if covered == 0.0 {
            return Err(Error::Grid(format!(
                "fibre strip pattern is empty at {m} cells per side"
            )));
        }
        let cells = m * m;
        let mut f = vec![0.0; grid.nodes() * cells];
        for (k, &t) in target.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let scale = t * cells as f64 / covered;
            for (z, &p) in pattern.iter().enumerate() {
                f[k * cells + z] = p * scale;
            }
        }
        let peak = f.iter().copied().fold(0.0f64, f64::max);
        let f_max = match f_max_override {
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                return Err(Error::Grid(format!(
                    "fibre capacity must be positive and finite, got {v}"
                )))
            }
            None if peak > 0.0 => 2.0 * peak,
            None => 1.0,
        };
        let mut layer = Self {
            grid,
            m,
            sigma,
            f_max,
            offsets,
            f,
            theta: vec![[0.0; 2]; grid.nodes()],
            mag: vec![0.0; grid.nodes()],
        };
        layer.refresh_orientations();
        Ok(layer)
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn cells_per_side(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn lattice_width(&self) -> f64 {
        self.sigma
    }

    #[inline]
    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    #[inline]
    pub fn orientations(&self) -> &[[f64; 2]] {
        &self.theta
    }

    #[inline]
    pub fn magnitudes(&self) -> &[f64] {
        &self.mag
    }

    /// Lattice masses of one node, row major.
    #[inline]
    pub fn micro(&self, node: usize) -> &[f64] {
        let cells = self.m * self.m;
        &self.f[node * cells..(node + 1) * cells]
    }

    #[inline]
    pub fn micro_mut(&mut self, node: usize) -> &mut [f64] {
        let cells = self.m * self.m;
        &mut self.f[node * cells..(node + 1) * cells]
    }

    /// Sum of all lattice masses; the conserved quantity under relocation.
    pub fn total_mass(&self) -> f64 {
        self.f.iter().sum()
    }

    fn orientation_of(&self, node: usize) -> ([f64; 2], f64) {
        let cells = self.m * self.m;
        let slice = &self.f[node * cells..(node + 1) * cells];
        let mut total = 0.0;
        let mut bar = [0.0f64; 2];
        for (z, &v) in slice.iter().enumerate() {
            total += v;
            bar[0] += v * self.offsets[z % self.m];
            bar[1] += v * self.offsets[z / self.m];
        }
        if total <= 0.0 {
            return ([0.0, 0.0], 0.0);
        }
        let nb = norm2(bar);
        if nb == 0.0 {
            return ([0.0, 0.0], 0.0);
        }
        let mean = total / cells as f64;
        let theta = [mean * bar[0] / nb, mean * bar[1] / nb];
        (theta, norm2(theta))
    }

    /// Recomputes every node's orientation and magnitude from the lattice.
    pub fn refresh_orientations(&mut self) {
        let results = parallel::map_slice(
            &(0..self.grid.nodes()).collect::<Vec<usize>>(),
            |&k| self.orientation_of(k),
        );
        for (k, (t, m)) in results.into_iter().enumerate() {
            self.theta[k] = t;
            self.mag[k] = m;
        }
    }

    /// Degrades fibre mass where cells sit, exponentially over `dt`. Nodes
    /// without cells are left bit-for-bit untouched.
    pub fn degrade(&mut self, c: &[f64], i: &[f64], alpha_cf: f64, alpha_if: f64, dt: f64) {
        let cells = self.m * self.m;
        for k in 0..self.grid.nodes() {
            let rate = alpha_cf * c[k] + alpha_if * i[k];
            if rate == 0.0 {
                continue;
            }
            let factor = (-rate * dt).exp();
            for v in &mut self.f[k * cells..(k + 1) * cells] {
                *v *= factor;
            }
            self.theta[k][0] *= factor;
            self.theta[k][1] *= factor;
            self.mag[k] = norm2(self.theta[k]);
        }
    }

    /// Moves lattice mass along the rearrangement field `r` for the listed
    /// nodes. Each cell proposes a move whose reach grows with its mass and
    /// shrinks with the mismatch between `r` and the cell's own offset;
    /// targets saturate at the lattice capacity and can only lie in the
    /// source node or its eight neighbours. Mass is conserved exactly and
    /// every cell stays within [0, f_max].
    pub fn relocate(&mut self, r: &[[f64; 2]], nodes: &[usize]) -> RelocateReport {
        let cells = self.m * self.m;
        let n = self.grid.n();
        let h = self.grid.spacing();
        let f_max = self.f_max;
        let pre = self.f.clone();
        let offsets = &self.offsets;
        let m = self.m;
        let sigma = self.sigma;
        let cell_w = sigma / m as f64;

        let per_node: Vec<(Vec<Transfer>, usize)> = parallel::map_slice(nodes, |&k| {
            let rk = r[k];
            let (ci, cj) = self.grid.coords(k);
            let base = self.grid.pos(ci, cj);
            let mut out = Vec::new();
            let mut truncated = 0usize;
            for z in 0..cells {
                let src = k * cells + z;
                let fz = pre[src];
                if fz <= 0.0 {
                    continue;
                }
                let cap = f_max - fz;
                if cap <= 0.0 {
                    continue;
                }
                let x_dir = [offsets[z % m], offsets[z / m]];
                let den = fz / f_max + norm2([rk[0] - x_dir[0], rk[1] - x_dir[1]]);
                let scale = fz * cap / den;
                let p = [
                    base[0] + x_dir[0] + (x_dir[0] + rk[0]) * scale,
                    base[1] + x_dir[1] + (x_dir[1] + rk[1]) * scale,
                ];
                let ti = (p[0] / h).round() as i64;
                let tj = (p[1] / h).round() as i64;
                let tic = ti.clamp(ci as i64 - 1, ci as i64 + 1).clamp(0, n as i64 - 1);
                let tjc = tj.clamp(cj as i64 - 1, cj as i64 + 1).clamp(0, n as i64 - 1);
                if tic != ti || tjc != tj {
                    truncated += 1;
                }
                let tnode = self.grid.idx(tic as usize, tjc as usize);
                let tpos = self.grid.pos_of(tnode);
                let la = (((p[0] - tpos[0]) + 0.5 * sigma) / cell_w).floor() as i64;
                let lb = (((p[1] - tpos[1]) + 0.5 * sigma) / cell_w).floor() as i64;
                let la = la.clamp(0, m as i64 - 1) as usize;
                let lb = lb.clamp(0, m as i64 - 1) as usize;
                let dst = tnode * cells + lb * m + la;
                if dst == src {
                    continue;
                }
                let amount = fz * ((f_max - pre[dst]) / f_max).max(0.0);
                if amount <= 0.0 {
                    continue;
                }
                out.push(Transfer { src, dst, amount });
            }
            (out, truncated)
        });

        let mut report = RelocateReport::default();
        for (transfers, truncated) in &per_node {
            report.truncated += truncated;
            for t in transfers {
                report.transfers += 1;
                let acc = t.amount.min(self.f[t.src]).min(f_max - self.f[t.dst]).max(0.0);
                self.f[t.src] -= acc;
                self.f[t.dst] = (self.f[t.dst] + acc).min(f_max);
                report.moved_mass += acc;
            }
        }
        self.refresh_orientations();
        report
    }
}
