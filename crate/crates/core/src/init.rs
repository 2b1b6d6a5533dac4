//! Initial state: a truncated Gaussian tumour at the domain centre, a
//! patterned matrix split between its diffuse and fibre phases, a virus
//! injection inside the tumour, and no infected cells yet.

use crate::error::{Error, Result};
use crate::fibres::FibreLayer;
use crate::grid::{Grid, ScalarField, TumourRegion};
use crate::macroscale::MacroFields;

/// Discrete mollifier: normalised bump samples on grid offsets strictly
/// inside `radius`. A radius below the spacing leaves a single unit tap, so
/// smoothing degenerates to the identity on under-resolved grids.
#[derive(Clone, Debug)]
pub struct Mollifier {
    taps: Vec<(i32, i32, f64)>,
    radius: f64,
}

impl Mollifier {
    pub fn new(radius: f64, spacing: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Grid(format!(
                "mollifier radius must be positive, got {radius}"
            )));
        }
        let reach = (radius / spacing).ceil() as i32;
        let mut taps = Vec::new();
        let mut total = 0.0;
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let x = di as f64 * spacing / radius;
                let y = dj as f64 * spacing / radius;
                let r2 = x * x + y * y;
                if r2 >= 1.0 {
                    continue;
                }
                let w = (1.0 / (r2 - 1.0)).exp();
                taps.push((di, dj, w));
                total += w;
            }
        }
        for t in &mut taps {
            t.2 /= total;
        }
        Ok(Self { taps, radius })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    #[inline]
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Convolves the field with the taps; taps falling off the grid are
    /// dropped and the remaining weights renormalised, so constants pass
    /// through unchanged at the frame too.
    pub fn apply(&self, grid: Grid, values: &[f64]) -> Vec<f64> {
        if self.taps.len() == 1 {
            return values.to_vec();
        }
        let n = grid.n() as i32;
        let mut out = vec![0.0; values.len()];
        crate::parallel::fill_indexed(&mut out, |k| {
            let ci = (k as i32) % n;
            let cj = (k as i32) / n;
            let mut acc = 0.0;
            let mut used = 0.0;
            for &(di, dj, w) in &self.taps {
                let i = ci + di;
                let j = cj + dj;
                if i < 0 || j < 0 || i >= n || j >= n {
                    continue;
                }
                acc += w * values[(j * n + i) as usize];
                used += w;
            }
            acc / used
        });
        out
    }
}

pub struct InitOptions {
    pub grid: Grid,
    /// Share of the matrix held by the fibre phase.
    pub fibre_ratio: f64,
    pub micro_cells: usize,
    pub sigma: f64,
    pub f_max_override: Option<f64>,
    pub mollifier_radius: f64,
}

pub struct InitialState {
    pub fields: MacroFields,
    pub region: TumourRegion,
    pub fibres: FibreLayer,
}

/// Builds the four macro fields, the tumour mask, and the fibre lattices.
pub fn init_state(opts: &InitOptions) -> Result<InitialState> {
    let grid = opts.grid;
    if !(0.0..=1.0).contains(&opts.fibre_ratio) {
        return Err(Error::Grid(format!(
            "fibre ratio must lie in [0, 1], got {}",
            opts.fibre_ratio
        )));
    }
    let h = grid.spacing();
    let ctr = grid.center();
    let mol = Mollifier::new(opts.mollifier_radius, h)?;
    let gamma = opts.mollifier_radius;

    // Tumour bump: a Gaussian shifted to zero at radius sqrt(6.125 h),
    // cut by the smoothed indicator of a disc just inside radius one half,
    // and floored at zero.
    let ball = ScalarField::from_fn(grid, |p| {
        let dx = p[0] - ctr[0];
        let dy = p[1] - ctr[1];
        let r = (dx * dx + dy * dy).sqrt();
        if r <= 0.5 - gamma {
            1.0
        } else {
            0.0
        }
    });
    let ind = mol.apply(grid, ball.values());
    let mut c = ScalarField::from_fn(grid, |p| {
        let dx = p[0] - ctr[0];
        let dy = p[1] - ctr[1];
        0.5 * ((-(dx * dx + dy * dy) / (2.0 * h)).exp() - (-3.0625f64).exp())
    });
    for (cv, &iv) in c.values_mut().iter_mut().zip(&ind) {
        *cv = (*cv * iv).max(0.0);
    }

    let mask: Vec<bool> = c.values().iter().map(|&v| v > 0.0).collect();
    let region = TumourRegion::from_mask(grid, mask)?;

    // Matrix: a wavy pattern capped so cells and matrix never overfill a
    // node, split between the diffuse and fibre phases.
    let c_vals = c.values().to_vec();
    let mut base = vec![0.0; grid.nodes()];
    for (k, slot) in base.iter_mut().enumerate() {
        let p = grid.pos_of(k);
        let z1 = (p[0] + 1.5) / 3.0;
        let z2 = (p[1] + 1.5) / 3.0;
        let s = (7.0 * std::f64::consts::PI * z1 * z2).sin();
        let pat = 0.5 + 0.25 * s * s * s * (7.0 * std::f64::consts::PI * z2 / z1).sin();
        *slot = 0.5 * pat.min(1.0 - c_vals[k]);
    }
    let ecm = ScalarField::from_values(
        grid,
        base.iter().map(|&b| (1.0 - opts.fibre_ratio) * b).collect(),
    )?;
    let fibre_target: Vec<f64> = base.iter().map(|&b| opts.fibre_ratio * b).collect();
    let fibres = FibreLayer::seeded(
        grid,
        opts.micro_cells,
        opts.sigma,
        &fibre_target,
        opts.f_max_override,
    )?;

    // Virus injection: a smaller bump strictly inside the tumour, cut off
    // where it drops under 5e-5 and smoothed.
    let raw_v = ScalarField::from_fn(grid, |p| {
        let dx = p[0] - ctr[0];
        let dy = p[1] - ctr[1];
        let phi = 0.125 * ((-(dx * dx + dy * dy) / (2.0 * h)).exp() - (-1.6625f64).exp());
        if phi > 5e-5 {
            phi
        } else {
            0.0
        }
    });
    let v = ScalarField::from_values(grid, mol.apply(grid, raw_v.values()))?;

    let fields = MacroFields {
        i: ScalarField::zeros(grid),
        ecm,
        v,
        c,
    };
    Ok(InitialState {
        fields,
        region,
        fibres,
    })
}
