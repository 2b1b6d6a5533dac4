//! Macroscale dynamics: the coupled fields for uninfected cells, infected
//! cells, diffuse matrix, and virus, advanced stage by stage with an
//! explicit midpoint scheme over adaptively chosen substeps.

use serde::{Deserialize, Serialize};

use crate::adhesion::{eval_adhesion_flux, AdhesionStrengths, FluxInputs, SensingStencil};
use crate::error::{Error, Result};
use crate::grid::{
    gradient_slice_into, laplacian_masked_slice_into, Grid, ScalarField, TumourRegion,
};
use crate::parallel;

/// Model coefficients plus the stage geometry. Field names follow the
/// roles: `d_*` diffusion, `eta_*` matrix-gradient drift, `s_*` adhesion
/// strengths (first letter the moving population, second what it binds
/// to), `alpha_*` matrix degradation, `varrho` the infection rate, `b` the
/// burst rate of new virions, `delta_*` decay, `nu_*` volume-fraction
/// weights, `gamma_*` enzyme production, `d_m` enzyme diffusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterSet {
    pub d_c: f64,
    pub d_i: f64,
    pub d_v: f64,
    pub eta_i: f64,
    pub eta_v: f64,
    pub mu_1: f64,
    pub mu_2: f64,
    pub s_cc: f64,
    pub s_ci: f64,
    pub s_ic: f64,
    pub s_ii: f64,
    pub s_ce: f64,
    pub s_ie: f64,
    pub s_cf: f64,
    pub s_if: f64,
    pub alpha_c: f64,
    pub alpha_i: f64,
    pub alpha_cf: f64,
    pub alpha_if: f64,
    pub varrho: f64,
    pub delta_i: f64,
    pub delta_v: f64,
    pub b: f64,
    pub nu_e: f64,
    pub nu_c: f64,
    pub gamma_c: f64,
    pub gamma_i: f64,
    pub d_m: f64,
    pub fibre_ratio: f64,
    pub sensing_radius: f64,
    pub stage_dt: f64,
    pub stages: usize,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self {
            d_c: 0.00035,
            d_i: 0.0054,
            d_v: 0.0036,
            eta_i: 0.0285,
            eta_v: 0.0285,
            mu_1: 0.5,
            mu_2: 0.0,
            s_cc: 0.1,
            s_ci: 0.0,
            s_ic: 0.0,
            s_ii: 0.1,
            s_ce: 0.5,
            s_ie: 0.5,
            s_cf: 0.2,
            s_if: 0.2,
            alpha_c: 0.15,
            alpha_i: 0.075,
            alpha_cf: 0.75,
            alpha_if: 0.75,
            varrho: 0.079,
            delta_i: 0.05,
            delta_v: 0.025,
            b: 20.0,
            nu_e: 1.0,
            nu_c: 1.0,
            gamma_c: 1.0,
            gamma_i: 1.5,
            d_m: 0.0025,
            fibre_ratio: 0.2,
            sensing_radius: 0.15,
            stage_dt: 0.5,
            stages: 75,
        }
    }
}

/// How infected cells move: down the matrix gradient, or by the same
/// nonlocal adhesion sampling the uninfected cells use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InfectedFlux {
    #[default]
    Local,
    Nonlocal,
}

/// The four macroscale fields. Cell densities are zero outside the tumour
/// mask; matrix and virus live on the whole grid.
#[derive(Clone, Debug)]
pub struct MacroFields {
    pub c: ScalarField,
    pub i: ScalarField,
    pub ecm: ScalarField,
    pub v: ScalarField,
}

impl MacroFields {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            c: ScalarField::zeros(grid),
            i: ScalarField::zeros(grid),
            ecm: ScalarField::zeros(grid),
            v: ScalarField::zeros(grid),
        }
    }
}

/// Occupied volume fraction: cells plus both matrix phases.
pub fn volume_fraction(
    c: &[f64],
    i: &[f64],
    ecm: &[f64],
    fibre_mag: &[f64],
    nu_e: f64,
    nu_c: f64,
    out: &mut [f64],
) {
    parallel::fill_indexed(out, |k| {
        nu_c * (c[k] + i[k]) + nu_e * (ecm[k] + fibre_mag[k])
    });
}

#[derive(Clone, Debug)]
pub struct FieldDerivs {
    pub c: Vec<f64>,
    pub i: Vec<f64>,
    pub ecm: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldDerivs {
    pub fn zeros(nodes: usize) -> Self {
        Self {
            c: vec![0.0; nodes],
            i: vec![0.0; nodes],
            ecm: vec![0.0; nodes],
            v: vec![0.0; nodes],
        }
    }
}

/// Everything the right-hand side reads besides the fields themselves.
/// Fibre orientation and magnitude stay frozen across one macro stage.
pub struct MacroContext<'a> {
    pub region: &'a TumourRegion,
    pub params: &'a ParameterSet,
    pub mode: InfectedFlux,
    pub stencil: &'a SensingStencil,
    pub fibre_mag: &'a [f64],
    pub fibre_dir: &'a [[f64; 2]],
}

pub struct RhsScratch {
    et: Vec<f64>,
    rho: Vec<f64>,
    lap: Vec<f64>,
    div: Vec<f64>,
    grad_e: Vec<[f64; 2]>,
    vel_c: Vec<[f64; 2]>,
    vel_i: Vec<[f64; 2]>,
    full_mask: Vec<bool>,
}

impl RhsScratch {
    pub fn new(grid: Grid) -> Self {
        let nodes = grid.nodes();
        Self {
            et: vec![0.0; nodes],
            rho: vec![0.0; nodes],
            lap: vec![0.0; nodes],
            div: vec![0.0; nodes],
            grad_e: vec![[0.0; 2]; nodes],
            vel_c: vec![[0.0; 2]; nodes],
            vel_i: vec![[0.0; 2]; nodes],
            full_mask: vec![true; nodes],
        }
    }
}

/// Conservative first-order upwind divergence of `u` advected by `scale *
/// vel`, with zero flux across faces that leave `mask` or the grid. Face
/// velocities average the two node velocities, so the flux leaving one cell
/// is bitwise the flux entering the next and interior mass telescopes.
pub fn upwind_divergence(
    grid: Grid,
    u: &[f64],
    vel: &[[f64; 2]],
    scale: f64,
    mask: &[bool],
    out: &mut [f64],
) {
    let n = grid.n();
    let inv_h = 1.0 / grid.spacing();
    parallel::fill_indexed(out, |k| {
        if !mask[k] {
            return 0.0;
        }
        let i = k % n;
        let j = k / n;
        let mut flux = 0.0;
        if i + 1 < n && mask[k + 1] {
            let fv = 0.5 * (vel[k][0] + vel[k + 1][0]) * scale;
            flux += fv.max(0.0) * u[k] + fv.min(0.0) * u[k + 1];
        }
        if i > 0 && mask[k - 1] {
            let fv = 0.5 * (vel[k - 1][0] + vel[k][0]) * scale;
            flux -= fv.max(0.0) * u[k - 1] + fv.min(0.0) * u[k];
        }
        if j + 1 < n && mask[k + n] {
            let fv = 0.5 * (vel[k][1] + vel[k + n][1]) * scale;
            flux += fv.max(0.0) * u[k] + fv.min(0.0) * u[k + n];
        }
        if j > 0 && mask[k - n] {
            let fv = 0.5 * (vel[k - n][1] + vel[k][1]) * scale;
            flux -= fv.max(0.0) * u[k - n] + fv.min(0.0) * u[k];
        }
        flux * inv_h
    });
}

fn scan_finite(name: &'static str, grid: Grid, vals: &[f64]) -> Result<()> {
    for (k, v) in vals.iter().enumerate() {
        if !v.is_finite() {
            let (i, j) = grid.coords(k);
            return Err(Error::NonFinite { field: name, i, j });
        }
    }
    Ok(())
}

/// Time derivatives of all four fields. Returns the largest advection
/// speed component seen, for the step-size check.
#[allow(clippy::too_many_arguments)]
pub fn macro_rhs(
    c: &[f64],
    i: &[f64],
    ecm: &[f64],
    v: &[f64],
    ctx: &MacroContext<'_>,
    out: &mut FieldDerivs,
    scr: &mut RhsScratch,
) -> Result<f64> {
    let grid = ctx.region.grid();
    let mask = ctx.region.mask();
    let p = ctx.params;

    parallel::fill_indexed(&mut scr.et, |k| ecm[k] + ctx.fibre_mag[k]);
    volume_fraction(c, i, ecm, ctx.fibre_mag, p.nu_e, p.nu_c, &mut scr.rho);
    gradient_slice_into(grid, &scr.et, &mut scr.grad_e);

    // Uninfected cells: diffusion plus nonlocal adhesion drift.
    eval_adhesion_flux(
        ctx.stencil,
        &FluxInputs {
            grid,
            mask,
            self_density: c,
            other_density: i,
            matrix: ecm,
            fibre_mag: ctx.fibre_mag,
            fibre_dir: ctx.fibre_dir,
            packing: &scr.rho,
        },
        AdhesionStrengths {
            self_cell: p.s_cc,
            cross_cell: p.s_ci,
            matrix: p.s_ce,
            fibre: p.s_cf,
        },
        &mut scr.vel_c,
    );
    laplacian_masked_slice_into(grid, c, mask, &mut scr.lap);
    upwind_divergence(grid, c, &scr.vel_c, 1.0, mask, &mut scr.div);
    {
        let lap = &scr.lap;
        let div = &scr.div;
        parallel::fill_indexed(&mut out.c, |k| p.d_c * lap[k] - div[k]);
    }

    // Infected cells: diffusion plus either matrix-gradient drift or their
    // own adhesion sampling.
    let infected_speed_src: &[[f64; 2]];
    let infected_scale;
    match ctx.mode {
        InfectedFlux::Local => {
            upwind_divergence(grid, i, &scr.grad_e, p.eta_i, mask, &mut scr.div);
            infected_speed_src = &scr.grad_e;
            infected_scale = p.eta_i;
        }
        InfectedFlux::Nonlocal => {
            eval_adhesion_flux(
                ctx.stencil,
                &FluxInputs {
                    grid,
                    mask,
                    self_density: i,
                    other_density: c,
                    matrix: ecm,
                    fibre_mag: ctx.fibre_mag,
                    fibre_dir: ctx.fibre_dir,
                    packing: &scr.rho,
                },
                AdhesionStrengths {
                    self_cell: p.s_ii,
                    cross_cell: p.s_ic,
                    matrix: p.s_ie,
                    fibre: p.s_if,
                },
                &mut scr.vel_i,
            );
            upwind_divergence(grid, i, &scr.vel_i, 1.0, mask, &mut scr.div);
            infected_speed_src = &scr.vel_i;
            infected_scale = 1.0;
        }
    }
    laplacian_masked_slice_into(grid, i, mask, &mut scr.lap);
    {
        let lap = &scr.lap;
        let div = &scr.div;
        parallel::fill_indexed(&mut out.i, |k| p.d_i * lap[k] - div[k]);
    }

    // The step-size check wants the fastest face anyone advects across.
    let mut max_speed = 0.0f64;
    for (k, &m) in mask.iter().enumerate() {
        if m {
            let vc = scr.vel_c[k];
            max_speed = max_speed.max(vc[0].abs()).max(vc[1].abs());
            let vi = infected_speed_src[k];
            max_speed = max_speed
                .max((vi[0] * infected_scale).abs())
                .max((vi[1] * infected_scale).abs());
        }
        let gv = scr.grad_e[k];
        max_speed = max_speed
            .max((gv[0] * p.eta_v).abs())
            .max((gv[1] * p.eta_v).abs());
    }

    // Virus: diffusion over the whole grid plus drift down the matrix
    // gradient.
    laplacian_masked_slice_into(grid, v, &scr.full_mask, &mut scr.lap);
    upwind_divergence(grid, v, &scr.grad_e, p.eta_v, &scr.full_mask, &mut scr.div);
    {
        let lap = &scr.lap;
        let div = &scr.div;
        parallel::fill_indexed(&mut out.v, |k| p.d_v * lap[k] - div[k]);
    }

    // Reactions. The infection term is computed once per node so the cell
    // exchange cancels exactly between dc and di.
    {
        let rho = &scr.rho;
        parallel::fill_indexed(&mut out.ecm, |k| {
            -ecm[k] * (p.alpha_c * c[k] + p.alpha_i * i[k]) + p.mu_2 * ecm[k] * (1.0 - rho[k])
        });
    }
    let rho = &scr.rho;
    let dc = &mut out.c;
    let di = &mut out.i;
    let dv = &mut out.v;
    for k in 0..grid.nodes() {
        let inf = p.varrho * c[k] * v[k];
        dc[k] += p.mu_1 * c[k] * (1.0 - rho[k]) - inf;
        di[k] += inf - p.delta_i * i[k];
        dv[k] += p.b * i[k] - inf - p.delta_v * v[k];
    }

    scan_finite("c", grid, &out.c)?;
    scan_finite("i", grid, &out.i)?;
    scan_finite("ecm", grid, &out.ecm)?;
    scan_finite("v", grid, &out.v)?;
    Ok(max_speed)
}

/// Largest stable substep: bounded by the stage itself, by the diffusion
/// stability limit, and by the stiffest reaction rate.
pub fn substep_limit(params: &ParameterSet, spacing: f64) -> f64 {
    let mut lim = params.stage_dt;
    let max_d = params.d_c.max(params.d_i).max(params.d_v);
    if max_d > 0.0 {
        lim = lim.min(0.2 * spacing * spacing / max_d);
    }
    let max_rate = [
        params.mu_1,
        params.mu_2,
        params.delta_i,
        params.delta_v,
        params.b,
        params.varrho,
        params.alpha_c,
        params.alpha_i,
        params.alpha_cf,
        params.alpha_if,
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    if max_rate > 0.0 {
        lim = lim.min(0.1 / max_rate);
    }
    lim
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepReport {
    pub substeps: usize,
    pub substep: f64,
    /// Mass removed by flooring negative undershoots, area weighted.
    pub clamped_mass: f64,
    pub max_speed: f64,
}

pub struct MacroWorkspace {
    mid_c: Vec<f64>,
    mid_i: Vec<f64>,
    mid_e: Vec<f64>,
    mid_v: Vec<f64>,
    d1: FieldDerivs,
    d2: FieldDerivs,
    scratch: RhsScratch,
}

impl MacroWorkspace {
    pub fn new(grid: Grid) -> Self {
        let nodes = grid.nodes();
        Self {
            mid_c: vec![0.0; nodes],
            mid_i: vec![0.0; nodes],
            mid_e: vec![0.0; nodes],
            mid_v: vec![0.0; nodes],
            d1: FieldDerivs::zeros(nodes),
            d2: FieldDerivs::zeros(nodes),
            scratch: RhsScratch::new(grid),
        }
    }
}

fn check_cfl(speed: f64, dt: f64, spacing: f64) -> Result<()> {
    if 2.0 * speed * dt > spacing {
        return Err(Error::Cfl {
            speed,
            limit: spacing / (2.0 * dt),
            dt,
        });
    }
    Ok(())
}

/// Advances the four fields by one macro stage with midpoint steps,
/// flooring negative undershoots to zero after every substep.
pub fn step_macro(
    fields: &mut MacroFields,
    ctx: &MacroContext<'_>,
    ws: &mut MacroWorkspace,
) -> Result<StepReport> {
    let grid = ctx.region.grid();
    let h = grid.spacing();
    let stage_dt = ctx.params.stage_dt;
    let lim = substep_limit(ctx.params, h);
    let substeps = (stage_dt / lim).ceil().max(1.0) as usize;
    let dt = stage_dt / substeps as f64;
    let half = 0.5 * dt;

    let mut report = StepReport {
        substeps,
        substep: dt,
        clamped_mass: 0.0,
        max_speed: 0.0,
    };
    let cell_area = h * h;

    for _ in 0..substeps {
        let speed = macro_rhs(
            fields.c.values(),
            fields.i.values(),
            fields.ecm.values(),
            fields.v.values(),
            ctx,
            &mut ws.d1,
            &mut ws.scratch,
        )?;
        report.max_speed = report.max_speed.max(speed);
        check_cfl(speed, dt, h)?;

        {
            let (c, i, e, v) = (
                fields.c.values(),
                fields.i.values(),
                fields.ecm.values(),
                fields.v.values(),
            );
            let d1 = &ws.d1;
            parallel::fill_indexed(&mut ws.mid_c, |k| c[k] + half * d1.c[k]);
            parallel::fill_indexed(&mut ws.mid_i, |k| i[k] + half * d1.i[k]);
            parallel::fill_indexed(&mut ws.mid_e, |k| e[k] + half * d1.ecm[k]);
            parallel::fill_indexed(&mut ws.mid_v, |k| v[k] + half * d1.v[k]);
        }

        let speed = macro_rhs(
            &ws.mid_c,
            &ws.mid_i,
            &ws.mid_e,
            &ws.mid_v,
            ctx,
            &mut ws.d2,
            &mut ws.scratch,
        )?;
        report.max_speed = report.max_speed.max(speed);
        check_cfl(speed, dt, h)?;

        let d2 = &ws.d2;
        for (vals, dd) in [
            (fields.c.values_mut(), &d2.c),
            (fields.i.values_mut(), &d2.i),
            (fields.ecm.values_mut(), &d2.ecm),
            (fields.v.values_mut(), &d2.v),
        ] {
            let mut clamped = 0.0;
            for (slot, &d) in vals.iter_mut().zip(dd) {
                let next = *slot + dt * d;
                if next < 0.0 {
                    clamped -= next;
                    *slot = 0.0;
                } else {
                    *slot = next;
                }
            }
            report.clamped_mass += clamped * cell_area;
        }
    }
    Ok(report)
}
