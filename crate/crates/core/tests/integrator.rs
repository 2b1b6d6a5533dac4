//! Behaviour of the macro time stepper as a whole: conservation, bounds,
//! and agreement between the two infected-flux modes when their transport
//! is switched off.

use ovsim_core::adhesion::SensingStencil;
use ovsim_core::grid::{Grid, ScalarField, TumourRegion};
use ovsim_core::macroscale::{
    step_macro, InfectedFlux, MacroContext, MacroFields, MacroWorkspace, ParameterSet,
};

fn full_region(grid: Grid) -> TumourRegion {
    TumourRegion::from_mask(grid, vec![true; grid.nodes()]).unwrap()
}

fn disk_region(grid: Grid, radius: f64) -> TumourRegion {
    let c = grid.center();
    let mask = (0..grid.nodes())
        .map(|k| {
            let p = grid.pos_of(k);
            ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() <= radius
        })
        .collect();
    TumourRegion::from_mask(grid, mask).unwrap()
}

fn quiet() -> ParameterSet {
    ParameterSet {
        d_c: 0.0,
        d_i: 0.0,
        d_v: 0.0,
        eta_i: 0.0,
        eta_v: 0.0,
        mu_1: 0.0,
        mu_2: 0.0,
        s_cc: 0.0,
        s_ci: 0.0,
        s_ic: 0.0,
        s_ii: 0.0,
        s_ce: 0.0,
        s_ie: 0.0,
        s_cf: 0.0,
        s_if: 0.0,
        alpha_c: 0.0,
        alpha_i: 0.0,
        alpha_cf: 0.0,
        alpha_if: 0.0,
        varrho: 0.0,
        delta_i: 0.0,
        delta_v: 0.0,
        b: 0.0,
        ..ParameterSet::default()
    }
}

fn bump(grid: Grid, amp: f64, width: f64) -> ScalarField {
    let c = grid.center();
    ScalarField::from_fn(grid, |p| {
        let r2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
        amp * (-r2 / width).exp()
    })
}

fn run_stages(
    fields: &mut MacroFields,
    region: &TumourRegion,
    params: &ParameterSet,
    mode: InfectedFlux,
    stages: usize,
) {
    let grid = region.grid();
    let stencil = SensingStencil::build(params.sensing_radius, grid.spacing()).unwrap();
    let nodes = grid.nodes();
    let mag = vec![0.0; nodes];
    let dir = vec![[0.0; 2]; nodes];
    let ctx = MacroContext {
        region,
        params,
        mode,
        stencil: &stencil,
        fibre_mag: &mag,
        fibre_dir: &dir,
    };
    let mut ws = MacroWorkspace::new(grid);
    for _ in 0..stages {
        step_macro(fields, &ctx, &mut ws).unwrap();
    }
}

/// Pure diffusion with reflecting edges keeps total mass.
#[test]
fn diffusion_conserves_mass() {
    let grid = Grid::new(1.0, 0.03125).unwrap();
    let region = full_region(grid);
    let mut params = quiet();
    params.d_c = 0.01;
    params.d_v = 0.004;

    let mut fields = MacroFields::zeros(grid);
    fields.c = bump(grid, 0.8, 0.02);
    fields.v = bump(grid, 0.5, 0.05);
    let (mc0, mv0) = (fields.c.mass(), fields.v.mass());

    run_stages(&mut fields, &region, &params, InfectedFlux::Local, 4);

    assert!((fields.c.mass() - mc0).abs() / mc0 < 1e-12);
    assert!((fields.v.mass() - mv0).abs() / mv0 < 1e-12);
    // It actually spread.
    assert!(fields.c.max_value() < 0.8);
}

/// With infection alone (no deaths, no growth), c + i is pointwise frozen.
#[test]
fn infection_channel_preserves_cell_total()
{
    let grid = Grid::new(1.0, 0.0625).unwrap();
    let region = disk_region(grid, 0.4);
    let mut params = quiet();
    params.varrho = 0.079;

    let mut fields = MacroFields::zeros(grid);
    let c0 = bump(grid, 0.7, 0.05);
    for k in 0..grid.nodes() {
        if region.contains(k) {
            fields.c.values_mut()[k] = c0.values()[k];
        }
    }
    fields.v = bump(grid, 0.4, 0.1);
    let before: Vec<f64> = fields
        .c
        .values()
        .iter()
        .zip(fields.i.values())
        .map(|(a, b)| a + b)
        .collect();

    run_stages(&mut fields, &region, &params, InfectedFlux::Local, 3);

    for k in 0..grid.nodes() {
        let after = fields.c.values()[k] + fields.i.values()[k];
        assert!(
            (after - before[k]).abs() < 1e-12,
            "cell total drifted at {k}: {} -> {after}",
            before[k]
        );
    }
    assert!(fields.i.max_value() > 1e-4, "infection never took hold");
}

/// Logistic growth saturates without overshooting the packing bound.
#[test]
fn growth_respects_packing() {
    let grid = Grid::new(1.0, 0.0625).unwrap();
    let region = full_region(grid);
    let mut params = quiet();
    params.mu_1 = 0.5;

    let mut fields = MacroFields::zeros(grid);
    fields.c = ScalarField::constant(grid, 0.05);
    run_stages(&mut fields, &region, &params, InfectedFlux::Local, 30);

    let max = fields.c.max_value();
    let min = fields.c.min_value();
    assert!(max <= 1.0 + 1e-9, "overshot packing: {max}");
    assert!(min > 0.97, "did not saturate: {min}");
}

/// With matrix-gradient drift and adhesion both disabled, the two infected
/// transport modes are the same scheme and must agree bitwise.
#[test]
fn flux_modes_agree_without_transport() {
    let grid = Grid::new(1.0, 0.0625).unwrap();
    let region = disk_region(grid, 0.42);
    let mut params = quiet();
    params.d_i = 0.0054;
    params.varrho = 0.079;
    params.delta_i = 0.05;
    params.b = 20.0;
    params.delta_v = 0.025;
    params.eta_i = 0.0;

    let make = || {
        let mut fields = MacroFields::zeros(grid);
        let c0 = bump(grid, 0.6, 0.04);
        for k in 0..grid.nodes() {
            if region.contains(k) {
                fields.c.values_mut()[k] = c0.values()[k];
                fields.i.values_mut()[k] = 0.3 * c0.values()[k];
            }
        }
        fields.ecm = bump(grid, 0.5, 0.3);
        fields.v = bump(grid, 0.3, 0.06);
        fields
    };

    let mut local = make();
    run_stages(&mut local, &region, &params, InfectedFlux::Local, 2);
    let mut nonlocal = make();
    run_stages(&mut nonlocal, &region, &params, InfectedFlux::Nonlocal, 2);

    assert_eq!(local.i.values(), nonlocal.i.values());
    assert_eq!(local.c.values(), nonlocal.c.values());
    assert_eq!(local.v.values(), nonlocal.v.values());
}
