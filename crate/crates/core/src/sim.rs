//! Stage driver: advances the macro fields, lets cells rearrange and
//! degrade the fibre lattices, runs the boundary enzyme patches, and grows
//! the tumour mask, writing snapshots and a JSON-lines log along the way.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::adhesion::{eval_adhesion_flux, AdhesionStrengths, FluxInputs, SensingStencil};
use crate::config::RunConfig;
use crate::error::Result;
use crate::fibres::{rearrangement_vector, FibreLayer, RelocateReport};
use crate::grid::{
    gradient_masked_slice_into, gradient_slice_into, Grid, TumourRegion,
};
use crate::init::{init_state, InitOptions};
use crate::macroscale::{
    step_macro, volume_fraction, InfectedFlux, MacroContext, MacroFields, MacroWorkspace,
    StepReport,
};
use crate::mde::{
    boundary_relocation, cover_boundary, expand_tumour, mde_source, micro_inside_flags,
    BoundaryBundle, MdeSolver, Relocation, SourceInputs,
};
use crate::parallel;
use crate::snapshot::write_snapshot;

/// Per-stage outcome, also the payload of one run-log line.
#[derive(Clone, Copy, Debug)]
pub struct StageReport {
    pub stage: usize,
    pub step: StepReport,
    pub relocate: RelocateReport,
    pub active_relocations: usize,
    pub new_nodes: usize,
}

#[derive(Serialize)]
struct LogRecord {
    stage: usize,
    wall_ms: f64,
    mass_c: f64,
    mass_i: f64,
    mass_ecm: f64,
    mass_fibre: f64,
    mass_v: f64,
    tumour_nodes: usize,
    substeps: usize,
    clamped_mass: f64,
    max_speed: f64,
    fibre_transfers: usize,
    truncated_moves: usize,
    moved_fibre_mass: f64,
    active_relocations: usize,
    new_nodes: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub stages: usize,
    pub out_dir: PathBuf,
    pub snapshots: Vec<usize>,
    pub tumour_nodes: usize,
}

struct SimBuffers {
    et: Vec<f64>,
    rho: Vec<f64>,
    grad_e: Vec<[f64; 2]>,
    grad_c: Vec<[f64; 2]>,
    grad_i: Vec<[f64; 2]>,
    vel_c: Vec<[f64; 2]>,
    vel_i: Vec<[f64; 2]>,
    r: Vec<[f64; 2]>,
}

impl SimBuffers {
    fn new(grid: Grid) -> Self {
        let nodes = grid.nodes();
        Self {
            et: vec![0.0; nodes],
            rho: vec![0.0; nodes],
            grad_e: vec![[0.0; 2]; nodes],
            grad_c: vec![[0.0; 2]; nodes],
            grad_i: vec![[0.0; 2]; nodes],
            vel_c: vec![[0.0; 2]; nodes],
            vel_i: vec![[0.0; 2]; nodes],
            r: vec![[0.0; 2]; nodes],
        }
    }
}

pub struct Simulation {
    cfg: RunConfig,
    grid: Grid,
    stencil: SensingStencil,
    fields: MacroFields,
    region: TumourRegion,
    fibres: FibreLayer,
    solver: MdeSolver,
    stage: usize,
    ws: MacroWorkspace,
    buf: SimBuffers,
    // Sub-cell interface displacement carried between stages, per boundary
    // node. One stage moves the interface by less than a node spacing, so
    // motion is banked here and spent on the mask once it reaches a full
    // cell, the least distance whose sweep claims a neighbour under
    // round-to-nearest snapping in every direction.
    creep: Vec<[f64; 2]>,
}

impl Simulation {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = Grid::new(cfg.grid.extent, cfg.grid.spacing)?;
        let state = init_state(&InitOptions {
            grid,
            fibre_ratio: cfg.params.fibre_ratio,
            micro_cells: cfg.micro.micro_nodes,
            sigma: cfg.sigma(),
            f_max_override: cfg.micro.f_max,
            mollifier_radius: cfg.mollifier_radius(),
        })?;
        Self::from_state(cfg, state.fields, state.region, state.fibres)
    }

    /// Wraps an existing state; used to start from hand-built fields.
    pub fn from_state(
        cfg: RunConfig,
        fields: MacroFields,
        region: TumourRegion,
        fibres: FibreLayer,
    ) -> Result<Self> {
        let grid = region.grid();
        let stencil = SensingStencil::build(cfg.params.sensing_radius, grid.spacing())?;
        let micro_spacing = 2.0 * cfg.epsilon() / (cfg.micro.mde_nodes - 1) as f64;
        let solver = MdeSolver::new(
            cfg.micro.mde_nodes,
            micro_spacing,
            cfg.params.d_m,
            cfg.params.stage_dt,
            cfg.micro.mde_substeps,
        )?;
        Ok(Self {
            grid,
            stencil,
            fields,
            region,
            fibres,
            solver,
            stage: 0,
            ws: MacroWorkspace::new(grid),
            buf: SimBuffers::new(grid),
            creep: vec![[0.0; 2]; grid.nodes()],
            cfg,
        })
    }

    #[inline]
    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn fields(&self) -> &MacroFields {
        &self.fields
    }

    #[inline]
    pub fn region(&self) -> &TumourRegion {
        &self.region
    }

    #[inline]
    pub fn fibres(&self) -> &FibreLayer {
        &self.fibres
    }

    #[inline]
    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Net cell flux per node, the driver of fibre rearrangement: diffusive
    /// spread plus the adhesion or matrix-gradient drift of each
    /// population.
    fn rearrangement_field(&mut self) {
        let p = &self.cfg.params;
        let mask = self.region.mask();
        let c = self.fields.c.values();
        let i = self.fields.i.values();
        let ecm = self.fields.ecm.values();
        let mag = self.fibres.magnitudes();
        let dir = self.fibres.orientations();

        parallel::fill_indexed(&mut self.buf.et, |k| ecm[k] + mag[k]);
        volume_fraction(c, i, ecm, mag, p.nu_e, p.nu_c, &mut self.buf.rho);
        gradient_slice_into(self.grid, &self.buf.et, &mut self.buf.grad_e);
        gradient_masked_slice_into(self.grid, c, mask, &mut self.buf.grad_c);
        gradient_masked_slice_into(self.grid, i, mask, &mut self.buf.grad_i);

        eval_adhesion_flux(
            &self.stencil,
            &FluxInputs {
                grid: self.grid,
                mask,
                self_density: c,
                other_density: i,
                matrix: ecm,
                fibre_mag: mag,
                fibre_dir: dir,
                packing: &self.buf.rho,
            },
            AdhesionStrengths {
                self_cell: p.s_cc,
                cross_cell: p.s_ci,
                matrix: p.s_ce,
                fibre: p.s_cf,
            },
            &mut self.buf.vel_c,
        );
        let nonlocal = self.cfg.scenario.infected_flux == InfectedFlux::Nonlocal;
        if nonlocal {
            eval_adhesion_flux(
                &self.stencil,
                &FluxInputs {
                    grid: self.grid,
                    mask,
                    self_density: i,
                    other_density: c,
                    matrix: ecm,
                    fibre_mag: mag,
                    fibre_dir: dir,
                    packing: &self.buf.rho,
                },
                AdhesionStrengths {
                    self_cell: p.s_ii,
                    cross_cell: p.s_ic,
                    matrix: p.s_ie,
                    fibre: p.s_if,
                },
                &mut self.buf.vel_i,
            );
        }

        let buf = &mut self.buf;
        let d_c = p.d_c;
        let d_i = p.d_i;
        let eta_i = p.eta_i;
        let grad_c = &buf.grad_c;
        let grad_i = &buf.grad_i;
        let grad_e = &buf.grad_e;
        let vel_c = &buf.vel_c;
        let vel_i = &buf.vel_i;
        parallel::fill_indexed(&mut buf.r, |k| {
            if !mask[k] {
                return [0.0, 0.0];
            }
            let fx_c = [
                d_c * grad_c[k][0] - c[k] * vel_c[k][0],
                d_c * grad_c[k][1] - c[k] * vel_c[k][1],
            ];
            let fx_i = if nonlocal {
                [
                    d_i * grad_i[k][0] - i[k] * vel_i[k][0],
                    d_i * grad_i[k][1] - i[k] * vel_i[k][1],
                ]
            } else {
                [
                    d_i * grad_i[k][0] - eta_i * i[k] * grad_e[k][0],
                    d_i * grad_i[k][1] - eta_i * i[k] * grad_e[k][1],
                ]
            };
            let flux = [fx_c[0] + fx_i[0], fx_c[1] + fx_i[1]];
            rearrangement_vector(flux, dir[k], c[k] + i[k])
        });
    }

    /// One macro stage: field update, fibre degradation and rearrangement,
    /// then the boundary enzyme pass and interface growth.
    pub fn step_stage(&mut self) -> Result<StageReport> {
        let p = self.cfg.params;

        // Orientation and magnitude stay frozen over the whole stage.
        let ctx = MacroContext {
            region: &self.region,
            params: &self.cfg.params,
            mode: self.cfg.scenario.infected_flux,
            stencil: &self.stencil,
            fibre_mag: self.fibres.magnitudes(),
            fibre_dir: self.fibres.orientations(),
        };
        let step = step_macro(&mut self.fields, &ctx, &mut self.ws)?;

        self.fibres.degrade(
            self.fields.c.values(),
            self.fields.i.values(),
            p.alpha_cf,
            p.alpha_if,
            p.stage_dt,
        );
        self.rearrangement_field();
        let relocate = self.fibres.relocate(&self.buf.r, self.region.members());

        let bundle = cover_boundary(&self.region, self.cfg.epsilon(), self.cfg.micro.mde_nodes)?;
        let inputs = SourceInputs {
            grid: self.grid,
            mask: self.region.mask(),
            c: self.fields.c.values(),
            i: self.fields.i.values(),
            weight_c: p.gamma_c,
            weight_i: p.gamma_i,
            ball_radius: self.cfg.rho_ball(),
        };
        let kappa = self.cfg.micro.kappa;
        let threshold = self.cfg.micro.activation_threshold;
        let solver = &self.solver;
        let relocations: Vec<Relocation> = parallel::map_slice(&bundle.patches, |patch| {
            let inside = micro_inside_flags(&bundle, patch, self.grid, inputs.mask);
            let g = mde_source(&bundle, patch, &inside, &inputs);
            let m = solver.evolve(&g);
            boundary_relocation(&bundle, patch, &m, &inside, kappa, threshold)
        });
        let active_relocations = relocations.iter().filter(|r| r.active).count();
        let effective = self.bank_relocations(&bundle, &relocations);
        let new_nodes = expand_tumour(&mut self.region, &bundle, &effective)?;
        self.prune_creep(&bundle);

        self.stage += 1;
        Ok(StageReport {
            stage: self.stage,
            step,
            relocate,
            active_relocations,
            new_nodes,
        })
    }

    /// Runs the configured number of stages, writing the initial snapshot,
    /// snapshots on the configured cadence, the final snapshot, and one log
    /// line per stage.
    pub fn run(&mut self, out_dir: &Path) -> Result<RunSummary> {
        std::fs::create_dir_all(out_dir)?;
        let mut snapshots = Vec::new();
        write_snapshot(out_dir, 0, &self.fields, &self.region, &self.fibres)?;
        snapshots.push(0);

        let log_path = out_dir.join("run_log.jsonl");
        let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

        let stages = self.cfg.params.stages;
        let every = self.cfg.output.snapshot_every;
        for s in 1..=stages {
            let t0 = Instant::now();
            let report = self.step_stage().map_err(|e| e.at_stage(s))?;
            let record = LogRecord {
                stage: report.stage,
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
                mass_c: self.fields.c.mass(),
                mass_i: self.fields.i.mass(),
                mass_ecm: self.fields.ecm.mass(),
                mass_fibre: self.fibre_mass(),
                mass_v: self.fields.v.mass(),
                tumour_nodes: self.region.len(),
                substeps: report.step.substeps,
                clamped_mass: report.step.clamped_mass,
                max_speed: report.step.max_speed,
                fibre_transfers: report.relocate.transfers,
                truncated_moves: report.relocate.truncated,
                moved_fibre_mass: report.relocate.moved_mass,
                active_relocations: report.active_relocations,
                new_nodes: report.new_nodes,
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| crate::error::Error::Solver(e.to_string()))?;
            writeln!(log, "{line}")?;

            let cadence_hit = every > 0 && s % every == 0;
            if cadence_hit || s == stages {
                write_snapshot(out_dir, s, &self.fields, &self.region, &self.fibres)?;
                snapshots.push(s);
            }
        }
        log.flush()?;
        Ok(RunSummary {
            stages,
            out_dir: out_dir.to_path_buf(),
            snapshots,
            tumour_nodes: self.region.len(),
        })
    }

    /// Area-weighted fibre mass, matching the field files.
    fn fibre_mass(&self) -> f64 {
        let h = self.grid.spacing();
        self.fibres.magnitudes().iter().sum::<f64>() * h * h
    }

    /// Adds each active relocation to its node's banked displacement and
    /// emits a move once the bank reaches a full cell, capped at the patch
    /// half-width so no patch can jump past itself. The swept distance is
    /// withdrawn from the bank; the sub-step remainder stays.
    fn bank_relocations(
        &mut self,
        bundle: &BoundaryBundle,
        raw: &[Relocation],
    ) -> Vec<Relocation> {
        let h = self.grid.spacing();
        let step = 0.5 * h;
        let cap = bundle.half_width;
        raw.iter()
            .map(|r| {
                if !r.active {
                    return *r;
                }
                let acc = &mut self.creep[r.node];
                acc[0] += r.displacement * r.direction[0];
                acc[1] += r.displacement * r.direction[1];
                let mut len = (acc[0] * acc[0] + acc[1] * acc[1]).sqrt();
                if len > cap {
                    let s = cap / len;
                    acc[0] *= s;
                    acc[1] *= s;
                    len = cap;
                }
                if len >= h {
                    let out = Relocation {
                        direction: [acc[0] / len, acc[1] / len],
                        displacement: len,
                        ..*r
                    };
                    let spent = (len / step + 1e-9).floor() * step;
                    let keep = (len - spent).max(0.0) / len;
                    acc[0] *= keep;
                    acc[1] *= keep;
                    out
                } else {
                    Relocation { active: false, ..*r }
                }
            })
            .collect()
    }

    /// Clears the banked displacement of nodes the advancing interface has
    /// swallowed; only current boundary nodes keep saving up.
    fn prune_creep(&mut self, bundle: &BoundaryBundle) {
        let n = self.grid.n();
        let mask = self.region.mask();
        for patch in &bundle.patches {
            let k = patch.center_node;
            let (i, j) = self.grid.coords(k);
            let interior = i > 0
                && i + 1 < n
                && j > 0
                && j + 1 < n
                && mask[k - 1]
                && mask[k + 1]
                && mask[k - n]
                && mask[k + n];
            if interior {
                self.creep[k] = [0.0, 0.0];
            }
        }
    }
}

/// Builds the initial state from the config and runs it to completion on
/// the requested number of threads (`None` keeps the default pool).
pub fn run_simulation(cfg: &RunConfig, threads: Option<usize>) -> Result<RunSummary> {
    cfg.validate()?;
    let cfg = cfg.clone();
    parallel::with_threads(threads, move || {
        let out_dir = PathBuf::from(&cfg.output.dir);
        let mut sim = Simulation::new(cfg)?;
        sim.run(&out_dir)
    })
}
