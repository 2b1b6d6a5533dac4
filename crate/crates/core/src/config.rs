//! Run configuration: a TOML file with five sections, every key optional.
//! An empty file reproduces the baseline run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macroscale::{InfectedFlux, ParameterSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub extent: f64,
    pub spacing: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            extent: 4.0,
            spacing: 0.03125,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub infected_flux: InfectedFlux,
}

/// Microscale knobs. The optional lengths default to multiples of the grid
/// spacing: fibre lattice width one cell, enzyme patch half-width four
/// cells, enzyme averaging ball two cells, mollifier a quarter cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroSection {
    pub sigma: Option<f64>,
    pub micro_nodes: usize,
    pub epsilon: Option<f64>,
    pub mde_nodes: usize,
    pub mde_substeps: usize,
    pub rho_ball: Option<f64>,
    pub f_max: Option<f64>,
    pub kappa: f64,
    pub activation_threshold: f64,
    pub mollifier_radius: Option<f64>,
}

impl Default for MicroSection {
    fn default() -> Self {
        Self {
            sigma: None,
            micro_nodes: 15,
            epsilon: None,
            mde_nodes: 17,
            mde_substeps: 20,
            rho_ball: None,
            f_max: None,
            kappa: 0.5,
            activation_threshold: 0.05,
            mollifier_radius: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Snapshot cadence in stages; zero keeps only the initial and final
    /// snapshots.
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            snapshot_every: 25,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub params: ParameterSet,
    pub scenario: ScenarioSection,
    pub micro: MicroSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn sigma(&self) -> f64 {
        self.micro.sigma.unwrap_or(self.grid.spacing)
    }

    pub fn epsilon(&self) -> f64 {
        self.micro.epsilon.unwrap_or(4.0 * self.grid.spacing)
    }

    pub fn rho_ball(&self) -> f64 {
        self.micro.rho_ball.unwrap_or(2.0 * self.grid.spacing)
    }

    pub fn mollifier_radius(&self) -> f64 {
        self.micro
            .mollifier_radius
            .unwrap_or(self.grid.spacing / 4.0)
    }

    /// Checks every cross-field constraint, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let err = |key: &str, msg: String| {
            Err(Error::Config {
                path: key.to_string(),
                message: msg,
            })
        };
        let g = &self.grid;
        if !(g.extent.is_finite() && g.extent > 0.0) {
            return err("grid.extent", format!("must be positive, got {}", g.extent));
        }
        if !(g.spacing.is_finite() && g.spacing > 0.0) {
            return err("grid.spacing", format!("must be positive, got {}", g.spacing));
        }
        if g.spacing > g.extent {
            return err(
                "grid.spacing",
                format!("{} exceeds the extent {}", g.spacing, g.extent),
            );
        }
        let p = &self.params;
        for (key, value) in [
            ("params.d_c", p.d_c),
            ("params.d_i", p.d_i),
            ("params.d_v", p.d_v),
            ("params.eta_i", p.eta_i),
            ("params.eta_v", p.eta_v),
            ("params.mu_1", p.mu_1),
            ("params.mu_2", p.mu_2),
            ("params.s_cc", p.s_cc),
            ("params.s_ci", p.s_ci),
            ("params.s_ic", p.s_ic),
            ("params.s_ii", p.s_ii),
            ("params.s_ce", p.s_ce),
            ("params.s_ie", p.s_ie),
            ("params.s_cf", p.s_cf),
            ("params.s_if", p.s_if),
            ("params.alpha_c", p.alpha_c),
            ("params.alpha_i", p.alpha_i),
            ("params.alpha_cf", p.alpha_cf),
            ("params.alpha_if", p.alpha_if),
            ("params.varrho", p.varrho),
            ("params.delta_i", p.delta_i),
            ("params.delta_v", p.delta_v),
            ("params.b", p.b),
            ("params.nu_e", p.nu_e),
            ("params.nu_c", p.nu_c),
            ("params.gamma_c", p.gamma_c),
            ("params.gamma_i", p.gamma_i),
            ("params.d_m", p.d_m),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return err(key, format!("must be non-negative and finite, got {value}"));
            }
        }
        if !(0.0..=1.0).contains(&p.fibre_ratio) {
            return err(
                "params.fibre_ratio",
                format!("must lie in [0, 1], got {}", p.fibre_ratio),
            );
        }
        if !(p.stage_dt.is_finite() && p.stage_dt > 0.0) {
            return err(
                "params.stage_dt",
                format!("must be positive, got {}", p.stage_dt),
            );
        }
        if p.stages == 0 {
            return err("params.stages", "must be at least 1".into());
        }
        if p.sensing_radius < g.spacing {
            return err(
                "params.sensing_radius",
                format!(
                    "{} is below the grid spacing {}; the sensing disc would be empty",
                    p.sensing_radius, g.spacing
                ),
            );
        }
        let m = &self.micro;
        if m.micro_nodes < 5 {
            return err(
                "micro.micro_nodes",
                format!("needs at least 5 cells per side, got {}", m.micro_nodes),
            );
        }
        if m.mde_nodes < 3 {
            return err(
                "micro.mde_nodes",
                format!("needs at least 3 nodes per side, got {}", m.mde_nodes),
            );
        }
        if m.mde_substeps == 0 {
            return err("micro.mde_substeps", "must be at least 1".into());
        }
        if !(m.kappa > 0.0 && m.kappa <= 1.0) {
            return err("micro.kappa", format!("must lie in (0, 1], got {}", m.kappa));
        }
        if !(0.0..1.0).contains(&m.activation_threshold) {
            return err(
                "micro.activation_threshold",
                format!("must lie in [0, 1), got {}", m.activation_threshold),
            );
        }
        if !(self.sigma() > 0.0) {
            return err("micro.sigma", format!("must be positive, got {}", self.sigma()));
        }
        if !(self.epsilon() > 0.0) {
            return err(
                "micro.epsilon",
                format!("must be positive, got {}", self.epsilon()),
            );
        }
        if self.rho_ball() < 0.5 * g.spacing {
            return err(
                "micro.rho_ball",
                format!(
                    "{} is below half the grid spacing; enzyme sources would see no nodes",
                    self.rho_ball()
                ),
            );
        }
        if let Some(f) = m.f_max {
            if !(f.is_finite() && f > 0.0) {
                return err("micro.f_max", format!("must be positive, got {f}"));
            }
        }
        if !(self.mollifier_radius() > 0.0) {
            return err(
                "micro.mollifier_radius",
                format!("must be positive, got {}", self.mollifier_radius()),
            );
        }
        Ok(())
    }
}

/// Parses and validates a config file; the file may be empty.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Named parameter sets for the runs the project tracks. The baseline uses
/// the default table; the others change only what their name says.
pub fn presets() -> Vec<(&'static str, RunConfig)> {
    let base = RunConfig::default();
    let fibre = |ratio: f64| {
        let mut c = base.clone();
        c.params.fibre_ratio = ratio;
        c
    };
    let nonlocal = || {
        let mut c = base.clone();
        c.scenario.infected_flux = InfectedFlux::Nonlocal;
        c
    };

    let mut scf05 = base.clone();
    scf05.params.s_cf = 0.5;

    let mut nl_scfsif = nonlocal();
    nl_scfsif.params.s_cf = 0.3;
    nl_scfsif.params.s_if = 0.3;

    let mut nl_sie = nonlocal();
    nl_sie.params.s_ie = 0.001;

    let mut cross_a = nonlocal();
    cross_a.params.s_cc = 0.05;
    cross_a.params.s_ci = 0.05;
    cross_a.params.s_ic = 0.1;
    cross_a.params.s_ii = 0.1;
    cross_a.params.s_ce = 0.001;

    let mut cross_b = nonlocal();
    cross_b.params.s_cc = 0.1;
    cross_b.params.s_ci = 0.1;
    cross_b.params.s_ic = 0.05;
    cross_b.params.s_ii = 0.05;
    cross_b.params.s_ie = 0.001;

    vec![
        ("baseline-local", base.clone()),
        ("fibre-30", fibre(0.3)),
        ("fibre-35", fibre(0.35)),
        ("fibre-40", fibre(0.4)),
        ("ScF-05", scf05),
        ("nonlocal-baseline", nonlocal()),
        ("nonlocal-ScFSiF-03", nl_scfsif),
        ("nonlocal-Sie-0001", nl_sie),
        ("cross-adhesion-a", cross_a),
        ("cross-adhesion-b", cross_b),
    ]
}

pub fn preset(name: &str) -> Option<RunConfig> {
    presets().into_iter().find(|(n, _)| *n == name).map(|(_, c)| c)
}
