use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid: {0}")]
    Grid(String),

    #[error("tumour region is empty")]
    EmptyRegion,

    #[error("sensing radius {radius} is below the grid spacing {spacing}; the stencil would be empty")]
    UnderResolvedStencil { radius: f64, spacing: f64 },

    #[error("non-finite {field} derivative at node ({i}, {j})")]
    NonFinite { field: &'static str, i: usize, j: usize },

    #[error("advective CFL violation: max face speed {speed:.4} allows a substep of at most {limit:.3e} but the substep is {dt:.3e}; lower the substep cap or shorten the stage interval")]
    Cfl { speed: f64, limit: f64, dt: f64 },

    #[error("config {path}: {message}")]
    Config { path: String, message: String },

    #[error("solver: {0}")]
    Solver(String),

    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_stage(self, stage: usize) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
