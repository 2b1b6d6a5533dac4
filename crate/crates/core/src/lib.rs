//! Two-scale simulation of a growing tumour treated with an oncolytic
//! virus.
//!
//! The macroscale tracks five densities on a uniform grid over a square
//! domain: uninfected tumour cells, infected tumour cells, two extracellular
//! matrix phases (a diffuse one and an oriented fibre one), and free virus
//! particles. Cells diffuse, proliferate, get infected by the virus, and
//! drift along nonlocal adhesion velocities sampled over a sensing disc.
//! Infected cells lyse and release new virions.
//!
//! Two microscales feed back into the macro step. Each grid node carries a
//! small lattice of fibre mass whose first moment defines the local fibre
//! orientation; cell fluxes push that mass around, reorienting the fibres.
//! On the tumour boundary, patches of matrix-degrading enzyme diffuse over
//! a finer mesh and decide where and how far the tumour interface moves
//! outward.
//!
//! The crate exposes the pieces separately (grid, adhesion stencil, macro
//! step, fibre and enzyme microscales) plus a [`sim`] driver that wires
//! them together, snapshot and render IO, and a TOML run configuration.

pub mod adhesion;
pub mod banded;
pub mod config;
pub mod error;
pub mod fibres;
pub mod grid;
pub mod init;
pub mod macroscale;
pub mod mde;
pub mod parallel;
pub mod render;
pub mod sim;
pub mod snapshot;

pub use error::{Error, Result};
