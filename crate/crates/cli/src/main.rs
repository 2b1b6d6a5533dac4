use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ovsim_core::config::{load_config, preset, presets, RunConfig};
use ovsim_core::grid::{extract_boundary, Grid};
use ovsim_core::render::{render_heatmap, Palette};
use ovsim_core::sim::run_simulation;
use ovsim_core::snapshot::{read_field, verify_manifest};

#[derive(Parser)]
#[command(
    name = "ovsim",
    version,
    about = "Two-scale simulator of tumour growth under oncolytic virus therapy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a config file, a preset, or the defaults
    Run(RunArgs),
    /// Render a stored field file as a PNG heatmap
    Render(RenderArgs),
    /// List the built-in scenario presets
    Presets,
    /// Check a snapshot directory against its manifest checksums
    Verify {
        /// Snapshot directory containing manifest.json
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; other flags override its values
    #[arg(long, value_name = "FILE", conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Built-in preset to start from, see `ovsim presets`
    #[arg(long, value_name = "NAME")]
    scenario: Option<String>,
    /// Number of micro-macro stages to run
    #[arg(long)]
    stages: Option<usize>,
    /// Output directory for snapshots and the run log
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write a snapshot every N stages (0 keeps only first and last)
    #[arg(long, value_name = "N")]
    snapshot_every: Option<usize>,
    /// Worker threads; the OVSIM_THREADS variable takes precedence
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    /// Field file written by `run`, e.g. out/stage_0075/c.field
    field: PathBuf,
    /// Output PNG path (defaults to the field path with .png)
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Colour map: viridis or gray
    #[arg(long, default_value = "viridis")]
    palette: Palette,
    /// Pixels per grid node
    #[arg(long, default_value_t = 4)]
    scale: usize,
    /// Overlay the interface of this 0/1 mask field in white,
    /// e.g. out/stage_0075/omega.field
    #[arg(long, value_name = "FILE")]
    mask: Option<PathBuf>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var("OVSIM_THREADS") {
        Ok(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .map_err(|_| anyhow!("OVSIM_THREADS must be a positive integer, got {raw:?}"))?;
            if n == 0 {
                bail!("OVSIM_THREADS must be a positive integer, got 0");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg: RunConfig = if let Some(path) = &args.config {
        load_config(path).with_context(|| format!("loading {}", path.display()))?
    } else if let Some(name) = &args.scenario {
        preset(name).ok_or_else(|| anyhow!("unknown preset {name:?}, see `ovsim presets`"))?
    } else {
        RunConfig::default()
    };
    if let Some(s) = args.stages {
        cfg.params.stages = s;
    }
    if let Some(dir) = &args.out {
        cfg.output.dir = dir.display().to_string();
    }
    if let Some(every) = args.snapshot_every {
        cfg.output.snapshot_every = every;
    }
    let threads = thread_count(args.threads)?;

    let summary = run_simulation(&cfg, threads)?;
    println!(
        "ran {} stages, tumour covers {} nodes, {} snapshots under {}",
        summary.stages,
        summary.tumour_nodes,
        summary.snapshots.len(),
        summary.out_dir.display()
    );
    Ok(())
}

fn load_mask_boundary(path: &Path, n: usize) -> Result<Vec<usize>> {
    let (mask_n, _, values) =
        read_field(path).with_context(|| format!("loading mask {}", path.display()))?;
    if mask_n != n {
        bail!("mask is {mask_n}x{mask_n} but the field is {n}x{n}");
    }
    let mask: Vec<bool> = values.iter().map(|&v| v > 0.5).collect();
    // Only the node count matters for boundary extraction.
    let grid = Grid::new((n - 1) as f64, 1.0).map_err(|e| anyhow!(e))?;
    Ok(extract_boundary(grid, &mask))
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let (n, name, values) = read_field(&args.field)
        .with_context(|| format!("loading field {}", args.field.display()))?;
    let boundary = match &args.mask {
        Some(path) => Some(load_mask_boundary(path, n)?),
        None => None,
    };
    let image = render_heatmap(&values, n, args.palette, args.scale, boundary.as_deref())?;
    let out = args
        .out
        .unwrap_or_else(|| args.field.with_extension("png"));
    image
        .save(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("rendered {name} ({n}x{n}) to {}", out.display());
    Ok(())
}

fn cmd_presets() {
    let all = presets();
    let width = all.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, cfg) in all {
        let mode = format!("{:?}", cfg.scenario.infected_flux).to_lowercase();
        println!(
            "{name:width$}  fibre_ratio={:<4} s_cf={:<5} s_if={:<5} infected_flux={mode}",
            cfg.params.fibre_ratio, cfg.params.s_cf, cfg.params.s_if
        );
    }
}

fn cmd_verify(dir: &Path) -> Result<()> {
    let manifest =
        verify_manifest(dir).with_context(|| format!("verifying {}", dir.display()))?;
    println!(
        "stage {} snapshot ok: {} files, grid {}x{}",
        manifest.stage,
        manifest.files.len(),
        manifest.grid_nodes,
        manifest.grid_nodes
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Render(args) => cmd_render(args),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
        Command::Verify { dir } => cmd_verify(&dir),
    }
}
