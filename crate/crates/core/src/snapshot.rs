//! On-disk state: one binary file per field plus a fibre table and a
//! checksummed manifest, grouped in a directory per stage.
//!
//! A field file starts with a 32-byte space-padded ASCII header holding the
//! magic, the grid side lengths, and the field name, followed by the values
//! as little-endian doubles in row-major order.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fibres::FibreLayer;
use crate::grid::TumourRegion;
use crate::macroscale::MacroFields;

pub const MAGIC: &str = "OVSIM1";
pub const HEADER_LEN: usize = 32;

fn snapshot_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Snapshot {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Serialises a field to the header-plus-doubles layout.
pub fn encode_field(n: usize, name: &str, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != n * n {
        return Err(Error::Grid(format!(
            "field {name} holds {} values, expected {}",
            values.len(),
            n * n
        )));
    }
    let header = format!("{MAGIC} {n} {n} {name}");
    if header.len() > HEADER_LEN {
        return Err(Error::Grid(format!(
            "field name {name} does not fit the {HEADER_LEN}-byte header"
        )));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + values.len() * 8);
    buf.extend_from_slice(header.as_bytes());
    buf.resize(HEADER_LEN, b' ');
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn write_field(path: &Path, n: usize, name: &str, values: &[f64]) -> Result<()> {
    let buf = encode_field(n, name, values)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a field file back as (grid side, field name, values).
pub fn read_field(path: &Path) -> Result<(usize, String, Vec<f64>)> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; HEADER_LEN];
    file.read_exact(&mut header)
        .map_err(|e| snapshot_err(path, format!("short header: {e}")))?;
    let text = std::str::from_utf8(&header)
        .map_err(|_| snapshot_err(path, "header is not ASCII"))?
        .trim_end()
        .to_string();
    let mut parts = text.split_whitespace();
    let magic = parts.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(snapshot_err(path, format!("bad magic {magic:?}")));
    }
    let rows: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| snapshot_err(path, "missing row count"))?;
    let cols: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| snapshot_err(path, "missing column count"))?;
    if rows != cols {
        return Err(snapshot_err(path, format!("grid is not square: {rows}x{cols}")));
    }
    let name = parts
        .next()
        .ok_or_else(|| snapshot_err(path, "missing field name"))?
        .to_string();
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(snapshot_err(
            path,
            format!("expected {} value bytes, found {}", rows * cols * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, name, values))
}

/// Writes the per-node fibre table: position, orientation, magnitude.
pub fn encode_fibres_csv(fibres: &FibreLayer) -> String {
    let grid = fibres.grid();
    let mut out = String::from("x1,x2,theta1,theta2,f\n");
    for k in 0..grid.nodes() {
        let p = grid.pos_of(k);
        let t = fibres.orientations()[k];
        let m = fibres.magnitudes()[k];
        out.push_str(&format!("{},{},{},{},{}\n", p[0], p[1], t[0], t[1], m));
    }
    out
}

/// Parses the fibre table back into rows of five numbers.
pub fn parse_fibres_csv(text: &str) -> Result<Vec<[f64; 5]>> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            if line != "x1,x2,theta1,theta2,f" {
                return Err(Error::Solver(format!("unexpected fibre csv header {line:?}")));
            }
            continue;
        }
        let mut row = [0.0; 5];
        let mut fields = line.split(',');
        for slot in &mut row {
            *slot = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Solver(format!("bad fibre csv line {}", ln + 1)))?;
        }
        if fields.next().is_some() {
            return Err(Error::Solver(format!("trailing fields on fibre csv line {}", ln + 1)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SnapshotManifest {
    pub stage: usize,
    pub grid_nodes: usize,
    pub files: Vec<ManifestEntry>,
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Directory name for a stage snapshot.
pub fn stage_dir(out_dir: &Path, stage: usize) -> PathBuf {
    out_dir.join(format!("stage_{stage:04}"))
}

/// Writes every field, the tumour mask, the fibre table, and a manifest
/// with one checksum per file, into `stage_dir(out_dir, stage)`.
pub fn write_snapshot(
    out_dir: &Path,
    stage: usize,
    fields: &MacroFields,
    region: &TumourRegion,
    fibres: &FibreLayer,
) -> Result<SnapshotManifest> {
    let grid = fields.c.grid();
    let n = grid.n();
    let dir = stage_dir(out_dir, stage);
    std::fs::create_dir_all(&dir)?;

    let matrix: Vec<f64> = fields
        .ecm
        .values()
        .iter()
        .zip(fibres.magnitudes())
        .map(|(e, f)| e + f)
        .collect();
    let omega: Vec<f64> = region
        .mask()
        .iter()
        .map(|&m| if m { 1.0 } else { 0.0 })
        .collect();

    let mut files = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let file_name = format!("{name}.{}", if name == "fibres" { "csv" } else { "field" });
        let path = dir.join(&file_name);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(&bytes)?;
        files.push(ManifestEntry {
            name: name.to_string(),
            path: file_name,
            sha256: hex_digest(&bytes),
        });
        Ok(())
    };

    put("c", encode_field(n, "c", fields.c.values())?)?;
    put("i", encode_field(n, "i", fields.i.values())?)?;
    put("ecm", encode_field(n, "ecm", fields.ecm.values())?)?;
    put("fibre", encode_field(n, "fibre", fibres.magnitudes())?)?;
    put("matrix", encode_field(n, "matrix", &matrix)?)?;
    put("v", encode_field(n, "v", fields.v.values())?)?;
    put("omega", encode_field(n, "omega", &omega)?)?;
    put("fibres", encode_fibres_csv(fibres).into_bytes())?;

    let manifest = SnapshotManifest {
        stage,
        grid_nodes: n,
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| snapshot_err(&dir, e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Re-hashes every file a manifest lists and fails on any mismatch.
pub fn verify_manifest(dir: &Path) -> Result<SnapshotManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path)?;
    let manifest: SnapshotManifest =
        serde_json::from_str(&text).map_err(|e| snapshot_err(&path, e.to_string()))?;
    for entry in &manifest.files {
        let file_path = dir.join(&entry.path);
        let bytes = std::fs::read(&file_path)?;
        let got = hex_digest(&bytes);
        if got != entry.sha256 {
            return Err(snapshot_err(
                &file_path,
                format!("checksum mismatch: manifest {} actual {got}", entry.sha256),
            ));
        }
    }
    Ok(manifest)
}
