//! Field snapshot files, trajectory directories, and CSV diagnostics.
//!
//! Snapshot format (`.fld`): one ASCII metadata line terminated by LF --
//! magic `MIXFLD1`, then `key=value` pairs `nx ny lx ly time kind name` --
//! followed by the raw little-endian IEEE-754 float64 payload, row-major
//! with the y-index outer, x-component block then y-component block for
//! vectors. Floats in headers and CSV are printed with Rust's shortest
//! round-trip formatting, so write-then-read is bit-exact.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::control::ControlPath;
use crate::error::{Error, Result};
use crate::euler::VelocityTrajectory;
use crate::field::{ScalarField, VectorField};
use crate::grid::Grid;
use crate::transport::DensityTrajectory;

const MAGIC: &str = "MIXFLD1";

/// Metadata carried by a snapshot file.
#[derive(Debug, Clone)]
pub struct FieldMeta {
    pub time: f64,
    pub name: String,
}

/// A loaded snapshot of either kind.
#[derive(Debug, Clone)]
pub enum AnyField {
    Scalar(ScalarField),
    Vector(VectorField),
}

fn sanitize(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    if cleaned.is_empty() {
        "field".into()
    } else {
        cleaned
    }
}

fn write_header(
    w: &mut impl Write,
    grid: &Grid,
    time: f64,
    kind: &str,
    name: &str,
) -> Result<()> {
    writeln!(
        w,
        "{MAGIC} nx={} ny={} lx={} ly={} time={} kind={kind} name={}",
        grid.nx(),
        grid.ny(),
        grid.lx(),
        grid.ly(),
        time,
        sanitize(name)
    )?;
    Ok(())
}

fn write_payload(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_scalar_field(
    path: impl AsRef<Path>,
    field: &ScalarField,
    time: f64,
    name: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, field.grid(), time, "scalar", name)?;
    write_payload(&mut w, field.values())?;
    w.flush()?;
    Ok(())
}

pub fn write_vector_field(
    path: impl AsRef<Path>,
    field: &VectorField,
    time: f64,
    name: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, field.grid(), time, "vector", name)?;
    write_payload(&mut w, field.x().values())?;
    write_payload(&mut w, field.y().values())?;
    w.flush()?;
    Ok(())
}

struct Header {
    grid: Grid,
    time: f64,
    kind: String,
    name: String,
}

fn parse_header(line: &str) -> Result<Header> {
    let mut tokens = line.split_whitespace();
    match tokens.next() {
        Some(m) if m == MAGIC => {}
        other => {
            return Err(Error::Format(format!(
                "bad magic: expected {MAGIC}, got {other:?}"
            )))
        }
    }
    let mut nx = None;
    let mut ny = None;
    let mut lx = None;
    let mut ly = None;
    let mut time = None;
    let mut kind = None;
    let mut name = None;
    for tok in tokens {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header token '{tok}'")))?;
        match key {
            "nx" => nx = Some(parse_usize(value)?),
            "ny" => ny = Some(parse_usize(value)?),
            "lx" => lx = Some(parse_f64(value)?),
            "ly" => ly = Some(parse_f64(value)?),
            "time" => time = Some(parse_f64(value)?),
            "kind" => kind = Some(value.to_string()),
            "name" => name = Some(value.to_string()),
            other => return Err(Error::Format(format!("unknown header key '{other}'"))),
        }
    }
    let (nx, ny, lx, ly) = match (nx, ny, lx, ly) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return Err(Error::Format("header is missing grid keys".into())),
    };
    let grid = Grid::new(nx, ny, lx, ly)
        .map_err(|e| Error::Format(format!("invalid grid in header: {e}")))?;
    Ok(Header {
        grid,
        time: time.ok_or_else(|| Error::Format("header missing time".into()))?,
        kind: kind.ok_or_else(|| Error::Format("header missing kind".into()))?,
        name: name.ok_or_else(|| Error::Format("header missing name".into()))?,
    })
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad integer '{s}'")))
}

fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Format(format!("bad float '{s}'")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("non-finite float '{s}'")));
    }
    Ok(v)
}

fn read_exact_payload(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "payload has {} bytes, header declares {} values ({} bytes)",
            bytes.len(),
            count,
            count * 8
        )));
    }
    let mut out = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk size 8"));
        if !v.is_finite() {
            return Err(Error::Format("payload contains non-finite values".into()));
        }
        out.push(v);
    }
    Ok(out)
}

/// Read a snapshot of either kind.
pub fn read_field(path: impl AsRef<Path>) -> Result<(AnyField, FieldMeta)> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = parse_header(line.trim_end_matches('\n'))?;
    let meta = FieldMeta {
        time: header.time,
        name: header.name.clone(),
    };
    let n = header.grid.len();
    match header.kind.as_str() {
        "scalar" => {
            let values = read_exact_payload(&mut r, n)?;
            Ok((
                AnyField::Scalar(ScalarField::from_values(header.grid, values)?),
                meta,
            ))
        }
        "vector" => {
            let values = read_exact_payload(&mut r, 2 * n)?;
            let x = ScalarField::from_values(header.grid, values[..n].to_vec())?;
            let y = ScalarField::from_values(header.grid, values[n..].to_vec())?;
            Ok((
                AnyField::Vector(VectorField::from_components(x, y)?),
                meta,
            ))
        }
        other => Err(Error::Format(format!("unknown field kind '{other}'"))),
    }
}

pub fn read_scalar_field(path: impl AsRef<Path>) -> Result<(ScalarField, FieldMeta)> {
    match read_field(path)? {
        (AnyField::Scalar(f), meta) => Ok((f, meta)),
        (AnyField::Vector(_), _) => Err(Error::Format(
            "expected a scalar field, found a vector field".into(),
        )),
    }
}

pub fn read_vector_field(path: impl AsRef<Path>) -> Result<(VectorField, FieldMeta)> {
    match read_field(path)? {
        (AnyField::Vector(f), meta) => Ok((f, meta)),
        (AnyField::Scalar(_), _) => Err(Error::Format(
            "expected a vector field, found a scalar field".into(),
        )),
    }
}

/// Write `(time, filename)` manifest lines in increasing time order.
fn write_manifest(path: &Path, entries: &[(f64, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (t, f) in entries {
        writeln!(w, "{t} {f}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (t, f) = line
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("malformed manifest line '{line}'")))?;
        out.push((parse_f64(t)?, dir.join(f)));
    }
    if out.is_empty() {
        return Err(Error::Format("empty trajectory manifest".into()));
    }
    if !out.windows(2).all(|w| w[1].0 > w[0].0) {
        return Err(Error::Format(
            "manifest times must be strictly increasing".into(),
        ));
    }
    Ok(out)
}

/// Write a density trajectory as numbered snapshots plus `manifest.txt`.
pub fn write_density_trajectory(
    dir: impl AsRef<Path>,
    traj: &DensityTrajectory,
    name: &str,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (i, (&t, rho)) in traj.times().iter().zip(traj.snapshots()).enumerate() {
        let fname = format!("{name}_{i:06}.fld");
        write_scalar_field(dir.join(&fname), rho, t, name)?;
        entries.push((t, fname));
    }
    write_manifest(&dir.join("manifest.txt"), &entries)
}

pub fn read_density_trajectory(dir: impl AsRef<Path>) -> Result<DensityTrajectory> {
    let entries = read_manifest(&dir.as_ref().join("manifest.txt"))?;
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    for (t, path) in entries {
        let (f, _) = read_scalar_field(&path)?;
        times.push(t);
        snapshots.push(f);
    }
    DensityTrajectory::new(times, snapshots, format!("loaded({})", dir.as_ref().display()))
}

/// Write velocity and vorticity snapshot families with one manifest each.
pub fn write_velocity_trajectory(dir: impl AsRef<Path>, traj: &VelocityTrajectory) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut vel_entries = Vec::new();
    let mut vor_entries = Vec::new();
    for (i, &t) in traj.times().iter().enumerate() {
        let vel_name = format!("vel_{i:06}.fld");
        let vor_name = format!("vor_{i:06}.fld");
        write_vector_field(dir.join(&vel_name), &traj.velocities()[i], t, "velocity")?;
        write_scalar_field(dir.join(&vor_name), &traj.vorticities()[i], t, "vorticity")?;
        vel_entries.push((t, vel_name));
        vor_entries.push((t, vor_name));
    }
    write_manifest(&dir.join("manifest_velocity.txt"), &vel_entries)?;
    write_manifest(&dir.join("manifest_vorticity.txt"), &vor_entries)
}

pub fn read_velocity_trajectory(dir: impl AsRef<Path>) -> Result<VelocityTrajectory> {
    let dir = dir.as_ref();
    let vel = read_manifest(&dir.join("manifest_velocity.txt"))?;
    let vor = read_manifest(&dir.join("manifest_vorticity.txt"))?;
    if vel.len() != vor.len() {
        return Err(Error::Format(
            "velocity and vorticity manifests disagree".into(),
        ));
    }
    let mut times = Vec::new();
    let mut velocities = Vec::new();
    let mut vorticities = Vec::new();
    for ((t, vpath), (_, wpath)) in vel.into_iter().zip(vor) {
        times.push(t);
        velocities.push(read_vector_field(&vpath)?.0);
        vorticities.push(read_scalar_field(&wpath)?.0);
    }
    VelocityTrajectory::new(times, velocities, vorticities)
}

/// Store a control path: one streamfunction snapshot per node, a manifest,
/// and the mean-flow table (`mean_flow.csv`: time, mean_x, mean_y).
pub fn write_control_path(dir: impl AsRef<Path>, path: &ControlPath) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for n in 0..path.node_count() {
        let t = path.node_time(n);
        let fname = format!("psi_{n:04}.fld");
        write_scalar_field(dir.join(&fname), &path.streamfunctions()[n], t, "psi")?;
        entries.push((t, fname));
    }
    write_manifest(&dir.join("control_manifest.txt"), &entries)?;
    let rows: Vec<Vec<f64>> = (0..path.node_count())
        .map(|n| {
            let m = path.mean_flows()[n];
            vec![path.node_time(n), m[0], m[1]]
        })
        .collect();
    write_csv(dir.join("mean_flow.csv"), "time,mean_x,mean_y", &rows)
}

pub fn read_control_path(dir: impl AsRef<Path>) -> Result<ControlPath> {
    let dir = dir.as_ref();
    let entries = read_manifest(&dir.join("control_manifest.txt"))?;
    let horizon = entries.last().expect("nonempty").0;
    let mut psi = Vec::new();
    for (_, path) in &entries {
        psi.push(read_scalar_field(path)?.0);
    }
    let mean_rows = read_csv(&dir.join("mean_flow.csv"))?;
    if mean_rows.len() != entries.len() {
        return Err(Error::Format(
            "mean_flow.csv row count disagrees with the control manifest".into(),
        ));
    }
    let mean_flow = mean_rows.iter().map(|r| [r[1], r[2]]).collect();
    let grid = *psi[0].grid();
    ControlPath::from_gauged_parts(grid, horizon, psi, mean_flow)
}

/// Plain CSV with a header row; floats use shortest round-trip formatting.
pub fn write_csv(path: impl AsRef<Path>, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        let line = row
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a numeric CSV, skipping the header row.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(parse_f64)
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
