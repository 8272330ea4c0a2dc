//! Parsing of field and control inputs: built-in presets or snapshot files.

use std::path::Path;

use mixflow::error::{Error, Result};
use mixflow::{io, presets, ControlPath, Grid, ScalarField, VectorField};

/// Density input: a preset name or a `.fld` path.
///
/// Presets: `stripe`, `stripe-shifted:<a>`, `disk`, `uniform[:<value>]`,
/// `random` (seeded band-limited noise around 1).
pub fn density(spec: &str, grid: Grid, seed: u64) -> Result<ScalarField> {
    if looks_like_path(spec) {
        let (field, _) = io::read_scalar_field(spec)?;
        return Ok(field);
    }
    match spec {
        "stripe" => Ok(presets::stripe(grid, 0.0)),
        "disk" => Ok(presets::disk(grid)),
        "uniform" => Ok(ScalarField::constant(grid, 1.0)),
        "random" => Ok(presets::random_density(grid, seed, 6)),
        _ => {
            if let Some(shift) = spec.strip_prefix("stripe-shifted:") {
                let a: f64 = shift
                    .parse()
                    .map_err(|_| Error::Config(format!("bad stripe shift '{shift}'")))?;
                return Ok(presets::stripe(grid, a));
            }
            if let Some(value) = spec.strip_prefix("uniform:") {
                let c: f64 = value
                    .parse()
                    .map_err(|_| Error::Config(format!("bad uniform value '{value}'")))?;
                return Ok(ScalarField::constant(grid, c));
            }
            Err(Error::Config(format!(
                "unknown density '{spec}' (expected stripe, stripe-shifted:<a>, disk, \
                 uniform[:<v>], random, or a .fld path)"
            )))
        }
    }
}

/// Velocity input: a preset name or a `.fld` path.
///
/// Presets: `taylor-green`, `shear`, `random`, `constant:<vx>,<vy>`.
pub fn velocity(spec: &str, grid: Grid, seed: u64, amplitude: f64) -> Result<VectorField> {
    if looks_like_path(spec) {
        let (field, _) = io::read_vector_field(spec)?;
        return Ok(field);
    }
    match spec {
        "taylor-green" => Ok(presets::taylor_green(grid, amplitude)),
        "shear" => Ok(presets::shear(grid, amplitude)),
        "random" => Ok(presets::random_velocity(grid, seed, 6, amplitude)),
        _ => {
            if let Some(rest) = spec.strip_prefix("constant:") {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() == 2 {
                    let vx: f64 = parts[0]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad constant velocity '{rest}'")))?;
                    let vy: f64 = parts[1]
                        .parse()
                        .map_err(|_| Error::Config(format!("bad constant velocity '{rest}'")))?;
                    return Ok(VectorField::from_fn(grid, |_, _| (vx, vy)));
                }
                return Err(Error::Config(format!(
                    "constant velocity needs two components, got '{rest}'"
                )));
            }
            Err(Error::Config(format!(
                "unknown velocity '{spec}' (expected taylor-green, shear, random, \
                 constant:<vx>,<vy>, or a .fld path)"
            )))
        }
    }
}

/// Control input for transport runs: a stored control-path directory or a
/// steady velocity preset.
pub enum ControlInput {
    Path(ControlPath),
    Steady(VectorField),
}

pub fn control(spec: &str, grid: Grid, seed: u64, amplitude: f64) -> Result<ControlInput> {
    let p = Path::new(spec);
    if p.is_dir() {
        return Ok(ControlInput::Path(io::read_control_path(p)?));
    }
    Ok(ControlInput::Steady(velocity(spec, grid, seed, amplitude)?))
}

fn looks_like_path(spec: &str) -> bool {
    spec.ends_with(".fld") || spec.contains('/') || spec.contains('\\')
}
