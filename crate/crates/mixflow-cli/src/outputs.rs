//! Run records, text reports, and PGM heatmap export.

use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use mixflow::error::{Error, Result};
use mixflow::ScalarField;

/// Write the reproducibility record (full argv plus artifact version)
/// beside a command's outputs.
pub fn run_record(dir: &Path, argv: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = File::create(dir.join("run_record.txt"))?;
    writeln!(w, "mixflow {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "{}", argv.join(" "))?;
    Ok(())
}

pub fn report(dir: &Path, name: &str, lines: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = File::create(dir.join(name))?;
    for line in lines {
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Binary PGM (P5) with values affinely mapped from `[min, max]` to
/// `[0, 255]`; the mapping endpoints go to a sidecar `<out>.txt`.
pub fn export_pgm(path: &Path, field: &ScalarField) -> Result<()> {
    let (nx, ny) = (field.grid().nx(), field.grid().ny());
    let lo = field.min_value();
    let hi = field.max_value();
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut bytes = Vec::with_capacity(nx * ny);
    // Image rows run top to bottom; grid rows run bottom to top.
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = ((field.at(i, j) - lo) * scale).round().clamp(0.0, 255.0);
            bytes.push(v as u8);
        }
    }
    let mut w = File::create(path)?;
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    w.write_all(&bytes)?;

    let sidecar = path.with_extension("pgm.txt");
    let mut s = File::create(sidecar)?;
    writeln!(s, "min={lo}")?;
    writeln!(s, "max={hi}")?;
    Ok(())
}

pub fn parent_dir(path: &Path) -> Result<&Path> {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .ok_or_else(|| Error::Config(format!("output path {path:?} has no parent directory")))
}
