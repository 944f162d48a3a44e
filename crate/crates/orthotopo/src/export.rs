//! Result files: element grids as CSV, the convergence history and PPM
//! images.
//!
//! Grids have one CSV row per element row, top row first, and one column per
//! element column. Inactive cells are written as `NaN`. Values use the
//! shortest representation that parses back to the same `f64`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use orthotopo_core::{IterationRecord, OptimizationResult, StructuredMesh, TerminationStatus};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("grid is {found_rows}x{found_cols}, mesh expects {rows}x{cols}")]
    Shape { rows: usize, cols: usize, found_rows: usize, found_cols: usize },
    #[error("cannot parse grid value {0:?}")]
    Value(String),
}

pub const CONVERGENCE_HEADER: [&str; 9] =
    ["iter", "c", "g1", "g2", "g3", "g4", "volume", "max_sigma1", "max_sigma2"];

/// Pixels per element edge in the images.
const PIXELS_PER_ELEMENT: u32 = 4;

/// Element field laid out as rows (top first) of columns.
pub fn field_to_grid(mesh: &StructuredMesh, field: &[f64]) -> Vec<Vec<f64>> {
    (0..mesh.nely())
        .rev()
        .map(|j| {
            (0..mesh.nelx())
                .map(|i| mesh.element_at(i, j).map_or(f64::NAN, |e| field[e]))
                .collect()
        })
        .collect()
}

/// Inverse of [`field_to_grid`]; values in inactive cells are ignored.
pub fn grid_to_field(mesh: &StructuredMesh, grid: &[Vec<f64>]) -> Result<Vec<f64>, ExportError> {
    let (rows, cols) = (mesh.nely(), mesh.nelx());
    let found_cols = grid.first().map_or(0, Vec::len);
    if grid.len() != rows || grid.iter().any(|r| r.len() != cols) {
        return Err(ExportError::Shape { rows, cols, found_rows: grid.len(), found_cols });
    }
    let mut field = vec![0.0; mesh.n_elements()];
    for (r, row) in grid.iter().enumerate() {
        let j = rows - 1 - r;
        for (i, v) in row.iter().enumerate() {
            if let Some(e) = mesh.element_at(i, j) {
                field[e] = *v;
            }
        }
    }
    Ok(field)
}

pub fn write_grid(path: &Path, mesh: &StructuredMesh, field: &[f64]) -> Result<(), ExportError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in field_to_grid(mesh, field) {
        w.write_record(row.iter().map(|v| if v.is_nan() { "NaN".to_string() } else { v.to_string() }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<Vec<Vec<f64>>, ExportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut grid = Vec::new();
    for record in r.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| ExportError::Value(s.to_string())))
            .collect::<Result<Vec<f64>, _>>()?;
        grid.push(row);
    }
    Ok(grid)
}

pub fn write_convergence(path: &Path, history: &[IterationRecord]) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONVERGENCE_HEADER)?;
    for h in history {
        let g = h.stress_constraints;
        w.write_record([
            h.iter.to_string(),
            h.compliance.to_string(),
            g[0].to_string(),
            g[1].to_string(),
            g[2].to_string(),
            g[3].to_string(),
            h.volume.to_string(),
            h.max_sigma[0].to_string(),
            h.max_sigma[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Grayscale density image, solid black and void white; inactive cells are
/// drawn light grey.
pub fn density_image(mesh: &StructuredMesh, rho: &[f64]) -> RgbImage {
    paint(mesh, |e| {
        let v = (255.0 * (1.0 - rho[e].clamp(0.0, 1.0))).round() as u8;
        Rgb([v, v, v])
    })
}

/// Diverging blue-white-red map on the symmetric range `[-m, m]`, with `m`
/// the largest magnitude in the field.
pub fn stress_image(mesh: &StructuredMesh, sigma: &[f64]) -> RgbImage {
    let m = sigma.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    paint(mesh, |e| {
        let t = if m > 0.0 { (sigma[e] / m).clamp(-1.0, 1.0) } else { 0.0 };
        let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
        if t >= 0.0 {
            Rgb([255, fade(t), fade(t)])
        } else {
            Rgb([fade(t), fade(t), 255])
        }
    })
}

fn paint(mesh: &StructuredMesh, color: impl Fn(usize) -> Rgb<u8>) -> RgbImage {
    let s = PIXELS_PER_ELEMENT;
    let (w, h) = (mesh.nelx() as u32, mesh.nely() as u32);
    RgbImage::from_fn(w * s, h * s, |x, y| {
        let i = (x / s) as usize;
        let j = (h - 1 - y / s) as usize;
        mesh.element_at(i, j).map_or(Rgb([200, 200, 200]), &color)
    })
}

fn write_summary(path: &Path, result: &OptimizationResult) -> Result<(), ExportError> {
    let mut f = BufWriter::new(File::create(path)?);
    let status = match result.status {
        TerminationStatus::Converged => "converged",
        TerminationStatus::MaxIterations => "max_iterations",
    };
    writeln!(f, "status = {status}")?;
    writeln!(f, "iterations = {}", result.iterations())?;
    writeln!(f, "compliance = {}", result.compliance)?;
    writeln!(f, "volume = {}", result.volume)?;
    writeln!(f, "max_sigma1 = {}", result.max_abs_stress(0, &result.excluded))?;
    writeln!(f, "max_sigma2 = {}", result.max_abs_stress(1, &result.excluded))?;
    f.flush()?;
    Ok(())
}

/// Writes every result file into `dir`, creating it if needed.
pub fn export_fields(result: &OptimizationResult, mesh: &StructuredMesh, dir: &Path) -> Result<(), ExportError> {
    fs::create_dir_all(dir)?;
    let sigma1 = result.stress.component(0);
    let sigma2 = result.stress.component(1);
    write_grid(&dir.join("density.csv"), mesh, &result.design.rho)?;
    write_grid(&dir.join("theta.csv"), mesh, &result.design.theta)?;
    write_grid(&dir.join("sigma1.csv"), mesh, &sigma1)?;
    write_grid(&dir.join("sigma2.csv"), mesh, &sigma2)?;
    write_convergence(&dir.join("convergence.csv"), &result.history)?;
    write_summary(&dir.join("summary.txt"), result)?;
    density_image(mesh, &result.design.rho).save_with_format(dir.join("density.ppm"), ImageFormat::Pnm)?;
    stress_image(mesh, &sigma1).save_with_format(dir.join("sigma1.ppm"), ImageFormat::Pnm)?;
    stress_image(mesh, &sigma2).save_with_format(dir.join("sigma2.ppm"), ImageFormat::Pnm)?;
    Ok(())
}
