//! Scene files: `image.pgm`, `labels.csv`, `density.pgm`, `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FlowSpec, Label, Scene};
use crate::error::{Error, Result};
use crate::imgproc::write_pgm;

pub const CSV_HEADER: &str = "id,x_px,y_px,z,a_px,b_px,phi_rad,E,circularity,edge_ratio,area_px2,clipped";

/// One line of `labels.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub id: usize,
    pub x_px: f64,
    pub y_px: f64,
    pub z: f64,
    pub a_px: f64,
    pub b_px: f64,
    pub phi_rad: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub circularity: f64,
    pub edge_ratio: f64,
    pub area_px2: f64,
    /// 1 when the bubble is cropped by the image edge.
    pub clipped: u8,
}

impl From<&Label> for LabelRow {
    fn from(l: &Label) -> Self {
        LabelRow {
            id: l.id,
            x_px: l.x,
            y_px: l.y,
            z: l.z,
            a_px: l.a,
            b_px: l.b,
            phi_rad: l.phi,
            e: l.e,
            circularity: l.psi,
            edge_ratio: l.m,
            area_px2: l.area,
            clipped: l.clipped as u8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub spec: FlowSpec,
    pub seed: u64,
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// `density.pgm` stores `min(1, density * density_scale)` on the 8-bit grid.
    pub density_scale: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

/// Writes the four scene files into `dir` (created if missing) and returns their paths.
pub fn export(scene: &Scene, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = ["image.pgm", "labels.csv", "density.pgm", "meta.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect();

    write_pgm(&paths[0], &scene.image)?;

    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&paths[1])
        .map_err(|e| csv_error(&paths[1], e))?;
    w.write_record(CSV_HEADER.split(',')).map_err(|e| csv_error(&paths[1], e))?;
    for l in &scene.labels.labels {
        w.serialize(LabelRow::from(l)).map_err(|e| csv_error(&paths[1], e))?;
    }
    w.flush().map_err(|e| Error::io(&paths[1], e))?;

    let peak = scene.density.max();
    let density_scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    write_pgm(&paths[2], &scene.density.to_raster(density_scale))?;

    let meta = SceneMeta {
        spec: scene.labels.spec.clone(),
        seed: scene.labels.seed,
        count: scene.labels.count(),
        width: scene.image.width(),
        height: scene.image.height(),
        density_scale,
    };
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&paths[3], json + "\n").map_err(|e| Error::io(&paths[3], e))?;
    Ok(paths)
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<LabelRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format(format!("{}: unexpected header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<SceneMeta> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
