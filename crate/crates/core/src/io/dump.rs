use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Writes an 8-bit binary PGM. Valid pixels span gray levels 1..=255 from
/// their minimum to maximum value; invalid pixels are black.
pub fn write_pgm(path: impl AsRef<Path>, values: &Grid<f64>, valid: &Grid<bool>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = (values.rows(), values.cols());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..rows {
        for j in 0..cols {
            if *valid.get(i, j) {
                lo = lo.min(*values.get(i, j));
                hi = hi.max(*values.get(i, j));
            }
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for i in 0..rows {
        for j in 0..cols {
            bytes.push(if *valid.get(i, j) {
                1 + ((values.get(i, j) - lo) / span * 254.0).round() as u8
            } else {
                0
            });
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes an ASCII PLY with one RGB color per cloud.
pub fn write_ply(path: impl AsRef<Path>, layers: &[(&PointCloud, [u8; 3])]) -> Result<()> {
    let path = path.as_ref();
    let n: usize = layers.iter().map(|(c, _)| c.len()).sum();
    let mut text = format!(
        "ply\nformat ascii 1.0\nelement vertex {n}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    );
    for (cloud, [r, g, b]) in layers {
        for p in &cloud.points {
            let _ = writeln!(text, "{} {} {} {r} {g} {b}", p.x as f32, p.y as f32, p.z as f32);
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
