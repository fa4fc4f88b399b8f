use std::fs;
use std::path::{Path, PathBuf};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::Vec3;

const RECORD: usize = 16;

/// Outcome of reading one velodyne frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VelodyneRead {
    pub cloud: PointCloud,
    /// Records dropped for a non-finite coordinate.
    pub dropped: usize,
}

/// Reads a KITTI velodyne scan: little-endian `f32` quadruples of x, y, z and
/// intensity.
pub fn read_velodyne_bin(path: impl AsRef<Path>) -> Result<VelodyneRead> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % RECORD != 0 {
        return Err(Error::MalformedFrame {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
        });
    }
    let n = bytes.len() / RECORD;
    let mut points = Vec::with_capacity(n);
    let mut intensity = Vec::with_capacity(n);
    let mut dropped = 0;
    for rec in bytes.chunks_exact(RECORD) {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4-byte field"));
        let (x, y, z, i) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            dropped += 1;
            continue;
        }
        points.push(Vec3::new(x as f64, y as f64, z as f64));
        intensity.push(i);
    }
    Ok(VelodyneRead {
        cloud: PointCloud {
            points,
            intensity: Some(intensity),
        },
        dropped,
    })
}

/// Writes a cloud in the velodyne layout. Missing intensities are written as 0.
pub fn write_velodyne_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(cloud.len() * RECORD);
    for (k, p) in cloud.points.iter().enumerate() {
        let i = cloud.intensity.as_ref().and_then(|v| v.get(k)).copied().unwrap_or(0.0);
        for v in [p.x as f32, p.y as f32, p.z as f32, i] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The `.bin` frames of one sequence directory, in file-name order, with
/// timestamps from a sibling `times.txt` when its line count matches.
#[derive(Debug, Clone)]
pub struct FrameSource {
    frames: Vec<PathBuf>,
    times: Option<Vec<f64>>,
}

impl FrameSource {
    /// Accepts either the directory holding the frames or a KITTI sequence
    /// directory with a `velodyne/` subdirectory.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let mut dir = dir.as_ref().to_path_buf();
        if dir.join("velodyne").is_dir() {
            dir.push("velodyne");
        }
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut frames = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "bin") {
                frames.push(path);
            }
        }
        frames.sort();
        let times = [dir.join("times.txt"), dir.join("../times.txt")]
            .iter()
            .find_map(|p| read_times(p).filter(|t| t.len() == frames.len()));
        Ok(Self { frames, times })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.frames
    }

    /// Seconds since the first frame, when known.
    pub fn timestamp(&self, k: usize) -> Option<f64> {
        self.times.as_ref().map(|t| t[k])
    }

    pub fn read(&self, k: usize) -> Result<VelodyneRead> {
        read_velodyne_bin(&self.frames[k])
    }
}

fn read_times(path: &Path) -> Option<Vec<f64>> {
    let text = fs::read_to_string(path).ok()?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().ok())
        .collect()
}
