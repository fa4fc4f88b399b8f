use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{orthonormalize, Mat3, PoseSE3, Vec3};

/// One pose per frame, mapping frame-k coordinates into frame 0.
pub type Trajectory = Vec<PoseSE3>;

/// Rotation drift beyond which a parsed pose is re-orthonormalized.
const REORTHO_TOLERANCE: f64 = 1e-6;
const SIGNIFICANT_DIGITS: usize = 9;

/// `%g`-style rendering with nine significant digits.
fn format_g(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { format!("{v}") };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIGNIFICANT_DIGITS as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Row-major `[R | t]` as twelve space-separated numbers.
pub fn format_pose_line(pose: &PoseSE3) -> String {
    let mut line = String::new();
    for i in 0..3 {
        for j in 0..4 {
            let v = if j < 3 { pose.rotation[(i, j)] } else { pose.translation[i] };
            if !line.is_empty() {
                line.push(' ');
            }
            let _ = write!(line, "{}", format_g(v));
        }
    }
    line
}

/// Parses one pose line; the error carries the reason only.
pub fn parse_pose_line(line: &str) -> std::result::Result<PoseSE3, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 12 {
        return Err(format!("expected 12 fields, found {}", fields.len()));
    }
    let mut v = [0.0f64; 12];
    for (slot, f) in v.iter_mut().zip(&fields) {
        *slot = f.parse().map_err(|_| format!("not a number: {f:?}"))?;
        if !slot.is_finite() {
            return Err(format!("non-finite value: {f:?}"));
        }
    }
    let mut rotation = Mat3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
    let translation = Vec3::new(v[3], v[7], v[11]);
    let pose = PoseSE3::new(rotation, translation);
    if pose.orthonormality_error() > REORTHO_TOLERANCE {
        rotation = orthonormalize(&rotation);
        if !rotation.iter().all(|x| x.is_finite()) || rotation.determinant() <= 0.0 {
            return Err("rotation block is not a rotation".into());
        }
        return Ok(PoseSE3::new(rotation, translation));
    }
    Ok(pose)
}

pub fn write_kitti_poses(traj: &[PoseSE3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(traj.len() * 128);
    for pose in traj {
        text.push_str(&format_pose_line(pose));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a KITTI pose file. Blank lines are ignored.
pub fn read_kitti_poses(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pose = parse_pose_line(line).map_err(|reason| Error::MalformedPoseLine {
            path: path.to_path_buf(),
            line: k + 1,
            reason,
        })?;
        out.push(pose);
    }
    Ok(out)
}

/// Reads the `Tr:` entry of a KITTI `calib.txt`: the LiDAR-to-camera
/// extrinsic, in the same 12-number layout as a pose line.
pub fn read_kitti_calib(path: impl AsRef<Path>) -> Result<PoseSE3> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line, reason: String| Error::MalformedPoseLine {
        path: path.to_path_buf(),
        line,
        reason,
    };
    for (k, line) in text.lines().enumerate() {
        if let Some(rest) = line.trim_start().strip_prefix("Tr:") {
            return parse_pose_line(rest).map_err(|r| malformed(k + 1, r));
        }
    }
    Err(malformed(0, "no `Tr:` entry".into()))
}
