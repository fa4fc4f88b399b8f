use crate::geom::{PoseSE3, Vec3};

/// An unordered set of 3D points in meters, optionally with per-point intensity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Parallel to `points` when present. Carried through IO, unused by the method.
    pub intensity: Option<Vec<f32>>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        Self {
            points,
            intensity: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vec3> {
        self.points.iter()
    }

    pub fn transformed(&self, pose: &PoseSE3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            intensity: self.intensity.clone(),
        }
    }

    /// Appends another cloud. Intensity is kept only when both sides carry it.
    pub fn extend_from(&mut self, other: &PointCloud) {
        match (&mut self.intensity, &other.intensity) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (Some(_), None) => self.intensity = None,
            (None, Some(_)) if self.points.is_empty() => self.intensity = other.intensity.clone(),
            _ => {}
        }
        self.points.extend_from_slice(&other.points);
    }
}

impl FromIterator<Vec3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Vec3>>(iter: I) -> Self {
        Self::from_points(iter.into_iter().collect())
    }
}
