//! Voxelized local feature map with a kd-tree per layer.

use std::collections::BTreeMap;

use super::kdtree::KdTree;
use crate::cloud::PointCloud;
use crate::geom::Vec3;
use crate::recon::{voxel_key, VoxelConfig, VoxelKey};

/// One feature class of the map. Each occupied voxel keeps the running
/// centroid of every point ever inserted into it.
#[derive(Debug, Clone)]
pub struct MapLayer {
    voxel: VoxelConfig,
    cells: BTreeMap<VoxelKey, (Vec3, usize)>,
    loose: Vec<Vec3>,
    index: KdTree,
}

impl MapLayer {
    pub fn new(voxel: VoxelConfig) -> Self {
        Self {
            voxel,
            cells: BTreeMap::new(),
            loose: Vec::new(),
            index: KdTree::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Stored points, in index order.
    pub fn points(&self) -> &[Vec3] {
        self.index.points()
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    fn insert(&mut self, points: impl IntoIterator<Item = Vec3>) {
        if self.voxel.enabled {
            for p in points {
                let cell = self.cells.entry(voxel_key(&p, self.voxel.leaf_edge)).or_insert((Vec3::zeros(), 0));
                cell.0 += p;
                cell.1 += 1;
            }
        } else {
            self.loose.extend(points);
        }
    }

    fn trim(&mut self, center: &Vec3, half_width: f64) {
        let inside = |p: &Vec3| (p - center).amax() <= half_width;
        self.cells.retain(|_, (sum, n)| inside(&(*sum / *n as f64)));
        self.loose.retain(inside);
    }

    fn rebuild(&mut self) {
        let mut pts: Vec<Vec3> = self.cells.values().map(|(sum, n)| sum / *n as f64).collect();
        pts.extend_from_slice(&self.loose);
        self.index = KdTree::new(pts);
    }
}

/// Edge and surface maps in world coordinates.
#[derive(Debug, Clone)]
pub struct LocalFeatureMap {
    pub edge: MapLayer,
    pub surface: MapLayer,
    pub trim_radius: f64,
}

impl LocalFeatureMap {
    pub fn new(edge_voxel: VoxelConfig, surface_voxel: VoxelConfig, trim_radius: f64) -> Self {
        Self {
            edge: MapLayer::new(edge_voxel),
            surface: MapLayer::new(surface_voxel),
            trim_radius,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edge.is_empty() && self.surface.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edge.len() + self.surface.len()
    }

    /// Adds world-frame points, drops everything outside the box of half-width
    /// `trim_radius` around `center` and rebuilds both indices.
    pub fn insert_and_trim(&mut self, edge: &PointCloud, surface: &[&PointCloud], center: &Vec3) {
        self.edge.insert(edge.iter().copied());
        for cloud in surface {
            self.surface.insert(cloud.iter().copied());
        }
        for layer in [&mut self.edge, &mut self.surface] {
            layer.trim(center, self.trim_radius);
            layer.rebuild();
        }
    }
}
