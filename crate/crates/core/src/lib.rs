//! LiDAR odometry from spherical range image filtering.
//!
//! A raw scan is projected onto a range image ([`sri`]), split into edge,
//! surface and ground pixels with image filters ([`filter`]), lifted back to 3D
//! ([`recon`]) and registered against a trimmed local feature map ([`odom`]).
//! [`eval`] scores trajectories with the KITTI odometry protocol.

pub mod cloud;
pub mod error;
pub mod eval;
pub mod geom;
pub mod filter;
pub mod grid;
pub mod io;
pub mod odom;
pub mod pipeline;
pub mod recon;
pub mod sri;
pub mod synthetic;

pub use cloud::PointCloud;
pub use error::{Error, Result};
pub use geom::{PoseSE3, Twist, Vec3};
pub use grid::Grid;
pub use sri::{SphericalRangeImage, SriParams};
