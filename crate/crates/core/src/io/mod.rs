//! KITTI frame and pose files, flat configuration files and debug dumps.

mod config;
mod dump;
mod frames;
mod poses;

pub use config::{apply_config, load_config, parse_config, CONFIG_KEYS};
pub use dump::{write_pgm, write_ply};
pub use frames::{read_velodyne_bin, write_velodyne_bin, FrameSource, VelodyneRead};
pub use poses::{format_pose_line, parse_pose_line, read_kitti_calib, read_kitti_poses, write_kitti_poses, Trajectory};
