//! Dataset ingestion, LiDAR simulation and registration-pair distillation.

mod distill;
mod kitti;
mod manifest;
mod scenario;
mod sequence;
mod sim;

pub use distill::{
    check_pairs, distill_pairs, read_pair_list, write_pair_list, DistilledPair, PairSource, PairSpec,
};
pub use kitti::{
    load_kitti_bin, load_pose_file, parse_kitti_bin, parse_pose_text, write_kitti_bin, write_pose_file,
    encode_kitti_bin, format_pose_text,
};
pub use manifest::{frame_file_name, load_dataset, write_dataset, DatasetMetadata, FRAMES_DIR, METADATA_FILE, POSES_FILE};
pub use scenario::TwoLaneScenario;
pub use sequence::{Frame, FrameSequence};
pub use sim::{
    arc_trajectory, line_trajectory, simulate_scan, simulate_sequence, simulate_world, Aabb, Cylinder, LidarConfig,
    Obstacle, WorldModel, DEFAULT_SENSOR_HEIGHT,
};
