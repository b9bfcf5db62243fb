//! Synthetic dataset layout: `frames/NNNNNN.bin`, `poses.txt`, `metadata.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kitti::{format_pose_text, load_kitti_bin, load_pose_file, write_kitti_bin};
use super::{FrameSequence, LidarConfig, WorldModel};
use crate::{Error, Result};

pub const FRAMES_DIR: &str = "frames";
pub const POSES_FILE: &str = "poses.txt";
pub const METADATA_FILE: &str = "metadata.json";

/// Provenance written next to a simulated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub seed: u64,
    pub frames: usize,
    pub lidar: LidarConfig,
    pub world: WorldModel,
    /// Row-major 3×4 sensor poses, same content as the pose file.
    pub trajectory: Vec<[f64; 12]>,
}

impl DatasetMetadata {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedFile(format!("{METADATA_FILE}: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }
}

pub fn frame_file_name(i: usize) -> String {
    format!("{i:06}.bin")
}

/// Writes a sequence into `dir`, which must exist and be empty of dataset files.
pub fn write_dataset(dir: &Path, seq: &FrameSequence, meta: &DatasetMetadata) -> Result<()> {
    let frames_dir = dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    for (i, frame) in seq.frames().iter().enumerate() {
        write_kitti_bin(frames_dir.join(frame_file_name(i)), &frame.cloud)?;
    }
    let poses: Vec<_> = seq.frames().iter().map(|f| f.pose).collect();
    let pose_path = dir.join(POSES_FILE);
    fs::write(&pose_path, format_pose_text(&poses)).map_err(|e| Error::io(&pose_path, e))?;
    let meta_path = dir.join(METADATA_FILE);
    fs::write(&meta_path, meta.to_json()).map_err(|e| Error::io(&meta_path, e))
}

/// Loads a KITTI-style directory: `poses.txt` plus `frames/` (or KITTI's
/// `velodyne/`) holding one `.bin` per pose in name order. Metadata is
/// optional so real KITTI sequences load too.
pub fn load_dataset(dir: &Path) -> Result<(FrameSequence, Option<DatasetMetadata>)> {
    let poses = load_pose_file(dir.join(POSES_FILE))?;
    let frames_dir = [FRAMES_DIR, "velodyne"]
        .iter()
        .map(|d| dir.join(d))
        .find(|d| d.is_dir())
        .ok_or_else(|| Error::MalformedFile(format!("{} has no {FRAMES_DIR}/ directory", dir.display())))?;
    let mut files: Vec<_> = fs::read_dir(&frames_dir)
        .map_err(|e| Error::io(&frames_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    if files.len() != poses.len() {
        return Err(Error::MalformedFile(format!(
            "{} point files but {} poses",
            files.len(),
            poses.len()
        )));
    }
    let clouds = files.iter().map(load_kitti_bin).collect::<Result<Vec<_>>>()?;
    let meta_path = dir.join(METADATA_FILE);
    let meta = if meta_path.exists() {
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        Some(DatasetMetadata::parse(&text)?)
    } else {
        None
    };
    Ok((FrameSequence::from_parts(clouds, poses)?, meta))
}
