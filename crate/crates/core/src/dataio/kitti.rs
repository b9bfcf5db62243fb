//! KITTI odometry formats: Velodyne `.bin` scans and `poses.txt`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};

use crate::geom::{PointCloud, RigidTransform};
use crate::{Error, Result};

const RECORD_BYTES: usize = 16;
const ORTHONORMAL_REPAIR_LIMIT: f64 = 1e-3;

/// Decodes little-endian `f32` quadruples `(x, y, z, reflectance)`.
/// Reflectance is dropped; point order is preserved.
pub fn parse_kitti_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::MalformedFile(format!(
            "point file size {} is not a multiple of {RECORD_BYTES}",
            bytes.len()
        )));
    }
    let points = bytes
        .chunks_exact(RECORD_BYTES)
        .map(|rec| {
            let f = |k: usize| f32::from_le_bytes([rec[4 * k], rec[4 * k + 1], rec[4 * k + 2], rec[4 * k + 3]]) as f64;
            Point3::new(f(0), f(1), f(2))
        })
        .collect();
    PointCloud::new(points).map_err(|e| match e {
        Error::NonFinitePoint(i) => Error::MalformedFile(format!("non-finite coordinate in record {i}")),
        other => other,
    })
}

pub fn load_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_kitti_bin(&bytes)
}

/// Encodes a cloud as KITTI records with zero reflectance. Coordinates are
/// narrowed to `f32`.
pub fn encode_kitti_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in cloud.points() {
        for v in [p.x as f32, p.y as f32, p.z as f32, 0.0f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_kitti_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_kitti_bin(cloud)).map_err(|e| Error::io(path, e))
}

/// Parses KITTI pose text: one row-major 3×4 `[R | t]` per nonempty line.
///
/// Rotations that drift from orthonormal by at most 1e-3 are projected back
/// onto SO(3); anything worse is rejected.
pub fn parse_pose_text(text: &str) -> Result<Vec<RigidTransform>> {
    let mut poses = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::MalformedFile(format!("line {}: bad number {tok:?}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != 12 {
            return Err(Error::MalformedFile(format!(
                "line {}: expected 12 values, found {}",
                lineno + 1,
                values.len()
            )));
        }
        let r = Matrix3::new(
            values[0], values[1], values[2], values[4], values[5], values[6], values[8], values[9], values[10],
        );
        let t = Vector3::new(values[3], values[7], values[11]);
        poses.push(rigid_from_raw(r, t, lineno + 1)?);
    }
    Ok(poses)
}

fn rigid_from_raw(r: Matrix3<f64>, t: Vector3<f64>, line: usize) -> Result<RigidTransform> {
    if let Ok(exact) = RigidTransform::new(r, t) {
        return Ok(exact);
    }
    let (fixed, err) = RigidTransform::orthonormalize(&r).ok_or(Error::NonRigidPose {
        line,
        error: f64::INFINITY,
    })?;
    if err > ORTHONORMAL_REPAIR_LIMIT || r.determinant() <= 0.0 {
        return Err(Error::NonRigidPose { line, error: err });
    }
    RigidTransform::new(fixed, t).map_err(|_| Error::NonRigidPose { line, error: err })
}

pub fn load_pose_file(path: impl AsRef<Path>) -> Result<Vec<RigidTransform>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose_text(&text)
}

/// One line per pose; values print in shortest round-trip form.
pub fn format_pose_text(poses: &[RigidTransform]) -> String {
    let mut out = String::new();
    for pose in poses {
        let row: Vec<String> = pose.to_row_major_3x4().iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_pose_file(path: impl AsRef<Path>, poses: &[RigidTransform]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_pose_text(poses)).map_err(|e| Error::io(path, e))
}
