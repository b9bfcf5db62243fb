//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets run, so the seeds stay meaningful on stable toolchains.

use std::fs;
use std::path::PathBuf;

use apr_core::dataio::{
    encode_kitti_bin, format_pose_text, parse_kitti_bin, parse_pose_text, read_pair_list, write_pair_list,
    DatasetMetadata,
};
use apr_core::model::{decode_checkpoint, encode_checkpoint};
use apr_core::reg::{read_records, summarize};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

/// Runs `check` on every seed; seeds named in `valid` must be accepted and
/// all others rejected.
fn replay(target: &str, valid: &[&str], check: impl Fn(&[u8]) -> bool) {
    for (name, bytes) in seeds(target) {
        assert_eq!(check(&bytes), valid.contains(&name.as_str()), "{target}/{name}");
    }
}

#[test]
fn kitti_bin_seeds() {
    replay("kitti_bin", &["three_points", "empty"], |data| match parse_kitti_bin(data) {
        Ok(cloud) => {
            assert_eq!(parse_kitti_bin(&encode_kitti_bin(&cloud)).unwrap(), cloud);
            true
        }
        Err(_) => false,
    });
}

#[test]
fn pose_file_seeds() {
    replay("pose_file", &["three_poses", "identity"], |data| {
        match parse_pose_text(std::str::from_utf8(data).unwrap()) {
            Ok(poses) => {
                assert_eq!(parse_pose_text(&format_pose_text(&poses)).unwrap().len(), poses.len());
                true
            }
            Err(_) => false,
        }
    });
}

#[test]
fn checkpoint_seeds() {
    replay("checkpoint", &["asymmetric", "symmetric"], |data| match decode_checkpoint(data) {
        Ok(params) => {
            assert_eq!(encode_checkpoint(&params), data);
            true
        }
        Err(_) => false,
    });
}

#[test]
fn metadata_seeds() {
    replay("metadata", &["small_world"], |data| {
        match DatasetMetadata::parse(std::str::from_utf8(data).unwrap()) {
            Ok(meta) => {
                assert_eq!(DatasetMetadata::parse(&meta.to_json()).unwrap(), meta);
                true
            }
            Err(_) => false,
        }
    });
}

#[test]
fn pair_list_seeds() {
    replay("pair_list", &["two_pairs", "header_only"], |data| match read_pair_list(data) {
        Ok(pairs) => {
            let mut buf = Vec::new();
            write_pair_list(&mut buf, &pairs).unwrap();
            assert_eq!(read_pair_list(buf.as_slice()).unwrap(), pairs);
            true
        }
        Err(_) => false,
    });
}

#[test]
fn records_seeds() {
    replay("records", &["two_records"], |data| match read_records(data) {
        Ok(records) => {
            let rows = summarize(&records).unwrap();
            assert_eq!(rows[0].successes, 2);
            true
        }
        Err(_) => false,
    });
}
