#![no_main]

use apr_core::dataio::{encode_kitti_bin, parse_kitti_bin};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = parse_kitti_bin(data) {
        // xyz survive as f32; the intensity channel is written back as zero
        let again = parse_kitti_bin(&encode_kitti_bin(&cloud)).expect("re-encoded cloud parses");
        assert_eq!(cloud, again);
    }
});
