#![no_main]

use apr_core::dataio::{format_pose_text, parse_pose_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(poses) = parse_pose_text(text) {
        let again = parse_pose_text(&format_pose_text(&poses)).expect("formatted poses parse");
        assert_eq!(poses.len(), again.len());
    }
});
