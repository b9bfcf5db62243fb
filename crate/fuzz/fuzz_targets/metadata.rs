#![no_main]

use apr_core::dataio::DatasetMetadata;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(meta) = DatasetMetadata::parse(text) {
        let _ = DatasetMetadata::parse(&meta.to_json()).expect("written metadata parses");
    }
});
