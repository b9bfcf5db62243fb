#![no_main]

use apr_core::dataio::{read_pair_list, write_pair_list};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(pairs) = read_pair_list(data) {
        let mut buf = Vec::new();
        write_pair_list(&mut buf, &pairs).unwrap();
        assert_eq!(read_pair_list(buf.as_slice()).unwrap(), pairs);
    }
});
