#![no_main]

use apr_cli::config::parse;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(entries) = parse(text) {
        let rendered: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        assert_eq!(parse(&rendered).unwrap(), entries);
    }
});
