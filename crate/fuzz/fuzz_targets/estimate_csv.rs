#![no_main]

use libfuzzer_sys::fuzz_target;
use msceqf_cli::io;

// Accepted input must survive write, read, write unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = io::read_estimate("fuzz", text) {
        let once = io::write_estimate(&parsed);
        let twice = io::write_estimate(&io::read_estimate("fuzz", &once).expect("written file parses"));
        assert_eq!(once, twice);
    }
});
