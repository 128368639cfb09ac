#![no_main]

use libfuzzer_sys::fuzz_target;
use msceqf_cli::io;

// Accepted input must survive write, read, write unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(parsed) = io::read_calib("fuzz", text) {
        let once = io::write_calib(&parsed);
        let twice = io::write_calib(&io::read_calib("fuzz", &once).expect("written file parses"));
        assert_eq!(once, twice);
    }
});
