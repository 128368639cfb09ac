#![no_main]

use libfuzzer_sys::fuzz_target;
use msceqf_cli::config::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::parse(text) {
        let again = Config::parse(&cfg.to_toml()).expect("serialized config parses");
        assert_eq!(again, cfg);
    }
});
