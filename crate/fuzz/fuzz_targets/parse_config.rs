#![no_main]

use libfuzzer_sys::fuzz_target;
use snls_core::config::SimConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = SimConfig::from_json(text) {
        // anything accepted must survive a round trip
        let again = SimConfig::from_json(&config.to_json()).expect("re-parse");
        assert_eq!(again, config);
    }
});
