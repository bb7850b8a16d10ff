#![no_main]

use libfuzzer_sys::fuzz_target;
use snls_core::io::{exponent_row, parse_exponent_table};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_exponent_table(text) {
        for (d, alpha, gamma) in rows {
            let _ = exponent_row(d, alpha, gamma);
        }
    }
});
