#![no_main]

use libfuzzer_sys::fuzz_target;
use snls_core::grid::ComplexField;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = ComplexField::from_bytes(data) {
        assert_eq!(field.to_bytes(), data);
    }
});
