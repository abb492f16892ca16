#![no_main]

use libfuzzer_sys::fuzz_target;
use mdforms_core::cli_io::parse_coefficients;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_coefficients(text);
});
