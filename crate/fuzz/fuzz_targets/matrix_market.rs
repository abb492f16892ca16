#![no_main]

use libfuzzer_sys::fuzz_target;
use mdforms_core::cli_io::{parse_matrix_market, write_matrix_market};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = parse_matrix_market(text) {
        let again = parse_matrix_market(&write_matrix_market(&m)).unwrap();
        assert_eq!(again, m);
    }
});
