#![no_main]

use libfuzzer_sys::fuzz_target;
use mdforms_core::cli_io::{parse_mixed_form_csv, write_mixed_form_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let len = data.len() % 64;
    if let Ok(values) = parse_mixed_form_csv(text, len) {
        let again = parse_mixed_form_csv(&write_mixed_form_csv(&values).unwrap(), len).unwrap();
        assert_eq!(again, values);
    }
});
