#![no_main]

use libfuzzer_sys::fuzz_target;
use mdforms_core::cochain_spaces::degree_layout;
use mdforms_core::forest_geometry::{parse_geometry, validate_conforming};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(g) = parse_geometry(text) else { return };
    // anything that parses must validate without panicking
    let report = validate_conforming(&g);
    if report.is_conforming() {
        for k in 0..=g.n() as i64 {
            let _ = degree_layout(&g, k);
        }
    }
});
