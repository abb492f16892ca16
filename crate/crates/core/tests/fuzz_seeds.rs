//! Replays the checked-in fuzz corpus through the same checks the fuzz
//! targets make, so regressions show up without a fuzzing toolchain.

use std::path::PathBuf;

use mdforms_core::cli_io::{parse_coefficients, parse_matrix_market, parse_mixed_form_csv, parse_sidecar, write_matrix_market, write_mixed_form_csv};
use mdforms_core::cochain_spaces::degree_layout;
use mdforms_core::forest_geometry::{parse_geometry, validate_conforming};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.display().to_string(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn geometry_seeds() {
    let mut parsed = 0;
    for (name, data) in seeds("parse_geometry") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        let Ok(g) = parse_geometry(text) else { continue };
        parsed += 1;
        if validate_conforming(&g).is_conforming() {
            for k in 0..=g.n() as i64 {
                degree_layout(&g, k).unwrap_or_else(|e| panic!("{name}: {e}"));
            }
        }
    }
    assert!(parsed > 0);
}

#[test]
fn csv_seeds() {
    for (name, data) in seeds("mixed_form_csv") {
        let text = String::from_utf8(data.clone()).unwrap();
        let len = data.len() % 64;
        if let Ok(values) = parse_mixed_form_csv(&text, len) {
            let again = parse_mixed_form_csv(&write_mixed_form_csv(&values).unwrap(), len).unwrap();
            assert_eq!(again, values, "{name}");
        }
    }
}

#[test]
fn matrix_market_seeds() {
    for (name, data) in seeds("matrix_market") {
        let m = parse_matrix_market(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_matrix_market(&write_matrix_market(&m)).unwrap(), m, "{name}");
    }
    let overflow = "%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1e308\n1 1 1e308\n";
    assert!(parse_matrix_market(overflow).is_err());
    assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n1099511627776 1 0\n").is_err());
}

#[test]
fn coefficient_and_sidecar_seeds() {
    for (name, data) in seeds("coefficients") {
        parse_coefficients(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("sidecar") {
        parse_sidecar(std::str::from_utf8(&data).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
