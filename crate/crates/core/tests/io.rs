use std::collections::BTreeMap;

use mdforms_core::cli_io::{
    canonical_json, parse_coefficients, parse_matrix_market, parse_mixed_form_csv, parse_sidecar, write_matrix_market, write_mixed_form_csv, write_vtk,
    FormSidecar,
};
use mdforms_core::fixtures;
use mdforms_core::forest_geometry::{from_file, parse_geometry};
use mdforms_core::laplace_solver::{CoefficientField, CoefficientOverride};
use mdforms_core::sparse::CsrMatrix;
use mdforms_core::Error;
use proptest::prelude::*;
use serde_json::Value;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3..1e3f64, Just(0.0), Just(-0.0)]
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        finite().prop_map(|v| serde_json::Number::from_f64(v).map(Value::Number).unwrap()),
        "[a-z\"\\\\ ]{0,8}".prop_map(Value::String),
    ];
    leaf.prop_recursive(3, 32, 5, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..5).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..5).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn triplets() -> impl Strategy<Value = (usize, usize, BTreeMap<(usize, usize), f64>)> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        let entry = ((0..r, 0..c), finite().prop_filter("nonzero", |v| *v != 0.0));
        (Just(r), Just(c), prop::collection::btree_map(entry.0, entry.1, 0..30))
    })
}

proptest! {
    #[test]
    fn csv_round_trip(values in prop::collection::vec(finite(), 0..40)) {
        let text = write_mixed_form_csv(&values).unwrap();
        let back = parse_mixed_form_csv(&text, values.len()).unwrap();
        prop_assert_eq!(back.len(), values.len());
        for (a, b) in back.iter().zip(&values) {
            prop_assert_eq!(a.to_bits() == b.to_bits() || a == b, true);
        }
    }

    #[test]
    fn matrix_market_round_trip((r, c, entries) in triplets()) {
        let m = CsrMatrix::from_triplets(r, c, entries.iter().map(|(&(i, j), &v)| (i, j, v)).collect());
        let back = parse_matrix_market(&write_matrix_market(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn integer_matrix_market_round_trip(entries in prop::collection::btree_map((0usize..6, 0usize..7), -9i64..=9, 0..20)) {
        let m = CsrMatrix::from_triplets(6, 7, entries.iter().filter(|(_, &v)| v != 0).map(|(&(i, j), &v)| (i, j, v)).collect());
        let back = parse_matrix_market(&write_matrix_market(&m)).unwrap();
        prop_assert_eq!(back, m.to_f64());
    }

    #[test]
    fn canonical_json_round_trip(v in json_value()) {
        let text = canonical_json(&v);
        let back: Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &v);
        prop_assert_eq!(canonical_json(&back), text);
    }

    #[test]
    fn coefficient_round_trip(r in 1e-3..1e3f64, rs in 1e-3..1e3f64, ov in prop::collection::vec((1u32..50, 1e-3..1e3f64, prop::option::of(1e-3..1e3f64)), 0..4)) {
        let field = CoefficientField {
            k: 1,
            default_r: r,
            default_rstar: rs,
            overrides: ov.into_iter().map(|(node, r, rstar)| CoefficientOverride { node, r, rstar }).collect(),
        };
        let back = parse_coefficients(&serde_json::to_string(&field).unwrap()).unwrap();
        prop_assert_eq!(back, field);
    }
}

#[test]
fn canonical_json_sorts_keys_and_formats_floats() {
    let v: Value = serde_json::json!({"b": 0.1, "a": [1, 2.5], "c": {"z": null, "y": true}});
    let text = canonical_json(&v);
    assert_eq!(
        text,
        "{\n  \"a\": [1, 2.5000000000000000e0],\n  \"b\": 1.0000000000000001e-1,\n  \"c\": {\n    \"y\": true,\n    \"z\": null\n  }\n}\n"
    );
}

#[test]
fn csv_rejects_malformed_input() {
    let cases = [
        ("", 1),
        ("dof,value\n0,1\n", 1),
        ("dof_index,value\n0,abc\n", 1),
        ("dof_index,value\nx,1\n", 1),
        ("dof_index,value\n0,inf\n", 1),
        ("dof_index,value\n0,1,2\n", 1),
        ("dof_index,value\n3,1\n", 2),
        ("dof_index,value\n0,1\n0,2\n", 2),
    ];
    for (text, len) in cases {
        assert!(parse_mixed_form_csv(text, len).is_err(), "{text:?}");
    }
    let sparse = parse_mixed_form_csv("dof_index,value\n2, 4.5\n", 4).unwrap();
    assert_eq!(sparse, vec![0.0, 0.0, 4.5, 0.0]);
}

#[test]
fn matrix_market_variants() {
    let sym = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 -1\n";
    let m = parse_matrix_market(sym).unwrap();
    assert_eq!(m.to_dense()[(0, 1)], -1.0);
    assert_eq!(m.to_dense()[(1, 0)], -1.0);
    let pat = "%%MatrixMarket matrix coordinate pattern general\n2 3 1\n2 3\n";
    assert_eq!(parse_matrix_market(pat).unwrap().to_dense()[(1, 2)], 1.0);
    for bad in [
        "",
        "%%MatrixMarket matrix array real general\n1 1\n1\n",
        "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
        "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
        "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n",
        "%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n",
    ] {
        assert!(parse_matrix_market(bad).is_err(), "{bad:?}");
    }
}

#[test]
fn coefficient_file_errors() {
    assert!(matches!(parse_coefficients("{"), Err(Error::Syntax { .. })));
    assert!(parse_coefficients(r#"{"k": 1, "default_r": 1.0}"#).is_err());
    let f = parse_coefficients(r#"{"k": 2, "default_r": 1.0, "default_rstar": 2.0, "overrides": [{"node": 3, "r": 5.0}]}"#).unwrap();
    assert_eq!(f.overrides[0].rstar, None);
}

#[test]
fn sidecar_round_trip() {
    let s = FormSidecar { k: 2, geometry_hash: "abc".into() };
    assert_eq!(parse_sidecar(&serde_json::to_string(&s).unwrap()).unwrap(), s);
    assert!(parse_sidecar("{\"k\": -1}").is_err());
}

#[test]
fn geometry_text_round_trip() {
    for (name, file) in fixtures::shipped() {
        let g = parse_geometry(&fixtures::to_json(&file)).unwrap();
        let h = from_file(&file).unwrap();
        assert_eq!(g.nodes(), h.nodes(), "{name}");
    }
}

#[test]
fn vtk_checks_lengths() {
    let g = from_file(&fixtures::single_square(2)).unwrap();
    let mesh = g.root_mesh(1);
    let n = mesh.count(2);
    let text = write_vtk(mesh, 2, &vec![1.0; n], "a").unwrap();
    assert!(text.contains(&format!("CELL_TYPES {n}")));
    assert!(write_vtk(mesh, 2, &[1.0], "a").is_err());
    assert!(write_vtk(mesh, 3, &[], "a").is_err());
}
