//! File formats: mixed forms as CSV, Matrix Market operators, coefficient
//! files, canonical JSON reports and legacy VTK.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::forest_geometry::SimplicialMesh;
use crate::laplace_solver::CoefficientField;
use crate::sparse::CsrMatrix;

/// Sidecar written next to every mixed-form CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormSidecar {
    pub k: usize,
    pub geometry_hash: String,
}

pub fn write_mixed_form_csv(values: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dof_index", "value"]).map_err(csv_err)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), format!("{v:.17e}")]).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Syntax { line, column: 0, message: e.to_string() }
}

/// Read "dof_index,value" rows into a dense vector of length `len`.
/// Missing indices stay zero; duplicates and out-of-range indices are
/// rejected.
pub fn parse_mixed_form_csv(text: &str, len: usize) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || &headers[0] != "dof_index" || &headers[1] != "value" {
        return Err(Error::Syntax { line: 1, column: 0, message: "header must be \"dof_index,value\"".into() });
    }
    let mut out = vec![0.0; len];
    let mut seen = vec![false; len];
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let bad = |m: String| Error::Syntax { line, column: 0, message: m };
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", rec.len())));
        }
        let i: usize = rec[0].parse().map_err(|_| bad(format!("invalid dof index \"{}\"", &rec[0])))?;
        let v: f64 = rec[1].parse().map_err(|_| bad(format!("invalid value \"{}\"", &rec[1])))?;
        if !v.is_finite() {
            return Err(bad("value is not finite".into()));
        }
        if i >= len {
            return Err(Error::input(format!("dof index {i} out of range (form has {len} DOFs)")));
        }
        if seen[i] {
            return Err(Error::input(format!("dof index {i} listed twice")));
        }
        seen[i] = true;
        out[i] = v;
    }
    Ok(out)
}

pub fn parse_sidecar(text: &str) -> Result<FormSidecar> {
    Ok(serde_json::from_str(text)?)
}

/// Parse a coefficient file. Geometry-dependent checks are done by
/// `CoefficientField::validate`.
pub fn parse_coefficients(text: &str) -> Result<CoefficientField> {
    let field: CoefficientField = serde_json::from_str(text)?;
    Ok(field)
}

pub trait MmScalar: Copy {
    const FIELD: &'static str;
    fn fmt(self) -> String;
}

impl MmScalar for f64 {
    const FIELD: &'static str = "real";
    fn fmt(self) -> String {
        format!("{self:.17e}")
    }
}

impl MmScalar for i64 {
    const FIELD: &'static str = "integer";
    fn fmt(self) -> String {
        self.to_string()
    }
}

pub fn write_matrix_market<T: MmScalar + crate::sparse::Scalar>(m: &CsrMatrix<T>) -> String {
    let mut s = format!("%%MatrixMarket matrix coordinate {} general\n", T::FIELD);
    let _ = writeln!(s, "{} {} {}", m.nrows(), m.ncols(), m.nnz());
    for (r, c, v) in m.triplets() {
        let _ = writeln!(s, "{} {} {}", r + 1, c + 1, v.fmt());
    }
    s
}

/// Coordinate-format reader (real, integer or pattern; general or
/// symmetric).
pub fn parse_matrix_market(text: &str) -> Result<CsrMatrix<f64>> {
    let mut lines = text.lines().enumerate();
    let syntax = |line: usize, m: &str| Error::Syntax { line: line + 1, column: 0, message: m.to_string() };
    let (hl, header) = lines.next().ok_or_else(|| syntax(0, "empty file"))?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(syntax(hl, "expected a \"%%MatrixMarket matrix coordinate\" header"));
    }
    let pattern = match h[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        _ => return Err(syntax(hl, "unsupported field type")),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        _ => return Err(syntax(hl, "unsupported symmetry")),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for (ln, line) in lines {
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(syntax(ln, "size line needs rows, columns and entries"));
                }
                let p = |s: &str| s.parse::<usize>().map_err(|_| syntax(ln, "invalid size"));
                let (r, c, nnz) = (p(toks[0])?, p(toks[1])?, p(toks[2])?);
                if r > 1 << 24 || c > 1 << 24 || nnz > 1 << 28 {
                    return Err(syntax(ln, "matrix too large"));
                }
                size = Some((r, c, nnz));
            }
            Some((nr, nc, _)) => {
                let want = if pattern { 2 } else { 3 };
                if toks.len() != want {
                    return Err(syntax(ln, "wrong number of fields in entry"));
                }
                let i: usize = toks[0].parse().map_err(|_| syntax(ln, "invalid row index"))?;
                let j: usize = toks[1].parse().map_err(|_| syntax(ln, "invalid column index"))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(syntax(ln, "index out of range"));
                }
                let v: f64 = if pattern { 1.0 } else { toks[2].parse().map_err(|_| syntax(ln, "invalid value"))? };
                if !v.is_finite() {
                    return Err(syntax(ln, "value is not finite"));
                }
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| syntax(0, "missing size line"))?;
    let stored = if symmetric { trip.iter().filter(|e| e.0 >= e.1).count() } else { trip.len() };
    if stored != nnz {
        return Err(Error::input(format!("header announces {nnz} entries, found {stored}")));
    }
    if symmetric && nr != nc {
        return Err(Error::input("symmetric matrix must be square"));
    }
    let m = CsrMatrix::from_triplets(nr, nc, trip);
    if m.triplets().any(|(_, _, v)| !v.is_finite()) {
        return Err(Error::input("duplicate entries overflow"));
    }
    Ok(m)
}

/// Deterministic JSON: object keys sorted, floats in `{:.16e}`, two-space
/// indentation, trailing newline.
pub fn canonical_json(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.push('\n');
    s
}

fn write_value(s: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => s.push_str("null"),
        Value::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(s, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(s, "{u}");
            } else {
                let _ = write!(s, "{:.16e}", n.as_f64().unwrap_or(f64::NAN));
            }
        }
        Value::String(t) => s.push_str(&serde_json::to_string(t).expect("strings serialize")),
        Value::Array(a) => {
            if a.is_empty() {
                s.push_str("[]");
                return;
            }
            let flat = a.iter().all(|x| !x.is_array() && !x.is_object());
            if flat {
                s.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        s.push_str(", ");
                    }
                    write_value(s, x, indent);
                }
                s.push(']');
            } else {
                s.push_str("[\n");
                for (i, x) in a.iter().enumerate() {
                    pad(s, indent + 1);
                    write_value(s, x, indent + 1);
                    s.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
                }
                pad(s, indent);
                s.push(']');
            }
        }
        Value::Object(o) => {
            if o.is_empty() {
                s.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = o.keys().collect();
            keys.sort();
            s.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(s, indent + 1);
                s.push_str(&serde_json::to_string(k).expect("strings serialize"));
                s.push_str(": ");
                write_value(s, &o[k.as_str()], indent + 1);
                s.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(s, indent);
            s.push('}');
        }
    }
}

fn pad(s: &mut String, indent: usize) {
    for _ in 0..indent {
        s.push_str("  ");
    }
}

/// JSON number for a float; non-finite values become strings so reports
/// stay valid JSON.
pub fn float_value(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(format!("{x}")))
}

/// Legacy ASCII VTK of the p-simplices of a mesh with one cell value each.
pub fn write_vtk(mesh: &SimplicialMesh, p: usize, values: &[f64], name: &str) -> Result<String> {
    if p > mesh.dim() || values.len() != mesh.count(p as i64) {
        return Err(Error::input(format!(
            "VTK export of degree {p}: {} values for {} simplices",
            values.len(),
            mesh.count(p as i64)
        )));
    }
    let cell_type = [1, 3, 5, 10][p.min(3)];
    let mut s = String::from("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{name}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in mesh.vertices() {
        let c: Vec<String> = (0..3).map(|i| format!("{:.17e}", v.get(i).copied().unwrap_or(0.0))).collect();
        let _ = writeln!(s, "{}", c.join(" "));
    }
    let cells = mesh.simplices(p);
    let _ = writeln!(s, "CELLS {} {}", cells.len(), cells.len() * (p + 2));
    for c in cells {
        let idx: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{} {}", c.len(), idx.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in cells {
        let _ = writeln!(s, "{cell_type}");
    }
    let _ = writeln!(s, "CELL_DATA {}\nSCALARS cochain double 1\nLOOKUP_TABLE default", cells.len());
    for v in values {
        let _ = writeln!(s, "{v:.17e}");
    }
    Ok(s)
}
