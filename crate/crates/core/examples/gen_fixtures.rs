//! Regenerate the JSON files under fixtures/.
use std::path::PathBuf;

fn main() {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
    });
    std::fs::create_dir_all(&dir).expect("create fixtures dir");
    for (name, file) in mdforms_core::fixtures::shipped() {
        std::fs::write(dir.join(name), mdforms_core::fixtures::to_json(&file)).expect("write fixture");
        println!("{name}");
    }
}
