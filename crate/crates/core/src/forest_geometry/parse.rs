//! On-disk geometry schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mesh::{BoundaryLabel, SimplicialMesh};
use super::{ForestGeometry, IdentificationMap, NodeId, NodeRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryFile {
    pub n: usize,
    pub nodes: Vec<NodeEntry>,
    pub meshes: BTreeMap<String, MeshEntry>,
    pub maps: Vec<MapEntry>,
    /// Free-form annotations (expected Betti numbers and the like).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: NodeId,
    pub dim: usize,
    pub root: bool,
    pub tree: NodeId,
    pub s: NodeId,
    pub parent: NodeId,
    pub mesh: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshEntry {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub simplices: BTreeMap<String, Vec<Vec<usize>>>,
    #[serde(default)]
    pub boundary_labels: Vec<LabelEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelEntry {
    pub facet: Vec<usize>,
    pub label: LabelValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Name(String),
    Branch { branch: NodeId },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapEntry {
    pub branch: NodeId,
    pub vertex_map: Vec<[usize; 2]>,
    pub orientation: i64,
}

impl MeshEntry {
    pub fn from_mesh(mesh: &SimplicialMesh) -> Self {
        let simplices = (0..=mesh.dim())
            .map(|p| (p.to_string(), mesh.simplices(p).to_vec()))
            .collect();
        let boundary_labels = mesh
            .labels()
            .iter()
            .map(|(f, l)| LabelEntry {
                facet: mesh.simplex(mesh.dim() - 1, *f).to_vec(),
                label: match l {
                    BoundaryLabel::Dirichlet => LabelValue::Name("dirichlet".into()),
                    BoundaryLabel::Branch(b) => LabelValue::Branch { branch: *b },
                },
            })
            .collect();
        MeshEntry { dim: mesh.dim(), vertices: mesh.vertices().to_vec(), simplices, boundary_labels }
    }

    fn to_mesh(&self, name: &str) -> Result<SimplicialMesh> {
        let ctx = |e: Error| match e {
            Error::Input(m) => Error::Input(format!("mesh \"{name}\": {m}")),
            other => other,
        };
        let mut simplices = vec![Vec::new(); self.dim + 1];
        let mut seen = vec![false; self.dim + 1];
        for (key, list) in &self.simplices {
            let p: usize = key
                .parse()
                .map_err(|_| Error::input(format!("mesh \"{name}\": simplex degree key \"{key}\" is not an integer")))?;
            if p > self.dim {
                return Err(Error::input(format!(
                    "mesh \"{name}\": {p}-simplices listed in a {}-dimensional mesh",
                    self.dim
                )));
            }
            seen[p] = true;
            simplices[p] = list.clone();
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(Error::input(format!("mesh \"{name}\": no list of {p}-simplices")));
        }
        let mut labels = Vec::with_capacity(self.boundary_labels.len());
        for l in &self.boundary_labels {
            let label = match &l.label {
                LabelValue::Name(s) if s == "dirichlet" => BoundaryLabel::Dirichlet,
                LabelValue::Name(s) => {
                    return Err(Error::input(format!("mesh \"{name}\": unknown boundary label \"{s}\"")))
                }
                LabelValue::Branch { branch } => BoundaryLabel::Branch(*branch),
            };
            labels.push((l.facet.clone(), label));
        }
        SimplicialMesh::new(self.dim, self.vertices.clone(), simplices, labels).map_err(ctx)
    }
}

/// Parse and index a geometry file. The result is not yet validated.
pub fn parse_geometry(text: &str) -> Result<ForestGeometry> {
    let file: GeometryFile = serde_json::from_str(text)?;
    from_file(&file)
}

pub fn from_file(file: &GeometryFile) -> Result<ForestGeometry> {
    let mut meshes = BTreeMap::new();
    for (name, m) in &file.meshes {
        meshes.insert(name.clone(), m.to_mesh(name)?);
    }
    let nodes = file
        .nodes
        .iter()
        .map(|e| NodeRecord {
            id: e.id,
            dim: e.dim,
            is_root: e.root,
            tree_root: e.tree,
            s_target: e.s,
            parent: e.parent,
            mesh_ref: e.mesh.clone(),
        })
        .collect();
    let maps = file
        .maps
        .iter()
        .map(|m| IdentificationMap {
            branch: m.branch,
            vertex_map: m.vertex_map.iter().map(|p| (p[0], p[1])).collect(),
            orientation: m.orientation,
        })
        .collect();
    ForestGeometry::new(file.n, nodes, meshes, maps, file.meta.clone())
}

impl ForestGeometry {
    pub fn to_file(&self) -> GeometryFile {
        GeometryFile {
            n: self.n(),
            nodes: self
                .nodes()
                .iter()
                .map(|r| NodeEntry {
                    id: r.id,
                    dim: r.dim,
                    root: r.is_root,
                    tree: r.tree_root,
                    s: r.s_target,
                    parent: r.parent,
                    mesh: r.mesh_ref.clone(),
                })
                .collect(),
            meshes: self.meshes().iter().map(|(k, m)| (k.clone(), MeshEntry::from_mesh(m))).collect(),
            maps: self
                .maps()
                .map(|m| MapEntry {
                    branch: m.branch,
                    vertex_map: m.vertex_map.iter().map(|&(a, b)| [a, b]).collect(),
                    orientation: m.orientation,
                })
                .collect(),
            meta: self.meta().cloned(),
        }
    }
}

/// SHA-256 over the compact, key-sorted re-serialization of the document,
/// so whitespace and key order in the file do not matter.
pub fn geometry_hash(text: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let canonical = serde_json::to_string(&value).map_err(Error::from)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_layout() {
        let a = r#"{"n":1,"b":[1,2]}"#;
        let b = "{ \"b\" : [1, 2],\n \"n\" : 1 }";
        assert_eq!(geometry_hash(a).unwrap(), geometry_hash(b).unwrap());
        assert_ne!(geometry_hash(a).unwrap(), geometry_hash(r#"{"n":2,"b":[1,2]}"#).unwrap());
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_geometry("{\n  \"n\": 2,\n  oops }") {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_text_is_syntax_error() {
        assert!(matches!(parse_geometry(""), Err(Error::Syntax { .. })));
    }
}
