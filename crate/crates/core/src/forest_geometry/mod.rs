//! Forest geometries: roots carrying reference meshes, branch nodes that
//! identify boundary patches of a parent with another root, and the derived
//! neighbour index sets used by the jump operator.

mod mesh;
mod parse;
pub(crate) mod validate;

use std::collections::{BTreeMap, BTreeSet, HashMap};

pub use mesh::{permutation_sign, subsets, BoundaryLabel, SimplicialMesh};
pub use parse::{from_file, geometry_hash, parse_geometry, GeometryFile, LabelEntry, LabelValue, MapEntry, MeshEntry, NodeEntry};
pub use validate::{validate_conforming, ValidationReport, Violation, ViolationKind};

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub dim: usize,
    pub is_root: bool,
    pub tree_root: NodeId,
    pub s_target: NodeId,
    /// 0 for roots (the implicit global root).
    pub parent: NodeId,
    pub mesh_ref: String,
}

/// Vertex identification of a branch: vertices of the mesh of `s_target`
/// mapped into the mesh of the parent node.
#[derive(Clone, Debug, PartialEq)]
pub struct IdentificationMap {
    pub branch: NodeId,
    pub vertex_map: Vec<(usize, usize)>,
    pub orientation: i64,
}

/// Composite identification of a node with its tree root's mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    /// Image of each vertex of the node's mesh; `None` where a map along the
    /// path is undefined.
    pub map: Vec<Option<usize>>,
    /// Product of the stored orientations along the path.
    pub sign: i8,
}

impl Composite {
    pub fn total(&self) -> Option<Vec<usize>> {
        self.map.iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSets {
    pub gamma_inverse: Vec<NodeId>,
    pub gamma: Vec<NodeId>,
    pub j_up: Vec<NodeId>,
    pub s: NodeId,
}

#[derive(Clone, Debug)]
pub struct ForestGeometry {
    n: usize,
    nodes: Vec<NodeRecord>,
    meshes: BTreeMap<String, SimplicialMesh>,
    maps: BTreeMap<NodeId, IdentificationMap>,
    meta: Option<serde_json::Value>,

    index: HashMap<NodeId, usize>,
    roots: Vec<NodeId>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    depth: BTreeMap<NodeId, usize>,
    actual_root: BTreeMap<NodeId, NodeId>,
    local_maps: BTreeMap<NodeId, Vec<Option<usize>>>,
    composites: BTreeMap<NodeId, Composite>,
    canonical: BTreeMap<NodeId, NodeId>,
    by_image: HashMap<(NodeId, NodeId, Vec<usize>), NodeId>,
    s_inverse: BTreeMap<NodeId, Vec<NodeId>>,
    gamma_inverse: BTreeMap<NodeId, Vec<(NodeId, i8)>>,
    gamma: BTreeMap<NodeId, Vec<NodeId>>,
    j_up: BTreeMap<NodeId, Vec<NodeId>>,
}

fn sign_of(o: i64) -> i8 {
    o.signum() as i8
}

impl ForestGeometry {
    /// Index a forest. Dangling references and broken parent chains are
    /// errors; everything else is left for `validate_conforming`.
    pub fn new(
        n: usize,
        mut nodes: Vec<NodeRecord>,
        meshes: BTreeMap<String, SimplicialMesh>,
        map_list: Vec<IdentificationMap>,
        meta: Option<serde_json::Value>,
    ) -> Result<Self> {
        nodes.sort_by_key(|r| r.id);
        let mut index = HashMap::new();
        for (i, r) in nodes.iter().enumerate() {
            if r.id == 0 {
                return Err(Error::input("node id 0 is reserved for the global root"));
            }
            if index.insert(r.id, i).is_some() {
                return Err(Error::input(format!("duplicate node id {}", r.id)));
            }
        }
        for r in &nodes {
            if !meshes.contains_key(&r.mesh_ref) {
                return Err(Error::input(format!("node {} references unknown mesh \"{}\"", r.id, r.mesh_ref)));
            }
            for (what, target) in [("tree", r.tree_root), ("s", r.s_target)] {
                if !index.contains_key(&target) {
                    return Err(Error::input(format!("node {} has dangling {what} reference {target}", r.id)));
                }
            }
            if r.is_root && r.parent != 0 {
                return Err(Error::input(format!("root {} must have the global root 0 as parent", r.id)));
            }
            if !r.is_root {
                if r.parent == 0 {
                    return Err(Error::input(format!("branch {} has no parent", r.id)));
                }
                if !index.contains_key(&r.parent) {
                    return Err(Error::input(format!("node {} has dangling parent reference {}", r.id, r.parent)));
                }
            }
        }
        for (name, m) in &meshes {
            for (_, label) in m.labels() {
                if let BoundaryLabel::Branch(b) = label {
                    if !index.contains_key(b) {
                        return Err(Error::input(format!("mesh \"{name}\" labels a facet with unknown branch {b}")));
                    }
                }
            }
        }
        let mut maps = BTreeMap::new();
        for m in map_list {
            if !index.contains_key(&m.branch) {
                return Err(Error::input(format!("identification map for unknown node {}", m.branch)));
            }
            if maps.insert(m.branch, m.clone()).is_some() {
                return Err(Error::input(format!("node {} has more than one identification map", m.branch)));
            }
        }
        for r in &nodes {
            if !r.is_root && !maps.contains_key(&r.id) {
                return Err(Error::input(format!("branch {} has no identification map", r.id)));
            }
            if r.is_root && maps.contains_key(&r.id) {
                return Err(Error::input(format!("root {} carries an identification map", r.id)));
            }
        }

        let node = |id: NodeId| &nodes[index[&id]];
        let mut actual_root = BTreeMap::new();
        let mut depth = BTreeMap::new();
        for r in &nodes {
            let mut cur = r.id;
            let mut steps = 0;
            while !node(cur).is_root {
                cur = node(cur).parent;
                steps += 1;
                if steps > nodes.len() {
                    return Err(Error::input(format!("parent chain of node {} does not reach a root", r.id)));
                }
            }
            actual_root.insert(r.id, cur);
            depth.insert(r.id, steps);
        }

        let mut local_maps = BTreeMap::new();
        for (b, m) in &maps {
            let r = node(*b);
            let geom = |id: NodeId| {
                let x = node(id);
                if x.is_root { &meshes[&x.mesh_ref] } else { &meshes[&node(x.s_target).mesh_ref] }
            };
            let src = geom(r.s_target);
            let dst = geom(r.parent);
            let mut local = vec![None; src.num_vertices()];
            for &(from, to) in &m.vertex_map {
                if from >= src.num_vertices() || to >= dst.num_vertices() {
                    return Err(Error::input(format!(
                        "identification map of node {b} references a vertex outside its meshes ({from} -> {to})"
                    )));
                }
                if local[from].is_none() {
                    local[from] = Some(to);
                }
            }
            local_maps.insert(*b, local);
        }

        let roots: Vec<NodeId> = nodes.iter().filter(|r| r.is_root).map(|r| r.id).collect();
        let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for r in &nodes {
            if !r.is_root {
                children.entry(r.parent).or_default().push(r.id);
            }
        }

        // composites in order of increasing depth
        let mut order: Vec<NodeId> = nodes.iter().map(|r| r.id).collect();
        order.sort_by_key(|id| (depth[id], *id));
        let mut composites: BTreeMap<NodeId, Composite> = BTreeMap::new();
        for id in order {
            let r = node(id);
            let c = if r.is_root {
                let nv = meshes[&r.mesh_ref].num_vertices();
                Composite { map: (0..nv).map(Some).collect(), sign: 1 }
            } else {
                let parent = &composites[&r.parent];
                let local = &local_maps[&id];
                Composite {
                    map: local.iter().map(|v| v.and_then(|u| parent.map.get(u).copied().flatten())).collect(),
                    sign: parent.sign * sign_of(maps[&id].orientation),
                }
            };
            composites.insert(id, c);
        }

        // nodes with the same tree, target and composite map are one node of
        // the underlying DAG stored along different paths
        let mut by_image: HashMap<(NodeId, NodeId, Vec<usize>), NodeId> = HashMap::new();
        let mut canonical = BTreeMap::new();
        for r in &nodes {
            if r.is_root {
                canonical.insert(r.id, r.id);
                continue;
            }
            match composites[&r.id].total() {
                Some(map) => {
                    let key = (actual_root[&r.id], r.s_target, map);
                    let rep = *by_image.entry(key).or_insert(r.id);
                    canonical.insert(r.id, rep);
                }
                None => {
                    canonical.insert(r.id, r.id);
                }
            }
        }

        let mut s_inverse: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for r in &nodes {
            s_inverse.entry(r.s_target).or_default().push(r.id);
        }

        let mut g = ForestGeometry {
            n,
            nodes,
            meshes,
            maps,
            meta,
            index,
            roots,
            children,
            depth,
            actual_root,
            local_maps,
            composites,
            canonical,
            by_image,
            s_inverse,
            gamma_inverse: BTreeMap::new(),
            gamma: BTreeMap::new(),
            j_up: BTreeMap::new(),
        };
        g.build_neighbor_sets();
        Ok(g)
    }

    fn build_neighbor_sets(&mut self) {
        let mut gamma_inverse: BTreeMap<NodeId, Vec<(NodeId, i8)>> = BTreeMap::new();
        for &i in &self.roots {
            gamma_inverse.insert(i, self.root_jump_sources(i));
        }
        for r in &self.nodes {
            if r.is_root {
                continue;
            }
            let tree = self.actual_root[&r.id];
            let Some(psi_j) = self.composites[&r.id].total() else {
                gamma_inverse.insert(r.id, Vec::new());
                continue;
            };
            let mut acc: BTreeMap<NodeId, i64> = BTreeMap::new();
            for &(m, sigma) in &gamma_inverse[&tree] {
                let Some(psi_m) = self.composites[&m].total() else { continue };
                let Some(img): Option<Vec<usize>> = psi_j.iter().map(|&v| psi_m.get(v).copied()).collect() else {
                    continue;
                };
                let key = (self.actual_root[&m], r.s_target, img);
                if let Some(&l) = self.by_image.get(&key) {
                    *acc.entry(l).or_default() += sigma as i64;
                }
            }
            let set = acc.into_iter().filter(|&(_, s)| s != 0).map(|(l, s)| (l, s.signum() as i8)).collect();
            gamma_inverse.insert(r.id, set);
        }

        let mut gamma: BTreeMap<NodeId, Vec<NodeId>> = self.nodes.iter().map(|r| (r.id, Vec::new())).collect();
        for (&j, set) in &gamma_inverse {
            for &(l, _) in set {
                gamma.get_mut(&l).unwrap().push(j);
            }
        }
        for v in gamma.values_mut() {
            v.sort_unstable();
            v.dedup();
        }

        let mut j_up: BTreeMap<NodeId, BTreeSet<NodeId>> = self.nodes.iter().map(|r| (r.id, BTreeSet::new())).collect();
        for r in &self.nodes {
            if r.is_root {
                continue;
            }
            let p = self.node(r.parent).unwrap();
            if p.dim == r.dim + 1 {
                let rep = self.canonical[&r.id];
                j_up.get_mut(&rep).unwrap().insert(p.id);
            }
        }
        let reps: Vec<(NodeId, NodeId)> = self.canonical.iter().map(|(&a, &b)| (a, b)).collect();
        let j_up: BTreeMap<NodeId, Vec<NodeId>> = reps
            .iter()
            .map(|&(id, rep)| (id, j_up[&rep].iter().copied().collect()))
            .collect();

        self.gamma_inverse = gamma_inverse;
        self.gamma = gamma;
        self.j_up = j_up;
    }

    /// Depth-1 branches targeting root `i` in trees one dimension up, with
    /// their stored orientations.
    fn root_jump_sources(&self, i: NodeId) -> Vec<(NodeId, i8)> {
        let di = self.node(i).unwrap().dim;
        let mut out = Vec::new();
        for &l in self.s_inverse.get(&i).map(|v| v.as_slice()).unwrap_or(&[]) {
            if self.depth[&l] != 1 {
                continue;
            }
            let tree = self.actual_root[&l];
            if self.node(tree).unwrap().dim == di + 1 {
                out.push((l, sign_of(self.maps[&l].orientation)));
            }
        }
        out
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeRecord> {
        self.index.get(&id).map(|&i| &self.nodes[i]).ok_or(Error::UnknownNode(id))
    }

    pub fn meshes(&self) -> &BTreeMap<String, SimplicialMesh> {
        &self.meshes
    }

    pub fn meta(&self) -> Option<&serde_json::Value> {
        self.meta.as_ref()
    }

    pub fn maps(&self) -> impl Iterator<Item = &IdentificationMap> {
        self.maps.values()
    }

    pub fn map_of(&self, branch: NodeId) -> Option<&IdentificationMap> {
        self.maps.get(&branch)
    }

    /// Root ids in increasing order.
    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.children.get(&id).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.depth[&id]
    }

    /// Root reached by following parent links (the `tree` field may disagree
    /// on invalid input).
    pub fn tree_of(&self, id: NodeId) -> NodeId {
        self.actual_root[&id]
    }

    pub fn tree_of_checked(&self, id: NodeId) -> Result<NodeId> {
        self.actual_root.get(&id).copied().ok_or(Error::UnknownNode(id))
    }

    /// Mesh describing the geometry of a node: its own mesh for roots, the
    /// mesh of its target root for branches.
    pub fn geometry_mesh(&self, id: NodeId) -> &SimplicialMesh {
        let r = &self.nodes[self.index[&id]];
        let mesh_node = if r.is_root { r } else { &self.nodes[self.index[&r.s_target]] };
        &self.meshes[&mesh_node.mesh_ref]
    }

    pub fn root_mesh(&self, root: NodeId) -> &SimplicialMesh {
        &self.meshes[&self.nodes[self.index[&root]].mesh_ref]
    }

    pub fn local_map(&self, branch: NodeId) -> Option<&[Option<usize>]> {
        self.local_maps.get(&branch).map(|v| v.as_slice())
    }

    pub fn composite(&self, id: NodeId) -> &Composite {
        &self.composites[&id]
    }

    /// Representative among nodes that encode the same patch.
    pub fn canonical(&self, id: NodeId) -> NodeId {
        self.canonical[&id]
    }

    /// Branch nodes of the tree with distinct patches (one representative each).
    pub fn distinct_branches(&self, root: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|r| !r.is_root && self.actual_root[&r.id] == root && self.canonical[&r.id] == r.id)
            .map(|r| r.id)
            .collect()
    }

    /// Node of tree `tree` targeting `s` whose composite map equals `image`.
    pub fn node_with_image(&self, tree: NodeId, s: NodeId, image: &[usize]) -> Option<NodeId> {
        self.by_image.get(&(tree, s, image.to_vec())).copied()
    }

    pub fn s_inverse(&self, root: NodeId) -> &[NodeId] {
        self.s_inverse.get(&root).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Signed jump sources of a node (γ_j^{-1} with ε_{jl}).
    pub fn jump_sources(&self, j: NodeId) -> &[(NodeId, i8)] {
        self.gamma_inverse.get(&j).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn neighbor_sets(&self, j: NodeId) -> Result<NeighborSets> {
        let r = self.node(j)?;
        Ok(NeighborSets {
            gamma_inverse: self.gamma_inverse[&j].iter().map(|&(l, _)| l).collect(),
            gamma: self.gamma[&j].clone(),
            j_up: self.j_up[&j].clone(),
            s: r.s_target,
        })
    }

    /// ε_{jl} for l ∈ γ_j^{-1}.
    pub fn orientation_sign(&self, j: NodeId, l: NodeId) -> Result<i8> {
        self.node(j)?;
        self.node(l)?;
        self.gamma_inverse[&j]
            .iter()
            .find(|&&(m, _)| m == l)
            .map(|&(_, s)| s)
            .ok_or(Error::NotAdjacent { j, l })
    }

    /// Local degree of the forms carried by a tree root of dimension `d`
    /// at global degree `k`.
    pub fn local_degree(&self, root: NodeId, k: usize) -> i64 {
        let d = self.nodes[self.index[&root]].dim as i64;
        k as i64 - (self.n as i64 - d)
    }

    /// Pull back p-simplices of a node's mesh into its tree root's mesh:
    /// for each p-simplex, the root simplex index and the sign (composite
    /// orientation times permutation sign). `None` if the map is not
    /// simplicial there.
    pub fn pullback(&self, j: NodeId, p: usize) -> Result<Vec<(usize, i8)>> {
        let comp = &self.composites[&j];
        let src = self.geometry_mesh(j);
        let dst = self.root_mesh(self.actual_root[&j]);
        let mut out = Vec::with_capacity(src.count(p as i64));
        for s in src.simplices(p) {
            let img: Option<Vec<usize>> = s.iter().map(|&v| comp.map[v]).collect();
            let Some(img) = img else {
                return Err(Error::input(format!("identification of node {j} is not total")));
            };
            let perm = permutation_sign(&img);
            let mut sorted = img;
            sorted.sort_unstable();
            match dst.index_of(p, &sorted) {
                Some(c) if sorted.windows(2).all(|w| w[0] < w[1]) => out.push((c, perm * comp.sign)),
                _ => {
                    return Err(Error::input(format!(
                        "identification of node {j} does not map {s:?} onto a simplex"
                    )))
                }
            }
        }
        Ok(out)
    }
}
