use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use super::mesh::{permutation_sign, BoundaryLabel, SimplicialMesh};
use super::{ForestGeometry, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyForest,
    TreeStructure,
    Dimension,
    MeshMismatch,
    DegenerateSimplex,
    DuplicateVertex,
    NonManifold,
    Labeling,
    NotAFunction,
    NotInjective,
    NotSimplicial,
    NotOnBoundary,
    Telescoping,
    Covering,
    DirichletCompatibility,
    SignIdentity,
    UnpairedPath,
    OrientationMismatch,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub nodes: Vec<NodeId>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_conforming(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn of_kind(&self, kind: ViolationKind) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.kind == kind)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, kind: ViolationKind, nodes: Vec<NodeId>, detail: impl Into<String>) {
        self.0.push(Violation { kind, nodes, detail: detail.into() });
    }
}

/// Check the conformity conditions of a forest. Violations are data; the
/// function never fails.
pub fn validate_conforming(g: &ForestGeometry) -> ValidationReport {
    let mut c = Collector(Vec::new());
    if g.nodes().is_empty() || g.roots().is_empty() {
        c.push(ViolationKind::EmptyForest, vec![], "the forest has no roots");
        return ValidationReport { violations: c.0 };
    }
    check_nodes(g, &mut c);
    check_meshes(g, &mut c);
    let valid_maps = check_branch_maps(g, &mut c);
    check_telescoping(g, &mut c);
    check_covering(g, &valid_maps, &mut c);
    check_dirichlet_compatibility(g, &valid_maps, &mut c);
    check_orientations(g, &valid_maps, &mut c);
    check_sign_identity(g, &mut c);
    ValidationReport { violations: c.0 }
}

fn check_nodes(g: &ForestGeometry, c: &mut Collector) {
    use ViolationKind::*;
    for r in g.nodes() {
        if r.dim > g.n() {
            c.push(Dimension, vec![r.id], format!("dimension {} exceeds ambient dimension {}", r.dim, g.n()));
        }
        if r.is_root {
            if r.s_target != r.id || r.tree_root != r.id {
                c.push(TreeStructure, vec![r.id], "a root must be its own tree and target");
            }
            let m = g.root_mesh(r.id);
            if m.dim() != r.dim {
                c.push(MeshMismatch, vec![r.id], format!("root of dimension {} carries a {}-dimensional mesh", r.dim, m.dim()));
            }
            continue;
        }
        let tree = g.tree_of(r.id);
        if r.tree_root != tree {
            c.push(TreeStructure, vec![r.id], format!("tree field {} but parent chain reaches root {tree}", r.tree_root));
        }
        let s = g.node(r.s_target).unwrap();
        if !s.is_root {
            c.push(TreeStructure, vec![r.id, s.id], "target s must be a root");
        }
        if s.dim != r.dim {
            c.push(Dimension, vec![r.id, s.id], format!("dimension {} differs from its target's {}", r.dim, s.dim));
        }
        if r.mesh_ref != s.mesh_ref {
            c.push(MeshMismatch, vec![r.id, s.id], "a branch must reference the mesh of its target root");
        }
        let p = g.node(r.parent).unwrap();
        if p.dim != r.dim + 1 {
            c.push(Dimension, vec![r.id, p.id], format!("child of dimension {} under parent of dimension {}", r.dim, p.dim));
        }
        let d_root = g.node(tree).unwrap().dim;
        if g.depth(r.id) > d_root {
            c.push(Dimension, vec![r.id], format!("depth {} exceeds root dimension {d_root}", g.depth(r.id)));
        }
        let o = g.map_of(r.id).unwrap().orientation;
        if o != 1 && o != -1 {
            c.push(TreeStructure, vec![r.id], format!("orientation {o} is not ±1"));
        }
    }
}

fn check_meshes(g: &ForestGeometry, c: &mut Collector) {
    use ViolationKind::*;
    let mut owners: BTreeMap<&str, Vec<NodeId>> = BTreeMap::new();
    for &r in g.roots() {
        owners.entry(g.node(r).unwrap().mesh_ref.as_str()).or_default().push(r);
    }
    for (name, mesh) in g.meshes() {
        let owner = owners.get(name.as_str()).cloned().unwrap_or_default();
        if owner.len() > 1 {
            c.push(MeshMismatch, owner.clone(), format!("mesh \"{name}\" is shared by several roots"));
        }
        if mesh.dim() >= 1 {
            let scale = mesh.extent().max(f64::MIN_POSITIVE).powi(mesh.dim() as i32);
            for t in 0..mesh.count(mesh.dim() as i64) {
                if mesh.signed_volume(t).abs() <= 1e-12 * scale {
                    c.push(
                        DegenerateSimplex,
                        owner.clone(),
                        format!("mesh \"{name}\": simplex {:?} has zero measure", mesh.simplex(mesh.dim(), t)),
                    );
                }
            }
        }
        let mut sorted: Vec<(usize, &Vec<f64>)> = mesh.vertices().iter().enumerate().collect();
        sorted.sort_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal));
        for w in sorted.windows(2) {
            if w[0].1 == w[1].1 {
                c.push(
                    DuplicateVertex,
                    owner.clone(),
                    format!("mesh \"{name}\": vertices {} and {} share coordinates", w[0].0, w[1].0),
                );
            }
        }
        if mesh.dim() == 0 {
            continue;
        }
        let d = mesh.dim();
        let mut labelled: BTreeMap<usize, Vec<&BoundaryLabel>> = BTreeMap::new();
        for (f, l) in mesh.labels() {
            labelled.entry(*f).or_default().push(l);
        }
        for f in 0..mesh.count(d as i64 - 1) {
            let cof = mesh.facet_coface_count(f);
            let facet = mesh.simplex(d - 1, f);
            if cof == 0 || cof > 2 {
                c.push(NonManifold, owner.clone(), format!("mesh \"{name}\": facet {facet:?} has {cof} cofaces"));
            }
            let n_labels = labelled.get(&f).map_or(0, |v| v.len());
            if cof == 1 && n_labels != 1 {
                c.push(Labeling, owner.clone(), format!("mesh \"{name}\": boundary facet {facet:?} carries {n_labels} labels"));
            }
            if cof != 1 && n_labels > 0 {
                c.push(Labeling, owner.clone(), format!("mesh \"{name}\": interior facet {facet:?} is labelled"));
            }
        }
        for (f, l) in mesh.labels() {
            if let BoundaryLabel::Branch(b) = l {
                let ok = owner.iter().any(|&r| {
                    let bn = g.node(*b).unwrap();
                    !bn.is_root && bn.parent == r
                });
                if !ok {
                    c.push(
                        Labeling,
                        vec![*b],
                        format!("mesh \"{name}\": facet {:?} labelled with {b}, which is not a child of the owning root", mesh.simplex(d - 1, *f)),
                    );
                }
            }
        }
    }
}

/// Per-branch map checks; returns the branches whose local map is a total,
/// injective simplicial map onto the boundary of the parent mesh.
fn check_branch_maps(g: &ForestGeometry, c: &mut Collector) -> BTreeSet<NodeId> {
    use ViolationKind::*;
    let mut valid = BTreeSet::new();
    for r in g.nodes() {
        if r.is_root {
            continue;
        }
        let map = g.map_of(r.id).unwrap();
        let mut froms = BTreeSet::new();
        let mut ok = true;
        for &(from, _) in &map.vertex_map {
            if !froms.insert(from) {
                c.push(NotAFunction, vec![r.id], format!("vertex {from} is mapped twice"));
                ok = false;
            }
        }
        let local = g.local_map(r.id).unwrap();
        let src = g.geometry_mesh(r.id);
        let dst = g.geometry_mesh(r.parent);
        if local.iter().any(|v| v.is_none()) {
            c.push(NotSimplicial, vec![r.id], "the vertex map is not defined on every vertex of the target mesh");
            continue;
        }
        let imgs: Vec<usize> = local.iter().map(|v| v.unwrap()).collect();
        let distinct: BTreeSet<usize> = imgs.iter().copied().collect();
        if distinct.len() != imgs.len() {
            c.push(NotInjective, vec![r.id], "the vertex map is not injective");
            continue;
        }
        if src.dim() >= dst.dim() {
            // dimension violation already reported
            continue;
        }
        let bc = dst.boundary_complex();
        'simplices: for p in 0..=src.dim() {
            for s in src.simplices(p) {
                let mut img: Vec<usize> = s.iter().map(|&v| imgs[v]).collect();
                img.sort_unstable();
                match dst.index_of(p, &img) {
                    None => {
                        c.push(NotSimplicial, vec![r.id], format!("simplex {s:?} maps to {img:?}, which is not a simplex of the parent mesh"));
                        ok = false;
                        break 'simplices;
                    }
                    Some(idx) if !bc[p][idx] => {
                        c.push(NotOnBoundary, vec![r.id], format!("simplex {s:?} maps into the interior of the parent mesh"));
                        ok = false;
                        break 'simplices;
                    }
                    _ => {}
                }
            }
        }
        if ok {
            valid.insert(r.id);
        }
    }
    valid
}

/// Deep nodes must mirror the subtree of their parent's target root:
/// composing along the path must give the same identification as going
/// through the target tree directly.
fn check_telescoping(g: &ForestGeometry, c: &mut Collector) {
    for r in g.nodes() {
        if r.is_root || g.depth(r.id) < 2 {
            continue;
        }
        let parent = g.node(r.parent).unwrap();
        let t = parent.s_target;
        let mine = g.local_map(r.id).unwrap();
        let o = g.map_of(r.id).unwrap().orientation;
        let mirrored = g.children(t).iter().any(|&q| {
            let qr = g.node(q).unwrap();
            qr.s_target == r.s_target && g.local_map(q).unwrap() == mine && g.map_of(q).unwrap().orientation == o
        });
        if !mirrored {
            c.push(
                ViolationKind::Telescoping,
                vec![r.id, parent.id, t],
                format!("node {} under {} has no matching child of root {t}", r.id, parent.id),
            );
        }
    }
}

fn check_covering(g: &ForestGeometry, valid: &BTreeSet<NodeId>, c: &mut Collector) {
    for &root in g.roots() {
        let mesh = g.root_mesh(root);
        if mesh.dim() == 0 {
            continue;
        }
        let tree_nodes: Vec<NodeId> = g
            .nodes()
            .iter()
            .filter(|r| !r.is_root && g.tree_of(r.id) == root)
            .map(|r| r.id)
            .collect();
        if tree_nodes.iter().any(|id| !valid.contains(id)) {
            // the covering is meaningless with broken maps; those are reported
            continue;
        }
        let bc = mesh.boundary_complex();
        let dc = mesh.dirichlet_closure();
        let mut count: Vec<Vec<Vec<NodeId>>> = (0..=mesh.dim()).map(|p| vec![Vec::new(); mesh.count(p as i64)]).collect();
        for &b in &g.distinct_branches(root) {
            let comp = g.composite(b).total().unwrap();
            let src = g.geometry_mesh(b);
            let src_bc = src.boundary_complex();
            for p in 0..=src.dim() {
                for (i, s) in src.simplices(p).iter().enumerate() {
                    if src_bc[p][i] {
                        continue;
                    }
                    let mut img: Vec<usize> = s.iter().map(|&v| comp[v]).collect();
                    img.sort_unstable();
                    if let Some(idx) = mesh.index_of(p, &img) {
                        count[p][idx].push(b);
                    }
                }
            }
        }
        let mut reported = 0usize;
        for p in 0..=mesh.dim() {
            for idx in 0..mesh.count(p as i64) {
                let hits = &count[p][idx];
                let expected = usize::from(bc[p][idx] && !dc[p][idx]);
                if hits.len() != expected {
                    reported += 1;
                    if reported <= 20 {
                        let what = if !bc[p][idx] {
                            "interior simplex"
                        } else if dc[p][idx] {
                            "dirichlet simplex"
                        } else {
                            "boundary simplex"
                        };
                        let mut nodes = vec![root];
                        nodes.extend(hits);
                        c.push(
                            ViolationKind::Covering,
                            nodes,
                            format!("{what} {:?} of root {root} is covered {} times", mesh.simplex(p, idx), hits.len()),
                        );
                    }
                }
            }
        }
        if reported > 20 {
            c.push(ViolationKind::Covering, vec![root], format!("{} further covering defects in root {root}", reported - 20));
        }
        // facet labels must name the branch whose patch contains the facet
        let d = mesh.dim();
        for (f, label) in mesh.labels() {
            if let BoundaryLabel::Branch(b) = label {
                let hits = &count[d - 1][*f];
                if hits.len() == 1 && g.canonical(*b) != hits[0] {
                    c.push(
                        ViolationKind::Labeling,
                        vec![root, *b, hits[0]],
                        format!("facet {:?} labelled with {b} but covered by {}", mesh.simplex(d - 1, *f), hits[0]),
                    );
                }
            } else if !count[d - 1][*f].is_empty() {
                c.push(
                    ViolationKind::Labeling,
                    vec![root],
                    format!("dirichlet facet {:?} is covered by a branch", mesh.simplex(d - 1, *f)),
                );
            }
        }
    }
}

/// Dirichlet parts of a branch target must land in the Dirichlet closure of
/// the parent root, so that removing Dirichlet trace DOFs keeps a subcomplex.
fn check_dirichlet_compatibility(g: &ForestGeometry, valid: &BTreeSet<NodeId>, c: &mut Collector) {
    for r in g.nodes() {
        if r.is_root || g.depth(r.id) != 1 || !valid.contains(&r.id) {
            continue;
        }
        let src = g.geometry_mesh(r.id);
        let dst = g.root_mesh(r.parent);
        let src_dc = src.dirichlet_closure();
        let dst_dc = dst.dirichlet_closure();
        let comp = g.composite(r.id).total().unwrap();
        'outer: for p in 0..=src.dim() {
            for (i, s) in src.simplices(p).iter().enumerate() {
                if !src_dc[p][i] {
                    continue;
                }
                let mut img: Vec<usize> = s.iter().map(|&v| comp[v]).collect();
                img.sort_unstable();
                if let Some(idx) = dst.index_of(p, &img) {
                    if !dst_dc[p][idx] {
                        c.push(
                            ViolationKind::DirichletCompatibility,
                            vec![r.id, r.parent],
                            format!("dirichlet simplex {s:?} of root {} meets the non-dirichlet boundary of root {}", r.s_target, r.parent),
                        );
                        break 'outer;
                    }
                }
            }
        }
    }
}

/// Relative orientation of a patch as seen from its parent mesh, or None if
/// it is not constant (or not computable).
pub(crate) fn geometric_orientation(parent: &SimplicialMesh, src: &SimplicialMesh, local: &[usize]) -> Result<i8, String> {
    let d = src.dim();
    let mut seen = None;
    for (i, s) in src.simplices(d).iter().enumerate() {
        let img: Vec<usize> = s.iter().map(|&v| local[v]).collect();
        let perm = permutation_sign(&img);
        let mut sorted = img;
        sorted.sort_unstable();
        let Some(f) = parent.index_of(d, &sorted) else {
            return Err(format!("{s:?} does not map to a facet"));
        };
        let Some(o_bd) = parent.boundary_orientation(f) else {
            return Err(format!("{s:?} does not map to a boundary facet"));
        };
        let o_src = if d == 0 { 1 } else { src.top_orientation(i) };
        if o_bd == 0 || o_src == 0 {
            return Err("degenerate simplex".into());
        }
        let eps = o_bd * perm * o_src;
        match seen {
            None => seen = Some(eps),
            Some(e) if e != eps => return Err("the relative orientation is not constant over the patch".into()),
            _ => {}
        }
    }
    seen.ok_or_else(|| "empty patch".into())
}

fn check_orientations(g: &ForestGeometry, valid: &BTreeSet<NodeId>, c: &mut Collector) {
    for r in g.nodes() {
        if r.is_root || !valid.contains(&r.id) {
            continue;
        }
        let local: Vec<usize> = g.local_map(r.id).unwrap().iter().map(|v| v.unwrap()).collect();
        let stored = g.map_of(r.id).unwrap().orientation;
        match geometric_orientation(g.geometry_mesh(r.parent), g.geometry_mesh(r.id), &local) {
            Ok(eps) if eps as i64 == stored => {}
            Ok(eps) => c.push(
                ViolationKind::OrientationMismatch,
                vec![r.id],
                format!("stored orientation {stored} but the patch is oriented {eps} relative to node {}", r.parent),
            ),
            Err(msg) => c.push(ViolationKind::OrientationMismatch, vec![r.id], msg),
        }
    }
}

/// Two-step jump paths i <- l1 <- m must cancel in pairs: every composite
/// identification reached from root i is reached exactly twice, with
/// opposite sign products ε_{i l1} ε_{l1 l'}.
fn check_sign_identity(g: &ForestGeometry, c: &mut Collector) {
    let per_root: Vec<Vec<Violation>> = g
        .roots()
        .par_iter()
        .map(|&i| {
            let mut out = Collector(Vec::new());
            let mut groups: BTreeMap<(NodeId, Vec<usize>), Vec<(NodeId, NodeId, i8)>> = BTreeMap::new();
            for &(l1, s1) in g.jump_sources(i) {
                let Some(psi1) = g.composite(l1).total() else { continue };
                let r1 = g.tree_of(l1);
                for &(m, sm) in g.jump_sources(r1) {
                    let Some(psim) = g.composite(m).total() else { continue };
                    let Some(img): Option<Vec<usize>> = psi1.iter().map(|&v| psim.get(v).copied()).collect() else {
                        continue;
                    };
                    groups.entry((g.tree_of(m), img)).or_default().push((l1, m, s1 * sm));
                }
            }
            let mut memo: HashMap<(NodeId, Vec<usize>), Option<NodeId>> = HashMap::new();
            for ((r2, img), paths) in groups {
                let lp = *memo.entry((r2, img.clone())).or_insert_with(|| g.node_with_image(r2, i, &img));
                let lp_txt = lp.map_or("none".to_string(), |x| x.to_string());
                let mut nodes = vec![i];
                for &(l1, m, _) in &paths {
                    nodes.push(l1);
                    nodes.push(m);
                }
                if paths.len() != 2 {
                    out.push(
                        ViolationKind::UnpairedPath,
                        nodes,
                        format!("{} jump paths from root {i} reach node {lp_txt} of tree {r2}", paths.len()),
                    );
                } else if paths[0].2 == paths[1].2 {
                    out.push(
                        ViolationKind::SignIdentity,
                        nodes,
                        format!(
                            "paths {}-{} and {}-{} from root {i} to node {lp_txt} have equal sign products {}",
                            paths[0].0, paths[0].1, paths[1].0, paths[1].1, paths[0].2
                        ),
                    );
                }
            }
            out.0
        })
        .collect();
    for v in per_root {
        c.0.extend(v);
    }
}
