//! Programmatic construction of the shipped geometries.
//!
//! A fixture is described by its roots (meshes plus the boundary patches
//! they share with lower-dimensional roots); the builder derives every
//! deeper tree node by mirroring, computes orientations from the geometry
//! and labels all remaining boundary facets dirichlet.

use std::collections::BTreeMap;

use serde_json::json;

use crate::error::{Error, Result};
use crate::forest_geometry::validate::geometric_orientation;
use crate::forest_geometry::{
    BoundaryLabel, GeometryFile, MapEntry, MeshEntry, NodeEntry, NodeId, SimplicialMesh,
};

struct Patch {
    target: NodeId,
    /// vertex of the target root's mesh -> vertex of this root's mesh
    map: Vec<usize>,
}

struct RootSpec {
    id: NodeId,
    mesh: SimplicialMesh,
    patches: Vec<Patch>,
}

pub struct FixtureBuilder {
    n: usize,
    roots: BTreeMap<NodeId, RootSpec>,
    meta: serde_json::Value,
}

struct Built {
    id: NodeId,
    s: NodeId,
    parent: NodeId,
    tree: NodeId,
    map: Vec<usize>,
    orientation: i64,
}

impl FixtureBuilder {
    pub fn new(n: usize) -> Self {
        FixtureBuilder { n, roots: BTreeMap::new(), meta: json!({}) }
    }

    pub fn root(&mut self, id: NodeId, dim: usize, vertices: Vec<Vec<f64>>, tops: Vec<Vec<usize>>) -> &mut Self {
        let mesh = SimplicialMesh::from_top_simplices(dim, vertices, tops, vec![]).expect("fixture mesh");
        self.roots.insert(id, RootSpec { id, mesh, patches: Vec::new() });
        self
    }

    pub fn patch(&mut self, root: NodeId, target: NodeId, map: Vec<usize>) -> &mut Self {
        self.roots.get_mut(&root).expect("patch on unknown root").patches.push(Patch { target, map });
        self
    }

    pub fn meta(&mut self, meta: serde_json::Value) -> &mut Self {
        self.meta = meta;
        self
    }

    pub fn build(&self) -> Result<GeometryFile> {
        let mut next: NodeId = self.roots.keys().max().copied().unwrap_or(0) + 1;
        let mut built: Vec<Built> = Vec::new();
        let mut depth1: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        for spec in self.roots.values() {
            for p in &spec.patches {
                let target = &self.roots[&p.target].mesh;
                let o = geometric_orientation(&spec.mesh, target, &p.map)
                    .map_err(|e| Error::input(format!("patch {} -> {}: {e}", p.target, spec.id)))?;
                depth1.entry(spec.id).or_default().push(built.len());
                built.push(Built { id: next, s: p.target, parent: spec.id, tree: spec.id, map: p.map.clone(), orientation: o as i64 });
                next += 1;
            }
        }
        // mirror the depth-1 children of each target root below every node
        let mut frontier: Vec<usize> = (0..built.len()).collect();
        while !frontier.is_empty() {
            let mut new_frontier = Vec::new();
            for idx in frontier {
                let (pid, s, tree) = (built[idx].id, built[idx].s, built[idx].tree);
                for &q in depth1.get(&s).map(|v| v.as_slice()).unwrap_or(&[]) {
                    let (qs, qmap, qo) = (built[q].s, built[q].map.clone(), built[q].orientation);
                    new_frontier.push(built.len());
                    built.push(Built { id: next, s: qs, parent: pid, tree, map: qmap, orientation: qo });
                    next += 1;
                }
            }
            frontier = new_frontier;
        }

        let mut meshes = BTreeMap::new();
        let mut nodes = Vec::new();
        for spec in self.roots.values() {
            let mesh = &spec.mesh;
            let mut labels = Vec::new();
            if mesh.dim() > 0 {
                let d = mesh.dim();
                let mut labelled = vec![false; mesh.count(d as i64 - 1)];
                for &bi in depth1.get(&spec.id).map(|v| v.as_slice()).unwrap_or(&[]) {
                    let b = &built[bi];
                    let target = &self.roots[&b.s].mesh;
                    for s in target.simplices(d - 1) {
                        let mut img: Vec<usize> = s.iter().map(|&v| b.map[v]).collect();
                        img.sort_unstable();
                        let f = mesh.index_of(d - 1, &img).ok_or_else(|| Error::input("patch is not simplicial"))?;
                        labelled[f] = true;
                        labels.push((img, BoundaryLabel::Branch(b.id)));
                    }
                }
                for f in mesh.boundary_facets() {
                    if !labelled[f] {
                        labels.push((mesh.simplex(d - 1, f).to_vec(), BoundaryLabel::Dirichlet));
                    }
                }
                labels.sort();
            }
            let name = format!("X{}", spec.id);
            meshes.insert(name.clone(), MeshEntry::from_mesh(&mesh.with_labels(labels)?));
            nodes.push(NodeEntry { id: spec.id, dim: mesh.dim(), root: true, tree: spec.id, s: spec.id, parent: 0, mesh: name });
        }
        let mut maps = Vec::new();
        for b in &built {
            let dim = self.roots[&b.s].mesh.dim();
            nodes.push(NodeEntry { id: b.id, dim, root: false, tree: b.tree, s: b.s, parent: b.parent, mesh: format!("X{}", b.s) });
            maps.push(MapEntry {
                branch: b.id,
                vertex_map: b.map.iter().enumerate().map(|(a, &c)| [a, c]).collect(),
                orientation: b.orientation,
            });
        }
        let meta = if self.meta.as_object().is_some_and(|m| m.is_empty()) { None } else { Some(self.meta.clone()) };
        Ok(GeometryFile { n: self.n, nodes, meshes, maps, meta })
    }
}

/// Structured triangulation of a rectangle; vertex (i, j) has index
/// j * (nx + 1) + i and every cell is split along its rising diagonal.
pub fn grid_triangles(nx: usize, ny: usize, x: (f64, f64), y: (f64, f64)) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push(vec![
                x.0 + (x.1 - x.0) * i as f64 / nx as f64,
                y.0 + (y.1 - y.0) * j as f64 / ny as f64,
            ]);
        }
    }
    let v = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            tris.push(vec![v(i, j), v(i + 1, j), v(i + 1, j + 1)]);
            tris.push(vec![v(i, j), v(i, j + 1), v(i + 1, j + 1)]);
        }
    }
    (verts, tris)
}

pub fn interval(a: f64, b: f64, cells: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let verts = (0..=cells).map(|i| vec![a + (b - a) * i as f64 / cells as f64]).collect();
    let edges = (0..cells).map(|i| vec![i, i + 1]).collect();
    (verts, edges)
}

fn point() -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    (vec![vec![]], vec![vec![0]])
}

/// Cut a grid triangulation open along the horizontal grid line `row`
/// between columns `i0` and `i1`. Triangles below the line get fresh copies
/// of the cut vertices, shifted down by `delta` so no coordinates coincide.
/// Returns the upper and lower vertex paths along the cut.
fn cut_row(
    verts: &mut Vec<Vec<f64>>,
    tris: &mut [Vec<usize>],
    nx: usize,
    row: usize,
    (i0, i1): (usize, usize),
    (dup_start, dup_end): (bool, bool),
    delta: f64,
) -> (Vec<usize>, Vec<usize>) {
    let v = |i: usize| row * (nx + 1) + i;
    let yc = verts[v(i0)][1];
    let upper: Vec<usize> = (i0..=i1).map(v).collect();
    let mut lower = upper.clone();
    let mut remap = BTreeMap::new();
    for (k, i) in (i0..=i1).enumerate() {
        let dup = (i > i0 && i < i1) || (i == i0 && dup_start) || (i == i1 && dup_end);
        if dup {
            let mut c = verts[v(i)].clone();
            c[1] -= delta;
            verts.push(c);
            lower[k] = verts.len() - 1;
            remap.insert(v(i), verts.len() - 1);
        }
    }
    for t in tris.iter_mut() {
        let cy: f64 = t.iter().map(|&a| verts[a][1]).sum::<f64>() / 3.0;
        if cy < yc {
            for a in t.iter_mut() {
                if let Some(&b) = remap.get(a) {
                    *a = b;
                }
            }
        }
    }
    (upper, lower)
}

/// Kuhn triangulation of a box grid, 6 tetrahedra per cell.
pub fn grid_tetrahedra(n: [usize; 3], lo: [f64; 3], hi: [f64; 3]) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let idx = |i: usize, j: usize, k: usize| (k * (n[1] + 1) + j) * (n[0] + 1) + i;
    let mut verts = Vec::new();
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                let c = [i, j, k];
                verts.push((0..3).map(|d| lo[d] + (hi[d] - lo[d]) * c[d] as f64 / n[d] as f64).collect());
            }
        }
    }
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::new();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for p in perms {
                    let mut c = [i, j, k];
                    let mut t = vec![idx(c[0], c[1], c[2])];
                    for &d in &p {
                        c[d] += 1;
                        t.push(idx(c[0], c[1], c[2]));
                    }
                    tets.push(t);
                }
            }
        }
    }
    (verts, tets)
}

/// Unit square, single root, whole boundary dirichlet.
pub fn single_square(cells: usize) -> GeometryFile {
    let (v, t) = grid_triangles(cells, cells, (0.0, 1.0), (0.0, 1.0));
    let mut b = FixtureBuilder::new(2);
    b.root(1, 2, v, t).meta(json!({
        "name": "single_square",
        "betti": [1, 0, 0],
        "betti_essential": [0, 0, 1],
    }));
    b.build().expect("single_square")
}

/// Unit interval, single root, both ends dirichlet.
pub fn single_interval(cells: usize) -> GeometryFile {
    let (v, e) = interval(0.0, 1.0, cells);
    let mut b = FixtureBuilder::new(1);
    b.root(1, 1, v, e).meta(json!({
        "name": "single_interval",
        "betti": [1, 0],
        "betti_essential": [0, 1],
    }));
    b.build().expect("single_interval")
}

/// Two segments [-1,0] and [0,1] meeting at a point root; outer ends dirichlet.
pub fn two_segments(cells: usize) -> GeometryFile {
    let mut b = FixtureBuilder::new(1);
    let (p, pt) = point();
    let (lv, le) = interval(-1.0, 0.0, cells);
    let (rv, re) = interval(0.0, 1.0, cells);
    b.root(1, 0, p, pt).root(2, 1, lv, le).root(3, 1, rv, re);
    b.patch(2, 1, vec![cells]).patch(3, 1, vec![0]);
    b.meta(json!({
        "name": "two_segments",
        "betti": [1, 0],
        "betti_essential": [0, 1],
    }));
    b.build().expect("two_segments")
}

/// Two segments with the outer ends represented by point roots: no
/// dirichlet boundary at all.
pub fn two_segments_closed(cells: usize) -> GeometryFile {
    let mut b = FixtureBuilder::new(1);
    let (lv, le) = interval(-1.0, 0.0, cells);
    let (rv, re) = interval(0.0, 1.0, cells);
    for id in 1..=3 {
        let (p, pt) = point();
        b.root(id, 0, p, pt);
    }
    b.root(4, 1, lv, le).root(5, 1, rv, re);
    b.patch(4, 2, vec![0]).patch(4, 1, vec![cells]);
    b.patch(5, 1, vec![0]).patch(5, 3, vec![cells]);
    b.meta(json!({ "name": "two_segments_closed", "closed": true }));
    b.build().expect("two_segments_closed")
}

/// Unit square with an interior fracture from (0.25, 0.5) to (0.75, 0.5)
/// and point roots at its tips; the outer boundary is dirichlet.
/// `cells` must be a multiple of 4.
pub fn fracture_square(cells: usize) -> GeometryFile {
    assert!(cells % 4 == 0 && cells >= 4);
    let h = 1.0 / cells as f64;
    let (mut v, mut t) = grid_triangles(cells, cells, (0.0, 1.0), (0.0, 1.0));
    let (i0, i1) = (cells / 4, 3 * cells / 4);
    let (upper, lower) = cut_row(&mut v, &mut t, cells, cells / 2, (i0, i1), (false, false), 0.1 * h);
    let (fv, fe) = interval(0.25, 0.75, i1 - i0);
    let mut b = FixtureBuilder::new(2);
    let (p1, pt1) = point();
    let (p2, pt2) = point();
    b.root(1, 0, p1, pt1).root(2, 0, p2, pt2).root(3, 1, fv, fe).root(4, 2, v, t);
    b.patch(3, 1, vec![0]).patch(3, 2, vec![i1 - i0]);
    b.patch(4, 3, upper).patch(4, 3, lower);
    b.meta(json!({
        "name": "fracture_square",
        "betti": [1, 0, 0],
        "betti_essential": [0, 0, 1],
    }));
    b.build().expect("fracture_square")
}

/// The example geometry with a slit: unit square split into halves 6 and 7
/// by lines 3 (upper) and 5 (lower) meeting at point 1 = (0.5, 0.5); line 4
/// is a slit into half 7 ending at point 2 = (0.75, 0.5).
/// `cells` must be a multiple of 4.
pub fn fig1(cells: usize) -> GeometryFile {
    assert!(cells % 4 == 0 && cells >= 4);
    let h = 1.0 / cells as f64;
    let half = cells / 2;
    let q = cells / 4;
    let (v6, t6) = grid_triangles(half, cells, (0.0, 0.5), (0.0, 1.0));
    let (mut v7, mut t7) = grid_triangles(half, cells, (0.5, 1.0), (0.0, 1.0));
    let (upper, lower) = cut_row(&mut v7, &mut t7, half, half, (0, q), (true, false), 0.1 * h);
    let col = |nx: usize, i: usize, j: usize| j * (nx + 1) + i;

    let mut b = FixtureBuilder::new(2);
    let (p1, pt1) = point();
    let (p2, pt2) = point();
    let (l3v, l3e) = interval(0.5, 1.0, half);
    let (l4v, l4e) = interval(0.5, 0.75, q);
    let (l5v, l5e) = interval(0.0, 0.5, half);
    b.root(1, 0, p1, pt1).root(2, 0, p2, pt2);
    b.root(3, 1, l3v, l3e).root(4, 1, l4v, l4e).root(5, 1, l5v, l5e);
    b.root(6, 2, v6, t6).root(7, 2, v7, t7);
    b.patch(3, 1, vec![0]);
    b.patch(4, 1, vec![0]).patch(4, 2, vec![q]);
    b.patch(5, 1, vec![half]);
    // left half: its right edge is lines 3 and 5
    b.patch(6, 3, (0..=half).map(|k| col(half, half, half + k)).collect());
    b.patch(6, 5, (0..=half).map(|k| col(half, half, k)).collect());
    // right half: left edge, then both sides of the slit
    b.patch(7, 3, (0..=half).map(|k| col(half, 0, half + k)).collect());
    let mut l5_in_7: Vec<usize> = (0..=half).map(|k| col(half, 0, k)).collect();
    l5_in_7[half] = lower[0];
    b.patch(7, 5, l5_in_7);
    b.patch(7, 4, upper).patch(7, 4, lower);
    b.meta(json!({
        "name": "fig1",
        "betti": [1, 0, 0],
        "betti_essential": [0, 0, 1],
    }));
    b.build().expect("fig1")
}

/// `fig1` with the orientation of the upper slit branch reversed. Returns
/// the file and the id of the corrupted branch.
pub fn fig1_flipped(cells: usize) -> (GeometryFile, NodeId) {
    let mut f = fig1(cells);
    let target = f
        .nodes
        .iter()
        .find(|n| !n.root && n.parent == 7 && n.s == 4)
        .map(|n| n.id)
        .expect("slit branch");
    for m in &mut f.maps {
        if m.branch == target {
            m.orientation = -m.orientation;
        }
    }
    if let Some(meta) = f.meta.as_mut().and_then(|m| m.as_object_mut()) {
        meta.insert("name".into(), json!("fig1_flipped"));
        meta.insert("corrupted_branch".into(), json!(target));
    }
    (f, target)
}

/// Annulus 1 < r < 2 cut open along one radial fracture. The main root is
/// the (r, θ) rectangle; both circles are dirichlet.
pub fn annulus(nr: usize, ntheta: usize) -> GeometryFile {
    let (v, t) = grid_triangles(nr, ntheta, (1.0, 2.0), (0.0, std::f64::consts::TAU));
    let (fv, fe) = interval(1.0, 2.0, nr);
    let mut b = FixtureBuilder::new(2);
    b.root(1, 1, fv, fe).root(2, 2, v, t);
    b.patch(2, 1, (0..=nr).collect());
    b.patch(2, 1, (0..=nr).map(|i| ntheta * (nr + 1) + i).collect());
    b.meta(json!({
        "name": "annulus",
        "betti": [1, 1, 0],
        "betti_essential": [0, 1, 1],
    }));
    b.build().expect("annulus")
}

/// Unit square whose boundary is carried by four side roots and four corner
/// roots; no dirichlet boundary.
pub fn closed_square(cells: usize) -> GeometryFile {
    let (v, t) = grid_triangles(cells, cells, (0.0, 1.0), (0.0, 1.0));
    let at = |i: usize, j: usize| j * (cells + 1) + i;
    let mut b = FixtureBuilder::new(2);
    for id in 1..=4 {
        let (p, pt) = point();
        b.root(id, 0, p, pt);
    }
    for id in 5..=8 {
        let (sv, se) = interval(0.0, 1.0, cells);
        b.root(id, 1, sv, se);
    }
    b.root(9, 2, v, t);
    // corners 1..4 at (0,0), (1,0), (1,1), (0,1)
    b.patch(5, 1, vec![0]).patch(5, 2, vec![cells]);
    b.patch(6, 2, vec![0]).patch(6, 3, vec![cells]);
    b.patch(7, 4, vec![0]).patch(7, 3, vec![cells]);
    b.patch(8, 1, vec![0]).patch(8, 4, vec![cells]);
    b.patch(9, 5, (0..=cells).map(|k| at(k, 0)).collect());
    b.patch(9, 6, (0..=cells).map(|k| at(cells, k)).collect());
    b.patch(9, 7, (0..=cells).map(|k| at(k, cells)).collect());
    b.patch(9, 8, (0..=cells).map(|k| at(0, k)).collect());
    b.meta(json!({ "name": "closed_square", "closed": true }));
    b.build().expect("closed_square")
}

/// Unit cube split by the full plane z = 1/2; outer boundary dirichlet.
pub fn split_cube(cells: usize) -> GeometryFile {
    assert!(cells % 2 == 0 && cells >= 2);
    let half = cells / 2;
    let (pv, pt) = grid_triangles(cells, cells, (0.0, 1.0), (0.0, 1.0));
    let (lv, lt) = grid_tetrahedra([cells, cells, half], [0.0, 0.0, 0.0], [1.0, 1.0, 0.5]);
    let (uv, ut) = grid_tetrahedra([cells, cells, half], [0.0, 0.0, 0.5], [1.0, 1.0, 1.0]);
    let layer = |k: usize| (0..(cells + 1) * (cells + 1)).map(move |p| k * (cells + 1) * (cells + 1) + p);
    let mut b = FixtureBuilder::new(3);
    b.root(1, 2, pv, pt).root(2, 3, lv, lt).root(3, 3, uv, ut);
    b.patch(2, 1, layer(half).collect()).patch(3, 1, layer(0).collect());
    b.meta(json!({
        "name": "split_cube",
        "betti": [1, 0, 0, 0],
        "betti_essential": [0, 0, 0, 1],
    }));
    b.build().expect("split_cube")
}

/// Every shipped fixture with its file name.
pub fn shipped() -> Vec<(&'static str, GeometryFile)> {
    vec![
        ("single_square.json", single_square(4)),
        ("single_interval.json", single_interval(8)),
        ("two_segments.json", two_segments(4)),
        ("two_segments_closed.json", two_segments_closed(4)),
        ("fracture_square.json", fracture_square(8)),
        ("fig1.json", fig1(8)),
        ("fig1_flipped.json", fig1_flipped(8).0),
        ("annulus.json", annulus(3, 12)),
        ("closed_square.json", closed_square(4)),
        ("split_cube.json", split_cube(2)),
    ]
}

/// Pretty JSON as written to the fixtures directory.
pub fn to_json(file: &GeometryFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("serializable");
    s.push('\n');
    s
}
