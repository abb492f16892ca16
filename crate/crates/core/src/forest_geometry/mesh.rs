use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::Serialize;

use super::NodeId;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryLabel {
    Dirichlet,
    Branch(NodeId),
}

/// A simplicial complex in reference coordinates. Simplices are stored as
/// sorted vertex tuples; the sorted order fixes the orientation of every
/// simplex and hence every incidence sign.
#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    simplices: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    labels: Vec<(usize, BoundaryLabel)>,
    facet_cofaces: Vec<usize>,
}

/// All `size`-element subsets of a sorted slice, in lexicographic order.
pub fn subsets(verts: &[usize], size: usize) -> Vec<Vec<usize>> {
    fn rec(v: &[usize], size: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..v.len() {
            if v.len() - i < size - cur.len() {
                break;
            }
            cur.push(v[i]);
            rec(v, size, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if size <= verts.len() {
        rec(verts, size, 0, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

/// Sign of the permutation that sorts `v` (entries assumed distinct).
pub fn permutation_sign(v: &[usize]) -> i8 {
    let mut inversions = 0usize;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if v[i] > v[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1
    } else {
        -1
    }
}

fn factorial(p: usize) -> f64 {
    (1..=p).map(|x| x as f64).product()
}

impl SimplicialMesh {
    pub fn new(
        dim: usize,
        vertices: Vec<Vec<f64>>,
        simplices: Vec<Vec<Vec<usize>>>,
        labels: Vec<(Vec<usize>, BoundaryLabel)>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::input(format!(
                    "vertex {i} has {} coordinates, mesh dimension is {dim}",
                    v.len()
                )));
            }
        }
        if simplices.len() != dim + 1 {
            return Err(Error::input(format!(
                "mesh of dimension {dim} needs simplex lists for degrees 0..={dim}"
            )));
        }
        let mut lookup = Vec::with_capacity(dim + 1);
        for (p, list) in simplices.iter().enumerate() {
            let mut map = HashMap::with_capacity(list.len());
            for (idx, s) in list.iter().enumerate() {
                if s.len() != p + 1 {
                    return Err(Error::input(format!(
                        "non-simplicial cell {s:?} listed among {p}-simplices"
                    )));
                }
                if s.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::input(format!(
                        "simplex {s:?} is not a strictly increasing vertex tuple"
                    )));
                }
                if s.iter().any(|&v| v >= nv) {
                    return Err(Error::input(format!("simplex {s:?} references a missing vertex")));
                }
                if map.insert(s.clone(), idx).is_some() {
                    return Err(Error::input(format!("simplex {s:?} listed twice")));
                }
            }
            lookup.push(map);
        }
        if simplices[0].len() != nv {
            return Err(Error::input(format!(
                "{} vertices but {} 0-simplices",
                nv,
                simplices[0].len()
            )));
        }
        for p in 1..=dim {
            for s in &simplices[p] {
                for face in subsets(s, p) {
                    if !lookup[p - 1].contains_key(&face) {
                        return Err(Error::input(format!(
                            "face {face:?} of simplex {s:?} is missing; the complex is not closed under faces"
                        )));
                    }
                }
            }
        }

        let mut facet_cofaces = Vec::new();
        if dim >= 1 {
            facet_cofaces = vec![0usize; simplices[dim - 1].len()];
            for s in &simplices[dim] {
                for face in subsets(s, dim) {
                    facet_cofaces[lookup[dim - 1][&face]] += 1;
                }
            }
        }

        let mut resolved = Vec::with_capacity(labels.len());
        for (facet, label) in labels {
            if dim == 0 {
                return Err(Error::input("a 0-dimensional mesh has no facets to label"));
            }
            let mut sorted = facet.clone();
            sorted.sort_unstable();
            match lookup[dim - 1].get(&sorted) {
                Some(&idx) => resolved.push((idx, label)),
                None => {
                    return Err(Error::input(format!(
                        "boundary label on {facet:?}, which is not a facet of the mesh"
                    )))
                }
            }
        }

        Ok(SimplicialMesh { dim, vertices, simplices, lookup, labels: resolved, facet_cofaces })
    }

    /// Build the full face closure of a list of top simplices.
    pub fn from_top_simplices(
        dim: usize,
        vertices: Vec<Vec<f64>>,
        tops: Vec<Vec<usize>>,
        labels: Vec<(Vec<usize>, BoundaryLabel)>,
    ) -> Result<Self> {
        let mut simplices: Vec<Vec<Vec<usize>>> = vec![Vec::new(); dim + 1];
        let mut seen: Vec<HashMap<Vec<usize>, ()>> = vec![HashMap::new(); dim + 1];
        simplices[0] = (0..vertices.len()).map(|v| vec![v]).collect();
        for t in tops {
            let mut t = t;
            t.sort_unstable();
            for p in 1..=dim {
                for f in subsets(&t, p + 1) {
                    if seen[p].insert(f.clone(), ()).is_none() {
                        simplices[p].push(f);
                    }
                }
            }
        }
        for list in simplices.iter_mut().skip(1) {
            list.sort();
        }
        SimplicialMesh::new(dim, vertices, simplices, labels)
    }

    /// Same complex with a new set of facet labels.
    pub fn with_labels(&self, labels: Vec<(Vec<usize>, BoundaryLabel)>) -> Result<Self> {
        SimplicialMesh::new(self.dim, self.vertices.clone(), self.simplices.clone(), labels)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v]
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// Number of p-simplices; 0 outside 0..=dim.
    pub fn count(&self, p: i64) -> usize {
        if p < 0 || p as usize > self.dim {
            0
        } else {
            self.simplices[p as usize].len()
        }
    }

    pub fn simplices(&self, p: usize) -> &[Vec<usize>] {
        &self.simplices[p]
    }

    pub fn simplex(&self, p: usize, i: usize) -> &[usize] {
        &self.simplices[p][i]
    }

    pub fn index_of(&self, p: usize, sorted: &[usize]) -> Option<usize> {
        self.lookup.get(p)?.get(sorted).copied()
    }

    pub fn labels(&self) -> &[(usize, BoundaryLabel)] {
        &self.labels
    }

    /// Number of top simplices containing facet `f`.
    pub fn facet_coface_count(&self, f: usize) -> usize {
        self.facet_cofaces[f]
    }

    pub fn boundary_facets(&self) -> Vec<usize> {
        (0..self.facet_cofaces.len()).filter(|&f| self.facet_cofaces[f] == 1).collect()
    }

    /// Signed incidence from p-cochains to (p+1)-cochains.
    pub fn coboundary(&self, p: usize) -> Result<CsrMatrix<i64>> {
        if p >= self.dim {
            return Err(Error::DegreeOutOfRange { k: p as i64, max: self.dim.saturating_sub(1) });
        }
        let mut trip = Vec::with_capacity(self.simplices[p + 1].len() * (p + 2));
        for (r, s) in self.simplices[p + 1].iter().enumerate() {
            for m in 0..s.len() {
                let face: Vec<usize> = s.iter().enumerate().filter(|&(i, _)| i != m).map(|(_, &v)| v).collect();
                let c = self.lookup[p][&face];
                trip.push((r, c, if m % 2 == 0 { 1 } else { -1 }));
            }
        }
        Ok(CsrMatrix::from_triplets(self.simplices[p + 1].len(), self.simplices[p].len(), trip))
    }

    fn edge_matrix(&self, s: &[usize]) -> DMatrix<f64> {
        let v0 = &self.vertices[s[0]];
        DMatrix::from_fn(self.dim, s.len() - 1, |r, c| self.vertices[s[c + 1]][r] - v0[r])
    }

    /// Euclidean p-volume in reference coordinates; 0-simplices have measure 1.
    pub fn measure(&self, p: usize, i: usize) -> f64 {
        if p == 0 {
            return 1.0;
        }
        let e = self.edge_matrix(&self.simplices[p][i]);
        let gram = e.transpose() * &e;
        gram.determinant().max(0.0).sqrt() / factorial(p)
    }

    /// Signed top-dimensional volume of the sorted-vertex simplex.
    pub fn signed_volume(&self, i: usize) -> f64 {
        if self.dim == 0 {
            return 1.0;
        }
        self.edge_matrix(&self.simplices[self.dim][i]).determinant() / factorial(self.dim)
    }

    /// Whether the sorted-vertex order of top simplex `i` agrees with the
    /// standard orientation of reference space (0 when degenerate).
    pub fn top_orientation(&self, i: usize) -> i8 {
        let v = self.signed_volume(i);
        if v > 0.0 {
            1
        } else if v < 0.0 {
            -1
        } else {
            0
        }
    }

    /// Orientation induced on a boundary facet by its unique top coface,
    /// relative to the facet's sorted-vertex orientation.
    pub fn boundary_orientation(&self, f: usize) -> Option<i8> {
        if self.dim == 0 || self.facet_cofaces.get(f) != Some(&1) {
            return None;
        }
        let facet = &self.simplices[self.dim - 1][f];
        for (t, s) in self.simplices[self.dim].iter().enumerate() {
            if let Some(pos) = position_of_opposite(s, facet) {
                let sign = if pos % 2 == 0 { 1 } else { -1 };
                return Some(sign * self.top_orientation(t));
            }
        }
        None
    }

    /// For each degree, which simplices are faces of a facet carrying `pred`.
    fn closure_of_labels(&self, pred: impl Fn(&BoundaryLabel) -> bool) -> Vec<Vec<bool>> {
        let mut out: Vec<Vec<bool>> = self.simplices.iter().map(|l| vec![false; l.len()]).collect();
        if self.dim == 0 {
            return out;
        }
        for (f, label) in &self.labels {
            if pred(label) {
                let facet = self.simplices[self.dim - 1][*f].clone();
                for p in 0..self.dim {
                    for face in subsets(&facet, p + 1) {
                        out[p][self.lookup[p][&face]] = true;
                    }
                }
            }
        }
        out
    }

    pub fn dirichlet_closure(&self) -> Vec<Vec<bool>> {
        self.closure_of_labels(|l| *l == BoundaryLabel::Dirichlet)
    }

    /// Faces of boundary facets, per degree.
    pub fn boundary_complex(&self) -> Vec<Vec<bool>> {
        let mut out: Vec<Vec<bool>> = self.simplices.iter().map(|l| vec![false; l.len()]).collect();
        if self.dim == 0 {
            return out;
        }
        for f in self.boundary_facets() {
            let facet = self.simplices[self.dim - 1][f].clone();
            for p in 0..self.dim {
                for face in subsets(&facet, p + 1) {
                    out[p][self.lookup[p][&face]] = true;
                }
            }
        }
        out
    }

    /// Sum of the volumes of top simplices containing each p-simplex.
    pub fn star_volume(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.simplices[p].len()];
        if self.dim == 0 {
            out.iter_mut().for_each(|x| *x = 1.0);
            return out;
        }
        for (t, s) in self.simplices[self.dim].iter().enumerate() {
            let vol = self.signed_volume(t).abs();
            for face in subsets(s, p + 1) {
                out[self.lookup[p][&face]] += vol;
            }
        }
        out
    }

    /// Diameter of the vertex cloud, for scale-aware tolerances.
    pub fn extent(&self) -> f64 {
        let mut ext: f64 = 0.0;
        for d in 0..self.dim {
            let lo = self.vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
            let hi = self.vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
            ext = ext.max(hi - lo);
        }
        ext
    }
}

/// Position in `s` of the single vertex not in `facet`, if `facet ⊂ s`.
fn position_of_opposite(s: &[usize], facet: &[usize]) -> Option<usize> {
    if s.len() != facet.len() + 1 {
        return None;
    }
    let mut missing = None;
    let mut j = 0;
    for (i, &v) in s.iter().enumerate() {
        if j < facet.len() && facet[j] == v {
            j += 1;
        } else if missing.is_none() {
            missing = Some(i);
        } else {
            return None;
        }
    }
    if j == facet.len() {
        missing
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SimplicialMesh {
        SimplicialMesh::from_top_simplices(
            2,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0, 1, 2]],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn triangle_edge_row() {
        let m = triangle();
        let d1 = m.coboundary(1).unwrap();
        // edges sorted: (0,1), (0,2), (1,2); boundary of (0,1,2) = (1,2) - (0,2) + (0,1)
        let row: Vec<i64> = (0..3).map(|c| d1.get(0, c)).collect();
        assert_eq!(row, vec![1, -1, 1]);
    }

    #[test]
    fn interval_coboundary_tail_head() {
        let m = SimplicialMesh::from_top_simplices(1, vec![vec![0.0], vec![0.5], vec![1.0]], vec![vec![0, 1], vec![1, 2]], vec![])
            .unwrap();
        let d0 = m.coboundary(0).unwrap();
        assert_eq!((d0.get(0, 0), d0.get(0, 1)), (-1, 1));
        assert_eq!((d0.get(1, 1), d0.get(1, 2)), (-1, 1));
    }

    #[test]
    fn measures_and_orientation() {
        let m = triangle();
        assert!((m.measure(2, 0) - 0.5).abs() < 1e-15);
        assert!((m.measure(1, 2) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.top_orientation(0), 1);
        // boundary of a positively oriented triangle runs counter-clockwise
        let e01 = m.index_of(1, &[0, 1]).unwrap();
        let e02 = m.index_of(1, &[0, 2]).unwrap();
        assert_eq!(m.boundary_orientation(e01), Some(1));
        assert_eq!(m.boundary_orientation(e02), Some(-1));
    }

    #[test]
    fn rejects_open_complex() {
        let err = SimplicialMesh::new(
            1,
            vec![vec![0.0], vec![1.0]],
            vec![vec![vec![0]], vec![vec![0, 1]]],
            vec![],
        );
        assert!(err.is_err());
    }

    #[test]
    fn subsets_are_lexicographic() {
        assert_eq!(subsets(&[1, 4, 7], 2), vec![vec![1, 4], vec![1, 7], vec![4, 7]]);
        assert_eq!(permutation_sign(&[2, 0, 1]), 1);
        assert_eq!(permutation_sign(&[1, 0, 2]), -1);
    }
}
