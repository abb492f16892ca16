//! Degrees of freedom, restriction to branches and the forest inner product.
//!
//! A mixed-dimensional k-form stores one cochain per root; the values on a
//! branch are the signed pullback of its tree root's cochain and are never
//! stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest_geometry::{ForestGeometry, NodeId, SimplicialMesh};
use crate::sparse::{mdot, CsrMatrix};

/// Diagonal weighting of node-local cochains in the inner product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Simplex measure (points weigh 1).
    #[default]
    Measure,
    Unit,
    /// Diagonal Hodge star: dual volume over primal measure squared, which
    /// is what makes norms of integrated cochains refinement-consistent.
    Hodge,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "measure" => Ok(WeightMode::Measure),
            "unit" => Ok(WeightMode::Unit),
            "hodge" => Ok(WeightMode::Hodge),
            _ => Err(Error::input(format!("unknown weight mode \"{s}\""))),
        }
    }
}

/// Natural: no trace condition. Essential: cochains vanish on the closure of
/// the dirichlet boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BcVariant {
    #[default]
    Natural,
    Essential,
}

impl std::str::FromStr for BcVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(BcVariant::Natural),
            "essential" => Ok(BcVariant::Essential),
            _ => Err(Error::input(format!("unknown boundary-condition variant \"{s}\""))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RootBlock {
    pub root: NodeId,
    /// k_i = k - (n - d_i); may lie outside 0..=d_i.
    pub local_degree: i64,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeLayout {
    pub k: usize,
    pub n: usize,
    pub blocks: Vec<RootBlock>,
    pub total: usize,
}

impl DegreeLayout {
    pub fn block(&self, root: NodeId) -> Option<&RootBlock> {
        self.blocks.iter().find(|b| b.root == root)
    }

    /// Local degree of any node: that of its tree root.
    pub fn node_degree(&self, g: &ForestGeometry, j: NodeId) -> Result<i64> {
        let tree = g.tree_of_checked(j)?;
        Ok(self.block(tree).expect("every root has a block").local_degree)
    }

    /// Root and local simplex index of a global DOF.
    pub fn locate(&self, dof: usize) -> Option<(NodeId, usize)> {
        self.blocks
            .iter()
            .find(|b| dof >= b.offset && dof < b.offset + b.len)
            .map(|b| (b.root, dof - b.offset))
    }
}

pub fn degree_layout(g: &ForestGeometry, k: i64) -> Result<DegreeLayout> {
    let n = g.n();
    if k < 0 || k > n as i64 {
        return Err(Error::DegreeOutOfRange { k, max: n });
    }
    let mut blocks = Vec::with_capacity(g.roots().len());
    let mut offset = 0;
    for &r in g.roots() {
        let mesh = g.root_mesh(r);
        let kd = k - (n as i64 - mesh.dim() as i64);
        let len = mesh.count(kd);
        blocks.push(RootBlock { root: r, local_degree: kd, offset, len });
        offset += len;
    }
    Ok(DegreeLayout { k: k as usize, n, blocks, total: offset })
}

/// DOF space for one degree and boundary-condition variant: the layout plus
/// the subset of DOFs that survive the trace condition.
#[derive(Clone, Debug)]
pub struct Space {
    pub layout: DegreeLayout,
    pub bc: BcVariant,
    kept: Vec<usize>,
    reduced: Vec<Option<usize>>,
}

impl Space {
    pub fn new(g: &ForestGeometry, k: i64, bc: BcVariant) -> Result<Self> {
        let layout = degree_layout(g, k)?;
        let mut kept = Vec::with_capacity(layout.total);
        for b in &layout.blocks {
            if b.len == 0 {
                continue;
            }
            let removed = match bc {
                BcVariant::Natural => None,
                BcVariant::Essential => Some(g.root_mesh(b.root).dirichlet_closure()),
            };
            let p = b.local_degree as usize;
            for s in 0..b.len {
                if removed.as_ref().is_none_or(|c| !c[p][s]) {
                    kept.push(b.offset + s);
                }
            }
        }
        let mut reduced = vec![None; layout.total];
        for (i, &f) in kept.iter().enumerate() {
            reduced[f] = Some(i);
        }
        Ok(Space { layout, bc, kept, reduced })
    }

    pub fn k(&self) -> usize {
        self.layout.k
    }

    /// Number of free DOFs.
    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    pub fn full_dim(&self) -> usize {
        self.layout.total
    }

    /// Full indices of the free DOFs.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn reduced_index(&self, full: usize) -> Option<usize> {
        self.reduced.get(full).copied().flatten()
    }

    /// Free part of a full-length vector. Nonzero values on removed DOFs are
    /// an input error.
    pub fn restrict(&self, full: &[f64]) -> Result<Vec<f64>> {
        if full.len() != self.full_dim() {
            return Err(Error::input(format!(
                "form has {} coefficients, degree {} needs {}",
                full.len(),
                self.k(),
                self.full_dim()
            )));
        }
        if let Some(i) = (0..full.len()).find(|&i| self.reduced[i].is_none() && full[i] != 0.0) {
            return Err(Error::input(format!("DOF {i} lies on the dirichlet boundary but is nonzero")));
        }
        Ok(self.kept.iter().map(|&i| full[i]).collect())
    }

    /// Zero-extend a reduced vector.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim()];
        for (r, &f) in self.kept.iter().enumerate() {
            out[f] = reduced[r];
        }
        out
    }
}

/// Coefficients over all root DOFs of one degree.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedForm {
    pub k: usize,
    pub coefficients: Vec<f64>,
}

impl MixedForm {
    pub fn zeros(layout: &DegreeLayout) -> Self {
        MixedForm { k: layout.k, coefficients: vec![0.0; layout.total] }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// Signed restriction from the cochains of `j`'s tree root to cochains on
/// `j`'s mesh. Rows follow the node mesh, columns the root block. The empty
/// operator is returned when the local degree is void on `j`.
pub fn restriction_operator(g: &ForestGeometry, layout: &DegreeLayout, j: NodeId) -> Result<CsrMatrix<i64>> {
    let tree = g.tree_of_checked(j)?;
    let block = layout.block(tree).expect("every root has a block");
    let mesh = g.geometry_mesh(j);
    let p = block.local_degree;
    if p < 0 || p > mesh.dim() as i64 {
        return Ok(CsrMatrix::zeros(0, block.len));
    }
    if j == tree {
        return Ok(CsrMatrix::identity(block.len));
    }
    let pulled = g.pullback(j, p as usize)?;
    let trip = pulled.iter().enumerate().map(|(r, &(c, s))| (r, c, s as i64)).collect();
    Ok(CsrMatrix::from_triplets(pulled.len(), block.len, trip))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Diagonal weights of the p-simplices of a mesh.
pub fn simplex_weights(mesh: &SimplicialMesh, p: usize, mode: WeightMode) -> Vec<f64> {
    let count = mesh.count(p as i64);
    match mode {
        WeightMode::Unit => vec![1.0; count],
        WeightMode::Measure => (0..count).map(|i| mesh.measure(p, i)).collect(),
        WeightMode::Hodge => {
            let d = mesh.dim();
            let share = binomial(d + 1, p + 1);
            mesh.star_volume(p)
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    let m = mesh.measure(p, i);
                    v / share / (m * m)
                })
                .collect()
        }
    }
}

/// Diagonal mass matrix over all root DOFs: the sum over distinct forest
/// nodes of the pulled-back node weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MassMatrix {
    pub k: usize,
    pub diagonal: Vec<f64>,
}

impl MassMatrix {
    pub fn matrix(&self) -> CsrMatrix<f64> {
        CsrMatrix::from_diagonal(&self.diagonal)
    }

    /// Mass of the free DOFs of a space.
    pub fn reduced(&self, space: &Space) -> Vec<f64> {
        space.kept().iter().map(|&i| self.diagonal[i]).collect()
    }
}

pub fn mass_matrix(g: &ForestGeometry, layout: &DegreeLayout, weights: WeightMode) -> Result<MassMatrix> {
    weighted_mass(g, layout, weights, |_| 1.0)
}

/// Mass with an extra positive multiplier per node, used for coefficient
/// fields.
pub(crate) fn weighted_mass(
    g: &ForestGeometry,
    layout: &DegreeLayout,
    weights: WeightMode,
    factor: impl Fn(NodeId) -> f64,
) -> Result<MassMatrix> {
    let mut diag = vec![0.0; layout.total];
    for node in g.nodes() {
        let j = node.id;
        if g.canonical(j) != j {
            continue;
        }
        let tree = g.tree_of(j);
        let block = layout.block(tree).expect("every root has a block");
        let mesh = g.geometry_mesh(j);
        let p = block.local_degree;
        if block.len == 0 || p < 0 || p > mesh.dim() as i64 {
            continue;
        }
        let w = simplex_weights(mesh, p as usize, weights);
        let f = factor(j);
        if node.is_root {
            for (s, wi) in w.iter().enumerate() {
                diag[block.offset + s] += f * wi;
            }
        } else {
            for (s, (c, _)) in g.pullback(j, p as usize)?.into_iter().enumerate() {
                diag[block.offset + c] += f * w[s];
            }
        }
    }
    Ok(MassMatrix { k: layout.k, diagonal: diag })
}

pub fn inner_product(a: &MixedForm, b: &MixedForm, m: &MassMatrix) -> Result<f64> {
    for f in [a, b] {
        if f.k != m.k {
            return Err(Error::DegreeMismatch { expected: m.k, found: f.k });
        }
        if f.len() != m.diagonal.len() {
            return Err(Error::input(format!(
                "form has {} coefficients, mass matrix {}",
                f.len(),
                m.diagonal.len()
            )));
        }
    }
    Ok(mdot(&a.coefficients, &m.diagonal, &b.coefficients))
}

pub fn norm_l2(a: &MixedForm, m: &MassMatrix) -> Result<f64> {
    Ok(inner_product(a, a, m)?.max(0.0).sqrt())
}
