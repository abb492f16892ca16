//! The mixed-dimensional differential: local coboundaries plus the jump
//! gathering signed traces of neighbouring roots.

use rayon::prelude::*;

use crate::cochain_spaces::{degree_layout, mass_matrix, restriction_operator, BcVariant, DegreeLayout, MassMatrix, MixedForm, Space, WeightMode};
use crate::error::{Error, Result};
use crate::forest_geometry::{BoundaryLabel, ForestGeometry, SimplicialMesh};
use crate::sparse::CsrMatrix;

pub fn local_exterior_derivative(mesh: &SimplicialMesh, p: usize) -> Result<CsrMatrix<i64>> {
    mesh.coboundary(p)
}

/// Block-diagonal local coboundary over all roots, full DOF numbering.
pub fn local_derivative(g: &ForestGeometry, lk: &DegreeLayout, lk1: &DegreeLayout) -> Result<CsrMatrix<i64>> {
    let mut trip = Vec::new();
    for (b, b1) in lk.blocks.iter().zip(&lk1.blocks) {
        let mesh = g.root_mesh(b.root);
        let p = b.local_degree;
        if p < 0 || p >= mesh.dim() as i64 {
            continue;
        }
        let d = mesh.coboundary(p as usize)?;
        trip.extend(d.triplets().map(|(r, c, v)| (b1.offset + r, b.offset + c, v)));
    }
    Ok(CsrMatrix::from_triplets(lk1.total, lk.total, trip))
}

/// Jump from degree k to k+1, full DOF numbering: the block row of root i
/// is (-1)^(n-k) times the sum of the signed restrictions of its jump
/// sources.
pub fn jump_operator(g: &ForestGeometry, lk: &DegreeLayout, lk1: &DegreeLayout) -> Result<CsrMatrix<i64>> {
    if lk1.k != lk.k + 1 {
        return Err(Error::DegreeMismatch { expected: lk.k + 1, found: lk1.k });
    }
    let sign: i64 = if (lk.n - lk.k) % 2 == 0 { 1 } else { -1 };
    let mut trip = Vec::new();
    for b1 in &lk1.blocks {
        for &(l, _) in g.jump_sources(b1.root) {
            let r = restriction_operator(g, lk, l)?;
            if r.nrows() == 0 || r.ncols() == 0 {
                continue;
            }
            if r.nrows() != b1.len {
                return Err(Error::input(format!(
                    "jump source {l} provides {} values for {} DOFs of root {}",
                    r.nrows(),
                    b1.len,
                    b1.root
                )));
            }
            let src = lk.block(g.tree_of(l)).expect("every root has a block").offset;
            trip.extend(r.triplets().map(|(row, c, v)| (b1.offset + row, src + c, sign * v)));
        }
    }
    Ok(CsrMatrix::from_triplets(lk1.total, lk.total, trip))
}

/// Operators of one degree, restricted to the free DOFs of the chosen
/// boundary-condition variant.
#[derive(Clone, Debug)]
pub struct OperatorBundle {
    pub k: usize,
    pub d_local: CsrMatrix<i64>,
    pub jump: CsrMatrix<i64>,
    pub d: CsrMatrix<i64>,
    pub mass_k: Vec<f64>,
    pub mass_k1: Vec<f64>,
}

impl OperatorBundle {
    /// b ↦ M_k^{-1} Dᵀ M_{k+1} b.
    pub fn codifferential_apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.mass_k1.len() {
            return Err(Error::DegreeMismatch { expected: self.k + 1, found: self.k });
        }
        Ok(codiff(&self.d.to_f64(), &self.mass_k, &self.mass_k1, b))
    }
}

fn codiff(d: &CsrMatrix<f64>, m_lo: &[f64], m_hi: &[f64], b: &[f64]) -> Vec<f64> {
    let mb: Vec<f64> = b.iter().zip(m_hi).map(|(x, m)| x * m).collect();
    let mut out = d.tmatvec(&mb);
    out.iter_mut().zip(m_lo).for_each(|(x, m)| *x /= m);
    out
}

/// The whole discrete complex for one weighting and boundary variant.
/// Index k of `d`, `d_local`, `jump` maps degree k to k+1; all vectors are
/// in reduced coordinates.
#[derive(Clone, Debug)]
pub struct MixedComplex {
    pub n: usize,
    pub bc: BcVariant,
    pub weights: WeightMode,
    pub spaces: Vec<Space>,
    pub full_mass: Vec<MassMatrix>,
    pub mass: Vec<Vec<f64>>,
    pub d_local: Vec<CsrMatrix<i64>>,
    pub jump: Vec<CsrMatrix<i64>>,
    pub d: Vec<CsrMatrix<i64>>,
    d_f: Vec<CsrMatrix<f64>>,
}

impl MixedComplex {
    pub fn assemble(g: &ForestGeometry, weights: WeightMode, bc: BcVariant) -> Result<Self> {
        let n = g.n();
        let spaces: Vec<Space> = (0..=n as i64).map(|k| Space::new(g, k, bc)).collect::<Result<_>>()?;
        let full_mass: Vec<MassMatrix> = spaces
            .par_iter()
            .map(|s| mass_matrix(g, &s.layout, weights))
            .collect::<Result<_>>()?;
        let mass = full_mass.iter().zip(&spaces).map(|(m, s)| m.reduced(s)).collect();
        let ops: Vec<(CsrMatrix<i64>, CsrMatrix<i64>)> = (0..n)
            .into_par_iter()
            .map(|k| {
                let (lo, hi) = (&spaces[k], &spaces[k + 1]);
                let dl = local_derivative(g, &lo.layout, &hi.layout)?.select(hi.kept(), lo.kept());
                let j = jump_operator(g, &lo.layout, &hi.layout)?.select(hi.kept(), lo.kept());
                Ok((dl, j))
            })
            .collect::<Result<_>>()?;
        let mut d_local = Vec::with_capacity(n);
        let mut jump = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for (dl, j) in ops {
            d.push(dl.add(&j));
            d_local.push(dl);
            jump.push(j);
        }
        let d_f = d.iter().map(|m| m.to_f64()).collect();
        Ok(MixedComplex { n, bc, weights, spaces, full_mass, mass, d_local, jump, d, d_f })
    }

    pub fn dim(&self, k: usize) -> usize {
        self.spaces[k].dim()
    }

    pub fn bundle(&self, k: usize) -> Result<OperatorBundle> {
        if k >= self.n {
            return Err(Error::DegreeOutOfRange { k: k as i64, max: self.n.saturating_sub(1) });
        }
        Ok(OperatorBundle {
            k,
            d_local: self.d_local[k].clone(),
            jump: self.jump[k].clone(),
            d: self.d[k].clone(),
            mass_k: self.mass[k].clone(),
            mass_k1: self.mass[k + 1].clone(),
        })
    }

    pub fn d_f64(&self, k: usize) -> &CsrMatrix<f64> {
        &self.d_f[k]
    }

    /// 𝔡 on degree k; empty for k = n.
    pub fn derivative(&self, k: usize, a: &[f64]) -> Vec<f64> {
        if k >= self.n {
            return Vec::new();
        }
        self.d_f[k].matvec(a)
    }

    /// 𝔡* on degree k, landing in degree k-1; empty for k = 0.
    pub fn codifferential(&self, k: usize, b: &[f64]) -> Vec<f64> {
        if k == 0 {
            return Vec::new();
        }
        codiff(&self.d_f[k - 1], &self.mass[k - 1], &self.mass[k], b)
    }

    pub fn inner(&self, k: usize, a: &[f64], b: &[f64]) -> f64 {
        crate::sparse::mdot(a, &self.mass[k], b)
    }

    pub fn norm(&self, k: usize, a: &[f64]) -> f64 {
        self.inner(k, a, a).max(0.0).sqrt()
    }
}

/// Largest entry of R_j d_root - d_j R_j over all distinct branches with
/// both degrees k and k+1 present on their mesh; zero when restriction
/// commutes with the local derivative.
pub fn trace_commutation_defect(g: &ForestGeometry, k: usize) -> Result<i64> {
    let lk = degree_layout(g, k as i64)?;
    let lk1 = degree_layout(g, k as i64 + 1)?;
    let mut worst = 0;
    for &root in g.roots() {
        let p = lk.block(root).expect("every root has a block").local_degree;
        let droot_dim = g.root_mesh(root).dim() as i64;
        if p < 0 || p >= droot_dim {
            continue;
        }
        let d_root = g.root_mesh(root).coboundary(p as usize)?;
        for j in g.distinct_branches(root) {
            let mesh = g.geometry_mesh(j);
            if p >= mesh.dim() as i64 {
                continue;
            }
            let r0 = restriction_operator(g, &lk, j)?;
            let r1 = restriction_operator(g, &lk1, j)?;
            let lhs = r1.mul(&d_root);
            let rhs = mesh.coboundary(p as usize)?.mul(&r0);
            worst = worst.max(lhs.add(&rhs.scaled(-1)).max_abs());
        }
    }
    Ok(worst)
}

/// Both sides of the discrete Stokes identity for a degree n-1 form: the
/// oriented total of 𝔡a over all top cells against the oriented sum of a
/// over dirichlet facets.
pub fn stokes_check(g: &ForestGeometry, a: &MixedForm) -> Result<(f64, f64)> {
    let n = g.n();
    if n == 0 || a.k != n - 1 {
        return Err(Error::DegreeMismatch { expected: n.saturating_sub(1), found: a.k });
    }
    let lk = degree_layout(g, n as i64 - 1)?;
    let lk1 = degree_layout(g, n as i64)?;
    if a.len() != lk.total {
        return Err(Error::input(format!("form has {} coefficients, expected {}", a.len(), lk.total)));
    }
    let d = local_derivative(g, &lk, &lk1)?.add(&jump_operator(g, &lk, &lk1)?).to_f64();
    let da = d.matvec(&a.coefficients);
    let mut lhs = 0.0;
    for b in &lk1.blocks {
        let mesh = g.root_mesh(b.root);
        for t in 0..b.len {
            lhs += mesh.top_orientation(t) as f64 * da[b.offset + t];
        }
    }
    let mut rhs = 0.0;
    for b in &lk.blocks {
        let mesh = g.root_mesh(b.root);
        if mesh.dim() == 0 {
            continue;
        }
        for (f, label) in mesh.labels() {
            if *label == BoundaryLabel::Dirichlet {
                let o = mesh.boundary_orientation(*f).unwrap_or(0);
                rhs += o as f64 * a.coefficients[b.offset + f];
            }
        }
    }
    Ok((lhs, rhs))
}
