//! Mixed Hodge–Laplace problem with positive coefficients on the essential
//! (trace-free) complex.
//!
//! Unknowns are σ at degree k-1 and a at degree k:
//!
//! ```text
//! [ A        -Dᵀ M_k ] [σ]   [    0     ]
//! [ -M_k D   -C      ] [a] = [ -M_k f̃  ]
//! ```
//!
//! with A = M_{k-1}² / R_{k-1} (diagonal), C = D_kᵀ R*_{k+1} D_k and f̃ the
//! part of f orthogonal to the harmonic forms. Eliminating σ gives the
//! weighted Hodge–Laplacian, singular exactly on the harmonic space; that
//! kernel is removed by fixing β well-chosen a-DOFs and projecting the
//! result afterwards.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cochain_spaces::{weighted_mass, BcVariant, WeightMode};
use crate::differential_ops::MixedComplex;
use crate::eigen::gen_sym_eigen;
use crate::error::{Error, Result};
use crate::forest_geometry::{ForestGeometry, NodeId};
use crate::hodge::{harmonic_basis, project_out, SolverOptions};
use crate::krylov::minres;
use crate::ldl::{rcm, LdlFactor};
use crate::sparse::{dot, mdot, norm2, CsrMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientOverride {
    pub node: NodeId,
    pub r: f64,
    /// Defaults to `r` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rstar: Option<f64>,
}

/// Per-node positive multipliers for the two quadratic terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub k: usize,
    pub default_r: f64,
    pub default_rstar: f64,
    #[serde(default)]
    pub overrides: Vec<CoefficientOverride>,
}

impl CoefficientField {
    pub fn unit(k: usize) -> Self {
        CoefficientField { k, default_r: 1.0, default_rstar: 1.0, overrides: Vec::new() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut c = self.clone();
        c.default_r *= s;
        c.default_rstar *= s;
        for o in &mut c.overrides {
            o.r *= s;
            o.rstar = o.rstar.map(|v| v * s);
        }
        c
    }

    /// Reject non-positive or non-finite values and unknown nodes.
    pub fn validate(&self, g: &ForestGeometry) -> Result<()> {
        let check = |what: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Coefficient(format!("{what} = {v} must be finite and positive")))
            }
        };
        check("default_r", self.default_r)?;
        check("default_rstar", self.default_rstar)?;
        for o in &self.overrides {
            g.node(o.node).map_err(|_| Error::Coefficient(format!("override for unknown node {}", o.node)))?;
            check(&format!("r of node {}", o.node), o.r)?;
            if let Some(v) = o.rstar {
                check(&format!("rstar of node {}", o.node), v)?;
            }
        }
        Ok(())
    }

    /// Multipliers keyed by canonical node.
    fn resolved(&self, g: &ForestGeometry) -> (BTreeMap<NodeId, f64>, BTreeMap<NodeId, f64>) {
        let mut r = BTreeMap::new();
        let mut rs = BTreeMap::new();
        for o in &self.overrides {
            let c = g.canonical(o.node);
            r.insert(c, o.r);
            rs.insert(c, o.rstar.unwrap_or(o.r));
        }
        (r, rs)
    }
}

/// Coefficient-weighted masses at degrees k-1 and k+1, reduced.
#[derive(Clone, Debug)]
pub struct CoefficientOperators {
    pub r_lo: Vec<f64>,
    pub rstar_hi: Vec<f64>,
}

pub fn coefficient_operators(g: &ForestGeometry, cx: &MixedComplex, k: usize, field: &CoefficientField) -> Result<CoefficientOperators> {
    field.validate(g)?;
    let (r, rs) = field.resolved(g);
    let r_lo = if k > 0 {
        let s = &cx.spaces[k - 1];
        weighted_mass(g, &s.layout, cx.weights, |j| *r.get(&j).unwrap_or(&field.default_r))?.reduced(s)
    } else {
        Vec::new()
    };
    let rstar_hi = if k < cx.n {
        let s = &cx.spaces[k + 1];
        weighted_mass(g, &s.layout, cx.weights, |j| *rs.get(&j).unwrap_or(&field.default_rstar))?.reduced(s)
    } else {
        Vec::new()
    };
    for v in r_lo.iter().chain(&rstar_hi) {
        if !(v.is_finite() && *v > 0.0) {
            return Err(Error::Coefficient("assembled coefficient operator is not positive definite".into()));
        }
    }
    Ok(CoefficientOperators { r_lo, rstar_hi })
}

/// J = ½(𝔯𝔡*a, 𝔡*a) + ½(𝔯*𝔡a, 𝔡a) − (f, a).
pub fn evaluate_functional(cx: &MixedComplex, k: usize, ops: &CoefficientOperators, a: &[f64], f: &[f64]) -> Result<f64> {
    if a.len() != cx.dim(k) || f.len() != cx.dim(k) {
        return Err(Error::DegreeMismatch { expected: k, found: k });
    }
    let mut j = -cx.inner(k, f, a);
    if k > 0 {
        let s = cx.codifferential(k, a);
        j += 0.5 * mdot(&s, &ops.r_lo, &s);
    }
    if k < cx.n {
        let da = cx.derivative(k, a);
        j += 0.5 * mdot(&da, &ops.rstar_hi, &da);
    }
    Ok(j)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    #[default]
    Direct,
    Minres,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub k: usize,
    /// Full-length coefficients at degree k.
    pub a: Vec<f64>,
    /// Full-length coefficients at degree k-1 (empty for k = 0).
    pub sigma: Vec<f64>,
    /// Harmonic part removed from f, full length.
    pub harmonic_removed: Vec<f64>,
    pub harmonic_dim: usize,
    /// ‖K x − b‖ / ‖b‖ of the grounded saddle system.
    pub saddle_residual: f64,
    pub energy: f64,
    pub iterations: usize,
    pub solver: LinearSolver,
    /// Max |(a, h)_M| / ‖a‖ over the harmonic basis.
    pub harmonic_orthogonality: f64,
}

/// Reduced quantities of a solve, for diagnostics and tests.
#[derive(Clone, Debug)]
pub struct SolveState {
    pub a: Vec<f64>,
    pub sigma: Vec<f64>,
    pub f_projected: Vec<f64>,
    pub harmonics: Vec<Vec<f64>>,
    pub ops: CoefficientOperators,
}

#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub matrix: CsrMatrix<f64>,
    pub n_sigma: usize,
    pub n_a: usize,
}

/// Full (ungrounded) saddle matrix.
pub fn saddle_matrix(cx: &MixedComplex, k: usize, ops: &CoefficientOperators) -> SaddleSystem {
    let n_a = cx.dim(k);
    let n_s = if k > 0 { cx.dim(k - 1) } else { 0 };
    let mut trip = Vec::new();
    if k > 0 {
        let m_lo = &cx.mass[k - 1];
        for i in 0..n_s {
            trip.push((i, i, m_lo[i] * m_lo[i] / ops.r_lo[i]));
        }
        let m = &cx.mass[k];
        for (r, c, v) in cx.d_f64(k - 1).triplets() {
            // D maps σ (column c) to a-row r
            trip.push((c, n_s + r, -v * m[r]));
            trip.push((n_s + r, c, -v * m[r]));
        }
    }
    if k < cx.n {
        let d = cx.d_f64(k);
        let c = d.transpose().mul(&d.scale_rows_cols(Some(&ops.rstar_hi), None));
        trip.extend(c.triplets().map(|(r, cc, v)| (n_s + r, n_s + cc, -v)));
    }
    SaddleSystem { matrix: CsrMatrix::from_triplets(n_s + n_a, n_s + n_a, trip), n_sigma: n_s, n_a }
}

/// β coordinates on which the harmonic basis is well conditioned
/// (greedy pivoting).
fn grounding_dofs(harmonics: &[Vec<f64>]) -> Vec<usize> {
    let mut work: Vec<Vec<f64>> = harmonics.to_vec();
    let mut picked = Vec::with_capacity(work.len());
    for t in 0..work.len() {
        let (idx, _) = work[t]
            .iter()
            .enumerate()
            .filter(|(i, _)| !picked.contains(i))
            .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best });
        picked.push(idx);
        let (head, tail) = work.split_at_mut(t + 1);
        let pivot = &head[t];
        for h in tail.iter_mut() {
            let s = h[idx] / pivot[idx];
            for (x, p) in h.iter_mut().zip(pivot) {
                *x -= s * p;
            }
        }
    }
    picked
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub solver: LinearSolver,
    /// Relative residual target.
    pub tol: f64,
    pub seed: u64,
    pub inner: SolverOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { solver: LinearSolver::Direct, tol: 1e-10, seed: 42, inner: SolverOptions::default() }
    }
}

/// Solve for reduced f at degree k; `beta` is the harmonic dimension.
pub fn solve_reduced(
    g: &ForestGeometry,
    cx: &MixedComplex,
    k: usize,
    field: &CoefficientField,
    f: &[f64],
    beta: usize,
    opts: &SolveOptions,
) -> Result<(SolveState, SolveReport)> {
    if cx.bc != BcVariant::Essential {
        return Err(Error::input("the Hodge–Laplace problem is posed on the essential complex"));
    }
    if k > cx.n {
        return Err(Error::DegreeOutOfRange { k: k as i64, max: cx.n });
    }
    if field.k != k {
        return Err(Error::DegreeMismatch { expected: k, found: field.k });
    }
    if f.len() != cx.dim(k) {
        return Err(Error::input(format!("right-hand side needs {} coefficients, got {}", cx.dim(k), f.len())));
    }
    let ops = coefficient_operators(g, cx, k, field)?;
    let harmonics = harmonic_basis(cx, k, beta, opts.seed, &opts.inner)?;
    let mut ft = f.to_vec();
    project_out(cx, k, &harmonics, &mut ft);
    let removed: Vec<f64> = f.iter().zip(&ft).map(|(a, b)| a - b).collect();

    let sys = saddle_matrix(cx, k, &ops);
    let (n_s, n_a) = (sys.n_sigma, sys.n_a);
    let ground: Vec<usize> = grounding_dofs(&harmonics).into_iter().map(|i| n_s + i).collect();
    let free: Vec<usize> = (0..n_s + n_a).filter(|i| !ground.contains(i)).collect();
    let kmat = sys.matrix.select(&free, &free);
    let mut rhs_full = vec![0.0; n_s + n_a];
    for i in 0..n_a {
        rhs_full[n_s + i] = -cx.mass[k][i] * ft[i];
    }
    let rhs: Vec<f64> = free.iter().map(|&i| rhs_full[i]).collect();
    let n_free_s = free.iter().filter(|&&i| i < n_s).count();

    let (x, iterations) = match opts.solver {
        LinearSolver::Direct => {
            let perm = saddle_ordering(&kmat, n_free_s);
            let fac = LdlFactor::new(&kmat, &perm)?;
            let (pos, neg) = fac.inertia();
            if pos != n_free_s || neg != kmat.nrows() - n_free_s {
                return Err(Error::Factorization(format!(
                    "saddle matrix inertia ({pos}, {neg}) differs from the expected ({n_free_s}, {})",
                    kmat.nrows() - n_free_s
                )));
            }
            let mut x = fac.solve(&rhs);
            let mut steps = 1;
            for _ in 0..2 {
                let r: Vec<f64> = rhs.iter().zip(kmat.matvec(&x)).map(|(b, ax)| b - ax).collect();
                if norm2(&r) <= 1e-15 * norm2(&rhs) {
                    break;
                }
                let dx = fac.solve(&r);
                x.iter_mut().zip(dx).for_each(|(a, d)| *a += d);
                steps += 1;
            }
            (x, steps)
        }
        LinearSolver::Minres => {
            let diag = block_preconditioner(cx, k, &ops, &sys, &free);
            let res = minres(|v| kmat.matvec(v), &rhs, &diag, opts.tol, 20 * kmat.nrows().max(100))?;
            (res.x, res.iterations)
        }
    };
    let kx = kmat.matvec(&x);
    let bn = norm2(&rhs);
    let saddle_residual = if bn > 0.0 {
        norm2(&rhs.iter().zip(&kx).map(|(b, a)| b - a).collect::<Vec<_>>()) / bn
    } else {
        norm2(&kx)
    };
    if !(saddle_residual <= opts.tol) && bn > 0.0 {
        return Err(Error::NoConvergence { solver: "saddle solve", iterations, residual: saddle_residual });
    }
    let mut full = vec![0.0; n_s + n_a];
    for (v, &i) in x.iter().zip(&free) {
        full[i] = *v;
    }
    let sigma = full[..n_s].to_vec();
    let mut a = full[n_s..].to_vec();
    project_out(cx, k, &harmonics, &mut a);

    let energy = evaluate_functional(cx, k, &ops, &a, f)?;
    let an = cx.norm(k, &a);
    let harmonic_orthogonality = harmonics
        .iter()
        .map(|h| if an > 0.0 { cx.inner(k, h, &a).abs() / an } else { 0.0 })
        .fold(0.0, f64::max);
    let report = SolveReport {
        k,
        a: cx.spaces[k].extend(&a),
        sigma: if k > 0 { cx.spaces[k - 1].extend(&sigma) } else { Vec::new() },
        harmonic_removed: cx.spaces[k].extend(&removed),
        harmonic_dim: harmonics.len(),
        saddle_residual,
        energy,
        iterations,
        solver: opts.solver,
        harmonic_orthogonality,
    };
    Ok((SolveState { a, sigma, f_projected: ft, harmonics, ops }, report))
}

/// σ unknowns first in natural order, then the a-block in reverse
/// Cuthill–McKee order of its Schur-complement pattern.
fn saddle_ordering(kmat: &CsrMatrix<f64>, n_s: usize) -> Vec<usize> {
    let n = kmat.nrows();
    let abs = kmat.map(|v: f64| v.abs());
    let sa: Vec<usize> = (0..n_s).collect();
    let aa: Vec<usize> = (n_s..n).collect();
    let b = abs.select(&sa, &aa);
    let pattern = abs.select(&aa, &aa).add(&b.transpose().mul(&b));
    let mut perm = sa;
    perm.extend(rcm(&pattern).into_iter().map(|i| n_s + i));
    perm
}

fn block_preconditioner(cx: &MixedComplex, k: usize, ops: &CoefficientOperators, sys: &SaddleSystem, free: &[usize]) -> Vec<f64> {
    let n_s = sys.n_sigma;
    let mut diag = sys.matrix.diagonal().iter().map(|v| v.abs()).collect::<Vec<_>>();
    if k > 0 {
        // add diag(Bᵀ A⁻¹ B) on the a-block
        let m = &cx.mass[k];
        let m_lo = &cx.mass[k - 1];
        for (r, c, v) in cx.d_f64(k - 1).triplets() {
            let a = m_lo[c] * m_lo[c] / ops.r_lo[c];
            diag[n_s + r] += (v * m[r]) * (v * m[r]) / a;
        }
    }
    free.iter().map(|&i| if diag[i] > 0.0 { diag[i] } else { 1.0 }).collect()
}

/// Weak-form residual |B(a, v) − (f̃, v)| relative to its Cauchy–Schwarz
/// scale, maximised over seeded random test forms.
pub fn euler_lagrange_residual(cx: &MixedComplex, k: usize, st: &SolveState, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x656c);
    let n = cx.dim(k);
    let sa = if k > 0 { cx.codifferential(k, &st.a) } else { Vec::new() };
    let da = if k < cx.n { cx.derivative(k, &st.a) } else { Vec::new() };
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut lhs = 0.0;
        let mut scale = cx.norm(k, &st.f_projected) * cx.norm(k, &v);
        if k > 0 {
            let sv = cx.codifferential(k, &v);
            lhs += mdot(&sa, &st.ops.r_lo, &sv);
            scale += mdot(&sa, &st.ops.r_lo, &sa).sqrt() * mdot(&sv, &st.ops.r_lo, &sv).sqrt();
        }
        if k < cx.n {
            let dv = cx.derivative(k, &v);
            lhs += mdot(&da, &st.ops.rstar_hi, &dv);
            scale += mdot(&da, &st.ops.rstar_hi, &da).sqrt() * mdot(&dv, &st.ops.rstar_hi, &dv).sqrt();
        }
        let res = (lhs - cx.inner(k, &st.f_projected, &v)).abs();
        worst = worst.max(if scale > 0.0 { res / scale } else { res });
    }
    worst
}

/// DOF-wise audit of the a-equation for k = n: (𝔡σ)_i − f̃_i, relative to
/// max |f̃|. Entries are split into the local and jump contributions.
pub fn flux_balance(cx: &MixedComplex, k: usize, st: &SolveState) -> Result<f64> {
    if k == 0 || k != cx.n {
        return Err(Error::DegreeMismatch { expected: cx.n, found: k });
    }
    let local = cx.d_local[k - 1].to_f64().matvec(&st.sigma);
    let jump = cx.jump[k - 1].to_f64().matvec(&st.sigma);
    let scale = st.f_projected.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    Ok((0..local.len())
        .map(|i| (local[i] + jump[i] - st.f_projected[i]).abs() / scale)
        .fold(0.0, f64::max))
}

/// Smallest eigenvalue of the coefficient form against the graph-norm
/// Gram matrix M + L, above the β harmonic zeros.
pub fn coercivity_estimate(g: &ForestGeometry, cx: &MixedComplex, k: usize, field: &CoefficientField, beta: usize) -> Result<f64> {
    let ops = coefficient_operators(g, cx, k, field)?;
    let n = cx.dim(k);
    if n <= beta {
        return Ok(f64::INFINITY);
    }
    let mut b = CsrMatrix::zeros(n, n);
    let mut lap = CsrMatrix::zeros(n, n);
    if k < cx.n {
        let d = cx.d_f64(k);
        b = b.add(&d.transpose().mul(&d.scale_rows_cols(Some(&ops.rstar_hi), None)));
        lap = lap.add(&d.transpose().mul(&d.scale_rows_cols(Some(&cx.mass[k + 1]), None)));
    }
    if k > 0 {
        let d = cx.d_f64(k - 1);
        let w: Vec<f64> = cx.mass[k - 1].iter().zip(&ops.r_lo).map(|(m, r)| r / (m * m)).collect();
        let inv: Vec<f64> = cx.mass[k - 1].iter().map(|m| 1.0 / m).collect();
        let right = d.transpose().scale_rows_cols(None, Some(&cx.mass[k]));
        b = b.add(&d.scale_rows_cols(Some(&cx.mass[k]), Some(&w)).mul(&right));
        lap = lap.add(&d.scale_rows_cols(Some(&cx.mass[k]), Some(&inv)).mul(&right));
    }
    let gram = lap.add(&CsrMatrix::from_diagonal(&cx.mass[k])).to_dense();
    let bd: DMatrix<f64> = b.to_dense();
    let (vals, _) = gen_sym_eigen(&bd, &gram)?;
    Ok(vals[beta])
}

/// Sampled check that J(a) ≤ J(a + εv); returns the most negative
/// J(a + εv) − J(a) relative to |J(a)| + 1.
pub fn energy_minimality(cx: &MixedComplex, k: usize, st: &SolveState, f: &[f64], samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x656e);
    let j0 = evaluate_functional(cx, k, &st.ops, &st.a, f)?;
    let n = cx.dim(k);
    let mut worst = f64::INFINITY;
    for s in 0..samples {
        let eps = [1e-3, -1e-3, 1e-2, -1e-2][s % 4];
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        project_out(cx, k, &st.harmonics, &mut v);
        let vn = cx.norm(k, &v).max(f64::MIN_POSITIVE);
        let scale = cx.norm(k, &st.a).max(1.0) / vn;
        let p: Vec<f64> = st.a.iter().zip(&v).map(|(a, b)| a + eps * scale * b).collect();
        let j = evaluate_functional(cx, k, &st.ops, &p, f)?;
        worst = worst.min((j - j0) / (j0.abs() + 1.0));
    }
    Ok(worst)
}

/// Sampled Rayleigh quotients of the grounded saddle Schur complement.
pub fn min_rayleigh_quotient(cx: &MixedComplex, k: usize, ops: &CoefficientOperators, harmonics: &[Vec<f64>], samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261);
    let n = cx.dim(k);
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        project_out(cx, k, harmonics, &mut v);
        let mut q = 0.0;
        if k > 0 {
            let s = cx.codifferential(k, &v);
            q += mdot(&s, &ops.r_lo, &s);
        }
        if k < cx.n {
            let d = cx.derivative(k, &v);
            q += mdot(&d, &ops.rstar_hi, &d);
        }
        worst = worst.min(q / dot(&v, &v));
    }
    worst
}

/// Weight mode is part of the problem definition; re-exported for callers
/// that build complexes for the solver.
pub fn solver_complex(g: &ForestGeometry, weights: WeightMode) -> Result<MixedComplex> {
    MixedComplex::assemble(g, weights, BcVariant::Essential)
}
