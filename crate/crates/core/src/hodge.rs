//! Cohomology, harmonic forms, Hodge decomposition and the
//! Poincaré–Friedrichs constant. All vectors are in the reduced coordinates
//! of a `MixedComplex`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cochain_spaces::BcVariant;
use crate::differential_ops::MixedComplex;
use crate::eigen::{diag_gen_eigen, gen_sym_eigen};
use crate::error::{Error, Result};
use crate::exact_rank::exact_rank;
use crate::krylov::{pcg, pcg_scaled};
use crate::sparse::norm2;
use crate::sparse::{axpy, mdot, CsrMatrix};

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Relative residual for the inner CG solves.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest space solved with dense eigen-decompositions.
    pub dense_limit: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-13, max_iter: 20_000, dense_limit: 1200 }
    }
}

/// Unreduced Betti numbers β_0..β_n from exact ranks of the integer
/// differentials. Fails when consecutive differentials do not compose to
/// zero, since the counts are meaningless then.
pub fn betti_numbers(cx: &MixedComplex) -> Result<Vec<usize>> {
    for k in 0..cx.n.saturating_sub(1) {
        if !cx.d[k + 1].mul(&cx.d[k]).is_zero() {
            return Err(Error::input(format!("differentials at degrees {k} and {} do not compose to zero", k + 1)));
        }
    }
    let ranks: Vec<usize> = cx.d.iter().map(exact_rank).collect();
    Ok((0..=cx.n)
        .map(|k| {
            let out = if k < cx.n { ranks[k] } else { 0 };
            let inc = if k > 0 { ranks[k - 1] } else { 0 };
            cx.dim(k) - out - inc
        })
        .collect())
}

/// Hodge-Laplacian L_k = D_kᵀ M_{k+1} D_k + M_k D_{k-1} M_{k-1}^{-1} D_{k-1}ᵀ M_k.
pub fn laplacian(cx: &MixedComplex, k: usize) -> CsrMatrix<f64> {
    let n = cx.dim(k);
    let mut l = CsrMatrix::zeros(n, n);
    if k < cx.n {
        let d = cx.d_f64(k);
        let md = d.scale_rows_cols(Some(&cx.mass[k + 1]), None);
        l = l.add(&d.transpose().mul(&md));
    }
    if k > 0 {
        let d = cx.d_f64(k - 1);
        let inv: Vec<f64> = cx.mass[k - 1].iter().map(|m| 1.0 / m).collect();
        let left = d.scale_rows_cols(Some(&cx.mass[k]), Some(&inv));
        let right = d.transpose().scale_rows_cols(None, Some(&cx.mass[k]));
        l = l.add(&left.mul(&right));
    }
    l
}

/// L_k a without forming the matrix.
pub fn laplacian_apply(cx: &MixedComplex, k: usize, a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    if k < cx.n {
        let mut da = cx.derivative(k, a);
        da.iter_mut().zip(&cx.mass[k + 1]).for_each(|(x, m)| *x *= m);
        out = cx.d_f64(k).tmatvec(&da);
    }
    if k > 0 {
        let s = cx.codifferential(k, a);
        let mut back = cx.d_f64(k - 1).matvec(&s);
        back.iter_mut().zip(&cx.mass[k]).for_each(|(x, m)| *x *= m);
        axpy(1.0, &back, &mut out);
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct HodgeDecomposition {
    pub k: usize,
    pub bc: BcVariant,
    pub a_d: Vec<f64>,
    pub a_dstar: Vec<f64>,
    pub a_0: Vec<f64>,
    /// Potential at degree k-1 with a_d = 𝔡 b_d (empty for k = 0).
    pub b_d: Vec<f64>,
    /// Potential at degree k+1 with a_dstar = 𝔡* b_dstar (empty for k = n).
    pub b_dstar: Vec<f64>,
    pub iterations: usize,
}

impl HodgeDecomposition {
    /// ‖a - a_d - a_dstar - a_0‖ / ‖a‖.
    pub fn reconstruction_residual(&self, cx: &MixedComplex, a: &[f64]) -> f64 {
        let r: Vec<f64> = (0..a.len()).map(|i| a[i] - self.a_d[i] - self.a_dstar[i] - self.a_0[i]).collect();
        relative(cx.norm(self.k, &r), cx.norm(self.k, a))
    }

    /// Largest |(x, y)_M| / ‖a‖² over the three pairs.
    pub fn orthogonality_residual(&self, cx: &MixedComplex, a: &[f64]) -> f64 {
        let k = self.k;
        let scale = cx.inner(k, a, a);
        let pairs = [
            cx.inner(k, &self.a_d, &self.a_dstar),
            cx.inner(k, &self.a_d, &self.a_0),
            cx.inner(k, &self.a_dstar, &self.a_0),
        ];
        pairs.iter().map(|p| relative(p.abs(), scale)).fold(0.0, f64::max)
    }

    /// (‖𝔡 a_0‖ + ‖𝔡* a_0‖) / ‖a‖.
    pub fn harmonic_residual(&self, cx: &MixedComplex, a: &[f64]) -> f64 {
        let k = self.k;
        let mut r = 0.0;
        if k < cx.n {
            r += cx.norm(k + 1, &cx.derivative(k, &self.a_0));
        }
        if k > 0 {
            r += cx.norm(k - 1, &cx.codifferential(k, &self.a_0));
        }
        relative(r, cx.norm(k, a))
    }
}

fn relative(x: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        x / scale
    } else {
        x
    }
}

fn check_len(cx: &MixedComplex, k: usize, a: &[f64]) -> Result<()> {
    if k > cx.n {
        return Err(Error::DegreeOutOfRange { k: k as i64, max: cx.n });
    }
    if a.len() != cx.dim(k) {
        return Err(Error::input(format!("degree {k} form needs {} coefficients, got {}", cx.dim(k), a.len())));
    }
    Ok(())
}

pub fn hodge_decompose(cx: &MixedComplex, k: usize, a: &[f64], opts: &SolverOptions) -> Result<HodgeDecomposition> {
    check_len(cx, k, a)?;
    let mut iterations = 0;
    let m = &cx.mass[k];

    // exact part: Dᵀ M D b = Dᵀ M a
    let (b_d, a_d) = if k > 0 {
        let d = cx.d_f64(k - 1);
        let ma: Vec<f64> = a.iter().zip(m).map(|(x, w)| x * w).collect();
        let rhs = d.tmatvec(&ma);
        let mut diag = vec![0.0; d.ncols()];
        for (r, c, v) in d.triplets() {
            diag[c] += m[r] * v * v;
        }
        let op = |x: &[f64]| {
            let mut dx = d.matvec(x);
            dx.iter_mut().zip(m).for_each(|(y, w)| *y *= w);
            d.tmatvec(&dx)
        };
        let abs_ma: Vec<f64> = ma.iter().map(|v| v.abs()).collect();
        let scale = norm2(&d.map(|v: f64| v.abs()).tmatvec(&abs_ma));
        let res = pcg_scaled(op, &rhs, &diag, opts.tol, opts.max_iter, scale)?;
        iterations += res.iterations;
        let a_d = d.matvec(&res.x);
        (res.x, a_d)
    } else {
        (Vec::new(), vec![0.0; a.len()])
    };

    // coexact part: M₁ D M⁻¹ Dᵀ M₁ c = M₁ D a, a_dstar = 𝔡* c
    let (b_dstar, a_dstar) = if k < cx.n {
        let d = cx.d_f64(k);
        let m1 = &cx.mass[k + 1];
        let mut rhs = d.matvec(a);
        rhs.iter_mut().zip(m1).for_each(|(y, w)| *y *= w);
        let mut diag = vec![0.0; d.nrows()];
        for (r, c, v) in d.triplets() {
            diag[r] += m1[r] * m1[r] * v * v / m[c];
        }
        let op = |x: &[f64]| {
            let s = cx.codifferential(k + 1, x);
            let mut y = d.matvec(&s);
            y.iter_mut().zip(m1).for_each(|(v, w)| *v *= w);
            y
        };
        let abs_a: Vec<f64> = a.iter().map(|v| v.abs()).collect();
        let mut scale = d.map(|v: f64| v.abs()).matvec(&abs_a);
        scale.iter_mut().zip(m1).for_each(|(y, w)| *y *= w);
        let res = pcg_scaled(op, &rhs, &diag, opts.tol, opts.max_iter, norm2(&scale))?;
        iterations += res.iterations;
        let a_dstar = cx.codifferential(k + 1, &res.x);
        (res.x, a_dstar)
    } else {
        (Vec::new(), vec![0.0; a.len()])
    };

    let a_0 = (0..a.len()).map(|i| a[i] - a_d[i] - a_dstar[i]).collect();
    Ok(HodgeDecomposition { k, bc: cx.bc, a_d, a_dstar, a_0, b_d, b_dstar, iterations })
}

/// M-orthonormal basis of the harmonic space at degree k, obtained by
/// stripping exact and coexact parts from seeded random forms.
pub fn harmonic_basis(cx: &MixedComplex, k: usize, beta: usize, seed: u64, opts: &SolverOptions) -> Result<Vec<Vec<f64>>> {
    if beta == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6861_726d);
    let n = cx.dim(k);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(beta);
    let mut attempts = 0;
    while basis.len() < beta {
        attempts += 1;
        if attempts > 4 * beta + 8 {
            return Err(Error::Eigen(format!(
                "found only {} of {beta} independent harmonic forms at degree {k}",
                basis.len()
            )));
        }
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut h = hodge_decompose(cx, k, &x, opts)?.a_0;
        let before = cx.norm(k, &h);
        for _ in 0..2 {
            for b in &basis {
                let c = cx.inner(k, b, &h);
                axpy(-c, b, &mut h);
            }
        }
        let after = cx.norm(k, &h);
        if after <= 1e-8 * before.max(f64::MIN_POSITIVE) || after == 0.0 {
            continue;
        }
        h.iter_mut().for_each(|v| *v /= after);
        basis.push(h);
    }
    Ok(basis)
}

/// Remove the M-orthogonal projection onto an orthonormal set; returns the
/// coefficients removed.
pub fn project_out(cx: &MixedComplex, k: usize, basis: &[Vec<f64>], a: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, b) in coeffs.iter_mut().zip(basis) {
            let t = mdot(b, &cx.mass[k], a);
            axpy(-t, b, a);
            *c += t;
        }
    }
    coeffs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    InverseIteration,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoincareResult {
    pub k: usize,
    /// Smallest nonzero eigenvalue of L v = λ M v; infinite when every form
    /// is harmonic.
    pub lambda: f64,
    pub constant: f64,
    pub method: EigenMethod,
}

/// C = λ^{-1/2} for the first eigenvalue above the β-dimensional kernel.
pub fn poincare_constant(cx: &MixedComplex, k: usize, beta: usize, seed: u64, opts: &SolverOptions) -> Result<PoincareResult> {
    if k > cx.n {
        return Err(Error::DegreeOutOfRange { k: k as i64, max: cx.n });
    }
    let n = cx.dim(k);
    if n <= beta {
        return Ok(PoincareResult { k, lambda: f64::INFINITY, constant: 0.0, method: EigenMethod::Dense });
    }
    let (lambda, method) = if n <= opts.dense_limit {
        (dense_lowest(cx, k, beta)?, EigenMethod::Dense)
    } else {
        let h = harmonic_basis(cx, k, beta, seed, opts)?;
        (inverse_iteration_lowest(cx, k, &h, seed, opts)?, EigenMethod::InverseIteration)
    };
    Ok(PoincareResult { k, lambda, constant: 1.0 / lambda.sqrt(), method })
}

/// Same eigenvalue by a forced method; used to cross-check the two routes.
pub fn poincare_lambda_with(cx: &MixedComplex, k: usize, beta: usize, method: EigenMethod, seed: u64, opts: &SolverOptions) -> Result<f64> {
    match method {
        EigenMethod::Dense => dense_lowest(cx, k, beta),
        EigenMethod::InverseIteration => {
            let h = harmonic_basis(cx, k, beta, seed, opts)?;
            inverse_iteration_lowest(cx, k, &h, seed, opts)
        }
    }
}

fn dense_lowest(cx: &MixedComplex, k: usize, beta: usize) -> Result<f64> {
    let l = laplacian(cx, k).to_dense();
    let (vals, _) = diag_gen_eigen(&l, &cx.mass[k]);
    let top = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
    if beta > 0 && vals[beta - 1].abs() > 1e-8 * top {
        return Err(Error::Eigen(format!(
            "expected {beta} zero eigenvalues at degree {k}, eigenvalue {} is {:e}",
            beta - 1,
            vals[beta - 1]
        )));
    }
    let lambda = vals[beta];
    if lambda <= 1e-10 * top {
        return Err(Error::Eigen(format!("eigenvalue {beta} at degree {k} is not separated from zero ({lambda:e})")));
    }
    Ok(lambda)
}

/// Block inverse iteration with Rayleigh–Ritz, kept M-orthogonal to the
/// harmonic space.
fn inverse_iteration_lowest(cx: &MixedComplex, k: usize, harmonics: &[Vec<f64>], seed: u64, opts: &SolverOptions) -> Result<f64> {
    let n = cx.dim(k);
    let m = &cx.mass[k];
    let block = 4.min(n - harmonics.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x706f_696e);
    let mut x: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let lap = laplacian(cx, k);
    // deflate the kernel: L + c·M H Hᵀ M is nonsingular, and with c above the
    // Gershgorin bound the harmonic directions sit at the top of the spectrum
    let c = (0..n).map(|i| lap.row(i).map(|(_, v)| v.abs()).sum::<f64>() / m[i]).fold(0.0, f64::max).max(1.0) * 2.0;
    let mh: Vec<Vec<f64>> = harmonics.iter().map(|h| h.iter().zip(m).map(|(a, w)| a * w).collect()).collect();
    let op = |v: &[f64]| {
        let mut out = lap.matvec(v);
        for q in &mh {
            axpy(c * crate::sparse::dot(q, v), q, &mut out);
        }
        out
    };
    let mut diag = lap.diagonal();
    for q in &mh {
        diag.iter_mut().zip(q).for_each(|(d, x)| *d += c * x * x);
    }
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        let mut y = Vec::with_capacity(block);
        for xi in &x {
            let mut rhs: Vec<f64> = xi.iter().zip(m).map(|(a, w)| a * w).collect();
            // keep the right-hand side consistent with the kernel
            let mut tmp: Vec<f64> = xi.clone();
            project_out(cx, k, harmonics, &mut tmp);
            rhs.iter_mut().zip(tmp.iter().zip(m)).for_each(|(r, (t, w))| *r = t * w);
            let mut yi = pcg(op, &rhs, &diag, opts.tol.max(1e-12), opts.max_iter)?.x;
            project_out(cx, k, harmonics, &mut yi);
            y.push(yi);
        }
        let ay: Vec<Vec<f64>> = y.iter().map(|v| lap.matvec(v)).collect();
        let a = DMatrix::from_fn(block, block, |i, j| crate::sparse::dot(&y[i], &ay[j]));
        let g = DMatrix::from_fn(block, block, |i, j| mdot(&y[i], m, &y[j]));
        let (vals, vecs) = gen_sym_eigen(&a, &g)?;
        x = (0..block)
            .map(|c| {
                let mut v = vec![0.0; n];
                for (r, yr) in y.iter().enumerate() {
                    axpy(vecs[(r, c)], yr, &mut v);
                }
                v
            })
            .collect();
        let lambda = vals[0];
        if (lambda - last).abs() <= 1e-12 * lambda.abs() {
            return Ok(lambda);
        }
        last = lambda;
    }
    Err(Error::Eigen(format!("inverse iteration at degree {k} did not settle (last estimate {last:e})")))
}

/// Dense multiplicity of the zero eigenvalue of L v = λ M v; an independent
/// route to the harmonic dimension.
pub fn dense_kernel_dimension(cx: &MixedComplex, k: usize, rel_tol: f64) -> usize {
    let l = laplacian(cx, k).to_dense();
    let (vals, _) = diag_gen_eigen(&l, &cx.mass[k]);
    let top = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
    vals.iter().filter(|v| v.abs() <= rel_tol * top).count()
}
