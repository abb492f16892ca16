//! Preconditioned conjugate gradients and MINRES with diagonal
//! preconditioners.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2};

#[derive(Clone, Debug)]
pub struct KrylovResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual ‖b - Ax‖ / ‖b‖.
    pub residual: f64,
}

fn inv_diag(d: &[f64]) -> Vec<f64> {
    d.iter().map(|&v| if v.abs() > 0.0 && v.is_finite() { 1.0 / v.abs() } else { 1.0 }).collect()
}

/// CG for symmetric positive (semi)definite operators. Singular but
/// consistent systems converge to the minimum-norm-in-range solution.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovResult> {
    pcg_scaled(apply, b, diag, tol, max_iter, 0.0)
}

/// As [`pcg`], but residuals are measured against max(‖b‖, `scale`). Use a
/// scale when b may be pure cancellation noise of a larger computation.
pub fn pcg_scaled(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    diag: &[f64],
    tol: f64,
    max_iter: usize,
    scale: f64,
) -> Result<KrylovResult> {
    let n = b.len();
    let bnorm = norm2(b).max(scale);
    if norm2(b) <= tol * bnorm || bnorm == 0.0 {
        return Ok(KrylovResult { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let pinv = inv_diag(diag);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&pinv).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // the remaining residual lies in the kernel
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = norm2(&r) / bnorm;
        if rel <= tol {
            return Ok(KrylovResult { x, iterations: it, residual: rel });
        }
        z = r.iter().zip(&pinv).map(|(a, p)| a * p).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let rel = norm2(&residual(&apply, b, &x)) / bnorm;
    if rel <= tol {
        return Ok(KrylovResult { x, iterations: max_iter, residual: rel });
    }
    Err(Error::NoConvergence { solver: "conjugate gradients", iterations: max_iter, residual: rel })
}

fn residual(apply: &impl Fn(&[f64]) -> Vec<f64>, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = apply(x);
    b.iter().zip(&ax).map(|(b, a)| b - a).collect()
}

/// MINRES for symmetric indefinite operators with an SPD diagonal
/// preconditioner.
pub fn minres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovResult> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(KrylovResult { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let pinv = inv_diag(diag);
    let prec = |v: &[f64]| -> Vec<f64> { v.iter().zip(&pinv).map(|(a, p)| a * p).collect() };
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut y = prec(&r1);
    let beta1 = dot(&r1, &y).sqrt();
    let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|a| a * s).collect();
        y = apply(&v);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        r1 = std::mem::replace(&mut r2, y);
        y = prec(&r2);
        oldb = beta;
        beta = dot(&r2, &y).max(0.0).sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
        }
        axpy(phi, &w, &mut x);
        if phibar / beta1 < tol * 1e-2 || beta == 0.0 {
            break;
        }
    }
    let rel = norm2(&residual(&apply, b, &x)) / bnorm;
    if rel <= tol {
        Ok(KrylovResult { x, iterations, residual: rel })
    } else {
        Err(Error::NoConvergence { solver: "MINRES", iterations, residual: rel })
    }
}
