//! Conjugate gradient on flat vectors with a pluggable constraint.

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Weighted `L²` norm of the final (recomputed) residual.
    pub residual: f64,
}

/// Settings shared by every CG call.
#[derive(Debug, Clone, Copy)]
pub struct CgSettings {
    pub name: &'static str,
    /// Absolute tolerance on `sqrt(weight · Σ r²)`.
    pub tol: f64,
    /// Quadrature weight of the discrete inner product (cell volume).
    pub weight: f64,
    pub max_iter: usize,
}

const RESIDUAL_REFRESH: usize = 50;

/// Solve `A x = b` for symmetric positive (semi)definite `A`.
///
/// `x` holds the initial guess on entry. `constrain` projects a vector onto
/// the admissible subspace (mean removal for the singular Neumann Poisson
/// problem); it is applied to every residual.
pub fn conjugate_gradient<A, C>(apply: A, constrain: C, b: &[f64], x: &mut [f64], s: CgSettings) -> Result<CgStats>
where
    A: FnMut(&[f64], &mut [f64]),
    C: FnMut(&mut [f64]),
{
    preconditioned_cg(apply, constrain, |r: &[f64], z: &mut [f64]| z.copy_from_slice(r), b, x, s)
}

/// [`conjugate_gradient`] with a symmetric positive definite preconditioner
/// `z = M⁻¹ r`. The stopping test is on the unpreconditioned residual.
pub fn preconditioned_cg<A, C, M>(
    mut apply: A,
    mut constrain: C,
    mut precond: M,
    b: &[f64],
    x: &mut [f64],
    s: CgSettings,
) -> Result<CgStats>
where
    A: FnMut(&[f64], &mut [f64]),
    C: FnMut(&mut [f64]),
    M: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let norm = |v: &[f64]| (par::dot(v, v) * s.weight).sqrt();
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];

    let true_residual = |apply: &mut A, constrain: &mut C, x: &[f64], r: &mut [f64], ap: &mut [f64]| {
        apply(x, ap);
        par::fill(r, |i| b[i] - ap[i]);
        constrain(r);
    };
    let mut precondition = |r: &[f64], z: &mut [f64], constrain: &mut C| {
        precond(r, z);
        constrain(z);
        par::dot(r, z)
    };

    true_residual(&mut apply, &mut constrain, x, &mut r, &mut ap);
    let mut res = norm(&r);
    if res <= s.tol {
        return Ok(CgStats {
            iterations: 0,
            residual: res,
        });
    }
    let mut rz = precondition(&r, &mut z, &mut constrain);
    let mut p = z.clone();
    let mut restart_res = f64::INFINITY;
    let mut iterations = s.max_iter;
    for it in 1..=s.max_iter {
        apply(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) || !(rz > 0.0) {
            // breakdown: p is (numerically) in the null space
            iterations = it;
            break;
        }
        let alpha = rz / pap;
        par::update(x, |i, v| v + alpha * p[i]);
        if it % RESIDUAL_REFRESH == 0 {
            true_residual(&mut apply, &mut constrain, x, &mut r, &mut ap);
        } else {
            par::update(&mut r, |i, v| v - alpha * ap[i]);
            constrain(&mut r);
        }
        res = norm(&r);
        if res <= s.tol {
            true_residual(&mut apply, &mut constrain, x, &mut r, &mut ap);
            res = norm(&r);
            if res <= s.tol {
                return Ok(CgStats {
                    iterations: it,
                    residual: res,
                });
            }
            // recursive residual drifted; restart from the true one unless
            // the previous restart did no better (rounding floor reached)
            if res >= 0.5 * restart_res {
                iterations = it;
                break;
            }
            restart_res = res;
            rz = precondition(&r, &mut z, &mut constrain);
            p.copy_from_slice(&z);
            continue;
        }
        let rz_new = precondition(&r, &mut z, &mut constrain);
        let beta = rz_new / rz;
        par::update(&mut p, |i, v| z[i] + beta * v);
        rz = rz_new;
    }
    true_residual(&mut apply, &mut constrain, x, &mut r, &mut ap);
    res = norm(&r);
    if res <= s.tol {
        return Ok(CgStats {
            iterations,
            residual: res,
        });
    }
    Err(Error::NoConvergence {
        solver: s.name,
        iterations,
        residual: res,
        tol: s.tol,
    })
}

/// Subtract the arithmetic mean (deterministic sum).
pub fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = par::sum(v.len(), |i| v[i]) / v.len() as f64;
    par::update(v, |_, x| x - m);
}
