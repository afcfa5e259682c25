//! Conjugate gradients for the symmetric positive-definite stage systems.

use crate::diffops::LinearOperator;
use crate::error::{Error, Result};
use crate::image::Plane;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// `||A x - b|| / ||b||`, recomputed from the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = rhs` from the warm start `x0`.
///
/// Convergence is declared on the true residual, so a converged report
/// always satisfies `relative_residual <= tol`. Each iterate lowers the
/// quadratic `1/2 <Ax, x> - <rhs, x>`, hence the result never scores worse
/// than `x0` on it.
pub fn linear_solve_cg(
    a: &dyn LinearOperator,
    rhs: &Plane,
    x0: &Plane,
    tol: f64,
    max_iter: usize,
) -> Result<(Plane, CgReport)> {
    rhs.check_dims(x0)?;
    let b_norm = rhs.norm();
    if b_norm == 0.0 {
        return Ok((
            Plane::zeros(rhs.height(), rhs.width()),
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let target = tol * b_norm;
    let nan = |iteration| Error::Numerical {
        context: "conjugate gradient".into(),
        iteration,
    };

    let mut x = x0.clone();
    let mut r = rhs.sub(&a.apply(&x));
    let mut rr = r.norm_sq();
    if !rr.is_finite() {
        return Err(nan(0));
    }
    let mut p = r.clone();
    let mut iterations = 0;

    while rr.sqrt() > target && iterations < max_iter {
        iterations += 1;
        let ap = a.apply(&p);
        let curvature = p.dot(&ap);
        if !curvature.is_finite() {
            return Err(nan(iterations));
        }
        if curvature <= 0.0 {
            // no descent left along p; leave the decision to the report
            break;
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_next = r.norm_sq();
        if !rr_next.is_finite() {
            return Err(nan(iterations));
        }
        if rr_next.sqrt() <= target {
            // guard against drift of the recursive residual
            let true_r = rhs.sub(&a.apply(&x));
            let true_rr = true_r.norm_sq();
            if true_rr.sqrt() > target {
                r = true_r;
                rr = true_rr;
                p = r.clone();
                continue;
            }
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        let mut next_p = r.clone();
        next_p.axpy(beta, &p);
        p = next_p;
    }

    let relative_residual = rhs.sub(&a.apply(&x)).norm() / b_norm;
    if !relative_residual.is_finite() {
        return Err(nan(iterations));
    }
    log::trace!("cg: {iterations} iterations, relative residual {relative_residual:e}");
    Ok((
        x,
        CgReport {
            iterations,
            relative_residual,
            converged: relative_residual <= tol,
        },
    ))
}
