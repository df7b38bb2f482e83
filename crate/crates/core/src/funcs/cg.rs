use crate::error::{Error, Result};
use crate::linops::Vector;

/// Absolute residual target for inner linear solves.
pub const CG_ABS_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: Vector,
    pub iterations: usize,
    pub residual: f64,
}

/// Conjugate gradient for a symmetric positive definite `apply`.
///
/// Stops when `‖b − Ax‖ ≤ tol`, or when the residual has reached the level of
/// floating-point noise for this right-hand side (`1e-14·‖b‖`), whichever is
/// larger. Fails after `max_iter` iterations (default `10·dim`).
pub fn conjugate_gradient<F>(
    apply: F,
    rhs: &Vector,
    x0: Option<&Vector>,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<CgOutcome>
where
    F: Fn(&Vector) -> Vector,
{
    let n = rhs.len();
    let max_iter = max_iter.unwrap_or(10 * n).max(1);
    let target = tol.max(1e-14 * rhs.norm());
    let mut x = x0.cloned().unwrap_or_else(|| Vector::zeros(n));
    let mut r = if x0.is_some() { rhs.sub(&apply(&x)) } else { rhs.clone() };
    let mut rs = r.norm_sq();
    if rs.sqrt() <= target {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residual: rs.sqrt(),
        });
    }
    let mut p = r.clone();
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::CgNotConverged {
                iterations: it,
                residual: rs.sqrt(),
            });
        }
        let alpha = rs / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rs_new = r.norm_sq();
        if rs_new.sqrt() <= target {
            // confirm against the true residual to guard against drift
            let true_res = rhs.sub(&apply(&x)).norm();
            if true_res <= 10.0 * target {
                return Ok(CgOutcome {
                    solution: x,
                    iterations: it,
                    residual: true_res,
                });
            }
        }
        p = r.add_scaled(rs_new / rs, &p);
        rs = rs_new;
    }
    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: rs.sqrt(),
    })
}
