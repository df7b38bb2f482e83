//! Function oracles: smooth functions with gradients, proximable functions,
//! conjugates and the prox calculus (separable sums, orthogonal composition,
//! Moreau identity).

mod basic;
mod cg;
mod compose;
mod quadratic;
mod sets;

pub use basic::{BoxSupport, DoubleWell, HardThreshold, L1Norm, L1Residual, ShiftedLinfBall, Zero};
pub use cg::{conjugate_gradient, CgOutcome, CG_ABS_TOL};
pub use compose::{ComposedOrthogonal, Conjugate, DualTerm, SaddleProblem, Separable};
pub use quadratic::Quadratic;
pub use sets::{Bounds, ConsensusComplement, Indicator, SetKind};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linops::Vector;

/// Differentiable function with a Lipschitz gradient.
pub trait SmoothFn: Send + Sync {
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    /// Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;
    fn strong_convexity(&self) -> Option<f64> {
        None
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
    fn name(&self) -> String;
}

/// Proper lower semicontinuous function with a computable proximity operator.
///
/// `value` may return `f64::INFINITY` outside the domain.
pub trait ProxFn: Send + Sync {
    fn value(&self, x: &Vector) -> f64;

    /// `argmin_p  γ·f(p) + ½‖p − x‖²`.
    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector>;

    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    fn is_convex(&self) -> bool {
        true
    }

    /// The Fenchel conjugate as a function object with its own closed-form prox.
    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        None
    }

    /// Coordinate-wise description, when the function is a separable sum of
    /// the scalar family covered by [`ScalarPiece`].
    fn separable_form(&self, _dim: usize) -> Option<Vec<ScalarPiece>> {
        None
    }

    /// A known minimizer, if registered.
    fn minimizer(&self, _dim: usize) -> Option<Vector> {
        None
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }

    fn name(&self) -> String;
}

impl fmt::Debug for dyn ProxFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProxFn({})", self.name())
    }
}

impl fmt::Debug for dyn SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmoothFn({})", self.name())
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidValue(format!("prox stepsize must be positive, got {gamma}")));
    }
    Ok(())
}

/// Componentwise soft threshold at level `t`.
pub fn soft_threshold(x: &Vector, t: f64) -> Vector {
    x.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

/// `sign(xᵢ)·max(|xᵢ| − λγ, 0)`.
pub fn prox_l1(x: &Vector, gamma: f64, weight: f64) -> Result<Vector> {
    check_gamma(gamma)?;
    if weight < 0.0 {
        return Err(Error::InvalidValue("l1 weight must be non-negative".into()));
    }
    Ok(soft_threshold(x, weight * gamma))
}

/// Prox of `‖· − y‖₁`: `y + soft(x − y, γ)`.
pub fn prox_l1_of_residual(x: &Vector, gamma: f64, y: &Vector) -> Result<Vector> {
    check_gamma(gamma)?;
    x.check_len(y.len(), "prox_l1_of_residual")?;
    Ok(y.add(&soft_threshold(&x.sub(y), gamma)))
}

/// Prox of `λ·‖·‖₀`; ties `xᵢ² = 2λγ` resolve to zero.
pub fn prox_hard_threshold(x: &Vector, gamma: f64, weight: f64) -> Result<Vector> {
    check_gamma(gamma)?;
    let thr = 2.0 * weight * gamma;
    Ok(x.map(|v| if v * v > thr { v } else { 0.0 }))
}

/// Prox of the conjugate through Moreau's identity:
/// `prox_{γf*}(x) = x − γ·prox_{f/γ}(x/γ)`.
pub fn prox_conjugate(f: &dyn ProxFn, x: &Vector, gamma: f64) -> Result<Vector> {
    check_gamma(gamma)?;
    let inner = f.prox(&x.scale(1.0 / gamma), 1.0 / gamma)?;
    Ok(x.add_scaled(-gamma, &inner))
}

const FEAS_TOL: f64 = 1e-12;

/// Scalar convex function
/// `φ(t) = (quad/2)·t² + lin·t + abs_weight·|t − abs_center| + ι_[lo,hi](t) + constant`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarPiece {
    pub quad: f64,
    pub lin: f64,
    pub abs_weight: f64,
    pub abs_center: f64,
    pub lo: f64,
    pub hi: f64,
    pub constant: f64,
}

impl Default for ScalarPiece {
    fn default() -> Self {
        ScalarPiece {
            quad: 0.0,
            lin: 0.0,
            abs_weight: 0.0,
            abs_center: 0.0,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            constant: 0.0,
        }
    }
}

impl ScalarPiece {
    pub fn interval(lo: f64, hi: f64) -> Self {
        ScalarPiece {
            lo,
            hi,
            ..Default::default()
        }
    }

    fn smooth_part(&self, t: f64) -> f64 {
        let mut v = 0.5 * self.quad * t * t + self.lin * t + self.constant;
        if self.abs_weight != 0.0 {
            v += self.abs_weight * (t - self.abs_center).abs();
        }
        v
    }

    pub fn value(&self, t: f64) -> f64 {
        let slack = |b: f64| FEAS_TOL * (1.0 + b.abs());
        if t < self.lo - slack(self.lo) || t > self.hi + slack(self.hi) {
            return f64::INFINITY;
        }
        self.smooth_part(t)
    }

    /// Minimizes `a·t + φ(t)` over `[lo, hi] ∩ dom φ`; both bounds must be finite.
    pub fn minimize_linear(&self, a: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
        let l = lo.max(self.lo);
        let u = hi.min(self.hi);
        if !(l.is_finite() && u.is_finite()) {
            return Err(Error::Unsupported("unbounded scalar minimization".into()));
        }
        if l > u {
            return Err(Error::InvalidValue("box does not meet the function domain".into()));
        }
        let mut candidates = vec![l, u];
        if self.abs_weight != 0.0 {
            candidates.push(self.abs_center.clamp(l, u));
        }
        if self.quad > 0.0 {
            candidates.push((-(self.lin + a - self.abs_weight) / self.quad).clamp(l, u));
            candidates.push((-(self.lin + a + self.abs_weight) / self.quad).clamp(l, u));
        }
        let mut best = (l, f64::INFINITY);
        for t in candidates {
            let v = a * t + self.smooth_part(t);
            if v < best.1 {
                best = (t, v);
            }
        }
        Ok(best)
    }
}

/// Evaluates a separable form at `x`.
pub fn separable_value(pieces: &[ScalarPiece], x: &Vector) -> f64 {
    pieces.iter().zip(x.iter()).map(|(p, &t)| p.value(t)).sum()
}

/// Shared handle types used throughout the solvers.
pub type SharedProx = Arc<dyn ProxFn>;
pub type SharedSmooth = Arc<dyn SmoothFn>;
