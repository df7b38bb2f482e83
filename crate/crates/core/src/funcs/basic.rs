use std::sync::Arc;

use super::sets::{Bounds, Indicator};
use super::{check_gamma, prox_hard_threshold, prox_l1, soft_threshold, ProxFn, ScalarPiece, SmoothFn};
use crate::error::{Error, Result};
use crate::linops::Vector;

const FEAS_TOL: f64 = 1e-12;

/// The zero function.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl ProxFn for Zero {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        Ok(x.clone())
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(Indicator::point_zero()))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        Some(vec![ScalarPiece::default(); dim])
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        Some(Vector::zeros(dim))
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

impl SmoothFn for Zero {
    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn gradient(&self, x: &Vector) -> Vector {
        Vector::zeros(x.len())
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// `w·‖x‖₁`.
#[derive(Clone, Copy, Debug)]
pub struct L1Norm {
    pub weight: f64,
}

impl L1Norm {
    pub fn new(weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidValue(format!("l1 weight must be non-negative, got {weight}")));
        }
        Ok(L1Norm { weight })
    }
}

impl ProxFn for L1Norm {
    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.norm_l1()
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        prox_l1(x, gamma, self.weight)
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(Indicator::linf_ball(self.weight).ok()?))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        let p = ScalarPiece {
            abs_weight: self.weight,
            ..Default::default()
        };
        Some(vec![p; dim])
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        Some(Vector::zeros(dim))
    }

    fn name(&self) -> String {
        format!("l1(weight={})", self.weight)
    }
}

/// `w·‖x − c‖₁`.
#[derive(Clone, Debug)]
pub struct L1Residual {
    pub weight: f64,
    pub center: Vector,
}

impl L1Residual {
    pub fn new(weight: f64, center: Vector) -> Result<Self> {
        L1Norm::new(weight)?;
        Ok(L1Residual { weight, center })
    }
}

impl ProxFn for L1Residual {
    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.sub(&self.center).norm_l1()
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        x.check_len(self.center.len(), "l1 residual prox")?;
        Ok(self.center.add(&soft_threshold(&x.sub(&self.center), self.weight * gamma)))
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(ShiftedLinfBall {
            radius: self.weight,
            shift: self.center.clone(),
        }))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        (dim == self.center.len()).then(|| {
            self.center
                .iter()
                .map(|&c| ScalarPiece {
                    abs_weight: self.weight,
                    abs_center: c,
                    ..Default::default()
                })
                .collect()
        })
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        (dim == self.center.len()).then(|| self.center.clone())
    }

    fn name(&self) -> String {
        format!("l1_residual(weight={})", self.weight)
    }
}

/// `⟨s, shift⟩ + ι_{‖s‖∞ ≤ radius}`, the conjugate of [`L1Residual`].
#[derive(Clone, Debug)]
pub struct ShiftedLinfBall {
    pub radius: f64,
    pub shift: Vector,
}

impl ProxFn for ShiftedLinfBall {
    fn value(&self, x: &Vector) -> f64 {
        if x.norm_inf() > self.radius * (1.0 + FEAS_TOL) + FEAS_TOL {
            return f64::INFINITY;
        }
        x.dot(&self.shift)
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        x.check_len(self.shift.len(), "shifted linf ball prox")?;
        let r = self.radius;
        Ok(x.zip_map(&self.shift, |xi, ci| (xi - gamma * ci).clamp(-r, r)))
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(L1Residual {
            weight: self.radius,
            center: self.shift.clone(),
        }))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        (dim == self.shift.len()).then(|| {
            self.shift
                .iter()
                .map(|&c| ScalarPiece {
                    lin: c,
                    lo: -self.radius,
                    hi: self.radius,
                    ..Default::default()
                })
                .collect()
        })
    }

    fn name(&self) -> String {
        format!("shifted_linf_ball(radius={})", self.radius)
    }
}

/// Support function of a box, `σ(s) = Σ max(loᵢ sᵢ, hiᵢ sᵢ)`; the conjugate
/// of the box indicator.
#[derive(Clone, Debug)]
pub struct BoxSupport {
    pub bounds: Bounds,
}

impl ProxFn for BoxSupport {
    fn value(&self, x: &Vector) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &s)| {
                let (lo, hi) = self.bounds.at(i);
                if s > 0.0 {
                    hi * s
                } else if s < 0.0 {
                    lo * s
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        self.bounds.check(x.len())?;
        Ok(Vector::from_vec(
            x.iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let (lo, hi) = self.bounds.at(i);
                    if xi > gamma * hi {
                        xi - gamma * hi
                    } else if xi < gamma * lo {
                        xi - gamma * lo
                    } else {
                        0.0
                    }
                })
                .collect(),
        ))
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(Indicator::from_bounds(self.bounds.clone())))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        self.bounds.check(dim).ok()?;
        (0..dim)
            .map(|i| {
                let (lo, hi) = self.bounds.at(i);
                (lo.is_finite() && hi.is_finite()).then(|| ScalarPiece {
                    lin: 0.5 * (lo + hi),
                    abs_weight: 0.5 * (hi - lo),
                    ..Default::default()
                })
            })
            .collect()
    }

    fn name(&self) -> String {
        "box_support".into()
    }
}

/// `w·#{i : xᵢ ≠ 0}`, nonconvex.
#[derive(Clone, Copy, Debug)]
pub struct HardThreshold {
    pub weight: f64,
}

impl ProxFn for HardThreshold {
    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.iter().filter(|v| **v != 0.0).count() as f64
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        prox_hard_threshold(x, gamma, self.weight)
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        Some(Vector::zeros(dim))
    }

    fn name(&self) -> String {
        format!("l0(weight={})", self.weight)
    }
}

/// `Σ ¼(xᵢ² − 1)²`, nonconvex with critical points at 0 and ±1.
///
/// The declared Lipschitz constant 2 bounds `|f''| = |3x² − 1|` on `[−1, 1]`,
/// the region visited from starting points inside it.
#[derive(Clone, Copy, Debug)]
pub struct DoubleWell {
    /// Reported convexity flag; `true` builds the mislabeled negative control.
    pub declared_convex: bool,
}

impl DoubleWell {
    pub fn new() -> Self {
        DoubleWell { declared_convex: false }
    }

    pub fn mislabeled_convex() -> Self {
        DoubleWell { declared_convex: true }
    }
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self::new()
    }
}

impl SmoothFn for DoubleWell {
    fn value(&self, x: &Vector) -> f64 {
        x.iter().map(|&t| 0.25 * (t * t - 1.0).powi(2)).sum()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        x.map(|t| t * t * t - t)
    }

    fn lipschitz(&self) -> f64 {
        2.0
    }

    fn is_convex(&self) -> bool {
        self.declared_convex
    }

    fn name(&self) -> String {
        if self.declared_convex {
            "double_well(declared convex)".into()
        } else {
            "double_well".into()
        }
    }
}
