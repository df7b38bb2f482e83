use std::sync::Arc;

use super::cg::{conjugate_gradient, CG_ABS_TOL};
use super::{check_gamma, ProxFn, ScalarPiece, SmoothFn};
use crate::error::{Error, Result};
use crate::linops::{LinearMap, LinearOperator, Vector};

/// `f(x) = (λ/2)‖Ax − b‖² + offset`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    op: LinearOperator,
    b: Vector,
    lambda: f64,
    offset: f64,
    alpha: Option<f64>,
    diag: Option<Vec<f64>>,
}

impl Quadratic {
    pub fn new(op: LinearOperator, b: Vector, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidValue(format!("quadratic scale must be positive, got {lambda}")));
        }
        b.check_len(op.out_dim(), "quadratic data term")?;
        let diag = op.diagonal_entries();
        let alpha = diag
            .as_ref()
            .map(|d| lambda * d.iter().fold(f64::INFINITY, |m, v| m.min(v * v)))
            .filter(|&a| a > 0.0);
        Ok(Quadratic {
            op,
            b,
            lambda,
            offset: 0.0,
            alpha,
            diag,
        })
    }

    /// `(λ/2)‖x − b‖²`.
    pub fn centered(b: Vector, lambda: f64) -> Result<Self> {
        Self::new(LinearOperator::identity(b.len()), b, lambda)
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Declares a strong-convexity modulus, e.g. the smallest eigenvalue of
    /// `λA*A` computed from a designed spectrum.
    pub fn with_strong_convexity(mut self, alpha: f64) -> Self {
        self.alpha = (alpha > 0.0).then_some(alpha);
        self
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.op
    }

    pub fn data(&self) -> &Vector {
        &self.b
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.op.in_dim()
    }

    pub fn residual(&self, x: &Vector) -> Vector {
        self.op.apply_raw(x).sub(&self.b)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        0.5 * self.lambda * self.residual(x).norm_sq() + self.offset
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        self.op.adjoint_raw(&self.residual(x)).scale(self.lambda)
    }

    /// Exact line-search step along `g` for this quadratic:
    /// `‖g‖² / (λ‖Ag‖²)`. `None` when `Ag = 0`.
    pub fn exact_step(&self, g: &Vector) -> Option<f64> {
        let ag = self.op.apply_raw(g).norm_sq();
        (ag > 0.0).then(|| g.norm_sq() / (self.lambda * ag))
    }

    /// Solves `(c·Id + λA*A) p = rhs`.
    pub fn solve_shifted(&self, c: f64, rhs: &Vector) -> Result<Vector> {
        if let Some(d) = &self.diag {
            return Ok(Vector::from_vec(
                rhs.iter().zip(d).map(|(r, di)| r / (c + self.lambda * di * di)).collect(),
            ));
        }
        let lam = self.lambda;
        let out = conjugate_gradient(
            |p| p.scale(c).add_scaled(lam, &self.op.normal_raw(p)),
            rhs,
            None,
            CG_ABS_TOL,
            None,
        )?;
        Ok(out.solution)
    }

    fn identity_factor(&self) -> Option<f64> {
        self.op.scalar_multiple_of_identity()
    }
}

impl SmoothFn for Quadratic {
    fn value(&self, x: &Vector) -> f64 {
        self.eval(x)
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.grad(x)
    }

    fn lipschitz(&self) -> f64 {
        let n = self.op.norm();
        self.lambda * n * n
    }

    fn strong_convexity(&self) -> Option<f64> {
        self.alpha
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }

    fn name(&self) -> String {
        format!("quadratic(lambda={})", self.lambda)
    }
}

impl ProxFn for Quadratic {
    fn value(&self, x: &Vector) -> f64 {
        self.eval(x)
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        x.check_len(self.dim(), "quadratic prox")?;
        // (Id + γλA*A) p = x + γλA*b
        let rhs = x.add_scaled(gamma * self.lambda, &self.op.adjoint_raw(&self.b));
        Ok(self.solve_shifted(1.0 / gamma, &rhs.scale(1.0 / gamma))?)
    }

    fn strong_convexity(&self) -> Option<f64> {
        self.alpha
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        let c = self.identity_factor()?;
        if c == 0.0 {
            return None;
        }
        let mu = self.lambda * c * c;
        let m = self.b.scale(1.0 / c);
        let conj = Quadratic::centered(m.scale(-mu), 1.0 / mu)
            .ok()?
            .with_offset(-0.5 * mu * m.norm_sq() - self.offset);
        Some(Arc::new(conj))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        let d = self.diag.as_ref()?;
        if d.len() != dim {
            return None;
        }
        let lam = self.lambda;
        let mut pieces: Vec<ScalarPiece> = d
            .iter()
            .zip(self.b.iter())
            .map(|(&di, &bi)| ScalarPiece {
                quad: lam * di * di,
                lin: -lam * di * bi,
                constant: 0.5 * lam * bi * bi,
                ..Default::default()
            })
            .collect();
        pieces[0].constant += self.offset;
        Some(pieces)
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        let d = self.diag.as_ref()?;
        if d.len() != dim || d.iter().any(|&v| v == 0.0) {
            return None;
        }
        Some(self.b.zip_map(&Vector::from_slice(d), |b, d| b / d))
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }

    fn name(&self) -> String {
        format!("quadratic(lambda={})", self.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn identity_prox_and_gradient() {
        let q = Quadratic::centered(v(&[0.0]), 1.0).unwrap();
        assert_eq!(q.prox(&v(&[2.0]), 1.0).unwrap(), v(&[1.0]));
        let q = Quadratic::centered(v(&[4.0]), 1.0).unwrap();
        assert_eq!(q.grad(&v(&[1.0])), v(&[-3.0]));
    }

    #[test]
    fn row_vector_prox_via_cg() {
        let a = LinearOperator::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let q = Quadratic::new(a, v(&[2.0]), 1.0).unwrap();
        let p = q.prox(&v(&[0.0, 0.0]), 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-10);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn dense_diagonal_uses_closed_form() {
        let a = LinearOperator::diagonal(&[1.0, 2.0]).unwrap();
        let q = Quadratic::new(a, v(&[1.0, 1.0]), 1.0).unwrap();
        assert_eq!(SmoothFn::strong_convexity(&q), Some(1.0));
        assert_eq!(q.minimizer(2).unwrap(), v(&[1.0, 0.5]));
        // (1 + 4) p = 0 + 2·1
        assert!((q.prox(&v(&[0.0, 0.0]), 1.0).unwrap()[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn conjugate_of_shifted_square() {
        // f = (2/2)(x − 1)², f*(s) = s²/4 + s
        let q = Quadratic::centered(v(&[1.0]), 2.0).unwrap();
        let c = q.conjugate().unwrap();
        for s in [-2.0, 0.0, 0.5, 3.0] {
            assert!((c.value(&v(&[s])) - (s * s / 4.0 + s)).abs() < 1e-12);
        }
    }
}
