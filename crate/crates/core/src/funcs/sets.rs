use std::sync::Arc;

use super::basic::{BoxSupport, L1Norm};
use super::cg::{conjugate_gradient, CG_ABS_TOL};
use super::{check_gamma, ProxFn, ScalarPiece};
use crate::error::{Error, Result};
use crate::linops::{LinearMap, LinearOperator, Vector};

const BOX_TOL: f64 = 1e-12;
const GRAPH_TOL: f64 = 1e-8;

/// Per-coordinate interval bounds; a length-1 vector is broadcast.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || hi.is_empty() {
            return Err(Error::InvalidValue("box bounds are empty".into()));
        }
        if lo.len() != hi.len() && lo.len() != 1 && hi.len() != 1 {
            return Err(Error::dims("box bounds", lo.len(), hi.len()));
        }
        let b = Bounds { lo, hi };
        let n = b.lo.len().max(b.hi.len());
        for i in 0..n {
            let (l, h) = b.at(i);
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidValue(format!("empty box at index {i}: [{l}, {h}]")));
            }
        }
        Ok(b)
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Bounds {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn at(&self, i: usize) -> (f64, f64) {
        let pick = |v: &[f64]| if v.len() == 1 { v[0] } else { v[i] };
        (pick(&self.lo), pick(&self.hi))
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        for v in [&self.lo, &self.hi] {
            if v.len() != 1 && v.len() != dim {
                return Err(Error::dims("box bounds", v.len(), dim));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: &Vector) -> Vector {
        Vector::from_vec(
            x.iter()
                .enumerate()
                .map(|(i, &t)| {
                    let (l, h) = self.at(i);
                    t.max(l).min(h)
                })
                .collect(),
        )
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.iter().enumerate().all(|(i, &t)| {
            let (l, h) = self.at(i);
            t >= l - BOX_TOL * (1.0 + l.abs()) && t <= h + BOX_TOL * (1.0 + h.abs())
        })
    }
}

/// Convex sets with closed-form (or CG-based) projections.
#[derive(Clone, Debug)]
pub enum SetKind {
    Box(Bounds),
    LinfBall { radius: f64 },
    /// `{(x₁, x₂) : x₂ = K x₁}` on the stacked vector.
    AffineGraph { op: LinearOperator },
    /// `{(x₁, …, x_M) : x₁ = … = x_M}` with `M` equal blocks.
    Consensus { blocks: usize },
}

/// Indicator `ι_C`; its prox is the projection onto `C` for every `γ`.
#[derive(Clone, Debug)]
pub struct Indicator {
    kind: SetKind,
}

impl Indicator {
    pub fn new(kind: SetKind) -> Result<Self> {
        match &kind {
            SetKind::LinfBall { radius } if !(*radius >= 0.0) => {
                return Err(Error::InvalidValue(format!("linf radius must be non-negative, got {radius}")))
            }
            SetKind::Consensus { blocks } if *blocks == 0 => {
                return Err(Error::InvalidValue("consensus needs at least one block".into()))
            }
            _ => {}
        }
        Ok(Indicator { kind })
    }

    pub fn boxed(lo: f64, hi: f64) -> Result<Self> {
        Ok(Self::from_bounds(Bounds::new(vec![lo], vec![hi])?))
    }

    pub fn from_bounds(bounds: Bounds) -> Self {
        Indicator {
            kind: SetKind::Box(bounds),
        }
    }

    pub fn point_zero() -> Self {
        Self::from_bounds(Bounds::uniform(0.0, 0.0))
    }

    pub fn linf_ball(radius: f64) -> Result<Self> {
        Self::new(SetKind::LinfBall { radius })
    }

    pub fn affine_graph(op: LinearOperator) -> Self {
        Indicator {
            kind: SetKind::AffineGraph { op },
        }
    }

    pub fn consensus(blocks: usize) -> Result<Self> {
        Self::new(SetKind::Consensus { blocks })
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        match &self.kind {
            SetKind::Box(b) => {
                b.check(x.len())?;
                Ok(b.clamp(x))
            }
            SetKind::LinfBall { radius } => Ok(x.map(|t| t.clamp(-radius, *radius))),
            SetKind::AffineGraph { op } => project_graph(op, x),
            SetKind::Consensus { blocks } => {
                let d = block_size(x.len(), *blocks)?;
                let mean = block_mean(x, *blocks, d);
                Ok(Vector::concat(&vec![mean; *blocks]))
            }
        }
    }
}

fn block_size(len: usize, blocks: usize) -> Result<usize> {
    if len % blocks != 0 {
        return Err(Error::InvalidValue(format!(
            "vector of length {len} does not split into {blocks} equal blocks"
        )));
    }
    Ok(len / blocks)
}

fn block_mean(x: &Vector, blocks: usize, d: usize) -> Vector {
    let mut mean = Vector::zeros(d);
    for m in 0..blocks {
        mean.axpy(1.0, &x.slice(m * d..(m + 1) * d));
    }
    mean.scale(1.0 / blocks as f64)
}

/// `p₁ = (Id + K*K)⁻¹(x₁ + K*x₂)`, `p₂ = K p₁`.
fn project_graph(op: &LinearOperator, x: &Vector) -> Result<Vector> {
    let (n, m) = (op.in_dim(), op.out_dim());
    x.check_len(n + m, "affine graph projection")?;
    let x1 = x.slice(0..n);
    let x2 = x.slice(n..n + m);
    let rhs = x1.add(&op.adjoint_raw(&x2));
    let p1 = match op.diagonal_entries() {
        Some(d) => Vector::from_vec(rhs.iter().zip(&d).map(|(r, di)| r / (1.0 + di * di)).collect()),
        None => {
            conjugate_gradient(|p| p.add(&op.normal_raw(p)), &rhs, Some(&x1), CG_ABS_TOL, None)?.solution
        }
    };
    let p2 = op.apply_raw(&p1);
    Ok(Vector::concat(&[p1, p2]))
}

impl ProxFn for Indicator {
    fn value(&self, x: &Vector) -> f64 {
        let inside = match &self.kind {
            SetKind::Box(b) => b.check(x.len()).is_ok() && b.contains(x),
            SetKind::LinfBall { radius } => x.norm_inf() <= radius + BOX_TOL * (1.0 + radius),
            SetKind::AffineGraph { op } => {
                let n = op.in_dim();
                x.len() == n + op.out_dim() && {
                    let x1 = x.slice(0..n);
                    let gap = op.apply_raw(&x1).sub(&x.slice(n..x.len())).norm();
                    gap <= GRAPH_TOL * (1.0 + x.norm())
                }
            }
            SetKind::Consensus { blocks } => match block_size(x.len(), *blocks) {
                Ok(d) => {
                    let mean = block_mean(x, *blocks, d);
                    (0..*blocks).all(|m| x.slice(m * d..(m + 1) * d).dist(&mean) <= GRAPH_TOL * (1.0 + mean.norm()))
                }
                Err(_) => false,
            },
        };
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        self.project(x)
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        match &self.kind {
            SetKind::Box(b) => Some(Arc::new(BoxSupport { bounds: b.clone() })),
            SetKind::LinfBall { radius } => Some(Arc::new(L1Norm { weight: *radius })),
            SetKind::Consensus { blocks } => Some(Arc::new(ConsensusComplement { blocks: *blocks })),
            SetKind::AffineGraph { .. } => None,
        }
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        match &self.kind {
            SetKind::Box(b) => {
                b.check(dim).ok()?;
                Some(
                    (0..dim)
                        .map(|i| {
                            let (lo, hi) = b.at(i);
                            ScalarPiece::interval(lo, hi)
                        })
                        .collect(),
                )
            }
            SetKind::LinfBall { radius } => Some(vec![ScalarPiece::interval(-radius, *radius); dim]),
            _ => None,
        }
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        self.project(&Vector::zeros(dim)).ok()
    }

    fn name(&self) -> String {
        match &self.kind {
            SetKind::Box(_) => "indicator(box)".into(),
            SetKind::LinfBall { radius } => format!("indicator(linf_ball r={radius})"),
            SetKind::AffineGraph { .. } => "indicator(affine_graph)".into(),
            SetKind::Consensus { blocks } => format!("indicator(consensus M={blocks})"),
        }
    }
}

/// Indicator of `{(x₁, …, x_M) : Σ xᵢ = 0}`, the orthogonal complement of the
/// consensus subspace and the conjugate of its indicator.
#[derive(Clone, Copy, Debug)]
pub struct ConsensusComplement {
    pub blocks: usize,
}

impl ProxFn for ConsensusComplement {
    fn value(&self, x: &Vector) -> f64 {
        match block_size(x.len(), self.blocks) {
            Ok(d) if block_mean(x, self.blocks, d).norm() <= GRAPH_TOL * (1.0 + x.norm()) => 0.0,
            _ => f64::INFINITY,
        }
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        let d = block_size(x.len(), self.blocks)?;
        let mean = block_mean(x, self.blocks, d);
        let parts: Vec<Vector> = (0..self.blocks)
            .map(|m| x.slice(m * d..(m + 1) * d).sub(&mean))
            .collect();
        Ok(Vector::concat(&parts))
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(Indicator {
            kind: SetKind::Consensus { blocks: self.blocks },
        }))
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        Some(Vector::zeros(dim))
    }

    fn name(&self) -> String {
        format!("indicator(consensus complement M={})", self.blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn box_clamps() {
        let b = Indicator::boxed(0.0, 1.0).unwrap();
        assert_eq!(b.prox(&v(&[-1.0, 0.5, 9.0]), 3.0).unwrap(), v(&[0.0, 0.5, 1.0]));
        assert_eq!(b.value(&v(&[0.5])), 0.0);
        assert_eq!(b.value(&v(&[1.5])), f64::INFINITY);
        assert!(Indicator::boxed(1.0, 0.0).is_err());
    }

    #[test]
    fn affine_graph_identity_averages() {
        let g = Indicator::affine_graph(LinearOperator::identity(1));
        assert_eq!(g.prox(&v(&[0.0, 2.0]), 1.0).unwrap(), v(&[1.0, 1.0]));
    }

    #[test]
    fn affine_graph_gradient_projection_is_feasible() {
        let op = LinearOperator::grad2d(3, 3, crate::linops::Boundary::Neumann).unwrap();
        let g = Indicator::affine_graph(op.clone());
        let x = Vector::from_vec((0..27).map(|i| ((i * 7) % 5) as f64 - 2.0).collect());
        let p = g.prox(&x, 1.0).unwrap();
        assert_eq!(g.value(&p), 0.0);
        // projecting twice is a no-op
        let pp = g.prox(&p, 1.0).unwrap();
        assert!(pp.dist(&p) < 1e-9);
    }

    #[test]
    fn consensus_means() {
        let c = Indicator::consensus(2).unwrap();
        assert_eq!(c.prox(&v(&[1.0, 3.0]), 1.0).unwrap(), v(&[2.0, 2.0]));
        assert!(c.prox(&v(&[1.0, 2.0, 3.0]), 1.0).is_err());
        let x = v(&[1.0, 5.0, 3.0, -1.0]);
        let p = c.prox(&x, 1.0).unwrap();
        let q = ConsensusComplement { blocks: 2 }.prox(&x, 1.0).unwrap();
        assert_eq!(p.add(&q), x);
    }
}
