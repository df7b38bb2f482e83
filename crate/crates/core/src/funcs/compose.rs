use std::ops::Range;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_gamma, prox_conjugate, ProxFn, ScalarPiece, SharedProx};
use crate::error::{Error, Result};
use crate::linops::{LinearMap, LinearOperator, Vector};
use crate::par;

/// `F(x) = Σ fᵢ(x[blockᵢ])` over a partition of the coordinates.
#[derive(Clone)]
pub struct Separable {
    parts: Vec<(SharedProx, Range<usize>)>,
    dim: usize,
}

impl Separable {
    pub fn new(parts: Vec<(SharedProx, Range<usize>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidValue("separable sum needs at least one block".into()));
        }
        let mut sorted: Vec<&Range<usize>> = parts.iter().map(|(_, r)| r).collect();
        sorted.sort_by_key(|r| r.start);
        let mut next = 0;
        for r in &sorted {
            if r.start > next {
                return Err(Error::InvalidValue(format!("blocks leave indices {next}..{} uncovered", r.start)));
            }
            if r.start < next {
                return Err(Error::InvalidValue(format!("block {r:?} overlaps a previous block")));
            }
            if r.end <= r.start {
                return Err(Error::InvalidValue(format!("block {r:?} is empty")));
            }
            next = r.end;
        }
        Ok(Separable { parts, dim: next })
    }

    /// Consecutive blocks of the given lengths.
    pub fn from_lengths(parts: Vec<(SharedProx, usize)>) -> Result<Self> {
        let mut start = 0;
        let parts = parts
            .into_iter()
            .map(|(f, n)| {
                let r = start..start + n;
                start += n;
                (f, r)
            })
            .collect();
        Self::new(parts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parts(&self) -> &[(SharedProx, Range<usize>)] {
        &self.parts
    }
}

impl ProxFn for Separable {
    fn value(&self, x: &Vector) -> f64 {
        if x.len() != self.dim {
            return f64::NAN;
        }
        self.parts.iter().map(|(f, r)| f.value(&x.slice(r.clone()))).sum()
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        x.check_len(self.dim, "separable prox")?;
        let blocks = par::try_map(&self.parts, |(f, r)| f.prox(&x.slice(r.clone()), gamma))?;
        let mut out = Vector::zeros(self.dim);
        for ((_, r), b) in self.parts.iter().zip(blocks) {
            out.as_mut_slice()[r.clone()].copy_from_slice(b.as_slice());
        }
        Ok(out)
    }

    fn strong_convexity(&self) -> Option<f64> {
        self.parts
            .iter()
            .map(|(f, _)| f.strong_convexity())
            .try_fold(f64::INFINITY, |m, a| a.map(|a| m.min(a)))
    }

    fn is_convex(&self) -> bool {
        self.parts.iter().all(|(f, _)| f.is_convex())
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        let parts = self
            .parts
            .iter()
            .map(|(f, r)| f.conjugate().map(|c| (c, r.clone())))
            .collect::<Option<Vec<_>>>()?;
        Some(Arc::new(Separable { parts, dim: self.dim }))
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        if dim != self.dim {
            return None;
        }
        let mut out = vec![ScalarPiece::default(); dim];
        for (f, r) in &self.parts {
            let pieces = f.separable_form(r.len())?;
            out[r.clone()].copy_from_slice(&pieces);
        }
        Some(out)
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        if dim != self.dim {
            return None;
        }
        let mut out = Vector::zeros(dim);
        for (f, r) in &self.parts {
            let m = f.minimizer(r.len())?;
            out.as_mut_slice()[r.clone()].copy_from_slice(m.as_slice());
        }
        Some(out)
    }

    fn name(&self) -> String {
        let names: Vec<String> = self.parts.iter().map(|(f, _)| f.name()).collect();
        format!("separable[{}]", names.join(", "))
    }
}

const ORTHO_TOL: f64 = 1e-8;
const ORTHO_TRIALS: usize = 20;

/// `inner ∘ T` for an orthogonal `T`.
#[derive(Clone)]
pub struct ComposedOrthogonal {
    t: LinearOperator,
    inner: SharedProx,
}

impl ComposedOrthogonal {
    /// Validates `T*T = TT* = Id` on random vectors.
    pub fn new(t: LinearOperator, inner: SharedProx) -> Result<Self> {
        if t.in_dim() != t.out_dim() {
            return Err(Error::InvalidValue(format!(
                "orthogonal operator must be square, got {}×{}",
                t.out_dim(),
                t.in_dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x0a7e);
        for _ in 0..ORTHO_TRIALS {
            let x = Vector::random_normal(t.in_dim(), 1.0, &mut rng);
            let d1 = t.normal_raw(&x).dist(&x);
            let d2 = t.apply_raw(&t.adjoint_raw(&x)).dist(&x);
            if d1.max(d2) > ORTHO_TOL * (1.0 + x.norm()) {
                return Err(Error::InvalidValue(format!(
                    "operator is not orthogonal: defect {:e}",
                    d1.max(d2)
                )));
            }
        }
        Ok(ComposedOrthogonal { t, inner })
    }

    pub fn transform(&self) -> &LinearOperator {
        &self.t
    }
}

impl ProxFn for ComposedOrthogonal {
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(&self.t.apply_raw(x))
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        let tx = self.t.apply(x)?;
        Ok(self.t.adjoint_raw(&self.inner.prox(&tx, gamma)?))
    }

    fn strong_convexity(&self) -> Option<f64> {
        self.inner.strong_convexity()
    }

    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(Arc::new(ComposedOrthogonal {
            t: self.t.clone(),
            inner: self.inner.conjugate()?,
        }))
    }

    fn minimizer(&self, dim: usize) -> Option<Vector> {
        Some(self.t.adjoint_raw(&self.inner.minimizer(dim)?))
    }

    fn name(&self) -> String {
        format!("{}∘T", self.inner.name())
    }
}

/// `f*` realised through Moreau's identity from the primal prox.
///
/// The value is taken from an explicit conjugate when the primal provides
/// one and is `NaN` otherwise.
#[derive(Clone)]
pub struct Conjugate {
    inner: SharedProx,
    explicit: Option<SharedProx>,
}

impl Conjugate {
    pub fn new(inner: SharedProx) -> Self {
        let explicit = inner.conjugate();
        Conjugate { inner, explicit }
    }

    pub fn primal(&self) -> &SharedProx {
        &self.inner
    }
}

impl ProxFn for Conjugate {
    fn value(&self, x: &Vector) -> f64 {
        self.explicit.as_ref().map_or(f64::NAN, |c| c.value(x))
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        prox_conjugate(self.inner.as_ref(), x, gamma)
    }

    fn conjugate(&self) -> Option<Arc<dyn ProxFn>> {
        Some(self.inner.clone())
    }

    fn separable_form(&self, dim: usize) -> Option<Vec<ScalarPiece>> {
        self.explicit.as_ref()?.separable_form(dim)
    }

    fn name(&self) -> String {
        format!("({})*", self.inner.name())
    }
}

/// How the coupled term `f(Kx)` enters a saddle problem.
#[derive(Clone)]
pub enum DualTerm {
    /// Only `f` is known; `prox_{σf*}` comes from Moreau's identity.
    Primal(SharedProx),
    /// `f*` is given directly, optionally with `f` for primal evaluation.
    Conjugate {
        conj: SharedProx,
        primal: Option<SharedProx>,
    },
}

/// `min_x max_y ⟨Kx, y⟩ − f*(y) + g(x)`.
#[derive(Clone)]
pub struct SaddleProblem {
    pub dual: DualTerm,
    pub g: SharedProx,
    pub k: LinearOperator,
}

impl SaddleProblem {
    pub fn new(dual: DualTerm, g: SharedProx, k: LinearOperator) -> Self {
        SaddleProblem { dual, g, k }
    }

    pub fn from_primal(f: SharedProx, g: SharedProx, k: LinearOperator) -> Self {
        Self::new(DualTerm::Primal(f), g, k)
    }

    pub fn primal_dim(&self) -> usize {
        self.k.in_dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.k.out_dim()
    }

    /// `prox_{σf*}(y)`.
    pub fn prox_dual(&self, y: &Vector, sigma: f64) -> Result<Vector> {
        match &self.dual {
            DualTerm::Primal(f) => prox_conjugate(f.as_ref(), y, sigma),
            DualTerm::Conjugate { conj, .. } => conj.prox(y, sigma),
        }
    }

    /// `f*` as a function object, when available in closed form.
    pub fn conjugate_term(&self) -> Option<SharedProx> {
        match &self.dual {
            DualTerm::Primal(f) => f.conjugate(),
            DualTerm::Conjugate { conj, .. } => Some(conj.clone()),
        }
    }

    /// `f` as a function object, when available.
    pub fn primal_term(&self) -> Option<SharedProx> {
        match &self.dual {
            DualTerm::Primal(f) => Some(f.clone()),
            DualTerm::Conjugate { primal, conj } => primal.clone().or_else(|| conj.conjugate()),
        }
    }

    /// `f(Kx) + g(x)`; `NaN` when `f` is unavailable.
    pub fn primal_objective(&self, x: &Vector) -> f64 {
        match self.primal_term() {
            Some(f) => f.value(&self.k.apply_raw(x)) + self.g.value(x),
            None => f64::NAN,
        }
    }

    /// `h(x, y) = ⟨Kx, y⟩ − f*(y) + g(x)`.
    pub fn lagrangian(&self, x: &Vector, y: &Vector) -> f64 {
        let fs = self.conjugate_term().map_or(f64::NAN, |c| c.value(y));
        self.k.apply_raw(x).dot(y) - fs + self.g.value(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{Indicator, L1Norm, Quadratic};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn separable_blocks() {
        let l1: SharedProx = Arc::new(L1Norm::new(1.0).unwrap());
        let bx: SharedProx = Arc::new(Indicator::boxed(0.0, 1.0).unwrap());
        let s = Separable::from_lengths(vec![(l1.clone(), 1), (bx, 1)]).unwrap();
        assert_eq!(s.prox(&v(&[2.0, 2.0]), 1.0).unwrap(), v(&[1.0, 1.0]));
        let two = Separable::from_lengths(vec![(l1.clone(), 2), (l1.clone(), 1)]).unwrap();
        let x = v(&[3.0, -0.2, -4.0]);
        assert_eq!(two.prox(&x, 0.5).unwrap(), l1.prox(&x, 0.5).unwrap());
        assert!(Separable::new(vec![(l1.clone(), 0..2), (l1.clone(), 1..3)]).is_err());
        assert!(Separable::new(vec![(l1.clone(), 0..1), (l1, 2..3)]).is_err());
    }

    #[test]
    fn haar_composition_matches_grid_search() {
        let h = 1.0 / 2f64.sqrt();
        let t = LinearOperator::from_rows(&[vec![h, h], vec![h, -h]]).unwrap();
        let l1: SharedProx = Arc::new(L1Norm::new(1.0).unwrap());
        let f = ComposedOrthogonal::new(t.clone(), l1).unwrap();
        let x = v(&[1.7, -0.4]);
        let gamma = 0.6;
        let p = f.prox(&x, gamma).unwrap();
        let obj = |a: f64, b: f64| {
            0.5 * ((a - x[0]).powi(2) + (b - x[1]).powi(2)) + gamma * h * ((a + b).abs() + (a - b).abs())
        };
        let step = 1e-3;
        let mut best = (0.0, 0.0, f64::INFINITY);
        for i in 0..=3000 {
            for j in 0..=3000 {
                let (a, b) = (-1.5 + i as f64 * step, -1.5 + j as f64 * step);
                let o = obj(a, b);
                if o < best.2 {
                    best = (a, b, o);
                }
            }
        }
        assert!((p[0] - best.0).abs() <= 1e-3 && (p[1] - best.1).abs() <= 1e-3, "{p:?} vs {best:?}");
    }

    #[test]
    fn non_orthogonal_rejected() {
        let t = LinearOperator::scale(2, 2.0);
        assert!(ComposedOrthogonal::new(t, Arc::new(L1Norm::new(1.0).unwrap())).is_err());
    }

    #[test]
    fn moreau_examples() {
        let l1 = L1Norm::new(1.0).unwrap();
        assert_eq!(prox_conjugate(&l1, &v(&[0.5]), 1.0).unwrap(), v(&[0.5]));
        assert_eq!(prox_conjugate(&l1, &v(&[2.5]), 1.0).unwrap(), v(&[1.0]));
        let q = Quadratic::centered(v(&[0.0, 0.0]), 1.0).unwrap();
        assert_eq!(prox_conjugate(&q, &v(&[2.0, -4.0]), 1.0).unwrap(), v(&[1.0, -2.0]));
    }

    #[test]
    fn scalar_saddle_lagrangian() {
        let fs: SharedProx = Arc::new(Indicator::boxed(-1.0, 1.0).unwrap());
        let g: SharedProx = Arc::new(Quadratic::centered(v(&[0.0]), 1.0).unwrap());
        let p = SaddleProblem::new(
            DualTerm::Conjugate {
                conj: fs,
                primal: None,
            },
            g,
            LinearOperator::identity(1),
        );
        assert_eq!(p.lagrangian(&v(&[0.0]), &v(&[0.0])), 0.0);
        // f = |·| recovered from the box conjugate
        assert_eq!(p.primal_objective(&v(&[2.0])), 2.0 + 2.0);
    }
}
