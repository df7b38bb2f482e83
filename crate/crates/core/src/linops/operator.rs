use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Boundary, Vector};
use crate::error::{Error, Result};

pub const DEFAULT_NORM_TOL: f64 = 1e-8;
pub const DEFAULT_NORM_MAX_ITER: usize = 10_000;
pub const DEFAULT_NORM_SEED: u64 = 0x5eed;

/// Anything with an `apply`/`adjoint` pair.
///
/// The `*_raw` methods assume correctly sized input; the provided checked
/// variants validate lengths first.
pub trait LinearMap: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply_raw(&self, x: &Vector) -> Vector;
    fn adjoint_raw(&self, y: &Vector) -> Vector;

    fn apply(&self, x: &Vector) -> Result<Vector> {
        x.check_len(self.in_dim(), "operator apply")?;
        Ok(self.apply_raw(x))
    }

    fn adjoint(&self, y: &Vector) -> Result<Vector> {
        y.check_len(self.out_dim(), "operator adjoint")?;
        Ok(self.adjoint_raw(y))
    }

    /// `K*K x`
    fn normal_raw(&self, x: &Vector) -> Vector {
        self.adjoint_raw(&self.apply_raw(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    DenseMatrix,
    Grad2d,
    Mask,
    CircularConv,
    Stack,
    Scale,
    Identity,
    Composition,
}

/// Serializable description of an operator, as found in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    Identity {
        dim: usize,
    },
    Scale {
        dim: usize,
        factor: f64,
    },
    DenseMatrix {
        rows: Vec<Vec<f64>>,
    },
    Grad2d {
        rows: usize,
        cols: usize,
        #[serde(default)]
        boundary: Boundary,
    },
    Mask {
        pattern: Vec<bool>,
    },
    CircularConv {
        rows: usize,
        cols: usize,
        kernel: Vec<Vec<f64>>,
        #[serde(default)]
        center: Option<[usize; 2]>,
    },
    Stack {
        ops: Vec<OperatorSpec>,
    },
    Composition {
        factors: Vec<OperatorSpec>,
    },
}

#[derive(Clone)]
enum Repr {
    Identity,
    Scale(f64),
    Dense(Arc<[f64]>),
    Grad2d {
        rows: usize,
        cols: usize,
        boundary: Boundary,
    },
    Mask(Arc<[bool]>),
    CircularConv {
        rows: usize,
        cols: usize,
        taps: Arc<[(isize, isize, f64)]>,
    },
    Stack(Vec<LinearOperator>),
    /// Factors in application order reversed: `[A, B]` means `A ∘ B`.
    Composition(Vec<LinearOperator>),
}

/// An immutable linear operator with a lazily cached norm estimate.
#[derive(Clone)]
pub struct LinearOperator {
    in_dim: usize,
    out_dim: usize,
    repr: Repr,
    cached_norm: Arc<OnceLock<NormEstimate>>,
}

impl fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearOperator")
            .field("kind", &self.kind())
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .finish()
    }
}

impl LinearOperator {
    fn build(in_dim: usize, out_dim: usize, repr: Repr) -> Self {
        LinearOperator {
            in_dim,
            out_dim,
            repr,
            cached_norm: Arc::new(OnceLock::new()),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::build(dim, dim, Repr::Identity)
    }

    pub fn scale(dim: usize, factor: f64) -> Self {
        Self::build(dim, dim, Repr::Scale(factor))
    }

    /// Row-major dense matrix with `rows × cols` entries.
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidValue("dense matrix must be non-empty".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::dims("dense matrix entries", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("dense matrix has non-finite entries".into()));
        }
        Ok(Self::build(cols, rows, Repr::Dense(data.into())))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::dims(format!("dense matrix row {i}"), ncols, r.len()));
            }
        }
        Self::dense(rows.len(), ncols, rows.concat())
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let n = entries.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in entries.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self::dense(n, n, data)
    }

    /// Forward differences stacked as `[horizontal; vertical]`, output size `2·rows·cols`.
    pub fn grad2d(rows: usize, cols: usize, boundary: Boundary) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidValue("grad2d needs positive rows and cols".into()));
        }
        let n = rows * cols;
        Ok(Self::build(n, 2 * n, Repr::Grad2d { rows, cols, boundary }))
    }

    pub fn mask(pattern: Vec<bool>) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::InvalidValue("mask pattern is empty".into()));
        }
        let n = pattern.len();
        Ok(Self::build(n, n, Repr::Mask(pattern.into())))
    }

    /// Periodic 2-d convolution with a `krows × kcols` kernel whose origin
    /// sits at `center` (defaults to `(0, 0)`).
    pub fn circular_conv(
        rows: usize,
        cols: usize,
        kernel: &[f64],
        krows: usize,
        kcols: usize,
        center: (usize, usize),
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || krows == 0 || kcols == 0 {
            return Err(Error::InvalidValue("convolution dims must be positive".into()));
        }
        if kernel.len() != krows * kcols {
            return Err(Error::dims("convolution kernel", krows * kcols, kernel.len()));
        }
        if center.0 >= krows || center.1 >= kcols {
            return Err(Error::InvalidValue("kernel center outside kernel".into()));
        }
        let taps: Vec<(isize, isize, f64)> = (0..krows)
            .flat_map(|a| (0..kcols).map(move |b| (a, b)))
            .filter_map(|(a, b)| {
                let w = kernel[a * kcols + b];
                (w != 0.0).then(|| (a as isize - center.0 as isize, b as isize - center.1 as isize, w))
            })
            .collect();
        let n = rows * cols;
        Ok(Self::build(n, n, Repr::CircularConv { rows, cols, taps: taps.into() }))
    }

    /// Vertical stack `[A; B; ...]`; all blocks must share the input dimension.
    pub fn stack(ops: Vec<LinearOperator>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidValue("stack needs at least one operator".into()))?;
        let in_dim = first.in_dim;
        for (i, op) in ops.iter().enumerate() {
            if op.in_dim != in_dim {
                return Err(Error::dims(format!("stack block {i} input"), in_dim, op.in_dim));
            }
        }
        let out_dim = ops.iter().map(|o| o.out_dim).sum();
        Ok(Self::build(in_dim, out_dim, Repr::Stack(ops)))
    }

    /// `factors[0] ∘ factors[1] ∘ ...` (the last factor is applied first).
    pub fn compose(factors: Vec<LinearOperator>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidValue("composition needs at least one factor".into()));
        }
        for w in factors.windows(2) {
            if w[0].in_dim != w[1].out_dim {
                return Err(Error::dims("composition factor chain", w[0].in_dim, w[1].out_dim));
            }
        }
        let in_dim = factors.last().map(|f| f.in_dim).unwrap_or(0);
        let out_dim = factors[0].out_dim;
        Ok(Self::build(in_dim, out_dim, Repr::Composition(factors)))
    }

    pub fn from_spec(spec: &OperatorSpec) -> Result<Self> {
        match spec {
            OperatorSpec::Identity { dim } => Ok(Self::identity(*dim)),
            OperatorSpec::Scale { dim, factor } => Ok(Self::scale(*dim, *factor)),
            OperatorSpec::DenseMatrix { rows } => Self::from_rows(rows),
            OperatorSpec::Grad2d { rows, cols, boundary } => Self::grad2d(*rows, *cols, *boundary),
            OperatorSpec::Mask { pattern } => Self::mask(pattern.clone()),
            OperatorSpec::CircularConv {
                rows,
                cols,
                kernel,
                center,
            } => {
                let krows = kernel.len();
                let kcols = kernel.first().map(Vec::len).unwrap_or(0);
                if kernel.iter().any(|r| r.len() != kcols) {
                    return Err(Error::InvalidValue("kernel rows have unequal length".into()));
                }
                let c = center.unwrap_or([0, 0]);
                Self::circular_conv(*rows, *cols, &kernel.concat(), krows, kcols, (c[0], c[1]))
            }
            OperatorSpec::Stack { ops } => Self::stack(ops.iter().map(Self::from_spec).collect::<Result<_>>()?),
            OperatorSpec::Composition { factors } => {
                Self::compose(factors.iter().map(Self::from_spec).collect::<Result<_>>()?)
            }
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self.repr {
            Repr::Identity => OperatorKind::Identity,
            Repr::Scale(_) => OperatorKind::Scale,
            Repr::Dense(_) => OperatorKind::DenseMatrix,
            Repr::Grad2d { .. } => OperatorKind::Grad2d,
            Repr::Mask(_) => OperatorKind::Mask,
            Repr::CircularConv { .. } => OperatorKind::CircularConv,
            Repr::Stack(_) => OperatorKind::Stack,
            Repr::Composition(_) => OperatorKind::Composition,
        }
    }

    /// Diagonal entries when the operator is known to be diagonal
    /// (identity, scale, mask, and compositions of those).
    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        match &self.repr {
            Repr::Identity => Some(vec![1.0; self.in_dim]),
            Repr::Scale(c) => Some(vec![*c; self.in_dim]),
            Repr::Mask(p) => Some(p.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()),
            Repr::Dense(data) if self.in_dim == self.out_dim => {
                let n = self.in_dim;
                let off_diag_zero = (0..n).all(|i| (0..n).all(|j| i == j || data[i * n + j] == 0.0));
                off_diag_zero.then(|| (0..n).map(|i| data[i * n + i]).collect())
            }
            Repr::Composition(fs) => {
                let mut d = vec![1.0; self.in_dim];
                for f in fs {
                    let fd = f.diagonal_entries()?;
                    d.iter_mut().zip(fd).for_each(|(a, b)| *a *= b);
                }
                Some(d)
            }
            _ => None,
        }
    }

    /// Uniform factor `c` when the operator is `c·Id`.
    pub fn scalar_multiple_of_identity(&self) -> Option<f64> {
        match &self.repr {
            Repr::Identity => Some(1.0),
            Repr::Scale(c) => Some(*c),
            Repr::Composition(fs) => fs.iter().try_fold(1.0, |acc, f| f.scalar_multiple_of_identity().map(|c| acc * c)),
            _ => None,
        }
    }

    /// Cached operator norm, computed with the default power-iteration settings.
    pub fn norm(&self) -> f64 {
        self.estimate_norm(DEFAULT_NORM_TOL, DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_SEED)
            .value
    }

    /// Returns the cached estimate if present, otherwise runs power
    /// iteration with the given settings and caches the result.
    pub fn estimate_norm(&self, tol: f64, max_iter: usize, seed: u64) -> NormEstimate {
        *self.cached_norm.get_or_init(|| {
            if let Some(c) = self.scalar_multiple_of_identity() {
                return NormEstimate {
                    value: c.abs(),
                    converged: true,
                    iterations: 0,
                };
            }
            if let Some(d) = self.diagonal_entries() {
                return NormEstimate {
                    value: d.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
                    converged: true,
                    iterations: 0,
                };
            }
            operator_norm(self, tol, max_iter, seed)
        })
    }

    pub fn cached_norm(&self) -> Option<f64> {
        self.cached_norm.get().map(|e| e.value)
    }

    /// Dense row-major representation, built column by column.
    pub fn to_dense(&self) -> Vec<f64> {
        let (m, n) = (self.out_dim, self.in_dim);
        let mut data = vec![0.0; m * n];
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            let col = self.apply_raw(&e);
            for i in 0..m {
                data[i * n + j] = col[i];
            }
        }
        data
    }
}

impl LinearMap for LinearOperator {
    fn in_dim(&self) -> usize {
        self.in_dim
    }

    fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn apply_raw(&self, x: &Vector) -> Vector {
        match &self.repr {
            Repr::Identity => x.clone(),
            Repr::Scale(c) => x.scale(*c),
            Repr::Dense(a) => {
                let n = self.in_dim;
                let xs = x.as_slice();
                Vector::from_vec(
                    a.chunks_exact(n)
                        .map(|row| row.iter().zip(xs).map(|(r, v)| r * v).sum())
                        .collect(),
                )
            }
            Repr::Grad2d { rows, cols, boundary } => grad_apply(x, *rows, *cols, *boundary),
            Repr::Mask(p) => Vector::from_vec(
                x.iter()
                    .zip(p.iter())
                    .map(|(&v, &keep)| if keep { v } else { 0.0 })
                    .collect(),
            ),
            Repr::CircularConv { rows, cols, taps } => conv_apply(x, *rows, *cols, taps, false),
            Repr::Stack(ops) => Vector::concat(&ops.iter().map(|o| o.apply_raw(x)).collect::<Vec<_>>()),
            Repr::Composition(fs) => {
                let mut v = x.clone();
                for f in fs.iter().rev() {
                    v = f.apply_raw(&v);
                }
                v
            }
        }
    }

    fn adjoint_raw(&self, y: &Vector) -> Vector {
        match &self.repr {
            Repr::Identity => y.clone(),
            Repr::Scale(c) => y.scale(*c),
            Repr::Dense(a) => {
                let n = self.in_dim;
                let mut out = vec![0.0; n];
                for (row, &yi) in a.chunks_exact(n).zip(y.iter()) {
                    if yi != 0.0 {
                        out.iter_mut().zip(row).for_each(|(o, r)| *o += r * yi);
                    }
                }
                Vector::from_vec(out)
            }
            Repr::Grad2d { rows, cols, boundary } => grad_adjoint(y, *rows, *cols, *boundary),
            Repr::Mask(_) => self.apply_raw(y),
            Repr::CircularConv { rows, cols, taps } => conv_apply(y, *rows, *cols, taps, true),
            Repr::Stack(ops) => {
                let mut out = Vector::zeros(self.in_dim);
                let mut offset = 0;
                for op in ops {
                    let part = y.slice(offset..offset + op.out_dim);
                    out.axpy(1.0, &op.adjoint_raw(&part));
                    offset += op.out_dim;
                }
                out
            }
            Repr::Composition(fs) => {
                let mut v = y.clone();
                for f in fs {
                    v = f.adjoint_raw(&v);
                }
                v
            }
        }
    }
}

/// Visits every difference pair `(from, to)` of the discrete gradient together
/// with its output slot; a pair contributes `x[to] - x[from]`.
fn for_each_difference(rows: usize, cols: usize, boundary: Boundary, mut visit: impl FnMut(usize, usize, usize)) {
    let n = rows * cols;
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            if j + 1 < cols {
                visit(k, k, i * cols + j + 1);
            } else if boundary == Boundary::Periodic && cols > 1 {
                visit(k, k, i * cols);
            }
            if i + 1 < rows {
                visit(n + k, k, (i + 1) * cols + j);
            } else if boundary == Boundary::Periodic && rows > 1 {
                visit(n + k, k, j);
            }
        }
    }
}

fn grad_apply(x: &Vector, rows: usize, cols: usize, boundary: Boundary) -> Vector {
    let mut out = vec![0.0; 2 * rows * cols];
    for_each_difference(rows, cols, boundary, |slot, from, to| out[slot] = x[to] - x[from]);
    Vector::from_vec(out)
}

fn grad_adjoint(p: &Vector, rows: usize, cols: usize, boundary: Boundary) -> Vector {
    let mut out = vec![0.0; rows * cols];
    for_each_difference(rows, cols, boundary, |slot, from, to| {
        out[to] += p[slot];
        out[from] -= p[slot];
    });
    Vector::from_vec(out)
}

fn conv_apply(x: &Vector, rows: usize, cols: usize, taps: &[(isize, isize, f64)], adjoint: bool) -> Vector {
    let (r, c) = (rows as isize, cols as isize);
    let sign = if adjoint { 1 } else { -1 };
    let mut out = vec![0.0; rows * cols];
    for i in 0..r {
        for j in 0..c {
            let mut acc = 0.0;
            for &(di, dj, w) in taps {
                let si = (i + sign * di).rem_euclid(r);
                let sj = (j + sign * dj).rem_euclid(c);
                acc += w * x[(si * c + sj) as usize];
            }
            out[(i * c + j) as usize] = acc;
        }
    }
    Vector::from_vec(out)
}

/// Result of a power-iteration norm estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on `K*K` from a seeded Gaussian start. Returns the square
/// root of the Rayleigh quotient once its relative change drops below `tol`;
/// when `max_iter` runs out the best estimate is returned flagged as
/// non-converged.
pub fn operator_norm(op: &dyn LinearMap, tol: f64, max_iter: usize, seed: u64) -> NormEstimate {
    assert!(tol > 0.0, "operator_norm tolerance must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vector::random_normal(op.in_dim(), 1.0, &mut rng);
    let nv = v.norm();
    v = v.scale(1.0 / nv);
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let w = op.normal_raw(&v);
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return NormEstimate {
                value: 0.0,
                converged: true,
                iterations: it,
            };
        }
        v = w.scale(1.0 / wn);
        if it > 1 && (next - lambda).abs() <= tol * next.abs() {
            return NormEstimate {
                value: next.max(0.0).sqrt(),
                converged: true,
                iterations: it,
            };
        }
        lambda = next;
    }
    NormEstimate {
        value: lambda.max(0.0).sqrt(),
        converged: false,
        iterations: max_iter,
    }
}

/// Outcome of the randomized adjoint test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    pub trials: usize,
    pub max_defect: f64,
    pub pass: bool,
}

pub const ADJOINT_TOL: f64 = 1e-10;

/// Draws `trials` random pairs and measures
/// `|<Kx, y> - <x, K*y>| / (1 + |x||y|)`.
pub fn adjoint_consistency_check(op: &dyn LinearMap, trials: usize, seed: u64) -> AdjointReport {
    let trials = trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_defect: f64 = 0.0;
    for _ in 0..trials {
        let x = Vector::random_normal(op.in_dim(), 1.0, &mut rng);
        let y = Vector::random_normal(op.out_dim(), 1.0, &mut rng);
        let lhs = op.apply_raw(&x).dot(&y);
        let rhs = x.dot(&op.adjoint_raw(&y));
        let defect = (lhs - rhs).abs() / (1.0 + x.norm() * y.norm());
        max_defect = max_defect.max(if defect.is_nan() { f64::INFINITY } else { defect });
    }
    AdjointReport {
        trials,
        max_defect,
        pass: max_defect <= ADJOINT_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn identity_apply() {
        let id = LinearOperator::identity(3);
        assert_eq!(id.apply(&v(&[1., 2., 3.])).unwrap(), v(&[1., 2., 3.]));
    }

    #[test]
    fn grad2d_neumann_row() {
        let g = LinearOperator::grad2d(1, 3, Boundary::Neumann).unwrap();
        let out = g.apply(&v(&[1., 2., 4.])).unwrap();
        assert_eq!(out.as_slice(), &[1., 2., 0., 0., 0., 0.]);
        assert_eq!(g.out_dim(), 6);
    }

    #[test]
    fn mask_apply_and_adjoint() {
        let m = LinearOperator::mask(vec![true, false, true]).unwrap();
        assert_eq!(m.apply(&v(&[5., 6., 7.])).unwrap(), v(&[5., 0., 7.]));
        let m2 = LinearOperator::mask(vec![true, false]).unwrap();
        assert_eq!(m2.adjoint(&v(&[4., 9.])).unwrap(), v(&[4., 0.]));
    }

    #[test]
    fn dense_apply_and_transpose() {
        let a = LinearOperator::from_rows(&[vec![2., 0.], vec![0., 3.]]).unwrap();
        assert_eq!(a.apply(&v(&[1., 1.])).unwrap(), v(&[2., 3.]));
        let b = LinearOperator::from_rows(&[vec![1., 2.], vec![3., 4.]]).unwrap();
        assert_eq!(b.adjoint(&v(&[1., 0.])).unwrap(), v(&[1., 2.]));
    }

    #[test]
    fn delta_kernel_is_identity() {
        let k = LinearOperator::circular_conv(1, 3, &[1., 0., 0.], 1, 3, (0, 0)).unwrap();
        let x = v(&[0.3, -1.0, 7.5]);
        assert_eq!(k.apply(&x).unwrap(), x);
    }

    #[test]
    fn composition_of_scalings() {
        let c = LinearOperator::compose(vec![LinearOperator::scale(1, 2.0), LinearOperator::scale(1, 3.0)]).unwrap();
        assert_eq!(c.apply(&v(&[1.0])).unwrap(), v(&[6.0]));
    }

    #[test]
    fn grad_adjoint_of_zero_is_zero() {
        let g = LinearOperator::grad2d(3, 4, Boundary::Neumann).unwrap();
        assert_eq!(g.adjoint(&Vector::zeros(24)).unwrap(), Vector::zeros(12));
    }

    #[test]
    fn length_mismatch_is_error() {
        let g = LinearOperator::grad2d(2, 2, Boundary::Neumann).unwrap();
        let err = g.apply(&Vector::zeros(3)).unwrap_err();
        assert!(err.to_string().contains("expected 4"));
        assert!(g.adjoint(&Vector::zeros(4)).is_err());
    }

    #[test]
    fn construction_errors_name_dimensions() {
        let e = LinearOperator::stack(vec![LinearOperator::identity(2), LinearOperator::identity(3)]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains('2') && msg.contains('3'), "{msg}");
        assert!(LinearOperator::compose(vec![LinearOperator::identity(2), LinearOperator::identity(3)]).is_err());
        assert!(LinearOperator::dense(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn norms_of_simple_operators() {
        let d = LinearOperator::diagonal(&[2.0, 3.0]).unwrap();
        assert!((d.norm() - 3.0).abs() < 1e-6);
        assert_eq!(LinearOperator::identity(5).norm(), 1.0);
        assert_eq!(d.cached_norm().map(|n| (n - 3.0).abs() < 1e-6), Some(true));
    }

    #[test]
    fn periodic_gradient_norm_matches_enumeration() {
        // Eigenvalues of K*K for the periodic gradient on an n×n grid are
        // (2 - 2cos(2πk/n)) + (2 - 2cos(2πl/n)); enumerate them at n = 4.
        let n = 4;
        let mut max_eig: f64 = 0.0;
        for k in 0..n {
            for l in 0..n {
                let t = |m: usize| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos();
                max_eig = max_eig.max(t(k) + t(l));
            }
        }
        let g = LinearOperator::grad2d(n, n, Boundary::Periodic).unwrap();
        let est = operator_norm(&g, 1e-12, 10_000, 3);
        assert!(est.converged);
        assert!((est.value - max_eig.sqrt()).abs() < 1e-6, "{} vs {}", est.value, max_eig.sqrt());
        assert!(est.value <= 8f64.sqrt() + 1e-9);
    }

    #[test]
    fn non_converged_flag() {
        let g = LinearOperator::grad2d(16, 16, Boundary::Neumann).unwrap();
        let est = operator_norm(&g, 1e-15, 3, 1);
        assert!(!est.converged);
        assert_eq!(est.iterations, 3);
        assert!(est.value > 0.0);
    }

    #[test]
    fn adjoint_checks() {
        let id = LinearOperator::identity(4);
        let r = adjoint_consistency_check(&id, 10, 1);
        assert_eq!(r.max_defect, 0.0);
        assert!(r.pass);
        let g = LinearOperator::grad2d(4, 4, Boundary::Neumann).unwrap();
        assert!(adjoint_consistency_check(&g, 100, 2).pass);
    }

    #[test]
    fn spec_roundtrip_through_json() {
        let spec = OperatorSpec::Stack {
            ops: vec![
                OperatorSpec::Mask { pattern: vec![true, false, true, true] },
                OperatorSpec::Grad2d { rows: 2, cols: 2, boundary: Boundary::Periodic },
            ],
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: OperatorSpec = serde_json::from_str(&json).unwrap();
        let op = LinearOperator::from_spec(&back).unwrap();
        assert_eq!(op.in_dim(), 4);
        assert_eq!(op.out_dim(), 12);
        assert_eq!(op.kind(), OperatorKind::Stack);
    }

    #[test]
    fn to_dense_matches_apply() {
        let g = LinearOperator::grad2d(2, 2, Boundary::Neumann).unwrap();
        let d = g.to_dense();
        let dense = LinearOperator::dense(8, 4, d).unwrap();
        let x = v(&[1.0, -2.0, 0.5, 4.0]);
        assert_eq!(dense.apply(&x).unwrap(), g.apply(&x).unwrap());
    }
}
