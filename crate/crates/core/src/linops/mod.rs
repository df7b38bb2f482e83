//! Vectors, image grids and linear operators.

mod io;
mod operator;

pub use io::{
    format_csv_grid, read_csv_grid, read_csv_matrix, read_image, read_pgm, write_csv_grid, write_image, write_pgm,
};
pub use operator::{
    adjoint_consistency_check, operator_norm, AdjointReport, LinearMap, LinearOperator, NormEstimate,
    OperatorKind, OperatorSpec, DEFAULT_NORM_MAX_ITER, DEFAULT_NORM_SEED, DEFAULT_NORM_TOL,
};

use std::ops::{Index, IndexMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the ambient finite-dimensional Euclidean space.
///
/// Construction through [`Vector::new`] rejects empty and non-finite data;
/// arithmetic on already-built vectors does not re-check, so divergence shows
/// up as non-finite objective values in solver traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidValue("vector must have at least one entry".into()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite entry at index {i}")));
        }
        Ok(Vector(data))
    }

    /// Wraps data without validation. Used for intermediate results.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector(data)
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Vector(data.to_vec())
    }

    pub fn zeros(n: usize) -> Self {
        Vector(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Vector(vec![value; n])
    }

    /// Entries drawn i.i.d. from N(0, scale²) using Box-Muller on `rng`.
    pub fn random_normal<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Self {
        Vector((0..n).map(|_| scale * standard_normal(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dist(&self, other: &Vector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Vector {
        self.map(|a| c * a)
    }

    /// `self + c * other`
    pub fn add_scaled(&self, c: f64, other: &Vector) -> Vector {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// In place `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Vector) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    /// `a * self + b * other`
    pub fn lincomb(&self, a: f64, other: &Vector, b: f64) -> Vector {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Vector, f: impl Fn(f64, f64) -> f64) -> Vector {
        debug_assert_eq!(self.len(), other.len());
        Vector(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn concat(parts: &[Vector]) -> Vector {
        let mut out = Vec::with_capacity(parts.iter().map(Vector::len).sum());
        for p in parts {
            out.extend_from_slice(&p.0);
        }
        Vector(out)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Vector {
        Vector(self.0[range].to_vec())
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub(crate) fn check_len(&self, expected: usize, context: &str) -> Result<()> {
        if self.len() != expected {
            return Err(Error::dims(context, expected, self.len()));
        }
        Ok(())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl<'a> IntoIterator for &'a Vector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Standard normal draw by Box-Muller (one of the pair is discarded so the
/// stream consumption is fixed at two uniforms per sample).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.gen();
        if u > f64::MIN_POSITIVE {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Boundary handling of the discrete gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    /// Zero last difference.
    #[default]
    Neumann,
}

/// A row-major grayscale image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    boundary: Boundary,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>, boundary: Boundary) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidValue("image must have positive dimensions".into()));
        }
        if rows * cols != pixels.len() {
            return Err(Error::dims("image pixels", rows * cols, pixels.len()));
        }
        Ok(ImageGrid {
            rows,
            cols,
            pixels,
            boundary,
        })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        ImageGrid {
            rows,
            cols,
            pixels: vec![value; rows * cols],
            boundary: Boundary::default(),
        }
    }

    pub fn from_vector(rows: usize, cols: usize, v: &Vector, boundary: Boundary) -> Result<Self> {
        Self::new(rows, cols, v.as_slice().to_vec(), boundary)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.pixels[r * self.cols + c] = v;
    }

    pub fn to_vector(&self) -> Vector {
        Vector(self.pixels.clone())
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vector_rejects_empty_and_nan() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(Vector::new(vec![1.0]).is_ok());
    }

    #[test]
    fn inner_product_basics() {
        let x = Vector::from_slice(&[1.0, 2.0, 2.0]);
        let y = Vector::from_slice(&[0.5, -1.0, 3.0]);
        assert_eq!(x.dot(&y), y.dot(&x));
        assert_eq!(x.norm(), 3.0);
        assert_eq!(Vector::zeros(4).norm(), 0.0);
        assert_eq!(x.lincomb(2.0, &y, -1.0).as_slice(), &[1.5, 5.0, 1.0]);
    }

    #[test]
    fn image_flatten_roundtrip() {
        let img = ImageGrid::new(2, 3, vec![1., 2., 3., 4., 5., 6.], Boundary::Neumann).unwrap();
        assert_eq!(img.get(1, 0), 4.0);
        let v = img.to_vector();
        let back = ImageGrid::from_vector(2, 3, &v, Boundary::Neumann).unwrap();
        assert_eq!(img, back);
        assert!(ImageGrid::new(2, 2, vec![0.0; 3], Boundary::Neumann).is_err());
    }

    #[test]
    fn normal_draws_are_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let va = Vector::random_normal(100, 1.0, &mut a);
        let vb = Vector::random_normal(100, 1.0, &mut b);
        assert_eq!(va, vb);
        let m = va.mean();
        assert!(m.abs() < 0.4);
    }
}
