//! Small deterministic instances with known constants, used by the
//! acceptance suite and reachable from configuration files by name.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
use super::{
    build_lasso, build_poisson_editing, build_tv_denoise, build_tv_inverse, build_tvl1, build_wavelet_reg, haar_matrix,
    Metadata, Objective, ProblemInstance,
};
use crate::error::{Error, Result};
use crate::funcs::{Bounds, DoubleWell, HardThreshold, Indicator, L1Norm, ProxFn, Quadratic, SharedProx, SmoothFn};
use crate::linops::{Boundary, ImageGrid, LinearMap, LinearOperator, Vector};
use crate::solvers::{forward_backward, AdmmBlock, Inertia, SolverConfig};

/// Row-major `n × n` orthogonal matrix built from `rotations` random
/// Givens rotations.
pub fn givens_orthogonal(n: usize, rotations: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
    }
    if n < 2 {
        return q;
    }
    for _ in 0..rotations {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (c, s) = (th.cos(), th.sin());
        for k in 0..n {
            let (a, b) = (q[i * n + k], q[j * n + k]);
            q[i * n + k] = c * a - s * b;
            q[j * n + k] = s * a + c * b;
        }
    }
    q
}

/// `A = U diag(s) Vᵀ` of size `m × n` with orthogonal `U`, `V` from
/// Givens rotations. Returns `A` (row-major) and `V`.
pub fn designed_matrix(m: usize, n: usize, s: &[f64], seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = givens_orthogonal(m, 8 * m * m, &mut rng);
    let v = givens_orthogonal(n, 8 * n * n, &mut rng);
    let r = s.len().min(m).min(n);
    let mut a = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            a[i * n + j] = (0..r).map(|k| u[i * m + k] * s[k] * v[j * n + k]).sum();
        }
    }
    (a, v)
}

fn spread(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..count)
        .map(|k| if count == 1 { hi } else { hi - (hi - lo) * k as f64 / (count - 1) as f64 })
        .collect()
}

/// `½‖Ax − b‖²` with a 20 × 40 matrix of rank 20 (so `A*A` is singular),
/// singular values spread over `[0.1, 1]` and `b = A x_true`.
pub struct SingularQuadratic {
    pub f: Quadratic,
    pub x0: Vector,
    /// The minimizer closest to `x0 = 0`.
    pub x_star: Vector,
    pub f_star: f64,
    pub l: f64,
}

pub fn singular_quadratic() -> SingularQuadratic {
    let (m, n) = (20, 40);
    let (a, v) = designed_matrix(m, n, &spread(m, 0.1, 1.0), 101);
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let x_true = Vector::random_normal(n, 1.0, &mut rng);
    let op = LinearOperator::dense(m, n, a).expect("shape is consistent");
    let b = op.apply_raw(&x_true);
    // projection of x_true onto the row space spanned by the first m columns of V
    let mut x_star = Vector::zeros(n);
    for k in 0..m {
        let c: f64 = (0..n).map(|j| v[j * n + k] * x_true[j]).sum();
        for j in 0..n {
            x_star[j] += c * v[j * n + k];
        }
    }
    SingularQuadratic {
        f: Quadratic::new(op, b, 1.0).expect("positive scale"),
        x0: Vector::zeros(n),
        x_star,
        f_star: 0.0,
        l: 1.0,
    }
}

/// `½(x₁² + 10x₂²)`: `α = 1`, `L = 10`.
pub fn anisotropic_quadratic() -> Quadratic {
    Quadratic::new(LinearOperator::diagonal(&[1.0, 10f64.sqrt()]).expect("finite"), Vector::zeros(2), 1.0)
        .expect("positive scale")
}

/// Minimizer of `f + g` by a long accelerated run followed by a monotone
/// polish.
pub fn reference_minimizer(f: &dyn SmoothFn, g: &dyn ProxFn, x0: &Vector, iters: usize) -> Result<Vector> {
    let cfg = SolverConfig::default()
        .with_max_iter(iters)
        .with_keep_every(0)
        .with_residual_tol(1e-15)
        .with_inertia(Inertia::FistaT);
    let x = forward_backward(f, g, x0, &cfg)?.solution;
    let polish = SolverConfig::default().with_max_iter(iters / 10).with_keep_every(0).with_residual_tol(1e-16);
    Ok(forward_backward(f, g, &x, &polish)?.solution)
}

fn designed_lasso(m: usize, n: usize, s: &[f64], seed: u64, lambda: f64, alpha: Option<f64>) -> ProblemInstance {
    let (a, _) = designed_matrix(m, n, s, seed);
    let op = LinearOperator::dense(m, n, a).expect("shape is consistent");
    let data = generate_synthetic(&SyntheticSpec {
        kind: SyntheticKind::SparseVector,
        dims: vec![n],
        noise: 0.0,
        seed,
        density: Some(0.1),
    })
    .expect("valid synthetic spec");
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let y = op.apply_raw(&data.truth).add_scaled(0.05, &Vector::random_normal(m, 1.0, &mut rng));
    let inst = build_lasso(op.clone(), y.clone(), lambda, alpha).expect("valid lasso");
    let f = Quadratic::new(op, y, 1.0).expect("positive scale");
    let g = L1Norm::new(lambda).expect("positive weight");
    let x = reference_minimizer(&f, &g, &inst.x0, 200_000).expect("reference run");
    inst.with_reference(x).with_meta(Metadata {
        dims: vec![m, n],
        lambda,
        noise: 0.05,
        seed,
        expected_objective: None,
    })
}

/// LASSO with a designed 50 × 100 matrix (`L = 1`), `λ = 0.05`, and a
/// reference minimizer.
pub fn lasso() -> ProblemInstance {
    static CELL: OnceLock<ProblemInstance> = OnceLock::new();
    CELL.get_or_init(|| designed_lasso(50, 100, &spread(50, 0.2, 1.0), 7, 0.05, None)).clone()
}

/// LASSO with a square 30 × 30 matrix with singular values in `[0.5, 1]`,
/// so the data term is `0.25`-strongly convex with `L = 1`.
pub fn strongly_convex_lasso() -> ProblemInstance {
    static CELL: OnceLock<ProblemInstance> = OnceLock::new();
    CELL.get_or_init(|| designed_lasso(30, 30, &spread(30, 0.5, 1.0), 9, 0.05, Some(0.25))).clone()
}

pub const TV_LAMBDA: f64 = 0.1;

/// 8 × 8 step image with Gaussian noise `σ = 0.1`.
pub fn noisy_step_8x8() -> ImageGrid {
    let d = generate_synthetic(&SyntheticSpec {
        kind: SyntheticKind::StepImage,
        dims: vec![8, 8],
        noise: 0.1,
        seed: 1,
        density: None,
    })
    .expect("valid synthetic spec");
    d.observation_image().expect("image data")
}

fn image_meta(seed: u64, noise: f64) -> Metadata {
    Metadata {
        dims: vec![8, 8],
        lambda: TV_LAMBDA,
        noise,
        seed,
        expected_objective: None,
    }
}

pub fn tv_denoise_8x8() -> ProblemInstance {
    build_tv_denoise(&noisy_step_8x8(), TV_LAMBDA).expect("valid instance").with_meta(image_meta(1, 0.1))
}

pub fn tvl1_8x8() -> ProblemInstance {
    build_tvl1(&noisy_step_8x8(), TV_LAMBDA).expect("valid instance").with_meta(image_meta(1, 0.1))
}

/// Inpainting: half of the pixels of a noisy 8 × 8 step image observed.
pub fn tv_inverse_mask_8x8() -> ProblemInstance {
    let d = generate_synthetic(&SyntheticSpec {
        kind: SyntheticKind::MaskPattern,
        dims: vec![8, 8],
        noise: 0.05,
        seed: 2,
        density: None,
    })
    .expect("valid synthetic spec");
    let op = LinearOperator::from_spec(&d.operator).expect("valid operator");
    build_tv_inverse(op, d.observation, 8, 8, TV_LAMBDA).expect("valid instance").with_meta(image_meta(2, 0.05))
}

/// Flat target with a horizontal-ramp guidance field inside a 6 × 6 region.
pub fn poisson_8x8() -> ProblemInstance {
    let target = ImageGrid::filled(8, 8, 0.5);
    let ramp = Vector::from_vec((0..64).map(|i| (i % 8) as f64 / 7.0).collect());
    let grad = LinearOperator::grad2d(8, 8, Boundary::Neumann).expect("positive dims");
    let omega: Vec<bool> = (0..64).map(|i| (1..7).contains(&(i / 8)) && (1..7).contains(&(i % 8))).collect();
    build_poisson_editing(&grad.apply_raw(&ramp), &target, &omega).expect("valid instance")
}

/// Haar-sparse denoising of a length-16 signal.
pub fn wavelet_16() -> ProblemInstance {
    let t = haar_matrix(16).expect("power of two");
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let coeffs = Vector::from_vec((0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect());
    let y = t.adjoint_raw(&coeffs).add_scaled(0.05, &Vector::random_normal(16, 1.0, &mut rng));
    build_wavelet_reg(LinearOperator::identity(16), y, TV_LAMBDA, t).expect("valid instance")
}

pub const BUILTIN_NAMES: &[&str] = &[
    "lasso",
    "strongly_convex_lasso",
    "tv_denoise_8x8",
    "tvl1_8x8",
    "tv_inverse_mask_8x8",
    "poisson_8x8",
    "wavelet_16",
];

/// Built-in instance by name.
pub fn builtin(name: &str) -> Result<ProblemInstance> {
    Ok(match name {
        "lasso" => lasso(),
        "strongly_convex_lasso" => strongly_convex_lasso(),
        "tv_denoise_8x8" => tv_denoise_8x8(),
        "tvl1_8x8" => tvl1_8x8(),
        "tv_inverse_mask_8x8" => tv_inverse_mask_8x8(),
        "poisson_8x8" => poisson_8x8(),
        "wavelet_16" => wavelet_16(),
        other => {
            return Err(Error::Config(format!(
                "problem.builtin: unknown fixture '{other}'; available: {}",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

/// Double-well `¼(x² − 1)²`-type potential with `L = 2`, run with
/// `γ = 0.1` from `x0 = 0.5`.
pub struct DoubleWellFixture {
    pub f: DoubleWell,
    pub x0: Vector,
    pub gamma: f64,
    pub l: f64,
}

pub fn double_well() -> DoubleWellFixture {
    DoubleWellFixture {
        f: DoubleWell::new(),
        x0: Vector::from_slice(&[0.5]),
        gamma: 0.1,
        l: 2.0,
    }
}

/// `½(x − 3)² + ‖x‖₀` with `γ = 0.5`.
pub struct HardThresholdFixture {
    pub f: Quadratic,
    pub g: HardThreshold,
    pub x0: Vector,
    pub gamma: f64,
    pub l: f64,
}

pub fn hard_threshold() -> HardThresholdFixture {
    HardThresholdFixture {
        f: Quadratic::centered(Vector::from_slice(&[3.0]), 1.0).expect("positive scale"),
        g: HardThreshold { weight: 1.0 },
        x0: Vector::from_slice(&[0.2]),
        gamma: 0.5,
        l: 1.0,
    }
}

/// Rotation of the plane by 90°, a nonexpansive map with the single fixed
/// point 0.
pub fn rotation_90() -> LinearOperator {
    LinearOperator::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).expect("rectangular")
}

/// `min f(x) + g(y)` subject to `x − y = 0`.
pub struct ConsensusFixture {
    pub name: String,
    pub f: AdmmBlock,
    pub g: AdmmBlock,
    pub b: Vector,
    pub objective: Objective,
    pub x_star: Vector,
    pub f_star: f64,
}

fn consensus(name: &str, m: usize, n: usize, seed: u64, g: SharedProx) -> ConsensusFixture {
    let (a, _) = designed_matrix(m, n, &spread(n.min(m), 0.3, 1.0), seed);
    let op = LinearOperator::dense(m, n, a).expect("shape is consistent");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = Vector::random_normal(m, 1.0, &mut rng);
    let f = Arc::new(Quadratic::new(op, y, 1.0).expect("positive scale"));
    let x_star = reference_minimizer(f.as_ref(), g.as_ref(), &Vector::zeros(n), 100_000).expect("reference run");
    let objective: Objective = {
        let (f, g) = (f.clone(), g.clone());
        Arc::new(move |x: &Vector| SmoothFn::value(f.as_ref(), x) + g.value(x))
    };
    let f_star = objective(&x_star);
    ConsensusFixture {
        name: name.into(),
        f: AdmmBlock::new(f, LinearOperator::identity(n)),
        g: AdmmBlock::new(g, LinearOperator::scale(n, -1.0)),
        b: Vector::zeros(n),
        objective,
        x_star,
        f_star,
    }
}

/// LASSO split as `f(x) = ½‖Ax − y‖²`, `g(y) = 0.1‖y‖₁`.
pub fn consensus_lasso() -> ConsensusFixture {
    consensus("consensus_lasso", 30, 20, 21, Arc::new(L1Norm::new(0.1).expect("positive weight")))
}

/// Box-constrained least squares split as `f(x) = ½‖Ax − y‖²`, `g = ι_[−½,½]ⁿ`.
pub fn consensus_box() -> ConsensusFixture {
    let g = Indicator::from_bounds(Bounds::uniform(-0.5, 0.5));
    consensus("consensus_box", 25, 15, 22, Arc::new(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn designed_matrix_has_requested_spectrum() {
        let (a, v) = designed_matrix(3, 5, &[2.0, 1.0, 0.5], 4);
        let op = LinearOperator::dense(3, 5, a).unwrap();
        assert!((op.norm() - 2.0).abs() < 1e-8);
        for k in 0..5 {
            let col = Vector::from_vec((0..5).map(|j| v[j * 5 + k]).collect());
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_quadratic_minimizer() {
        let s = singular_quadratic();
        assert!(SmoothFn::value(&s.f, &s.x_star) < 1e-20);
        assert!(SmoothFn::gradient(&s.f, &s.x_star).norm() < 1e-12);
        assert!((SmoothFn::lipschitz(&s.f) - s.l).abs() < 1e-6);
    }

    #[test]
    fn builtin_names_resolve() {
        for name in BUILTIN_NAMES.iter().filter(|n| !n.contains("lasso")) {
            assert!(builtin(name).is_ok(), "{name}");
        }
        assert!(builtin("nope").is_err());
    }
}
