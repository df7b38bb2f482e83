use std::sync::Arc;

use super::{Metadata, Objective, ProblemInstance, Recipe};
use crate::error::{Error, Result};
use crate::funcs::{
    Bounds, ComposedOrthogonal, DualTerm, Indicator, L1Norm, L1Residual, Quadratic, SaddleProblem, Separable,
    SharedProx, SmoothFn, Zero,
};
use crate::linops::{Boundary, ImageGrid, LinearMap, LinearOperator, Vector};
use crate::solvers::{
    chambolle_pock, condat, douglas_rachford, forward_backward, ppxa, projected_gradient, CondatTerm, Inertia,
    PpxaPart, SolverConfig,
};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidValue(format!("lambda must be non-negative and finite, got {lambda}")));
    }
    Ok(())
}

fn with_inertia(cfg: &SolverConfig, inertia: Inertia) -> SolverConfig {
    SolverConfig {
        inertia,
        ..cfg.clone()
    }
}

fn forward_backward_recipes(
    f: Arc<Quadratic>,
    g: SharedProx,
    x0: &Vector,
    objective: &Objective,
    vfista: Option<f64>,
) -> Vec<Recipe> {
    let mut out = Vec::new();
    for (name, inertia) in [("fb", Inertia::None), ("fista", Inertia::FistaT)] {
        let (f, g, x0) = (f.clone(), g.clone(), x0.clone());
        out.push(Recipe::new(name, objective.clone(), move |cfg| {
            forward_backward(f.as_ref(), g.as_ref(), &x0, &with_inertia(cfg, inertia))
        }));
    }
    if let Some(alpha) = vfista {
        let (f, g, x0) = (f.clone(), g.clone(), x0.clone());
        out.push(Recipe::new("vfista", objective.clone(), move |cfg| {
            let mut c = with_inertia(cfg, Inertia::Vfista);
            c.strong_convexity = c.strong_convexity.or(Some(alpha));
            forward_backward(f.as_ref(), g.as_ref(), &x0, &c)
        }));
    }
    out
}

fn l1_term(lambda: f64) -> Result<SharedProx> {
    Ok(if lambda > 0.0 { Arc::new(L1Norm::new(lambda)?) } else { Arc::new(Zero) })
}

/// `½‖Ax − y‖² + λ‖x‖₁`.
///
/// Recipes: `fb`, `fista`, `dr` (the quadratic prox is a linear solve) and
/// `vfista` when a strong-convexity modulus `alpha` of `A*A` is supplied
/// or can be read off a diagonal `A`.
pub fn build_lasso(a: LinearOperator, y: Vector, lambda: f64, alpha: Option<f64>) -> Result<ProblemInstance> {
    check_lambda(lambda)?;
    let mut q = Quadratic::new(a, y, 1.0)?;
    if let Some(al) = alpha {
        if !(al > 0.0) {
            return Err(Error::InvalidValue(format!("strong-convexity modulus must be positive, got {al}")));
        }
        q = q.with_strong_convexity(al);
    }
    let vfista = SmoothFn::strong_convexity(&q);
    let f = Arc::new(q);
    let g = l1_term(lambda)?;
    let objective: Objective = {
        let (f, g) = (f.clone(), g.clone());
        Arc::new(move |x: &Vector| SmoothFn::value(f.as_ref(), x) + g.value(x))
    };
    let x0 = Vector::zeros(f.dim());
    let mut recipes = forward_backward_recipes(f.clone(), g.clone(), &x0, &objective, vfista);
    {
        let (f, g, x0) = (f.clone(), g.clone(), x0.clone());
        recipes.push(Recipe::new("dr", objective.clone(), move |cfg| {
            douglas_rachford(f.as_ref(), g.as_ref(), &x0, cfg)
        }));
    }
    Ok(ProblemInstance {
        name: "lasso".into(),
        objective,
        recipes,
        x0,
        reference: None,
        meta: Metadata {
            dims: vec![f.operator().out_dim(), f.dim()],
            lambda,
            ..Default::default()
        },
    })
}

/// `p ↦ ½‖y + ∇*p‖²`, the smooth part of the dual TV problem.
struct DualTvData {
    grad: LinearOperator,
    y: Vector,
}

impl DualTvData {
    fn primal(&self, p: &Vector) -> Vector {
        self.y.add(&self.grad.adjoint_raw(p))
    }
}

impl SmoothFn for DualTvData {
    fn value(&self, p: &Vector) -> f64 {
        0.5 * self.primal(p).norm_sq()
    }

    fn gradient(&self, p: &Vector) -> Vector {
        self.grad.apply_raw(&self.primal(p))
    }

    fn lipschitz(&self) -> f64 {
        let n = self.grad.norm();
        n * n
    }

    fn name(&self) -> String {
        "dual_tv_data".into()
    }
}

struct TvParts {
    grad: LinearOperator,
    tv: SharedProx,
    objective: Objective,
}

fn tv_parts(data: SharedProx, grad: LinearOperator, lambda: f64, data_op: Option<LinearOperator>) -> Result<TvParts> {
    let tv = l1_term(lambda)?;
    let objective: Objective = {
        let (tv, grad) = (tv.clone(), grad.clone());
        Arc::new(move |x: &Vector| {
            let d = match &data_op {
                Some(a) => data.value(&a.apply_raw(x)),
                None => data.value(x),
            };
            d + tv.value(&grad.apply_raw(x))
        })
    };
    Ok(TvParts { grad, tv, objective })
}

/// `½‖x − y‖² + λ‖∇x‖₁` (anisotropic TV).
///
/// Recipes: `ppxa` on `(½‖· − y‖², λ‖·‖₁ ∘ ∇)`, `chambolle_pock` on the
/// saddle form with `f* = ι_{‖·‖∞ ≤ λ}`, `dual_fb` (forward-backward on
/// `min ½‖y + ∇*p‖² + ι_{‖p‖∞ ≤ λ}` with `x = y + ∇*p`) and `condat` with
/// the TV term dualized.
pub fn build_tv_denoise(y: &ImageGrid, lambda: f64) -> Result<ProblemInstance> {
    check_lambda(lambda)?;
    let (rows, cols) = (y.rows(), y.cols());
    let yv = y.to_vector();
    let quad = Arc::new(Quadratic::centered(yv.clone(), 1.0)?);
    let data: SharedProx = quad.clone();
    let TvParts { grad, tv, objective } = tv_parts(data.clone(), LinearOperator::grad2d(rows, cols, y.boundary())?, lambda, None)?;
    let ball: SharedProx = Arc::new(Indicator::linf_ball(lambda)?);
    let x0 = yv.clone();
    let mut recipes = Vec::new();
    {
        let parts = vec![PpxaPart::new(data.clone()), PpxaPart::with_operator(tv.clone(), grad.clone())];
        let x0 = x0.clone();
        recipes.push(Recipe::new("ppxa", objective.clone(), move |cfg| ppxa(&parts, &x0, cfg)));
    }
    {
        let prob = SaddleProblem::new(
            DualTerm::Conjugate {
                conj: ball.clone(),
                primal: Some(tv.clone()),
            },
            data.clone(),
            grad.clone(),
        );
        let obj: Objective = {
            let prob = prob.clone();
            Arc::new(move |x: &Vector| prob.primal_objective(x))
        };
        let x0 = x0.clone();
        let y0 = Vector::zeros(grad.out_dim());
        recipes.push(Recipe::new("chambolle_pock", obj, move |cfg| chambolle_pock(&prob, &x0, &y0, cfg)));
    }
    {
        let dual = Arc::new(DualTvData {
            grad: grad.clone(),
            y: yv.clone(),
        });
        let p0 = Vector::zeros(grad.out_dim());
        let (d, ball) = (dual.clone(), ball.clone());
        recipes.push(
            Recipe::new("dual_fb", objective.clone(), move |cfg| {
                forward_backward(d.as_ref(), ball.as_ref(), &p0, &cfg.clone().with_keep_every(1))
            })
            .recovering_dual(move |p| dual.primal(p)),
        );
    }
    {
        let terms = vec![CondatTerm::new(tv.clone(), grad.clone())];
        let (quad, x0) = (quad.clone(), x0.clone());
        recipes.push(Recipe::new("condat", objective.clone(), move |cfg| {
            condat(quad.as_ref(), &Zero, &terms, &x0, None, cfg)
        }));
    }
    Ok(ProblemInstance {
        name: "tv_denoise".into(),
        objective,
        recipes,
        x0,
        reference: None,
        meta: Metadata {
            dims: vec![rows, cols],
            lambda,
            ..Default::default()
        },
    })
}

/// `½‖Ax − y‖² + λ‖∇x‖₁` on a `rows × cols` grid with Neumann differences.
///
/// Recipes: `condat` (explicit gradient step on the data term, TV
/// dualized) and `chambolle_pock` with `K = [A; ∇]` and both terms dualized.
pub fn build_tv_inverse(a: LinearOperator, y: Vector, rows: usize, cols: usize, lambda: f64) -> Result<ProblemInstance> {
    check_lambda(lambda)?;
    if a.in_dim() != rows * cols {
        return Err(Error::dims("tv inverse operator input", rows * cols, a.in_dim()));
    }
    y.check_len(a.out_dim(), "tv inverse observation")?;
    let fit: SharedProx = Arc::new(Quadratic::centered(y.clone(), 1.0)?);
    let TvParts { grad, tv, objective } =
        tv_parts(fit.clone(), LinearOperator::grad2d(rows, cols, Boundary::Neumann)?, lambda, Some(a.clone()))?;
    let x0 = Vector::zeros(rows * cols);
    let mut recipes = Vec::new();
    {
        let quad = Arc::new(Quadratic::new(a.clone(), y.clone(), 1.0)?);
        let terms = vec![CondatTerm::new(tv.clone(), grad.clone())];
        let x0 = x0.clone();
        recipes.push(Recipe::new("condat", objective.clone(), move |cfg| {
            condat(quad.as_ref(), &Zero, &terms, &x0, None, cfg)
        }));
    }
    {
        let k = LinearOperator::stack(vec![a.clone(), grad.clone()])?;
        let f: SharedProx = Arc::new(Separable::from_lengths(vec![(fit.clone(), a.out_dim()), (tv.clone(), grad.out_dim())])?);
        let prob = SaddleProblem::new(DualTerm::Primal(f), Arc::new(Zero), k.clone());
        let obj: Objective = {
            let prob = prob.clone();
            Arc::new(move |x: &Vector| prob.primal_objective(x))
        };
        let x0 = x0.clone();
        let y0 = Vector::zeros(k.out_dim());
        recipes.push(Recipe::new("chambolle_pock", obj, move |cfg| chambolle_pock(&prob, &x0, &y0, cfg)));
    }
    Ok(ProblemInstance {
        name: "tv_inverse".into(),
        objective,
        recipes,
        x0,
        reference: None,
        meta: Metadata {
            dims: vec![rows, cols],
            lambda,
            ..Default::default()
        },
    })
}

/// `‖x − y‖₁ + λ‖∇x‖₁`.
///
/// Recipes: `chambolle_pock` with `g = ‖· − y‖₁`, and `dr`, Douglas-Rachford
/// on the pair `(x, z)` with `F(x, z) = ‖x − y‖₁ + λ‖z‖₁` and
/// `G = ι_{z = ∇x}`.
pub fn build_tvl1(y: &ImageGrid, lambda: f64) -> Result<ProblemInstance> {
    check_lambda(lambda)?;
    let (rows, cols) = (y.rows(), y.cols());
    let n = rows * cols;
    let yv = y.to_vector();
    let fit: SharedProx = Arc::new(L1Residual::new(1.0, yv.clone())?);
    let TvParts { grad, tv, objective } = tv_parts(fit.clone(), LinearOperator::grad2d(rows, cols, y.boundary())?, lambda, None)?;
    let x0 = yv.clone();
    let mut recipes = Vec::new();
    {
        let prob = SaddleProblem::new(
            DualTerm::Conjugate {
                conj: Arc::new(Indicator::linf_ball(lambda)?),
                primal: Some(tv.clone()),
            },
            fit.clone(),
            grad.clone(),
        );
        let obj: Objective = {
            let prob = prob.clone();
            Arc::new(move |x: &Vector| prob.primal_objective(x))
        };
        let x0 = x0.clone();
        let y0 = Vector::zeros(grad.out_dim());
        recipes.push(Recipe::new("chambolle_pock", obj, move |cfg| chambolle_pock(&prob, &x0, &y0, cfg)));
    }
    {
        let f = Separable::from_lengths(vec![(fit.clone(), n), (tv.clone(), grad.out_dim())])?;
        let g = Indicator::affine_graph(grad.clone());
        let start = Vector::concat(&[x0.clone(), grad.apply_raw(&x0)]);
        recipes.push(
            Recipe::new("dr", objective.clone(), move |cfg| douglas_rachford(&f, &g, &start, cfg))
                .recovering(move |v| v.slice(0..n)),
        );
    }
    Ok(ProblemInstance {
        name: "tvl1".into(),
        objective,
        recipes,
        x0,
        reference: None,
        meta: Metadata {
            dims: vec![rows, cols],
            lambda,
            ..Default::default()
        },
    })
}

/// Gradient components touching `Ω`: the forward difference at pixel `p`
/// in either direction is kept when `p` or its forward neighbour lies in `Ω`.
fn gradient_mask(rows: usize, cols: usize, omega: &[bool]) -> Vec<bool> {
    let n = rows * cols;
    let mut m = vec![false; 2 * n];
    for r in 0..rows {
        for c in 0..cols {
            let p = r * cols + c;
            m[p] = omega[p] || (c + 1 < cols && omega[p + 1]);
            m[n + p] = omega[p] || (r + 1 < rows && omega[p + cols]);
        }
    }
    m
}

/// Poisson image editing: `min ½‖∇x − s‖²_Ω` subject to `x = target`
/// outside `Ω`, solved by projected gradient. `source_grad` is the guidance
/// field in the layout of the discrete gradient (`2·rows·cols` entries).
pub fn build_poisson_editing(source_grad: &Vector, target: &ImageGrid, omega: &[bool]) -> Result<ProblemInstance> {
    let (rows, cols) = (target.rows(), target.cols());
    let n = rows * cols;
    if omega.len() != n {
        return Err(Error::dims("editing region", n, omega.len()));
    }
    source_grad.check_len(2 * n, "guidance field")?;
    if omega.iter().all(|&b| b) {
        log::warn!("editing region covers the whole grid; the boundary constraint is vacuous");
    }
    let tv = target.to_vector();
    let gmask = LinearOperator::mask(gradient_mask(rows, cols, omega))?;
    let grad = LinearOperator::grad2d(rows, cols, Boundary::Neumann)?;
    let op = LinearOperator::compose(vec![gmask.clone(), grad])?;
    let f = Arc::new(Quadratic::new(op, gmask.apply_raw(source_grad), 1.0)?);
    let lo: Vec<f64> = (0..n).map(|i| if omega[i] { f64::NEG_INFINITY } else { tv[i] }).collect();
    let hi: Vec<f64> = (0..n).map(|i| if omega[i] { f64::INFINITY } else { tv[i] }).collect();
    let c: SharedProx = Arc::new(Indicator::from_bounds(Bounds::new(lo, hi)?));
    let objective: Objective = {
        let (f, c) = (f.clone(), c.clone());
        Arc::new(move |x: &Vector| SmoothFn::value(f.as_ref(), x) + c.value(x))
    };
    let x0 = tv.clone();
    let recipe = {
        let x0 = x0.clone();
        Recipe::new("projected_gradient", objective.clone(), move |cfg| {
            projected_gradient(f.as_ref(), c.as_ref(), &x0, cfg)
        })
    };
    Ok(ProblemInstance {
        name: "poisson_editing".into(),
        objective,
        recipes: vec![recipe],
        x0,
        reference: None,
        meta: Metadata {
            dims: vec![rows, cols],
            ..Default::default()
        },
    })
}

/// `½‖Ax − y‖² + λ‖Tx‖₁` for an orthogonal `T`; recipes `fb` and `fista`.
pub fn build_wavelet_reg(a: LinearOperator, y: Vector, lambda: f64, t: LinearOperator) -> Result<ProblemInstance> {
    check_lambda(lambda)?;
    let f = Arc::new(Quadratic::new(a, y, 1.0)?);
    let g: SharedProx = Arc::new(ComposedOrthogonal::new(t, l1_term(lambda)?)?);
    let objective: Objective = {
        let (f, g) = (f.clone(), g.clone());
        Arc::new(move |x: &Vector| SmoothFn::value(f.as_ref(), x) + g.value(x))
    };
    let x0 = Vector::zeros(f.dim());
    let recipes = forward_backward_recipes(f.clone(), g, &x0, &objective, None);
    Ok(ProblemInstance {
        name: "wavelet_reg".into(),
        objective,
        recipes,
        x0,
        reference: None,
        meta: Metadata {
            dims: vec![f.operator().out_dim(), f.dim()],
            lambda,
            ..Default::default()
        },
    })
}

/// Orthonormal multilevel Haar transform of size `n` (a power of two), rows
/// ordered coarse to fine.
pub fn haar_matrix(n: usize) -> Result<LinearOperator> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::InvalidValue(format!("haar size must be a power of two, got {n}")));
    }
    fn rows(n: usize) -> Vec<Vec<f64>> {
        if n == 1 {
            return vec![vec![1.0]];
        }
        let h = n / 2;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut out: Vec<Vec<f64>> = rows(h)
            .into_iter()
            .map(|r| r.iter().flat_map(|&v| [v * s, v * s]).collect())
            .collect();
        for i in 0..h {
            let mut r = vec![0.0; n];
            r[2 * i] = s;
            r[2 * i + 1] = -s;
            out.push(r);
        }
        out
    }
    LinearOperator::from_rows(&rows(n))
}
