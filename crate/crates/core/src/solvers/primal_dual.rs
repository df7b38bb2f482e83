use super::{Recorder, SolverConfig, SolverTrace, Termination};
use crate::error::{Error, Result};
use crate::funcs::{prox_conjugate, ProxFn, SaddleProblem, SharedProx, SmoothFn};
use crate::linops::{LinearMap, LinearOperator, Vector};
use crate::par;

/// Iterate of the primal-dual scheme: `x_n`, the extrapolated `x̄_n` and `y_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdState {
    pub x: Vector,
    pub xbar: Vector,
    pub y: Vector,
}

impl PdState {
    pub fn new(x: Vector, y: Vector) -> Self {
        PdState { xbar: x.clone(), x, y }
    }
}

/// One step
/// `y⁺ = prox_{σf*}(y + σKx̄)`, `x⁺ = prox_{τg}(x − τK*y⁺)`, `x̄⁺ = x⁺ + θ(x⁺ − x)`.
///
/// No stepsize validation is done here.
pub fn pd_step(prob: &SaddleProblem, s: &PdState, sigma: f64, tau: f64, theta: f64) -> Result<PdState> {
    let y = prob.prox_dual(&s.y.add_scaled(sigma, &prob.k.apply_raw(&s.xbar)), sigma)?;
    let x = prob.g.prox(&s.x.add_scaled(-tau, &prob.k.adjoint_raw(&y)), tau)?;
    let xbar = x.add_scaled(theta, &x.sub(&s.x));
    Ok(PdState { x, xbar, y })
}

/// Default `(σ, τ)` for an operator of norm `knorm`: `0.99/‖K‖` each, or the
/// missing one completed so that `στ‖K‖² = 0.99`.
pub fn cp_default_steps(knorm: f64, sigma: Option<f64>, tau: Option<f64>) -> (f64, f64) {
    if knorm == 0.0 {
        return (sigma.unwrap_or(1.0), tau.unwrap_or(1.0));
    }
    let l2 = knorm * knorm;
    match (sigma, tau) {
        (Some(s), Some(t)) => (s, t),
        (Some(s), None) => (s, 0.99 / (s * l2)),
        (None, Some(t)) => (0.99 / (t * l2), t),
        (None, None) => (0.99 / knorm, 0.99 / knorm),
    }
}

fn pd_core(
    name: &str,
    prob: &SaddleProblem,
    x0: &Vector,
    y0: &Vector,
    cfg: &SolverConfig,
    theta: f64,
) -> Result<SolverTrace> {
    cfg.validate_common()?;
    x0.check_len(prob.primal_dim(), "primal start")?;
    y0.check_len(prob.dual_dim(), "dual start")?;
    if prob.g.value(x0).is_nan() {
        return Err(Error::InvalidValue("g is undefined at the starting point".into()));
    }
    let knorm = prob.k.norm();
    let (sigma, tau) = cp_default_steps(knorm, cfg.sigma, cfg.tau);
    if sigma * tau * knorm * knorm >= 1.0 {
        return Err(Error::Config(format!(
            "step sizes violate sigma*tau*||K||^2 < 1: sigma={sigma}, tau={tau}, ||K|| estimated as {knorm}"
        )));
    }
    let has_primal = prob.primal_term().is_some();
    let objective = |x: &Vector, y: &Vector| {
        if has_primal {
            prob.primal_objective(x)
        } else {
            prob.lagrangian(x, y)
        }
    };
    let mut s = PdState::new(x0.clone(), y0.clone());
    let mut rec = Recorder::new(name, &["dual_residual", "sigma", "tau"], cfg, x0, objective(x0, y0));
    rec.secondary(0, y0);
    let mut x_sum = Vector::zeros(x0.len());
    let mut y_sum = Vector::zeros(y0.len());
    let mut term = Termination::IterCap;
    let mut count = 0usize;
    for n in 1..=cfg.max_iter {
        let next = pd_step(prob, &s, sigma, tau, theta)?;
        let residual = next.x.dist(&s.x);
        let dual_res = next.y.dist(&s.y);
        s = next;
        x_sum.axpy(1.0, &s.x);
        y_sum.axpy(1.0, &s.y);
        count = n;
        rec.secondary(n, &s.y);
        if let Some(t) = rec.push(n, &s.x, objective(&s.x, &s.y), residual, vec![dual_res, sigma, tau]) {
            term = t;
            break;
        }
    }
    let c = 1.0 / count.max(1) as f64;
    rec.aux("x_ergodic", x_sum.scale(c));
    rec.aux("y_ergodic", y_sum.scale(c));
    rec.aux("y", s.y);
    Ok(rec.finish(term, s.x))
}

/// Primal-dual iteration with over-relaxation `x̄_{n+1} = 2x_{n+1} − x_n`.
///
/// Iterates are `x_n`, the secondary sequence is `y_n`. The objective
/// column is the primal value `f(Kx_n) + g(x_n)` when `f` is available and
/// the Lagrangian otherwise. Ergodic averages over `n = 1..N` are stored as
/// `aux["x_ergodic"]` and `aux["y_ergodic"]`.
pub fn chambolle_pock(prob: &SaddleProblem, x0: &Vector, y0: &Vector, cfg: &SolverConfig) -> Result<SolverTrace> {
    pd_core("chambolle_pock", prob, x0, y0, cfg, 1.0)
}

/// Same as [`chambolle_pock`] without over-relaxation.
pub fn arrow_hurwicz(prob: &SaddleProblem, x0: &Vector, y0: &Vector, cfg: &SolverConfig) -> Result<SolverTrace> {
    pd_core("arrow_hurwicz", prob, x0, y0, cfg, 0.0)
}

/// One dualized term `h(Lx)` of a Condat problem.
#[derive(Clone)]
pub struct CondatTerm {
    pub h: SharedProx,
    pub op: LinearOperator,
}

impl CondatTerm {
    pub fn new(h: SharedProx, op: LinearOperator) -> Self {
        CondatTerm { h, op }
    }
}

/// Default `(σ, τ)` given `L = Lip(∇f)` and `N = ‖Σ L_i*L_i‖`.
pub fn condat_default_steps(lip: f64, n: f64, sigma: Option<f64>, tau: Option<f64>) -> Result<(f64, f64)> {
    let half = lip / 2.0;
    if n == 0.0 {
        let t = tau.unwrap_or(if half > 0.0 { 0.99 / half } else { 1.0 });
        return Ok((sigma.unwrap_or(1.0), t));
    }
    match (sigma, tau) {
        (Some(s), Some(t)) => Ok((s, t)),
        (Some(s), None) => Ok((s, 0.99 / (half + s * n))),
        (None, Some(t)) => {
            let s = (0.99 / t - half) / n;
            if s > 0.0 {
                Ok((s, t))
            } else {
                Err(Error::Config(format!("tau={t} leaves no admissible sigma: tau must be below 1/(L/2) = {}", 1.0 / half)))
            }
        }
        (None, None) => {
            let s = 1.0 / n.sqrt();
            Ok((s, 0.99 / (half + n.sqrt())))
        }
    }
}

/// Condat's primal-dual scheme for `f(x) + g(x) + Σ h_i(L_i x)`:
///
/// `x̃ = prox_{τg}(x − τ∇f(x) − τΣL_i*u_i)`,
/// `ũ_i = prox_{σh_i*}(u_i + σL_i(2x̃ − x))`,
/// then relaxation by `ρ`. The dual updates run in parallel. The secondary
/// sequence is the concatenated dual variable; the final one is `aux["u"]`.
pub fn condat(
    f: &dyn SmoothFn,
    g: &dyn ProxFn,
    terms: &[CondatTerm],
    x0: &Vector,
    u0: Option<&[Vector]>,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let dim = x0.len();
    for (i, t) in terms.iter().enumerate() {
        if t.op.in_dim() != dim {
            return Err(Error::dims(format!("condat operator {i} input"), dim, t.op.in_dim()));
        }
    }
    let mut u: Vec<Vector> = match u0 {
        Some(us) => {
            if us.len() != terms.len() {
                return Err(Error::dims("condat dual starts", terms.len(), us.len()));
            }
            for (i, (ui, t)) in us.iter().zip(terms).enumerate() {
                ui.check_len(t.op.out_dim(), &format!("condat dual start {i}"))?;
            }
            us.to_vec()
        }
        None => terms.iter().map(|t| Vector::zeros(t.op.out_dim())).collect(),
    };
    let rho = cfg.rho.unwrap_or(1.0);
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("rho must lie in (0, 1], got {rho}")));
    }
    let lip = f.lipschitz();
    let nsq = if terms.is_empty() {
        0.0
    } else {
        let k = LinearOperator::stack(terms.iter().map(|t| t.op.clone()).collect())?.norm();
        k * k
    };
    let (sigma, tau) = condat_default_steps(lip, nsq, cfg.sigma, cfg.tau)?;
    let bound = tau * (lip / 2.0 + sigma * nsq);
    if bound >= 1.0 {
        return Err(Error::Config(format!(
            "step sizes violate tau*(L/2 + sigma*N) < 1: got {bound} with L={lip}, N={nsq} from power iteration"
        )));
    }

    let objective = |x: &Vector| {
        f.value(x) + g.value(x) + terms.iter().map(|t| t.h.value(&t.op.apply_raw(x))).sum::<f64>()
    };
    let mut x = x0.clone();
    let mut rec = Recorder::new("condat", &["sigma", "tau"], cfg, x0, objective(x0));
    rec.secondary(0, &Vector::concat(&u));
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let mut arg = x.add_scaled(-tau, &f.gradient(&x));
        for (t, ui) in terms.iter().zip(&u) {
            arg.axpy(-tau, &t.op.adjoint_raw(ui));
        }
        let xt = g.prox(&arg, tau)?;
        let probe = xt.scale(2.0).sub(&x);
        let pairs: Vec<(&CondatTerm, &Vector)> = terms.iter().zip(&u).collect();
        let ut = par::try_map(&pairs, |(t, ui)| {
            prox_conjugate(t.h.as_ref(), &ui.add_scaled(sigma, &t.op.apply_raw(&probe)), sigma)
        })?;
        let next = xt.lincomb(rho, &x, 1.0 - rho);
        u = ut.iter().zip(&u).map(|(a, b)| a.lincomb(rho, b, 1.0 - rho)).collect();
        let residual = next.dist(&x);
        x = next;
        rec.secondary(n, &Vector::concat(&u));
        if let Some(t) = rec.push(n, &x, objective(&x), residual, vec![sigma, tau]) {
            term = t;
            break;
        }
    }
    rec.aux("u", Vector::concat(&u));
    Ok(rec.finish(term, x))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::funcs::{DualTerm, Indicator, L1Norm, Quadratic, Zero};
    use crate::solvers::{gradient_descent, proximal_point, StepRule};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    fn sq(c: f64) -> SharedProx {
        Arc::new(Quadratic::centered(v(&[c]), 1.0).unwrap())
    }

    #[test]
    fn zero_operator_decouples_into_proximal_points() {
        let prob = SaddleProblem::from_primal(sq(2.0), sq(-1.0), LinearOperator::scale(1, 0.0));
        let cfg = SolverConfig::default().with_max_iter(20).with_pd_steps(0.5, 0.7);
        let t = chambolle_pock(&prob, &v(&[3.0]), &v(&[1.0]), &cfg).unwrap();
        let px = proximal_point(sq(-1.0).as_ref(), &v(&[3.0]), &SolverConfig::default().with_max_iter(20).with_step(0.7))
            .unwrap();
        let fstar = sq(2.0).conjugate().unwrap();
        let py = proximal_point(fstar.as_ref(), &v(&[1.0]), &SolverConfig::default().with_max_iter(20).with_step(0.5))
            .unwrap();
        for n in 1..=20 {
            assert!(t.iterate(n).unwrap().dist(px.iterate(n).unwrap()) < 1e-14);
            let y = &t.secondary[n].1;
            assert!(y.dist(py.iterate(n).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn saddle_point_start_is_stationary() {
        // min |x| + ½(x − 3)² as f = |·| with K = Id: x* = 2, y* = 1
        let prob = SaddleProblem::from_primal(Arc::new(L1Norm::new(1.0).unwrap()), sq(3.0), LinearOperator::identity(1));
        let t = chambolle_pock(&prob, &v(&[2.0]), &v(&[1.0]), &SolverConfig::default().with_max_iter(10)).unwrap();
        assert!(t.residuals().iter().all(|r| *r < 1e-15));
        assert!(t.extra("dual_residual").unwrap().iter().all(|r| *r < 1e-15));
    }

    #[test]
    fn step_product_violation_names_the_norm() {
        let prob = SaddleProblem::from_primal(sq(0.0), sq(0.0), LinearOperator::scale(1, 2.0));
        let err = chambolle_pock(&prob, &v(&[0.0]), &v(&[0.0]), &SolverConfig::default().with_pd_steps(0.5, 1.0))
            .unwrap_err();
        assert!(err.to_string().contains("||K|| estimated as 2"), "{err}");
    }

    #[test]
    fn default_steps() {
        assert_eq!(cp_default_steps(2.0, None, None), (0.495, 0.495));
        let (s, t) = cp_default_steps(2.0, Some(0.1), None);
        assert!((s * t * 4.0 - 0.99).abs() < 1e-15);
        let (s, t) = condat_default_steps(2.0, 4.0, None, None).unwrap();
        assert_eq!(s, 0.5);
        assert!(t * (1.0 + s * 4.0) < 1.0);
    }

    #[test]
    fn arrow_hurwicz_strongly_convex_lasso() {
        let prob = SaddleProblem::from_primal(
            Arc::new(L1Norm::new(1.0).unwrap()),
            Arc::new(Quadratic::centered(v(&[3.0, -0.5, 0.2]), 1.0).unwrap()),
            LinearOperator::identity(3),
        );
        let cfg = SolverConfig::default().with_max_iter(5000).with_residual_tol(1e-8);
        let t = arrow_hurwicz(&prob, &v(&[0.0; 3]), &v(&[0.0; 3]), &cfg).unwrap();
        assert_eq!(t.termination, Termination::TolReached);
        assert!(t.solution.dist(&v(&[2.0, 0.0, 0.0])) < 1e-6);
        let c = chambolle_pock(&prob, &t.solution, &t.aux["y"], &SolverConfig::default().with_max_iter(3)).unwrap();
        assert!(c.solution.dist(&t.solution) < 1e-6);
    }

    #[test]
    fn cp_with_conjugate_given_directly() {
        // f* = ι_{[−1,1]} is the conjugate of |·|
        let prob = SaddleProblem::new(
            DualTerm::Conjugate {
                conj: Arc::new(Indicator::linf_ball(1.0).unwrap()),
                primal: None,
            },
            sq(3.0),
            LinearOperator::identity(1),
        );
        let t = chambolle_pock(&prob, &v(&[0.0]), &v(&[0.0]), &SolverConfig::default().with_max_iter(500)).unwrap();
        assert!((t.solution[0] - 2.0).abs() < 1e-10);
        assert!((t.final_objective() - 2.5).abs() < 1e-9);
    }

    #[test]
    fn condat_without_terms_is_gradient_descent() {
        let f = Quadratic::centered(v(&[1.0, -2.0]), 2.0).unwrap();
        let cfg = SolverConfig::default().with_max_iter(15).with_step(0.3);
        let gd = gradient_descent(&f, &v(&[4.0, 4.0]), &cfg, StepRule::Fixed).unwrap();
        let mut ccfg = SolverConfig::default().with_max_iter(15);
        ccfg.tau = Some(0.3);
        let c = condat(&f, &Zero, &[], &v(&[4.0, 4.0]), None, &ccfg).unwrap();
        for n in 1..=15 {
            assert!(c.iterate(n).unwrap().dist(gd.iterate(n).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn condat_matches_cp_with_shifted_dual() {
        // f = 0, g = ½(x − 3)², h = |·|, L = Id, ρ = 1. Condat's x_{n} is
        // CP's x_n when Condat's u_0 equals CP's y_1.
        let h: SharedProx = Arc::new(L1Norm::new(1.0).unwrap());
        let (sigma, tau) = (0.6, 0.9);
        let prob = SaddleProblem::from_primal(h.clone(), sq(3.0), LinearOperator::identity(1));
        let x0 = v(&[0.5]);
        let cp = chambolle_pock(&prob, &x0, &v(&[0.0]), &SolverConfig::default().with_max_iter(40).with_pd_steps(sigma, tau))
            .unwrap();
        let y1 = cp.secondary[1].1.clone();
        let x1 = cp.iterate(1).unwrap().clone();
        let ccfg = SolverConfig::default().with_max_iter(39).with_pd_steps(sigma, tau);
        let c = condat(&Zero, sq(3.0).as_ref(), &[CondatTerm::new(h, LinearOperator::identity(1))], &x0, Some(&[y1]), &ccfg)
            .unwrap();
        assert!(c.iterate(1).unwrap().dist(&x1) < 1e-14);
        for n in 1..=39 {
            assert!(c.iterate(n).unwrap().dist(cp.iterate(n).unwrap()) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn condat_step_violation() {
        let mut cfg = SolverConfig::default().with_pd_steps(1.0, 1.0);
        cfg.max_iter = 1;
        let r = condat(&Zero, &Zero, &[CondatTerm::new(sq(0.0), LinearOperator::identity(1))], &v(&[0.0]), None, &cfg);
        assert!(r.is_err());
    }
}
