use super::gradient::default_step;
use super::{Inertia, Recorder, Relaxation, SolverConfig, SolverTrace, Termination};
use crate::error::{Error, Result};
use crate::funcs::{ProxFn, SmoothFn};
use crate::linops::Vector;

const H1_SLACK: f64 = 1e-8;
const STEP_SLACK: f64 = 1e-12;

/// `t_{n+1} = (1 + √(1 + 4t_n²)) / 2`.
pub fn fista_t_next(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

fn resolve_fb_step(f: &dyn SmoothFn, g: &dyn ProxFn, cfg: &SolverConfig, nonconvex: bool) -> Result<(f64, f64)> {
    let l = f.lipschitz();
    if nonconvex {
        if cfg.inertia != Inertia::None {
            return Err(Error::Config("the nonconvex scheme runs without inertia".into()));
        }
        let limit = match cfg.weak_convexity {
            Some(aw) if aw >= 0.0 => 2.0 / (l + aw),
            Some(aw) => return Err(Error::Config(format!("weak convexity modulus must be non-negative, got {aw}"))),
            None => 1.0 / l,
        };
        let gamma = cfg.step.unwrap_or(0.99 * limit);
        if l > 0.0 && gamma >= limit {
            return Err(Error::Config(format!("nonconvex forward-backward step {gamma} must be below {limit}")));
        }
        return Ok((gamma, 0.0));
    }
    match cfg.inertia {
        Inertia::None => {
            let gamma = cfg.step.unwrap_or_else(|| default_step(l));
            if l > 0.0 && gamma >= 2.0 / l {
                return Err(Error::Config(format!("forward-backward step {gamma} must be below 2/L = {}", 2.0 / l)));
            }
            Ok((gamma, 0.0))
        }
        Inertia::FistaT | Inertia::FistaBeta { .. } => {
            let gamma = cfg.step.unwrap_or_else(|| default_step(l));
            if l > 0.0 && gamma > (1.0 + STEP_SLACK) / l {
                return Err(Error::Config(format!("accelerated step {gamma} must not exceed 1/L = {}", 1.0 / l)));
            }
            Ok((gamma, 0.0))
        }
        Inertia::Vfista => {
            let alpha = cfg
                .strong_convexity
                .or_else(|| f.strong_convexity())
                .or_else(|| g.strong_convexity())
                .filter(|a| *a > 0.0)
                .ok_or_else(|| Error::Config("vfista needs a known strong-convexity modulus alpha > 0".into()))?;
            if !(l > 0.0) || alpha > l * (1.0 + STEP_SLACK) {
                return Err(Error::Config(format!("vfista needs 0 < alpha <= L, got alpha={alpha}, L={l}")));
            }
            let gamma = 1.0 / l;
            if let Some(s) = cfg.step {
                if (s - gamma).abs() > STEP_SLACK * gamma {
                    return Err(Error::Config(format!("vfista runs with step 1/L = {gamma}, got {s}")));
                }
            }
            Ok((gamma, ((l.sqrt() - alpha.sqrt()) / (l.sqrt() + alpha.sqrt())).max(0.0)))
        }
    }
}

pub(crate) fn fb_core(
    name: &str,
    f: &dyn SmoothFn,
    g: &dyn ProxFn,
    x0: &Vector,
    cfg: &SolverConfig,
    nonconvex: bool,
) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let (gamma, vfista_coef) = resolve_fb_step(f, g, cfg, nonconvex)?;
    let l = f.lipschitz();
    let h1_a = match cfg.weak_convexity {
        Some(aw) => 1.0 / gamma - 0.5 * (l + aw),
        None => 0.5 / gamma - 0.5 * l,
    };
    let h2_b = 1.0 / gamma + l;
    let names: &[&str] = if nonconvex {
        &["step", "inertia", "t", "h1_margin", "h2_witness", "h2_bound"]
    } else {
        &["step", "inertia", "t"]
    };
    let objective = |x: &Vector| f.value(x) + g.value(x);

    let mut x = x0.clone();
    let mut x_prev = x0.clone();
    let mut jx = objective(&x);
    let mut rec = Recorder::new(name, names, cfg, x0, jx);
    let mut t = 1.0;
    let mut t_prev = 1.0;
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let coef = match cfg.inertia {
            Inertia::None => 0.0,
            Inertia::FistaT => {
                if n >= 2 {
                    t_prev = t;
                    t = fista_t_next(t);
                }
                (t_prev - 1.0) / t
            }
            Inertia::FistaBeta { beta } => {
                let k = (n - 1) as f64;
                k / (k + beta)
            }
            Inertia::Vfista => {
                if n >= 2 {
                    vfista_coef
                } else {
                    0.0
                }
            }
        };
        let y = if coef != 0.0 { x.add_scaled(coef, &x.sub(&x_prev)) } else { x.clone() };
        let grad_y = f.gradient(&y);
        let next = g.prox(&y.add_scaled(-gamma, &grad_y), gamma)?;
        let residual = next.dist(&x);
        let jn = objective(&next);
        let mut extras = vec![gamma, coef, if cfg.inertia == Inertia::FistaT { t } else { 0.0 }];
        if nonconvex {
            let margin = jx - jn - h1_a * residual * residual;
            if margin < -H1_SLACK {
                return Err(Error::SufficientDecreaseViolated { iteration: n, margin });
            }
            let witness = x
                .sub(&next)
                .scale(1.0 / gamma)
                .add(&f.gradient(&next))
                .sub(&f.gradient(&x))
                .norm();
            extras.extend([margin, witness, h2_b * residual]);
        }
        x_prev = std::mem::replace(&mut x, next);
        jx = jn;
        if let Some(tm) = rec.push(n, &x, jx, residual, extras) {
            term = tm;
            break;
        }
    }
    Ok(rec.finish(term, x))
}

/// Forward-backward splitting for `f + g` with optional inertia.
/// Extras: `step`, `inertia` (extrapolation coefficient), `t` (FISTA sequence).
pub fn forward_backward(f: &dyn SmoothFn, g: &dyn ProxFn, x0: &Vector, cfg: &SolverConfig) -> Result<SolverTrace> {
    let name = match cfg.inertia {
        Inertia::None => "forward_backward",
        Inertia::FistaT => "fista",
        Inertia::FistaBeta { .. } => "fista_beta",
        Inertia::Vfista => "vfista",
    };
    fb_core(name, f, g, x0, cfg, false)
}

/// Forward-backward without convexity assumptions. Besides the usual
/// columns the trace carries the sufficient-decrease margin `h1_margin`,
/// the norm of the subgradient witness `h2_witness` and its bound `h2_bound`.
/// Fails with [`Error::SufficientDecreaseViolated`] when a margin drops below
/// `−1e-8`.
pub fn nonconvex_forward_backward(
    f: &dyn SmoothFn,
    g: &dyn ProxFn,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    fb_core("nonconvex_forward_backward", f, g, x0, cfg, true)
}

/// `x_{n+1} = prox_{γg}(x_n)`. Extras: `decrease_margin`,
/// `g(x_n) − g(x_{n+1}) − ‖x_n − x_{n+1}‖²/(2γ)`.
pub fn proximal_point(g: &dyn ProxFn, x0: &Vector, cfg: &SolverConfig) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let gamma = cfg.step.unwrap_or(1.0);
    let mut x = x0.clone();
    let mut gx = g.value(&x);
    let mut rec = Recorder::new("proximal_point", &["decrease_margin"], cfg, x0, gx);
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let next = g.prox(&x, gamma)?;
        let residual = next.dist(&x);
        let gn = g.value(&next);
        let margin = gx - gn - residual * residual / (2.0 * gamma);
        x = next;
        gx = gn;
        if let Some(t) = rec.push(n, &x, gx, residual, vec![margin]) {
            term = t;
            break;
        }
    }
    Ok(rec.finish(term, x))
}

/// `x_{n+1} = x_n + λ_n(Tx_n − x_n)`; the objective column holds `‖Tx_n − x_n‖`.
pub fn krasnoselskii_mann(
    t_map: &dyn Fn(&Vector) -> Result<Vector>,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let relax = cfg.relaxation.unwrap_or(Relaxation::Constant { value: 0.5 });
    relax.validate(1.0, "lambda")?;
    let mut x = x0.clone();
    let mut tx = t_map(&x)?;
    let mut rec = Recorder::new("krasnoselskii_mann", &["lambda"], cfg, x0, tx.dist(&x));
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let lam = relax.at(n);
        let next = x.add_scaled(lam, &tx.sub(&x));
        let residual = next.dist(&x);
        x = next;
        tx = t_map(&x)?;
        if let Some(t) = rec.push(n, &x, tx.dist(&x), residual, vec![lam]) {
            term = t;
            break;
        }
    }
    Ok(rec.finish(term, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{DoubleWell, HardThreshold, L1Norm, Quadratic, Zero};
    use crate::solvers::{gradient_descent, StepRule};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn fista_t_sequence() {
        assert!((fista_t_next(1.0) - 1.618_033_988_749_895).abs() < 1e-15);
    }

    #[test]
    fn zero_g_matches_gradient_descent() {
        let f = Quadratic::centered(v(&[1.0, -3.0]), 2.0).unwrap();
        let cfg = SolverConfig::default().with_max_iter(20).with_step(0.3);
        let a = forward_backward(&f, &Zero, &v(&[5.0, 5.0]), &cfg).unwrap();
        let b = gradient_descent(&f, &v(&[5.0, 5.0]), &cfg, StepRule::Fixed).unwrap();
        assert_eq!(a.objectives(), b.objectives());
        assert_eq!(a.solution, b.solution);
    }

    #[test]
    fn lasso_identity_converges_to_soft_threshold() {
        let f = Quadratic::centered(v(&[3.0, 0.5]), 1.0).unwrap();
        let g = L1Norm::new(1.0).unwrap();
        for inertia in [Inertia::None, Inertia::FistaT, Inertia::FistaBeta { beta: 4.0 }, Inertia::Vfista] {
            let cfg = SolverConfig::default().with_max_iter(200).with_inertia(inertia);
            let t = forward_backward(&f, &g, &v(&[0.0, 0.0]), &cfg).unwrap();
            assert!(t.solution.dist(&v(&[2.0, 0.0])) < 1e-10, "{inertia:?}");
        }
    }

    #[test]
    fn vfista_without_alpha_is_rejected() {
        let a = crate::linops::LinearOperator::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let f = Quadratic::new(a, v(&[1.0]), 1.0).unwrap();
        let cfg = SolverConfig::default().with_inertia(Inertia::Vfista);
        assert!(forward_backward(&f, &Zero, &v(&[0.0, 0.0]), &cfg).is_err());
    }

    #[test]
    fn fista_step_bound_enforced() {
        let f = Quadratic::centered(v(&[0.0]), 1.0).unwrap();
        let cfg = SolverConfig::default().with_step(1.5).with_inertia(Inertia::FistaT);
        assert!(forward_backward(&f, &Zero, &v(&[1.0]), &cfg).is_err());
        let cfg = SolverConfig::default().with_step(1.5);
        assert!(forward_backward(&f, &Zero, &v(&[1.0]), &cfg).is_ok());
    }

    #[test]
    fn double_well_reaches_one() {
        let cfg = SolverConfig::default().with_max_iter(2000).with_step(0.1);
        let t = nonconvex_forward_backward(&DoubleWell::new(), &Zero, &v(&[0.5]), &cfg).unwrap();
        assert!((t.solution[0] - 1.0).abs() < 1e-10);
        assert!(t.extra("h1_margin").unwrap().iter().all(|m| *m >= -1e-8));
    }

    #[test]
    fn hard_threshold_run_keeps_margins() {
        let f = Quadratic::centered(v(&[3.0]), 1.0).unwrap();
        let cfg = SolverConfig::default().with_max_iter(100).with_step(0.5);
        let t = nonconvex_forward_backward(&f, &HardThreshold { weight: 1.0 }, &v(&[0.0]), &cfg).unwrap();
        assert!((t.solution[0] - 3.0).abs() < 1e-12);
        assert!(t.extra("h1_margin").unwrap().iter().all(|m| *m >= -1e-8));
    }

    #[test]
    fn convex_instance_matches_forward_backward() {
        let f = Quadratic::centered(v(&[3.0, 0.5]), 1.0).unwrap();
        let g = L1Norm::new(1.0).unwrap();
        let cfg = SolverConfig::default().with_max_iter(30).with_step(0.9);
        let a = forward_backward(&f, &g, &v(&[0.0, 1.0]), &cfg).unwrap();
        let b = nonconvex_forward_backward(&f, &g, &v(&[0.0, 1.0]), &cfg).unwrap();
        assert_eq!(a.objectives(), b.objectives());
        assert_eq!(a.iterates, b.iterates);
    }

    #[test]
    fn proximal_point_on_abs() {
        let g = L1Norm::new(1.0).unwrap();
        let t = proximal_point(&g, &v(&[10.0]), &SolverConfig::default().with_max_iter(12)).unwrap();
        let xs: Vec<f64> = t.iterates.iter().map(|(_, x)| x[0]).collect();
        assert_eq!(xs, vec![10., 9., 8., 7., 6., 5., 4., 3., 2., 1., 0., 0., 0.]);
        assert!(t.extra("decrease_margin").unwrap().iter().all(|m| *m >= -1e-12));
        let q = Quadratic::centered(v(&[0.0]), 1.0).unwrap();
        let t = proximal_point(&q, &v(&[8.0]), &SolverConfig::default().with_max_iter(3)).unwrap();
        assert_eq!(t.solution, v(&[1.0]));
    }

    #[test]
    fn km_on_rotation() {
        let rot = |x: &Vector| Ok(v(&[-x[1], x[0]]));
        let cfg = SolverConfig::default().with_max_iter(100);
        let t = krasnoselskii_mann(&rot, &v(&[1.0, 0.0]), &cfg).unwrap();
        let fpr = t.objectives();
        assert!(fpr.windows(2).all(|w| w[1] < w[0]));
        assert!(*fpr.last().unwrap() <= 1e-8);
        let frozen = cfg.clone().with_relaxation(Relaxation::Constant { value: 0.0 });
        let t = krasnoselskii_mann(&rot, &v(&[1.0, 0.0]), &frozen).unwrap();
        assert_eq!(t.solution, v(&[1.0, 0.0]));
    }
}
