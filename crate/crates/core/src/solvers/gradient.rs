use serde::{Deserialize, Serialize};

use super::proximal::fb_core;
use super::{Recorder, SolverConfig, SolverTrace, Termination};
use crate::error::{Error, Result};
use crate::funcs::{ProxFn, SmoothFn};
use crate::linops::Vector;

const MAX_SHRINKS: usize = 200;

/// Stepsize selection for plain gradient descent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum StepRule {
    #[default]
    Fixed,
    /// Restart from `init` at every iterate and shrink by `shrink` until
    /// `f(x) − f(x − γ∇f(x)) > (γ/2)‖∇f(x)‖²`.
    Backtracking { init: f64, shrink: f64 },
    /// Exact line search on a quadratic.
    OptimalQuadratic,
}

pub(crate) fn default_step(l: f64) -> f64 {
    if l > 0.0 {
        1.0 / l
    } else {
        1.0
    }
}

/// `x_{n+1} = x_n − γ_n ∇f(x_n)`. Extras: `step`.
pub fn gradient_descent(f: &dyn SmoothFn, x0: &Vector, cfg: &SolverConfig, rule: StepRule) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let l = f.lipschitz();
    let gamma = cfg.step.unwrap_or_else(|| default_step(l));
    match rule {
        StepRule::Fixed => {
            if l > 0.0 && gamma >= 2.0 / l {
                return Err(Error::Config(format!(
                    "gradient descent step {gamma} must be below 2/L = {}",
                    2.0 / l
                )));
            }
        }
        StepRule::Backtracking { init, shrink } => {
            if !(init > 0.0) {
                return Err(Error::Config(format!("backtracking initial step must be positive, got {init}")));
            }
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(Error::Config(format!("backtracking shrink must lie in (0, 1), got {shrink}")));
            }
        }
        StepRule::OptimalQuadratic => {
            if f.as_quadratic().is_none() {
                return Err(Error::Config("optimal stepsize requires a quadratic objective".into()));
            }
        }
    }

    let mut x = x0.clone();
    let mut fx = f.value(&x);
    let mut rec = Recorder::new("gradient_descent", &["step"], cfg, x0, fx);
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let g = f.gradient(&x);
        let (step, next, fnext) = match rule {
            StepRule::Fixed => {
                let next = x.add_scaled(-gamma, &g);
                let fn_ = f.value(&next);
                (gamma, next, fn_)
            }
            StepRule::Backtracking { init, shrink } => backtrack(f, &x, fx, &g, init, shrink),
            StepRule::OptimalQuadratic => {
                let q = f.as_quadratic().expect("checked above");
                let step = q.exact_step(&g).unwrap_or(0.0);
                let next = x.add_scaled(-step, &g);
                let fn_ = f.value(&next);
                (step, next, fn_)
            }
        };
        let residual = next.dist(&x);
        x = next;
        fx = fnext;
        if let Some(t) = rec.push(n, &x, fx, residual, vec![step]) {
            term = t;
            break;
        }
    }
    Ok(rec.finish(term, x))
}

/// Backtracking from `init`: returns the accepted step, point and value.
fn backtrack(f: &dyn SmoothFn, x: &Vector, fx: f64, g: &Vector, init: f64, shrink: f64) -> (f64, Vector, f64) {
    let g2 = g.norm_sq();
    let mut step = init;
    let mut next = x.add_scaled(-step, g);
    let mut fnext = f.value(&next);
    if g2 == 0.0 {
        return (step, next, fnext);
    }
    for _ in 0..MAX_SHRINKS {
        if fx - fnext > 0.5 * step * g2 {
            break;
        }
        step *= shrink;
        next = x.add_scaled(-step, g);
        fnext = f.value(&next);
    }
    (step, next, fnext)
}

/// `x_{n+1} = P_C(x_n − γ∇f(x_n))` with `C` given by an indicator.
pub fn projected_gradient(
    f: &dyn SmoothFn,
    c: &dyn ProxFn,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    fb_core("projected_gradient", f, c, x0, cfg, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{Indicator, Quadratic};
    use crate::linops::LinearOperator;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn one_exact_step_on_half_square() {
        let f = Quadratic::centered(v(&[0.0]), 1.0).unwrap();
        let t = gradient_descent(&f, &v(&[5.0]), &SolverConfig::default().with_max_iter(1), StepRule::Fixed).unwrap();
        assert_eq!(t.solution, v(&[0.0]));
    }

    #[test]
    fn anisotropic_quadratic_first_step() {
        let a = LinearOperator::diagonal(&[1.0, 10f64.sqrt()]).unwrap();
        let f = Quadratic::new(a, v(&[0.0, 0.0]), 1.0).unwrap();
        let cfg = SolverConfig::default().with_max_iter(1).with_step(0.1);
        let t = gradient_descent(&f, &v(&[1.0, 1.0]), &cfg, StepRule::Fixed).unwrap();
        assert!((t.solution[0] - 0.9).abs() < 1e-15 && t.solution[1].abs() < 1e-15);
        assert!((t.final_objective() - 0.405).abs() < 1e-12);
        assert!(t.final_objective() <= 0.9 * 5.5);
    }

    #[test]
    fn step_too_large_is_rejected() {
        let f = Quadratic::centered(v(&[0.0]), 1.0).unwrap();
        let cfg = SolverConfig::default().with_step(2.0);
        assert!(gradient_descent(&f, &v(&[1.0]), &cfg, StepRule::Fixed).is_err());
    }

    #[test]
    fn backtracking_accepts_0625() {
        let f = Quadratic::centered(v(&[0.0]), 1.0).unwrap();
        let rule = StepRule::Backtracking { init: 10.0, shrink: 0.5 };
        let t = gradient_descent(&f, &v(&[3.0]), &SolverConfig::default().with_max_iter(3), rule).unwrap();
        // on ½x² the test holds iff γ < 1: 10, 5, 2.5, 1.25 fail and 0.625 passes
        assert_eq!(t.extra("step").unwrap()[0], 0.625);
        assert!(t.final_objective() < t.initial_objective);
    }

    #[test]
    fn optimal_step_on_isotropic_quadratic_is_exact() {
        let f = Quadratic::centered(v(&[1.0, -2.0]), 3.0).unwrap();
        let t = gradient_descent(&f, &v(&[4.0, 4.0]), &SolverConfig::default().with_max_iter(1), StepRule::OptimalQuadratic)
            .unwrap();
        assert!(t.solution.dist(&v(&[1.0, -2.0])) < 1e-14);
    }

    #[test]
    fn projected_gradient_box() {
        let f = Quadratic::centered(v(&[2.0, 2.0]), 1.0).unwrap();
        let c = Indicator::boxed(0.0, 1.0).unwrap();
        let t = projected_gradient(&f, &c, &v(&[0.0, 0.0]), &SolverConfig::default().with_max_iter(50)).unwrap();
        assert!(t.solution.dist(&v(&[1.0, 1.0])) < 1e-12);
        let t0 = projected_gradient(&f, &c, &v(&[1.0, 1.0]), &SolverConfig::default().with_max_iter(3)).unwrap();
        assert_eq!(t0.residuals()[0], 0.0);
    }
}
