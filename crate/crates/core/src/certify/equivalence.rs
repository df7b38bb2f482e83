use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Report, Tally};
use crate::error::{Error, Result};
use crate::funcs::{conjugate_gradient, prox_conjugate, DualTerm, ProxFn, Quadratic, SaddleProblem, SharedProx, CG_ABS_TOL};
use crate::linops::{LinearMap, LinearOperator, Vector};
use crate::solvers::{pd_step, PdState};

/// Allowed mapping defect after `iters` iterations: `1e-8` up to 50
/// iterations, growing linearly beyond.
pub fn equivalence_threshold(iters: usize) -> f64 {
    1e-8 * (iters as f64 / 50.0).max(1.0)
}

fn rel(defect: f64, scale: f64) -> f64 {
    defect / (1.0 + scale)
}

/// One Douglas-Rachford step in the `(v, w)` form:
/// `w⁺ = w + prox_{γF}(2v − w) − v`, `v⁺ = prox_{γg}(w⁺)`.
fn dr_vw(
    prox_f: &dyn Fn(&Vector) -> Result<Vector>,
    g: &dyn ProxFn,
    gamma: f64,
    v: &Vector,
    w: &Vector,
) -> Result<(Vector, Vector)> {
    let w_next = w.add(&prox_f(&v.scale(2.0).sub(w))?).sub(v);
    let v_next = g.prox(&w_next, gamma)?;
    Ok((v_next, w_next))
}

/// Runs Douglas-Rachford from `(v0, w0) = (x0, w0)` and the primal-dual
/// iteration with `K = Id`, `σ = 1/γ`, `τ = γ` from `x̄0 = x0`,
/// `y0 = (x0 − w0)/γ`, and checks `x_n = v_n` and `γy_n = v_{n−1} − w_n`
/// at every iteration. The defect is measured relative to `1 + ‖v_n‖`.
pub fn dr_cp_equivalence(
    f: SharedProx,
    g: SharedProx,
    gamma: f64,
    x0: &Vector,
    w0: &Vector,
    iters: usize,
) -> Result<Report> {
    dr_cp_with_steps(f, g, gamma, (1.0 / gamma, gamma), x0, w0, iters)
}

pub(crate) fn dr_cp_with_steps(
    f: SharedProx,
    g: SharedProx,
    gamma: f64,
    (sigma, tau): (f64, f64),
    x0: &Vector,
    w0: &Vector,
    iters: usize,
) -> Result<Report> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let n = x0.len();
    w0.check_len(n, "dr start")?;
    let prob = SaddleProblem::new(DualTerm::Primal(f.clone()), g.clone(), LinearOperator::identity(n));
    let mut tally = Tally::new("dr_cp_equivalence", &format!("{} + {}, gamma={gamma}", f.name(), g.name()));
    let thr = equivalence_threshold(iters);
    let mut state = PdState::new(x0.clone(), x0.sub(w0).scale(1.0 / gamma));
    let (mut v, mut w) = (x0.clone(), w0.clone());
    let d0 = rel(state.x.dist(&v) + state.y.scale(gamma).dist(&v.sub(&w)), v.norm());
    tally.record(thr - d0, 0.0, || format!("n=0: defect {d0}"));
    let prox_f = |u: &Vector| f.prox(u, gamma);
    let mut worst = d0;
    for n in 1..=iters {
        state = pd_step(&prob, &state, sigma, tau, 1.0)?;
        let v_prev = v.clone();
        (v, w) = dr_vw(&prox_f, g.as_ref(), gamma, &v, &w)?;
        let dx = rel(state.x.dist(&v), v.norm());
        let dy = rel(state.y.scale(gamma).dist(&v_prev.sub(&w)), v_prev.sub(&w).norm());
        let d = dx.max(dy);
        worst = worst.max(d);
        tally.record(thr - d, 0.0, || format!("n={n}: x defect {dx:e}, y defect {dy:e}"));
    }
    tally.note(format!("max defect {worst:e} over {iters} iterations (threshold {thr:e})"));
    Ok(tally.finish())
}

/// `prox_{γ f∘K}`: scaled prox for `K = s·Id`, a linear solve for quadratic `f`.
fn composed_prox<'a>(f: &'a SharedProx, k: &LinearOperator) -> Result<Box<dyn Fn(&Vector, f64) -> Result<Vector> + 'a>> {
    if let Some(s) = k.scalar_multiple_of_identity().filter(|s| *s != 0.0) {
        return Ok(Box::new(move |x: &Vector, gamma: f64| Ok(f.prox(&x.scale(s), gamma * s * s)?.scale(1.0 / s))));
    }
    if let Some(q) = f.as_quadratic() {
        let op = LinearOperator::compose(vec![q.operator().clone(), k.clone()])?;
        let fk = Quadratic::new(op, q.data().clone(), q.lambda())?;
        return Ok(Box::new(move |x: &Vector, gamma: f64| fk.prox(x, gamma)));
    }
    Err(Error::Unsupported(format!(
        "prox of {} composed with a general operator is not available in closed form",
        f.name()
    )))
}

fn check_injective_adjoint(k: &LinearOperator, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kkt = |x: &Vector| k.apply_raw(&k.adjoint_raw(x));
    for _ in 0..3 {
        let u = Vector::random_normal(k.out_dim(), 1.0, &mut rng);
        let rhs = kkt(&u);
        let solved = conjugate_gradient(kkt, &rhs, None, 1e-12, Some(50 * k.out_dim().max(1)));
        let ok = matches!(&solved, Ok(s) if s.solution.dist(&u) <= 1e-6 * (1.0 + u.norm()));
        if !ok {
            return Err(Error::InvalidValue(
                "K* is not injective (KK* is singular); the ADMM/DR change of variables does not apply".into(),
            ));
        }
    }
    Ok(())
}

/// Runs ADMM on the dual problem `min f*(x) + g*(y)` s.t. `K*x + y = 0`:
///
/// `x⁺ = prox^{K*}_{f*/γ}(−y − z/γ)`, `y⁺ = prox_{g*/γ}(−K*x⁺ − z/γ)`,
/// `z⁺ = z + γ(y⁺ + K*x⁺)`,
///
/// with the metric prox computed as
/// `prox^{K*}_{f*/γ}(u) = (K*)⁺(u − (1/γ)prox_{γ f∘K}(γu))`, side by side
/// with Douglas-Rachford on `f∘K + g` in the `(v, w)` form, and checks
/// `z_n = −v_n`, `γy_n = w_n − v_n` and `−γK*x_n = w_n − v_{n−1}`.
/// The DR start is `w0` with `v0 = prox_{γg}(w0)`.
pub fn dr_admm_equivalence(
    f: SharedProx,
    g: SharedProx,
    k: &LinearOperator,
    gamma: f64,
    w0: &Vector,
    iters: usize,
) -> Result<Report> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    w0.check_len(k.in_dim(), "dr start")?;
    check_injective_adjoint(k, 0x0add)?;
    let prox_fk = composed_prox(&f, k)?;
    let kkt = |x: &Vector| k.apply_raw(&k.adjoint_raw(x));
    let pinv_adjoint = |u: &Vector| -> Result<Vector> {
        Ok(conjugate_gradient(kkt, &k.apply_raw(u), None, CG_ABS_TOL * 1e-2, Some(50 * k.out_dim().max(1)))?.solution)
    };

    let mut tally = Tally::new("dr_admm_equivalence", &format!("{} o K + {}, gamma={gamma}", f.name(), g.name()));
    let thr = equivalence_threshold(iters);
    let mut w = w0.clone();
    let mut v = g.prox(&w, gamma)?;
    let mut z = v.scale(-1.0);
    let mut y = w.sub(&v).scale(1.0 / gamma);
    let prox_f = |u: &Vector| prox_fk(u, gamma);
    let mut worst: f64 = 0.0;
    for n in 1..=iters {
        let u = y.scale(-1.0).add_scaled(-1.0 / gamma, &z);
        let x = pinv_adjoint(&u.add_scaled(-1.0 / gamma, &prox_fk(&u.scale(gamma), gamma)?))?;
        let ktx = k.adjoint_raw(&x);
        y = prox_conjugate(g.as_ref(), &ktx.scale(-1.0).add_scaled(-1.0 / gamma, &z), 1.0 / gamma)?;
        z = z.add_scaled(gamma, &y.add(&ktx));

        let v_prev = v.clone();
        (v, w) = dr_vw(&prox_f, g.as_ref(), gamma, &v, &w)?;
        let dz = rel(z.dist(&v.scale(-1.0)), v.norm());
        let dy = rel(y.scale(gamma).dist(&w.sub(&v)), w.sub(&v).norm());
        let dx = rel(ktx.scale(-gamma).dist(&w.sub(&v_prev)), w.sub(&v_prev).norm());
        let d = dz.max(dy).max(dx);
        worst = worst.max(d);
        tally.record(thr - d, 0.0, || format!("n={n}: z {dz:e}, y {dy:e}, x {dx:e}"));
    }
    tally.note(format!("max defect {worst:e} over {iters} iterations (threshold {thr:e})"));
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::funcs::L1Norm;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn dr_cp_scalar_lasso() {
        for gamma in [0.1, 1.0, 10.0] {
            let r = dr_cp_equivalence(
                Arc::new(L1Norm::new(1.0).unwrap()),
                Arc::new(Quadratic::centered(v(&[3.0]), 1.0).unwrap()),
                gamma,
                &v(&[0.0]),
                &v(&[-1.0]),
                50,
            )
            .unwrap();
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn dr_admm_identity_and_diagonal() {
        let f: SharedProx = Arc::new(Quadratic::centered(v(&[1.0, -2.0]), 1.0).unwrap());
        let g: SharedProx = Arc::new(Quadratic::centered(v(&[0.5, 0.5]), 2.0).unwrap());
        for gamma in [0.5, 1.0, 2.0] {
            for k in [LinearOperator::identity(2), LinearOperator::diagonal(&[1.0, 2.0]).unwrap()] {
                let r = dr_admm_equivalence(f.clone(), g.clone(), &k, gamma, &v(&[3.0, 1.0]), 50).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn singular_operator_refused() {
        let f: SharedProx = Arc::new(Quadratic::centered(v(&[0.0]), 1.0).unwrap());
        let g: SharedProx = Arc::new(Quadratic::centered(v(&[0.0, 0.0]), 1.0).unwrap());
        let k = LinearOperator::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(dr_admm_equivalence(f.clone(), g.clone(), &k, 1.0, &v(&[0.0, 0.0]), 5).is_ok());
        let k = LinearOperator::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let g1: SharedProx = Arc::new(Quadratic::centered(v(&[0.0]), 1.0).unwrap());
        let f2: SharedProx = Arc::new(Quadratic::centered(v(&[0.0, 0.0]), 1.0).unwrap());
        assert!(dr_admm_equivalence(f2, g1, &k, 1.0, &v(&[0.0]), 5).is_err());
    }
}
