use std::sync::Arc;

use super::{Recorder, Relaxation, SolverConfig, SolverTrace, Termination};
use crate::error::{Error, Result};
use crate::funcs::{check_gamma, conjugate_gradient, ProxFn, Separable, SharedProx, CG_ABS_TOL};
use crate::linops::{LinearMap, LinearOperator, Vector};

/// One Douglas-Rachford step from `x`: returns `(y, z, x⁺)` with
/// `y = prox_{γg}(x)`, `z = prox_{γf}(2y − x)`, `x⁺ = x + μ(z − y)`.
pub fn dr_step(f: &dyn ProxFn, g: &dyn ProxFn, gamma: f64, mu: f64, x: &Vector) -> Result<(Vector, Vector, Vector)> {
    let y = g.prox(x, gamma)?;
    let z = f.prox(&y.scale(2.0).sub(x), gamma)?;
    let next = x.add_scaled(mu, &z.sub(&y));
    Ok((y, z, next))
}

fn dr_core(
    name: &str,
    f: &dyn ProxFn,
    g: &dyn ProxFn,
    x0: &Vector,
    cfg: &SolverConfig,
    objective: &dyn Fn(&Vector) -> f64,
    extract: &dyn Fn(&Vector) -> Vector,
) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let gamma = cfg.step.unwrap_or(1.0);
    let relax = cfg.relaxation.unwrap_or(Relaxation::Constant { value: 1.0 });
    relax.validate(2.0, "mu")?;
    let mut x = x0.clone();
    let mut y = g.prox(&x, gamma)?;
    let mut rec = Recorder::new(name, &["mu"], cfg, x0, objective(&y));
    rec.secondary(0, &y);
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let mu = relax.at(n);
        let z = f.prox(&y.scale(2.0).sub(&x), gamma)?;
        let next = x.add_scaled(mu, &z.sub(&y));
        let residual = next.dist(&x);
        x = next;
        y = g.prox(&x, gamma)?;
        rec.secondary(n, &y);
        if let Some(t) = rec.push(n, &x, objective(&y), residual, vec![mu]) {
            term = t;
            break;
        }
    }
    rec.aux("governing", x);
    Ok(rec.finish(term, extract(&y)))
}

/// Douglas-Rachford splitting for `f + g`. The governing sequence `x_n` is
/// stored as iterates, the shadow sequence `y_n = prox_{γg}(x_n)` as the
/// secondary sequence; the objective column is `f(y_n) + g(y_n)` and the
/// reported solution is the final `y`.
pub fn douglas_rachford(f: &dyn ProxFn, g: &dyn ProxFn, x0: &Vector, cfg: &SolverConfig) -> Result<SolverTrace> {
    let objective = |y: &Vector| f.value(y) + g.value(y);
    dr_core("douglas_rachford", f, g, x0, cfg, &objective, &|y| y.clone())
}

/// One term `fᵢ(Lᵢ x)` of a PPXA sum; `op = None` stands for the identity.
#[derive(Clone)]
pub struct PpxaPart {
    pub f: SharedProx,
    pub op: Option<LinearOperator>,
}

impl PpxaPart {
    pub fn new(f: SharedProx) -> Self {
        PpxaPart { f, op: None }
    }

    pub fn with_operator(f: SharedProx, op: LinearOperator) -> Self {
        PpxaPart { f, op: Some(op) }
    }
}

/// Indicator of `{(x₁, …, x_M) : xᵢ = Lᵢ x₁}` in the lifted space.
struct LinkedConsensus {
    n: usize,
    ops: Vec<Option<LinearOperator>>,
    offsets: Vec<usize>,
}

impl LinkedConsensus {
    fn block(&self, x: &Vector, i: usize) -> Vector {
        x.slice(self.offsets[i]..self.offsets[i + 1])
    }

    fn lift(&self, x1: &Vector) -> Vector {
        let mut parts = vec![x1.clone()];
        for op in &self.ops[1..] {
            parts.push(op.as_ref().map_or_else(|| x1.clone(), |o| o.apply_raw(x1)));
        }
        Vector::concat(&parts)
    }
}

impl ProxFn for LinkedConsensus {
    fn value(&self, x: &Vector) -> f64 {
        let x1 = self.block(x, 0);
        let gap = self.lift(&x1).dist(x);
        if gap <= 1e-8 * (1.0 + x.norm()) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        check_gamma(gamma)?;
        x.check_len(*self.offsets.last().unwrap_or(&0), "linked consensus projection")?;
        let m = self.ops.len();
        let mut rhs = self.block(x, 0);
        for i in 1..m {
            let xi = self.block(x, i);
            match &self.ops[i] {
                Some(op) => rhs.axpy(1.0, &op.adjoint_raw(&xi)),
                None => rhs.axpy(1.0, &xi),
            }
        }
        let p1 = if self.ops.iter().all(Option::is_none) {
            rhs.scale(1.0 / m as f64)
        } else {
            let x1 = self.block(x, 0);
            conjugate_gradient(
                |p| {
                    let mut out = p.clone();
                    for op in &self.ops[1..] {
                        match op {
                            Some(o) => out.axpy(1.0, &o.normal_raw(p)),
                            None => out.axpy(1.0, p),
                        }
                    }
                    out
                },
                &rhs,
                Some(&x1),
                CG_ABS_TOL,
                Some(10 * self.n),
            )?
            .solution
        };
        Ok(self.lift(&p1))
    }

    fn name(&self) -> String {
        "indicator(linked consensus)".into()
    }
}

/// PPXA for `Σ fᵢ(Lᵢ x)`: Douglas-Rachford in the lifted space on the
/// separable sum of the `fᵢ` (block proxes evaluated in parallel) and the
/// indicator of `{xᵢ = Lᵢ x₁}`. The first part must act on `x` directly.
/// The objective column is `Σ fᵢ(Lᵢ x)` at the first block of the shadow
/// sequence, which is also the reported solution.
pub fn ppxa(parts: &[PpxaPart], x0: &Vector, cfg: &SolverConfig) -> Result<SolverTrace> {
    if parts.len() < 2 {
        return Err(Error::Config("ppxa needs at least two functions".into()));
    }
    if parts[0].op.is_some() {
        return Err(Error::Config("the first ppxa term must act on x without an operator".into()));
    }
    let n = x0.len();
    let mut offsets = vec![0];
    let mut blocks = Vec::with_capacity(parts.len());
    for (i, p) in parts.iter().enumerate() {
        let d = match &p.op {
            Some(op) => {
                if op.in_dim() != n {
                    return Err(Error::dims(format!("ppxa operator {i} input"), n, op.in_dim()));
                }
                op.out_dim()
            }
            None => n,
        };
        blocks.push((p.f.clone(), d));
        offsets.push(offsets.last().unwrap() + d);
    }
    let f = Separable::from_lengths(blocks)?;
    let g = LinkedConsensus {
        n,
        ops: parts.iter().map(|p| p.op.clone()).collect(),
        offsets,
    };
    let objective = |y: &Vector| {
        let x1 = g.block(y, 0);
        parts
            .iter()
            .map(|p| match &p.op {
                Some(op) => p.f.value(&op.apply_raw(&x1)),
                None => p.f.value(&x1),
            })
            .sum()
    };
    let lifted = g.lift(x0);
    dr_core("ppxa", &f, &g, &lifted, cfg, &objective, &|y| g.block(y, 0))
}

/// Solver for `argmin_x f(x) + (γ/2)‖Ax − v‖²`, called as `(v, γ)`.
pub type Subsolver = Arc<dyn Fn(&Vector, f64) -> Result<Vector> + Send + Sync>;

/// One block `f(x)` with coupling operator `A` of an ADMM problem.
#[derive(Clone)]
pub struct AdmmBlock {
    pub f: SharedProx,
    pub op: LinearOperator,
    pub subsolver: Option<Subsolver>,
}

impl AdmmBlock {
    pub fn new(f: SharedProx, op: LinearOperator) -> Self {
        AdmmBlock { f, op, subsolver: None }
    }

    pub fn with_subsolver(mut self, s: Subsolver) -> Self {
        self.subsolver = Some(s);
        self
    }

    /// `argmin_x f(x) + (γ/2)‖Ax − v‖²`: a scaled prox when `A = s·Id`, a
    /// linear solve when `f` is quadratic, the user subsolver otherwise.
    pub fn argmin(&self, v: &Vector, gamma: f64) -> Result<Vector> {
        if let Some(s) = &self.subsolver {
            return s(v, gamma);
        }
        if let Some(s) = self.op.scalar_multiple_of_identity().filter(|s| *s != 0.0) {
            return self.f.prox(&v.scale(1.0 / s), 1.0 / (gamma * s * s));
        }
        if let Some(q) = self.f.as_quadratic() {
            // (λM*M + γA*A) x = λM*c + γA*v
            let (m, lam) = (q.operator(), q.lambda());
            let rhs = m
                .adjoint_raw(q.data())
                .scale(lam)
                .add_scaled(gamma, &self.op.adjoint_raw(v));
            let out = conjugate_gradient(
                |x| m.normal_raw(x).scale(lam).add_scaled(gamma, &self.op.normal_raw(x)),
                &rhs,
                None,
                CG_ABS_TOL,
                None,
            )?;
            return Ok(out.solution);
        }
        Err(Error::Unsupported(format!(
            "no closed-form ADMM step for {} with a general operator; supply a subsolver",
            self.f.name()
        )))
    }
}

/// ADMM for `min f(x) + g(y)` subject to `Ax + By = b`.
///
/// Iterates are `x_n`, the secondary sequence is `y_n`, and the final
/// multiplier is stored as `aux["z"]`. Extras: `primal_residual`
/// `‖Ax_n + By_n − b‖` and `dual_residual` `γ‖B(y_n − y_{n−1})‖`.
pub fn admm(
    f: &AdmmBlock,
    g: &AdmmBlock,
    b: &Vector,
    x0: Option<&Vector>,
    y0: Option<&Vector>,
    z0: &Vector,
    cfg: &SolverConfig,
) -> Result<SolverTrace> {
    cfg.validate_common()?;
    let (a_op, b_op) = (&f.op, &g.op);
    if a_op.out_dim() != b.len() || b_op.out_dim() != b.len() || z0.len() != b.len() {
        return Err(Error::dims("admm constraint space", b.len(), a_op.out_dim().max(b_op.out_dim())));
    }
    let gamma = cfg.step.unwrap_or(1.0);
    let mut x = x0.cloned().unwrap_or_else(|| Vector::zeros(a_op.in_dim()));
    let mut y = y0.cloned().unwrap_or_else(|| Vector::zeros(b_op.in_dim()));
    x.check_len(a_op.in_dim(), "admm x0")?;
    y.check_len(b_op.in_dim(), "admm y0")?;
    let mut z = z0.clone();
    let objective = |x: &Vector, y: &Vector| f.f.value(x) + g.f.value(y);
    let mut rec = Recorder::new("admm", &["primal_residual", "dual_residual"], cfg, &x, objective(&x, &y));
    rec.secondary(0, &y);
    let mut term = Termination::IterCap;
    for n in 1..=cfg.max_iter {
        let vx = b.sub(&b_op.apply_raw(&y)).add_scaled(-1.0 / gamma, &z);
        let xn = f.argmin(&vx, gamma)?;
        let ax = a_op.apply_raw(&xn);
        let vy = b.sub(&ax).add_scaled(-1.0 / gamma, &z);
        let yn = g.argmin(&vy, gamma)?;
        let by = b_op.apply_raw(&yn);
        let r = ax.add(&by).sub(b);
        z.axpy(gamma, &r);
        let dual_res = gamma * by.dist(&b_op.apply_raw(&y));
        let residual = xn.dist(&x);
        x = xn;
        y = yn;
        rec.secondary(n, &y);
        if let Some(t) = rec.push(n, &x, objective(&x, &y), residual, vec![r.norm(), dual_res]) {
            term = t;
            break;
        }
    }
    rec.aux("y", y);
    rec.aux("z", z);
    Ok(rec.finish(term, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{L1Norm, Quadratic};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    fn sq(c: f64) -> SharedProx {
        Arc::new(Quadratic::centered(v(&[c]), 1.0).unwrap())
    }

    #[test]
    fn dr_two_quadratics_meet_in_the_middle() {
        let t = douglas_rachford(sq(0.0).as_ref(), sq(4.0).as_ref(), &v(&[0.0]), &SolverConfig::default().with_max_iter(200))
            .unwrap();
        assert!((t.solution[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dr_fixed_point_start_is_constant() {
        let t = douglas_rachford(sq(1.0).as_ref(), sq(1.0).as_ref(), &v(&[1.0]), &SolverConfig::default().with_max_iter(10))
            .unwrap();
        assert!(t.residuals().iter().all(|r| *r == 0.0));
    }

    #[test]
    fn dr_matches_two_sequence_form() {
        // v_n = prox_{γg}(w_n), w_{n+1} = w_n + prox_{γf}(2v_n − w_n) − v_n
        let f = L1Norm::new(1.0).unwrap();
        let g = Quadratic::centered(v(&[3.0]), 1.0).unwrap();
        let gamma = 0.7;
        let cfg = SolverConfig::default().with_max_iter(30).with_step(gamma);
        let t = douglas_rachford(&f, &g, &v(&[-1.0]), &cfg).unwrap();
        let mut w = v(&[-1.0]);
        for n in 1..=30 {
            let vv = g.prox(&w, gamma).unwrap();
            w = w.add(&f.prox(&vv.scale(2.0).sub(&w), gamma).unwrap()).sub(&vv);
            assert!(t.iterate(n).unwrap().dist(&w) < 1e-14);
        }
    }

    #[test]
    fn mu_out_of_range_rejected() {
        let cfg = SolverConfig::default().with_relaxation(Relaxation::Constant { value: 2.5 });
        assert!(douglas_rachford(sq(0.0).as_ref(), sq(1.0).as_ref(), &v(&[0.0]), &cfg).is_err());
    }

    #[test]
    fn ppxa_scalar_cases() {
        let cfg = SolverConfig::default().with_max_iter(500);
        let same = [PpxaPart::new(sq(1.5)), PpxaPart::new(sq(1.5))];
        assert!((ppxa(&same, &v(&[0.0]), &cfg).unwrap().solution[0] - 1.5).abs() < 1e-10);
        let l1: SharedProx = Arc::new(L1Norm::new(1.0).unwrap());
        let lasso = [PpxaPart::new(l1.clone()), PpxaPart::new(sq(3.0))];
        let t = ppxa(&lasso, &v(&[0.0]), &cfg).unwrap();
        assert!((t.solution[0] - 2.0).abs() < 1e-8);
        let dr = douglas_rachford(l1.as_ref(), sq(3.0).as_ref(), &v(&[0.0]), &cfg).unwrap();
        assert!(t.solution.dist(&dr.solution) < 1e-6);
    }

    #[test]
    fn ppxa_with_operator_solves_scaled_term() {
        // |x| + ½(2x − 6)²  → minimizer x = 2.75
        let l1: SharedProx = Arc::new(L1Norm::new(1.0).unwrap());
        let parts = [
            PpxaPart::new(l1),
            PpxaPart::with_operator(sq(6.0), LinearOperator::scale(1, 2.0)),
        ];
        let t = ppxa(&parts, &v(&[0.0]), &SolverConfig::default().with_max_iter(2000)).unwrap();
        assert!((t.solution[0] - 2.75).abs() < 1e-8, "{:?}", t.solution);
    }

    #[test]
    fn admm_consensus_lasso_scalar() {
        let f = AdmmBlock::new(Arc::new(L1Norm::new(1.0).unwrap()), LinearOperator::identity(1));
        let g = AdmmBlock::new(sq(3.0), LinearOperator::scale(1, -1.0));
        let t = admm(&f, &g, &v(&[0.0]), None, None, &v(&[0.0]), &SolverConfig::default().with_max_iter(300)).unwrap();
        assert!((t.solution[0] - 2.0).abs() < 1e-10);
        assert!((t.aux["y"][0] - 2.0).abs() < 1e-10);
        assert!(*t.extra("primal_residual").unwrap().last().unwrap() < 1e-10);
    }

    #[test]
    fn admm_simple_form_matches_prox_iteration() {
        // x⁺ = prox_{f/γ}(y − z/γ), y⁺ = prox_{g/γ}(x⁺ + z/γ), z⁺ = z + γ(x⁺ − y⁺)
        let fl = L1Norm::new(1.0).unwrap();
        let gq = Quadratic::centered(v(&[3.0, -1.0]), 2.0).unwrap();
        let gamma = 1.7;
        let f = AdmmBlock::new(Arc::new(fl), LinearOperator::identity(2));
        let g = AdmmBlock::new(Arc::new(gq.clone()), LinearOperator::scale(2, -1.0));
        let cfg = SolverConfig::default().with_max_iter(25).with_step(gamma);
        let z0 = v(&[0.3, 0.1]);
        let t = admm(&f, &g, &v(&[0.0, 0.0]), None, Some(&v(&[1.0, 1.0])), &z0, &cfg).unwrap();
        let (mut y, mut z) = (v(&[1.0, 1.0]), z0);
        for n in 1..=25 {
            let x = fl.prox(&y.add_scaled(-1.0 / gamma, &z), 1.0 / gamma).unwrap();
            y = gq.prox(&x.add_scaled(1.0 / gamma, &z), 1.0 / gamma).unwrap();
            z = z.add_scaled(gamma, &x.sub(&y));
            assert!(t.iterate(n).unwrap().dist(&x) < 1e-13);
        }
    }

    #[test]
    fn admm_quadratic_block_with_general_operator() {
        // min ½(x − 1)² + ½(y − 5)² s.t. 2x − y = 0  → x = 11/5 · 1/… solve: x = (1 + 10)/5
        let f = AdmmBlock::new(
            Arc::new(Quadratic::centered(v(&[1.0]), 1.0).unwrap()),
            LinearOperator::dense(1, 1, vec![2.0]).unwrap(),
        );
        let g = AdmmBlock::new(sq(5.0), LinearOperator::scale(1, -1.0));
        let t = admm(&f, &g, &v(&[0.0]), None, None, &v(&[0.0]), &SolverConfig::default().with_max_iter(500)).unwrap();
        assert!((t.solution[0] - 11.0 / 5.0).abs() < 1e-8, "{:?}", t.solution);
    }
}
