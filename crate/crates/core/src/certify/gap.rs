use super::{slack, Report, Tally};
use crate::error::{Error, Result};
use crate::funcs::{Bounds, SaddleProblem, ScalarPiece};
use crate::linops::{LinearMap, Vector};
use crate::solvers::{chambolle_pock, SolverConfig};

/// Bounded boxes `B₁ × B₂` for the partial primal-dual gap.
#[derive(Clone, Debug, PartialEq)]
pub struct GapBox {
    pub primal: Bounds,
    pub dual: Bounds,
}

impl GapBox {
    /// `[c − r, c + r]` around each point.
    pub fn around(x: &Vector, rx: f64, y: &Vector, ry: f64) -> Result<Self> {
        let b = |c: &Vector, r: f64| Bounds::new(c.iter().map(|v| v - r).collect(), c.iter().map(|v| v + r).collect());
        Ok(GapBox {
            primal: b(x, rx)?,
            dual: b(y, ry)?,
        })
    }

    fn check(&self, n: usize, m: usize) -> Result<()> {
        self.primal.check(n)?;
        self.dual.check(m)?;
        for (b, d) in [(&self.primal, n), (&self.dual, m)] {
            for i in 0..d {
                let (lo, hi) = b.at(i);
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(Error::InvalidValue("gap boxes must be bounded".into()));
                }
            }
        }
        Ok(())
    }

    /// `sup_{x∈B₁} ‖x − x0‖²`, `sup_{y∈B₂} ‖y − y0‖²`.
    fn far_corner(b: &Bounds, c: &Vector) -> f64 {
        (0..c.len())
            .map(|i| {
                let (lo, hi) = b.at(i);
                (lo - c[i]).powi(2).max((hi - c[i]).powi(2))
            })
            .sum()
    }
}

fn pieces(f: &dyn crate::funcs::ProxFn, dim: usize, what: &str) -> Result<Vec<ScalarPiece>> {
    f.separable_form(dim).ok_or_else(|| {
        Error::Unsupported(format!("partial gap needs a separable closed form for {what} ({})", f.name()))
    })
}

fn min_linear(p: &[ScalarPiece], a: &Vector, b: &Bounds) -> Result<f64> {
    let mut total = 0.0;
    for (i, piece) in p.iter().enumerate() {
        let (lo, hi) = b.at(i);
        total += piece.minimize_linear(a[i], lo, hi)?.1;
    }
    Ok(total)
}

/// Partial primal-dual gap
/// `max_{y'∈B₂} h(x, y') − min_{x'∈B₁} h(x', y)` with
/// `h(x, y) = ⟨Kx, y⟩ − f*(y) + g(x)`.
///
/// Both inner problems are solved exactly; `g` and `f*` must expose a
/// separable scalar description.
pub fn check_pd_gap(prob: &SaddleProblem, x: &Vector, y: &Vector, boxes: &GapBox) -> Result<f64> {
    let (n, m) = (prob.primal_dim(), prob.dual_dim());
    x.check_len(n, "gap primal point")?;
    y.check_len(m, "gap dual point")?;
    boxes.check(n, m)?;
    let fstar = prob
        .conjugate_term()
        .ok_or_else(|| Error::Unsupported("partial gap needs f* in closed form".into()))?;
    let gp = pieces(prob.g.as_ref(), n, "g")?;
    let fp = pieces(fstar.as_ref(), m, "f*")?;
    let kx = prob.k.apply_raw(x);
    let kty = prob.k.adjoint_raw(y);
    // max_{y'} ⟨Kx, y'⟩ − f*(y') = −min_{y'} f*(y') − ⟨Kx, y'⟩
    let sup_dual = -min_linear(&fp, &kx.scale(-1.0), &boxes.dual)?;
    let inf_primal = min_linear(&gp, &kty, &boxes.primal)?;
    Ok(prob.g.value(x) + sup_dual - inf_primal + fstar.value(y))
}

/// Ergodic-gap and boundedness certificate for one primal-dual run.
///
/// Runs the primal-dual iteration for `max(horizons)` steps and, at every
/// horizon `N`, checks
/// * `G_B(x^N, y^N) ≤ D(B₁, B₂)/N` with
///   `D = sup_B ‖x − x0‖²/(2τ) + ‖y − y0‖²/(2σ)`,
/// * `h(x^N, y*) − h(x*, y^N) ≤ (‖x0−x*‖²/(2τ) + ‖y0−y*‖²/(2σ) − ⟨K(x0−x*), y0−y*⟩)/N`,
/// * `G_B ≥ −1e-8`;
///
/// and at every iteration
/// `‖y_n − y*‖²/(2σ) + ‖x_n − x*‖²/(2τ) ≤ (1 − τσL²)⁻¹ (same at n = 0)`.
#[allow(clippy::too_many_arguments)]
pub fn check_cp_gap(
    instance: &str,
    prob: &SaddleProblem,
    x0: &Vector,
    y0: &Vector,
    sigma: f64,
    tau: f64,
    saddle: (&Vector, &Vector),
    boxes: &GapBox,
    horizons: &[usize],
) -> Result<Report> {
    let (xs, ys) = saddle;
    let n_max = horizons.iter().copied().max().unwrap_or(0);
    let cfg = SolverConfig::default().with_max_iter(n_max).with_pd_steps(sigma, tau);
    let trace = chambolle_pock(prob, x0, y0, &cfg)?;
    let mut tally = Tally::new("cp_gap", instance);
    if trace.len() < n_max {
        tally.fail(format!("run stopped after {} of {n_max} iterations", trace.len()));
        return Ok(tally.finish());
    }
    let l = prob.k.norm();
    let q = 1.0 - tau * sigma * l * l;
    let energy = |x: &Vector, y: &Vector| y.dist(ys).powi(2) / (2.0 * sigma) + x.dist(xs).powi(2) / (2.0 * tau);
    let e0 = energy(x0, y0);
    let d_box = GapBox::far_corner(&boxes.primal, x0) / (2.0 * tau) + GapBox::far_corner(&boxes.dual, y0) / (2.0 * sigma);
    let d_saddle = x0.dist(xs).powi(2) / (2.0 * tau) + y0.dist(ys).powi(2) / (2.0 * sigma)
        - prob.k.apply_raw(&x0.sub(xs)).dot(&y0.sub(ys));
    let fstar = prob
        .conjugate_term()
        .ok_or_else(|| Error::Unsupported("gap certificate needs f* in closed form".into()))?;
    let h = |x: &Vector, y: &Vector| prob.k.apply_raw(x).dot(y) - fstar.value(y) + prob.g.value(x);
    tally.note(format!("||K|| = {l}, sigma = {sigma}, tau = {tau}, D(B) = {d_box}, D(saddle) = {d_saddle}"));

    let mut x_sum = Vector::zeros(x0.len());
    let mut y_sum = Vector::zeros(y0.len());
    for n in 1..=n_max {
        let x = trace.iterate(n).expect("every iterate kept");
        let y = &trace.secondary[n].1;
        x_sum.axpy(1.0, x);
        y_sum.axpy(1.0, y);
        let e = energy(x, y);
        let bound = e0 / q;
        tally.record(bound - e, slack(bound), || format!("n={n}: energy {e} > {bound}"));
        if horizons.contains(&n) {
            let (xn, yn) = (x_sum.scale(1.0 / n as f64), y_sum.scale(1.0 / n as f64));
            let gap = check_pd_gap(prob, &xn, &yn, boxes)?;
            let b = d_box / n as f64;
            tally.record(gap + 1e-8, 0.0, || format!("N={n}: negative gap {gap}"));
            tally.record(b - gap, slack(b), || format!("N={n}: box gap {gap} > {b}"));
            let sg = h(&xn, ys) - h(xs, &yn);
            let sb = d_saddle / n as f64;
            tally.record(sb - sg, slack(sb), || format!("N={n}: saddle gap {sg} > {sb}"));
            tally.note(format!("N={n}: box gap {gap:e} <= {b:e}; saddle gap {sg:e} <= {sb:e}"));
        }
    }
    Ok(tally.finish())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::funcs::{DualTerm, Indicator, Quadratic};
    use crate::linops::LinearOperator;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    fn scalar() -> SaddleProblem {
        SaddleProblem::new(
            DualTerm::Conjugate {
                conj: Arc::new(Indicator::boxed(-1.0, 1.0).unwrap()),
                primal: None,
            },
            Arc::new(Quadratic::centered(v(&[0.0]), 1.0).unwrap()),
            LinearOperator::identity(1),
        )
    }

    #[test]
    fn zero_gap_at_hand_saddle_point() {
        let b = GapBox::around(&v(&[0.0]), 2.0, &v(&[0.0]), 1.0).unwrap();
        assert!(check_pd_gap(&scalar(), &v(&[0.0]), &v(&[0.0]), &b).unwrap().abs() < 1e-15);
        assert!(check_pd_gap(&scalar(), &v(&[1.5]), &v(&[0.5]), &b).unwrap() > 0.0);
    }

    #[test]
    fn gap_certificate_scalar() {
        let b = GapBox::around(&v(&[0.0]), 2.0, &v(&[0.0]), 1.0).unwrap();
        let r = check_cp_gap("scalar", &scalar(), &v(&[1.5]), &v(&[-0.5]), 0.9, 0.9, (&v(&[0.0]), &v(&[0.0])), &b, &[10, 100])
            .unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn unsupported_function_is_rejected() {
        let prob = SaddleProblem::from_primal(
            Arc::new(Indicator::affine_graph(LinearOperator::identity(1))),
            Arc::new(Quadratic::centered(v(&[0.0, 0.0]), 1.0).unwrap()),
            LinearOperator::identity(2),
        );
        let b = GapBox::around(&v(&[0.0, 0.0]), 1.0, &v(&[0.0, 0.0]), 1.0).unwrap();
        assert!(check_pd_gap(&prob, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &b).is_err());
    }
}
