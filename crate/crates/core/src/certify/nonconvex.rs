use super::{fit_rate, slack, RateModel, Report, Tally};
use crate::solvers::SolverTrace;

const H1_TOL: f64 = 1e-8;

/// Checks the sufficient-decrease hypothesis
/// `J(x_{n−1}) − J(x_n) ≥ a‖x_n − x_{n−1}‖²` with `a = 1/(2γ) − L/2` at every
/// step and, when the trace carries the relative-error witness, that
/// `‖ω_n‖ ≤ b‖x_n − x_{n−1}‖`. Reports the fitted decay of the running
/// minimum residual. The Kurdyka-Łojasiewicz property itself is not
/// evaluated.
pub fn kl_monitor(trace: &SolverTrace, gamma: f64, l: f64) -> Report {
    let a = 1.0 / (2.0 * gamma) - l / 2.0;
    let mut tally = Tally::new("kl_monitor", &trace.algorithm);
    tally.note(format!("a = {a}"));
    let mut prev = trace.initial_objective;
    for r in &trace.records {
        let margin = prev - r.objective - a * r.residual * r.residual;
        tally.record(margin, H1_TOL, || format!("H1 at n={}", r.n));
        prev = r.objective;
    }
    if let (Some(w), Some(b)) = (trace.extra("h2_witness"), trace.extra("h2_bound")) {
        for (i, (w, b)) in w.iter().zip(&b).enumerate() {
            tally.record(b - w, slack(*b), || format!("H2 at n={}", i + 1));
        }
    } else {
        tally.note("no relative-error witness in the trace; H2 skipped".into());
    }
    let mut best = f64::INFINITY;
    let running_min: Vec<f64> = trace
        .residuals()
        .iter()
        .map(|r| {
            best = best.min(*r);
            best
        })
        .collect();
    let squared: Vec<f64> = running_min.iter().map(|r| r * r).collect();
    if let Ok(fit) = fit_rate(&squared, RateModel::InvN) {
        tally.note(format!(
            "min residual squared ~ {:e}/n (R^2 = {:.3}, {} points)",
            fit.constant, fit.r_squared, fit.points
        ));
    }
    tally.finish()
}

/// `C_N = √N · min_{n≤N} ‖x_n − x_{n−1}‖` at each horizon against the
/// a priori bound `√((J(x_0) − J(x_N))/a)` that follows from summing the
/// sufficient-decrease inequality. Stability means every `C_N` stays below
/// the bound of the longest horizon.
pub fn min_residual_stability(trace: &SolverTrace, a: f64, horizons: &[usize]) -> Report {
    let mut tally = Tally::new("min_residual_stability", &trace.algorithm);
    if !(a > 0.0) {
        tally.fail(format!("sufficient-decrease constant must be positive, got {a}"));
        return tally.finish();
    }
    let residuals = trace.residuals();
    let objectives = trace.objectives();
    let n_max = horizons.iter().copied().max().unwrap_or(0);
    if residuals.len() < n_max {
        tally.fail(format!("trace has {} records, horizon {n_max} requested", residuals.len()));
        return tally.finish();
    }
    let j0 = trace.initial_objective;
    let overall = ((j0 - objectives[n_max - 1]).max(0.0) / a).sqrt();
    let mut cs = Vec::new();
    for &n in horizons {
        let min_r = residuals[..n].iter().copied().fold(f64::INFINITY, f64::min);
        let c = (n as f64).sqrt() * min_r;
        let bound = ((j0 - objectives[n - 1]).max(0.0) / a).sqrt();
        tally.record(bound - c, slack(bound), || format!("N={n}: C_N = {c} > {bound}"));
        tally.record(overall - c, slack(overall), || format!("N={n}: C_N = {c} exceeds the common bound {overall}"));
        cs.push(format!("C_{n} = {c:e}"));
    }
    tally.note(format!("{} (common bound {overall:e})", cs.join(", ")));
    tally.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::{DoubleWell, HardThreshold, L1Norm, Quadratic, Zero};
    use crate::linops::Vector;
    use crate::solvers::{forward_backward, nonconvex_forward_backward, SolverConfig};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_slice(xs)
    }

    #[test]
    fn double_well_hypotheses() {
        let cfg = SolverConfig::default().with_max_iter(1000).with_step(0.1);
        let t = nonconvex_forward_backward(&DoubleWell::new(), &Zero, &v(&[0.5]), &cfg).unwrap();
        assert!(kl_monitor(&t, 0.1, 2.0).pass);
        assert!(min_residual_stability(&t, 1.0 / 0.2 - 1.0, &[10, 100, 1000]).pass);
    }

    #[test]
    fn hard_threshold_hypotheses() {
        let f = Quadratic::centered(v(&[3.0]), 1.0).unwrap();
        let g = HardThreshold { weight: 1.0 };
        let cfg = SolverConfig::default().with_max_iter(100).with_step(0.5);
        let t = nonconvex_forward_backward(&f, &g, &v(&[0.2]), &cfg).unwrap();
        assert!(kl_monitor(&t, 0.5, 1.0).pass);
    }

    #[test]
    fn convex_fb_passes_without_witness() {
        let f = Quadratic::centered(v(&[3.0, -1.0]), 1.0).unwrap();
        let g = L1Norm::new(1.0).unwrap();
        let t = forward_backward(&f, &g, &v(&[0.0, 0.0]), &SolverConfig::default().with_max_iter(50)).unwrap();
        assert!(kl_monitor(&t, 1.0, 1.0).pass);
    }
}
