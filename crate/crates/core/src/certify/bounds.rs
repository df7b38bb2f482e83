use serde::{Deserialize, Serialize};

use super::{slack, Report, Tally};
use crate::linops::Vector;
use crate::solvers::SolverTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentScheme {
    /// `c = (2 − γL)/(2γ)`
    Gradient,
    /// `c = 1/γ − L/2`
    ForwardBackward,
}

/// `J(x_n) + c‖x_n − x_{n−1}‖² ≤ J(x_{n−1})` for every record.
pub fn check_descent_inequality(trace: &SolverTrace, l: f64, gamma: f64, scheme: DescentScheme) -> Report {
    let c = match scheme {
        DescentScheme::Gradient => (2.0 - gamma * l) / (2.0 * gamma),
        DescentScheme::ForwardBackward => 1.0 / gamma - l / 2.0,
    };
    let mut tally = Tally::new("descent_inequality", &trace.algorithm);
    tally.note(format!("c = {c}"));
    let mut prev = trace.initial_objective;
    for r in &trace.records {
        let lhs = r.objective + c * r.residual * r.residual;
        tally.record(prev - lhs, slack(prev.abs().max(lhs.abs())), || {
            format!("n={}: {lhs} > {prev}", r.n)
        });
        prev = r.objective;
    }
    tally.finish()
}

/// Lyapunov sequence `S_n = n(f(x_n) − f*) + (L/2)‖x_n − x*‖²` non-increasing
/// over the stored iterates, together with `f(x_n) − f* ≤ L‖x0 − x*‖²/(2n)`
/// for every record.
pub fn check_lyapunov_gd(trace: &SolverTrace, l: f64, x_star: &Vector, f_star: f64) -> Report {
    let mut tally = Tally::new("lyapunov_gd", &trace.algorithm);
    let objective_at = |n: usize| {
        if n == 0 {
            trace.initial_objective
        } else {
            trace.records[n - 1].objective
        }
    };
    let mut prev: Option<(usize, f64)> = None;
    for (n, x) in &trace.iterates {
        if *n > trace.records.len() {
            break;
        }
        let s = *n as f64 * (objective_at(*n) - f_star) + 0.5 * l * x.dist(x_star).powi(2);
        if let Some((pn, ps)) = prev {
            tally.record(ps - s, slack(ps.max(s)), || format!("S_{n} = {s} > S_{pn} = {ps}"));
        }
        prev = Some((*n, s));
    }
    match trace.iterate(0) {
        Some(x0) => {
            let d0 = x0.dist(x_star).powi(2);
            for r in &trace.records {
                let bound = l * d0 / (2.0 * r.n as f64);
                let gap = r.objective - f_star;
                tally.record(bound - gap, slack(bound), || format!("n={}: gap {gap} > {bound}", r.n));
            }
        }
        None => tally.fail("starting point not stored in the trace".into()),
    }
    tally.finish()
}

/// `J(x_n) − J* ≤ bound(n)` for every record `n ≥ 1`.
pub fn check_rate_bound(check: &str, trace: &SolverTrace, j_star: f64, bound: &dyn Fn(usize) -> f64) -> Report {
    let mut tally = Tally::new(check, &trace.algorithm);
    for r in &trace.records {
        let b = bound(r.n);
        let gap = r.objective - j_star;
        tally.record(b - gap, slack(b.max(r.objective.abs())), || format!("n={}: gap {gap} > {b}", r.n));
    }
    tally.finish()
}
