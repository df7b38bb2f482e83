use std::sync::Arc;

use super::equivalence::dr_cp_with_steps;
use super::{check_descent_inequality, check_rate_bound, property_suite, DescentScheme, Report, Subject, SuiteConfig};
use crate::error::Result;
use crate::funcs::{DoubleWell, L1Norm, ProxFn, Quadratic, SharedProx};
use crate::linops::Vector;
use crate::solvers::{gradient_descent, SolverConfig, SolverTrace, StepRule, Termination, TraceRecord};
use std::collections::BTreeMap;

/// A trace whose objective increases at every step.
pub fn ascending_trace() -> SolverTrace {
    SolverTrace {
        algorithm: "fabricated_ascent".into(),
        extra_names: vec![],
        initial_objective: 1.0,
        records: (1..=5)
            .map(|n| TraceRecord {
                n,
                objective: 1.0 + n as f64,
                residual: 0.5,
                extras: vec![],
            })
            .collect(),
        iterates: vec![],
        secondary: vec![],
        termination: Termination::IterCap,
        solution: Vector::zeros(1),
        aux: BTreeMap::new(),
    }
}

/// Wraps a function and scales its prox output, so that the reported map
/// is no longer a proximity operator.
pub struct InflatedProx {
    pub inner: SharedProx,
    pub factor: f64,
}

impl ProxFn for InflatedProx {
    fn value(&self, x: &Vector) -> f64 {
        self.inner.value(x)
    }

    fn prox(&self, x: &Vector, gamma: f64) -> Result<Vector> {
        Ok(self.inner.prox(x, gamma)?.scale(self.factor))
    }

    fn conjugate(&self) -> Option<SharedProx> {
        self.inner.conjugate()
    }

    fn name(&self) -> String {
        format!("inflated({}, {})", self.inner.name(), self.factor)
    }
}

/// Runs every check on inputs built to violate it. Each returned report is
/// expected to fail.
pub fn negative_controls(seed: u64) -> Vec<Report> {
    let mut out = Vec::new();
    let tag = |mut r: Report, what: &str| {
        r.instance = format!("control:{what}");
        r
    };
    out.push(tag(
        check_descent_inequality(&ascending_trace(), 1.0, 1.0, DescentScheme::Gradient),
        "ascending_trace",
    ));

    let cfg = SuiteConfig {
        dim: 1,
        scale: 0.6,
        seed,
        ..Default::default()
    };
    let dw = DoubleWell::mislabeled_convex();
    if let Some(r) = property_suite(Subject::Smooth(&dw), &cfg).into_iter().find(|r| r.check == "cocoercivity") {
        out.push(tag(r, "double_well_declared_convex"));
    }

    let inflated = InflatedProx {
        inner: Arc::new(L1Norm::new(1.0).expect("positive weight")),
        factor: 1.5,
    };
    let cfg = SuiteConfig { seed, ..Default::default() };
    for r in property_suite(Subject::Prox(&inflated), &cfg) {
        if matches!(r.check.as_str(), "firm_nonexpansiveness" | "moreau_identity") {
            out.push(tag(r, "inflated_l1_prox"));
        }
    }

    // f = ½x², γ = 1/2: f(x_n) = 4⁻ⁿ f(x0); claim 5⁻ⁿ instead
    let f = Quadratic::centered(Vector::from_slice(&[0.0]), 1.0).expect("positive scale");
    if let Ok(t) = gradient_descent(
        &f,
        &Vector::from_slice(&[1.0]),
        &SolverConfig::default().with_max_iter(20).with_step(0.5),
        StepRule::Fixed,
    ) {
        let j0 = t.initial_objective;
        out.push(tag(
            check_rate_bound("linear_rate", &t, 0.0, &|n| 0.2f64.powi(n as i32) * j0),
            "overstated_rate",
        ));
    }

    // the mapping needs σ = 1/γ; run the primal-dual side with σ = 2/γ
    let sq: SharedProx = Arc::new(Quadratic::centered(Vector::from_slice(&[0.0]), 1.0).expect("positive scale"));
    let q: SharedProx = Arc::new(Quadratic::centered(Vector::from_slice(&[3.0]), 1.0).expect("positive scale"));
    let (x0, w0) = (Vector::from_slice(&[0.0]), Vector::from_slice(&[-1.0]));
    if let Ok(r) = dr_cp_with_steps(sq, q, 1.0, (2.0, 1.0), &x0, &w0, 50) {
        out.push(tag(r, "mismatched_dr_cp_steps"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_control_is_flagged() {
        let reports = negative_controls(0);
        assert_eq!(reports.len(), 6);
        for r in reports {
            assert!(!r.pass, "{r:?}");
        }
    }
}
