//! Numerical certificates: inequalities along traces, rate fits, primal-dual
//! gaps, algorithm-equivalence harnesses and property suites.
//!
//! Every check returns a [`Report`]; a failing report is a result, not an
//! error. Inequalities are tested with an absolute slack of `1e-9` plus
//! `1e-12` relative to the magnitude of the compared terms unless a check
//! states otherwise.

mod bounds;
mod controls;
mod equivalence;
mod gap;
mod nonconvex;
mod properties;
mod suite;

pub use bounds::{check_descent_inequality, check_lyapunov_gd, check_rate_bound, DescentScheme};
pub use controls::{ascending_trace, negative_controls, InflatedProx};
pub use equivalence::{dr_admm_equivalence, dr_cp_equivalence, equivalence_threshold};
pub use gap::{check_cp_gap, check_pd_gap, GapBox};
pub use nonconvex::{kl_monitor, min_residual_stability};
pub use properties::{check_gradient_contraction, check_prox_contraction, property_suite, Subject, SuiteConfig};
pub use suite::{run_check, CONTROL_CHECKS, DEFAULT_SUITE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ABS_SLACK: f64 = 1e-9;
pub const REL_SLACK: f64 = 1e-12;
const MAX_DETAILS: usize = 20;

pub(crate) fn slack(scale: f64) -> f64 {
    ABS_SLACK + REL_SLACK * scale.abs()
}

/// Outcome of one check on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub check: String,
    pub instance: String,
    pub pass: bool,
    /// Smallest `bound − value` seen; negative values are violations
    /// (before slack).
    pub worst_margin: f64,
    pub n_violations: usize,
    pub details: Vec<String>,
}

impl Report {
    pub fn failed(check: &str, instance: &str, reason: String) -> Self {
        Report {
            check: check.into(),
            instance: instance.into(),
            pass: false,
            worst_margin: f64::NEG_INFINITY,
            n_violations: 1,
            details: vec![reason],
        }
    }

    /// One line `PASS|FAIL check [instance] margin=… violations=…`.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {} [{}] worst_margin={:e} violations={}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check,
            self.instance,
            self.worst_margin,
            self.n_violations
        )
    }
}

/// Accumulates margins for one report.
pub(crate) struct Tally {
    check: String,
    instance: String,
    worst: f64,
    violations: usize,
    checked: usize,
    details: Vec<String>,
}

impl Tally {
    pub(crate) fn new(check: &str, instance: &str) -> Self {
        Tally {
            check: check.into(),
            instance: instance.into(),
            worst: f64::INFINITY,
            violations: 0,
            checked: 0,
            details: Vec::new(),
        }
    }

    /// Records `margin`; it is a violation when below `−tol` or NaN.
    pub(crate) fn record(&mut self, margin: f64, tol: f64, what: impl FnOnce() -> String) {
        self.checked += 1;
        if margin.is_nan() || margin < self.worst {
            self.worst = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        }
        if margin.is_nan() || margin < -tol {
            self.violations += 1;
            if self.details.len() < MAX_DETAILS {
                self.details.push(format!("{} (margin {margin:e})", what()));
            }
        }
    }

    pub(crate) fn note(&mut self, line: String) {
        self.details.push(line);
    }

    pub(crate) fn fail(&mut self, line: String) {
        self.violations += 1;
        self.worst = f64::NEG_INFINITY;
        self.details.push(line);
    }

    pub(crate) fn finish(self) -> Report {
        let mut details = self.details;
        if self.violations > MAX_DETAILS {
            details.push(format!("... {} violations in total", self.violations));
        }
        details.insert(0, format!("{} comparisons", self.checked));
        Report {
            check: self.check,
            instance: self.instance,
            pass: self.violations == 0,
            worst_margin: self.worst,
            n_violations: self.violations,
            details,
        }
    }
}

/// Decay models for [`fit_rate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `C / n`
    InvN,
    /// `C / n²`
    InvN2,
    /// `C · qⁿ`
    Geometric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub constant: f64,
    /// Fitted ratio `q` (geometric model only).
    pub ratio: Option<f64>,
    pub r_squared: f64,
    /// Number of leading terms used.
    pub points: usize,
}

/// Least-squares fit of `log s_n` (with `n = 1, 2, …`) against the model.
/// Only the leading run of positive finite terms is used.
pub fn fit_rate(series: &[f64], model: RateModel) -> Result<RateFit> {
    let logs: Vec<(f64, f64)> = series
        .iter()
        .take_while(|s| **s > 0.0 && s.is_finite())
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64, s.ln()))
        .collect();
    let need = if model == RateModel::Geometric { 2 } else { 1 };
    if logs.len() < need {
        return Err(Error::InvalidValue(format!(
            "rate fit needs at least {need} positive leading terms, got {}",
            logs.len()
        )));
    }
    let m = logs.len() as f64;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let (predict, constant, ratio): (Box<dyn Fn(f64) -> f64>, f64, Option<f64>) = match model {
        RateModel::InvN | RateModel::InvN2 => {
            let p = if model == RateModel::InvN { 1.0 } else { 2.0 };
            let log_c = logs.iter().map(|(n, y)| y + p * n.ln()).sum::<f64>() / m;
            (Box::new(move |n: f64| log_c - p * n.ln()), log_c.exp(), None)
        }
        RateModel::Geometric => {
            let mean_n = logs.iter().map(|p| p.0).sum::<f64>() / m;
            let sxx: f64 = logs.iter().map(|p| (p.0 - mean_n).powi(2)).sum();
            let sxy: f64 = logs.iter().map(|p| (p.0 - mean_n) * (p.1 - mean_y)).sum();
            let b = sxy / sxx;
            let a = mean_y - b * mean_n;
            (Box::new(move |n: f64| a + b * n), a.exp(), Some(b.exp()))
        }
    };
    let ss_res: f64 = logs.iter().map(|(n, y)| (y - predict(*n)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-20 {
        1.0
    } else {
        0.0
    };
    Ok(RateFit {
        constant,
        ratio,
        r_squared,
        points: logs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverse_n() {
        let s: Vec<f64> = (1..=100).map(|n| 1.0 / n as f64).collect();
        let fit = fit_rate(&s, RateModel::InvN).unwrap();
        assert!((fit.constant - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_ratio() {
        let s: Vec<f64> = (1..=60).map(|n| 3.0 * 0.9f64.powi(n)).collect();
        let fit = fit_rate(&s, RateModel::Geometric).unwrap();
        assert!((fit.ratio.unwrap() - 0.9).abs() < 1e-12);
        assert!((fit.constant - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zeros_truncate_the_fit() {
        let s = [4.0, 1.0, 0.0, 0.0];
        let fit = fit_rate(&s, RateModel::InvN2).unwrap();
        assert_eq!(fit.points, 2);
        assert!((fit.constant - 4.0).abs() < 1e-12);
        assert!(fit_rate(&[0.0], RateModel::InvN).is_err());
    }

    #[test]
    fn tally_counts_nan_as_violation() {
        let mut t = Tally::new("c", "i");
        t.record(1.0, 0.0, || "fine".into());
        t.record(f64::NAN, 0.0, || "nan".into());
        let r = t.finish();
        assert!(!r.pass);
        assert_eq!(r.n_violations, 1);
    }
}
