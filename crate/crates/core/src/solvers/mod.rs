//! Iterative schemes producing a uniform [`SolverTrace`].
//!
//! Record `n` (for `n ≥ 1`) describes the state after `n` iterations: the
//! objective at the reported iterate and the residual `‖x_n − x_{n−1}‖` of the
//! governing sequence. The objective at the starting point is kept separately
//! as [`SolverTrace::initial_objective`].

mod gradient;
mod primal_dual;
mod proximal;
mod splitting;

pub use gradient::{gradient_descent, projected_gradient, StepRule};
pub use primal_dual::{
    arrow_hurwicz, chambolle_pock, condat, condat_default_steps, cp_default_steps, pd_step, CondatTerm, PdState,
};
pub use proximal::{
    fista_t_next, forward_backward, krasnoselskii_mann, nonconvex_forward_backward, proximal_point,
};
pub use splitting::{admm, douglas_rachford, dr_step, ppxa, AdmmBlock, PpxaPart, Subsolver};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::Vector;

/// Objective values above this (or NaN) stop a run as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Inertia {
    #[default]
    None,
    FistaT,
    FistaBeta {
        beta: f64,
    },
    Vfista,
}

/// Relaxation sequence `μ_n` (Douglas-Rachford) or `λ_n` (Krasnosel'skii-Mann).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Relaxation {
    Constant { value: f64 },
    /// `start · n^(−exponent)`, `exponent ∈ [0, 1]` so that the sum diverges.
    Decaying { start: f64, exponent: f64 },
}

impl Relaxation {
    pub fn at(&self, n: usize) -> f64 {
        match *self {
            Relaxation::Constant { value } => value,
            Relaxation::Decaying { start, exponent } => start * (n.max(1) as f64).powf(-exponent),
        }
    }

    /// Checks every term lies in `[0, upper]`.
    pub fn validate(&self, upper: f64, what: &str) -> Result<()> {
        match *self {
            Relaxation::Constant { value } => {
                if !(0.0..=upper).contains(&value) {
                    return Err(Error::Config(format!("{what} must lie in [0, {upper}], got {value}")));
                }
            }
            Relaxation::Decaying { start, exponent } => {
                if !(0.0..=upper).contains(&start) {
                    return Err(Error::Config(format!("{what} start must lie in [0, {upper}], got {start}")));
                }
                if !(0.0..=1.0).contains(&exponent) {
                    return Err(Error::Config(format!(
                        "{what} decay exponent must lie in [0, 1], got {exponent}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parameters shared by all solvers; unset fields take per-algorithm defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stepsize `γ`.
    pub step: Option<f64>,
    /// Dual stepsize `σ` (primal-dual methods).
    pub sigma: Option<f64>,
    /// Primal stepsize `τ` (primal-dual methods).
    pub tau: Option<f64>,
    pub inertia: Inertia,
    pub relaxation: Option<Relaxation>,
    /// Condat relaxation `ρ ∈ (0, 1]`.
    pub rho: Option<f64>,
    /// Strong-convexity modulus supplied by the caller (V-FISTA).
    pub strong_convexity: Option<f64>,
    /// Weak-convexity modulus of `g` in the nonconvex forward-backward scheme.
    pub weak_convexity: Option<f64>,
    pub max_iter: usize,
    pub residual_tol: Option<f64>,
    pub objective_tol: Option<f64>,
    /// Store the full iterate every `keep_every` iterations (`0` keeps none).
    pub keep_every: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step: None,
            sigma: None,
            tau: None,
            inertia: Inertia::None,
            relaxation: None,
            rho: None,
            strong_convexity: None,
            weak_convexity: None,
            max_iter: 1000,
            residual_tol: None,
            objective_tol: None,
            keep_every: 1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_step(mut self, gamma: f64) -> Self {
        self.step = Some(gamma);
        self
    }

    pub fn with_inertia(mut self, inertia: Inertia) -> Self {
        self.inertia = inertia;
        self
    }

    pub fn with_relaxation(mut self, r: Relaxation) -> Self {
        self.relaxation = Some(r);
        self
    }

    pub fn with_pd_steps(mut self, sigma: f64, tau: f64) -> Self {
        self.sigma = Some(sigma);
        self.tau = Some(tau);
        self
    }

    pub fn with_residual_tol(mut self, tol: f64) -> Self {
        self.residual_tol = Some(tol);
        self
    }

    pub fn with_keep_every(mut self, k: usize) -> Self {
        self.keep_every = k;
        self
    }

    pub(crate) fn positive(value: Option<f64>, what: &str) -> Result<Option<f64>> {
        match value {
            Some(v) if !(v > 0.0) || !v.is_finite() => {
                Err(Error::Config(format!("{what} must be positive and finite, got {v}")))
            }
            other => Ok(other),
        }
    }

    pub(crate) fn validate_common(&self) -> Result<()> {
        Self::positive(self.step, "step")?;
        Self::positive(self.sigma, "sigma")?;
        Self::positive(self.tau, "tau")?;
        for (v, what) in [(self.residual_tol, "residual_tol"), (self.objective_tol, "objective_tol")] {
            if let Some(t) = v {
                if !(t >= 0.0) {
                    return Err(Error::Config(format!("{what} must be non-negative, got {t}")));
                }
            }
        }
        if let Inertia::FistaBeta { beta } = self.inertia {
            if !(beta > 3.0) {
                return Err(Error::Config(format!("fista_beta requires beta > 3, got {beta}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    TolReached,
    IterCap,
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::TolReached => "tol_reached",
            Termination::IterCap => "iter_cap",
            Termination::Diverged => "diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: usize,
    pub objective: f64,
    pub residual: f64,
    pub extras: Vec<f64>,
}

/// Per-iteration record stream of one solver run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverTrace {
    pub algorithm: String,
    pub extra_names: Vec<String>,
    pub initial_objective: f64,
    pub records: Vec<TraceRecord>,
    /// `(n, x_n)` for the kept iterations, starting with `n = 0`.
    pub iterates: Vec<(usize, Vector)>,
    /// Companion sequence (dual variable, shadow sequence) on the same schedule.
    pub secondary: Vec<(usize, Vector)>,
    pub termination: Termination,
    pub solution: Vector,
    /// Named final quantities (ergodic averages, final dual variable, ...).
    pub aux: BTreeMap<String, Vector>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// `J(x_0), J(x_1), …`
    pub fn objectives_with_initial(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective).chain(self.records.iter().map(|r| r.objective)).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn extra(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.extra_names.iter().position(|e| e == name)?;
        Some(self.records.iter().map(|r| r.extras[i]).collect())
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(self.initial_objective, |r| r.objective)
    }

    pub fn iterate(&self, n: usize) -> Option<&Vector> {
        self.iterates
            .binary_search_by_key(&n, |(k, _)| *k)
            .ok()
            .map(|i| &self.iterates[i].1)
    }

    /// Header `n,objective,residual,<extras>` followed by one row per record.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,objective,residual");
        for e in &self.extra_names {
            s.push(',');
            s.push_str(e);
        }
        s.push('\n');
        for r in &self.records {
            let _ = write!(s, "{},{},{}", r.n, r.objective, r.residual);
            for e in &r.extras {
                let _ = write!(s, ",{e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Shared bookkeeping: thinning, stopping rules and divergence guard.
pub(crate) struct Recorder<'a> {
    cfg: &'a SolverConfig,
    trace: SolverTrace,
    prev_objective: f64,
}

impl<'a> Recorder<'a> {
    pub(crate) fn new(algorithm: &str, extra_names: &[&str], cfg: &'a SolverConfig, x0: &Vector, j0: f64) -> Self {
        let mut iterates = Vec::new();
        if cfg.keep_every > 0 {
            iterates.push((0, x0.clone()));
        }
        Recorder {
            cfg,
            trace: SolverTrace {
                algorithm: algorithm.to_string(),
                extra_names: extra_names.iter().map(|s| s.to_string()).collect(),
                initial_objective: j0,
                records: Vec::with_capacity(cfg.max_iter.min(100_000)),
                iterates,
                secondary: Vec::new(),
                termination: Termination::IterCap,
                solution: x0.clone(),
                aux: BTreeMap::new(),
            },
            prev_objective: j0,
        }
    }

    fn keeps(&self, n: usize) -> bool {
        self.cfg.keep_every > 0 && n % self.cfg.keep_every == 0
    }

    pub(crate) fn secondary(&mut self, n: usize, y: &Vector) {
        if self.keeps(n) {
            self.trace.secondary.push((n, y.clone()));
        }
    }

    /// Appends record `n`; returns the termination reason when the run must stop.
    pub(crate) fn push(
        &mut self,
        n: usize,
        x: &Vector,
        objective: f64,
        residual: f64,
        extras: Vec<f64>,
    ) -> Option<Termination> {
        debug_assert_eq!(extras.len(), self.trace.extra_names.len());
        if self.keeps(n) {
            self.trace.iterates.push((n, x.clone()));
        }
        self.trace.records.push(TraceRecord {
            n,
            objective,
            residual,
            extras,
        });
        let prev = std::mem::replace(&mut self.prev_objective, objective);
        if objective.is_nan() || (objective.is_finite() && objective > DIVERGENCE_THRESHOLD) || !x.is_finite() {
            log::warn!("{} diverged at iteration {n}", self.trace.algorithm);
            return Some(Termination::Diverged);
        }
        if let Some(tol) = self.cfg.residual_tol {
            if residual <= tol * (1.0 + x.norm()) {
                return Some(Termination::TolReached);
            }
        }
        if let Some(tol) = self.cfg.objective_tol {
            if n >= 2 && (objective - prev).abs() <= tol * (1.0 + objective.abs()) {
                return Some(Termination::TolReached);
            }
        }
        None
    }

    pub(crate) fn aux(&mut self, name: &str, v: Vector) {
        self.trace.aux.insert(name.to_string(), v);
    }

    pub(crate) fn finish(mut self, termination: Termination, solution: Vector) -> SolverTrace {
        self.trace.termination = termination;
        self.trace.solution = solution;
        self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_roundtrip_and_unknown_fields() {
        let cfg = SolverConfig::default()
            .with_inertia(Inertia::FistaBeta { beta: 4.0 })
            .with_relaxation(Relaxation::Constant { value: 0.5 });
        let s = serde_json::to_string(&cfg).unwrap();
        let back: SolverConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<SolverConfig>(r#"{"stpe": 1.0}"#).is_err());
        let partial: SolverConfig = serde_json::from_str(r#"{"max_iter": 5}"#).unwrap();
        assert_eq!(partial.max_iter, 5);
        assert_eq!(partial.keep_every, 1);
    }

    #[test]
    fn beta_must_exceed_three() {
        let cfg = SolverConfig::default().with_inertia(Inertia::FistaBeta { beta: 3.0 });
        assert!(cfg.validate_common().is_err());
    }

    #[test]
    fn relaxation_validation() {
        assert!(Relaxation::Constant { value: 1.5 }.validate(1.0, "lambda").is_err());
        assert!(Relaxation::Constant { value: 1.5 }.validate(2.0, "mu").is_ok());
        assert!(Relaxation::Decaying {
            start: 1.0,
            exponent: 2.0
        }
        .validate(1.0, "lambda")
        .is_err());
        let r = Relaxation::Decaying {
            start: 1.0,
            exponent: 1.0,
        };
        assert_eq!(r.at(4), 0.25);
    }
}
