use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Report, Tally};
use crate::error::Result;
use crate::funcs::{ProxFn, SmoothFn};
use crate::linops::Vector;
use crate::par;

/// Sampling parameters shared by the property checks.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub dim: usize,
    pub trials: usize,
    pub seed: u64,
    /// Standard deviation of the sampled points.
    pub scale: f64,
    /// Relative tolerance of every inequality.
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            dim: 5,
            trials: 200,
            seed: 0,
            scale: 3.0,
            tol: 1e-8,
        }
    }
}

pub enum Subject<'a> {
    Smooth(&'a dyn SmoothFn),
    Prox(&'a dyn ProxFn),
}

struct Sample {
    x: Vector,
    y: Vector,
    gamma: f64,
}

fn samples(cfg: &SuiteConfig) -> Vec<Sample> {
    par::map_range(cfg.trials, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        Sample {
            x: Vector::random_normal(cfg.dim, cfg.scale, &mut rng),
            y: Vector::random_normal(cfg.dim, cfg.scale, &mut rng),
            gamma: rng.gen_range(0.05..5.0),
        }
    })
}

type Margin = (f64, f64);

/// Evaluates one property over all samples in parallel and tallies
/// `(margin, scale)` pairs; a violation is `margin < −tol·(1 + scale)`.
fn run(
    check: &str,
    instance: &str,
    cfg: &SuiteConfig,
    data: &[Sample],
    eval: impl Fn(&Sample) -> Result<Margin> + Sync + Send,
) -> Report {
    let results = par::map(data, |s| eval(s));
    let mut tally = Tally::new(check, instance);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((margin, scale)) => tally.record(margin, cfg.tol * (1.0 + scale.abs()), || format!("trial {i}")),
            Err(e) => tally.fail(format!("trial {i}: {e}")),
        }
    }
    tally.finish()
}

/// Randomized checks of the structural properties a function declares.
///
/// Smooth functions: descent lemma; when convex, the gradient inequality and
/// cocoercivity; when strongly convex, strong monotonicity.
/// Prox functions: optimality of the prox against perturbed candidates;
/// when convex, firm nonexpansiveness of `prox` (equivalently of
/// `Id − prox`), nonexpansiveness of `2prox − Id`, Moreau's identity and the
/// Fenchel-Young equality when a conjugate is known, and `prox(x*) = x*`
/// for a registered minimizer; when strongly convex, the `1/(1 + αγ)`
/// contraction.
pub fn property_suite(subject: Subject<'_>, cfg: &SuiteConfig) -> Vec<Report> {
    let data = samples(cfg);
    match subject {
        Subject::Smooth(f) => smooth_suite(f, cfg, &data),
        Subject::Prox(g) => prox_suite(g, cfg, &data),
    }
}

fn smooth_suite(f: &dyn SmoothFn, cfg: &SuiteConfig, data: &[Sample]) -> Vec<Report> {
    let name = f.name();
    let l = f.lipschitz();
    let mut out = vec![run("descent_lemma", &name, cfg, data, |s| {
        let d = s.y.sub(&s.x);
        let upper = f.value(&s.x) + f.gradient(&s.x).dot(&d) + 0.5 * l * d.norm_sq();
        let fy = f.value(&s.y);
        Ok((upper - fy, upper.abs() + fy.abs()))
    })];
    if f.is_convex() {
        out.push(run("gradient_inequality", &name, cfg, data, |s| {
            let lower = f.value(&s.x) + f.gradient(&s.x).dot(&s.y.sub(&s.x));
            let fy = f.value(&s.y);
            Ok((fy - lower, fy.abs() + lower.abs()))
        }));
        out.push(run("cocoercivity", &name, cfg, data, |s| {
            let dg = f.gradient(&s.x).sub(&f.gradient(&s.y));
            let inner = dg.dot(&s.x.sub(&s.y));
            let rhs = if l > 0.0 { dg.norm_sq() / l } else { 0.0 };
            Ok((inner - rhs, inner.abs() + rhs))
        }));
    }
    if let Some(alpha) = f.strong_convexity() {
        out.push(run("strong_monotonicity", &name, cfg, data, |s| {
            let d = s.x.sub(&s.y);
            let inner = f.gradient(&s.x).sub(&f.gradient(&s.y)).dot(&d);
            let rhs = alpha * d.norm_sq();
            Ok((inner - rhs, inner.abs() + rhs))
        }));
    }
    out
}

fn prox_suite(g: &dyn ProxFn, cfg: &SuiteConfig, data: &[Sample]) -> Vec<Report> {
    let name = g.name();
    let mut out = vec![run("prox_optimality", &name, cfg, data, |s| {
        let p = g.prox(&s.x, s.gamma)?;
        let obj = |z: &Vector| s.gamma * g.value(z) + 0.5 * z.dist(&s.x).powi(2);
        let at_p = obj(&p);
        let mut margin = f64::INFINITY;
        let candidates = [s.x.clone(), Vector::zeros(s.x.len()), p.add_scaled(1e-3, &s.y), p.add_scaled(-0.1, &s.y), s.y.clone()];
        for z in &candidates {
            let v = obj(z);
            if v.is_finite() {
                margin = margin.min(v - at_p);
            }
        }
        Ok((margin, at_p.abs()))
    })];
    if g.is_convex() {
        out.push(run("firm_nonexpansiveness", &name, cfg, data, |s| {
            let (px, py) = (g.prox(&s.x, s.gamma)?, g.prox(&s.y, s.gamma)?);
            let d2 = s.x.dist(&s.y).powi(2);
            let lhs = px.dist(&py).powi(2) + s.x.sub(&px).dist(&s.y.sub(&py)).powi(2);
            Ok((d2 - lhs, d2))
        }));
        out.push(run("reflected_nonexpansiveness", &name, cfg, data, |s| {
            let rx = g.prox(&s.x, s.gamma)?.scale(2.0).sub(&s.x);
            let ry = g.prox(&s.y, s.gamma)?.scale(2.0).sub(&s.y);
            let d = s.x.dist(&s.y);
            Ok((d - rx.dist(&ry), d))
        }));
        if let Some(conj) = g.conjugate() {
            out.push(run("moreau_identity", &name, cfg, data, |s| {
                let p = g.prox(&s.x, s.gamma)?;
                let q = conj.prox(&s.x.scale(1.0 / s.gamma), 1.0 / s.gamma)?;
                let defect = p.add_scaled(s.gamma, &q).dist(&s.x);
                Ok((-defect, s.x.norm()))
            }));
            out.push(run("fenchel_young_equality", &name, cfg, data, |s| {
                let p = g.prox(&s.x, s.gamma)?;
                let u = s.x.sub(&p).scale(1.0 / s.gamma);
                let (a, b, c) = (g.value(&p), conj.value(&u), p.dot(&u));
                Ok((-(a + b - c).abs(), a.abs() + b.abs() + c.abs()))
            }));
        }
        if let Some(xm) = g.minimizer(cfg.dim) {
            out.push(run("prox_fixed_point", &name, cfg, data, |s| {
                Ok((-g.prox(&xm, s.gamma)?.dist(&xm), xm.norm()))
            }));
        }
        if let Some(alpha) = g.strong_convexity() {
            out.push(check_prox_contraction_on(g, alpha, cfg, data));
        }
    }
    out
}

fn check_prox_contraction_on(g: &dyn ProxFn, alpha: f64, cfg: &SuiteConfig, data: &[Sample]) -> Report {
    run("prox_contraction", &g.name(), cfg, data, |s| {
        let d = s.x.dist(&s.y);
        let pd = g.prox(&s.x, s.gamma)?.dist(&g.prox(&s.y, s.gamma)?);
        Ok((d / (1.0 + alpha * s.gamma) - pd, d))
    })
}

/// `‖(x − γ∇f(x)) − (y − γ∇f(y))‖ ≤ (√(1 − γα) + 1e-10)‖x − y‖` over
/// random pairs.
pub fn check_gradient_contraction(f: &dyn SmoothFn, gamma: f64, alpha: f64, cfg: &SuiteConfig) -> Report {
    let data = samples(cfg);
    let factor = (1.0 - gamma * alpha).max(0.0).sqrt();
    let strict = SuiteConfig { tol: 0.0, ..cfg.clone() };
    run("gradient_contraction", &f.name(), &strict, &data, |s| {
        let tx = s.x.add_scaled(-gamma, &f.gradient(&s.x));
        let ty = s.y.add_scaled(-gamma, &f.gradient(&s.y));
        let ratio = tx.dist(&ty) / s.x.dist(&s.y);
        Ok((factor + 1e-10 - ratio, 0.0))
    })
}

/// `‖prox_{γg}(x) − prox_{γg}(y)‖ ≤ (1/(1 + αγ) + 1e-10)‖x − y‖` at fixed `γ`.
pub fn check_prox_contraction(g: &dyn ProxFn, gamma: f64, alpha: f64, cfg: &SuiteConfig) -> Report {
    let data = samples(cfg);
    let factor = 1.0 / (1.0 + alpha * gamma);
    let strict = SuiteConfig { tol: 0.0, ..cfg.clone() };
    run("prox_contraction", &g.name(), &strict, &data, |s| {
        let ratio = g.prox(&s.x, gamma)?.dist(&g.prox(&s.y, gamma)?) / s.x.dist(&s.y);
        Ok((factor + 1e-10 - ratio, 0.0))
    })
}
