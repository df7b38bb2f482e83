//! Named certification checks on the built-in fixtures.

use std::sync::Arc;

use super::{
    check_cp_gap, check_descent_inequality, check_gradient_contraction, check_lyapunov_gd, check_prox_contraction,
    check_rate_bound, dr_admm_equivalence, dr_cp_equivalence, fit_rate, kl_monitor, min_residual_stability,
    negative_controls, property_suite, DescentScheme, GapBox, RateModel, Report, Subject, SuiteConfig, Tally,
};
use crate::error::{Error, Result};
use crate::funcs::{
    BoxSupport, Bounds, ComposedOrthogonal, Conjugate, DualTerm, Indicator, L1Norm, L1Residual, Quadratic,
    SaddleProblem, Separable, SetKind, SharedProx, ShiftedLinfBall, SmoothFn, Zero,
};
use crate::linops::{LinearMap, LinearOperator, Vector};
use crate::problems::{fixtures, haar_matrix, ProblemInstance};
use crate::solvers::{
    admm, chambolle_pock, gradient_descent, krasnoselskii_mann, nonconvex_forward_backward, Relaxation, SolverConfig,
    StepRule,
};

/// Checks run by default; each is expected to pass.
pub const DEFAULT_SUITE: &[&str] = &[
    "gd_sublinear",
    "gd_linear",
    "contraction",
    "fista_rate",
    "vfista_rate",
    "property_suites",
    "controls_flagged",
    "dr_cp_equivalence",
    "dr_admm_equivalence",
    "cp_gap",
    "admm_consensus",
    "cross_recipe",
    "nonconvex_monitors",
    "km_averaging",
    "determinism",
];

/// Checks that exist but are expected to fail.
pub const CONTROL_CHECKS: &[&str] = &["negative_controls"];

fn v(xs: &[f64]) -> Vector {
    Vector::from_slice(xs)
}

/// Runs one named check. `seed` drives the sampled property checks.
pub fn run_check(name: &str, seed: u64) -> Result<Vec<Report>> {
    match name {
        "gd_sublinear" => gd_sublinear(),
        "gd_linear" => gd_linear(),
        "contraction" => Ok(contraction(seed)),
        "fista_rate" => fista_rate(),
        "vfista_rate" => vfista_rate(),
        "property_suites" => property_suites(seed),
        "negative_controls" => Ok(negative_controls(seed)),
        "controls_flagged" => Ok(vec![controls_flagged(seed)]),
        "dr_cp_equivalence" => dr_cp(),
        "dr_admm_equivalence" => dr_admm(),
        "cp_gap" => cp_gap(),
        "admm_consensus" => admm_consensus(),
        "cross_recipe" => cross_recipe(),
        "nonconvex_monitors" => nonconvex_monitors(),
        "km_averaging" => km_averaging(),
        "determinism" => determinism(seed),
        other => Err(Error::Config(format!(
            "unknown check '{other}'; available: {}",
            DEFAULT_SUITE.iter().chain(CONTROL_CHECKS).copied().collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn gd_sublinear() -> Result<Vec<Report>> {
    let s = fixtures::singular_quadratic();
    let cfg = SolverConfig::default().with_max_iter(10_000).with_step(1.0 / s.l);
    let t = gradient_descent(&s.f, &s.x0, &cfg, StepRule::Fixed)?;
    let mut out = vec![check_lyapunov_gd(&t, s.l, &s.x_star, s.f_star)];
    out.push(check_descent_inequality(&t, s.l, 1.0 / s.l, DescentScheme::Gradient));
    for r in &mut out {
        r.instance = "singular_quadratic_20x40".into();
    }
    Ok(out)
}

fn gd_linear() -> Result<Vec<Report>> {
    let f = fixtures::anisotropic_quadratic();
    let (alpha, l) = (1.0, 10.0);
    let x0 = v(&[1.0, 1.0]);
    let t = gradient_descent(&f, &x0, &SolverConfig::default().with_max_iter(500).with_step(1.0 / l), StepRule::Fixed)?;
    let f0 = SmoothFn::value(&f, &x0);
    let mut r = check_rate_bound("linear_rate", &t, 0.0, &|n| (1.0 - alpha / l).powi(n as i32) * f0);
    r.instance = "anisotropic_quadratic".into();
    Ok(vec![r])
}

fn contraction(seed: u64) -> Vec<Report> {
    let f = fixtures::anisotropic_quadratic();
    let cfg = SuiteConfig {
        dim: 2,
        trials: 1000,
        seed,
        ..Default::default()
    };
    let q = Quadratic::new(LinearOperator::diagonal(&[1.0, 2.0, 0.5]).expect("finite"), v(&[1.0, 0.0, -1.0]), 1.0)
        .expect("positive scale");
    let cfg3 = SuiteConfig { dim: 3, ..cfg.clone() };
    vec![
        check_gradient_contraction(&f, 0.1, 1.0, &cfg),
        check_gradient_contraction(&f, 0.05, 1.0, &cfg),
        check_prox_contraction(&q, 0.5, 0.25, &cfg3),
        check_prox_contraction(&q, 2.0, 0.25, &cfg3),
    ]
}

fn reference(inst: &ProblemInstance) -> Result<(Vector, f64)> {
    let r = inst
        .reference
        .as_ref()
        .ok_or_else(|| Error::Config(format!("{} has no reference minimizer", inst.name)))?;
    Ok((r.x.clone(), r.value))
}

fn fista_rate() -> Result<Vec<Report>> {
    let inst = fixtures::lasso();
    let (xs, js) = reference(&inst)?;
    let gamma = 1.0;
    let run = inst
        .recipe("fista")?
        .run(&SolverConfig::default().with_max_iter(10_000).with_step(gamma).with_keep_every(0))?;
    let c = 2.0 * inst.x0.dist(&xs).powi(2) / gamma;
    let mut bound = check_rate_bound("fista_rate", &run.trace, js, &|n| c / ((n + 1) * (n + 1)) as f64);
    bound.instance = "lasso_50x100".into();
    let mut tally = Tally::new("fista_fitted_constant", "lasso_50x100");
    let gaps: Vec<f64> = run.trace.objectives().iter().map(|j| j - js).collect();
    match fit_rate(&gaps, RateModel::InvN2) {
        Ok(fit) => {
            tally.record(c - fit.constant, 0.0, || format!("fitted constant {} > {c}", fit.constant));
            tally.note(format!("fitted {:e}/n^2 over {} points (theorem constant {c:e})", fit.constant, fit.points));
        }
        Err(e) => tally.fail(format!("rate fit failed: {e}")),
    }
    Ok(vec![bound, tally.finish()])
}

fn vfista_rate() -> Result<Vec<Report>> {
    let inst = fixtures::strongly_convex_lasso();
    let (xs, js) = reference(&inst)?;
    let (alpha, l) = (0.25, 1.0);
    let run = inst
        .recipe("vfista")?
        .run(&SolverConfig::default().with_max_iter(500).with_keep_every(0))?;
    let e0 = inst.evaluate(&inst.x0) - js + 0.5 * alpha * inst.x0.dist(&xs).powi(2);
    let q = 1.0 - (alpha / l).sqrt();
    let mut r = check_rate_bound("vfista_rate", &run.trace, js, &|n| q.powi(n as i32) * e0);
    r.instance = "strongly_convex_lasso_30x30".into();
    Ok(vec![r])
}

fn shipped_prox_functions() -> Result<Vec<(SharedProx, usize)>> {
    let dim = 5;
    let c = v(&[1.0, -2.0, 0.5, 0.0, 3.0]);
    let dense = LinearOperator::from_rows(&[
        vec![1.0, 0.5, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, -0.3, 0.0, 0.2],
        vec![0.4, 0.0, 2.0, 0.0, 0.0],
    ])?;
    let bounds = Bounds::new(vec![-1.0, -0.5, 0.0, -2.0, -1.0], vec![1.0, 0.5, 2.0, 2.0, 1.0])?;
    let l1: SharedProx = Arc::new(L1Norm::new(0.7)?);
    Ok(vec![
        (l1.clone(), dim),
        (Arc::new(L1Residual::new(1.3, c.clone())?), dim),
        (Arc::new(Quadratic::centered(c.clone(), 2.0)?), dim),
        (Arc::new(Quadratic::new(dense.clone(), v(&[1.0, 0.0, -1.0]), 1.0)?), dim),
        (Arc::new(Indicator::from_bounds(bounds.clone())), dim),
        (Arc::new(Indicator::linf_ball(0.5)?), dim),
        (Arc::new(Indicator::new(SetKind::Consensus { blocks: 5 })?), dim),
        (Arc::new(Indicator::affine_graph(LinearOperator::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 1.0]])?)), dim),
        (
            Arc::new(ShiftedLinfBall {
                radius: 0.8,
                shift: c.clone(),
            }),
            dim,
        ),
        (Arc::new(BoxSupport { bounds }), dim),
        (Arc::new(Conjugate::new(l1.clone())), dim),
        (Arc::new(Zero), dim),
        (
            Arc::new(Separable::from_lengths(vec![(l1.clone(), 2), (Arc::new(Quadratic::centered(v(&[1.0, 1.0, 1.0]), 0.5)?), 3)])?),
            dim,
        ),
        (Arc::new(ComposedOrthogonal::new(haar_matrix(4)?, l1.clone())?), 4),
    ])
}

fn property_suites(seed: u64) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    for (g, dim) in shipped_prox_functions()? {
        let cfg = SuiteConfig {
            dim,
            seed,
            ..Default::default()
        };
        out.extend(property_suite(Subject::Prox(g.as_ref()), &cfg));
    }
    let smooth: Vec<(Box<dyn SmoothFn>, usize)> = vec![
        (Box::new(fixtures::anisotropic_quadratic()), 2),
        (Box::new(Quadratic::centered(v(&[1.0, 2.0, 3.0]), 0.5)?), 3),
        (Box::new(fixtures::singular_quadratic().f), 40),
    ];
    for (f, dim) in &smooth {
        let cfg = SuiteConfig {
            dim: *dim,
            seed,
            ..Default::default()
        };
        out.extend(property_suite(Subject::Smooth(f.as_ref()), &cfg));
    }
    Ok(out)
}

fn controls_flagged(seed: u64) -> Report {
    let controls = negative_controls(seed);
    let mut tally = Tally::new("controls_flagged", "negative_controls");
    for r in &controls {
        let flagged = if r.pass { -1.0 } else { 0.0 };
        tally.record(flagged, 0.0, || format!("control {} [{}] was not flagged", r.check, r.instance));
    }
    tally.note(format!("{} controls", controls.len()));
    tally.finish()
}

fn dr_cp() -> Result<Vec<Report>> {
    let f: SharedProx = Arc::new(L1Norm::new(1.0)?);
    let g: SharedProx = Arc::new(Quadratic::centered(v(&[3.0, -1.0, 0.5]), 1.0)?);
    [0.1, 1.0, 10.0]
        .iter()
        .map(|&gamma| dr_cp_equivalence(f.clone(), g.clone(), gamma, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, -1.0, 2.0]), 50))
        .collect()
}

fn dr_admm() -> Result<Vec<Report>> {
    let f: SharedProx = Arc::new(Quadratic::centered(v(&[1.0, -2.0]), 1.0)?);
    let g: SharedProx = Arc::new(L1Norm::new(0.5)?);
    let mut out = Vec::new();
    for k in [LinearOperator::identity(2), LinearOperator::diagonal(&[1.0, 2.0])?] {
        for gamma in [0.5, 1.0, 2.0] {
            out.push(dr_admm_equivalence(f.clone(), g.clone(), &k, gamma, &v(&[3.0, 1.0]), 50)?);
        }
    }
    Ok(out)
}

const GAP_HORIZONS: &[usize] = &[10, 100, 1000];

fn cp_gap() -> Result<Vec<Report>> {
    let scalar = SaddleProblem::new(
        DualTerm::Conjugate {
            conj: Arc::new(Indicator::boxed(-1.0, 1.0)?),
            primal: None,
        },
        Arc::new(Quadratic::centered(v(&[0.0]), 1.0)?),
        LinearOperator::identity(1),
    );
    let b = GapBox::around(&v(&[0.0]), 2.0, &v(&[0.0]), 1.0)?;
    let mut out =
        vec![check_cp_gap("scalar", &scalar, &v(&[1.5]), &v(&[-0.5]), 0.9, 0.9, (&v(&[0.0]), &v(&[0.0])), &b, GAP_HORIZONS)?];

    let y = fixtures::noisy_step_8x8();
    let lambda = fixtures::TV_LAMBDA;
    let grad = LinearOperator::grad2d(8, 8, y.boundary())?;
    let prob = SaddleProblem::new(
        DualTerm::Conjugate {
            conj: Arc::new(Indicator::linf_ball(lambda)?),
            primal: Some(Arc::new(L1Norm::new(lambda)?)),
        },
        Arc::new(Quadratic::centered(y.to_vector(), 1.0)?),
        grad.clone(),
    );
    let knorm = grad.norm();
    let (sigma, tau) = (0.99 / knorm, 0.99 / knorm);
    let (x0, y0) = (y.to_vector(), Vector::zeros(grad.out_dim()));
    let long = chambolle_pock(
        &prob,
        &x0,
        &y0,
        &SolverConfig::default().with_max_iter(50_000).with_pd_steps(sigma, tau).with_keep_every(0).with_residual_tol(1e-15),
    )?;
    let (xs, ys) = (long.solution.clone(), long.aux["y"].clone());
    let b = GapBox::around(&xs, 0.5, &ys, lambda)?;
    out.push(check_cp_gap("tv_denoise_8x8", &prob, &x0, &y0, sigma, tau, (&xs, &ys), &b, GAP_HORIZONS)?);
    Ok(out)
}

fn admm_consensus() -> Result<Vec<Report>> {
    let mut out = Vec::new();
    for fx in [fixtures::consensus_lasso(), fixtures::consensus_box()] {
        let cfg = SolverConfig::default().with_max_iter(5000).with_step(1.0).with_keep_every(0);
        let t = admm(&fx.f, &fx.g, &fx.b, None, None, &Vector::zeros(fx.b.len()), &cfg)?;
        let mut tally = Tally::new("admm_consensus", &fx.name);
        let res = t.extra("primal_residual").unwrap_or_default();
        let first = res.iter().position(|r| *r <= 1e-6);
        match first {
            Some(n) => tally.note(format!("primal residual below 1e-6 from iteration {}", n + 1)),
            None => tally.fail("primal residual never reached 1e-6".into()),
        }
        let last = res.last().copied().unwrap_or(f64::INFINITY);
        tally.record(1e-6 - last, 0.0, || format!("final primal residual {last:e}"));
        let j = (fx.objective)(&t.solution);
        tally.record(1e-6 - (j - fx.f_star).abs(), 0.0, || format!("objective {j} vs reference {}", fx.f_star));
        tally.note(format!("objective {j:.12} reference {:.12}", fx.f_star));
        out.push(tally.finish());
    }
    Ok(out)
}

/// Runs every recipe of an instance and checks that the primal objectives
/// agree with the best one to `1e-4` relative.
fn agreement(inst: &ProblemInstance, iters: usize) -> Result<(Report, Vec<crate::problems::RecipeRun>)> {
    let cfg = SolverConfig::default().with_max_iter(iters).with_keep_every(0);
    let runs = inst.run_all(&cfg, &Default::default())?;
    let best = runs.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
    let mut tally = Tally::new("cross_recipe", &inst.name);
    for r in &runs {
        let rel = (r.objective - best) / best.abs().max(1e-12);
        tally.record(1e-4 - rel, 0.0, || format!("{}: {} vs best {best}", r.recipe, r.objective));
        tally.note(format!("{}: {:.12} ({} iterations)", r.recipe, r.objective, r.trace.len()));
    }
    Ok((tally.finish(), runs))
}

fn cross_recipe() -> Result<Vec<Report>> {
    let (denoise, runs) = agreement(&fixtures::tv_denoise_8x8(), 20_000)?;
    let pick = |name: &str| runs.iter().find(|r| r.recipe == name).map(|r| r.solution.clone());
    let mut tally = Tally::new("dual_recovery", "tv_denoise_8x8");
    match (pick("dual_fb"), pick("chambolle_pock")) {
        (Some(a), Some(b)) => {
            let d = a.dist(&b);
            tally.record(1e-4 - d, 0.0, || format!("y + grad* p differs from the primal-dual solution by {d:e}"));
        }
        _ => tally.fail("missing recipe".into()),
    }
    let (inverse, _) = agreement(&fixtures::tv_inverse_mask_8x8(), 20_000)?;
    Ok(vec![denoise, tally.finish(), inverse])
}

fn nonconvex_monitors() -> Result<Vec<Report>> {
    let horizons = [10, 100, 1000];
    let dw = fixtures::double_well();
    let cfg = SolverConfig::default().with_max_iter(1000).with_step(dw.gamma).with_keep_every(0);
    let t = nonconvex_forward_backward(&dw.f, &Zero, &dw.x0, &cfg)?;
    let a = 1.0 / (2.0 * dw.gamma) - dw.l / 2.0;
    let mut out = vec![kl_monitor(&t, dw.gamma, dw.l), min_residual_stability(&t, a, &horizons)];
    let mut descent = check_descent_inequality(&t, dw.l, dw.gamma, DescentScheme::Gradient);
    descent.instance = "double_well".into();
    let ht = fixtures::hard_threshold();
    let cfg = SolverConfig::default().with_max_iter(1000).with_step(ht.gamma).with_keep_every(0);
    let t = nonconvex_forward_backward(&ht.f, &ht.g, &ht.x0, &cfg)?;
    let a = 1.0 / (2.0 * ht.gamma) - ht.l / 2.0;
    out.push(kl_monitor(&t, ht.gamma, ht.l));
    out.push(min_residual_stability(&t, a, &horizons));
    for (r, name) in out.iter_mut().zip(["double_well", "double_well", "hard_threshold", "hard_threshold"]) {
        r.instance = name.into();
    }
    out.push(descent);
    Ok(out)
}

fn km_averaging() -> Result<Vec<Report>> {
    let rot = fixtures::rotation_90();
    let t_map = |x: &Vector| Ok(rot.apply_raw(x));
    let cfg = SolverConfig::default()
        .with_max_iter(100)
        .with_relaxation(Relaxation::Constant { value: 0.5 })
        .with_keep_every(0);
    let t = krasnoselskii_mann(&t_map, &v(&[1.0, 0.0]), &cfg)?;
    let mut tally = Tally::new("km_averaging", "rotation_90");
    let mut prev = t.initial_objective;
    for r in &t.records {
        tally.record(prev - r.objective, 0.0, || format!("n={}: {} not below {prev}", r.n, r.objective));
        if r.objective == prev {
            tally.fail(format!("n={}: fixed-point residual stalled at {prev}", r.n));
        }
        prev = r.objective;
    }
    match t.records.iter().position(|r| r.objective <= 1e-8) {
        Some(n) => tally.note(format!("||Tx - x|| <= 1e-8 from iteration {}", n + 1)),
        None => tally.fail(format!("||Tx - x|| = {prev:e} after {} iterations", t.len())),
    }
    Ok(vec![tally.finish()])
}

fn determinism(seed: u64) -> Result<Vec<Report>> {
    let mut tally = Tally::new("determinism", "repeat_runs");
    let once = || -> Result<Vec<String>> {
        let mut out = Vec::new();
        let inst = fixtures::tv_denoise_8x8();
        let cfg = SolverConfig {
            seed,
            ..SolverConfig::default().with_max_iter(200)
        };
        for r in &inst.recipes {
            out.push(r.run(&cfg)?.trace.to_csv());
        }
        let cfg = SuiteConfig {
            seed,
            ..Default::default()
        };
        let reports = property_suite(Subject::Prox(&L1Norm::new(0.5)?), &cfg);
        out.push(serde_json::to_string(&reports)?);
        Ok(out)
    };
    let (a, b) = (once()?, once()?);
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        if x != y {
            tally.fail(format!("output {i} differs between identical runs"));
        }
    }
    tally.note(format!("{} outputs compared byte for byte", a.len()));
    Ok(vec![tally.finish()])
}
