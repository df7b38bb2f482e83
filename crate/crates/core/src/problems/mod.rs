//! Imaging and sparse-recovery problems, each with several solver recipes
//! that minimize the same primal objective.

mod builders;
pub mod fixtures;
mod spec;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::Vector;
use crate::solvers::{SolverConfig, SolverTrace};

pub use builders::{
    build_lasso, build_poisson_editing, build_tv_denoise, build_tv_inverse, build_tvl1, build_wavelet_reg,
    haar_matrix,
};
pub use spec::{ProblemKind, ProblemSpec};
pub use synthetic::{
    generate_synthetic, load_bundle, write_bundle, Bundle, Manifest, SyntheticData, SyntheticKind, SyntheticSpec,
};

pub type Objective = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;
type Runner = Arc<dyn Fn(&SolverConfig) -> Result<SolverTrace> + Send + Sync>;
type Recover = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// One way of solving an instance: a solver applied to a particular
/// splitting of the objective.
#[derive(Clone)]
pub struct Recipe {
    pub name: String,
    objective: Objective,
    runner: Runner,
    recover: Option<Recover>,
    dual_objective_column: bool,
}

impl fmt::Debug for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Recipe({})", self.name)
    }
}

impl Recipe {
    pub(crate) fn new(
        name: &str,
        objective: Objective,
        runner: impl Fn(&SolverConfig) -> Result<SolverTrace> + Send + Sync + 'static,
    ) -> Self {
        Recipe {
            name: name.to_string(),
            objective,
            runner: Arc::new(runner),
            recover: None,
            dual_objective_column: false,
        }
    }

    /// Maps the solver's solution from a lifted variable to the primal one.
    pub(crate) fn recovering(mut self, recover: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.recover = Some(Arc::new(recover));
        self
    }

    /// Like [`Recipe::recovering`] for a solver running on a dual variable:
    /// the trace's objective column is then a dual value and the primal one
    /// is recomputed from every stored iterate.
    pub(crate) fn recovering_dual(mut self, recover: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        self.recover = Some(Arc::new(recover));
        self.dual_objective_column = true;
        self
    }

    /// The primal objective as assembled from this recipe's own components.
    pub fn objective(&self, x: &Vector) -> f64 {
        (self.objective)(x)
    }

    pub fn run(&self, cfg: &SolverConfig) -> Result<RecipeRun> {
        let trace = (self.runner)(cfg)?;
        let (solution, primal_objectives) = match &self.recover {
            None => (trace.solution.clone(), trace.objectives()),
            Some(rec) if !self.dual_objective_column => (rec(&trace.solution), trace.objectives()),
            Some(rec) => {
                let per_iter = trace
                    .records
                    .iter()
                    .map(|r| trace.iterate(r.n).map(|p| self.objective(&rec(p))).unwrap_or(f64::NAN))
                    .collect();
                (rec(&trace.solution), per_iter)
            }
        };
        let objective = self.objective(&solution);
        let initial_objective = match (&self.recover, trace.iterate(0)) {
            (Some(rec), Some(p0)) if self.dual_objective_column => self.objective(&rec(p0)),
            _ => trace.initial_objective,
        };
        Ok(RecipeRun {
            initial_objective,
            recipe: self.name.clone(),
            trace,
            solution,
            objective,
            primal_objectives,
            dual_trace: self.dual_objective_column,
        })
    }
}

/// Result of running one recipe.
#[derive(Clone, Debug)]
pub struct RecipeRun {
    pub recipe: String,
    pub trace: SolverTrace,
    /// Primal solution (recovered from the dual or lifted iterate if needed).
    pub solution: Vector,
    pub objective: f64,
    /// Primal objective at the starting point.
    pub initial_objective: f64,
    /// Primal objective after each iteration.
    pub primal_objectives: Vec<f64>,
    /// The trace's objective column holds a dual value.
    pub dual_trace: bool,
}

impl RecipeRun {
    /// The trace as CSV with the primal objective in the `objective` column;
    /// a dual objective, if any, moves to a trailing `dual_objective` column.
    pub fn trace_csv(&self) -> String {
        if !self.dual_trace {
            return self.trace.to_csv();
        }
        let mut t = self.trace.clone();
        t.extra_names.push("dual_objective".into());
        for (r, p) in t.records.iter_mut().zip(&self.primal_objectives) {
            r.extras.push(r.objective);
            r.objective = *p;
        }
        t.to_csv()
    }
}

/// Descriptive data attached to an instance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub dims: Vec<usize>,
    pub lambda: f64,
    pub noise: f64,
    pub seed: u64,
    /// Reference objective value shipped with a fixture.
    pub expected_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub x: Vector,
    pub value: f64,
}

#[derive(Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub objective: Objective,
    pub recipes: Vec<Recipe>,
    /// Default starting point shared by the recipes.
    pub x0: Vector,
    pub reference: Option<Reference>,
    pub meta: Metadata,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("recipes", &self.recipe_names())
            .field("dim", &self.x0.len())
            .field("meta", &self.meta)
            .finish()
    }
}

impl ProblemInstance {
    pub fn evaluate(&self, x: &Vector) -> f64 {
        (self.objective)(x)
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn recipe_names(&self) -> Vec<String> {
        self.recipes.iter().map(|r| r.name.clone()).collect()
    }

    pub fn recipe(&self, name: &str) -> Result<&Recipe> {
        self.recipes.iter().find(|r| r.name == name).ok_or_else(|| {
            Error::Config(format!(
                "unknown recipe '{name}' for {}; available: {}",
                self.name,
                self.recipe_names().join(", ")
            ))
        })
    }

    pub fn with_reference(mut self, x: Vector) -> Self {
        let value = self.evaluate(&x);
        self.reference = Some(Reference { x, value });
        self
    }

    pub fn with_meta(mut self, meta: Metadata) -> Self {
        self.meta = meta;
        self
    }

    /// Largest deviation between the instance objective and each recipe's
    /// own objective at the given points.
    pub fn objective_consistency(&self, probes: &[Vector]) -> f64 {
        let mut worst: f64 = 0.0;
        for p in probes {
            let base = self.evaluate(p);
            for r in &self.recipes {
                let v = r.objective(p);
                let d = if base.is_infinite() && v == base { 0.0 } else { (v - base).abs() };
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Runs every recipe with its configuration (falling back to `default`).
    pub fn run_all(&self, default: &SolverConfig, per_recipe: &BTreeMap<String, SolverConfig>) -> Result<Vec<RecipeRun>> {
        crate::par::try_map(&self.recipes, |r| r.run(per_recipe.get(&r.name).unwrap_or(default)))
    }
}
