//! Command-line front end: JSON-configured solve, certify, compare and
//! generate commands writing plot-ready CSV and JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use proxsplit::certify::{run_check, Report, DEFAULT_SUITE};
use proxsplit::problems::{generate_synthetic, write_bundle, ProblemInstance, ProblemSpec, RecipeRun, SyntheticKind, SyntheticSpec};
use proxsplit::solvers::{SolverConfig, Termination};

pub const FIXTURES_ENV: &str = "PROXSPLIT_FIXTURES";

#[derive(Debug, Parser)]
#[command(name = "proxsplit", version, about = "Proximal splitting solvers and certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one recipe on one problem instance.
    Solve(Args),
    /// Run named certification checks and write report.json.
    Certify(Args),
    /// Run several recipes of one instance side by side.
    Compare(Args),
    /// Write a synthetic fixture bundle.
    Generate(Args),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// JSON configuration file.
    pub config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed (overrides the seeds in the config).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Diverged(String),
    #[error("certification failed: {}", .0.join(", "))]
    Certification(Vec<String>),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Diverged(_) => 2,
            CliError::Certification(_) => 3,
        }
    }
}

impl From<proxsplit::Error> for CliError {
    fn from(e: proxsplit::Error) -> Self {
        match e {
            proxsplit::Error::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub problem: ProblemSpec,
    pub recipe: String,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub problem: ProblemSpec,
    pub recipes: Vec<String>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Per-recipe solver settings replacing `solver` for that recipe.
    #[serde(default)]
    pub overrides: BTreeMap<String, SolverConfig>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_checks() -> Vec<String> {
    DEFAULT_SUITE.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    #[serde(default = "default_checks")]
    pub checks: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub kind: SyntheticKind,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub density: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub recipe: String,
    pub algorithm: String,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub termination: String,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_objective: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CheckOutcome {
    name: String,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    reports: Vec<Report>,
}

#[derive(Debug, Serialize)]
struct CertifyReport {
    seed: u64,
    pass: bool,
    failed: Vec<String>,
    checks: Vec<CheckOutcome>,
}

/// What a successful command produced.
#[derive(Debug)]
pub struct Outcome {
    pub out: PathBuf,
    pub files: Vec<String>,
    pub message: String,
}

fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Fixture paths resolve against `$PROXSPLIT_FIXTURES` if set, else against
/// the directory holding the config file.
pub fn fixture_root(config: &Path) -> PathBuf {
    match std::env::var_os(FIXTURES_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => config.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        body.push('\n');
        self.text(name, &body)
    }

    fn finish(self, message: String) -> Outcome {
        Outcome {
            out: self.dir,
            files: self.files,
            message,
        }
    }
}

pub fn run(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Certify(a) => certify(a),
        Command::Compare(a) => compare(a),
        Command::Generate(a) => generate(a),
    }
}

fn seed_problem(problem: &mut ProblemSpec, seed: u64) {
    if let Some(s) = problem.synthetic.as_mut() {
        s.seed = seed;
    }
}

fn expected(inst: &ProblemInstance) -> Option<f64> {
    inst.meta.expected_objective.or(inst.reference.as_ref().map(|r| r.value))
}

fn summary(run: &RecipeRun, expected: Option<f64>, wall: f64) -> Summary {
    Summary {
        recipe: run.recipe.clone(),
        algorithm: run.trace.algorithm.clone(),
        objective: run.objective,
        initial_objective: run.initial_objective,
        iterations: run.trace.len(),
        termination: run.trace.termination.as_str().to_string(),
        wall_time_s: wall,
        expected_objective: expected,
    }
}

pub fn solve(args: &Args) -> CliResult<Outcome> {
    let mut cfg: SolveConfig = read_config(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
        seed_problem(&mut cfg.problem, seed);
    }
    let inst = cfg.problem.build(&fixture_root(&args.config))?;
    let recipe = inst.recipe(&cfg.recipe).map_err(|e| CliError::Config(format!("recipe: {e}")))?;
    log::info!("solving {} with {}", inst.name, recipe.name);
    let start = Instant::now();
    let run = recipe.run(&cfg.solver).map_err(|e| CliError::Config(format!("solver: {e}")))?;
    let wall = start.elapsed().as_secs_f64();

    let mut w = Writer::new(&cfg.out)?;
    w.json("resolved_config.json", &cfg)?;
    w.text("trace.csv", &run.trace_csv())?;
    let s = summary(&run, expected(&inst), wall);
    w.json("summary.json", &s)?;
    if run.trace.termination == Termination::Diverged {
        return Err(CliError::Diverged(format!("{} diverged after {} iterations", s.recipe, s.iterations)));
    }
    Ok(w.finish(format!(
        "{} on {}: objective {} after {} iterations ({})",
        s.recipe, inst.name, s.objective, s.iterations, s.termination
    )))
}

/// Objective columns aligned by iteration, with `gap_to_best` the smallest
/// objective in the row minus the smallest objective anywhere in the table.
pub fn comparison_csv(runs: &[RecipeRun]) -> String {
    let best = runs
        .iter()
        .flat_map(|r| std::iter::once(r.initial_objective).chain(r.primal_objectives.iter().copied()))
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let rows = runs.iter().map(|r| r.primal_objectives.len()).max().unwrap_or(0);
    let mut s = String::from("n");
    for r in runs {
        s.push(',');
        s.push_str(&r.recipe);
    }
    s.push_str(",gap_to_best\n");
    for i in 0..=rows {
        s.push_str(&i.to_string());
        let mut row_min = f64::INFINITY;
        for r in runs {
            let value = if i == 0 { Some(r.initial_objective) } else { r.primal_objectives.get(i - 1).copied() };
            s.push(',');
            if let Some(v) = value {
                s.push_str(&v.to_string());
                row_min = row_min.min(v);
            }
        }
        s.push(',');
        if row_min.is_finite() {
            s.push_str(&(row_min - best).to_string());
        }
        s.push('\n');
    }
    s
}

pub fn compare(args: &Args) -> CliResult<Outcome> {
    let mut cfg: CompareConfig = read_config(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.solver.seed = seed;
        for c in cfg.overrides.values_mut() {
            c.seed = seed;
        }
        seed_problem(&mut cfg.problem, seed);
    }
    if cfg.recipes.is_empty() {
        return Err(CliError::Config("recipes: name at least one recipe".into()));
    }
    if let Some(k) = cfg.overrides.keys().find(|k| !cfg.recipes.contains(k)) {
        return Err(CliError::Config(format!("overrides: '{k}' is not in recipes")));
    }
    let inst = cfg.problem.build(&fixture_root(&args.config))?;
    let recipes = cfg
        .recipes
        .iter()
        .map(|name| inst.recipe(name).map_err(|e| CliError::Config(format!("recipes: {e}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let start = Instant::now();
    let runs = proxsplit::par::try_map(&recipes, |r| r.run(cfg.overrides.get(&r.name).unwrap_or(&cfg.solver)))
        .map_err(|e| CliError::Config(format!("solver: {e}")))?;
    let wall = start.elapsed().as_secs_f64();

    let mut w = Writer::new(&cfg.out)?;
    w.json("resolved_config.json", &cfg)?;
    w.text("comparison.csv", &comparison_csv(&runs))?;
    let summaries: Vec<Summary> = runs.iter().map(|r| summary(r, expected(&inst), wall)).collect();
    w.json("summary.json", &summaries)?;
    let diverged: Vec<&str> =
        runs.iter().filter(|r| r.trace.termination == Termination::Diverged).map(|r| r.recipe.as_str()).collect();
    if !diverged.is_empty() {
        return Err(CliError::Diverged(format!("diverged: {}", diverged.join(", "))));
    }
    let best = summaries.iter().min_by(|a, b| a.objective.total_cmp(&b.objective)).expect("at least one recipe");
    Ok(w.finish(format!("{} recipes on {}; best {} = {}", runs.len(), inst.name, best.recipe, best.objective)))
}

pub fn certify(args: &Args) -> CliResult<Outcome> {
    let mut cfg: CertifyConfig = read_config(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut checks = Vec::new();
    for name in &cfg.checks {
        log::info!("running check {name}");
        let outcome = match run_check(name, cfg.seed) {
            Ok(reports) => CheckOutcome {
                name: name.clone(),
                pass: !reports.is_empty() && reports.iter().all(|r| r.pass),
                error: None,
                reports,
            },
            Err(proxsplit::Error::Config(msg)) => return Err(CliError::Config(format!("checks: {msg}"))),
            Err(e) => CheckOutcome {
                name: name.clone(),
                pass: false,
                error: Some(e.to_string()),
                reports: Vec::new(),
            },
        };
        for r in &outcome.reports {
            println!("{}", r.summary_line());
        }
        checks.push(outcome);
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    let report = CertifyReport {
        seed: cfg.seed,
        pass: failed.is_empty(),
        failed: failed.clone(),
        checks,
    };
    let mut w = Writer::new(&cfg.out)?;
    w.json("resolved_config.json", &cfg)?;
    w.json("report.json", &report)?;
    if !failed.is_empty() {
        return Err(CliError::Certification(failed));
    }
    Ok(w.finish(format!("{} checks passed", cfg.checks.len())))
}

pub fn generate(args: &Args) -> CliResult<Outcome> {
    let mut cfg: GenerateConfig = read_config(&args.config)?;
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let spec = SyntheticSpec {
        kind: cfg.kind,
        dims: cfg.dims.clone(),
        noise: cfg.noise,
        seed: cfg.seed,
        density: cfg.density,
    };
    let data = generate_synthetic(&spec)?;
    write_bundle(&cfg.out, &data, cfg.lambda, BTreeMap::new())
        .map_err(|e| CliError::Io(format!("{}: {e}", cfg.out.display())))?;
    let mut w = Writer::new(&cfg.out)?;
    w.json("resolved_config.json", &cfg)?;
    Ok(w.finish(format!("wrote {:?} bundle to {}", cfg.kind, cfg.out.display())))
}
