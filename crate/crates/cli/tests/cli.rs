use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_proxsplit"));
    c.env_remove("PROXSPLIT_FIXTURES");
    c
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<Option<f64>> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().ok()).collect()
}

fn generate_step_bundle(dir: &Path, name: &str) -> PathBuf {
    let cfg = write(dir, "gen.json", r#"{"kind": "step_image", "dims": [8, 8], "noise": 0.1, "seed": 1, "lambda": 0.1}"#);
    let out = dir.join(name);
    let o = run("generate", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_is_byte_identical_per_seed() {
    let d = TempDir::new().unwrap();
    let a = generate_step_bundle(d.path(), "a");
    let b = generate_step_bundle(d.path(), "b");
    for f in ["manifest.json", "truth.csv", "observation.csv", "observation.pgm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cfg = write(d.path(), "bad.json", r#"{"kind": "spiral", "dims": [8]}"#);
    assert_eq!(code(&run("generate", &cfg, &d.path().join("c"), &[])), 1);
}

#[test]
fn solve_generated_bundle_is_deterministic() {
    let d = TempDir::new().unwrap();
    generate_step_bundle(d.path(), "bundle");
    let cfg = write(
        d.path(),
        "solve.json",
        r#"{"problem": {"kind": "tv_denoise", "fixture": "bundle"}, "recipe": "dual_fb", "solver": {"max_iter": 200}}"#,
    );
    let (o1, o2) = (d.path().join("r1"), d.path().join("r2"));
    assert_eq!(code(&run("solve", &cfg, &o1, &["--seed", "4"])), 0);
    assert_eq!(code(&run("solve", &cfg, &o2, &["--seed", "4"])), 0);
    let t1 = fs::read_to_string(o1.join("trace.csv")).unwrap();
    assert_eq!(t1, fs::read_to_string(o2.join("trace.csv")).unwrap());
    assert!(t1.starts_with("n,objective,residual,"));
    assert!(t1.lines().next().unwrap().ends_with(",dual_objective"));
    assert_eq!(t1.lines().count(), 201);
    assert!(!t1.contains('\r'));

    let s = json(&o1.join("summary.json"));
    assert_eq!(s["iterations"], 200);
    assert_eq!(s["termination"], "iter_cap");
    assert!(s["objective"].as_f64().unwrap() < s["initial_objective"].as_f64().unwrap());
    assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);

    let r = json(&o1.join("resolved_config.json"));
    assert_eq!(r["solver"]["seed"], 4);
    assert_eq!(r["solver"]["keep_every"], 1);
    assert_eq!(r["recipe"], "dual_fb");
}

#[test]
fn fixture_root_comes_from_the_environment() {
    let d = TempDir::new().unwrap();
    let fixtures = d.path().join("fixtures");
    fs::create_dir(&fixtures).unwrap();
    generate_step_bundle(&fixtures, "step");
    let cfg_dir = d.path().join("configs");
    fs::create_dir(&cfg_dir).unwrap();
    let cfg = write(
        &cfg_dir,
        "solve.json",
        r#"{"problem": {"kind": "tvl1", "fixture": "step"}, "recipe": "chambolle_pock", "solver": {"max_iter": 50}}"#,
    );
    let out = d.path().join("out");
    assert_eq!(code(&run("solve", &cfg, &out, &[])), 1);
    let o = bin().env("PROXSPLIT_FIXTURES", &fixtures).arg("solve").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn lasso_fista_reaches_the_reference_objective() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        d.path(),
        "lasso.json",
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipe": "fista", "solver": {"max_iter": 10000, "step": 1.0}}"#,
    );
    let out = d.path().join("out");
    assert_eq!(code(&run("solve", &cfg, &out, &[])), 0);
    let s = json(&out.join("summary.json"));
    let (got, want) = (s["objective"].as_f64().unwrap(), s["expected_objective"].as_f64().unwrap());
    assert!((got - want).abs() <= 1e-6, "{got} vs {want}");
}

#[test]
fn zero_iterations_give_an_empty_trace() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        d.path(),
        "z.json",
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipe": "fb", "solver": {"max_iter": 0}}"#,
    );
    let out = d.path().join("out");
    assert_eq!(code(&run("solve", &cfg, &out, &[])), 0);
    assert_eq!(fs::read_to_string(out.join("trace.csv")).unwrap().lines().count(), 1);
    assert_eq!(json(&out.join("summary.json"))["termination"], "iter_cap");
}

#[test]
fn config_errors_exit_with_one() {
    let d = TempDir::new().unwrap();
    let out = d.path().join("out");
    let cases = [
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipe": "newton"}"#,
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipe": "fb", "solver": {"stepsize": 1}}"#,
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipe": "fb", "solver": {"step": 5.0}}"#,
        r#"{"problem": {"kind": "lasso"}, "recipe": "fb"}"#,
        r#"{"problem": {"kind": "lasso", "fixture": "missing"}, "recipe": "fb"}"#,
        "not json",
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write(d.path(), &format!("c{i}.json"), body);
        let o = run("solve", &cfg, &out, &[]);
        assert_eq!(code(&o), 1, "case {i}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run("solve", &d.path().join("c1.json"), &out, &[]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepsize"));
    assert_eq!(code(&run("solve", &d.path().join("nowhere.json"), &out, &[])), 1);
}

#[test]
fn divergence_exits_with_two() {
    let d = TempDir::new().unwrap();
    let bundle = generate_step_bundle(d.path(), "huge");
    let obs = fs::read_to_string(bundle.join("observation.csv")).unwrap();
    let scaled: String = obs
        .lines()
        .map(|l| l.split(',').map(|v| format!("{}", v.parse::<f64>().unwrap() * 1e13)).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(bundle.join("observation.csv"), scaled).unwrap();
    let cfg = write(
        d.path(),
        "solve.json",
        r#"{"problem": {"kind": "tv_denoise", "fixture": "huge"}, "recipe": "chambolle_pock", "solver": {"max_iter": 10}}"#,
    );
    let out = d.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("summary.json"))["termination"], "diverged");
}

#[test]
fn certify_exit_codes() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "eq.json", r#"{"checks": ["dr_cp_equivalence", "dr_admm_equivalence"]}"#);
    let out = d.path().join("eq");
    assert_eq!(code(&run("certify", &cfg, &out, &[])), 0);
    let r = json(&out.join("report.json"));
    assert_eq!(r["pass"], true);
    assert_eq!(r["checks"].as_array().unwrap().len(), 2);

    let cfg = write(d.path(), "neg.json", r#"{"checks": ["km_averaging", "negative_controls"]}"#);
    let out = d.path().join("neg");
    let o = run("certify", &cfg, &out, &[]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative_controls"));
    assert_eq!(json(&out.join("report.json"))["failed"], serde_json::json!(["negative_controls"]));

    let cfg = write(d.path(), "unknown.json", r#"{"checks": ["everything"]}"#);
    assert_eq!(code(&run("certify", &cfg, &d.path().join("u"), &[])), 1);
}

#[test]
fn certify_default_suite_passes() {
    let d = TempDir::new().unwrap();
    let cfg = write(d.path(), "all.json", "{}");
    let out = d.path().join("all");
    let o = run("certify", &cfg, &out, &["--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&out.join("resolved_config.json"))["seed"], 3);
}

#[test]
fn compare_fista_beats_fb_on_lasso() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        d.path(),
        "cmp.json",
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipes": ["fb", "fista"], "solver": {"max_iter": 500, "step": 1.0}}"#,
    );
    let out = d.path().join("out");
    assert_eq!(code(&run("compare", &cfg, &out, &[])), 0);
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,fb,fista,gap_to_best");
    let (fb, fista) = (column(&csv, "fb"), column(&csv, "fista"));
    for n in 5..fb.len() {
        assert!(fista[n].unwrap() <= fb[n].unwrap() + 1e-10, "n={n}");
    }
    assert!(column(&csv, "gap_to_best").iter().all(|g| g.unwrap() >= 0.0));
}

#[test]
fn compare_single_recipe_and_tv_agreement() {
    let d = TempDir::new().unwrap();
    let cfg = write(
        d.path(),
        "one.json",
        r#"{"problem": {"kind": "lasso", "builtin": "lasso"}, "recipes": ["dr"], "solver": {"max_iter": 20}}"#,
    );
    let out = d.path().join("one");
    assert_eq!(code(&run("compare", &cfg, &out, &[])), 0);
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,dr,gap_to_best");
    assert_eq!(csv.lines().count(), 22);

    let cfg = write(
        d.path(),
        "tv.json",
        r#"{"problem": {"kind": "tv_denoise", "builtin": "tv_denoise_8x8"}, "recipes": ["chambolle_pock", "condat", "dual_fb"], "solver": {"max_iter": 5000}}"#,
    );
    let out = d.path().join("tv");
    assert_eq!(code(&run("compare", &cfg, &out, &[])), 0);
    let s = json(&out.join("summary.json"));
    let finals: Vec<f64> = s.as_array().unwrap().iter().map(|r| r["objective"].as_f64().unwrap()).collect();
    let best = finals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(finals.iter().all(|f| (f - best) / best <= 1e-4), "{finals:?}");

    let cfg = write(
        d.path(),
        "mixed.json",
        r#"{"problem": {"kind": "tv_denoise", "builtin": "tv_denoise_8x8"}, "recipes": ["chambolle_pock", "fista"]}"#,
    );
    assert_eq!(code(&run("compare", &cfg, &d.path().join("mixed"), &[])), 1);
}
