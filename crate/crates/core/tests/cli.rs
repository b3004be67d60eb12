use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gepnet::data::Dataset;

fn gepnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gepnet")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "seed = 5
suites = free_entropy, gen_error
[model]
delta = 0.5
[sizes]
d = 3, 4
n = 2
t = 0, 1
[sampler]
n_outer = 20
m = 500
n_test = 4
";

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn constants_for_sine() {
    let out = gepnet(&["constants", "sine"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rho = 0.606530659713"), "{text}");
    assert!(text.contains("epsilon = 0.064452"), "{text}");
}

#[test]
fn missing_config_is_a_configuration_error() {
    assert_eq!(gepnet(&["run"]).status.code(), Some(2));
    assert_eq!(gepnet(&["run", "--config", "/nonexistent/gepnet.cfg"]).status.code(), Some(2));
    assert_eq!(gepnet(&["constants", "relu"]).status.code(), Some(2));
}

#[test]
fn bad_config_reports_every_error_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "[model]\ndelta = 0.5\nbogus = 1\ndelta = 0.6\n[sizes]\nn = 2\n");
    let out = gepnet(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("lines 2 and 4"), "{err}");
    assert!(err.contains("line 3: unknown key [model] bogus"), "{err}");
    assert!(err.contains("missing required key [sizes] d"), "{err}");
}

#[test]
fn unknown_suite_names_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", SMALL);
    assert_eq!(gepnet(&["verify", "everything", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(gepnet(&["estimate", "entropy", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(gepnet(&["scan", "theorem3", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn empty_suite_list_runs_no_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), "e.cfg", "suites =\n[model]\ndelta = 0.5\n[sizes]\nd = 4\nn = 2\n");
    let out = gepnet(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("jobs = 0"), "{manifest}");
}

#[test]
fn gen_writes_a_readable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", SMALL);
    let out_dir = dir.path().join("gen");
    let out = gepnet(&["gen", "--t", "0.5", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = String::from_utf8(out.stdout).unwrap().trim().to_string();
    let ds = Dataset::from_csv(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((ds.d, ds.p, ds.n, ds.t), (3, 3, 2, 0.5));
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", SMALL);
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = gepnet(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a", &[]);
    let b = run("b", &["--workers", "2"]);
    let c = run("c", &["--seed", "6"]);
    let (fa, fb, fc) = (csv_files(&a), csv_files(&b), csv_files(&c));
    assert_eq!(fa.len(), 8);
    assert_eq!(fa, fb);
    for name in ["summary.txt", "config.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_ne!(fa, fc);
    let first = String::from_utf8(fa[0].1.clone()).unwrap();
    assert!(first.starts_with("# gepnet "), "{first}");
    assert!(first.lines().next().unwrap().contains(" config "), "{first}");
}

#[test]
fn failing_assertion_exits_with_one() {
    // At p = 1024 the ε-cancellation mean sits several SE from ε because of its
    // O(1/d) bias, and the mean-square decays like 1/d rather than d^{-1/2}.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "eps.cfg",
        "seed = 1\n[model]\ndelta = 0.5\n[sizes]\nd = 8\nn = 2\n[verify]\nepsilon_d = 16, 64, 256\nepsilon_p = 1024\nepsilon_m = 20000\n",
    );
    let out_dir = dir.path().join("out");
    let out = gepnet(&["verify", "epsilon", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("epsilon.decay_exponent FAIL"), "{summary}");
}
