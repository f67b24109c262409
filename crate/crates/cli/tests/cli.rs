use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use num_complex::Complex64;

use lipalpha_cli::{run, Cli};
use lipalpha_core::estimates::{CauchyTransforms, Exact};
use lipalpha_core::geometry::certify_probe_aperture;
use lipalpha_core::measure::{PairMeasure, ScalarMeasure};
use lipalpha_core::{fixtures, Point};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("lipalpha").chain(args.iter().copied())).unwrap()
}

fn run_in(cmd: &str, config: &Path, out: &Path) -> lipalpha_cli::Outcome {
    run(
        &cli(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        &Exact,
    )
}

fn json(out: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join(name)).unwrap()).unwrap()
}

#[test]
fn design_certifies_and_writes_domain() {
    let out = tempfile::tempdir().unwrap();
    let o = run_in("design", &configs().join("design.toml"), out.path());
    assert_eq!(o.code, 0, "{:?}", o.messages);
    for f in ["domain.json", "wiener.csv", "wiener.json", "manifest.json"] {
        assert!(out.path().join(f).exists(), "{f}");
    }
    assert_eq!(json(out.path(), "wiener.json")["verdict"], "certified-convergent");
    // the written domain round-trips through the wiener command
    let cfg = write(out.path(), "w.json", r#"{"domain": {"file": "domain.json"}, "n_max": 32}"#);
    let o2 = run_in("wiener", &cfg, &out.path().join("w"));
    assert_eq!(o2.code, 0);
    let manifest = json(&out.path().join("w"), "manifest.json");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn empty_schedule_gives_zero_series() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("design.toml"))
        .unwrap()
        .replace("k = 1", "k = 0");
    let cfg = write(dir.path(), "d.toml", &text);
    let o = run_in("design", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 0, "{:?}", o.messages);
    let w = json(&dir.path().join("out"), "wiener.json");
    assert_eq!(w["partial_sum"].as_f64(), Some(0.0));
}

#[test]
fn infeasible_schedule_exits_two_and_names_n() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("design.toml"))
        .unwrap()
        .replace("n_range = [3, 30]", "n_range = [0, 10]");
    let cfg = write(dir.path(), "d.toml", &text);
    let o = run_in("design", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 2);
    assert!(o.messages[0].contains("n = 0"), "{:?}", o.messages);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_config_exits_one_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "n_max = 3\nn_maxx = 4\n[domain]\nfixture = \"two-ball\"\n");
    let o = run_in("wiener", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 1);
    assert!(o.messages[0].contains("n_maxx"));
    assert!(!dir.path().join("out").exists());
    let missing = run_in("wiener", &dir.path().join("nope.toml"), &dir.path().join("out"));
    assert_eq!(missing.code, 1);
}

#[test]
fn identity_function_quotients_are_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "z.toml",
        "r0 = 0.5\nrho = 0.5\ncount = 20\n[domain]\nfixture = \"two-ball\"\n[function]\npoly = [[0.0, 0.0], [1.0, 0.0]]\n",
    );
    let o = run_in("diffquot", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 0);
    let s = json(&dir.path().join("out"), "diffquot.json");
    assert!(s["final_err"].as_f64().unwrap() < 1e-12);
}

#[test]
fn kernel_on_designed_domain_converges() {
    let dir = tempfile::tempdir().unwrap();
    let d = fixtures::designed_domain();
    let pole = fixtures::largest_ball_center(&d);
    let cfg = write(
        dir.path(),
        "k.json",
        &format!(
            r#"{{"domain": {{"fixture": "designed"}}, "function": {{"kernels": [{{"pole": [{:e}, {:e}], "order": 1, "coeff": [1.0, 0.0]}}]}}, "r0": 1.0, "rho": 0.5, "count": 27, "tol": 1e-4}}"#,
            pole.re, pole.im
        ),
    );
    let o = run_in("diffquot", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 0, "{:?}", o.messages);
    let o = run_in("diffquot", &configs().join("diffquot-kernel.toml"), &dir.path().join("k2"));
    assert_eq!(o.code, 0, "{:?}", o.messages);
    let o = run_in("diffquot", &configs().join("diffquot-cluster.toml"), &dir.path().join("c"));
    assert_eq!(o.code, 0, "{:?}", o.messages);
}

#[test]
fn aperture_above_certified_value_exits_two() {
    let d = fixtures::two_ball_domain();
    let theta = 0.25;
    let t_star = certify_probe_aperture(d.outer(), d.b(), d.balls(), d.segments(), theta, 0.5);
    let t = (t_star + 0.4).min(0.9);
    assert!(t > t_star);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        &format!(
            "r0 = 0.5\nrho = 0.5\ncount = 20\ntheta = {theta}\nt = {t}\n[domain]\nfixture = \"two-ball\"\n[function]\npoly = [[0.0, 0.0], [1.0, 0.0]]\n"
        ),
    );
    let o = run_in("diffquot", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 2);
    assert!(o.messages[0].contains("index"), "{:?}", o.messages);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn tangential_probe_never_changes_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("diffquot-cluster.toml")).unwrap()
        + "\n[tangential]\nkind = \"hug-balls\"\ngap = 0.1\n";
    let cfg = write(dir.path(), "t.toml", &text);
    let o = run_in("diffquot", &cfg, &dir.path().join("out"));
    assert_eq!(o.code, 0, "{:?}", o.messages);
    let t = json(&dir.path().join("out"), "tangential.json");
    assert_eq!(t["aperture_ok"], false);
    assert_eq!(t["first_violation"], 0);
}

#[test]
fn zero_measure_lemmas_pass_trivially() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "z.toml",
        "t = 0.5\n[domain]\nfixture = \"two-ball\"\n[measure]\nkind = \"zero\"\n[ray]\ntheta = 3.141592653589793\nr_min = 1e-6\nr_max = 0.3\ncount = 20\n",
    );
    assert_eq!(run_in("lemmas", &cfg, &dir.path().join("out")).code, 0);
    let f = write(
        dir.path(),
        "f.toml",
        "grids = [16]\n[domain]\nfixture = \"two-ball\"\n[measure]\nkind = \"zero\"\n[bump]\ncenter = [-0.3, 0.4]\nradius = 0.2\n",
    );
    let o = run_in("fubini", &f, &dir.path().join("f"));
    assert_eq!(o.code, 0);
    assert_eq!(json(&dir.path().join("f"), "fubini.json")["vacuous"], true);
}

#[test]
fn shipped_lab_configs_pass() {
    let out = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("lemmas", "lemmas.toml"),
        ("seminorm", "seminorm.toml"),
        ("fubini", "fubini.toml"),
        ("identity", "identity.toml"),
        ("that", "that.toml"),
        ("wiener", "wiener.toml"),
    ] {
        let o = run_in(cmd, &configs().join(file), &out.path().join(cmd));
        assert_eq!(o.code, 0, "{cmd}: {:?}", o.messages);
    }
}

#[test]
fn format_flag_filters_outputs() {
    let out = tempfile::tempdir().unwrap();
    let o = run(
        &cli(&[
            "diffquot",
            "--config",
            configs().join("diffquot-kernel.toml").to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "--format",
            "json",
        ]),
        &Exact,
    );
    assert_eq!(o.code, 0);
    let mut names: Vec<String> = std::fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["diffquot.json", "manifest.json"]);
}

/// Transforms whose Cauchy field is inflated away from the origin.
struct Corrupted;

impl CauchyTransforms for Corrupted {
    fn h(&self, mu: &PairMeasure, a: Point) -> lipalpha_core::Result<Complex64> {
        Ok(mu.cauchy_h(a)? * (1.0 + 10.0 * a.norm()))
    }

    fn h_tilde(&self, mu: &PairMeasure, a: Point) -> lipalpha_core::Result<f64> {
        mu.cauchy_h_majorant(a)
    }

    fn scalar(&self, lambda: &ScalarMeasure, a: Point) -> lipalpha_core::Result<Complex64> {
        lambda.cauchy(a)
    }
}

#[test]
fn corrupted_transform_is_caught_with_a_witness() {
    let out = tempfile::tempdir().unwrap();
    for (cmd, file) in [("lemmas", "lemmas.toml"), ("identity", "identity.toml")] {
        let o = run(
            &cli(&[
                cmd,
                "--config",
                configs().join(file).to_str().unwrap(),
                "--out",
                out.path().join(cmd).to_str().unwrap(),
            ]),
            &Corrupted,
        );
        assert_eq!(o.code, 4, "{cmd}: {:?}", o.messages);
        assert!(o.messages.iter().any(|m| m.contains("witness a = (")), "{:?}", o.messages);
        // reports are still written for inspection
        assert!(out.path().join(cmd).join("manifest.json").exists());
    }
}

fn run_binary(cmd: &str, config: &Path, out: &Path, threads: usize) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_lipalpha"))
        .args([cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("RAYON_NUM_THREADS", threads.to_string())
        .status()
        .unwrap()
        .code()
        .unwrap()
}

#[test]
fn outputs_are_byte_identical_across_threads() {
    let out = tempfile::tempdir().unwrap();
    for (cmd, file) in [
        ("lemmas", "lemmas.toml"),
        ("seminorm", "seminorm.toml"),
        ("diffquot", "diffquot-cluster.toml"),
        ("identity", "identity.toml"),
    ] {
        let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
        for threads in [1, 4, 8] {
            let dir = out.path().join(format!("{cmd}-{threads}"));
            assert_eq!(run_binary(cmd, &configs().join(file), &dir, threads), 0);
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
                .unwrap()
                .map(|e| e.unwrap())
                .filter(|e| e.file_name() != "manifest.json")
                .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
                .collect();
            files.sort();
            match &reference {
                None => reference = Some(files),
                Some(r) => assert_eq!(r, &files, "{cmd} at {threads} threads"),
            }
        }
    }
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"domain\": {\"fixture\": \"two-ball\"}, \"n_max\": 3, \"x\": 1}");
    assert_eq!(run_binary("wiener", &bad, &dir.path().join("o"), 1), 1);
    assert_eq!(run_binary("wiener", &configs().join("wiener.toml"), &dir.path().join("o"), 1), 0);
}
