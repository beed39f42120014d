use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agepot::HazardRate;
use agepot_cli::output::{read_hazard_file, read_numeric_csv};

const SMALL: &str = r#"
name = "small"
models = ["mc-nlif", "fp"]
horizon = 0.5
dt = 1e-3

[stimulus]
sigma = 0.2
mu = { kind = "constant", value = 3.0 }

[potential]
n_v = 200

[mc]
trials = 400
seed = 11
psth_bin = 0.05

[initial]
potential = { kind = "gaussian", mean = 0.0, std = 0.1 }
"#;

fn agepot(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_agepot"));
    cmd.args(args);
    for key in ["AGEPOT_SEED", "AGEPOT_OUT_DIR", "AGEPOT_THREADS", "AGEPOT_SNAPSHOT_STRIDE"] {
        cmd.env_remove(key);
    }
    cmd.envs(envs.iter().copied());
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn sc_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn lists_bundled_scenarios() {
    let o = agepot(&["list-scenarios"], &[]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["fig2", "fig3", "fig5", "fig6", "fig7", "theorem-suite"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "missing {name} in {text}");
    }
}

#[test]
fn run_writes_rates_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.toml", SMALL);
    let out = dir.path().join("out");
    let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rates = read_numeric_csv(&out.join("rates.csv")).unwrap();
    assert_eq!(rates.columns, ["t", "mc-nlif", "fp"]);
    assert_eq!(rates.rows.len(), 10);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"]["mc"]["seed"], 11);
    assert_eq!(manifest["passed"], true);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let broken = scenario(dir.path(), "broken.toml", "name = \"x\"\nmodels = [");
    let unknown = scenario(dir.path(), "unknown.toml", &format!("{SMALL}\nbogus = 1\n"));
    let invalid = scenario(dir.path(), "invalid.toml", &SMALL.replace("dt = 1e-3", "dt = -1.0"));
    let no_hazard = scenario(
        dir.path(),
        "nohazard.toml",
        &SMALL.replace(r#"["mc-nlif", "fp"]"#, r#"["as"]"#).replace("[mc]", "[age]\na_max = 1.0\n\n[mc]"),
    );
    let out = dir.path().join("out");
    for p in [&broken, &unknown, &invalid, &no_hazard] {
        let o = agepot(&["run", sc_str(p), "--out-dir", sc_str(&out)], &[]);
        assert_eq!(code(&o), 2, "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
    }
    let o = agepot(&["run", "no-such-scenario"], &[]);
    assert_eq!(code(&o), 2);
    let o = agepot(&["run", sc_str(&broken), "--threads", "0"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_hazard_file_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("h.csv"), "a,hazard\n0,1\n0.1,oops\n").unwrap();
    let text = r#"
name = "file-hazard"
models = ["as"]
horizon = 0.1
dt = 1e-2

[stimulus]
sigma = 0.1
mu = { kind = "constant", value = 0.0 }

[age]
a_max = 1.0

[hazard]
kind = "file"
path = "h.csv"
"#;
    let sc = scenario(dir.path(), "s.toml", text);
    let out = dir.path().join("out");
    let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&out)], &[]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn numerical_failure_exits_with_3() {
    // A vanishing hazard lets survivors pile up at the end of a short age grid.
    let text = r#"
name = "truncated"
models = ["as"]
horizon = 1.0
dt = 1e-2

[stimulus]
sigma = 0.1
mu = { kind = "constant", value = 0.0 }

[age]
a_max = 0.2

[hazard]
kind = "escape"
tau = 1.0
h = { kind = "constant", value = -20.0 }
"#;
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.toml", text);
    let out = dir.path().join("out");
    let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&out)], &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_check_exits_with_4_but_run_does_not() {
    let text = format!(
        "{SMALL}\n[[check]]\nkind = \"rate\"\nreference = \"fp\"\ncandidate = \"mc-nlif\"\ntolerance = 0.0\n"
    );
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.toml", &text);
    let out = dir.path().join("out");
    let o = agepot(&["check", sc_str(&sc), "--out-dir", sc_str(&out)], &[]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"passed\": false"));
    let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&out)], &[]);
    assert_eq!(code(&o), 0);
}

#[test]
fn fpt_hazard_is_nonnegative_and_peaks_at_the_deterministic_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h");
    let o = agepot(
        &[
            "fpt-hazard", "--mu", "3", "--sigma", "0.05", "--n-v", "1000", "--dt", "5e-4",
            "--a-max", "0.6", "--out-dir", sc_str(&out),
        ],
        &[],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let hazard = read_hazard_file(&out.join("hazard.csv")).unwrap();
    assert!(hazard.is_autonomous());
    assert!(hazard.row(0).iter().all(|&s| s >= 0.0 && s.is_finite()));

    let t = read_numeric_csv(&out.join("fpt.csv")).unwrap();
    let ages = t.column("a").unwrap();
    let isi = t.column("isi").unwrap();
    let k = (0..isi.len()).max_by(|&i, &j| isi[i].total_cmp(&isi[j])).unwrap();
    let period = (2.5f64 / 2.0).ln();
    assert!((ages[k] - period).abs() < 0.01, "ISI peak at {} vs {period}", ages[k]);
}

#[test]
fn fpt_hazard_rejects_bad_parameters() {
    let o = agepot(&["fpt-hazard", "--mu", "3", "--sigma=-1"], &[]);
    assert_eq!(code(&o), 2);
    let o = agepot(&["fpt-hazard", "--mu", "3"], &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn artifacts_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.toml", SMALL);
    let runs: Vec<_> = ["1", "3", "3"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out = dir.path().join(format!("out{i}"));
            let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&out), "--threads", threads], &[]);
            assert_eq!(code(&o), 0);
            files(&out)
        })
        .collect();
    assert!(!runs[0].is_empty());
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn environment_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.toml", SMALL);
    let env_out = dir.path().join("env");
    let o = agepot(
        &["run", sc_str(&sc)],
        &[
            ("AGEPOT_OUT_DIR", sc_str(&env_out)),
            ("AGEPOT_SEED", "99"),
            ("AGEPOT_SNAPSHOT_STRIDE", "250"),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(env_out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 99"));
    for step in [0, 250, 500] {
        assert!(env_out.join(format!("snapshots/fp_step{step:07}.csv")).exists());
    }

    let flag_out = dir.path().join("flag");
    let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&flag_out), "--seed", "99"], &[]);
    assert_eq!(code(&o), 0);
    let a = fs::read(env_out.join("rates.csv")).unwrap();
    let b = fs::read(flag_out.join("rates.csv")).unwrap();
    assert_eq!(a, b);

    let other = dir.path().join("other");
    let o = agepot(&["run", sc_str(&sc), "--out-dir", sc_str(&other), "--seed", "98"], &[]);
    assert_eq!(code(&o), 0);
    assert_ne!(a, fs::read(other.join("rates.csv")).unwrap());
}

#[test]
fn first_passage_hazard_drives_the_escape_engine() {
    let text = r#"
name = "renewal"
models = ["fpt", "as", "mc-escape"]
horizon = 1.0
dt = 1e-3

[stimulus]
sigma = 0.2
mu = { kind = "constant", value = 3.0 }

[potential]
n_v = 300

[age]
a_max = 1.0

[mc]
trials = 2000
psth_bin = 0.05

[hazard]
kind = "first-passage"

[[check]]
kind = "rate"
reference = "as"
candidate = "mc-escape"
tolerance = 0.1
"#;
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "s.toml", text);
    let out = dir.path().join("out");
    let o = agepot(&["check", sc_str(&sc), "--out-dir", sc_str(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let hazard = read_hazard_file(&out.join("hazard.csv")).unwrap();
    let fpt = read_numeric_csv(&out.join("fpt.csv")).unwrap();
    let from_fpt = fpt.column("hazard").unwrap();
    for (j, s) in from_fpt.iter().enumerate() {
        assert!((hazard.rate(0.0, j as f64 * 1e-3).unwrap() - s).abs() <= 1e-9 * s.max(1.0));
    }
}
