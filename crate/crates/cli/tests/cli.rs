use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tubepath")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a CSV file as string fields, header excluded.
fn rows(path: PathBuf) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

const HARMONIC: &str = r#"
[chart]
potential = "harmonic"
omega = 1.0

[sde]
steps = 256

[mc]
samples = 20000
seed = 11
"#;

#[test]
fn free_particle_matches_the_heat_kernel() {
    let d = TempDir::new().unwrap();
    write(d.path(), "free.toml", "[path]\nstart = [0.0]\nend = [1.0]\n[mc]\nsamples = 10000\n");
    let o = run(d.path(), &["propagator", "--config", "free.toml", "--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = json(d.path().join("out/comparison.json"));
    assert_eq!(c["oracle"], "heat");
    assert_eq!(c["pass"], true);
    let exact = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((c["estimate_re"].as_f64().unwrap() - exact).abs() <= 1e-12);
    assert_eq!(c["std_error"].as_f64().unwrap(), 0.0);
}

#[test]
fn harmonic_matches_mehler() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.toml", HARMONIC);
    let o = run(d.path(), &["propagator", "--config", "h.toml", "--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = json(d.path().join("out/comparison.json"));
    assert_eq!(c["oracle"], "mehler");
    assert!(c["se_multiple"].as_f64().unwrap() <= 3.0);
    assert!(c["rel_error"].as_f64().unwrap() <= 0.02);
    let chunks = rows(d.path().join("out/chunks.csv"));
    assert_eq!(chunks.len(), 20);
    assert_eq!(chunks.iter().map(|r| r[2].parse::<usize>().unwrap()).sum::<usize>(), 20000);
}

#[test]
fn lorentzian_mode_uses_the_pde_oracle() {
    let d = TempDir::new().unwrap();
    write(d.path(), "l.toml", &format!("{HARMONIC}\n[experiment]\nmode = \"lorentzian\"\n"));
    let o = run(d.path(), &["propagator", "--config", "l.toml", "--strict", "--samples", "10000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = json(d.path().join("out/comparison.json"));
    assert_eq!(c["oracle"], "pde");
    assert!(c["oracle_im"].as_f64().unwrap() != 0.0);
}

#[test]
fn same_seed_gives_identical_json_for_any_layout() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.toml", HARMONIC);
    let a = run(d.path(), &["propagator", "--config", "h.toml", "--samples", "3000", "--out", "a"]);
    let b = run(d.path(), &["propagator", "--config", "h.toml", "--samples", "3000", "--out", "b"]);
    write(d.path(), "h2.toml", &HARMONIC.replace("seed = 11", "seed = 11\nchunk_size = 77\nworkers = 1"));
    let c = run(d.path(), &["propagator", "--config", "h2.toml", "--samples", "3000", "--out", "c"]);
    for o in [&a, &b, &c] {
        assert_eq!(code(o), 0, "{}", stderr(o));
    }
    let read = |dir: &str| fs::read(d.path().join(dir).join("result.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_eq!(read("a"), read("c"));
    let other = run(d.path(), &["propagator", "--config", "h.toml", "--samples", "3000", "--seed", "12", "--out", "e"]);
    assert_eq!(code(&other), 0);
    assert_ne!(read("a"), read("e"));
}

#[test]
fn effective_config_round_trips() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.toml", HARMONIC);
    let o = run(d.path(), &["dump-paths", "--config", "h.toml", "--out", "a", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let first = fs::read_to_string(d.path().join("a/effective_config.toml")).unwrap();
    assert!(first.contains("seed = 5"));
    assert!(first.contains("radius = "));
    fs::copy(d.path().join("a/effective_config.toml"), d.path().join("eff.toml")).unwrap();
    let o = run(d.path(), &["dump-paths", "--config", "eff.toml", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = fs::read_to_string(d.path().join("b/effective_config.toml")).unwrap();
    assert_eq!(first, second);
    assert_eq!(fs::read(d.path().join("a/paths.csv")).unwrap(), fs::read(d.path().join("b/paths.csv")).unwrap());
}

#[test]
fn config_errors_exit_with_2_and_name_the_line() {
    let d = TempDir::new().unwrap();
    write(d.path(), "bad.toml", "[tube]\nradius = 1.0\nradiuss = 2.0\n");
    let o = run(d.path(), &["propagator", "--config", "bad.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3") && stderr(&o).contains("radiuss"), "{}", stderr(&o));

    write(d.path(), "neg.toml", "[path]\nduration = 1.0\nhbar = -1.0\n");
    let o = run(d.path(), &["propagator", "--config", "neg.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3") && stderr(&o).contains("path.hbar"), "{}", stderr(&o));

    let o = run(d.path(), &["propagator", "--config", "missing.toml"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn numeric_failure_exits_with_3() {
    let d = TempDir::new().unwrap();
    // a declared bound C far below max|V| is violated by the samples
    write(d.path(), "c.toml", &format!("{HARMONIC}\n[experiment]\nc_bound = 1e-6\n"));
    let o = run(d.path(), &["theta-scan", "--config", "c.toml", "--samples", "200"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn strict_mode_exits_with_4_on_oracle_disagreement() {
    let d = TempDir::new().unwrap();
    // confinement to a narrow tube removes mass the unconfined kernel keeps
    let cfg = "[chart]\ndim = 2\npotential = \"harmonic\"\n[path]\nstart = [0.0, 0.0]\nend = [0.5, 0.0]\n\
               [tube]\nradius = 0.6\nkappa = 1.0\n[mc]\nsamples = 2000\n[experiment]\noracle = \"mehler\"\n";
    write(d.path(), "t.toml", cfg);
    let lax = run(d.path(), &["propagator", "--config", "t.toml"]);
    assert_eq!(code(&lax), 0, "{}", stderr(&lax));
    let strict = run(d.path(), &["propagator", "--config", "t.toml", "--strict"]);
    assert_eq!(code(&strict), 4, "{}", stderr(&strict));
    assert_eq!(json(d.path().join("out/comparison.json"))["pass"], false);
}

fn sine_ladder(dir: &Path, steps: usize, rungs: usize, step: f64) -> PathBuf {
    let mut s = String::from("path,t,q1\n");
    for j in 0..rungs {
        let eps = j as f64 * step;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            s.push_str(&format!("{j},{t:e},{:e}\n", t + eps * (std::f64::consts::PI * t).sin()));
        }
    }
    write(dir, "ladder.csv", &s)
}

#[test]
fn probe_classifies_every_input_path() {
    let d = TempDir::new().unwrap();
    sine_ladder(d.path(), 256, 31, 0.01);
    write(d.path(), "p.toml", "[path]\nend = [1.0]\n[experiment]\nprobe_paths = \"ladder.csv\"\n");
    let o = run(d.path(), &["probe", "--config", "p.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(d.path().join("out/probe.csv"));
    assert_eq!(r.len(), 31);
    assert_eq!(num(&r[0][1]), 0.0);
    assert_eq!(r[0][5], "true");
    let flags: Vec<bool> = r.iter().map(|row| row[5] == "true").collect();
    let transitions: Vec<usize> = (1..flags.len()).filter(|&j| flags[j] != flags[j - 1]).collect();
    assert_eq!(transitions.len(), 1);
    // max|ΔE| = επ + ε²π²/2 reaches δE = 1/2 at ε = (√2 − 1)/π
    let crossing = (2f64.sqrt() - 1.0) / std::f64::consts::PI;
    assert!((transitions[0] as f64 * 0.01 - crossing).abs() <= 0.01);
    assert!(r.iter().any(|row| row[1] == "DIVERGENT"));
}

#[test]
fn probe_reports_malformed_rows() {
    let d = TempDir::new().unwrap();
    write(d.path(), "bad.csv", "path,t,q1\n0,0,0\n0,0.5,abc\n0,1,1\n");
    write(d.path(), "p.toml", "[path]\nend = [1.0]\n[experiment]\nprobe_paths = \"bad.csv\"\n");
    let o = run(d.path(), &["probe", "--config", "p.toml"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn dumped_paths_feed_the_probe() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.toml", &format!("{HARMONIC}\n[experiment]\ndump_count = 5\nprobe_paths = \"out/paths.csv\"\n"));
    let o = run(d.path(), &["dump-paths", "--config", "h.toml"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta = json(d.path().join("out/paths.json"));
    assert_eq!(meta.as_array().unwrap().len(), 5);
    let o = run(d.path(), &["probe", "--config", "h.toml", "--out", "probe"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(rows(d.path().join("probe/probe.csv")).len(), 5);
}

#[test]
fn theta_scan_constant_potential_has_no_gap() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "[chart]\npotential = \"constant\"\nvalue = 1.0\n[mc]\nsamples = 500\n");
    let o = run(d.path(), &["theta-scan", "--config", "c.toml", "--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(d.path().join("out/theta_scan.csv"));
    assert_eq!(r.len(), 4);
    for row in &r {
        assert!(num(&row[7]) <= 1e-12, "gap {}", row[7]);
    }
    // θ = −i gives e^{iT}
    let last = r.iter().find(|row| row[0] == "-1i").expect("θ = −i row");
    assert!((num(&last[1]) - 1f64.cos()).abs() <= 1e-12);
    assert!((num(&last[2]) - 1f64.sin()).abs() <= 1e-12);
    assert!(num(&last[9]) <= 1e-12);
}

#[test]
fn theta_scan_harmonic_within_remainder() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.toml", HARMONIC);
    let o = run(d.path(), &["theta-scan", "--config", "h.toml", "--strict", "--samples", "5000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(rows(d.path().join("out/theta_scan.csv")).iter().all(|r| r[8] == "true"));
    let coeffs = rows(d.path().join("out/coefficients.csv"));
    assert_eq!(coeffs.len(), 21);
    assert!(coeffs.iter().all(|r| r[5] == "true"));
}

#[test]
fn convergence_ladder() {
    let d = TempDir::new().unwrap();
    write(d.path(), "c.toml", "[chart]\npotential = \"constant\"\nvalue = 2.0\n[mc]\nsamples = 200\n");
    let o = run(d.path(), &["convergence", "--config", "c.toml", "--strict"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = rows(d.path().join("out/convergence.csv"));
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|row| num(&row[2]) == 0.0));

    write(d.path(), "h.toml", HARMONIC);
    let o = run(d.path(), &["convergence", "--config", "h.toml", "--strict", "--samples", "5000", "--out", "h"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(d.path().join("h/convergence.json"));
    assert!(summary["fitted_order"].as_f64().unwrap() >= 0.7);
    assert_eq!(summary["monotone"], true);
    assert_eq!(summary["bound_holds"], true);
}

#[test]
fn dump_paths_flag_writes_paths_alongside() {
    let d = TempDir::new().unwrap();
    write(d.path(), "h.toml", &format!("{HARMONIC}\n[experiment]\ndump_count = 2\n"));
    let o = run(d.path(), &["propagator", "--config", "h.toml", "--samples", "100", "--dump-paths"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.path().join("out/result.json").exists());
    // 2 paths × 257 nodes
    assert_eq!(rows(d.path().join("out/paths.csv")).len(), 514);
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let d = TempDir::new().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let o = run(d.path(), &["dump-paths", "--config", path.to_str().unwrap(), "--samples", "2"]);
            assert_eq!(code(&o), 0, "{}: {}", path.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
