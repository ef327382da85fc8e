use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use piston_cli::config::Config;
use piston_cli::CliError;
use piston_core::HarnessError;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn piston(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_piston"))
        .env("PISTON_OUT_DIR", out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const RECT: &str = r#"
seed = 5
[geometry]
dimension = 2
tube = { cross_section = [1.0] }
[initial]
q = 0.5
w = 0.0
e1 = [0.6]
e2 = [0.4]
[region]
q_min = 0.1
q_max = 0.9
e_min = 0.5
e_max = 1.5
w_bound = 1.5
"#;

#[test]
fn simulate_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("default.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = piston(out, &["simulate", cfg.to_str().unwrap(), "--seed", "11", "--dump-events", "--eps", "0.1"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trajectory.csv", "events.csv", "simulate.json"] {
        let x = fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("simulate.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 11);
    assert_eq!(summary["eps"], 0.1);
    let m: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["seed"], 11);
}

#[test]
fn out_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rect.toml", RECT);
    let flag = dir.path().join("flag");
    let o = piston(&dir.path().join("env"), &["--out", flag.to_str().unwrap(), "average", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(flag.join("averaged.csv").exists());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = write(d, "missing.toml", "container = \"nowhere.toml\"\n");
    let malformed = write(d, "bad.toml", "seed = 1\n[initial\nq = 0.5\n");
    let unknown = write(d, "unknown.toml", &format!("{RECT}\n[average]\nhorizn = 3.0\n"));
    let bad_region = write(d, "region.toml", &RECT.replace("q_min = 0.1", "q_min = 0.95"));
    let few = write(d, "few.toml", &format!("{RECT}\n[converge]\nsamples = 3\n"));
    let cases: [(&PathBuf, &str); 6] = [
        (&missing, "simulate"),
        (&malformed, "average"),
        (&unknown, "average"),
        (&bad_region, "average"),
        (&few, "converge"),
        (&d.join("absent.toml"), "simulate"),
    ];
    for (cfg, cmd) in cases {
        let o = piston(&d.join("out"), &[cmd, cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{cmd} {}: {}", cfg.display(), String::from_utf8_lossy(&o.stderr));
    }
    let o = piston(&d.join("out"), &["average", unknown.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizn"));
    match Config::load(&malformed) {
        Err(CliError::Config(msg)) => assert!(msg.contains("line 2"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn exit_codes() {
    let e: CliError = HarnessError::ExclusionThreshold { eps: 0.1, excluded: 30, total: 100 }.into();
    assert_eq!(e.exit_code(), 3);
    assert_eq!(CliError::Config(String::new()).exit_code(), 2);
}

#[test]
fn hash_ignores_layout() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.toml", RECT);
    let shuffled = "# same thing\n[region]\nw_bound = 1.5\ne_max = 1.5\ne_min = 0.5\nq_max = 0.9\nq_min = 0.1\n\
        [initial]\ne2 = [0.4]\ne1 = [0.6]\nw = 0.0\nq = 0.5\n\
        [geometry]\ntube.cross_section = [1.0]\ndimension = 2\n";
    let b = write(dir.path(), "b.toml", &format!("seed = 5\n{shuffled}"));
    let c = write(dir.path(), "c.toml", &RECT.replace("seed = 5", "seed = 6"));
    let (ha, hb, hc) = (
        Config::load(&a).unwrap().hash(),
        Config::load(&b).unwrap().hash(),
        Config::load(&c).unwrap().hash(),
    );
    assert_eq!(ha, hb);
    assert_ne!(ha, hc);
    let file_ref = configs().join("unit_square.toml");
    assert_eq!(Config::load(&file_ref).unwrap().geometry, piston_core::ContainerSpec::rectangle(1.0));
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn average_equilibrium_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "eq.toml", &RECT.replace("e1 = [0.6]", "e1 = [0.4]"));
    let out = dir.path().join("out");
    assert!(piston(&out, &["average", cfg.to_str().unwrap()]).status.success());
    let rows = read_csv(&out.join("averaged.csv"));
    assert_eq!(rows.len(), 10_001);
    for r in &rows {
        assert_eq!(&r[1..], &rows[0][1..]);
    }
    let s: serde_json::Value = serde_json::from_slice(&fs::read(out.join("average.json")).unwrap()).unwrap();
    assert!(s["oscillation"].is_null());
    assert!(s["note"].as_str().unwrap().contains("equilibrium"));
}

#[test]
fn average_period_matches_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("rectangle_average.toml");
    assert!(piston(&out, &["average", cfg.to_str().unwrap()]).status.success());
    let rows = read_csv(&out.join("averaged.csv"));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(out.join("average.json")).unwrap()).unwrap();
    let period = s["oscillation"]["period"].as_f64().unwrap();
    // Successive local maxima of Q on the grid.
    let peaks: Vec<f64> = rows
        .windows(3)
        .filter(|w| w[1][1] > w[0][1] && w[1][1] >= w[2][1])
        .map(|w| w[1][0])
        .collect();
    assert!(peaks.len() >= 3);
    let dt = 1e-3;
    for p in peaks.windows(2) {
        assert!((p[1] - p[0] - period).abs() <= dt + 1e-12, "{} vs {period}", p[1] - p[0]);
    }
}

#[test]
fn converge_single_eps_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{RECT}\n[converge]\neps_grid = [0.1]\nsamples = 12\ndeltas = [0.05, 0.2]\n"),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(piston(&a, &["converge", cfg.to_str().unwrap(), "--jobs", "1"]).status.success());
    assert!(piston(&b, &["converge", cfg.to_str().unwrap(), "--jobs", "3"]).status.success());
    for f in ["converge.json", "converge_samples.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let r: serde_json::Value = serde_json::from_slice(&fs::read(a.join("converge.json")).unwrap()).unwrap();
    assert!(r["monotonicity"].is_null());
    assert_eq!(r["per_eps"].as_array().unwrap().len(), 1);
    assert_eq!(fs::read_to_string(a.join("converge_samples.csv")).unwrap().lines().count(), 13);
    let o = piston(&a, &["converge", cfg.to_str().unwrap(), "--jobs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_billiard_on_the_cube() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cube.toml",
        &format!(
            "container = \"{}\"\nseed = 2\n[billiard]\nq = 1.0\nsamples = 40000\nks_samples = 20000\nflux_horizon = 200.0\nflux_orbits = 2\ndiagnostic_samples = 500\n",
            configs().join("geometry/cube.toml").display()
        ),
    );
    let out = dir.path().join("out");
    let o = piston(&out, &["verify-billiard", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("billiard.json")).unwrap()).unwrap();
    assert_eq!(r["table"]["dimension"], 3);
    assert!((r["table"]["momentum_factor"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let checks = r["checks"].as_array().unwrap();
    let momentum = checks.iter().find(|c| c["check"] == "momentum").unwrap();
    assert!((momentum["target"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    let santalo = checks.iter().find(|c| c["check"] == "santalo").unwrap();
    assert!(santalo["z"].as_f64().unwrap().abs() < 4.0);
}
