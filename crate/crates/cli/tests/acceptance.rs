//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always show:
//! `cargo test --release -p piston-cli --test acceptance`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use piston_cli::{run, Cli};
use piston_core::averaged::Averaged;
use piston_core::billiard::{
    involution_check, invariance_ks, kac_checks, momentum_flux_median, santalo_check,
};
use piston_core::harness::{convergence_experiment, BadSetTrend, EpsSummary, ExperimentConfig};
use piston_core::microsim::{
    resolve_particle_piston, run_trajectory, Particle, Region, RunOptions, SlowState, StopClock,
};
use piston_core::rng::stream_rng;
use piston_core::billiard::uniform_direction;
use piston_core::{CheckRecord, Container, ContainerSpec, FrozenBilliard, MicroState};

/// Criteria that cannot pass as stated; see the decisions ledger.
const DOCUMENTED_FAILURES: &[&str] = &["10"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn build(spec: ContainerSpec) -> Container {
    Container::from_spec(&spec).expect("preset geometry")
}

fn stadium() -> Container {
    build(ContainerSpec::stadium(1.0))
}

fn domed() -> Container {
    build(ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6))
}

fn square() -> FrozenBilliard {
    FrozenBilliard::new(&build(ContainerSpec::rectangle(1.0)), 1, 1.0, 0.5).unwrap()
}

fn cube() -> FrozenBilliard {
    FrozenBilliard::new(&build(ContainerSpec::cuboid(1.0, 1.0)), 1, 1.0, 0.5).unwrap()
}

fn sigma(r: &CheckRecord) -> String {
    format!("{} = {:.6} (target {:.6}, z = {:+.2})", r.check, r.estimate, r.target, r.z)
}

fn find<'a>(rs: &'a [CheckRecord], name: &str) -> &'a CheckRecord {
    rs.iter().find(|r| r.check == name).expect("check present")
}

fn c1_conservation() -> (bool, String) {
    let c = stadium();
    let mut rng = stream_rng(1, 0);
    let mut particles = vec![];
    for (side, e) in [(1u8, 0.6), (2u8, 0.4)] {
        let position = c.table(side, 0.5).unwrap().sample_interior(&mut rng).unwrap();
        particles.push(Particle { side, position, velocity: uniform_direction(2, &mut rng) * (2.0 * e as f64).sqrt() });
    }
    let s = MicroState::new(0.05, 0.5, 0.0, particles).unwrap();
    let region = Region { q_min: 1e-9, q_max: 1.0 - 1e-9, e_min: 1e-9, e_max: 1e9, w_bound: 1e9, energy_floor: 0.0 };
    let clock = StopClock::new(region, 1e6).with_c1(0.0);
    let opts = RunOptions { grid_step: 10.0, halt_on_tilde: false, max_events: Some(100_000), ..Default::default() };
    let t = Instant::now();
    let rec = run_trajectory(&c, &s, &clock, &opts).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = rec.events == 100_000 && rec.energy_drift() <= 1e-9 && rec.max_pair_drift <= 1e-14 && secs < 10.0;
    (pass, format!("{} events, energy drift {:.2e}, pair drift {:.2e}, {secs:.2} s", rec.events, rec.energy_drift(), rec.max_pair_drift))
}

fn c2_collision_matrix() -> (bool, String) {
    let swap = resolve_particle_piston(1, 0.7, -0.3, 1.0).unwrap() == (-0.3, 0.7)
        && resolve_particle_piston(2, -0.4, 0.9, 1.0).unwrap() == (0.9, -0.4);
    let (v, w) = resolve_particle_piston(1, 1.0, 0.0, 0.1).unwrap();
    let (ev, ew) = (-0.99 / 1.01, 0.2 / 1.01);
    let pass = swap && (v - ev).abs() <= 1e-12 && (w - ew).abs() <= 1e-12 && (v + 0.980198).abs() < 1e-6;
    (pass, format!("eps=1 swaps: {swap}; eps=0.1: ({v:.9}, {w:.9})"))
}

fn c3_santalo_2d() -> (bool, String) {
    let t = Instant::now();
    let r = santalo_check(&square(), 1_000_000, 3);
    let secs = t.elapsed().as_secs_f64();
    (r.within_sigma(3.0) && (r.target - PI / 4.0).abs() < 1e-15 && secs < 30.0, format!("{}, {secs:.1} s", sigma(&r)))
}

fn c4_santalo_3d() -> (bool, String) {
    let r = santalo_check(&cube(), 1_000_000, 4);
    (r.within_sigma(3.0) && (r.target - 2.0 / 3.0).abs() < 1e-15, sigma(&r))
}

fn c5_kac() -> (bool, String) {
    let rs = kac_checks(&square(), 1_000_000, 5);
    let (ret, flight) = (find(&rs, "kac_return"), find(&rs, "kac_flight"));
    (ret.within_sigma(3.0) && ret.target == 4.0 && flight.within_sigma(3.0), format!("{}; {}", sigma(ret), sigma(flight)))
}

fn c6_momentum() -> (bool, String) {
    let sq = kac_checks(&square(), 1_000_000, 6);
    let cu = kac_checks(&cube(), 1_000_000, 6);
    let (a, b) = (find(&sq, "momentum"), find(&cu, "momentum"));
    let targets = (a.target - PI / 4.0).abs() < 1e-15 && (b.target - 2.0 / 3.0).abs() < 1e-15;
    (targets && a.within_sigma(3.0) && b.within_sigma(3.0), format!("2D {}; 3D {}", sigma(a), sigma(b)))
}

fn c7_pressure() -> (bool, String) {
    let t = Instant::now();
    let mut pass = true;
    let mut detail = vec![];
    for (name, c) in [("stadium", stadium()), ("domed box", domed())] {
        let b = FrozenBilliard::new(&c, 1, 0.5, 0.6).unwrap();
        let rep = momentum_flux_median(&b, 1e5, 32, 7).unwrap();
        let target = 0.6 * c.piston_measure() / (c.dimension() as f64 * c.subdomain_measure(1, 0.5).unwrap());
        pass &= rep.relative_error < 0.02 && (rep.target - target).abs() < 1e-12 * target;
        detail.push(format!("{name} median {:.6} vs {:.6} ({:.2}%)", rep.median, rep.target, 100.0 * rep.relative_error));
    }
    let secs = t.elapsed().as_secs_f64();
    (pass && secs < 300.0, format!("{}, {secs:.1} s", detail.join("; ")))
}

fn c8_averaged() -> (bool, String) {
    let rect = build(ContainerSpec::rectangle(1.0));
    let h0 = SlowState { q: 0.5, w: 0.0, e1: vec![2.0], e2: vec![1.0] };
    let q_star = Averaged::new(&rect).equilibrium(&h0).unwrap();
    let q_err = (q_star - 2f64.sqrt() / (1.0 + 2f64.sqrt())).abs();
    let mut worst: f64 = 0.0;
    for c in [rect.clone(), stadium(), domed()] {
        let a = Averaged::new(&c);
        let h0 = if c.dimension() == 2 && c.piston_measure() == 1.0 && c.subdomain_measure(1, 0.0).unwrap() == 0.0 {
            h0.clone()
        } else {
            SlowState { q: 0.5, w: 0.0, e1: vec![0.6], e2: vec![0.4] }
        };
        let period = a.period_and_equilibrium(&h0).unwrap().period;
        let path = a.integrate(&h0, 10.0 * period, 1e-3, None).unwrap();
        let d = c.dimension() as f64;
        let inv = |s: &SlowState| {
            (
                s.e1_total() * c.subdomain_measure(1, s.q).unwrap().powf(2.0 / d),
                s.e2_total() * c.subdomain_measure(2, s.q).unwrap().powf(2.0 / d),
            )
        };
        let (i1, i2) = inv(&h0);
        for (s, h) in path.samples.iter().zip(&path.h_eff) {
            let (j1, j2) = inv(&s.state);
            worst = worst.max(((h - path.h_eff[0]) / path.h_eff[0]).abs()).max(((j1 - i1) / i1).abs()).max(((j2 - i2) / i2).abs());
        }
    }
    (worst <= 1e-8 && q_err <= 1e-9, format!("max relative drift over 10 periods {worst:.2e}; Q* = {q_star:.12} (error {q_err:.1e})"))
}

fn summary_line(s: &EpsSummary) -> String {
    let p = s.exceedance[0].theorem_window;
    format!("eps {}: median D {:.4}, P(D>=d) {:.2} [{:.2}, {:.2}]", s.eps, s.median_d, p.estimate, p.lower, p.upper)
}

fn c9_c10() -> ((bool, String), (bool, String), (bool, String)) {
    let config = ExperimentConfig::default_experiment();
    let t = Instant::now();
    let report = convergence_experiment(&config).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let m = report.monotonicity.as_ref().unwrap();
    let c9 = m.median_d_strictly_decreasing && m.exceedance_nonincreasing.iter().all(|e| e.theorem_window) && secs < 1800.0;
    let lines: Vec<String> = report.per_eps.iter().map(summary_line).collect();

    let bad = |per_eps: &[EpsSummary]| {
        let pick: Vec<EpsSummary> = per_eps.iter().filter(|s| s.eps == 0.2 || s.eps == 0.05).cloned().collect();
        let t = BadSetTrend::from_summaries(&pick);
        let pass = t.ratio.is_some_and(|r| (1.0..=8.0).contains(&r)) && t.linear_law_consistent;
        let f: Vec<String> = t.frequency.iter().map(|p| format!("{:.3} [{:.3}, {:.3}]", p.estimate, p.lower, p.upper)).collect();
        (pass, format!("freq at 0.2, 0.05: {}; ratio {:?}; linear law consistent: {}", f.join(", "), t.ratio.map(|r| (r * 100.0).round() / 100.0), t.linear_law_consistent))
    };
    let (p10, d10) = bad(&report.per_eps);

    let mut alt = config.clone();
    alt.c1 = Some((2.0 * alt.region.e_max).sqrt());
    alt.samples = 1000;
    let alt_report = convergence_experiment(&alt).unwrap();
    let (p10b, d10b) = bad(&alt_report.per_eps);
    (
        (c9, format!("{}; {secs:.1} s", lines.join("; "))),
        (p10, format!("C1 = {:.3} (default), N = 100: {d10}", report.c1)),
        (p10b, format!("C1 = sqrt(2 E_max) = {:.3}, N = 1000: {d10b}", alt_report.c1)),
    )
}

fn c11_invariance() -> (bool, String) {
    let mut pass = true;
    let mut detail = vec![];
    for (name, c) in [("stadium", stadium()), ("domed box", domed())] {
        let b = FrozenBilliard::new(&c, 1, 0.5, 0.6).unwrap();
        let ks = invariance_ks(&b, 1_000_000, 11, false);
        let inv = involution_check(&b, 10_000, 11);
        pass &= ks.max() < 0.005 && inv.estimate <= 1e-9;
        detail.push(format!("{name}: K-S {:.4}, involution error {:.1e}", ks.max(), inv.estimate));
    }
    (pass, detail.join("; "))
}

const LIGHT: &str = r#"
seed = 12
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
energy_floor = 0.01
[simulate]
eps = 0.05
[average]
horizon = 5.0
[converge]
eps_grid = [0.2, 0.1]
samples = 20
[billiard]
samples = 20000
flux_horizon = 500.0
flux_orbits = 4
involution_samples = 2000
ks_samples = 20000
diagnostic_samples = 500
"#;

fn c12_determinism() -> (bool, String) {
    let dir = std::env::temp_dir().join(format!("piston-acceptance-{}", std::process::id()));
    let cfg = dir.join("light.toml");
    fs::create_dir_all(&dir).unwrap();
    let geometry = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/geometry/stadium.toml");
    fs::write(&cfg, format!("container = {:?}\n{LIGHT}", geometry.display().to_string())).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    let commands: [(&[&str], &[&str]); 4] = [
        (&["simulate", "--dump-events"], &["trajectory.csv", "events.csv", "simulate.json"]),
        (&["average"], &["averaged.csv", "average.json"]),
        (&["verify-billiard"], &["billiard.json"]),
        (&["converge"], &["converge.json", "converge_samples.csv"]),
    ];
    let mut same = true;
    let mut files = 0;
    for (args, outputs) in commands {
        let mut runs = vec![];
        for k in 0..2 {
            let out = dir.join(format!("run{k}"));
            let mut argv = vec!["piston", "--out", out.to_str().unwrap(), args[0], &cfg];
            argv.extend(&args[1..]);
            run(&Cli::parse_from(argv)).unwrap();
            runs.push(out);
        }
        for f in outputs {
            same &= fs::read(runs[0].join(f)).unwrap() == fs::read(runs[1].join(f)).unwrap();
            files += 1;
        }
    }
    let _ = fs::remove_dir_all(&dir);
    (same, format!("{files} primary outputs from 4 commands compared byte for byte"))
}

fn timed(id: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    Outcome { id, pass, detail, elapsed: t.elapsed() }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply here.
    let mut outcomes = vec![
        timed("1", c1_conservation),
        timed("2", c2_collision_matrix),
        timed("3", c3_santalo_2d),
        timed("4", c4_santalo_3d),
        timed("5", c5_kac),
        timed("6", c6_momentum),
        timed("7", c7_pressure),
        timed("8", c8_averaged),
    ];
    let t = Instant::now();
    let (c9, c10, c10b) = c9_c10();
    let elapsed = t.elapsed();
    for (id, (pass, detail)) in [("9", c9), ("10", c10), ("10*", c10b)] {
        outcomes.push(Outcome { id, pass, detail, elapsed });
    }
    outcomes.push(timed("11", c11_invariance));
    outcomes.push(timed("12", c12_determinism));

    for o in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>3}: {tag}  {}  [{:.1} s]", o.id, o.detail, o.elapsed.as_secs_f64());
    }
    println!("criterion 10* is supplementary: criterion 10 rerun with the smallest near-parallel constant that still guarantees clean collisions.");
    let unexpected: Vec<&str> =
        outcomes.iter().filter(|o| !o.pass && !DOCUMENTED_FAILURES.contains(&o.id) && o.id != "10*").map(|o| o.id).collect();
    let documented: Vec<&str> = outcomes.iter().filter(|o| !o.pass && DOCUMENTED_FAILURES.contains(&o.id)).map(|o| o.id).collect();
    let passed = outcomes.iter().filter(|o| o.pass && o.id != "10*").count();
    println!("acceptance: {passed}/12 criteria pass; documented failures: {documented:?}; unexpected failures: {unexpected:?}");
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
