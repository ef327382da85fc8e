//! Subcommand bodies. Each returns the paths it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use piston_core::averaged::{write_path_csv, Averaged};
use piston_core::billiard::{
    df_norm_diagnostic, involution_check, invariance_ks, kac_checks, momentum_flux_median, santalo_check,
    singularity_neighborhood_measure, DfReport, FluxReport, KsReport, NeighborhoodEstimate,
};
use piston_core::harness::{convergence_experiment, sample_initial, write_samples_csv};
use piston_core::microsim::{
    run_trajectory, write_events_csv, write_trajectory_csv, RunOptions, SlowState, StopClock, StopKind, StopTimes,
};
use piston_core::rng::stream_rng;
use piston_core::{CheckRecord, Container, FrozenBilliard, Oscillation};
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, Default)]
pub struct SimulateFlags {
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub dump_events: bool,
}

fn container(config: &Config) -> Result<Container, CliError> {
    Container::from_spec(&config.geometry).map_err(|e| CliError::Config(format!("geometry: {e}")))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok((path, BufWriter::new(file)))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    let (path, mut out) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(path)
}

fn write_with(
    dir: &Path,
    name: &str,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<PathBuf, CliError> {
    let (path, mut out) = create(dir, name)?;
    f(&mut out)?;
    out.flush()?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    eps: f64,
    seed: u64,
    horizon: f64,
    c1: f64,
    fired: StopKind,
    stops: StopTimes,
    end_tau: f64,
    events: usize,
    wall_collisions: usize,
    piston_collisions: usize,
    clean_collisions: usize,
    endwall_collisions: usize,
    clean_fraction: f64,
    energy_initial: f64,
    energy_final: f64,
    energy_drift: f64,
    max_pair_drift: f64,
    final_state: SlowState,
}

pub fn simulate(config: &Config, flags: &SimulateFlags, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let c = container(config)?;
    let s = &config.simulate;
    let eps = flags.eps.unwrap_or(s.eps);
    let seed = flags.seed.unwrap_or(config.seed);
    let horizon = flags.horizon.unwrap_or(s.horizon);
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(CliError::Config(format!("simulate.eps = {eps} must lie in (0, 1]")));
    }
    if !(horizon > 0.0 && s.grid_step > 0.0) {
        return Err(CliError::Config("simulate.horizon and simulate.grid_step must be positive".into()));
    }
    let region = *config.region()?;
    region.validate()?;
    let initial = config.initial()?;
    let mut clock = StopClock::new(region, horizon);
    if let Some(c1) = s.c1 {
        clock = clock.with_c1(c1);
    }
    let micro = sample_initial(initial, &c, eps, &mut stream_rng(seed, 0))?;
    let options = RunOptions {
        grid_step: s.grid_step,
        record_events: flags.dump_events,
        halt_on_tilde: s.halt_on_tilde,
        max_events: s.max_events,
    };
    let rec = run_trajectory(&c, &micro, &clock, &options).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut paths = vec![write_with(out, "trajectory.csv", |w| write_trajectory_csv(&rec.samples, w))?];
    if flags.dump_events {
        paths.push(write_with(out, "events.csv", |w| write_events_csv(&rec.log, w))?);
    }
    let summary = SimulateSummary {
        eps,
        seed,
        horizon,
        c1: clock.c1,
        fired: rec.fired,
        stops: rec.stops,
        end_tau: rec.end_tau,
        events: rec.events,
        wall_collisions: rec.wall_collisions,
        piston_collisions: rec.piston_collisions,
        clean_collisions: rec.clean_collisions,
        endwall_collisions: rec.endwall_collisions,
        clean_fraction: rec.clean_fraction(),
        energy_initial: rec.energy_initial,
        energy_final: rec.energy_final,
        energy_drift: rec.energy_drift(),
        max_pair_drift: rec.max_pair_drift,
        final_state: rec.final_state.slow(),
    };
    paths.push(write_json(out, "simulate.json", &summary)?);
    Ok(paths)
}

#[derive(Debug, Serialize)]
struct AverageSummary {
    horizon: f64,
    grid_step: f64,
    samples: usize,
    substeps: u32,
    exit: Option<f64>,
    h_eff_initial: f64,
    h_eff_max_drift: f64,
    oscillation: Option<Oscillation>,
    /// Why no oscillation was computed.
    note: Option<String>,
}

pub fn average(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let c = container(config)?;
    let a = &config.average;
    if !(a.horizon > 0.0 && a.grid_step > 0.0) {
        return Err(CliError::Config("average.horizon and average.grid_step must be positive".into()));
    }
    let h0 = config.initial()?;
    if let Some(region) = &config.region {
        region.validate()?;
        if !region.contains_strictly(h0) {
            return Err(CliError::Config("initial state must lie strictly inside [region]".into()));
        }
    }
    let avg = Averaged::new(&c);
    let path = avg
        .integrate(h0, a.horizon, a.grid_step, config.region.as_ref())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let (oscillation, note) = match avg.period_and_equilibrium(h0) {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let h_ref = path.h_eff[0];
    let summary = AverageSummary {
        horizon: a.horizon,
        grid_step: a.grid_step,
        samples: path.samples.len(),
        substeps: path.substeps,
        exit: path.exit,
        h_eff_initial: h_ref,
        h_eff_max_drift: path.h_eff.iter().map(|h| (h - h_ref).abs() / h_ref.abs()).fold(0.0, f64::max),
        oscillation,
        note,
    };
    Ok(vec![
        write_with(out, "averaged.csv", |w| write_path_csv(&path, w))?,
        write_json(out, "average.json", &summary)?,
    ])
}

#[derive(Debug, Serialize)]
struct BilliardTable {
    dimension: usize,
    side: u8,
    q: f64,
    energy: f64,
    santalo_target: f64,
    momentum_factor: f64,
    pressure_target: f64,
    piston_fraction: f64,
}

#[derive(Debug, Serialize)]
struct BilliardReport {
    table: BilliardTable,
    checks: Vec<CheckRecord>,
    momentum_flux: FluxReport,
    invariance_map: KsReport,
    invariance_induced: KsReport,
    derivative: DfReport,
    singular_neighborhoods: Vec<NeighborhoodEstimate>,
}

pub fn verify_billiard(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let c = container(config)?;
    let s = &config.billiard;
    let q = s.q.or(config.initial.as_ref().map(|h| h.q)).unwrap_or(0.5);
    if s.side != 1 && s.side != 2 {
        return Err(CliError::Config(format!("billiard.side = {} must be 1 or 2", s.side)));
    }
    if !(s.energy > 0.0) || s.samples < 2 || s.flux_orbits == 0 || !(s.flux_horizon > 0.0) {
        return Err(CliError::Config("billiard: energy, samples, flux_orbits and flux_horizon must be positive".into()));
    }
    let b = FrozenBilliard::new(&c, s.side, q, s.energy).map_err(|e| CliError::Config(format!("billiard: {e}")))?;
    let seed = config.seed;
    let mut checks = vec![santalo_check(&b, s.samples, seed)];
    checks.extend(kac_checks(&b, s.samples, seed));
    checks.push(involution_check(&b, s.involution_samples, seed));
    let momentum_flux =
        momentum_flux_median(&b, s.flux_horizon, s.flux_orbits, seed).map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = BilliardReport {
        table: BilliardTable {
            dimension: b.dimension(),
            side: s.side,
            q,
            energy: s.energy,
            santalo_target: b.santalo_target(),
            momentum_factor: b.momentum_factor(),
            pressure_target: b.pressure_target(),
            piston_fraction: b.piston_fraction(),
        },
        checks,
        momentum_flux,
        invariance_map: invariance_ks(&b, s.ks_samples, seed, false),
        invariance_induced: invariance_ks(&b, s.ks_samples, seed, true),
        derivative: df_norm_diagnostic(&b, s.diagnostic_samples, seed),
        singular_neighborhoods: s
            .gammas
            .iter()
            .map(|&g| singularity_neighborhood_measure(&b, g, s.samples, seed))
            .collect(),
    };
    Ok(vec![write_json(out, "billiard.json", &report)?])
}

pub fn converge(config: &Config, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let experiment = config.experiment()?;
    let report = convergence_experiment(&experiment)?;
    Ok(vec![
        write_json(out, "converge.json", &report)?,
        write_with(out, "converge_samples.csv", |w| write_samples_csv(&report.samples, w))?,
    ])
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}
