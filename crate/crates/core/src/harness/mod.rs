//! Paired micro/averaged runs and the convergence experiment across an
//! `ε` grid.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaged::{Averaged, AveragedPath};
use crate::billiard::uniform_direction;
use crate::error::{ConfigError, DynamicsError, GeometryError, HarnessError};
use crate::geometry::{Container, ContainerSpec};
use crate::microsim::{
    run_trajectory, MicroState, Particle, Region, RunOptions, SlowState, StopClock, StopKind, StopTimes,
};
use crate::rng::{stream_rng, SimRng};
use crate::stats::{median, wilson, Proportion};

/// Largest tolerated fraction of SINGULAR samples per `ε`.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.2;
/// Normal quantile for the reported 95% intervals.
pub const Z95: f64 = 1.959964;

fn default_grid_step() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub container: ContainerSpec,
    /// `h(0)`; the particle counts `n₁, n₂` are the lengths of `e1`, `e2`.
    pub initial: SlowState,
    pub region: Region,
    /// Horizon `T` in slow time.
    pub horizon: f64,
    /// Thresholds `δ` for the weighted deviation.
    pub deltas: Vec<f64>,
    /// Strictly decreasing.
    pub eps_grid: Vec<f64>,
    /// Samples per `ε`.
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Near-parallel constant; `5√(2E_max)` when absent.
    #[serde(default)]
    pub c1: Option<f64>,
}

impl ExperimentConfig {
    /// Stadium, one particle per side, piston at rest in the middle.
    pub fn default_experiment() -> Self {
        ExperimentConfig {
            container: ContainerSpec::stadium(1.0),
            initial: SlowState { q: 0.5, w: 0.0, e1: vec![0.6], e2: vec![0.4] },
            region: Region { q_min: 0.1, q_max: 0.9, e_min: 0.5, e_max: 1.5, w_bound: 1.5, energy_floor: 0.01 },
            horizon: 1.0,
            deltas: vec![0.1],
            eps_grid: vec![0.2, 0.1, 0.05],
            samples: 100,
            seed: 20240901,
            grid_step: 1e-3,
            c1: None,
        }
    }

    /// Checks every invariant and builds the container.
    pub fn validate(&self) -> Result<Container, ConfigError> {
        let container = Container::from_spec(&self.container)?;
        self.region.validate()?;
        let h = &self.initial;
        if h.e1.is_empty() || h.e2.is_empty() {
            return Err(ConfigError::invalid("initial", "each side needs at least one particle"));
        }
        if h.e1.iter().chain(&h.e2).any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(ConfigError::invalid("initial", "particle energies must be positive"));
        }
        if !self.region.contains_strictly(h) {
            return Err(ConfigError::invalid("initial", "h(0) must lie strictly inside the region"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", "must be positive"));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= self.horizon) {
            return Err(ConfigError::invalid("grid_step", "must lie in (0, horizon]"));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(ConfigError::invalid("deltas", "need at least one positive threshold"));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(ConfigError::invalid("eps_grid", "values must lie in (0, 1]"));
        }
        if self.eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::invalid("eps_grid", "must be strictly decreasing"));
        }
        if self.samples < 10 {
            return Err(ConfigError::invalid("samples", "need at least 10 samples per eps"));
        }
        if self.c1.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(ConfigError::invalid("c1", "must be positive"));
        }
        Ok(container)
    }

    pub fn clock(&self) -> StopClock {
        let clock = StopClock::new(self.region, self.horizon);
        match self.c1 {
            Some(c) => clock.with_c1(c),
            None => clock,
        }
    }
}

/// Micro state with slow variables exactly `h0`: positions uniform in each
/// subdomain, directions uniform, speeds `√(2E_{i,j})`.
pub fn sample_initial(
    h0: &SlowState,
    container: &Container,
    eps: f64,
    rng: &mut SimRng,
) -> Result<MicroState, HarnessError> {
    let dim = container.dimension();
    let mut particles = Vec::with_capacity(h0.e1.len() + h0.e2.len());
    for (side, energies) in [(1u8, &h0.e1), (2u8, &h0.e2)] {
        let table = container.table(side, h0.q).map_err(ConfigError::from)?;
        for &e in energies {
            let position = loop {
                let p = table.sample_interior(rng).map_err(ConfigError::from)?;
                // The face itself has zero measure, but the simulator wants a strict side.
                if container.contains(side, h0.q, p) {
                    break p;
                }
            };
            let velocity = uniform_direction(dim, rng) * (2.0 * e).sqrt();
            particles.push(Particle { side, position, velocity });
        }
    }
    Ok(MicroState::new(eps, h0.q, h0.w, particles)?)
}

/// Weighted max-norm distance between slow states, energies sorted per side.
pub fn weighted_distance(a: &SlowState, b: &SlowState, region: &Region) -> f64 {
    let (a, b) = (a.sorted(), b.sorted());
    let mut d = ((a.q - b.q) / (region.q_max - region.q_min)).abs();
    d = d.max(((a.w - b.w) / region.w_bound).abs());
    for (x, y) in a.e1.iter().zip(&b.e1).chain(a.e2.iter().zip(&b.e2)) {
        d = d.max(((x - y) / region.e_max).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub eps: f64,
    pub seed: u64,
    /// Reason for exclusion, if the trajectory hit a singular configuration.
    pub singular: Option<String>,
    /// Sup deviation over `[0, T ∧ T_ε]`.
    pub d: Option<f64>,
    /// Sup deviation over `[0, T̃_ε]`.
    pub d_tilde: Option<f64>,
    pub stop_kind: StopKind,
    /// `T̃_ε`.
    pub stop_tau: Option<f64>,
    /// `T_ε` from either path.
    pub t_eps: Option<f64>,
    /// `T̃_ε < T ∧ T_ε`.
    pub bad: bool,
    pub collisions: usize,
    pub piston_collisions: usize,
    pub clean_fraction: f64,
}

impl SampleResult {
    fn excluded(eps: f64, seed: u64, reason: String) -> Self {
        SampleResult {
            eps,
            seed,
            singular: Some(reason),
            d: None,
            d_tilde: None,
            stop_kind: StopKind::Horizon,
            stop_tau: None,
            t_eps: None,
            bad: false,
            collisions: 0,
            piston_collisions: 0,
            clean_fraction: f64::NAN,
        }
    }
}

/// Averaged solution for the experiment, halted on leaving the region.
pub fn averaged_reference(config: &ExperimentConfig, container: &Container) -> Result<AveragedPath, HarnessError> {
    Ok(Averaged::new(container).integrate(
        &config.initial,
        config.horizon,
        config.grid_step,
        Some(&config.region),
    )?)
}

/// One coupled sample: micro trajectory from the fiber over `h(0)` against
/// the averaged path on the same grid.
pub fn run_pair(
    config: &ExperimentConfig,
    container: &Container,
    averaged: &AveragedPath,
    eps: f64,
    seed: u64,
) -> Result<SampleResult, HarnessError> {
    let mut rng = stream_rng(seed, 0);
    let micro = sample_initial(&config.initial, container, eps, &mut rng)?;
    let options = RunOptions { grid_step: config.grid_step, record_events: false, halt_on_tilde: false, max_events: None };
    let rec = match run_trajectory(container, &micro, &config.clock(), &options) {
        Ok(r) => r,
        Err(DynamicsError::Singular { reason, .. }) => return Ok(SampleResult::excluded(eps, seed, reason)),
        Err(DynamicsError::Geometry(GeometryError::NoIntersection { .. })) => {
            return Ok(SampleResult::excluded(eps, seed, "ray escaped through a seam".into()))
        }
        Err(e) => return Err(e.into()),
    };

    let horizon = config.horizon;
    let t_eps = match (rec.stops.exit, averaged.exit) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    let stops = StopTimes { exit: t_eps, ..rec.stops };
    let window = stops.exit_or(horizon);
    let tilde = stops.tilde(horizon);

    let tol = 1e-9 * config.grid_step;
    let mut d = 0.0f64;
    let mut d_tilde = 0.0f64;
    for (m, a) in rec.samples.iter().zip(&averaged.samples) {
        if m.tau > window + tol {
            break;
        }
        let dist = weighted_distance(&m.state, &a.state, &config.region);
        d = d.max(dist);
        if m.tau <= tilde + tol {
            d_tilde = d_tilde.max(dist);
        }
    }
    Ok(SampleResult {
        eps,
        seed,
        singular: None,
        d: Some(d),
        d_tilde: Some(d_tilde),
        stop_kind: stops.first(horizon),
        stop_tau: Some(tilde),
        t_eps,
        bad: tilde < window,
        collisions: rec.events,
        piston_collisions: rec.piston_collisions,
        clean_fraction: rec.clean_fraction(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exceedance {
    pub delta: f64,
    /// `P̂(D ≥ δ)`.
    pub theorem_window: Proportion,
    /// `P̂(D̃ ≥ δ)` with `D̃` taken up to `T̃_ε`.
    pub tilde_window: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSummary {
    pub eps: f64,
    pub samples: usize,
    pub excluded: usize,
    pub median_d: f64,
    pub median_d_tilde: f64,
    pub exceedance: Vec<Exceedance>,
    /// `P̂{T̃_ε < T ∧ T_ε}`.
    pub bad_set: Proportion,
    pub mean_collisions: f64,
    pub mean_clean_fraction: f64,
    pub stops: StopCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StopCounts {
    pub horizon: usize,
    pub exit: usize,
    pub prime: usize,
    pub double_prime: usize,
}

impl EpsSummary {
    pub fn from_samples(eps: f64, deltas: &[f64], results: &[SampleResult]) -> Self {
        let kept: Vec<&SampleResult> = results.iter().filter(|r| r.singular.is_none()).collect();
        let ds: Vec<f64> = kept.iter().filter_map(|r| r.d).collect();
        let dts: Vec<f64> = kept.iter().filter_map(|r| r.d_tilde).collect();
        let n = kept.len();
        let exceedance = deltas
            .iter()
            .map(|&delta| Exceedance {
                delta,
                theorem_window: wilson(ds.iter().filter(|&&d| d >= delta).count(), n, Z95),
                tilde_window: wilson(dts.iter().filter(|&&d| d >= delta).count(), n, Z95),
            })
            .collect();
        let mut stops = StopCounts::default();
        for r in &kept {
            match r.stop_kind {
                StopKind::Horizon => stops.horizon += 1,
                StopKind::Exit => stops.exit += 1,
                StopKind::Prime => stops.prime += 1,
                StopKind::DoublePrime => stops.double_prime += 1,
            }
        }
        let mean = |f: &dyn Fn(&SampleResult) -> f64| {
            if n == 0 { f64::NAN } else { kept.iter().map(|r| f(r)).sum::<f64>() / n as f64 }
        };
        EpsSummary {
            eps,
            samples: results.len(),
            excluded: results.len() - n,
            median_d: if n == 0 { f64::NAN } else { median(&ds) },
            median_d_tilde: if n == 0 { f64::NAN } else { median(&dts) },
            exceedance,
            bad_set: wilson(kept.iter().filter(|r| r.bad).count(), n, Z95),
            mean_collisions: mean(&|r| r.collisions as f64),
            mean_clean_fraction: mean(&|r| r.clean_fraction),
            stops,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceTrend {
    pub delta: f64,
    /// Along the decreasing `ε` grid, each estimate is at most the previous
    /// one or its interval overlaps the previous interval.
    pub theorem_window: bool,
    pub tilde_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monotonicity {
    pub median_d_strictly_decreasing: bool,
    pub median_d_tilde_strictly_decreasing: bool,
    pub exceedance_nonincreasing: Vec<ExceedanceTrend>,
}

impl Monotonicity {
    pub fn assess(per_eps: &[EpsSummary]) -> Option<Self> {
        if per_eps.len() < 2 {
            return None;
        }
        let decreasing = |f: fn(&EpsSummary) -> f64| per_eps.windows(2).all(|w| f(&w[1]) < f(&w[0]));
        let nonincreasing = |get: &dyn Fn(&EpsSummary) -> Proportion| {
            per_eps.windows(2).all(|w| {
                let (big, small) = (get(&w[0]), get(&w[1]));
                small.estimate <= big.estimate || small.lower <= big.upper
            })
        };
        let exceedance_nonincreasing = per_eps[0]
            .exceedance
            .iter()
            .enumerate()
            .map(|(i, e)| ExceedanceTrend {
                delta: e.delta,
                theorem_window: nonincreasing(&|s| s.exceedance[i].theorem_window),
                tilde_window: nonincreasing(&|s| s.exceedance[i].tilde_window),
            })
            .collect();
        Some(Monotonicity {
            median_d_strictly_decreasing: decreasing(|s| s.median_d),
            median_d_tilde_strictly_decreasing: decreasing(|s| s.median_d_tilde),
            exceedance_nonincreasing,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BadSetTrend {
    pub eps: Vec<f64>,
    pub frequency: Vec<Proportion>,
    /// Least-squares slope of frequency against `ε`.
    pub slope: Option<f64>,
    /// Frequency at the largest `ε` over frequency at the smallest.
    pub ratio: Option<f64>,
    pub ratio_interval: Option<(f64, f64)>,
    /// Some `c` has `c·ε` inside every interval.
    pub linear_law_consistent: bool,
}

impl BadSetTrend {
    pub fn from_summaries(per_eps: &[EpsSummary]) -> Self {
        let eps: Vec<f64> = per_eps.iter().map(|s| s.eps).collect();
        let frequency: Vec<Proportion> = per_eps.iter().map(|s| s.bad_set).collect();
        let slope = (eps.len() >= 2).then(|| {
            let n = eps.len() as f64;
            let mx = eps.iter().sum::<f64>() / n;
            let my = frequency.iter().map(|p| p.estimate).sum::<f64>() / n;
            let sxy: f64 = eps.iter().zip(&frequency).map(|(x, p)| (x - mx) * (p.estimate - my)).sum();
            let sxx: f64 = eps.iter().map(|x| (x - mx).powi(2)).sum();
            sxy / sxx
        });
        let (first, last) = (frequency.first(), frequency.last());
        let (ratio, ratio_interval) = match (first, last) {
            (Some(big), Some(small)) if eps.len() >= 2 => (
                (small.estimate > 0.0).then(|| big.estimate / small.estimate),
                Some((
                    big.lower / small.upper,
                    if small.lower > 0.0 { big.upper / small.lower } else { f64::INFINITY },
                )),
            ),
            _ => (None, None),
        };
        let lo = eps.iter().zip(&frequency).map(|(e, p)| p.lower / e).fold(0.0, f64::max);
        let hi = eps.iter().zip(&frequency).map(|(e, p)| p.upper / e).fold(f64::INFINITY, f64::min);
        BadSetTrend { eps, frequency, slope, ratio, ratio_interval, linear_law_consistent: lo <= hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub horizon: f64,
    /// `T_ε` is only checked on this grid.
    pub grid_step: f64,
    pub c1: f64,
    pub averaged_exit: Option<f64>,
    pub per_eps: Vec<EpsSummary>,
    pub monotonicity: Option<Monotonicity>,
    pub bad_set: BadSetTrend,
    #[serde(skip)]
    pub samples: Vec<SampleResult>,
}

/// All samples at one `ε`, in index order; seeds are `base ^ index`.
pub fn run_eps(
    config: &ExperimentConfig,
    container: &Container,
    averaged: &AveragedPath,
    eps: f64,
) -> Result<Vec<SampleResult>, HarnessError> {
    let results = (0..config.samples)
        .into_par_iter()
        .map(|i| run_pair(config, container, averaged, eps, config.seed ^ i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    check_exclusions(eps, &results)?;
    Ok(results)
}

/// Fails when more than [`MAX_EXCLUDED_FRACTION`] of the samples are SINGULAR.
pub fn check_exclusions(eps: f64, results: &[SampleResult]) -> Result<(), HarnessError> {
    let excluded = results.iter().filter(|r| r.singular.is_some()).count();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * results.len() as f64 {
        return Err(HarnessError::ExclusionThreshold { eps, excluded, total: results.len() });
    }
    Ok(())
}

pub fn convergence_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    let container = config.validate()?;
    let averaged = averaged_reference(config, &container)?;
    let mut per_eps = Vec::with_capacity(config.eps_grid.len());
    let mut samples = Vec::with_capacity(config.eps_grid.len() * config.samples);
    for &eps in &config.eps_grid {
        let results = run_eps(config, &container, &averaged, eps)?;
        per_eps.push(EpsSummary::from_samples(eps, &config.deltas, &results));
        samples.extend(results);
    }
    Ok(ConvergenceReport {
        horizon: config.horizon,
        grid_step: config.grid_step,
        c1: config.clock().c1,
        averaged_exit: averaged.exit,
        monotonicity: Monotonicity::assess(&per_eps),
        bad_set: BadSetTrend::from_summaries(&per_eps),
        per_eps,
        samples,
    })
}

pub fn bad_set_frequency(config: &ExperimentConfig) -> Result<BadSetTrend, HarnessError> {
    Ok(convergence_experiment(config)?.bad_set)
}

/// Per-sample rows: `eps,seed,D,D_tilde,stop_kind,stop_tau,collisions,clean_fraction,bad,singular`.
pub fn write_samples_csv<W: Write>(samples: &[SampleResult], mut out: W) -> io::Result<()> {
    writeln!(out, "eps,seed,D,D_tilde,stop_kind,stop_tau,collisions,clean_fraction,bad,singular")?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.eps,
            s.seed,
            opt(s.d),
            opt(s.d_tilde),
            s.stop_kind.as_str(),
            opt(s.stop_tau),
            s.collisions,
            if s.clean_fraction.is_nan() { String::new() } else { s.clean_fraction.to_string() },
            s.bad,
            s.singular.is_some(),
        )?;
    }
    Ok(())
}
