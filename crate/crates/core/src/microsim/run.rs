use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{
    near_parallel_entry, CollisionEvent, EventKind, MicroState, Pending, Simulator, SlowState,
    StopClock, StopKind, StopTimes,
};
use crate::error::DynamicsError;
use crate::geometry::Container;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Slow-time spacing of the recorded grid.
    pub grid_step: f64,
    /// Keep every collision in the record.
    pub record_events: bool,
    /// Stop at `T̃` instead of running on to `T ∧ T_ε`.
    pub halt_on_tilde: bool,
    pub max_events: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { grid_step: 1e-3, record_events: false, halt_on_tilde: true, max_events: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowSample {
    pub tau: f64,
    pub state: SlowState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub eps: f64,
    pub samples: Vec<SlowSample>,
    pub stops: StopTimes,
    /// The stopping condition that fired first (`Horizon` if none did).
    pub fired: StopKind,
    /// Slow time at which the simulation ended.
    pub end_tau: f64,
    pub events: usize,
    pub wall_collisions: usize,
    pub piston_collisions: usize,
    pub clean_collisions: usize,
    pub endwall_collisions: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
    /// Largest relative change of `v⊥² + W²` over a piston collision.
    pub max_pair_drift: f64,
    #[serde(skip)]
    pub log: Vec<CollisionEvent>,
    #[serde(skip)]
    pub final_state: MicroState,
}

impl TrajectoryRecord {
    pub fn energy_drift(&self) -> f64 {
        (self.energy_final - self.energy_initial).abs() / self.energy_initial
    }

    pub fn clean_fraction(&self) -> f64 {
        if self.piston_collisions == 0 {
            1.0
        } else {
            self.clean_collisions as f64 / self.piston_collisions as f64
        }
    }
}

/// Runs the finite-mass dynamics from `initial` to slow time `T` or until a
/// stopping condition ends the run, sampling the slow variables on a
/// uniform slow-time grid.
pub fn run_trajectory(
    container: &Container,
    initial: &MicroState,
    clock: &StopClock,
    options: &RunOptions,
) -> Result<TrajectoryRecord, DynamicsError> {
    if !(options.grid_step > 0.0) || !(clock.horizon >= 0.0) {
        return Err(DynamicsError::InvalidState("grid step and horizon must be positive".into()));
    }
    let eps = initial.eps;
    let mut sim = Simulator::new(container, initial.clone())?.with_energy_bound(clock.region.e_max);
    let t0 = initial.time;
    let t_end = t0 + clock.horizon / eps;
    let n_grid = (clock.horizon / options.grid_step + 1e-9).floor() as usize;
    let grid_time = |k: usize| t0 + (k as f64 * options.grid_step).min(clock.horizon) / eps;

    let mut rec = TrajectoryRecord {
        eps,
        samples: Vec::with_capacity((n_grid + 1).min(1 << 16)),
        stops: StopTimes::default(),
        fired: StopKind::Horizon,
        end_tau: clock.horizon,
        events: 0,
        wall_collisions: 0,
        piston_collisions: 0,
        clean_collisions: 0,
        endwall_collisions: 0,
        energy_initial: initial.total_energy(),
        energy_final: f64::NAN,
        max_pair_drift: 0.0,
        log: Vec::new(),
        final_state: initial.clone(),
    };
    let mut k = 0usize;

    loop {
        let next = sim.next_event()?;
        let now = sim.state().time;
        let mut until = next.time.min(t_end);
        let span = until - now;

        // Near-parallel entries inside the coming free flight.
        let state = sim.state();
        for p in &state.particles {
            let slot = if p.side == 1 { &mut rec.stops.prime } else { &mut rec.stops.double_prime };
            if slot.is_none() {
                if let Some(s) = near_parallel_entry(p, state.q, state.v, clock, eps, span) {
                    *slot = Some(eps * (now + s - t0));
                }
            }
        }
        let tilde_fast = t0 + rec.stops.tilde(clock.horizon) / eps;
        if options.halt_on_tilde && tilde_fast <= until {
            until = tilde_fast;
        }

        // Grid samples in [now, until].
        while k <= n_grid && grid_time(k) <= until {
            let t = grid_time(k);
            let mut h = sim.state().slow();
            h.q = sim.state().q + sim.state().v * (t - now);
            let tau = eps * (t - t0);
            let inside = clock.region.contains(&h);
            rec.samples.push(SlowSample { tau, state: h });
            k += 1;
            if !inside {
                rec.stops.exit = Some(tau);
                until = t;
                break;
            }
        }

        let stop_now = rec.stops.exit.is_some()
            || (options.halt_on_tilde && tilde_fast <= until)
            || next.time > t_end
            || matches!(next.pending, Pending::Never);
        if stop_now {
            sim.advance_to(until);
            break;
        }

        let pre_w = sim.state().w();
        let ev = sim.resolve(next)?;
        rec.events += 1;
        match ev.kind {
            EventKind::ParticleWall => rec.wall_collisions += 1,
            EventKind::PistonEndwall => rec.endwall_collisions += 1,
            EventKind::ParticlePiston => {
                rec.piston_collisions += 1;
                if ev.clean == Some(true) {
                    rec.clean_collisions += 1;
                }
                let before = ev.v_perp_pre.powi(2) + pre_w.powi(2);
                let after = ev.v_perp_post.powi(2) + (ev.v / eps).powi(2);
                rec.max_pair_drift = rec.max_pair_drift.max((after - before).abs() / before);
            }
        }
        if options.record_events {
            rec.log.push(ev);
        }
        if options.max_events.is_some_and(|m| rec.events >= m) {
            break;
        }
    }

    let state = sim.into_state();
    rec.end_tau = eps * (state.time - t0);
    rec.fired = rec.stops.first(clock.horizon);
    rec.energy_final = state.total_energy();
    rec.final_state = state;
    Ok(rec)
}

/// Event log as CSV: `t,kind,side,j,Q,V,v_perp_pre,v_perp_post,clean`.
pub fn write_events_csv<W: Write>(events: &[CollisionEvent], mut out: W) -> io::Result<()> {
    writeln!(out, "t,kind,side,j,Q,V,v_perp_pre,v_perp_post,clean")?;
    for e in events {
        let opt = |x: Option<String>| x.unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.time,
            e.kind.as_str(),
            opt(e.side.map(|s| s.to_string())),
            opt(e.particle.map(|j| j.to_string())),
            e.q,
            e.v,
            e.v_perp_pre,
            e.v_perp_post,
            opt(e.clean.map(|c| c.to_string())),
        )?;
    }
    Ok(())
}

/// Grid samples as CSV: `tau,Q,W,E1_1..,E2_1..`.
pub fn write_trajectory_csv<W: Write>(samples: &[SlowSample], mut out: W) -> io::Result<()> {
    let (n1, n2) = samples.first().map_or((0, 0), |s| (s.state.e1.len(), s.state.e2.len()));
    let mut header = vec!["tau".to_string(), "Q".into(), "W".into()];
    header.extend((1..=n1).map(|j| format!("E1_{j}")));
    header.extend((1..=n2).map(|j| format!("E2_{j}")));
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let mut row = vec![s.tau.to_string(), s.state.q.to_string(), s.state.w.to_string()];
        row.extend(s.state.e1.iter().chain(&s.state.e2).map(|e| e.to_string()));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
