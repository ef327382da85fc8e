//! Exact event-driven dynamics of the piston and the gas particles at finite
//! mass `M = ε⁻²`.

mod run;
mod scheduler;

pub use run::{
    run_trajectory, write_events_csv, write_trajectory_csv, RunOptions, SlowSample, TrajectoryRecord,
};
pub use scheduler::{next_event, Pending, Scheduled, Simulator, TIE_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DynamicsError};
use crate::vector::Vec3;

/// One gas particle (unit mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub side: u8,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl Particle {
    pub fn energy(&self) -> f64 {
        0.5 * self.velocity.norm_sq()
    }
}

/// Full phase point: piston position and velocity plus every particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroState {
    /// Fast time.
    pub time: f64,
    pub q: f64,
    /// Piston velocity `V = εW`.
    pub v: f64,
    pub eps: f64,
    pub particles: Vec<Particle>,
}

impl MicroState {
    pub fn new(eps: f64, q: f64, w: f64, particles: Vec<Particle>) -> Result<Self, DynamicsError> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(DynamicsError::InvalidState(format!("eps = {eps} must lie in (0, 1]")));
        }
        if !(0.0..=1.0).contains(&q) {
            return Err(DynamicsError::InvalidState(format!("piston position {q} outside [0, 1]")));
        }
        if let Some(p) = particles.iter().find(|p| p.side != 1 && p.side != 2) {
            return Err(DynamicsError::InvalidState(format!("particle side {}", p.side)));
        }
        Ok(MicroState { time: 0.0, q, v: eps * w, eps, particles })
    }

    pub fn w(&self) -> f64 {
        self.v / self.eps
    }

    pub fn mass(&self) -> f64 {
        1.0 / (self.eps * self.eps)
    }

    /// `(M/2)V² + Σ|v|²/2 = W²/2 + Σ E`.
    pub fn total_energy(&self) -> f64 {
        let w = self.w();
        0.5 * w * w + self.particles.iter().map(Particle::energy).sum::<f64>()
    }

    pub fn slow(&self) -> SlowState {
        let energies = |side| {
            self.particles.iter().filter(|p| p.side == side).map(Particle::energy).collect()
        };
        SlowState { q: self.q, w: self.w(), e1: energies(1), e2: energies(2) }
    }

    /// Free flight of every body for `dt`; no collision may occur inside.
    pub fn advance(&self, dt: f64) -> MicroState {
        let mut s = self.clone();
        s.advance_mut(dt);
        s
    }

    pub fn advance_mut(&mut self, dt: f64) {
        if dt == 0.0 {
            return;
        }
        self.time += dt;
        self.q += self.v * dt;
        for p in &mut self.particles {
            p.position += p.velocity * dt;
        }
    }

    /// The time-reversed state: all velocities negated.
    pub fn reversed(&self) -> MicroState {
        let mut s = self.clone();
        s.v = -s.v;
        for p in &mut s.particles {
            p.velocity = -p.velocity;
        }
        s
    }
}

/// Slow variables `h = (Q, W, E_{1,j}, E_{2,j})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowState {
    pub q: f64,
    pub w: f64,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
}

impl SlowState {
    pub fn e1_total(&self) -> f64 {
        self.e1.iter().sum()
    }

    pub fn e2_total(&self) -> f64 {
        self.e2.iter().sum()
    }

    pub fn total_energy(&self) -> f64 {
        0.5 * self.w * self.w + self.e1_total() + self.e2_total()
    }

    /// Copy with each side's energies in increasing order.
    pub fn sorted(&self) -> SlowState {
        let mut s = self.clone();
        s.e1.sort_by(f64::total_cmp);
        s.e2.sort_by(f64::total_cmp);
        s
    }
}

/// The compact region `𝒱` of admissible slow states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub q_min: f64,
    pub q_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub w_bound: f64,
    /// Lower bound on every particle energy.
    #[serde(default)]
    pub energy_floor: f64,
}

impl Region {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0 < self.q_min && self.q_min < self.q_max && self.q_max < 1.0) {
            return Err(ConfigError::invalid("region", "need 0 < q_min < q_max < 1"));
        }
        if !(0.0 < self.e_min && self.e_min < self.e_max && self.e_max.is_finite()) {
            return Err(ConfigError::invalid("region", "need 0 < e_min < e_max < inf"));
        }
        if !(self.w_bound > 0.0 && self.w_bound.is_finite()) {
            return Err(ConfigError::invalid("region", "w_bound must be positive"));
        }
        if !(self.energy_floor >= 0.0) {
            return Err(ConfigError::invalid("region", "energy_floor must be non-negative"));
        }
        Ok(())
    }

    pub fn contains(&self, h: &SlowState) -> bool {
        let e = h.total_energy();
        (self.q_min..=self.q_max).contains(&h.q)
            && h.w.abs() <= self.w_bound
            && (self.e_min..=self.e_max).contains(&e)
            && h.e1.iter().chain(&h.e2).all(|&x| x >= self.energy_floor)
    }

    /// Strict interior membership, used to validate initial data.
    pub fn contains_strictly(&self, h: &SlowState) -> bool {
        let e = h.total_energy();
        self.q_min < h.q
            && h.q < self.q_max
            && h.w.abs() < self.w_bound
            && self.e_min < e
            && e < self.e_max
            && h.e1.iter().chain(&h.e2).all(|&x| x > self.energy_floor)
    }
}

/// Stopping configuration: region, near-parallel threshold constant `C₁`
/// and horizon `T` (slow time).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopClock {
    pub region: Region,
    pub c1: f64,
    pub horizon: f64,
}

impl StopClock {
    /// Uses `C₁ = 5√(2E_max)`.
    pub fn new(region: Region, horizon: f64) -> Self {
        StopClock { region, c1: 5.0 * (2.0 * region.e_max).sqrt(), horizon }
    }

    pub fn with_c1(mut self, c1: f64) -> Self {
        self.c1 = c1;
        self
    }
}

/// Which stopping condition ended (or first fired on) a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    Horizon,
    /// Slow state left the region (`T_ε`).
    Exit,
    /// Side-1 particle nearly parallel to the piston in the tube (`T′_ε`).
    Prime,
    /// Side-2 mirror condition (`T″_ε`).
    DoublePrime,
}

impl StopKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StopKind::Horizon => "horizon",
            StopKind::Exit => "exit",
            StopKind::Prime => "prime",
            StopKind::DoublePrime => "double_prime",
        }
    }
}

/// Recorded stopping times in slow time; `None` if the condition never fired.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StopTimes {
    pub exit: Option<f64>,
    pub prime: Option<f64>,
    pub double_prime: Option<f64>,
}

impl StopTimes {
    /// `T̃ = min(T, T_ε, T′, T″)`.
    pub fn tilde(&self, horizon: f64) -> f64 {
        [self.exit, self.prime, self.double_prime].into_iter().flatten().fold(horizon, f64::min)
    }

    /// `T ∧ T_ε`.
    pub fn exit_or(&self, horizon: f64) -> f64 {
        self.exit.map_or(horizon, |t| t.min(horizon))
    }

    /// First condition to fire, if any fired before the horizon.
    pub fn first(&self, horizon: f64) -> StopKind {
        let mut best = (horizon, StopKind::Horizon);
        for (t, k) in [
            (self.exit, StopKind::Exit),
            (self.prime, StopKind::Prime),
            (self.double_prime, StopKind::DoublePrime),
        ] {
            if let Some(t) = t {
                if t < best.0 {
                    best = (t, k);
                }
            }
        }
        best.1
    }
}

/// Which stopping conditions hold at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StopSignal {
    pub exit: bool,
    pub prime: bool,
    pub double_prime: bool,
}

/// Evaluates the stopping conditions at the current instant of `state`.
pub fn detect_stop(state: &MicroState, clock: &StopClock) -> StopSignal {
    let mut signal = StopSignal { exit: !clock.region.contains(&state.slow()), ..Default::default() };
    for p in &state.particles {
        if near_parallel_entry(p, state.q, state.v, clock, state.eps, 0.0).is_some() {
            match p.side {
                1 => signal.prime = true,
                _ => signal.double_prime = true,
            }
        }
    }
    signal
}

/// Earliest `s ∈ [0, span]` at which particle `p` (free flight) is in the
/// near-parallel configuration: inside the tube between `Q_min` (or `Q_max`)
/// and the piston, with `|v⊥| ≤ C₁ε`.
pub(crate) fn near_parallel_entry(
    p: &Particle,
    q: f64,
    v: f64,
    clock: &StopClock,
    eps: f64,
    span: f64,
) -> Option<f64> {
    let vx = p.velocity.x;
    if vx.abs() > clock.c1 * eps {
        return None;
    }
    let x = p.position.x;
    let r = &clock.region;
    // Constraints a + b·s ≥ 0. The particle-piston ordering holds by
    // construction; the slack absorbs rounding after a snap to the face.
    let constraints = if p.side == 1 {
        [(x - r.q_min, vx), (r.q_max - q, -v), (q - x + 1e-12, v - vx)]
    } else {
        [(r.q_max - x, -vx), (q - r.q_min, v), (x - q + 1e-12, vx - v)]
    };
    let (mut lo, mut hi) = (0.0f64, span);
    for (a, b) in constraints {
        if b == 0.0 {
            if a < 0.0 {
                return None;
            }
        } else if b > 0.0 {
            lo = lo.max(-a / b);
        } else {
            hi = hi.min(-a / b);
        }
    }
    (lo <= hi).then_some(lo)
}

/// Whether a particle on `side` with normal velocity `v_perp` approaches the
/// piston moving at `εW`.
pub fn approaching(side: u8, v_perp: f64, w: f64, eps: f64) -> bool {
    let rel = v_perp - eps * w;
    if side == 1 {
        rel > 0.0
    } else {
        rel < 0.0
    }
}

/// Elastic particle–piston collision in `(v⊥, W)` coordinates.
pub fn resolve_particle_piston(
    side: u8,
    v_perp: f64,
    w: f64,
    eps: f64,
) -> Result<(f64, f64), DynamicsError> {
    if !approaching(side, v_perp, w, eps) {
        return Err(DynamicsError::Logic(format!(
            "side {side} particle with v = {v_perp} does not approach piston with W = {w}"
        )));
    }
    let e2 = eps * eps;
    let d = 1.0 + e2;
    Ok((((e2 - 1.0) * v_perp + 2.0 * eps * w) / d, (2.0 * eps * v_perp + (1.0 - e2) * w) / d))
}

/// A collision is clean when the particle arrives moving toward the piston
/// and leaves faster than `ε√(2E_max)` away from it.
pub fn is_clean(side: u8, v_pre: f64, v_post: f64, eps: f64, e_max: f64) -> bool {
    let threshold = eps * (2.0 * e_max).sqrt();
    if side == 1 {
        v_pre > 0.0 && v_post < -threshold
    } else {
        v_pre < 0.0 && v_post > threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ParticleWall,
    ParticlePiston,
    PistonEndwall,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ParticleWall => "particle_wall",
            EventKind::ParticlePiston => "particle_piston",
            EventKind::PistonEndwall => "piston_endwall",
        }
    }
}

/// A resolved collision. For particle events `v_perp_*` is the particle's
/// axial velocity; for end-wall events it is the piston velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub kind: EventKind,
    pub side: Option<u8>,
    pub particle: Option<usize>,
    /// Piston position and velocity after the event.
    pub q: f64,
    pub v: f64,
    pub v_perp_pre: f64,
    pub v_perp_post: f64,
    pub clean: Option<bool>,
}
