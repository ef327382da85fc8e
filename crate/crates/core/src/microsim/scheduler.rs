use super::{is_clean, resolve_particle_piston, CollisionEvent, EventKind, MicroState};
use crate::error::DynamicsError;
use crate::geometry::{specular_reflect, Container, Hit, CORNER_TOL};

/// Two events closer than this are a degenerate tie.
pub const TIE_TOL: f64 = 1e-12;

/// What happens at the next event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pending {
    Wall { particle: usize, hit: Hit },
    Piston { particle: usize },
    Endwall { at: f64 },
    /// Nothing moves.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scheduled {
    /// Absolute fast time.
    pub time: f64,
    pub pending: Pending,
}

/// Event-driven integrator. Wall hits are cached per particle (absolute
/// time) and recomputed only when that particle's velocity changes; piston
/// times are recomputed on every scan since they are a single division.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    container: &'a Container,
    state: MicroState,
    walls: Vec<Option<(f64, Hit)>>,
    e_max: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(container: &'a Container, state: MicroState) -> Result<Self, DynamicsError> {
        for (j, p) in state.particles.iter().enumerate() {
            if !container.contains(p.side, state.q, p.position) {
                return Err(DynamicsError::InvalidState(format!(
                    "particle {j} at {:?} is not inside subdomain {}",
                    p.position, p.side
                )));
            }
        }
        let e_max = state.total_energy();
        let mut sim = Simulator { container, walls: vec![None; state.particles.len()], state, e_max };
        for j in 0..sim.walls.len() {
            sim.refresh_wall(j, None);
        }
        Ok(sim)
    }

    /// Sets `E_max` used by the clean-collision threshold.
    pub fn with_energy_bound(mut self, e_max: f64) -> Self {
        self.e_max = e_max;
        self
    }

    pub fn state(&self) -> &MicroState {
        &self.state
    }

    pub fn into_state(self) -> MicroState {
        self.state
    }

    pub fn container(&self) -> &Container {
        self.container
    }

    fn refresh_wall(&mut self, j: usize, from: Option<usize>) {
        let p = &self.state.particles[j];
        let speed = p.velocity.norm();
        self.walls[j] = if speed == 0.0 {
            None
        } else {
            self.container
                .first_wall_hit(p.side, p.position, p.velocity / speed, from)
                .map(|hit| (self.state.time + hit.time / speed, hit))
        };
    }

    /// Absolute time at which particle `j` meets the piston face, if ever.
    fn piston_time(&self, j: usize) -> f64 {
        let p = &self.state.particles[j];
        let gap = self.state.q - p.position.x;
        let rel = p.velocity.x - self.state.v;
        let t = gap / rel;
        let closing = if p.side == 1 { rel > 0.0 } else { rel < 0.0 };
        if closing && t > 0.0 {
            self.state.time + t
        } else {
            f64::INFINITY
        }
    }

    fn endwall(&self) -> Option<(f64, f64)> {
        let (q, v) = (self.state.q, self.state.v);
        if v < 0.0 {
            Some((self.state.time + q / -v, 0.0))
        } else if v > 0.0 {
            Some((self.state.time + (1.0 - q) / v, 1.0))
        } else {
            None
        }
    }

    /// Earliest pending event. Ties within [`TIE_TOL`] are singular.
    pub fn next_event(&self) -> Result<Scheduled, DynamicsError> {
        let mut best = Scheduled { time: f64::INFINITY, pending: Pending::Never };
        let mut second = f64::INFINITY;
        let mut offer = |time: f64, pending: Pending| {
            if time < best.time {
                second = best.time;
                best = Scheduled { time, pending };
            } else if time < second {
                second = time;
            }
        };
        for j in 0..self.state.particles.len() {
            if let Some((time, hit)) = self.walls[j] {
                offer(time, Pending::Wall { particle: j, hit });
            }
            let t = self.piston_time(j);
            if t.is_finite() {
                offer(t, Pending::Piston { particle: j });
            }
        }
        if let Some((time, at)) = self.endwall() {
            offer(time, Pending::Endwall { at });
        }
        if best.time.is_finite() && second - best.time < TIE_TOL {
            return Err(DynamicsError::Singular {
                time: best.time,
                reason: format!("simultaneous events at t = {}", best.time),
            });
        }
        Ok(best)
    }

    /// Free flight of all bodies to absolute time `t` (no event in between).
    pub fn advance_to(&mut self, t: f64) {
        let dt = t - self.state.time;
        self.state.advance_mut(dt);
        self.state.time = t;
    }

    /// Advances to the next event and resolves it.
    pub fn step(&mut self) -> Result<CollisionEvent, DynamicsError> {
        let next = self.next_event()?;
        self.resolve(next)
    }

    /// Advances to a scheduled event (from [`Simulator::next_event`]) and
    /// resolves it.
    pub fn resolve(&mut self, next: Scheduled) -> Result<CollisionEvent, DynamicsError> {
        let time = next.time;
        if !time.is_finite() {
            return Err(DynamicsError::Logic("no event pending".into()));
        }
        self.advance_to(time);
        let eps = self.state.eps;
        match next.pending {
            Pending::Never => Err(DynamicsError::Logic("no event pending".into())),
            Pending::Wall { particle: j, hit } => {
                if let Some(kind) = hit.singular {
                    return Err(DynamicsError::Singular {
                        time,
                        reason: format!("{kind:?} wall hit by particle {j}"),
                    });
                }
                let p = &mut self.state.particles[j];
                let pre = p.velocity.x;
                p.position = hit.point;
                p.velocity = specular_reflect(p.velocity, hit.normal).map_err(|_| {
                    DynamicsError::Singular { time, reason: format!("grazing wall hit by particle {j}") }
                })?;
                let (side, post) = (p.side, p.velocity.x);
                self.refresh_wall(j, Some(hit.piece));
                Ok(CollisionEvent {
                    time,
                    kind: EventKind::ParticleWall,
                    side: Some(side),
                    particle: Some(j),
                    q: self.state.q,
                    v: self.state.v,
                    v_perp_pre: pre,
                    v_perp_post: post,
                    clean: None,
                })
            }
            Pending::Piston { particle: j } => {
                let q = self.state.q;
                let [a, b] = self.container.cross_section();
                let p = self.state.particles[j];
                let mut edge = p.position.y.min(a - p.position.y);
                if self.container.dimension() == 3 {
                    edge = edge.min(p.position.z).min(b - p.position.z);
                }
                if edge < CORNER_TOL {
                    return Err(DynamicsError::Singular {
                        time,
                        reason: format!("particle {j} hit the piston rim"),
                    });
                }
                let w = self.state.w();
                let pre = p.velocity.x;
                let (post, w_post) = resolve_particle_piston(p.side, pre, w, eps)?;
                let separating = if p.side == 1 { post < eps * w_post } else { post > eps * w_post };
                if !separating {
                    return Err(DynamicsError::Singular {
                        time,
                        reason: format!("particle {j} does not separate from the piston"),
                    });
                }
                let particle = &mut self.state.particles[j];
                particle.position.x = q;
                particle.velocity.x = post;
                self.state.v = eps * w_post;
                self.refresh_wall(j, None);
                Ok(CollisionEvent {
                    time,
                    kind: EventKind::ParticlePiston,
                    side: Some(p.side),
                    particle: Some(j),
                    q,
                    v: self.state.v,
                    v_perp_pre: pre,
                    v_perp_post: post,
                    clean: Some(is_clean(p.side, pre, post, eps, self.e_max)),
                })
            }
            Pending::Endwall { at } => {
                let pre = self.state.v;
                self.state.q = at;
                self.state.v = -pre;
                Ok(CollisionEvent {
                    time,
                    kind: EventKind::PistonEndwall,
                    side: None,
                    particle: None,
                    q: at,
                    v: self.state.v,
                    v_perp_pre: pre,
                    v_perp_post: self.state.v,
                    clean: None,
                })
            }
        }
    }
}

/// Next event of `state` computed from scratch.
pub fn next_event(container: &Container, state: &MicroState) -> Result<Scheduled, DynamicsError> {
    Simulator::new(container, state.clone())?.next_event()
}
