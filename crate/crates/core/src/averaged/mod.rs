//! The averaged equation for the slow variables and its conserved
//! quantities.

use std::f64::consts::TAU;
use std::io::{self, Write};

use serde::Serialize;

use crate::error::AveragedError;
use crate::geometry::Container;
use crate::microsim::{Region, SlowSample, SlowState};

/// Largest accepted relative drift of the effective Hamiltonian per step.
pub const DRIFT_TOL: f64 = 1e-10;
/// Maximum number of step halvings.
const MAX_HALVINGS: u32 = 20;

/// Averaged dynamics in a fixed container.
#[derive(Debug, Clone, Copy)]
pub struct Averaged<'a> {
    container: &'a Container,
    dim: f64,
    ell: f64,
}

/// Solution sampled on a uniform slow-time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedPath {
    pub samples: Vec<SlowSample>,
    /// Effective Hamiltonian at each sample.
    pub h_eff: Vec<f64>,
    /// First grid time outside the region, if any; the path stops there.
    pub exit: Option<f64>,
    /// Internal substeps per grid interval (a power of two).
    pub substeps: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Oscillation {
    pub q_star: f64,
    pub period: f64,
    pub turning_points: (f64, f64),
}

impl<'a> Averaged<'a> {
    pub fn new(container: &'a Container) -> Self {
        Averaged {
            container,
            dim: container.dimension() as f64,
            ell: container.piston_measure(),
        }
    }

    fn measures(&self, q: f64) -> Result<(f64, f64), AveragedError> {
        let m1 = self.container.subdomain_measure(1, q)?;
        let m2 = self.container.subdomain_measure(2, q)?;
        for (side, m) in [(1, m1), (2, m2)] {
            if !(m > 0.0) {
                return Err(crate::error::GeometryError::DegenerateSubdomain { side, q, measure: m }.into());
            }
        }
        Ok((m1, m2))
    }

    /// `dh/dτ`, returned in the same layout as `h`.
    pub fn vector_field(&self, h: &SlowState) -> Result<SlowState, AveragedError> {
        let (m1, m2) = self.measures(h.q)?;
        let k1 = 2.0 * self.ell / (self.dim * m1);
        let k2 = 2.0 * self.ell / (self.dim * m2);
        Ok(SlowState {
            q: h.w,
            w: k1 * h.e1_total() - k2 * h.e2_total(),
            e1: h.e1.iter().map(|e| -h.w * e * k1).collect(),
            e2: h.e2.iter().map(|e| h.w * e * k2).collect(),
        })
    }

    /// Gas pressures `Pᵢ = 2Eᵢ/(d|𝒟ᵢ|)`.
    pub fn pressures(&self, h: &SlowState) -> Result<(f64, f64), AveragedError> {
        let (m1, m2) = self.measures(h.q)?;
        Ok((2.0 * h.e1_total() / (self.dim * m1), 2.0 * h.e2_total() / (self.dim * m2)))
    }

    /// Per-particle energies at piston position `q` along the averaged flow
    /// through `h0`.
    pub fn adiabatic_energies(&self, h0: &SlowState, q: f64) -> Result<(Vec<f64>, Vec<f64>), AveragedError> {
        let (a1, a2) = self.measures(h0.q)?;
        let (b1, b2) = self.measures(q)?;
        let p = 2.0 / self.dim;
        let (f1, f2) = ((a1 / b1).powf(p), (a2 / b2).powf(p));
        Ok((h0.e1.iter().map(|e| e * f1).collect(), h0.e2.iter().map(|e| e * f2).collect()))
    }

    /// Adiabatic potential `Σ Eᵢ(0)(|𝒟ᵢ(Q₀)|/|𝒟ᵢ(Q)|)^{2/d}`.
    pub fn potential(&self, h0: &SlowState, q: f64) -> Result<f64, AveragedError> {
        let (e1, e2) = self.adiabatic_energies(h0, q)?;
        Ok(e1.iter().chain(&e2).sum())
    }

    /// `W²/2` plus the adiabatic potential referenced to `h0`.
    pub fn effective_hamiltonian(&self, h: &SlowState, h0: &SlowState) -> Result<f64, AveragedError> {
        Ok(0.5 * h.w * h.w + self.potential(h0, h.q)?)
    }

    /// Force on the piston along the adiabatic family through `h0`.
    pub fn effective_force(&self, h0: &SlowState, q: f64) -> Result<f64, AveragedError> {
        let (e1, e2) = self.adiabatic_energies(h0, q)?;
        let h = SlowState { q, w: 0.0, e1, e2 };
        let (p1, p2) = self.pressures(&h)?;
        Ok((p1 - p2) * self.ell)
    }

    fn rk4(&self, h: &SlowState, dt: f64) -> Result<SlowState, AveragedError> {
        let k1 = self.vector_field(h)?;
        let k2 = self.vector_field(&axpy(h, &k1, dt / 2.0))?;
        let k3 = self.vector_field(&axpy(h, &k2, dt / 2.0))?;
        let k4 = self.vector_field(&axpy(h, &k3, dt))?;
        let mut out = h.clone();
        let comb = |a: f64, b: f64, c: f64, d: f64| dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
        out.q += comb(k1.q, k2.q, k3.q, k4.q);
        out.w += comb(k1.w, k2.w, k3.w, k4.w);
        for (i, e) in out.e1.iter_mut().enumerate() {
            *e += comb(k1.e1[i], k2.e1[i], k3.e1[i], k4.e1[i]);
        }
        for (i, e) in out.e2.iter_mut().enumerate() {
            *e += comb(k1.e2[i], k2.e2[i], k3.e2[i], k4.e2[i]);
        }
        Ok(out)
    }

    /// One grid interval of length `dt` in `2^halvings` RK4 substeps.
    /// Halves further while the effective Hamiltonian drifts more than
    /// [`DRIFT_TOL`] (relative) on any substep.
    fn grid_step(
        &self,
        h: &SlowState,
        h0: &SlowState,
        dt: f64,
        halvings: &mut u32,
        tau: f64,
    ) -> Result<SlowState, AveragedError> {
        loop {
            let n = 1u32 << *halvings;
            let sub = dt / n as f64;
            let mut y = h.clone();
            let mut ok = true;
            let mut energy = self.effective_hamiltonian(&y, h0)?;
            for _ in 0..n {
                let next = self.rk4(&y, sub);
                let next = match next {
                    Ok(s) => s,
                    Err(e) if *halvings >= MAX_HALVINGS => return Err(e),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                };
                let e_next = match self.effective_hamiltonian(&next, h0) {
                    Ok(v) => v,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                };
                if (e_next - energy).abs() > DRIFT_TOL * energy.abs() {
                    ok = false;
                    break;
                }
                energy = e_next;
                y = next;
            }
            if ok {
                return Ok(y);
            }
            if *halvings >= MAX_HALVINGS {
                return Err(AveragedError::StepControl(tau));
            }
            *halvings += 1;
        }
    }

    /// Integrates from `h0` to `tau_end`, sampling every `dtau`. With a
    /// region, the path stops at the first grid time outside it.
    pub fn integrate(
        &self,
        h0: &SlowState,
        tau_end: f64,
        dtau: f64,
        region: Option<&Region>,
    ) -> Result<AveragedPath, AveragedError> {
        if !(dtau > 0.0) || !(tau_end >= 0.0) {
            return Err(AveragedError::StepControl(0.0));
        }
        let n = (tau_end / dtau + 1e-9).floor() as usize;
        let mut path = AveragedPath {
            samples: Vec::with_capacity((n + 1).min(1 << 20)),
            h_eff: Vec::with_capacity((n + 1).min(1 << 20)),
            exit: None,
            substeps: 1,
        };
        let mut halvings = 0u32;
        let mut h = h0.clone();
        for k in 0..=n {
            let tau = k as f64 * dtau;
            if k > 0 {
                h = self.grid_step(&h, h0, dtau, &mut halvings, tau)?;
            }
            path.h_eff.push(self.effective_hamiltonian(&h, h0)?);
            path.samples.push(SlowSample { tau, state: h.clone() });
            if region.is_some_and(|r| !r.contains(&h)) {
                path.exit = Some(tau);
                break;
            }
        }
        path.substeps = 1 << halvings;
        Ok(path)
    }

    /// Equilibrium position on the adiabatic family through `h0`, by
    /// bisection on the effective force.
    pub fn equilibrium(&self, h0: &SlowState) -> Result<f64, AveragedError> {
        let (lo, hi) = self.container.admissible_q_range();
        let (mut a, mut b) = (lo, hi);
        let fa = self.effective_force(h0, a)?;
        let fb = self.effective_force(h0, b)?;
        if !(fa > 0.0 && fb < 0.0) {
            return Err(AveragedError::NotConfining(format!(
                "effective force does not change sign on [{lo}, {hi}]"
            )));
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.effective_force(h0, m)? > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `d²U/dQ²` at `q` by central differences of the effective force.
    pub fn potential_curvature(&self, h0: &SlowState, q: f64) -> Result<f64, AveragedError> {
        let d = 1e-5;
        Ok(-(self.effective_force(h0, q + d)? - self.effective_force(h0, q - d)?) / (2.0 * d))
    }

    /// Solves `U(Q) = H` between `from` and `to` by bisection (`U − H`
    /// changes sign on the interval).
    fn level_crossing(&self, h0: &SlowState, energy: f64, from: f64, to: f64) -> Result<f64, AveragedError> {
        let g = |q: f64| self.potential(h0, q).map(|u| u - energy);
        let (mut a, mut b) = (from, to);
        let ga = g(a)?;
        if ga * g(b)? > 0.0 {
            return Err(AveragedError::NotConfining(format!(
                "no turning point between {from} and {to}"
            )));
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a.min(b) || m >= a.max(b) {
                break;
            }
            if (g(m)? < 0.0) == (ga < 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Equilibrium, oscillation period and turning points of the averaged
    /// solution through `h0`.
    ///
    /// The period is the time between successive upward crossings of the
    /// section `Q = Q*`, located by cubic Hermite interpolation.
    pub fn period_and_equilibrium(&self, h0: &SlowState) -> Result<Oscillation, AveragedError> {
        let q_star = self.equilibrium(h0)?;
        let energy = self.effective_hamiltonian(h0, h0)?;
        let u_star = self.potential(h0, q_star)?;
        if energy - u_star <= 1e-13 * energy.abs() {
            return Err(AveragedError::AtEquilibrium);
        }
        let (lo, hi) = self.container.admissible_q_range();
        let left = self.level_crossing(h0, energy, q_star, lo)?;
        let right = self.level_crossing(h0, energy, q_star, hi)?;

        let curvature = self.potential_curvature(h0, q_star)?;
        let guess = if curvature > 0.0 { TAU / curvature.sqrt() } else { 1.0 };
        let dt = guess / 4000.0;
        let mut h = h0.clone();
        let mut tau = 0.0;
        let mut halvings = 0;
        let mut crossings = Vec::new();
        let limit = 200.0 * guess;
        while crossings.len() < 2 {
            let next = self.grid_step(&h, h0, dt, &mut halvings, tau)?;
            let (g0, g1) = (h.q - q_star, next.q - q_star);
            if g0 < 0.0 && g1 >= 0.0 {
                crossings.push(tau + hermite_root(g0, g1, h.w, next.w, dt));
            }
            h = next;
            tau += dt;
            if tau > limit {
                return Err(AveragedError::LeftRegion);
            }
        }
        Ok(Oscillation { q_star, period: crossings[1] - crossings[0], turning_points: (left, right) })
    }
}

fn axpy(h: &SlowState, k: &SlowState, a: f64) -> SlowState {
    SlowState {
        q: h.q + a * k.q,
        w: h.w + a * k.w,
        e1: h.e1.iter().zip(&k.e1).map(|(x, d)| x + a * d).collect(),
        e2: h.e2.iter().zip(&k.e2).map(|(x, d)| x + a * d).collect(),
    }
}

/// Root in `[0, dt]` of the cubic Hermite interpolant with values `g0, g1`
/// and slopes `d0, d1`.
fn hermite_root(g0: f64, g1: f64, d0: f64, d1: f64, dt: f64) -> f64 {
    let p = |s: f64| {
        let t = s / dt;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * g0
            + (t3 - 2.0 * t2 + t) * dt * d0
            + (-2.0 * t3 + 3.0 * t2) * g1
            + (t3 - t2) * dt * d1
    };
    let (mut a, mut b) = (0.0, dt);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if p(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Averaged path as CSV: `tau,Q,W,E1_1..,E2_1..,H_eff`.
pub fn write_path_csv<W: Write>(path: &AveragedPath, mut out: W) -> io::Result<()> {
    let Some(first) = path.samples.first() else {
        return writeln!(out, "tau,Q,W,H_eff");
    };
    let mut header = vec!["tau".to_string(), "Q".into(), "W".into()];
    header.extend((1..=first.state.e1.len()).map(|j| format!("E1_{j}")));
    header.extend((1..=first.state.e2.len()).map(|j| format!("E2_{j}")));
    header.push("H_eff".into());
    writeln!(out, "{}", header.join(","))?;
    for (s, h) in path.samples.iter().zip(&path.h_eff) {
        let mut row = vec![s.tau.to_string(), s.state.q.to_string(), s.state.w.to_string()];
        row.extend(s.state.e1.iter().chain(&s.state.e2).map(|e| e.to_string()));
        row.push(h.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
