//! The frozen-piston billiard: a single particle in `𝒟ᵢ(Q)` with the piston
//! held fixed, its collision map on the boundary cross-section, the map
//! induced on the piston face, and the invariant measures of both.

mod checks;

pub use checks::{
    df_norm_diagnostic, involution_check, invariance_ks, kac_checks, momentum_flux_average,
    momentum_flux_median, santalo_check, singularity_neighborhood_measure, DfReport, FluxReport,
    KsReport, NeighborhoodEstimate,
};

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::Rng;
use serde::Serialize;

use crate::error::{DynamicsError, GeometryError};
use crate::geometry::{Container, Hit, Table};
use crate::vector::Vec3;

/// Default cap on collisions while looking for a return to the piston.
pub const DEFAULT_RETURN_CAP: usize = 1_000_000;

/// A point of the collision cross-section: a footpoint on the boundary and
/// the unit outgoing direction, which points into the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossSectionPoint {
    pub piece: usize,
    pub point: Vec3,
    pub direction: Vec3,
}

/// Image of a piston-face point under the induced map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InducedPoint {
    pub point: CrossSectionPoint,
    /// Number of collisions until the orbit is back on the piston face.
    pub returns: usize,
    /// Total flight time over those collisions.
    pub flight: f64,
}

/// One particle of energy `E₁` in a fixed billiard table.
#[derive(Debug, Clone)]
pub struct FrozenBilliard {
    table: Table,
    energy: f64,
    speed: f64,
}

impl FrozenBilliard {
    pub fn new(container: &Container, side: u8, q: f64, energy: f64) -> Result<Self, GeometryError> {
        Self::from_table(container.table(side, q)?, energy)
    }

    pub fn from_table(table: Table, energy: f64) -> Result<Self, GeometryError> {
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(GeometryError::Unsupported(format!("particle energy {energy}")));
        }
        Ok(FrozenBilliard { table, energy, speed: (2.0 * energy).sqrt() })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn dimension(&self) -> usize {
        self.table.dimension()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn normal(&self, x: &CrossSectionPoint) -> Vec3 {
        self.table.piece(x.piece).normal_at(x.point)
    }

    /// `cos φ` of the outgoing direction against the inward normal.
    pub fn cos_phi(&self, x: &CrossSectionPoint) -> f64 {
        x.direction.dot(self.normal(x))
    }

    /// Planar coordinates `(r, φ)`: arc length and signed angle from the
    /// inward normal, positive toward the traversal direction.
    pub fn coords(&self, x: &CrossSectionPoint) -> (f64, f64) {
        let piece = self.table.piece(x.piece);
        let n = piece.normal_at(x.point);
        let t = piece.tangent_at(x.point);
        let r = self.table.arc_coordinate(x.piece, x.point);
        (r, x.direction.dot(t).atan2(x.direction.dot(n)))
    }

    /// Inverse of [`FrozenBilliard::coords`] (planar tables).
    pub fn from_coords(&self, r: f64, phi: f64) -> CrossSectionPoint {
        let (piece, point) = self.table.locate_arc(r);
        let p = self.table.piece(piece);
        let n = p.normal_at(point);
        let t = p.tangent_at(point);
        CrossSectionPoint { piece, point, direction: n * phi.cos() + t * phi.sin() }
    }

    /// Time-reversal involution: mirrors the direction in the normal.
    pub fn involution(&self, x: &CrossSectionPoint) -> CrossSectionPoint {
        let n = self.normal(x);
        CrossSectionPoint { direction: n * (2.0 * x.direction.dot(n)) - x.direction, ..*x }
    }

    fn reflect_hit(&self, hit: &Hit, direction: Vec3, time: f64) -> Result<CrossSectionPoint, DynamicsError> {
        if let Some(kind) = hit.singular {
            return Err(DynamicsError::Singular { time, reason: format!("{kind:?} hit on piece {}", hit.piece) });
        }
        let out = direction - hit.normal * (2.0 * direction.dot(hit.normal));
        Ok(CrossSectionPoint { piece: hit.piece, point: hit.point, direction: out.normalized() })
    }

    /// Flies from `x` to the next collision and reflects. Returns the image
    /// and the flight time.
    pub fn collision_map(&self, x: &CrossSectionPoint) -> Result<(CrossSectionPoint, f64), DynamicsError> {
        let hit = self.table.first_hit(x.point, x.direction, Some(x.piece))?;
        let zeta = hit.time / self.speed;
        Ok((self.reflect_hit(&hit, x.direction, zeta)?, zeta))
    }

    /// First collision of the flow started at an interior point.
    pub fn first_collision(&self, position: Vec3, direction: Vec3) -> Result<(CrossSectionPoint, f64), DynamicsError> {
        let hit = self.table.first_hit(position, direction, None)?;
        let zeta = hit.time / self.speed;
        Ok((self.reflect_hit(&hit, direction, zeta)?, zeta))
    }

    /// `ν(Ω̂) = ℓ / |∂𝒟|`.
    pub fn piston_fraction(&self) -> f64 {
        self.table.piston_measure() / self.table.boundary_measure()
    }

    /// Mean free flight time under `ν`.
    pub fn santalo_target(&self) -> f64 {
        let c = if self.dimension() == 2 { PI } else { 4.0 };
        c * self.table.measure() / (self.speed * self.table.boundary_measure())
    }

    /// `E_ν̂[|v⊥|] / |v|`.
    pub fn momentum_factor(&self) -> f64 {
        if self.dimension() == 2 {
            PI / 4.0
        } else {
            2.0 / 3.0
        }
    }

    /// Mean momentum transfer rate to the piston, `E₁ℓ/(d|𝒟|)`.
    pub fn pressure_target(&self) -> f64 {
        self.energy * self.table.piston_measure() / (self.dimension() as f64 * self.table.measure())
    }

    fn direction_from_local(&self, piece: usize, point: Vec3, rng: &mut (impl Rng + ?Sized)) -> Vec3 {
        let p = self.table.piece(piece);
        let n = p.normal_at(point);
        if self.dimension() == 2 {
            let phi = (2.0 * rng.random::<f64>() - 1.0).asin();
            n * phi.cos() + p.tangent_at(point) * phi.sin()
        } else {
            // cos-weighted hemisphere: sin²θ is uniform.
            let s2 = rng.random::<f64>();
            let psi = TAU * rng.random::<f64>();
            let (e1, e2) = tangent_frame(n);
            let s = s2.sqrt();
            (n * (1.0 - s2).sqrt() + (e1 * psi.cos() + e2 * psi.sin()) * s).normalized()
        }
    }

    /// Sample from `ν`: footpoint uniform on the boundary, direction with
    /// density proportional to `cos φ`.
    pub fn sample_nu<R: Rng + ?Sized>(&self, rng: &mut R) -> CrossSectionPoint {
        let (piece, point) = self.table.sample_boundary(rng);
        let direction = self.direction_from_local(piece, point, rng);
        CrossSectionPoint { piece, point, direction }
    }

    /// Sample from `ν̂`, the restriction of `ν` to the piston face.
    pub fn sample_nu_hat<R: Rng + ?Sized>(&self, rng: &mut R) -> CrossSectionPoint {
        let pistons: Vec<usize> =
            (0..self.table.pieces().len()).filter(|&i| self.table.piece(i).is_piston()).collect();
        let total: f64 = pistons.iter().map(|&i| self.table.piece(i).measure()).sum();
        let mut u = rng.random::<f64>() * total;
        let mut piece = *pistons.last().expect("table has a piston face");
        for &i in &pistons {
            let m = self.table.piece(i).measure();
            if u < m {
                piece = i;
                break;
            }
            u -= m;
        }
        let point = self.table.piece(piece).sample_point(rng);
        let direction = self.direction_from_local(piece, point, rng);
        CrossSectionPoint { piece, point, direction }
    }

    /// Sample from the Liouville measure `μ` of the flow: position uniform in
    /// the domain, direction uniform.
    pub fn sample_mu<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Vec3, Vec3), GeometryError> {
        let q = self.table.sample_interior(rng)?;
        Ok((q, uniform_direction(self.dimension(), rng)))
    }

    pub fn is_piston(&self, x: &CrossSectionPoint) -> bool {
        self.table.piece(x.piece).is_piston()
    }

    /// Iterates the collision map until the orbit is back on the piston face.
    pub fn induce_on_piston(&self, x: &CrossSectionPoint, cap: usize) -> Result<InducedPoint, DynamicsError> {
        let mut y = *x;
        let mut flight = 0.0;
        for n in 1..=cap {
            let (next, zeta) = self.collision_map(&y)?;
            flight += zeta;
            if self.is_piston(&next) {
                return Ok(InducedPoint { point: next, returns: n, flight });
            }
            y = next;
        }
        Err(DynamicsError::NonReturn(cap))
    }

    /// Distance to the singular part of the cross-section: the smaller of the
    /// distance to a piece edge and the angular distance to tangency.
    pub fn boundary_distance(&self, x: &CrossSectionPoint) -> f64 {
        let edge = self.table.piece(x.piece).edge_distance(x.point);
        let angle = FRAC_PI_2 - self.cos_phi(x).clamp(-1.0, 1.0).acos();
        edge.min(angle)
    }
}

/// Orthonormal tangent pair with `e1 × e2 = n`.
pub fn tangent_frame(n: Vec3) -> (Vec3, Vec3) {
    let e1 = n.any_orthogonal().normalized();
    (e1, n.cross(e1))
}

/// Uniform unit vector on the circle (`dim = 2`) or sphere (`dim = 3`).
pub fn uniform_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec3 {
    let psi = TAU * rng.random::<f64>();
    if dim == 2 {
        Vec3::planar(psi.cos(), psi.sin())
    } else {
        let z = 2.0 * rng.random::<f64>() - 1.0;
        let s = (1.0 - z * z).max(0.0).sqrt();
        Vec3::new(s * psi.cos(), s * psi.sin(), z)
    }
}
