//! Closed billiard domains and first-hit queries.

use rand::Rng;

use super::piece::{BoundaryPiece, CORNER_TOL, GRAZING_TOL};
use crate::error::GeometryError;
use crate::vector::Vec3;

/// Smallest accepted hit time for a ray leaving a different piece.
const MIN_HIT_TIME: f64 = 1e-12;

/// Why a boundary hit is excluded from the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singularity {
    /// Within `CORNER_TOL` of a piece edge.
    Corner,
    /// `|cos φ| < GRAZING_TOL`.
    Grazing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub time: f64,
    pub piece: usize,
    pub point: Vec3,
    pub normal: Vec3,
    pub singular: Option<Singularity>,
}

/// First boundary hit of the ray `origin + t·direction` among `pieces`.
///
/// `from` names the piece the origin lies on, if any.
pub fn first_hit_among(
    pieces: &[BoundaryPiece],
    origin: Vec3,
    direction: Vec3,
    from: Option<usize>,
) -> Option<Hit> {
    let mut best_t = f64::INFINITY;
    let mut best_piece = usize::MAX;
    for (i, piece) in pieces.iter().enumerate() {
        let here = from == Some(i);
        let (ts, n) = piece.ray_hits(origin, direction, here, MIN_HIT_TIME);
        if n > 0 && ts[0] < best_t {
            best_t = ts[0];
            best_piece = i;
        }
    }
    if !best_t.is_finite() {
        return None;
    }
    let piece = &pieces[best_piece];
    let point = piece.project(origin + direction * best_t);
    let normal = piece.normal_at(point);
    let singular = if piece.edge_distance(point) < CORNER_TOL {
        Some(Singularity::Corner)
    } else if direction.dot(normal).abs() < GRAZING_TOL {
        Some(Singularity::Grazing)
    } else {
        None
    };
    Some(Hit { time: best_t, piece: best_piece, point, normal, singular })
}

/// A closed billiard domain: an ordered list of smooth boundary pieces.
///
/// For planar tables the pieces form one counterclockwise loop and the
/// boundary coordinate `r` is arc length from the start of piece 0.
#[derive(Debug, Clone)]
pub struct Table {
    dim: usize,
    pieces: Vec<BoundaryPiece>,
    offsets: Vec<f64>,
    boundary_measure: f64,
    measure: f64,
    bbox: (Vec3, Vec3),
}

impl Table {
    pub fn new(dim: usize, pieces: Vec<BoundaryPiece>) -> Result<Self, GeometryError> {
        if dim != 2 && dim != 3 {
            return Err(GeometryError::Unsupported(format!("dimension {dim}")));
        }
        if pieces.is_empty() {
            return Err(GeometryError::NotWatertight("table has no pieces".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.is_planar_curve() != (dim == 2) {
                return Err(GeometryError::InvalidPiece {
                    index: i,
                    reason: format!("piece kind does not match dimension {dim}"),
                });
            }
        }
        let mut offsets = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            offsets.push(acc);
            acc += p.measure();
        }
        let measure: f64 = pieces.iter().map(|p| p.enclosed_measure_term()).sum();
        if !(measure > 0.0) {
            return Err(GeometryError::NotWatertight(format!(
                "enclosed measure {measure} is not positive (orientation?)"
            )));
        }
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for p in &pieces {
            let (a, b) = p.bounding_box();
            lo = Vec3::new(lo.x.min(a.x), lo.y.min(a.y), lo.z.min(a.z));
            hi = Vec3::new(hi.x.max(b.x), hi.y.max(b.y), hi.z.max(b.z));
        }
        Ok(Table { dim, pieces, offsets, boundary_measure: acc, measure, bbox: (lo, hi) })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    pub fn piece(&self, i: usize) -> &BoundaryPiece {
        &self.pieces[i]
    }

    /// Enclosed area (planar) or volume (spatial).
    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Boundary length (planar) or area (spatial).
    pub fn boundary_measure(&self) -> f64 {
        self.boundary_measure
    }

    /// Total measure of the piston pieces (`ℓ`).
    pub fn piston_measure(&self) -> f64 {
        self.pieces.iter().filter(|p| p.is_piston()).map(|p| p.measure()).sum()
    }

    pub fn piece_offset(&self, i: usize) -> f64 {
        self.offsets[i]
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        self.bbox
    }

    /// Largest distance between two bounding-box corners; bounds every chord.
    pub fn diameter(&self) -> f64 {
        (self.bbox.1 - self.bbox.0).norm()
    }

    /// First boundary hit from `origin` along the unit `direction`.
    pub fn first_hit(
        &self,
        origin: Vec3,
        direction: Vec3,
        from: Option<usize>,
    ) -> Result<Hit, GeometryError> {
        first_hit_among(&self.pieces, origin, direction, from).ok_or(
            GeometryError::NoIntersection {
                origin: [origin.x, origin.y, origin.z],
                direction: [direction.x, direction.y, direction.z],
            },
        )
    }

    /// Point membership by crossing parity along a fixed generic direction.
    pub fn contains(&self, p: Vec3) -> bool {
        let d = if self.dim == 2 {
            Vec3::planar(0.8191520442889918, 0.5735764363510461)
        } else {
            Vec3::new(0.5773502691896258, 0.3333333333333333, 0.7453559924999299).normalized()
        };
        let mut crossings = 0usize;
        for piece in &self.pieces {
            let (_, n) = piece.ray_hits(p, d, false, 0.0);
            crossings += n;
        }
        crossings % 2 == 1
    }

    /// Uniform point on the boundary: piece chosen by measure, then uniform on it.
    pub fn sample_boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec3) {
        let u = rng.random::<f64>() * self.boundary_measure;
        let i = match self.offsets.iter().rposition(|&o| o <= u) {
            Some(i) => i,
            None => 0,
        };
        (i, self.pieces[i].sample_point(rng))
    }

    /// Uniform point in the interior by rejection from the bounding box.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec3, GeometryError> {
        const MAX_DRAWS: usize = 1_000_000;
        let (lo, hi) = self.bbox;
        for _ in 0..MAX_DRAWS {
            let p = Vec3::new(
                lo.x + (hi.x - lo.x) * rng.random::<f64>(),
                lo.y + (hi.y - lo.y) * rng.random::<f64>(),
                if self.dim == 3 { lo.z + (hi.z - lo.z) * rng.random::<f64>() } else { 0.0 },
            );
            if self.contains(p) {
                return Ok(p);
            }
        }
        Err(GeometryError::SamplingFailed(MAX_DRAWS))
    }

    /// Boundary coordinate `r` of a point on piece `i` (planar tables).
    pub fn arc_coordinate(&self, i: usize, p: Vec3) -> f64 {
        self.offsets[i] + self.pieces[i].arc_length(p)
    }

    /// Inverse of [`Table::arc_coordinate`].
    pub fn locate_arc(&self, r: f64) -> (usize, Vec3) {
        let r = r.rem_euclid(self.boundary_measure);
        let i = self.offsets.iter().rposition(|&o| o <= r).unwrap_or(0);
        (i, self.pieces[i].point_at(r - self.offsets[i]))
    }
}
