//! The gas container: a tube `[0,1] × P` with an end region on each side.
//!
//! Coordinates put the tube axis along `x`. The cross-section `P` is the
//! interval `[0, ℓ]` in `y` (planar) or the rectangle `[0, a] × [0, b]` in
//! `(y, z)` (spatial). The left end region lies in `x ≤ 0`, the right one in
//! `x ≥ 1`. Side 1 is `𝒟₁(Q) = left cap ∪ [0, Q] × P`, side 2 is the rest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::piece::{Arc, BoundaryPiece, Facet, Hole, Inward, Segment, Shape, SphereCap};
use super::table::{first_hit_among, Hit, Table};
use crate::error::GeometryError;
use crate::vector::Vec3;

const JOIN_TOL: f64 = 1e-9;

/// Serializable container description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerSpec {
    pub dimension: usize,
    pub tube: TubeSpec,
    /// Chain from `(0, ℓ)` to `(0, 0)` (planar) or closed facet set (spatial).
    /// Empty means a flat end wall at `x = 0`.
    #[serde(default)]
    pub left_cap: Vec<PrimitiveSpec>,
    /// Chain from `(1, 0)` to `(1, ℓ)` (planar) or closed facet set (spatial).
    #[serde(default)]
    pub right_cap: Vec<PrimitiveSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeSpec {
    #[serde(default = "unit_length")]
    pub length: f64,
    /// `[ℓ]` for `d = 2`, `[a, b]` (rectangle sides) for `d = 3`.
    pub cross_section: Vec<f64>,
}

fn unit_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Segment {
        from: Vec<f64>,
        to: Vec<f64>,
    },
    /// Traversed from `start_deg` to `end_deg`; the sign of the difference
    /// fixes the orientation.
    Arc {
        center: Vec<f64>,
        radius: f64,
        start_deg: f64,
        end_deg: f64,
    },
    /// Convex polygon, vertices counterclockwise as seen from inside.
    Facet {
        vertices: Vec<Vec<f64>>,
        #[serde(default)]
        holes: Vec<HoleSpec>,
    },
    /// Spherical patch around `axis` whose rim circle has radius `rim_radius`.
    SphereCap {
        center: Vec<f64>,
        radius: f64,
        axis: Vec<f64>,
        rim_radius: f64,
        #[serde(default)]
        inward: Inward,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl ContainerSpec {
    /// Planar tube of height `ell` with flat end walls.
    pub fn rectangle(ell: f64) -> Self {
        ContainerSpec {
            dimension: 2,
            tube: TubeSpec { length: 1.0, cross_section: vec![ell] },
            left_cap: vec![],
            right_cap: vec![],
        }
    }

    /// Planar tube closed by half-disk caps of radius `ell / 2`: a Bunimovich stadium.
    pub fn stadium(ell: f64) -> Self {
        let r = ell / 2.0;
        ContainerSpec {
            dimension: 2,
            tube: TubeSpec { length: 1.0, cross_section: vec![ell] },
            left_cap: vec![PrimitiveSpec::Arc {
                center: vec![0.0, r],
                radius: r,
                start_deg: 90.0,
                end_deg: 270.0,
            }],
            right_cap: vec![PrimitiveSpec::Arc {
                center: vec![1.0, r],
                radius: r,
                start_deg: -90.0,
                end_deg: 90.0,
            }],
        }
    }

    /// Spatial box tube with rectangular cross-section `a × b` and flat ends.
    pub fn cuboid(a: f64, b: f64) -> Self {
        ContainerSpec {
            dimension: 3,
            tube: TubeSpec { length: 1.0, cross_section: vec![a, b] },
            left_cap: vec![],
            right_cap: vec![],
        }
    }

    /// Box tube extended by `depth` on each end; each far end face carries a
    /// shallow spherical dome of sphere radius `dome_radius` over a disk of
    /// radius `rim`.
    pub fn domed_box(a: f64, b: f64, depth: f64, rim: f64, dome_radius: f64) -> Self {
        let cap = |x_iface: f64, x_far: f64| -> Vec<PrimitiveSpec> {
            let out = (x_far - x_iface).signum();
            let p = |x: f64, y: f64, z: f64| vec![x, y, z];
            let mut faces = Vec::new();
            let rect = |c: [[f64; 3]; 4], inward: Vec3| {
                let mut v: Vec<Vec3> = c.iter().map(|q| Vec3::new(q[0], q[1], q[2])).collect();
                if newell(&v).dot(inward) < 0.0 {
                    v.reverse();
                }
                v.into_iter().map(|q| p(q.x, q.y, q.z)).collect::<Vec<_>>()
            };
            let (x0, x1) = (x_iface, x_far);
            faces.push(PrimitiveSpec::Facet {
                vertices: rect(
                    [[x1, 0.0, 0.0], [x1, a, 0.0], [x1, a, b], [x1, 0.0, b]],
                    Vec3::new(-out, 0.0, 0.0),
                ),
                holes: vec![HoleSpec { center: p(x1, a / 2.0, b / 2.0), radius: rim }],
            });
            faces.push(PrimitiveSpec::Facet {
                vertices: rect([[x0, 0.0, 0.0], [x1, 0.0, 0.0], [x1, 0.0, b], [x0, 0.0, b]], Vec3::Y),
                holes: vec![],
            });
            faces.push(PrimitiveSpec::Facet {
                vertices: rect([[x0, a, 0.0], [x1, a, 0.0], [x1, a, b], [x0, a, b]], -Vec3::Y),
                holes: vec![],
            });
            faces.push(PrimitiveSpec::Facet {
                vertices: rect([[x0, 0.0, 0.0], [x1, 0.0, 0.0], [x1, a, 0.0], [x0, a, 0.0]], Vec3::Z),
                holes: vec![],
            });
            faces.push(PrimitiveSpec::Facet {
                vertices: rect([[x0, 0.0, b], [x1, 0.0, b], [x1, a, b], [x0, a, b]], -Vec3::Z),
                holes: vec![],
            });
            let back = (dome_radius * dome_radius - rim * rim).sqrt();
            faces.push(PrimitiveSpec::SphereCap {
                center: p(x1 - out * back, a / 2.0, b / 2.0),
                radius: dome_radius,
                axis: p(out, 0.0, 0.0),
                rim_radius: rim,
                inward: Inward::TowardCenter,
            });
            faces
        };
        ContainerSpec {
            dimension: 3,
            tube: TubeSpec { length: 1.0, cross_section: vec![a, b] },
            left_cap: cap(0.0, -depth),
            right_cap: cap(1.0, 1.0 + depth),
        }
    }
}

fn newell(v: &[Vec3]) -> Vec3 {
    let mut n = Vec3::ZERO;
    for i in 0..v.len() {
        n += v[i].cross(v[(i + 1) % v.len()]);
    }
    n
}

/// Measures of one subdomain at a given piston position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubdomainView {
    pub side: u8,
    pub q: f64,
    /// `|𝒟ᵢ(Q)|`: area (d = 2) or volume (d = 3).
    pub measure: f64,
    /// `|∂𝒟ᵢ(Q)|`: boundary length or area, piston face included.
    pub boundary_measure: f64,
}

/// Validated, immutable container geometry.
#[derive(Debug, Clone)]
pub struct Container {
    dim: usize,
    cross: [f64; 2],
    ell: f64,
    caps: [Vec<BoundaryPiece>; 2],
    cap_tables: [Option<Table>; 2],
    cap_boundary: [f64; 2],
    walls: [Vec<BoundaryPiece>; 2],
    spec: ContainerSpec,
}

impl Container {
    pub fn from_spec(spec: &ContainerSpec) -> Result<Self, GeometryError> {
        let dim = spec.dimension;
        if dim != 2 && dim != 3 {
            return Err(GeometryError::Unsupported(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if (spec.tube.length - 1.0).abs() > 1e-15 {
            return Err(GeometryError::Unsupported(format!(
                "tube length must be 1, got {}",
                spec.tube.length
            )));
        }
        let cross = match (dim, spec.tube.cross_section.as_slice()) {
            (2, [l]) => [*l, 1.0],
            (3, [a, b]) => [*a, *b],
            _ => {
                return Err(GeometryError::Unsupported(format!(
                    "cross_section needs {} entries for dimension {dim}",
                    dim - 1
                )))
            }
        };
        if !(cross[0] > 0.0 && cross[1] > 0.0) {
            return Err(GeometryError::Unsupported("cross-section sides must be positive".into()));
        }
        let ell = if dim == 2 { cross[0] } else { cross[0] * cross[1] };

        let left = build_pieces(dim, &spec.left_cap)?;
        let right = build_pieces(dim, &spec.right_cap)?;
        let mut c = Container {
            dim,
            cross,
            ell,
            caps: [left, right],
            cap_tables: [None, None],
            cap_boundary: [0.0, 0.0],
            walls: [vec![], vec![]],
            spec: spec.clone(),
        };
        for side in [1u8, 2] {
            c.validate_cap(side)?;
        }
        for side in [1u8, 2] {
            let i = (side - 1) as usize;
            c.cap_boundary[i] = if c.caps[i].is_empty() {
                0.0
            } else {
                c.caps[i].iter().map(|p| p.measure()).sum()
            };
            c.walls[i] = c.wall_pieces(side);
        }
        Ok(c)
    }

    pub fn spec(&self) -> &ContainerSpec {
        &self.spec
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Piston cross-measure `ℓ` (length for d = 2, area for d = 3).
    pub fn piston_measure(&self) -> f64 {
        self.ell
    }

    /// Cross-section sides; the second entry is 1 for planar containers.
    pub fn cross_section(&self) -> [f64; 2] {
        self.cross
    }

    fn cap_measure(&self, side: u8) -> f64 {
        self.cap_tables[(side - 1) as usize].as_ref().map_or(0.0, |t| t.measure())
    }

    /// `|𝒟ᵢ(Q)|`, affine in `Q` with slope `±ℓ`.
    pub fn subdomain_measure(&self, side: u8, q: f64) -> Result<f64, GeometryError> {
        check_q(q)?;
        match side {
            1 => Ok(self.cap_measure(1) + self.ell * q),
            2 => Ok(self.cap_measure(2) + self.ell * (1.0 - q)),
            s => Err(GeometryError::InvalidSide(s)),
        }
    }

    /// `|∂𝒟ᵢ(Q)|`, including the piston face.
    pub fn boundary_measure(&self, side: u8, q: f64) -> Result<f64, GeometryError> {
        check_q(q)?;
        let len = match side {
            1 => q,
            2 => 1.0 - q,
            s => return Err(GeometryError::InvalidSide(s)),
        };
        let perimeter = if self.dim == 2 { 2.0 } else { 2.0 * (self.cross[0] + self.cross[1]) };
        let i = (side - 1) as usize;
        let end = if self.caps[i].is_empty() { self.ell } else { self.cap_boundary[i] };
        Ok(end + perimeter * len + self.ell)
    }

    pub fn view(&self, side: u8, q: f64) -> Result<SubdomainView, GeometryError> {
        Ok(SubdomainView {
            side,
            q,
            measure: self.subdomain_measure(side, q)?,
            boundary_measure: self.boundary_measure(side, q)?,
        })
    }

    /// Range of `Q` on which both subdomains have positive measure.
    pub fn admissible_q_range(&self) -> (f64, f64) {
        (
            if self.cap_measure(1) > 0.0 { 0.0 } else { f64::MIN_POSITIVE },
            if self.cap_measure(2) > 0.0 { 1.0 } else { 1.0 - f64::EPSILON },
        )
    }

    /// The fixed-piston billiard table `𝒟ᵢ(Q)`, piston face included.
    pub fn table(&self, side: u8, q: f64) -> Result<Table, GeometryError> {
        check_q(q)?;
        if side != 1 && side != 2 {
            return Err(GeometryError::InvalidSide(side));
        }
        let measure = self.subdomain_measure(side, q)?;
        if !(measure > 0.0) {
            return Err(GeometryError::DegenerateSubdomain { side, q, measure });
        }
        let (x0, x1) = if side == 1 { (0.0, q) } else { (q, 1.0) };
        let mut pieces = Vec::new();
        let cap = self.end_pieces(side);
        if self.dim == 2 {
            let l = self.ell;
            let bottom = tube_segment(Vec3::planar(x0, 0.0), Vec3::planar(x1, 0.0));
            let top = tube_segment(Vec3::planar(x1, l), Vec3::planar(x0, l));
            if side == 1 {
                pieces.extend(bottom);
                pieces.push(BoundaryPiece::piston(seg(Vec3::planar(q, 0.0), Vec3::planar(q, l))));
                pieces.extend(top);
                pieces.extend(cap);
            } else {
                pieces.extend(bottom);
                pieces.extend(cap);
                pieces.extend(top);
                pieces.push(BoundaryPiece::piston(seg(Vec3::planar(q, l), Vec3::planar(q, 0.0))));
            }
        } else {
            if x1 - x0 > 0.0 {
                pieces.extend(self.tube_facets(x0, x1));
            }
            pieces.extend(cap);
            let inward = if side == 1 { -Vec3::X } else { Vec3::X };
            pieces.push(BoundaryPiece::piston(Shape::Facet(self.cross_facet(q, inward))));
        }
        Table::new(self.dim, pieces)
    }

    /// Static walls seen by particles on `side` in the moving-piston system:
    /// the end region plus the full-length tube walls. The piston is handled
    /// separately as a moving plane.
    pub fn walls(&self, side: u8) -> &[BoundaryPiece] {
        &self.walls[(side - 1) as usize]
    }

    fn wall_pieces(&self, side: u8) -> Vec<BoundaryPiece> {
        let mut pieces = self.end_pieces(side);
        if self.dim == 2 {
            let l = self.ell;
            pieces.push(BoundaryPiece::wall(seg(Vec3::planar(0.0, 0.0), Vec3::planar(1.0, 0.0))));
            pieces.push(BoundaryPiece::wall(seg(Vec3::planar(1.0, l), Vec3::planar(0.0, l))));
        } else {
            pieces.extend(self.tube_facets(0.0, 1.0));
        }
        pieces
    }

    /// Cap pieces, or the flat end wall when the cap is empty.
    fn end_pieces(&self, side: u8) -> Vec<BoundaryPiece> {
        let i = (side - 1) as usize;
        if !self.caps[i].is_empty() {
            return self.caps[i].clone();
        }
        let x = if side == 1 { 0.0 } else { 1.0 };
        if self.dim == 2 {
            let l = self.ell;
            let s = if side == 1 {
                seg(Vec3::planar(0.0, l), Vec3::planar(0.0, 0.0))
            } else {
                seg(Vec3::planar(1.0, 0.0), Vec3::planar(1.0, l))
            };
            vec![BoundaryPiece::wall(s)]
        } else {
            let inward = if side == 1 { Vec3::X } else { -Vec3::X };
            vec![BoundaryPiece::wall(Shape::Facet(self.cross_facet(x, inward)))]
        }
    }

    fn tube_facets(&self, x0: f64, x1: f64) -> Vec<BoundaryPiece> {
        let [a, b] = self.cross;
        let v = Vec3::new;
        [
            ([v(x0, 0.0, 0.0), v(x1, 0.0, 0.0), v(x1, 0.0, b), v(x0, 0.0, b)], Vec3::Y),
            ([v(x0, a, 0.0), v(x1, a, 0.0), v(x1, a, b), v(x0, a, b)], -Vec3::Y),
            ([v(x0, 0.0, 0.0), v(x1, 0.0, 0.0), v(x1, a, 0.0), v(x0, a, 0.0)], Vec3::Z),
            ([v(x0, 0.0, b), v(x1, 0.0, b), v(x1, a, b), v(x0, a, b)], -Vec3::Z),
        ]
        .into_iter()
        .map(|(c, n)| BoundaryPiece::wall(Shape::Facet(oriented_facet(c.to_vec(), n))))
        .collect()
    }

    /// Cross-section rectangle at `x` with the given inward normal.
    fn cross_facet(&self, x: f64, inward: Vec3) -> Facet {
        let [a, b] = self.cross;
        let v = Vec3::new;
        oriented_facet(vec![v(x, 0.0, 0.0), v(x, a, 0.0), v(x, a, b), v(x, 0.0, b)], inward)
    }

    fn validate_cap(&mut self, side: u8) -> Result<(), GeometryError> {
        let i = (side - 1) as usize;
        let cap = &self.caps[i];
        if cap.is_empty() {
            return Ok(());
        }
        let x_iface = if side == 1 { 0.0 } else { 1.0 };
        for p in cap {
            let (lo, hi) = p.bounding_box();
            let outside = if side == 1 { hi.x > x_iface + JOIN_TOL } else { lo.x < x_iface - JOIN_TOL };
            // spherical-cap boxes are conservative; check a sample of points instead
            let outside = outside
                && match &p.shape {
                    Shape::SphereCap(s) => {
                        let rim = s.rim();
                        let apex = s.center + s.axis * s.radius;
                        [rim.center, apex].iter().any(|q| {
                            if side == 1 {
                                q.x > x_iface + JOIN_TOL
                            } else {
                                q.x < x_iface - JOIN_TOL
                            }
                        })
                    }
                    _ => true,
                };
            if outside {
                return Err(GeometryError::NotWatertight(format!(
                    "side {side} cap must lie on the far side of x = {x_iface}"
                )));
            }
        }
        let interface = if self.dim == 2 {
            let l = self.ell;
            let (s, e) = if side == 1 {
                (Vec3::planar(0.0, l), Vec3::planar(0.0, 0.0))
            } else {
                (Vec3::planar(1.0, 0.0), Vec3::planar(1.0, l))
            };
            check_chain(cap, s, e)?;
            BoundaryPiece::wall(seg(e, s))
        } else {
            let inward = if side == 1 { -Vec3::X } else { Vec3::X };
            let face = self.cross_facet(x_iface, inward);
            check_surface(cap, &face)?;
            BoundaryPiece::wall(Shape::Facet(face))
        };
        let mut closed = cap.clone();
        closed.push(interface);
        let table = Table::new(self.dim, closed).map_err(|e| {
            GeometryError::NotWatertight(format!("side {side} cap does not close: {e}"))
        })?;
        self.cap_tables[i] = Some(table);
        Ok(())
    }

    /// Whether `p` lies in the tube `[0,1] × P`.
    pub fn in_tube(&self, p: Vec3) -> bool {
        let [a, b] = self.cross;
        (0.0..=1.0).contains(&p.x)
            && (0.0..=a).contains(&p.y)
            && (self.dim == 2 || (0.0..=b).contains(&p.z))
    }

    /// Membership in `𝒟ᵢ(Q)`.
    pub fn contains(&self, side: u8, q: f64, p: Vec3) -> bool {
        let i = (side - 1) as usize;
        let [a, b] = self.cross;
        let in_cross = p.y > 0.0 && p.y < a && (self.dim == 2 || (p.z > 0.0 && p.z < b));
        let (lo, hi) = if side == 1 { (0.0, q) } else { (q, 1.0) };
        if in_cross && p.x >= lo && p.x < hi {
            return true;
        }
        let beyond = if side == 1 { p.x < 0.0 } else { p.x > 1.0 };
        beyond && self.cap_tables[i].as_ref().is_some_and(|t| t.contains(p))
    }

    /// First hit on `∂𝒟ᵢ(Q)` (piston face included) from an interior point.
    pub fn first_hit(
        &self,
        side: u8,
        q: f64,
        origin: Vec3,
        direction: Vec3,
    ) -> Result<Hit, GeometryError> {
        self.table(side, q)?.first_hit(origin, direction, None)
    }

    /// First hit on the static walls of `side` only.
    pub fn first_wall_hit(
        &self,
        side: u8,
        origin: Vec3,
        direction: Vec3,
        from: Option<usize>,
    ) -> Option<Hit> {
        first_hit_among(self.walls(side), origin, direction, from)
    }
}

fn check_q(q: f64) -> Result<(), GeometryError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(GeometryError::PositionOutOfRange(q))
    }
}

fn seg(a: Vec3, b: Vec3) -> Shape {
    Shape::Segment(Segment::new(a, b).expect("non-degenerate segment"))
}

fn tube_segment(a: Vec3, b: Vec3) -> Option<BoundaryPiece> {
    ((b - a).norm() > 0.0).then(|| BoundaryPiece::wall(seg(a, b)))
}

fn oriented_facet(mut corners: Vec<Vec3>, inward: Vec3) -> Facet {
    if newell(&corners).dot(inward) < 0.0 {
        corners.reverse();
    }
    Facet::new(corners, vec![]).expect("valid rectangle")
}

fn vec_of(v: &[f64], dim: usize, index: usize, what: &str) -> Result<Vec3, GeometryError> {
    if v.len() != dim {
        return Err(GeometryError::InvalidPiece {
            index,
            reason: format!("{what} needs {dim} coordinates, got {}", v.len()),
        });
    }
    Vec3::from_slice(v).ok_or_else(|| GeometryError::InvalidPiece {
        index,
        reason: format!("bad {what}"),
    })
}

fn build_pieces(dim: usize, specs: &[PrimitiveSpec]) -> Result<Vec<BoundaryPiece>, GeometryError> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let bad = |reason: &str| GeometryError::InvalidPiece { index: i, reason: reason.into() };
            let shape = match s {
                PrimitiveSpec::Segment { from, to } => {
                    if dim != 2 {
                        return Err(bad("segments are planar primitives"));
                    }
                    let a = vec_of(from, 2, i, "from")?;
                    let b = vec_of(to, 2, i, "to")?;
                    Shape::Segment(Segment::new(a, b).ok_or_else(|| bad("endpoints coincide"))?)
                }
                PrimitiveSpec::Arc { center, radius, start_deg, end_deg } => {
                    if dim != 2 {
                        return Err(bad("arcs are planar primitives"));
                    }
                    let c = vec_of(center, 2, i, "center")?;
                    let start = start_deg.to_radians();
                    let sweep = (end_deg - start_deg).to_radians();
                    Shape::Arc(
                        Arc::new(c, *radius, start, sweep)
                            .ok_or_else(|| bad("arc needs radius > 0 and 0 < |sweep| <= 360"))?,
                    )
                }
                PrimitiveSpec::Facet { vertices, holes } => {
                    if dim != 3 {
                        return Err(bad("facets are spatial primitives"));
                    }
                    let vs = vertices
                        .iter()
                        .map(|v| vec_of(v, 3, i, "vertex"))
                        .collect::<Result<Vec<_>, _>>()?;
                    let hs = holes
                        .iter()
                        .map(|h| {
                            Ok(Hole { center: vec_of(&h.center, 3, i, "hole center")?, radius: h.radius })
                        })
                        .collect::<Result<Vec<_>, GeometryError>>()?;
                    Shape::Facet(Facet::new(vs, hs).map_err(|e| bad(&e))?)
                }
                PrimitiveSpec::SphereCap { center, radius, axis, rim_radius, inward } => {
                    if dim != 3 {
                        return Err(bad("sphere caps are spatial primitives"));
                    }
                    if !(*rim_radius > 0.0 && rim_radius < radius) {
                        return Err(bad("rim radius must be in (0, radius)"));
                    }
                    let c = vec_of(center, 3, i, "center")?;
                    let ax = vec_of(axis, 3, i, "axis")?;
                    let cos_min = (1.0 - (rim_radius / radius).powi(2)).sqrt();
                    Shape::SphereCap(
                        SphereCap::new(c, *radius, ax, cos_min, *inward)
                            .ok_or_else(|| bad("degenerate sphere cap"))?,
                    )
                }
            };
            Ok(BoundaryPiece::wall(shape))
        })
        .collect()
}

fn check_chain(cap: &[BoundaryPiece], start: Vec3, end: Vec3) -> Result<(), GeometryError> {
    let mut cursor = start;
    for (i, p) in cap.iter().enumerate() {
        let (a, b) = p.endpoints().expect("planar piece");
        if (a - cursor).norm() > JOIN_TOL {
            return Err(GeometryError::NotWatertight(format!(
                "piece {i} starts at ({:.12}, {:.12}) but the chain is at ({:.12}, {:.12})",
                a.x, a.y, cursor.x, cursor.y
            )));
        }
        cursor = b;
    }
    if (cursor - end).norm() > JOIN_TOL {
        return Err(GeometryError::NotWatertight(format!(
            "chain ends at ({:.12}, {:.12}), expected ({:.12}, {:.12})",
            cursor.x, cursor.y, end.x, end.y
        )));
    }
    Ok(())
}

/// Every directed facet edge must be matched by the reverse edge of another
/// facet (the interface face included); every hole must be closed by a
/// sphere cap rim; the vector area must vanish.
fn check_surface(cap: &[BoundaryPiece], interface: &Facet) -> Result<(), GeometryError> {
    let mut edges: Vec<(Vec3, Vec3)> = Vec::new();
    let mut holes: Vec<(Hole, Vec3)> = Vec::new();
    let mut rims: Vec<(Hole, Vec3)> = Vec::new();
    let mut area = Vec3::ZERO;
    let push_facet = |f: &Facet, edges: &mut Vec<(Vec3, Vec3)>, holes: &mut Vec<(Hole, Vec3)>| {
        let v = f.vertices();
        for k in 0..v.len() {
            edges.push((v[k], v[(k + 1) % v.len()]));
        }
        for h in f.holes() {
            holes.push((h.clone(), f.normal()));
        }
    };
    for p in cap {
        area += p.vector_area();
        match &p.shape {
            Shape::Facet(f) => push_facet(f, &mut edges, &mut holes),
            Shape::SphereCap(s) => rims.push((s.rim(), s.axis)),
            _ => unreachable!("planar piece in a spatial cap"),
        }
    }
    push_facet(interface, &mut edges, &mut holes);
    area += BoundaryPiece::wall(Shape::Facet(interface.clone())).vector_area();

    let same = |a: Vec3, b: Vec3| (a - b).norm() <= JOIN_TOL;
    for (k, &(a, b)) in edges.iter().enumerate() {
        let matched = edges.iter().enumerate().any(|(m, &(c, d))| m != k && same(a, d) && same(b, c));
        if !matched {
            return Err(GeometryError::NotWatertight(format!(
                "facet edge ({:.6},{:.6},{:.6})->({:.6},{:.6},{:.6}) has no matching reverse edge",
                a.x, a.y, a.z, b.x, b.y, b.z
            )));
        }
    }
    if holes.len() != rims.len() {
        return Err(GeometryError::NotWatertight(format!(
            "{} holes but {} sphere caps",
            holes.len(),
            rims.len()
        )));
    }
    for (h, n) in &holes {
        let matched = rims.iter().any(|(r, ax)| {
            same(r.center, h.center) && (r.radius - h.radius).abs() <= JOIN_TOL && ax.cross(*n).norm() <= 1e-9
        });
        if !matched {
            return Err(GeometryError::NotWatertight(
                "facet hole is not closed by a sphere cap rim".into(),
            ));
        }
    }
    if area.norm() > 1e-9 {
        return Err(GeometryError::NotWatertight(format!(
            "vector area does not vanish: |Σ n dA| = {:e}",
            area.norm()
        )));
    }
    Ok(())
}

/// Exact area of a half disk of radius `r`, used by tests and presets.
pub fn half_disk_area(r: f64) -> f64 {
    0.5 * PI * r * r
}
