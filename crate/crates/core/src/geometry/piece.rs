//! Boundary primitives with closed-form ray intersection.
//!
//! Every piece carries its inward normal convention: planar pieces are
//! traversed counterclockwise around the domain (inward normal on the left),
//! facets list their vertices counterclockwise as seen from inside.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::vector::Vec3;

/// A hit closer than this (arc length or surface distance) to the edge of a
/// piece is a corner hit.
pub const CORNER_TOL: f64 = 1e-9;
/// A hit with `|cos φ|` below this is tangential.
pub const GRAZING_TOL: f64 = 1e-9;
/// Slack used when deciding whether an intersection point lies on a piece.
pub(crate) const ON_PIECE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceRole {
    Wall,
    Piston,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Inward {
    /// Inward normal points to the sphere or circle center (focusing).
    #[default]
    TowardCenter,
    /// Inward normal points away from the center (dispersing).
    AwayFromCenter,
}

/// Straight segment `a -> b` in the `z = 0` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub a: Vec3,
    pub b: Vec3,
    dir: Vec3,
    len: f64,
    normal: Vec3,
}

impl Segment {
    pub fn new(a: Vec3, b: Vec3) -> Option<Self> {
        let d = b - a;
        let len = d.norm();
        if !(len > 0.0) || a.z != 0.0 || b.z != 0.0 {
            return None;
        }
        let dir = d / len;
        Some(Segment { a, b, dir, len, normal: dir.perp() })
    }

    pub fn length(&self) -> f64 {
        self.len
    }

    pub fn direction(&self) -> Vec3 {
        self.dir
    }
}

/// Circular arc of `radius` around `center`, starting at angle `start` and
/// sweeping the signed angle `sweep` (positive: counterclockwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub center: Vec3,
    pub radius: f64,
    pub start: f64,
    pub sweep: f64,
}

impl Arc {
    pub fn new(center: Vec3, radius: f64, start: f64, sweep: f64) -> Option<Self> {
        if !(radius > 0.0) || sweep == 0.0 || sweep.abs() > TAU + 1e-12 || center.z != 0.0 {
            return None;
        }
        Some(Arc { center, radius, start, sweep })
    }

    pub fn point_at_angle(&self, theta: f64) -> Vec3 {
        self.center + Vec3::planar(theta.cos(), theta.sin()) * self.radius
    }

    pub fn start_point(&self) -> Vec3 {
        self.point_at_angle(self.start)
    }

    pub fn end_point(&self) -> Vec3 {
        self.point_at_angle(self.start + self.sweep)
    }

    pub fn length(&self) -> f64 {
        self.radius * self.sweep.abs()
    }

    /// Unsigned angle travelled from the start point to `p`, in `[0, 2π)`,
    /// with points just before the start mapped to small negative values.
    fn travelled(&self, p: Vec3) -> f64 {
        let d = p - self.center;
        let theta = d.y.atan2(d.x);
        let raw = if self.sweep > 0.0 { theta - self.start } else { self.start - theta };
        let mut a = raw.rem_euclid(TAU);
        let slack = ON_PIECE_SLACK / self.radius;
        if a > TAU - slack.max(1e-15) && a > self.sweep.abs() {
            a -= TAU;
        }
        a
    }

    fn contains_angle(&self, p: Vec3) -> bool {
        let a = self.travelled(p);
        let slack = ON_PIECE_SLACK / self.radius;
        a >= -slack && a <= self.sweep.abs() + slack
    }

    fn tangent_at(&self, p: Vec3) -> Vec3 {
        let u = (p - self.center) / self.radius;
        let t = u.perp();
        if self.sweep > 0.0 {
            t
        } else {
            -t
        }
    }
}

/// Convex planar polygon in 3D, optionally with circular holes that are
/// closed off by spherical caps.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    origin: Vec3,
    normal: Vec3,
    e1: Vec3,
    e2: Vec3,
    vertices: Vec<Vec3>,
    chart: Vec<[f64; 2]>,
    holes: Vec<Hole>,
    area: f64,
    tri_cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub center: Vec3,
    pub radius: f64,
}

impl Facet {
    /// Vertices are listed counterclockwise as seen from inside the domain,
    /// so the Newell normal is the inward normal.
    pub fn new(vertices: Vec<Vec3>, holes: Vec<Hole>) -> Result<Self, String> {
        if vertices.len() < 3 {
            return Err("facet needs at least 3 vertices".into());
        }
        let mut newell = Vec3::ZERO;
        for i in 0..vertices.len() {
            let a = vertices[i];
            let b = vertices[(i + 1) % vertices.len()];
            newell += a.cross(b);
        }
        let twice_area = newell.norm();
        if !(twice_area > 0.0) {
            return Err("facet has zero area".into());
        }
        let normal = newell / twice_area;
        let origin = vertices[0];
        for v in &vertices {
            if ((*v - origin).dot(normal)).abs() > 1e-10 {
                return Err("facet vertices are not coplanar".into());
            }
        }
        let e1 = (vertices[1] - origin).normalized();
        let e2 = normal.cross(e1);
        let chart: Vec<[f64; 2]> =
            vertices.iter().map(|v| [(*v - origin).dot(e1), (*v - origin).dot(e2)]).collect();
        let n = chart.len();
        for i in 0..n {
            let a = chart[i];
            let b = chart[(i + 1) % n];
            let c = chart[(i + 2) % n];
            let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
            if cross < -1e-12 {
                return Err("facet polygon must be convex".into());
            }
        }
        let mut tri_cdf = Vec::with_capacity(n - 2);
        let mut acc = 0.0;
        for i in 1..n - 1 {
            acc += tri_area(chart[0], chart[i], chart[i + 1]);
            tri_cdf.push(acc);
        }
        let poly_area = acc;
        let mut area = poly_area;
        for h in &holes {
            if !(h.radius > 0.0) {
                return Err("hole radius must be positive".into());
            }
            if ((h.center - origin).dot(normal)).abs() > 1e-10 {
                return Err("hole center is not in the facet plane".into());
            }
            area -= PI * h.radius * h.radius;
        }
        if !(area > 0.0) {
            return Err("holes cover the facet".into());
        }
        let facet = Facet { origin, normal, e1, e2, vertices, chart, holes, area, tri_cdf };
        for h in &facet.holes {
            let c = facet.to_chart(h.center);
            if facet.polygon_edge_distance(c) < h.radius - 1e-12 || !facet.in_polygon(c, 0.0) {
                return Err("hole must lie inside the facet polygon".into());
            }
        }
        Ok(facet)
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    fn to_chart(&self, p: Vec3) -> [f64; 2] {
        let d = p - self.origin;
        [d.dot(self.e1), d.dot(self.e2)]
    }

    fn from_chart(&self, c: [f64; 2]) -> Vec3 {
        self.origin + self.e1 * c[0] + self.e2 * c[1]
    }

    fn in_polygon(&self, c: [f64; 2], slack: f64) -> bool {
        let n = self.chart.len();
        (0..n).all(|i| {
            let a = self.chart[i];
            let b = self.chart[(i + 1) % n];
            let ex = b[0] - a[0];
            let ey = b[1] - a[1];
            let len = (ex * ex + ey * ey).sqrt();
            (ex * (c[1] - a[1]) - ey * (c[0] - a[0])) / len >= -slack
        })
    }

    fn polygon_edge_distance(&self, c: [f64; 2]) -> f64 {
        let n = self.chart.len();
        (0..n)
            .map(|i| point_segment_distance(c, self.chart[i], self.chart[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    fn contains_point(&self, p: Vec3) -> bool {
        let c = self.to_chart(p);
        if !self.in_polygon(c, ON_PIECE_SLACK) {
            return false;
        }
        self.holes.iter().all(|h| {
            let hc = self.to_chart(h.center);
            ((c[0] - hc[0]).powi(2) + (c[1] - hc[1]).powi(2)).sqrt() >= h.radius - ON_PIECE_SLACK
        })
    }

    fn edge_distance(&self, p: Vec3) -> f64 {
        let c = self.to_chart(p);
        let mut d = self.polygon_edge_distance(c);
        for h in &self.holes {
            let hc = self.to_chart(h.center);
            let r = ((c[0] - hc[0]).powi(2) + (c[1] - hc[1]).powi(2)).sqrt();
            d = d.min((r - h.radius).abs());
        }
        d
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let total = *self.tri_cdf.last().unwrap();
        loop {
            let u = rng.random::<f64>() * total;
            let k = self.tri_cdf.iter().position(|&c| u <= c).unwrap_or(self.tri_cdf.len() - 1);
            let (a, b, c) = (self.chart[0], self.chart[k + 1], self.chart[k + 2]);
            let (mut s, mut t) = (rng.random::<f64>(), rng.random::<f64>());
            if s + t > 1.0 {
                s = 1.0 - s;
                t = 1.0 - t;
            }
            let q = [
                a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
                a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
            ];
            let p = self.from_chart(q);
            let in_hole = self.holes.iter().any(|h| (p - h.center).norm() < h.radius);
            if !in_hole {
                return p;
            }
        }
    }
}

/// Spherical patch `{center + radius·u : u·axis ≥ cos_min}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereCap {
    pub center: Vec3,
    pub radius: f64,
    pub axis: Vec3,
    pub cos_min: f64,
    pub inward: Inward,
}

impl SphereCap {
    pub fn new(center: Vec3, radius: f64, axis: Vec3, cos_min: f64, inward: Inward) -> Option<Self> {
        if !(radius > 0.0) || !(cos_min > -1.0 && cos_min < 1.0) || axis.norm() == 0.0 {
            return None;
        }
        Some(SphereCap { center, radius, axis: axis.normalized(), cos_min, inward })
    }

    pub fn area(&self) -> f64 {
        TAU * self.radius * self.radius * (1.0 - self.cos_min)
    }

    pub fn rim(&self) -> Hole {
        Hole {
            center: self.center + self.axis * (self.radius * self.cos_min),
            radius: self.radius * (1.0 - self.cos_min * self.cos_min).sqrt(),
        }
    }

    fn sign(&self) -> f64 {
        match self.inward {
            Inward::TowardCenter => 1.0,
            Inward::AwayFromCenter => -1.0,
        }
    }

    fn contains_point(&self, p: Vec3) -> bool {
        let u = (p - self.center) / self.radius;
        u.dot(self.axis) >= self.cos_min - ON_PIECE_SLACK / self.radius
    }

    fn edge_distance(&self, p: Vec3) -> f64 {
        let u = ((p - self.center) / self.radius).normalized();
        let theta = u.dot(self.axis).clamp(-1.0, 1.0).acos();
        (self.cos_min.acos() - theta).abs() * self.radius
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        let c = self.cos_min + (1.0 - self.cos_min) * rng.random::<f64>();
        let s = (1.0 - c * c).max(0.0).sqrt();
        let psi = TAU * rng.random::<f64>();
        let b1 = self.axis.any_orthogonal();
        let b2 = self.axis.cross(b1);
        let u = self.axis * c + (b1 * psi.cos() + b2 * psi.sin()) * s;
        self.center + u * self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Segment(Segment),
    Arc(Arc),
    Facet(Facet),
    SphereCap(SphereCap),
}

/// One smooth piece of a billiard boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPiece {
    pub shape: Shape,
    pub role: PieceRole,
}

impl BoundaryPiece {
    pub fn wall(shape: Shape) -> Self {
        BoundaryPiece { shape, role: PieceRole::Wall }
    }

    pub fn piston(shape: Shape) -> Self {
        BoundaryPiece { shape, role: PieceRole::Piston }
    }

    pub fn is_piston(&self) -> bool {
        self.role == PieceRole::Piston
    }

    /// Length (planar pieces) or area (surface pieces).
    pub fn measure(&self) -> f64 {
        match &self.shape {
            Shape::Segment(s) => s.len,
            Shape::Arc(a) => a.length(),
            Shape::Facet(f) => f.area,
            Shape::SphereCap(c) => c.area(),
        }
    }

    pub fn is_planar_curve(&self) -> bool {
        matches!(self.shape, Shape::Segment(_) | Shape::Arc(_))
    }

    /// Intersections of the ray `o + t d` (`d` unit) with this piece, `t > min_t`.
    ///
    /// With `from_here`, `o` lies on this piece and the trivial root at
    /// `t = 0` is dropped.
    pub fn ray_hits(&self, o: Vec3, d: Vec3, from_here: bool, min_t: f64) -> ([f64; 2], usize) {
        let mut out = [f64::INFINITY; 2];
        let mut n = 0;
        let mut push = |t: f64, ok: bool| {
            if ok && t > min_t && n < 2 {
                out[n] = t;
                n += 1;
            }
        };
        match &self.shape {
            Shape::Segment(s) => {
                if from_here {
                    return (out, 0);
                }
                let denom = d.dot(s.normal);
                if denom != 0.0 {
                    let t = (s.a - o).dot(s.normal) / denom;
                    let p = o + d * t;
                    let u = (p - s.a).dot(s.dir);
                    push(t, u >= -ON_PIECE_SLACK && u <= s.len + ON_PIECE_SLACK);
                }
            }
            Shape::Facet(f) => {
                if from_here {
                    return (out, 0);
                }
                let denom = d.dot(f.normal);
                if denom != 0.0 {
                    let t = (f.origin - o).dot(f.normal) / denom;
                    let p = o + d * t;
                    push(t, f.contains_point(p));
                }
            }
            Shape::Arc(a) => {
                for t in sphere_roots(o, d, a.center, a.radius, from_here) {
                    let p = o + d * t;
                    push(t, a.contains_angle(p));
                }
            }
            Shape::SphereCap(c) => {
                for t in sphere_roots(o, d, c.center, c.radius, from_here) {
                    let p = o + d * t;
                    push(t, c.contains_point(p));
                }
            }
        }
        if n == 2 && out[1] < out[0] {
            out.swap(0, 1);
        }
        (out, n)
    }

    /// Inward unit normal at a point of the piece.
    pub fn normal_at(&self, p: Vec3) -> Vec3 {
        match &self.shape {
            Shape::Segment(s) => s.normal,
            Shape::Arc(a) => a.tangent_at(p).perp(),
            Shape::Facet(f) => f.normal,
            Shape::SphereCap(c) => ((c.center - p) / c.radius).normalized() * c.sign(),
        }
    }

    /// Unit tangent along the traversal direction (planar pieces only).
    pub fn tangent_at(&self, p: Vec3) -> Vec3 {
        match &self.shape {
            Shape::Segment(s) => s.dir,
            Shape::Arc(a) => a.tangent_at(p),
            _ => self.normal_at(p).any_orthogonal(),
        }
    }

    /// Distance from `p` (on the piece) to the piece's edge, measured along the piece.
    pub fn edge_distance(&self, p: Vec3) -> f64 {
        match &self.shape {
            Shape::Segment(_) | Shape::Arc(_) => {
                let s = self.arc_length(p);
                s.min(self.measure() - s)
            }
            Shape::Facet(f) => f.edge_distance(p),
            Shape::SphereCap(c) => c.edge_distance(p),
        }
    }

    /// Arc-length coordinate of `p` from the start of a planar piece.
    pub fn arc_length(&self, p: Vec3) -> f64 {
        match &self.shape {
            Shape::Segment(s) => (p - s.a).dot(s.dir),
            Shape::Arc(a) => a.travelled(p) * a.radius,
            _ => f64::NAN,
        }
    }

    /// Point at arc length `s` along a planar piece.
    pub fn point_at(&self, s: f64) -> Vec3 {
        match &self.shape {
            Shape::Segment(seg) => seg.a + seg.dir * s,
            Shape::Arc(a) => {
                let theta = a.start + a.sweep.signum() * s / a.radius;
                a.point_at_angle(theta)
            }
            _ => panic!("point_at is only defined for planar pieces"),
        }
    }

    /// Moves a point lying near the piece back onto it.
    pub fn project(&self, p: Vec3) -> Vec3 {
        match &self.shape {
            Shape::Segment(_) | Shape::Arc(_) => self.point_at(self.arc_length(p)),
            Shape::Facet(f) => p - f.normal * (p - f.origin).dot(f.normal),
            Shape::SphereCap(c) => c.center + (p - c.center).normalized() * c.radius,
        }
    }

    /// Uniform sample with respect to length or area.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match &self.shape {
            Shape::Segment(_) | Shape::Arc(_) => self.point_at(rng.random::<f64>() * self.measure()),
            Shape::Facet(f) => f.sample(rng),
            Shape::SphereCap(c) => c.sample(rng),
        }
    }

    /// Contribution of this piece to the enclosed measure: `½∮(x dy − y dx)`
    /// for curves, `⅓∮ x·n_out dA` for surfaces.
    pub fn enclosed_measure_term(&self) -> f64 {
        match &self.shape {
            Shape::Segment(s) => 0.5 * (s.a.x * s.b.y - s.b.x * s.a.y),
            Shape::Arc(a) => {
                let (t0, t1) = (a.start, a.start + a.sweep);
                let r = a.radius;
                let c = a.center;
                0.5 * (r * (c.x * (t1.sin() - t0.sin()) - c.y * (t1.cos() - t0.cos()))
                    + r * r * (t1 - t0))
            }
            Shape::Facet(f) => -(f.origin.dot(f.normal)) * f.area / 3.0,
            Shape::SphereCap(c) => {
                let r = c.radius;
                let integral = r
                    * r
                    * (PI * (1.0 - c.cos_min * c.cos_min) * c.center.dot(c.axis)
                        + TAU * r * (1.0 - c.cos_min));
                c.sign() * integral / 3.0
            }
        }
    }

    /// `∮ n_out dA` over the piece; sums to zero over a closed surface.
    pub fn vector_area(&self) -> Vec3 {
        match &self.shape {
            Shape::Facet(f) => -f.normal * f.area,
            Shape::SphereCap(c) => {
                c.axis * (c.sign() * c.radius * c.radius * PI * (1.0 - c.cos_min * c.cos_min))
            }
            Shape::Segment(s) => -s.normal * s.len,
            Shape::Arc(a) => {
                // ∫ n_out ds for the arc; the outward normal is -inward.
                let (t0, t1) = (a.start, a.start + a.sweep);
                let chord = Vec3::planar(t1.sin() - t0.sin(), -(t1.cos() - t0.cos())) * a.radius;
                chord
            }
        }
    }

    /// Axis-aligned bounding box (conservative for spherical caps).
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        let mut add = |p: Vec3| {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        };
        match &self.shape {
            Shape::Segment(s) => {
                add(s.a);
                add(s.b);
            }
            Shape::Arc(a) => {
                add(a.start_point());
                add(a.end_point());
                for k in 0..4 {
                    let theta = k as f64 * PI / 2.0;
                    let p = a.point_at_angle(theta);
                    if a.contains_angle(p) {
                        add(p);
                    }
                }
            }
            Shape::Facet(f) => f.vertices.iter().for_each(|v| add(*v)),
            Shape::SphereCap(c) => {
                add(c.center - Vec3::new(c.radius, c.radius, c.radius));
                add(c.center + Vec3::new(c.radius, c.radius, c.radius));
            }
        }
        (lo, hi)
    }

    /// Start and end points of a planar piece in traversal order.
    pub fn endpoints(&self) -> Option<(Vec3, Vec3)> {
        match &self.shape {
            Shape::Segment(s) => Some((s.a, s.b)),
            Shape::Arc(a) => Some((a.start_point(), a.end_point())),
            _ => None,
        }
    }
}

fn sphere_roots(o: Vec3, d: Vec3, c: Vec3, r: f64, from_here: bool) -> impl Iterator<Item = f64> {
    let oc = o - c;
    let b = d.dot(oc);
    let mut roots = [f64::NAN; 2];
    if from_here {
        // o lies on the sphere: the other root is -2b.
        roots[0] = -2.0 * b;
    } else {
        let cc = oc.norm_sq() - r * r;
        let disc = b * b - cc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            // Numerically stable pair of roots.
            let q = if b > 0.0 { -b - sq } else { -b + sq };
            roots[0] = q;
            roots[1] = if q != 0.0 { cc / q } else { -b };
            if roots[1].is_nan() {
                roots[1] = -b - sq;
            }
        }
    }
    roots.into_iter().filter(|t| t.is_finite())
}

fn tri_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

/// Specular reflection `v' = v − 2(v·n)n`.
///
/// Returns `Err(Grazing)` when the hit is tangential, `|v·n| < GRAZING_TOL·|v|`.
pub fn specular_reflect(velocity: Vec3, normal: Vec3) -> Result<Vec3, Grazing> {
    let vn = velocity.dot(normal);
    let reflected = velocity - normal * (2.0 * vn);
    if vn.abs() < GRAZING_TOL * velocity.norm() {
        return Err(Grazing { reflected });
    }
    Ok(reflected)
}

/// Tangential wall hit; carries the reflected velocity anyway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grazing {
    pub reflected: Vec3,
}
