//! Container geometry: boundary primitives, closed billiard tables and the
//! piston container built from them.

mod container;
mod piece;
mod table;

pub use container::{
    half_disk_area, Container, ContainerSpec, HoleSpec, PrimitiveSpec, SubdomainView, TubeSpec,
};
pub use piece::{
    specular_reflect, Arc, BoundaryPiece, Facet, Grazing, Hole, Inward, PieceRole, Segment, Shape,
    SphereCap, CORNER_TOL, GRAZING_TOL,
};
pub use table::{first_hit_among, Hit, Singularity, Table};

#[cfg(test)]
mod tests;
