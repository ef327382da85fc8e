use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::vector::Vec3;

fn unit_square() -> Container {
    Container::from_spec(&ContainerSpec::rectangle(1.0)).unwrap()
}

fn stadium() -> Container {
    Container::from_spec(&ContainerSpec::stadium(1.0)).unwrap()
}

#[test]
fn subdomain_measure_examples() {
    let sq = unit_square();
    assert_eq!(sq.subdomain_measure(1, 0.5).unwrap(), 0.5);
    let st = stadium();
    let m = st.subdomain_measure(1, 0.3).unwrap();
    assert!((m - (PI * 0.25 / 2.0 + 0.3)).abs() < 1e-15, "{m}");
    assert!((m - 0.692699).abs() < 1e-6);
    let cube = Container::from_spec(&ContainerSpec::cuboid(1.0, 1.0)).unwrap();
    assert_eq!(cube.subdomain_measure(2, 0.25).unwrap(), 0.75);
}

#[test]
fn measure_rejects_bad_position() {
    let sq = unit_square();
    assert_eq!(sq.subdomain_measure(1, 1.5), Err(GeometryError::PositionOutOfRange(1.5)));
    assert!(matches!(sq.subdomain_measure(3, 0.5), Err(GeometryError::InvalidSide(3))));
}

use crate::error::GeometryError;

#[test]
fn closed_form_measure_matches_table_green_sum() {
    for spec in [
        ContainerSpec::stadium(1.0),
        ContainerSpec::rectangle(0.7),
        ContainerSpec::cuboid(1.0, 0.5),
        ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6),
    ] {
        let c = Container::from_spec(&spec).unwrap();
        for q in [0.2, 0.5, 0.9] {
            for side in [1, 2] {
                let t = c.table(side, q).unwrap();
                let closed = c.subdomain_measure(side, q).unwrap();
                assert!((t.measure() - closed).abs() < 1e-12, "{spec:?} {side} {q}");
                let b = c.boundary_measure(side, q).unwrap();
                assert!((t.boundary_measure() - b).abs() < 1e-12);
                assert!((t.piston_measure() - c.piston_measure()).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn domed_box_volume_closed_form() {
    let (r, rim, depth) = (0.6f64, 0.45f64, 0.5);
    let c = Container::from_spec(&ContainerSpec::domed_box(1.0, 1.0, depth, rim, r)).unwrap();
    let h = r - (r * r - rim * rim).sqrt();
    let dome = PI * h * h * (3.0 * r - h) / 3.0;
    let expect = depth + dome + 0.5;
    let got = c.subdomain_measure(1, 0.5).unwrap();
    assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
}

#[test]
fn affine_measure_law() {
    let c = stadium();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ell = c.piston_measure();
    for _ in 0..100 {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        let d1 = c.subdomain_measure(1, b).unwrap() - c.subdomain_measure(1, a).unwrap();
        let d2 = c.subdomain_measure(2, b).unwrap() - c.subdomain_measure(2, a).unwrap();
        assert!((d1 - ell * (b - a)).abs() < 1e-12);
        assert!((d2 + ell * (b - a)).abs() < 1e-12);
    }
}

#[test]
fn first_hit_examples() {
    let sq = unit_square();
    let h = sq.first_hit(1, 1.0, Vec3::planar(0.5, 0.5), Vec3::planar(1.0, 0.0)).unwrap();
    assert!((h.time - 0.5).abs() < 1e-15);
    assert!((h.point - Vec3::planar(1.0, 0.5)).max_abs() < 1e-15);
    assert!((h.normal - Vec3::planar(-1.0, 0.0)).max_abs() < 1e-15);
    assert_eq!(h.singular, None);

    let d = Vec3::planar(1.0, 1.0).normalized();
    let h = sq.first_hit(1, 1.0, Vec3::planar(0.5, 0.5), d).unwrap();
    assert!((h.time - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    assert!((h.point - Vec3::planar(1.0, 1.0)).max_abs() < 1e-12);
    assert_eq!(h.singular, Some(Singularity::Corner));

    let st = stadium();
    let h = st.first_hit(1, 0.5, Vec3::planar(0.2, 0.5), Vec3::planar(-1.0, 0.0)).unwrap();
    assert!((h.time - 0.7).abs() < 1e-12);
    assert!((h.point - Vec3::planar(-0.5, 0.5)).max_abs() < 1e-12);
    // oracle: the hit point satisfies the circle equation
    let on_circle = (h.point - Vec3::planar(0.0, 0.5)).norm();
    assert!((on_circle - 0.5).abs() < 1e-12);
}

#[test]
fn first_hit_on_table_lands_on_the_surface() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for spec in [ContainerSpec::stadium(1.0), ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6)] {
        let c = Container::from_spec(&spec).unwrap();
        let t = c.table(1, 0.6).unwrap();
        for _ in 0..2000 {
            let p = t.sample_interior(&mut rng).unwrap();
            let d = random_dir(&mut rng, c.dimension());
            let h = t.first_hit(p, d, None).unwrap();
            let piece = t.piece(h.piece);
            assert!((piece.project(h.point) - h.point).norm() < 1e-12);
            let raw = p + d * h.time;
            assert!((raw - h.point).norm() < 1e-12);
            if h.singular.is_some() {
                continue;
            }
            // reflect and query again from the surface
            let v = specular_reflect(d, h.normal).unwrap();
            let probe = h.point + v * 1e-7;
            assert!(t.contains(probe), "reflected point left the domain");
            let h2 = t.first_hit(h.point, v, Some(h.piece)).unwrap();
            assert!(h2.time > 0.0);
        }
    }
}

fn random_dir<R: Rng>(rng: &mut R, dim: usize) -> Vec3 {
    if dim == 2 {
        let a = rng.random::<f64>() * 2.0 * PI;
        Vec3::planar(a.cos(), a.sin())
    } else {
        let z = 2.0 * rng.random::<f64>() - 1.0;
        let a = rng.random::<f64>() * 2.0 * PI;
        let s = (1.0 - z * z).sqrt();
        Vec3::new(s * a.cos(), s * a.sin(), z)
    }
}

#[test]
fn reflection_preserves_speed_and_flips_normal_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let n = random_dir(&mut rng, 3);
        let mut v = random_dir(&mut rng, 3) * (0.1 + 3.0 * rng.random::<f64>());
        if v.dot(n) > 0.0 {
            v = -v;
        }
        let w = specular_reflect(v, n).unwrap();
        assert!(((w.norm() - v.norm()) / v.norm()).abs() < 1e-15);
        assert!((w.dot(n) + v.dot(n)).abs() < 1e-14);
        assert!((w - v).cross(n).norm() < 1e-14);
    }
}

#[test]
fn monte_carlo_measure_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (spec, q) in [(ContainerSpec::stadium(1.0), 0.4), (ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6), 0.5)] {
        let c = Container::from_spec(&spec).unwrap();
        let t = c.table(1, q).unwrap();
        let (lo, hi) = t.bounding_box();
        let box_measure = if c.dimension() == 2 {
            (hi.x - lo.x) * (hi.y - lo.y)
        } else {
            (hi.x - lo.x) * (hi.y - lo.y) * (hi.z - lo.z)
        };
        let n = 1_000_000;
        let mut inside = 0usize;
        for _ in 0..n {
            let p = Vec3::new(
                lo.x + (hi.x - lo.x) * rng.random::<f64>(),
                lo.y + (hi.y - lo.y) * rng.random::<f64>(),
                if c.dimension() == 3 { lo.z + (hi.z - lo.z) * rng.random::<f64>() } else { 0.0 },
            );
            if c.contains(1, q, p) {
                inside += 1;
            }
        }
        let frac = inside as f64 / n as f64;
        let est = frac * box_measure;
        let se = (frac * (1.0 - frac) / n as f64).sqrt() * box_measure;
        let exact = c.subdomain_measure(1, q).unwrap();
        assert!((est - exact).abs() < 3.0 * se, "est {est} exact {exact} se {se}");
    }
}

#[test]
fn table_and_container_membership_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = stadium();
    let t = c.table(2, 0.35).unwrap();
    for _ in 0..20_000 {
        let p = Vec3::planar(-0.6 + 2.2 * rng.random::<f64>(), -0.1 + 1.2 * rng.random::<f64>());
        assert_eq!(t.contains(p), c.contains(2, 0.35, p), "{p:?}");
    }
}

#[test]
fn open_chain_is_rejected() {
    let mut spec = ContainerSpec::stadium(1.0);
    spec.left_cap = vec![PrimitiveSpec::Arc {
        center: vec![0.0, 0.5],
        radius: 0.5,
        start_deg: 90.0,
        end_deg: 260.0,
    }];
    assert!(matches!(Container::from_spec(&spec), Err(GeometryError::NotWatertight(_))));
}

#[test]
fn open_surface_is_rejected() {
    let mut spec = ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6);
    spec.left_cap.remove(2);
    assert!(matches!(Container::from_spec(&spec), Err(GeometryError::NotWatertight(_))));
    let mut spec = ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6);
    spec.right_cap.pop();
    assert!(matches!(Container::from_spec(&spec), Err(GeometryError::NotWatertight(_))));
}

#[test]
fn cap_on_wrong_side_is_rejected() {
    let mut spec = ContainerSpec::rectangle(1.0);
    spec.left_cap = vec![
        PrimitiveSpec::Segment { from: vec![0.0, 1.0], to: vec![0.2, 0.5] },
        PrimitiveSpec::Segment { from: vec![0.2, 0.5], to: vec![0.0, 0.0] },
    ];
    assert!(Container::from_spec(&spec).is_err());
}

#[test]
fn degenerate_subdomain_is_an_error() {
    let sq = unit_square();
    assert!(matches!(sq.table(1, 0.0), Err(GeometryError::DegenerateSubdomain { .. })));
}
