//! Monte Carlo checks of the billiard identities and numeric diagnostics.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{tangent_frame, CrossSectionPoint, FrozenBilliard, DEFAULT_RETURN_CAP};
use crate::error::DynamicsError;
use crate::rng::{par_blocks, stream_rng};
use crate::stats::{self, CheckRecord, Welford};

fn merged(parts: impl IntoIterator<Item = Welford>) -> Welford {
    parts.into_iter().fold(Welford::default(), |mut acc, w| {
        acc.merge(&w);
        acc
    })
}

/// Mean free flight `E_ν[ζ]` over `n` i.i.d. `ν` samples, with singular
/// samples discarded and counted.
fn nu_flight(b: &FrozenBilliard, n: usize, seed: u64) -> (Welford, usize) {
    let parts = par_blocks(n, seed, |rng, count| {
        let mut w = Welford::default();
        let mut excluded = 0;
        for _ in 0..count {
            match b.collision_map(&b.sample_nu(rng)) {
                Ok((_, zeta)) => w.push(zeta),
                Err(_) => excluded += 1,
            }
        }
        (w, excluded)
    });
    let excluded = parts.iter().map(|p| p.1).sum();
    (merged(parts.into_iter().map(|p| p.0)), excluded)
}

/// Empirical `E_ν[ζ]` against the Santaló mean free flight.
pub fn santalo_check(b: &FrozenBilliard, n: usize, seed: u64) -> CheckRecord {
    let (w, excluded) = nu_flight(b, n, seed);
    CheckRecord::new("santalo", b.santalo_target(), w.mean(), w.stderr()).with_excluded(excluded)
}

/// Return-time, flight-time and momentum identities for the induced map,
/// from `n` samples of `ν̂`.
///
/// Records: `kac_return` (`E[R]` against `1/ν(Ω̂)`), `kac_flight`
/// (`E[ζ̂]·ν(Ω̂)` against an independent estimate of `E_ν[ζ]`),
/// `kac_flight_closed_form` (same against the Santaló value) and
/// `momentum` (`E[|v⊥|]/|v|` at the returning collision).
pub fn kac_checks(b: &FrozenBilliard, n: usize, seed: u64) -> Vec<CheckRecord> {
    let parts = par_blocks(n, seed, |rng, count| {
        let (mut r, mut f, mut m) = (Welford::default(), Welford::default(), Welford::default());
        let mut excluded = 0;
        for _ in 0..count {
            let x = b.sample_nu_hat(rng);
            match b.induce_on_piston(&x, DEFAULT_RETURN_CAP) {
                Ok(y) => {
                    r.push(y.returns as f64);
                    f.push(y.flight);
                    m.push(b.cos_phi(&y.point).abs());
                }
                Err(_) => excluded += 1,
            }
        }
        (r, f, m, excluded)
    });
    let excluded: usize = parts.iter().map(|p| p.3).sum();
    let r = merged(parts.iter().map(|p| p.0));
    let f = merged(parts.iter().map(|p| p.1));
    let m = merged(parts.iter().map(|p| p.2));
    let nu_hat = b.piston_fraction();
    let (zeta, zeta_excl) = nu_flight(b, n, seed ^ 0x5eed_f00d);
    let flight = f.mean() * nu_hat;
    let flight_se = f.stderr() * nu_hat;
    let combined = (flight_se.powi(2) + zeta.stderr().powi(2)).sqrt();
    vec![
        CheckRecord::new("kac_return", 1.0 / nu_hat, r.mean(), r.stderr()).with_excluded(excluded),
        CheckRecord::new("kac_flight", zeta.mean(), flight, combined)
            .with_excluded(excluded + zeta_excl),
        CheckRecord::new("kac_flight_closed_form", b.santalo_target(), flight, flight_se)
            .with_excluded(excluded),
        CheckRecord::new("momentum", b.momentum_factor(), m.mean(), m.stderr()).with_excluded(excluded),
    ]
}

/// Time average of `|v⊥|` over piston collisions along one flow orbit of
/// length `horizon`, started from `μ`. Orbits that hit a singular point are
/// restarted from a fresh `μ` sample without resetting the clock.
///
/// Returns the rate and the number of restarts.
pub fn momentum_flux_average<R: Rng + ?Sized>(
    b: &FrozenBilliard,
    horizon: f64,
    rng: &mut R,
) -> Result<(f64, usize), DynamicsError> {
    let mut restarts = 0;
    let mut elapsed = 0.0;
    let mut transfer = 0.0;
    let mut state: Option<CrossSectionPoint> = None;
    while elapsed < horizon {
        let step = match state {
            Some(x) => b.collision_map(&x),
            None => {
                let (q, v) = b.sample_mu(rng)?;
                b.first_collision(q, v)
            }
        };
        match step {
            Ok((y, zeta)) => {
                elapsed += zeta;
                if elapsed <= horizon && b.is_piston(&y) {
                    transfer += b.speed() * b.cos_phi(&y).abs();
                }
                state = Some(y);
            }
            Err(DynamicsError::Singular { .. }) => {
                restarts += 1;
                state = None;
                if restarts > 1000 {
                    return Err(DynamicsError::Singular {
                        time: elapsed,
                        reason: "too many singular restarts".into(),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((transfer / horizon, restarts))
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxReport {
    pub target: f64,
    pub median: f64,
    pub relative_error: f64,
    pub horizon: f64,
    pub orbits: Vec<f64>,
    pub restarts: usize,
}

/// Median of [`momentum_flux_average`] over independent orbits.
pub fn momentum_flux_median(
    b: &FrozenBilliard,
    horizon: f64,
    orbits: usize,
    seed: u64,
) -> Result<FluxReport, DynamicsError> {
    let runs: Result<Vec<(f64, usize)>, DynamicsError> = (0..orbits)
        .into_par_iter()
        .map(|k| momentum_flux_average(b, horizon, &mut stream_rng(seed, k as u64)))
        .collect();
    let runs = runs?;
    let rates: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let median = stats::median(&rates);
    let target = b.pressure_target();
    Ok(FluxReport {
        target,
        median,
        relative_error: (median - target).abs() / target,
        horizon,
        orbits: rates,
        restarts: runs.iter().map(|r| r.1).sum(),
    })
}

/// Samples of the collision-map derivative closer than this (in boundary
/// distance) to a singularity are skipped.
const DF_MARGIN: f64 = 1e-5;

/// Central finite-difference Jacobian of the collision map at `x`.
///
/// Planar tables use `(r, φ)`. Spatial tables use the footpoint offset and
/// the tangential part of the direction, both in an orthonormal tangent
/// frame at `x` (inputs) and at `F(x)` (outputs). Returns `None` when a
/// perturbed orbit lands on a different piece or hits a singularity.
pub fn jacobian(b: &FrozenBilliard, x: &CrossSectionPoint, h: f64) -> Option<Vec<Vec<f64>>> {
    let (fx, _) = b.collision_map(x).ok()?;
    let planar = b.dimension() == 2;
    let k = if planar { 2 } else { 4 };
    let table = b.table();
    let total = table.boundary_measure();
    let n0 = b.normal(x);
    let (e1, e2) = tangent_frame(n0);
    let nf = b.normal(&fx);
    let (f1, f2) = tangent_frame(nf);
    let base = if planar { b.coords(x) } else { (0.0, 0.0) };
    let out_base = if planar { b.coords(&fx) } else { (0.0, 0.0) };

    let perturbed = |axis: usize, s: f64| -> Option<CrossSectionPoint> {
        if planar {
            let (r, phi) = base;
            let y = if axis == 0 { b.from_coords(r + s, phi) } else { b.from_coords(r, phi + s) };
            (y.piece == x.piece).then_some(y)
        } else {
            let piece = table.piece(x.piece);
            let mut y = *x;
            match axis {
                0 | 1 => {
                    let e = if axis == 0 { e1 } else { e2 };
                    y.point = piece.project(x.point + e * s);
                }
                _ => {
                    let mut t = [x.direction.dot(e1), x.direction.dot(e2)];
                    t[axis - 2] += s;
                    let tn2 = 1.0 - t[0] * t[0] - t[1] * t[1];
                    if tn2 <= 0.0 {
                        return None;
                    }
                    y.direction = (n0 * tn2.sqrt() + e1 * t[0] + e2 * t[1]).normalized();
                }
            }
            Some(y)
        }
    };
    let out_coords = |y: &CrossSectionPoint| -> Vec<f64> {
        if planar {
            let (r, phi) = b.coords(y);
            let mut dr = (r - out_base.0).rem_euclid(total);
            if dr > total / 2.0 {
                dr -= total;
            }
            vec![dr, phi - out_base.1]
        } else {
            let dp = y.point - fx.point;
            vec![dp.dot(f1), dp.dot(f2), y.direction.dot(f1), y.direction.dot(f2)]
        }
    };

    let mut jac = vec![vec![0.0; k]; k];
    for axis in 0..k {
        let plus = b.collision_map(&perturbed(axis, h)?).ok()?.0;
        let minus = b.collision_map(&perturbed(axis, -h)?).ok()?.0;
        if plus.piece != fx.piece || minus.piece != fx.piece {
            return None;
        }
        let (a, c) = (out_coords(&plus), out_coords(&minus));
        for row in 0..k {
            jac[row][axis] = (a[row] - c[row]) / (2.0 * h);
        }
    }
    Some(jac)
}

/// Largest singular value by power iteration on `JᵀJ`.
pub fn spectral_norm(j: &[Vec<f64>]) -> f64 {
    let k = j.len();
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut sigma2 = 0.0;
    for _ in 0..200 {
        let jv: Vec<f64> = (0..k).map(|r| (0..k).map(|c| j[r][c] * v[c]).sum()).collect();
        let jtjv: Vec<f64> = (0..k).map(|c| (0..k).map(|r| j[r][c] * jv[r]).sum()).collect();
        let norm = jtjv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = jtjv.iter().map(|x| x / norm).collect();
        let converged = (norm - sigma2).abs() <= 1e-14 * norm;
        sigma2 = norm;
        v = next;
        if converged {
            break;
        }
    }
    sigma2.sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct DfReport {
    pub evaluated: usize,
    pub skipped: usize,
    pub max: f64,
    pub median: f64,
    pub p99: f64,
}

/// Distribution of `‖DF(x)‖·cos φ(Fx)` over `ν` samples.
pub fn df_norm_diagnostic(b: &FrozenBilliard, n: usize, seed: u64) -> DfReport {
    const STEP: f64 = 1e-7;
    let min_cos = (1e-3f64).sin();
    let parts = par_blocks(n, seed, |rng, count| {
        let mut vals = Vec::with_capacity(count);
        let mut skipped = 0;
        for _ in 0..count {
            let x = b.sample_nu(rng);
            let value = (|| {
                if b.boundary_distance(&x) < DF_MARGIN {
                    return None;
                }
                let (fx, _) = b.collision_map(&x).ok()?;
                let c = b.cos_phi(&fx);
                if c < min_cos || b.table().piece(fx.piece).edge_distance(fx.point) < DF_MARGIN {
                    return None;
                }
                Some(spectral_norm(&jacobian(b, &x, STEP)?) * c)
            })();
            match value {
                Some(v) => vals.push(v),
                None => skipped += 1,
            }
        }
        (vals, skipped)
    });
    let skipped = parts.iter().map(|p| p.1).sum();
    let vals: Vec<f64> = parts.into_iter().flat_map(|p| p.0).collect();
    DfReport {
        evaluated: vals.len(),
        skipped,
        max: vals.iter().copied().fold(0.0, f64::max),
        median: stats::median(&vals),
        p99: stats::quantile(&vals, 0.99),
    }
}

/// Whether `x` or its image lies within `gamma` of the singular set.
pub fn in_neighborhood(b: &FrozenBilliard, x: &CrossSectionPoint, gamma: f64) -> bool {
    if b.boundary_distance(x) < gamma {
        return true;
    }
    match b.collision_map(x) {
        Ok((fx, _)) => b.boundary_distance(&fx) < gamma,
        Err(_) => true,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodEstimate {
    pub gamma: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// `ν`-measure of the points within `gamma` of the singular set, before
/// or after one collision.
pub fn singularity_neighborhood_measure(
    b: &FrozenBilliard,
    gamma: f64,
    n: usize,
    seed: u64,
) -> NeighborhoodEstimate {
    let hits: usize = par_blocks(n, seed, |rng, count| {
        (0..count).filter(|_| in_neighborhood(b, &b.sample_nu(rng), gamma)).count()
    })
    .into_iter()
    .sum();
    let p = hits as f64 / n as f64;
    NeighborhoodEstimate { gamma, estimate: p, stderr: (p * (1.0 - p) / n as f64).sqrt(), samples: n }
}

/// Kolmogorov–Smirnov distances of the pushed-forward coordinates from
/// their invariant laws.
#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    pub map: String,
    /// Footpoint marginal; for spatial tables away from the piston this is
    /// the discrete distance between piece frequencies and piece areas.
    pub footpoint: f64,
    /// `sin φ` (planar) or `cos²φ` (spatial).
    pub angle: f64,
    /// Azimuth of the tangential direction (spatial only).
    pub azimuth: Option<f64>,
    pub samples: usize,
    pub excluded: usize,
}

impl KsReport {
    pub fn max(&self) -> f64 {
        self.footpoint.max(self.angle).max(self.azimuth.unwrap_or(0.0))
    }
}

struct Pushed {
    foot: Vec<f64>,
    foot2: Vec<f64>,
    angle: Vec<f64>,
    azimuth: Vec<f64>,
    pieces: Vec<usize>,
}

fn angle_coords(b: &FrozenBilliard, y: &CrossSectionPoint) -> (f64, f64) {
    let n = b.normal(y);
    if b.dimension() == 2 {
        let (_, phi) = b.coords(y);
        ((phi.sin() + 1.0) / 2.0, 0.0)
    } else {
        let c = y.direction.dot(n);
        let (e1, e2) = tangent_frame(n);
        let psi = y.direction.dot(e2).atan2(y.direction.dot(e1));
        (c * c, (psi / std::f64::consts::TAU).rem_euclid(1.0))
    }
}

/// Pushes `n` samples of `ν` through `F` (`induced = false`) or of `ν̂`
/// through `F̂` (`induced = true`) and compares the image with the law.
pub fn invariance_ks(b: &FrozenBilliard, n: usize, seed: u64, induced: bool) -> KsReport {
    let table = b.table();
    let total = table.boundary_measure();
    let parts = par_blocks(n, seed, |rng, count| {
        let mut out =
            Pushed { foot: vec![], foot2: vec![], angle: vec![], azimuth: vec![], pieces: vec![] };
        let mut excluded = 0;
        for _ in 0..count {
            let image = if induced {
                b.induce_on_piston(&b.sample_nu_hat(rng), DEFAULT_RETURN_CAP).map(|y| y.point)
            } else {
                b.collision_map(&b.sample_nu(rng)).map(|y| y.0)
            };
            let Ok(y) = image else {
                excluded += 1;
                continue;
            };
            let (a, psi) = angle_coords(b, &y);
            out.angle.push(a);
            out.azimuth.push(psi);
            if induced {
                let (lo, hi) = table.piece(y.piece).bounding_box();
                out.foot.push((y.point.y - lo.y) / (hi.y - lo.y));
                if b.dimension() == 3 {
                    out.foot2.push((y.point.z - lo.z) / (hi.z - lo.z));
                }
            } else if b.dimension() == 2 {
                out.foot.push(table.arc_coordinate(y.piece, y.point) / total);
            } else {
                out.pieces.push(y.piece);
            }
        }
        (out, excluded)
    });
    let excluded = parts.iter().map(|p| p.1).sum();
    let mut all = Pushed { foot: vec![], foot2: vec![], angle: vec![], azimuth: vec![], pieces: vec![] };
    for (p, _) in parts {
        all.foot.extend(p.foot);
        all.foot2.extend(p.foot2);
        all.angle.extend(p.angle);
        all.azimuth.extend(p.azimuth);
        all.pieces.extend(p.pieces);
    }
    let samples = all.angle.len();
    let mut footpoint = if all.foot.is_empty() { 0.0 } else { stats::ks_uniform(&all.foot, 0.0, 1.0) };
    if !all.foot2.is_empty() {
        footpoint = footpoint.max(stats::ks_uniform(&all.foot2, 0.0, 1.0));
    }
    if !all.pieces.is_empty() {
        let k = table.pieces().len();
        let mut counts = vec![0usize; k];
        all.pieces.iter().for_each(|&i| counts[i] += 1);
        let (mut emp, mut d) = (0.0, 0.0f64);
        for (i, c) in counts.iter().enumerate() {
            emp += *c as f64 / samples as f64;
            let law = (table.piece_offset(i) + table.piece(i).measure()) / total;
            d = d.max((emp - law).abs());
        }
        footpoint = d;
    }
    KsReport {
        map: if induced { "induced".into() } else { "collision".into() },
        footpoint,
        angle: stats::ks_uniform(&all.angle, 0.0, 1.0),
        azimuth: (b.dimension() == 3).then(|| stats::ks_uniform(&all.azimuth, 0.0, 1.0)),
        samples,
        excluded,
    }
}

/// Largest error of `F∘ℐ∘F∘ℐ = id` over `n` regular `ν` samples (both the
/// sample and its images at least `1e-3` from the singular set).
pub fn involution_check(b: &FrozenBilliard, n: usize, seed: u64) -> CheckRecord {
    const REGULAR: f64 = 1e-3;
    let parts = par_blocks(n, seed, |rng, count| {
        let (mut worst, mut evaluated) = (0.0f64, 0usize);
        while evaluated < count {
            let x = b.sample_nu(rng);
            let err = (|| {
                if b.boundary_distance(&x) < REGULAR {
                    return None;
                }
                let (y, _) = b.collision_map(&b.involution(&x)).ok()?;
                if b.boundary_distance(&y) < REGULAR {
                    return None;
                }
                let (z, _) = b.collision_map(&b.involution(&y)).ok()?;
                Some((z.point - x.point).norm() + (z.direction - x.direction).norm())
            })();
            if let Some(e) = err {
                worst = worst.max(e);
                evaluated += 1;
            }
        }
        worst
    });
    CheckRecord::exact("involution", 0.0, parts.into_iter().fold(0.0, f64::max))
}
