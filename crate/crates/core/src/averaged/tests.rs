use super::*;
use crate::geometry::ContainerSpec;
use crate::microsim::Region;
use proptest::prelude::*;

fn build(spec: ContainerSpec) -> Container {
    Container::from_spec(&spec).unwrap()
}

fn h(q: f64, w: f64, e1: &[f64], e2: &[f64]) -> SlowState {
    SlowState { q, w, e1: e1.to_vec(), e2: e2.to_vec() }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn symmetric_state_is_a_fixed_point() {
    let c = build(ContainerSpec::rectangle(1.0));
    let f = Averaged::new(&c).vector_field(&h(0.5, 0.0, &[1.0], &[1.0])).unwrap();
    assert_eq!((f.q, f.w, f.e1[0], f.e2[0]), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn force_matches_direct_formula() {
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let state = h(0.5, 0.0, &[2.0], &[1.0]);
    let f = a.vector_field(&state).unwrap();
    // 2Eℓ/(d|D|) with d = 2, |D₁| = |D₂| = 0.5
    let oracle = 2.0 * 2.0 / (2.0 * 0.5) - 2.0 * 1.0 / (2.0 * 0.5);
    assert!(close(f.w, oracle, 1e-15));
    let (p1, p2) = a.pressures(&state).unwrap();
    assert!(close(f.w, (p1 - p2) * 1.0, 1e-15));
}

#[test]
fn energy_flow_splits_per_particle() {
    let c = build(ContainerSpec::cuboid(1.0, 2.0));
    let a = Averaged::new(&c);
    let state = h(0.3, 0.7, &[1.0, 3.0], &[2.0]);
    let f = a.vector_field(&state).unwrap();
    let k1 = 2.0 * 2.0 / (3.0 * 2.0 * 0.3);
    assert!(close(f.e1[0], -0.7 * 1.0 * k1, 1e-14));
    assert!(close(f.e1[1], -0.7 * 3.0 * k1, 1e-14));
    assert!(close(f.e2[0], 0.7 * 2.0 * 2.0 * 2.0 / (3.0 * 2.0 * 0.7), 1e-14));
}

#[test]
fn measure_outside_range_is_an_error() {
    let c = build(ContainerSpec::rectangle(1.0));
    assert!(Averaged::new(&c).vector_field(&h(1.2, 0.0, &[1.0], &[1.0])).is_err());
    assert!(Averaged::new(&c).vector_field(&h(0.0, 0.0, &[1.0], &[1.0])).is_err());
}

#[test]
fn hamiltonian_examples() {
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let h0 = h(0.5, 0.3, &[1.0], &[1.0]);
    assert!(close(a.effective_hamiltonian(&h0, &h0).unwrap(), 0.045 + 2.0, 1e-15));
    let h0 = h(0.5, 0.0, &[1.0], &[1.0]);
    let at = h(0.6, 0.0, &[0.0], &[0.0]);
    assert!(close(a.effective_hamiltonian(&at, &h0).unwrap(), 0.5 / 0.6 + 0.5 / 0.4, 1e-14));
}

#[test]
fn adiabatic_energy_examples() {
    let rect = build(ContainerSpec::rectangle(1.0));
    let h0 = h(0.5, 0.0, &[1.0], &[1.0]);
    let a = Averaged::new(&rect);
    assert_eq!(a.adiabatic_energies(&h0, 0.5).unwrap(), (vec![1.0], vec![1.0]));
    assert!(close(a.adiabatic_energies(&h0, 0.25).unwrap().0[0], 2.0, 1e-14));
    let cube = build(ContainerSpec::cuboid(1.0, 1.0));
    let e = Averaged::new(&cube).adiabatic_energies(&h0, 0.25).unwrap().0[0];
    assert!(close(e, 2f64.powf(2.0 / 3.0), 1e-14));
    assert!(close(e, 1.587401, 1e-6));
}

#[test]
fn equilibrium_is_constant_path() {
    let c = build(ContainerSpec::stadium(1.0));
    let a = Averaged::new(&c);
    let h0 = h(0.5, 0.0, &[0.7], &[0.7]);
    let path = a.integrate(&h0, 1.0, 1e-3, None).unwrap();
    assert_eq!(path.samples.len(), 1001);
    for s in &path.samples {
        assert!(close(s.state.q, 0.5, 1e-15) && close(s.state.w, 0.0, 1e-15));
    }
}

#[test]
fn rectangle_equilibrium_solves_force_balance() {
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let h0 = h(0.5, 0.0, &[2.0], &[1.0]);
    // 2·0.5/Q² = 0.5/(1−Q)²  ⇒  Q = √2/(1+√2)
    let oracle = 2f64.sqrt() / (1.0 + 2f64.sqrt());
    assert!(close(a.equilibrium(&h0).unwrap(), oracle, 1e-9));
    assert!(close(oracle, 0.585786, 1e-6));
}

#[test]
fn rectangle_oscillation_matches_fine_integration() {
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let h0 = h(0.5, 0.0, &[2.0], &[1.0]);
    let coarse = a.integrate(&h0, 2.0, 1e-3, None).unwrap();
    let fine = a.integrate(&h0, 2.0, 1e-5, None).unwrap();
    for (k, s) in coarse.samples.iter().enumerate() {
        let r = &fine.samples[k * 100].state;
        assert!(close(s.state.q, r.q, 1e-9), "tau {}: {} vs {}", s.tau, s.state.q, r.q);
        assert!(close(s.state.w, r.w, 1e-8));
    }
    let q_star = a.equilibrium(&h0).unwrap();
    let qs: Vec<f64> = coarse.samples.iter().map(|s| s.state.q).collect();
    let max = qs.iter().cloned().fold(f64::MIN, f64::max);
    assert!(max > q_star && qs.iter().any(|&q| q < 0.5 + 1e-6 && q > 0.0));
}

#[test]
fn hamiltonian_and_adiabatic_law_conserved() {
    for c in [build(ContainerSpec::stadium(1.0)), build(ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6))] {
        let a = Averaged::new(&c);
        let h0 = h(0.4, 0.2, &[0.3, 0.3], &[0.25, 0.15]);
        let path = a.integrate(&h0, 10.0, 1e-3, None).unwrap();
        let h_ref = path.h_eff[0];
        assert!(path.h_eff.iter().all(|x| close(*x, h_ref, 1e-8)));
        let d = c.dimension() as f64;
        for s in path.samples.iter().step_by(97) {
            let (e1, e2) = a.adiabatic_energies(&h0, s.state.q).unwrap();
            assert!(close(s.state.e1[0], e1[0], 1e-8) && close(s.state.e2[1], e2[1], 1e-8));
            let m1 = c.subdomain_measure(1, s.state.q).unwrap();
            let inv = s.state.e1_total() * m1.powf(2.0 / d);
            let inv0 = h0.e1_total() * c.subdomain_measure(1, 0.4).unwrap().powf(2.0 / d);
            assert!(close(inv, inv0, 1e-8));
            assert!(close(s.state.e1[0] / s.state.e1[1], 1.0, 1e-12));
        }
    }
}

#[test]
fn reversible() {
    let c = build(ContainerSpec::stadium(1.0));
    let a = Averaged::new(&c);
    let h0 = h(0.45, 0.3, &[0.6], &[0.4]);
    let fwd = a.integrate(&h0, 3.0, 1e-3, None).unwrap();
    let mut end = fwd.samples.last().unwrap().state.clone();
    end.w = -end.w;
    let back = a.integrate(&end, 3.0, 1e-3, None).unwrap();
    let r = &back.samples.last().unwrap().state;
    assert!(close(r.q, h0.q, 1e-8) && close(-r.w, h0.w, 1e-8));
    assert!(close(r.e1[0], h0.e1[0], 1e-8) && close(r.e2[0], h0.e2[0], 1e-8));
}

#[test]
fn region_exit_halts_within_one_cell() {
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let region = Region { q_min: 0.45, q_max: 0.6, e_min: 0.1, e_max: 10.0, w_bound: 5.0, energy_floor: 0.0 };
    let h0 = h(0.5, 0.0, &[2.0], &[1.0]);
    let coarse = a.integrate(&h0, 5.0, 1e-3, Some(&region)).unwrap();
    let fine = a.integrate(&h0, 5.0, 1e-4, Some(&region)).unwrap();
    let (tc, tf) = (coarse.exit.unwrap(), fine.exit.unwrap());
    assert!((tc - tf).abs() <= 1e-3 + 1e-12, "{tc} vs {tf}");
    assert_eq!(coarse.samples.last().unwrap().tau, tc);
}

#[test]
fn symmetric_data_has_no_period() {
    let c = build(ContainerSpec::rectangle(1.0));
    let err = Averaged::new(&c).period_and_equilibrium(&h(0.5, 0.0, &[1.0], &[1.0]));
    assert_eq!(err, Err(AveragedError::AtEquilibrium));
}

#[test]
fn small_oscillation_period() {
    for c in [build(ContainerSpec::rectangle(1.0)), build(ContainerSpec::stadium(1.0)), build(ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6))] {
        let a = Averaged::new(&c);
        let base = h(0.5, 0.0, &[0.6], &[0.4]);
        let q_star = a.equilibrium(&base).unwrap();
        let q0 = q_star + 1e-3;
        let (e1, e2) = a.adiabatic_energies(&base, q0).unwrap();
        let h0 = SlowState { q: q0, w: 0.0, e1, e2 };
        // Finite-difference curvature of the potential itself.
        let u = |q: f64| a.potential(&h0, q).unwrap();
        let d = 1e-4;
        let curv = (u(q_star + d) - 2.0 * u(q_star) + u(q_star - d)) / (d * d);
        let oracle = TAU / curv.sqrt();
        let osc = a.period_and_equilibrium(&h0).unwrap();
        assert!(close(osc.q_star, q_star, 1e-9));
        assert!((osc.period / oracle - 1.0).abs() < 0.01, "{} vs {}", osc.period, oracle);
        let (l, r) = osc.turning_points;
        assert!(close(r, q0, 1e-7) && l < q_star && close(q_star - l, 1e-3, 1e-4));
    }
}

#[test]
fn large_oscillation_period_agrees_with_quadrature() {
    // T = 2∫ dQ / √(2(H − U(Q))) between turning points, via the
    // substitution Q = c + r·sin θ that removes the endpoint singularities.
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let h0 = h(0.5, 0.0, &[2.0], &[1.0]);
    let osc = a.period_and_equilibrium(&h0).unwrap();
    let energy = a.effective_hamiltonian(&h0, &h0).unwrap();
    let (l, r) = osc.turning_points;
    let (mid, rad) = ((l + r) / 2.0, (r - l) / 2.0);
    let n = 200_000;
    let mut sum = 0.0;
    for k in 0..n {
        let th = -std::f64::consts::FRAC_PI_2 + (k as f64 + 0.5) * std::f64::consts::PI / n as f64;
        let q = mid + rad * th.sin();
        let gap = 2.0 * (energy - a.potential(&h0, q).unwrap());
        sum += rad * th.cos() / gap.sqrt();
    }
    let quad = 2.0 * sum * std::f64::consts::PI / n as f64;
    assert!((osc.period / quad - 1.0).abs() < 1e-4, "{} vs {}", osc.period, quad);
    assert!(close(l, 0.5, 1e-9));
}

#[test]
fn path_csv_layout() {
    let c = build(ContainerSpec::rectangle(1.0));
    let a = Averaged::new(&c);
    let path = a.integrate(&h(0.5, 0.0, &[2.0, 1.0], &[1.0]), 0.002, 1e-3, None).unwrap();
    let mut buf = Vec::new();
    write_path_csv(&path, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "tau,Q,W,E1_1,E1_2,E2_1,H_eff");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[1].split(',').count(), 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn total_energy_is_w2_plus_gas(q in 0.3f64..0.7, w in -0.2f64..0.2, e1 in 0.3f64..2.0, e2 in 0.3f64..2.0) {
        let c = build(ContainerSpec::stadium(1.0));
        let a = Averaged::new(&c);
        let h0 = h(q, w, &[e1], &[e2]);
        let path = a.integrate(&h0, 0.5, 1e-3, None).unwrap();
        for s in &path.samples {
            let total = 0.5 * s.state.w * s.state.w + s.state.e1_total() + s.state.e2_total();
            prop_assert!((total - (0.5 * w * w + e1 + e2)).abs() < 1e-9);
        }
    }
}

#[test]
fn force_is_minus_potential_gradient() {
    for c in [build(ContainerSpec::stadium(1.0)), build(ContainerSpec::cuboid(1.0, 0.5))] {
        let a = Averaged::new(&c);
        let h0 = h(0.4, 0.1, &[0.3, 0.2], &[0.5]);
        for q in [0.2, 0.4, 0.55, 0.8] {
            let (e1, e2) = a.adiabatic_energies(&h0, q).unwrap();
            let dw = a.vector_field(&SlowState { q, w: 0.0, e1, e2 }).unwrap().w;
            let d = 1e-6;
            let grad = (a.potential(&h0, q + d).unwrap() - a.potential(&h0, q - d).unwrap()) / (2.0 * d);
            assert!((dw + grad).abs() < 1e-6, "{dw} vs {}", -grad);
        }
    }
}
