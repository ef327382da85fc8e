//! Shared fixtures for the criterion benchmarks.

use piston_core::harness::sample_initial;
use piston_core::microsim::SlowState;
use piston_core::rng::stream_rng;
use piston_core::{Container, ContainerSpec, FrozenBilliard, MicroState};

pub fn stadium() -> Container {
    Container::from_spec(&ContainerSpec::stadium(1.0)).expect("preset geometry")
}

pub fn domed_box() -> Container {
    Container::from_spec(&ContainerSpec::domed_box(1.0, 1.0, 0.5, 0.45, 0.6)).expect("preset geometry")
}

pub fn billiard(container: &Container) -> FrozenBilliard {
    FrozenBilliard::new(container, 1, 0.5, 0.6).expect("table at q = 0.5")
}

pub fn slow_state() -> SlowState {
    SlowState { q: 0.5, w: 0.0, e1: vec![0.6], e2: vec![0.4] }
}

/// Micro state on the fiber over [`slow_state`].
pub fn micro_state(container: &Container, eps: f64, seed: u64) -> MicroState {
    sample_initial(&slow_state(), container, eps, &mut stream_rng(seed, 0)).expect("initial state")
}
