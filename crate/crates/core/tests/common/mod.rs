#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pwl_core::model::{AffineMode, InitialStates, Lssj, PwlSystem};
use pwl_core::presets::random_stable_matrix;
use pwl_core::sim::{pwl_outputs, simulate_pwl, ScheduledSwitch, SimOptions, SwitchingLaw};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Lssj whose A has spectral norm 0.9, with Gaussian C and initial states.
pub fn random_lssj(n: usize, p: usize, num_x0: usize, rng: &mut impl Rng) -> Lssj {
    let g = normal_matrix(n, n, rng);
    let norm = pwl_core::linalg::norm2(&g);
    let a = if norm > 0.0 { g * (0.9 / norm) } else { g };
    let c = normal_matrix(p, n, rng);
    let x0 = (0..num_x0).map(|_| normal_vector(n, rng)).collect();
    Lssj::new(a, c, x0).unwrap()
}

/// Continuous-time stable Lssj.
pub fn random_stable_lssj(n: usize, p: usize, num_x0: usize, rng: &mut impl Rng) -> Lssj {
    let a = random_stable_matrix(n, rng);
    let c = normal_matrix(p, n, rng);
    let x0 = (0..num_x0).map(|_| normal_vector(n, rng)).collect();
    Lssj::new(a, c, x0).unwrap()
}

/// Affine PWL with stable modes of the given dimensions and finite initial sets.
pub fn random_affine_pwl(dims: &[usize], p: usize, num_x0: usize, rng: &mut impl Rng) -> PwlSystem {
    let modes = dims
        .iter()
        .map(|&n| {
            let a = random_stable_matrix(n, rng);
            let drift = normal_vector(n, rng);
            let c = normal_matrix(p, n, rng);
            let offset = normal_vector(p, rng);
            let x0 = (0..num_x0).map(|_| normal_vector(n, rng)).collect();
            AffineMode::new(a, drift, c, offset, InitialStates::Finite(x0)).unwrap()
        })
        .collect();
    PwlSystem::new(modes, p).unwrap()
}

/// A jump at `time` into mode `mode`, entry state number `index` of its initial set.
#[derive(Copy, Clone, Debug)]
pub struct Jump {
    pub time: f64,
    pub mode: usize,
    pub index: usize,
}

pub fn random_jumps(num_modes: usize, num_x0: usize, count: usize, spacing: f64, rng: &mut impl Rng) -> Vec<Jump> {
    (0..count)
        .map(|i| Jump {
            time: i as f64 * spacing,
            mode: rng.random_range(0..num_modes),
            index: rng.random_range(0..num_x0),
        })
        .collect()
}

/// Sampled outputs of `sys` when jump `j` goes to `(mode(j), entry(j))`.
pub fn outputs_under(
    sys: &PwlSystem,
    jumps: &[Jump],
    map: impl Fn(&Jump) -> (usize, DVector<f64>),
    opts: &SimOptions,
) -> Vec<DVector<f64>> {
    let events: Vec<ScheduledSwitch> = jumps
        .iter()
        .map(|j| {
            let (mode, x) = map(j);
            ScheduledSwitch { time: j.time, mode, entry_state: x.as_slice().to_vec() }
        })
        .collect();
    let (q0, x0) = map(&jumps[0]);
    let traj = simulate_pwl(sys, &SwitchingLaw::Schedule(events), &x0, q0, opts).unwrap();
    pwl_outputs(sys, &traj)
}

pub fn max_gap(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[DVector<f64>]) -> f64 {
    a.iter().map(|x| x.amax()).fold(0.0, f64::max)
}
