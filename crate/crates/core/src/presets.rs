//! Reproducible experiment setups: a random Voronoi-switched PWL benchmark
//! and the Lorenz attractor dataset.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::identify::{AffineLaw, ModeParams};
use crate::linalg::singular_values;
use crate::model::{AffineMode, InitialStates, PwlSystem};
use crate::sim::{
    add_noise, concatenate, simulate_ode, simulate_pwl, voronoi_cell, Lorenz, SimError, SimOptions, SwitchingLaw,
    Trajectory,
};

/// Shape of the artificial benchmark.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ArtificialSetup {
    pub num_modes: usize,
    pub dim: usize,
    pub runs: usize,
    pub samples_per_run: usize,
    pub delta: f64,
    pub snr_percent: f64,
}

impl Default for ArtificialSetup {
    fn default() -> Self {
        Self { num_modes: 5, dim: 2, runs: 6, samples_per_run: 300, delta: 0.02, snr_percent: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct ArtificialInstance {
    pub system: PwlSystem,
    pub params: ModeParams,
    pub centers: Vec<DVector<f64>>,
    /// Noiseless concatenated trajectory.
    pub clean: Trajectory,
    /// `clean` with measurement noise at the requested SNR.
    pub trajectory: Trajectory,
}

/// Stable matrix with eigenvalues `-alpha +- i omega` (plus real ones for odd
/// dimension) in a random, reasonably conditioned basis.
pub fn random_stable_matrix(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut core = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let alpha = rng.random_range(0.3..1.2);
        if i + 1 < n {
            let omega = rng.random_range(1.0..3.0);
            core[(i, i)] = -alpha;
            core[(i + 1, i + 1)] = -alpha;
            core[(i, i + 1)] = omega;
            core[(i + 1, i)] = -omega;
            i += 2;
        } else {
            core[(i, i)] = -alpha;
            i += 1;
        }
    }
    loop {
        let p = DMatrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 } + rng.random_range(-0.6..0.6));
        let Some(inv) = p.clone().try_inverse() else { continue };
        if p.norm() * inv.norm() < 4.0 * n as f64 {
            return &p * core * inv;
        }
    }
}

/// Random Voronoi centers in `[-1, 1]^n`, pairwise at least `min_sep` apart.
pub fn random_centers(k: usize, n: usize, min_sep: f64, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut sep = min_sep;
    let mut attempts = 0;
    while centers.len() < k {
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if centers.iter().all(|o| (o - &c).norm() >= sep) {
            centers.push(c);
        }
        attempts += 1;
        if attempts % 1000 == 0 {
            sep *= 0.8;
        }
    }
    centers
}

/// Random PWL with one stable affine mode per Voronoi cell; mode `q` is
/// attracted to the center of cell `q + 1`, so trajectories keep cycling
/// through the cells. Full state observation.
pub fn random_voronoi_pwl(k: usize, n: usize, rng: &mut impl Rng) -> (PwlSystem, Vec<DVector<f64>>) {
    let centers = random_centers(k, n, 0.5, rng);
    let modes = (0..k)
        .map(|q| {
            let a = random_stable_matrix(n, rng);
            let target = &centers[(q + 1) % k];
            let drift = -(&a * target);
            AffineMode::new(a, drift, DMatrix::identity(n, n), DVector::zeros(n), InitialStates::Unconstrained)
                .expect("consistent shapes")
        })
        .collect();
    (PwlSystem::new(modes, n).expect("consistent shapes"), centers)
}

pub fn params_of(sys: &PwlSystem) -> ModeParams {
    ModeParams::new(
        sys.modes().iter().map(|m| AffineLaw { matrix: m.dynamics.clone(), offset: m.drift.clone() }).collect(),
    )
    .expect("modes share a dimension")
}

/// Minimum number of samples per mode in an artificial instance.
pub const MIN_MODE_SAMPLES: usize = 20;
/// Minimum `sigma_min / sigma_max` of each mode's regressor `[f; 1]`.
pub const MIN_REGRESSOR_CONDITION: f64 = 1e-3;

/// Whether every mode is visited often enough, with states spanning an
/// affine basis, for its parameters to be determined by the data.
pub fn modes_excited(traj: &Trajectory, num_modes: usize) -> bool {
    let Some(labels) = traj.mode_labels.as_ref() else { return false };
    let Some(n) = traj.dim() else { return false };
    (0..num_modes).all(|q| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == q).collect();
        if idx.len() < MIN_MODE_SAMPLES {
            return false;
        }
        let reg = DMatrix::from_fn(n + 1, idx.len(), |r, c| if r < n { traj.states[idx[c]][r] } else { 1.0 });
        let sv = singular_values(&reg);
        sv.last().copied().unwrap_or(0.0) >= MIN_REGRESSOR_CONDITION * sv[0]
    })
}

/// Artificial benchmark instance: `runs` trajectories from random initial
/// states, concatenated, optionally with noise. Systems whose data leave a
/// mode unvisited or unexcited are redrawn. Fully determined by `seed`.
pub fn artificial_instance(setup: &ArtificialSetup, seed: u64) -> Result<ArtificialInstance, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SimOptions::new(setup.samples_per_run as f64 * setup.delta, setup.delta);
    let mut attempts = 0;
    loop {
        let (system, centers) = random_voronoi_pwl(setup.num_modes, setup.dim, &mut rng);
        let law = SwitchingLaw::voronoi(centers.clone())?;
        let runs = (0..setup.runs)
            .map(|_| {
                let x0 = DVector::from_fn(setup.dim, |_, _| rng.random_range(-1.5..1.5));
                let q0 = voronoi_cell(&centers, &x0);
                simulate_pwl(&system, &law, &x0, q0, &opts)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let clean = concatenate(&runs)?;
        attempts += 1;
        if !modes_excited(&clean, setup.num_modes) {
            if attempts >= 1000 {
                return Err(SimError::InvalidArgument("could not draw a system that visits every mode".into()));
            }
            continue;
        }
        let trajectory = add_noise(&clean, setup.snr_percent, noise_seed(seed))?;
        return Ok(ArtificialInstance { params: params_of(&system), system, centers, clean, trajectory });
    }
}

/// Seed of the noise stream belonging to an experiment seed.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Random initial state near the Lorenz attractor: `x1, x2` in `[-10, 10]`,
/// `x3` in `[15, 35]`.
pub fn lorenz_initial_state(seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_vec(vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(15.0..35.0)])
}

/// Lorenz trajectory with the default parameters from [`lorenz_initial_state`].
pub fn lorenz_trajectory(samples: usize, delta: f64, seed: u64) -> Result<Trajectory, SimError> {
    simulate_ode(&Lorenz::default(), &lorenz_initial_state(seed), samples as f64 * delta, delta)
}
