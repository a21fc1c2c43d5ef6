//! Full-observation PWL identification by alternating minimization: hard
//! assignment of samples to modes, then per-mode affine least squares.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{default_rank_tol, pinv};
use crate::model::{AffineMode, InitialStates, PwlSystem, SystemDoc};

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Samples `(t_i, f(t_i), f'(t_i))` with strictly increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    derivs: Vec<DVector<f64>>,
}

impl Dataset {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>, derivs: Vec<DVector<f64>>) -> Result<Self, IdentifyError> {
        if times.is_empty() {
            return Err(IdentifyError::EmptyDataset);
        }
        if states.len() != times.len() || derivs.len() != times.len() {
            return Err(IdentifyError::InvalidDataset(format!(
                "{} times, {} states, {} derivatives",
                times.len(),
                states.len(),
                derivs.len()
            )));
        }
        let n = states[0].len();
        if states.iter().chain(&derivs).any(|v| v.len() != n) {
            return Err(IdentifyError::DimensionMismatch("samples of unequal dimension".into()));
        }
        if times.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(IdentifyError::InvalidDataset("times are not strictly increasing".into()));
        }
        let finite = times.iter().all(|t| t.is_finite())
            && states.iter().chain(&derivs).all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(IdentifyError::InvalidDataset("non-finite entry".into()));
        }
        Ok(Self { times, states, derivs })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn derivs(&self) -> &[DVector<f64>] {
        &self.derivs
    }
}

/// Affine vector field `x' = A x + a`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLaw {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineLaw {
    /// `[A a]` as an `n x (n+1)` matrix.
    pub fn augmented(&self) -> DMatrix<f64> {
        let n = self.offset.len();
        let mut s = DMatrix::zeros(n, n + 1);
        s.view_mut((0, 0), (n, n)).copy_from(&self.matrix);
        s.set_column(n, &self.offset);
        s
    }
}

/// Parameters `(A_q, a_q)` for every mode; all share the state dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeParams {
    pub modes: Vec<AffineLaw>,
}

impl ModeParams {
    pub fn new(modes: Vec<AffineLaw>) -> Result<Self, IdentifyError> {
        let n = modes.first().map(|m| m.offset.len()).ok_or_else(|| IdentifyError::InvalidConfig("no modes".into()))?;
        if modes.iter().any(|m| m.offset.len() != n || m.matrix.shape() != (n, n)) {
            return Err(IdentifyError::DimensionMismatch("modes of unequal dimension".into()));
        }
        Ok(Self { modes })
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.modes[0].offset.len()
    }

    /// Squared residual `||f' - (A_q f + a_q)||^2`.
    pub fn residual(&self, q: usize, f: &DVector<f64>, fdot: &DVector<f64>) -> f64 {
        let law = &self.modes[q];
        (fdot - (&law.matrix * f + &law.offset)).norm_squared()
    }

    /// Full-observation PWL: `C_q = I`, `c_q = 0`, unconstrained initial sets.
    pub fn to_pwl(&self) -> PwlSystem {
        let n = self.dim();
        let modes = self
            .modes
            .iter()
            .map(|law| {
                AffineMode::new(
                    law.matrix.clone(),
                    law.offset.clone(),
                    DMatrix::identity(n, n),
                    DVector::zeros(n),
                    InitialStates::Unconstrained,
                )
                .expect("identity readout has matching shapes")
            })
            .collect();
        PwlSystem::new(modes, n).expect("at least one mode")
    }

    /// Inverse of [`ModeParams::to_pwl`] ignoring the readout.
    pub fn from_pwl(sys: &PwlSystem) -> Result<Self, IdentifyError> {
        Self::new(
            sys.modes().iter().map(|m| AffineLaw { matrix: m.dynamics.clone(), offset: m.drift.clone() }).collect(),
        )
    }
}

/// `M x K` point-to-mode weights, each row on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    w: DMatrix<f64>,
}

impl Weights {
    pub fn new(w: DMatrix<f64>) -> Result<Self, IdentifyError> {
        for (m, row) in w.row_iter().enumerate() {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(IdentifyError::InvalidWeights(format!("row {m} has an entry outside [0, 1]")));
            }
            if (row.sum() - 1.0).abs() > 1e-12 {
                return Err(IdentifyError::InvalidWeights(format!("row {m} does not sum to 1")));
            }
        }
        Ok(Self { w })
    }

    pub fn from_assignments(assignments: &[usize], num_modes: usize) -> Self {
        let mut w = DMatrix::zeros(assignments.len(), num_modes);
        for (m, &q) in assignments.iter().enumerate() {
            w[(m, q)] = 1.0;
        }
        Self { w }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn num_modes(&self) -> usize {
        self.w.ncols()
    }

    /// Mode index per point when every row is a unit vector.
    pub fn hard_assignments(&self) -> Option<Vec<usize>> {
        self.w
            .row_iter()
            .map(|row| {
                let q = row.iter().position(|&x| x == 1.0)?;
                row.iter().enumerate().all(|(j, &x)| j == q || x == 0.0).then_some(q)
            })
            .collect()
    }
}

/// `E = (1/M) sum_q sum_m w_{q,m} ||f'(t_m) - (A_q f(t_m) + a_q)||^2`.
///
/// The per-point terms are added in ascending order so that relabeling the
/// modes together with the weight columns gives a bit-identical value.
pub fn objective(data: &Dataset, params: &ModeParams, w: &Weights) -> Result<f64, IdentifyError> {
    check_dims(data, params)?;
    if w.w.nrows() != data.len() || w.w.ncols() != params.num_modes() {
        return Err(IdentifyError::DimensionMismatch(format!(
            "weights are {}x{}, expected {}x{}",
            w.w.nrows(),
            w.w.ncols(),
            data.len(),
            params.num_modes()
        )));
    }
    let mut total = 0.0;
    let mut terms = Vec::with_capacity(params.num_modes());
    for (m, (f, fdot)) in data.states.iter().zip(&data.derivs).enumerate() {
        terms.clear();
        for q in 0..params.num_modes() {
            let wq = w.w[(m, q)];
            if wq != 0.0 {
                terms.push(wq * params.residual(q, f, fdot));
            }
        }
        terms.sort_by(f64::total_cmp);
        total += terms.iter().sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

fn check_dims(data: &Dataset, params: &ModeParams) -> Result<(), IdentifyError> {
    if data.dim() != params.dim() {
        return Err(IdentifyError::DimensionMismatch(format!(
            "data dimension {} but parameters of dimension {}",
            data.dim(),
            params.dim()
        )));
    }
    Ok(())
}

/// Mode with the smallest residual for every point, ties to the lowest index.
pub fn assign_modes(data: &Dataset, params: &ModeParams) -> Vec<usize> {
    data.states
        .iter()
        .zip(&data.derivs)
        .map(|(f, fdot)| {
            let mut best = 0;
            let mut best_r = params.residual(0, f, fdot);
            for q in 1..params.num_modes() {
                let r = params.residual(q, f, fdot);
                if r < best_r {
                    best = q;
                    best_r = r;
                }
            }
            best
        })
        .collect()
}

/// Optimal weights for fixed parameters. The weight problem is linear over a
/// product of simplices, so the per-point argmin vertex is an exact optimum.
pub fn assign_weights(data: &Dataset, params: &ModeParams) -> Weights {
    Weights::from_assignments(&assign_modes(data, params), params.num_modes())
}

/// New parameters together with the modes that had no assigned points.
#[derive(Clone, Debug)]
pub struct Refit {
    pub params: ModeParams,
    pub empty_modes: Vec<usize>,
}

/// Per-mode least squares `min ||Y_q - [A_q a_q] R_q||_F` over the points
/// assigned to mode `q`, with the minimum-norm solution when the regressors
/// are rank deficient. Modes with no points keep their `previous` parameters.
pub fn refit_params(data: &Dataset, w: &Weights, previous: &ModeParams) -> Result<Refit, IdentifyError> {
    check_dims(data, previous)?;
    let assignments =
        w.hard_assignments().ok_or_else(|| IdentifyError::InvalidWeights("refit needs hard (0/1) weights".into()))?;
    if assignments.len() != data.len() || w.num_modes() != previous.num_modes() {
        return Err(IdentifyError::DimensionMismatch("weights do not match data and modes".into()));
    }
    let n = data.dim();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); w.num_modes()];
    for (m, &q) in assignments.iter().enumerate() {
        members[q].push(m);
    }
    let mut modes = Vec::with_capacity(w.num_modes());
    let mut empty_modes = Vec::new();
    for (q, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            empty_modes.push(q);
            modes.push(previous.modes[q].clone());
            continue;
        }
        let regressors = DMatrix::from_fn(idx.len(), n + 1, |r, c| if c < n { data.states[idx[r]][c] } else { 1.0 });
        let targets = DMatrix::from_fn(idx.len(), n, |r, c| data.derivs[idx[r]][c]);
        let theta = pinv(&regressors, default_rank_tol(idx.len(), n + 1)) * targets;
        let s = theta.transpose();
        modes.push(AffineLaw { matrix: s.columns(0, n).into_owned(), offset: s.column(n).into_owned() });
    }
    Ok(Refit { params: ModeParams { modes }, empty_modes })
}

/// Tuning of the alternating iteration. `None` for `epsilon` means
/// `1e-9 * mean ||f'||^2`, floored at [`EPSILON_FLOOR`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub epsilon: Option<f64>,
    pub delta_rel: f64,
    pub t_max: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self { epsilon: None, delta_rel: 1e-12, t_max: 200, restarts: 10, seed: 0 }
    }
}

/// Lower bound on the default termination threshold, so that data with
/// vanishing derivatives can still terminate as converged.
pub const EPSILON_FLOOR: f64 = 1e-24;

impl IdentifyConfig {
    pub fn resolve_epsilon(&self, data: &Dataset) -> f64 {
        self.epsilon.unwrap_or_else(|| {
            let mean = data.derivs.iter().map(|d| d.norm_squared()).sum::<f64>() / data.len() as f64;
            (1e-9 * mean).max(EPSILON_FLOOR)
        })
    }
}

#[derive(Clone, Debug)]
pub struct IdentifyResult {
    pub params: ModeParams,
    pub weights: Weights,
    pub assignments: Vec<usize>,
    pub objective: f64,
    /// E after every iteration of the winning restart.
    pub trace: Vec<f64>,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub converged: bool,
    pub epsilon: f64,
    pub empty_modes: Vec<usize>,
}

#[derive(Serialize)]
struct ResultDoc<'a> {
    #[serde(flatten)]
    system: SystemDoc,
    objective: f64,
    converged: bool,
    epsilon: f64,
    restarts_used: usize,
    best_restart: usize,
    empty_modes: &'a [usize],
    assignments: &'a [usize],
    trace: &'a [f64],
}

impl IdentifyResult {
    pub fn to_pwl(&self) -> PwlSystem {
        self.params.to_pwl()
    }

    /// The identified system document extended with the run summary. It
    /// parses back as a plain system document.
    pub fn to_json(&self) -> String {
        let doc = ResultDoc {
            system: SystemDoc::from(&self.to_pwl()),
            objective: self.objective,
            converged: self.converged,
            epsilon: self.epsilon,
            restarts_used: self.restarts_used,
            best_restart: self.best_restart,
            empty_modes: &self.empty_modes,
            assignments: &self.assignments,
            trace: &self.trace,
        };
        serde_json::to_string_pretty(&doc).expect("result document serializes")
    }
}

/// Outcome of one restart.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub params: ModeParams,
    pub assignments: Vec<usize>,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub empty_modes: Vec<usize>,
}

/// Alternating iteration from the given initial parameters. Stops when
/// `E < epsilon`, when `|dE| < delta_rel * max(E, 1)`, or after `t_max`
/// iterations. A refit that would raise E in floating point is discarded, so
/// the recorded trace never increases.
pub fn run_from(
    data: &Dataset,
    init: ModeParams,
    epsilon: f64,
    config: &IdentifyConfig,
) -> Result<RunOutcome, IdentifyError> {
    check_dims(data, &init)?;
    let mut params = init;
    let mut trace = Vec::new();
    let mut assignments = Vec::new();
    let mut empty_modes = Vec::new();
    let mut e = f64::INFINITY;
    for _ in 0..config.t_max.max(1) {
        assignments = assign_modes(data, &params);
        let w = Weights::from_assignments(&assignments, params.num_modes());
        let e_assign = objective(data, &params, &w)?;
        let refit = refit_params(data, &w, &params)?;
        let e_refit = objective(data, &refit.params, &w)?;
        let prev = e;
        if e_refit < e_assign {
            params = refit.params;
            empty_modes = refit.empty_modes;
            e = e_refit;
        } else {
            e = e_assign;
        }
        trace.push(e);
        if e < epsilon || (prev - e).abs() < config.delta_rel * e.max(1.0) {
            break;
        }
    }
    Ok(RunOutcome { params, assignments, objective: e, converged: e < epsilon, trace, empty_modes })
}

/// Random initial parameters scaled to the data: entries of `A_q` uniform on
/// `[-s, s]` with `s = max ||f'|| / (max ||f|| + eps)`, entries of `a_q`
/// uniform on `[-max ||f'||, max ||f'||]`.
pub fn random_init(data: &Dataset, num_modes: usize, rng: &mut impl Rng) -> ModeParams {
    let n = data.dim();
    let dmax = data.derivs.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let fmax = data.states.iter().map(|f| f.norm()).fold(0.0, f64::max);
    let s = dmax / (fmax + f64::EPSILON);
    let mut draw = |scale: f64| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 };
    let modes = (0..num_modes)
        .map(|_| {
            let matrix = DMatrix::from_fn(n, n, |_, _| draw(s));
            let offset = DVector::from_fn(n, |_, _| draw(dmax));
            AffineLaw { matrix, offset }
        })
        .collect();
    ModeParams { modes }
}

/// Generator for restart `index` of a run seeded with `seed`.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Multi-restart identification with `k` modes.
///
/// Restarts run in parallel but are reported as if sequential: the run stops
/// at the first restart that converges, and otherwise the restart with the
/// lowest final E wins (ties to the earliest).
pub fn identify(data: &Dataset, k: usize, config: &IdentifyConfig) -> Result<IdentifyResult, IdentifyError> {
    if data.is_empty() {
        return Err(IdentifyError::EmptyDataset);
    }
    if k == 0 {
        return Err(IdentifyError::InvalidConfig("K must be at least 1".into()));
    }
    if config.restarts == 0 {
        return Err(IdentifyError::InvalidConfig("at least one restart is required".into()));
    }
    let epsilon = config.resolve_epsilon(data);
    let outcomes: Vec<RunOutcome> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let init = random_init(data, k, &mut restart_rng(config.seed, r));
            run_from(data, init, epsilon, config)
        })
        .collect::<Result<_, _>>()?;
    let used = outcomes.iter().position(|o| o.converged).map_or(outcomes.len(), |i| i + 1);
    let best = (0..used)
        .min_by(|&a, &b| outcomes[a].objective.total_cmp(&outcomes[b].objective))
        .expect("at least one restart");
    let win = outcomes.into_iter().nth(best).expect("index in range");
    Ok(IdentifyResult {
        weights: Weights::from_assignments(&win.assignments, k),
        params: win.params,
        assignments: win.assignments,
        objective: win.objective,
        trace: win.trace,
        restarts_used: used,
        best_restart: best,
        converged: win.converged,
        epsilon,
        empty_modes: win.empty_modes,
    })
}
