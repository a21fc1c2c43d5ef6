//! Ground-truth trajectory generation: exact PWL flows under switching laws,
//! RK4 integration of nonlinear vector fields, equilibrium linearization,
//! measurement noise and trajectory concatenation.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identify::{Dataset, IdentifyError};
use crate::linalg::expm;
use crate::model::{AffineMode, InitialStates, PwlSystem};

/// Tolerance for membership of a scheduled entry state in a finite initial set.
pub const ENTRY_STATE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("entry state at t = {time} is not an initial state of mode {mode}")]
    InvalidEntryState { time: f64, mode: usize },
    #[error("invalid switching schedule: {0}")]
    InvalidSchedule(String),
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
}

/// Uniformly sampled trajectory with derivatives and optional mode labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub derivs: Vec<DVector<f64>>,
    pub mode_labels: Option<Vec<usize>>,
    /// Switching times, starting with 0.
    pub switch_times: Vec<f64>,
    pub delta: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension when it is the same for every sample.
    pub fn dim(&self) -> Option<usize> {
        let n = self.states.first()?.len();
        self.states.iter().all(|x| x.len() == n).then_some(n)
    }

    pub fn to_dataset(&self) -> Result<Dataset, SimError> {
        Ok(Dataset::new(self.times.clone(), self.states.clone(), self.derivs.clone())?)
    }

    /// Writes `t,x1..xn,dx1..dxn[,mode]` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let n = self
            .dim()
            .ok_or_else(|| SimError::DimensionMismatch("CSV output needs a constant state dimension".into()))?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("dx{i}")));
        if self.mode_labels.is_some() {
            header.push("mode".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt_float(self.times[i])];
            row.extend(self.states[i].iter().map(|&v| fmt_float(v)));
            row.extend(self.derivs[i].iter().map(|&v| fmt_float(v)));
            if let Some(labels) = &self.mode_labels {
                row.push(labels[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| SimError::Format(e.to_string()))?;
        Ok(())
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar { switch_times: self.switch_times.clone(), delta: self.delta }
    }
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Switch times and sampling step stored next to a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub switch_times: Vec<f64>,
    pub delta: f64,
}

/// Contents of a trajectory CSV; derivative and mode columns are optional.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub derivs: Option<Vec<DVector<f64>>>,
    pub mode_labels: Option<Vec<usize>>,
}

impl CsvTrajectory {
    pub fn into_trajectory(self, sidecar: Option<&Sidecar>) -> Result<Trajectory, SimError> {
        let derivs =
            self.derivs.ok_or_else(|| SimError::Format("no derivative columns; estimate them first".into()))?;
        let delta = match sidecar {
            Some(s) => s.delta,
            None if self.times.len() >= 2 => self.times[1] - self.times[0],
            None => 0.0,
        };
        Ok(Trajectory {
            times: self.times,
            states: self.states,
            derivs,
            mode_labels: self.mode_labels,
            switch_times: sidecar.map_or_else(|| vec![0.0], |s| s.switch_times.clone()),
            delta,
        })
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<CsvTrajectory, SimError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(SimError::Format("first column must be `t`".into()));
    }
    let n = header.iter().filter(|h| h.starts_with('x')).count();
    let nd = header.iter().filter(|h| h.starts_with("dx")).count();
    let has_mode = header.last().map(String::as_str) == Some("mode");
    let expected = 1 + n + nd + usize::from(has_mode);
    if n == 0 || (nd != 0 && nd != n) || expected != header.len() {
        return Err(SimError::Format(format!("unexpected header {header:?}")));
    }
    for (k, h) in header[1..=n].iter().enumerate() {
        if *h != format!("x{}", k + 1) {
            return Err(SimError::Format(format!("unexpected column {h}")));
        }
    }
    let mut out = CsvTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        derivs: (nd > 0).then(Vec::new),
        mode_labels: has_mode.then(Vec::new),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, SimError> {
            rec.get(i)
                .ok_or_else(|| SimError::Format("short row".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| SimError::Format(e.to_string()))
        };
        out.times.push(num(0)?);
        out.states.push(DVector::from_iterator(n, (1..=n).map(&num).collect::<Result<Vec<_>, _>>()?));
        if let Some(d) = out.derivs.as_mut() {
            d.push(DVector::from_iterator(n, (n + 1..=2 * n).map(&num).collect::<Result<Vec<_>, _>>()?));
        }
        if let Some(l) = out.mode_labels.as_mut() {
            let s = rec.get(expected - 1).ok_or_else(|| SimError::Format("short row".into()))?;
            l.push(s.trim().parse().map_err(|e: std::num::ParseIntError| SimError::Format(e.to_string()))?);
        }
    }
    Ok(out)
}

/// Dataset with central-difference derivatives at interior samples. The two
/// samples whose stencil straddles a switch time are dropped.
pub fn fd_dataset(times: &[f64], states: &[DVector<f64>], switch_times: &[f64]) -> Result<Dataset, SimError> {
    if times.len() < 3 {
        return Err(SimError::InvalidArgument("finite differences need at least 3 samples".into()));
    }
    let (mut t, mut f, mut d) = (Vec::new(), Vec::new(), Vec::new());
    for i in 1..times.len() - 1 {
        let straddles = switch_times.iter().any(|&s| s > 0.0 && times[i - 1] < s && s <= times[i + 1]);
        if straddles {
            continue;
        }
        t.push(times[i]);
        f.push(states[i].clone());
        d.push((&states[i + 1] - &states[i - 1]) / (times[i + 1] - times[i - 1]));
    }
    Ok(Dataset::new(t, f, d)?)
}

/// Evaluates `x -> f(x)`.
pub trait VectorField {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> VectorField for F {
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        self(x)
    }
}

/// A scheduled jump: at `time` switch to `mode` with state reset to `entry_state`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledSwitch {
    pub time: f64,
    pub mode: usize,
    pub entry_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SwitchingLaw {
    Schedule(Vec<ScheduledSwitch>),
    /// Mode `i` is active while the state is closest to `centers[i]`.
    Voronoi {
        centers: Vec<DVector<f64>>,
    },
}

impl SwitchingLaw {
    pub fn voronoi(centers: Vec<DVector<f64>>) -> Result<Self, SimError> {
        for i in 0..centers.len() {
            for j in 0..i {
                if centers[i] == centers[j] {
                    return Err(SimError::InvalidArgument(format!("Voronoi centers {j} and {i} coincide")));
                }
            }
        }
        Ok(SwitchingLaw::Voronoi { centers })
    }
}

/// Index of the nearest center, ties to the lowest index.
pub fn voronoi_cell(centers: &[DVector<f64>], x: &DVector<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = (x - c).norm_squared();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub t_end: f64,
    pub delta: f64,
    /// Minimum time between Voronoi switches; `None` means `5 * delta`.
    pub min_dwell: Option<f64>,
}

impl SimOptions {
    pub fn new(t_end: f64, delta: f64) -> Self {
        Self { t_end, delta, min_dwell: None }
    }

    /// Number of grid samples `t_i = i * delta`, `i = 0..steps`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.delta).round() as usize
    }

    fn validate(&self) -> Result<(), SimError> {
        if !self.delta.is_finite() || self.delta <= 0.0 {
            return Err(SimError::InvalidArgument("delta must be positive".into()));
        }
        if !self.t_end.is_finite() || self.t_end <= 0.0 || self.steps() == 0 {
            return Err(SimError::InvalidArgument("t_end must cover at least one step".into()));
        }
        Ok(())
    }
}

/// One-step propagator `x -> Phi11 x + Phi12` of the exact affine flow,
/// from the exponential of `delta * [[A, a], [0, 0]]`.
#[derive(Clone, Debug)]
pub struct AffineStep {
    linear: DMatrix<f64>,
    shift: DVector<f64>,
}

impl AffineStep {
    pub fn new(mode: &AffineMode, delta: f64) -> Self {
        let n = mode.state_dim();
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&mode.dynamics);
        aug.view_mut((0, n), (n, 1)).copy_from(&mode.drift);
        let phi = expm(&(aug * delta));
        Self { linear: phi.view((0, 0), (n, n)).into_owned(), shift: phi.view((0, n), (n, 1)).column(0).into_owned() }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.linear * x + &self.shift
    }
}

/// Samples a PWL trajectory on the grid `t_i = i * delta`.
///
/// Mode changes take effect at grid points. Under a schedule the state is
/// reset to the scheduled entry state; under a Voronoi law the continuous
/// state is carried over and a new switch is suppressed for `min_dwell`
/// after the previous one.
pub fn simulate_pwl(
    sys: &PwlSystem,
    law: &SwitchingLaw,
    x_init: &DVector<f64>,
    q_init: usize,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    opts.validate()?;
    if q_init >= sys.num_modes() {
        return Err(SimError::InvalidArgument(format!("initial mode {q_init} out of range")));
    }
    if x_init.len() != sys.mode(q_init).state_dim() {
        return Err(SimError::DimensionMismatch(format!(
            "initial state has length {}, mode {q_init} has dimension {}",
            x_init.len(),
            sys.mode(q_init).state_dim()
        )));
    }
    let delta = opts.delta;
    let steps = opts.steps();
    let min_dwell = opts.min_dwell.unwrap_or(5.0 * delta);
    let props: Vec<AffineStep> = sys.modes().iter().map(|m| AffineStep::new(m, delta)).collect();

    // Scheduled events mapped onto grid indices.
    let mut events: Vec<(usize, usize, DVector<f64>)> = Vec::new();
    match law {
        SwitchingLaw::Schedule(sched) => {
            let mut last: Option<(f64, usize)> = None;
            for ev in sched {
                if ev.mode >= sys.num_modes() {
                    return Err(SimError::InvalidSchedule(format!("unknown mode {}", ev.mode)));
                }
                if !ev.time.is_finite() || ev.time < 0.0 {
                    return Err(SimError::InvalidSchedule(format!("invalid time {}", ev.time)));
                }
                let idx = (ev.time / delta - 1e-9).ceil().max(0.0) as usize;
                if let Some((t, i)) = last {
                    if ev.time <= t || idx <= i {
                        return Err(SimError::InvalidSchedule(format!(
                            "switch at {} does not follow {t} by at least one sampling step",
                            ev.time
                        )));
                    }
                }
                last = Some((ev.time, idx));
                let mode = sys.mode(ev.mode);
                let x = DVector::from_column_slice(&ev.entry_state);
                if x.len() != mode.state_dim() || !mode.initial_states.contains(&x, ENTRY_STATE_TOL) {
                    return Err(SimError::InvalidEntryState { time: ev.time, mode: ev.mode });
                }
                events.push((idx, ev.mode, x));
            }
        }
        SwitchingLaw::Voronoi { centers } => {
            if centers.len() != sys.num_modes() {
                return Err(SimError::InvalidArgument(format!(
                    "{} Voronoi centers for {} modes",
                    centers.len(),
                    sys.num_modes()
                )));
            }
            let n = x_init.len();
            if centers.iter().any(|c| c.len() != n) || sys.modes().iter().any(|m| m.state_dim() != n) {
                return Err(SimError::DimensionMismatch("Voronoi switching needs a common state dimension".into()));
            }
        }
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        derivs: Vec::with_capacity(steps),
        mode_labels: Some(Vec::with_capacity(steps)),
        switch_times: vec![0.0],
        delta,
    };
    let labels = traj.mode_labels.as_mut().expect("set above");
    let mut q = q_init;
    let mut x = x_init.clone();
    let mut last_switch = f64::NEG_INFINITY;
    let mut next_event = 0;
    for i in 0..steps {
        let t = i as f64 * delta;
        if i > 0 {
            x = props[q].apply(&x);
        }
        match law {
            SwitchingLaw::Schedule(_) => {
                if let Some((idx, mode, entry)) = events.get(next_event) {
                    if *idx == i {
                        q = *mode;
                        x = entry.clone();
                        next_event += 1;
                        if i > 0 {
                            traj.switch_times.push(t);
                        }
                    }
                }
            }
            SwitchingLaw::Voronoi { centers } => {
                let cell = voronoi_cell(centers, &x);
                if cell != q && t - last_switch >= min_dwell - 1e-9 * delta {
                    q = cell;
                    last_switch = t;
                    if i > 0 {
                        traj.switch_times.push(t);
                    }
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState(t));
        }
        traj.times.push(t);
        traj.derivs.push(sys.mode(q).rhs(&x));
        traj.states.push(x.clone());
        labels.push(q);
    }
    Ok(traj)
}

/// Outputs `C_q x + c_q` along a simulated trajectory.
pub fn pwl_outputs(sys: &PwlSystem, traj: &Trajectory) -> Vec<DVector<f64>> {
    let labels = traj.mode_labels.as_ref().expect("PWL trajectories carry mode labels");
    traj.states.iter().zip(labels).map(|(x, &q)| sys.mode(q).readout(x)).collect()
}

/// Classical fourth-order Runge-Kutta on the grid `t_i = i * delta`.
pub fn simulate_ode(
    rhs: &dyn VectorField,
    x_init: &DVector<f64>,
    t_end: f64,
    delta: f64,
) -> Result<Trajectory, SimError> {
    let opts = SimOptions::new(t_end, delta);
    opts.validate()?;
    let steps = opts.steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        derivs: Vec::with_capacity(steps),
        mode_labels: None,
        switch_times: vec![0.0],
        delta,
    };
    let mut x = x_init.clone();
    for i in 0..steps {
        let t = i as f64 * delta;
        if i > 0 {
            x = rk4_step(rhs, &x, delta);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState(t));
        }
        let d = rhs.eval(&x);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState(t));
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.derivs.push(d);
    }
    Ok(traj)
}

pub fn rk4_step(rhs: &dyn VectorField, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = rhs.eval(x);
    let k2 = rhs.eval(&(x + &k1 * (h / 2.0)));
    let k3 = rhs.eval(&(x + &k2 * (h / 2.0)));
    let k4 = rhs.eval(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Lorenz field `x' = s(y - x)`, `y' = x(r - z) - y`, `z' = xy - bz`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Lorenz {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for Lorenz {
    fn default() -> Self {
        Self { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }
}

impl Lorenz {
    /// The origin, plus the two symmetric equilibria when `rho > 1`.
    pub fn equilibria(&self) -> Vec<DVector<f64>> {
        let mut out = vec![DVector::zeros(3)];
        if self.rho > 1.0 {
            let s = (self.beta * (self.rho - 1.0)).sqrt();
            out.push(DVector::from_vec(vec![s, s, self.rho - 1.0]));
            out.push(DVector::from_vec(vec![-s, -s, self.rho - 1.0]));
        }
        out
    }
}

impl VectorField for Lorenz {
    fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        let (x, y, z) = (v[0], v[1], v[2]);
        DVector::from_vec(vec![self.sigma * (y - x), x * (self.rho - z) - y, x * y - self.beta * z])
    }
}

pub fn lorenz_rhs(sigma: f64, rho: f64, beta: f64) -> Lorenz {
    Lorenz { sigma, rho, beta }
}

/// Central-difference Jacobian.
pub fn jacobian(f: &dyn VectorField, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let f0 = f.eval(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        jac.set_column(j, &((f.eval(&xp) - f.eval(&xm)) / (2.0 * step)));
    }
    jac
}

/// One affine mode per equilibrium: `A_q = Df(e_q)`, `a_q = -A_q e_q`,
/// `C_q = Dh(e_q)`, `c_q = h(e_q)`, initial set `{e_q}`.
pub fn linearize_at_equilibria(
    rhs: &dyn VectorField,
    out: &dyn VectorField,
    equilibria: &[DVector<f64>],
    fd_step: f64,
) -> Result<PwlSystem, SimError> {
    if equilibria.is_empty() {
        return Err(SimError::InvalidArgument("no equilibria given".into()));
    }
    let p = out.eval(&equilibria[0]).len();
    let modes = equilibria
        .iter()
        .map(|e| {
            let r = rhs.eval(e).norm();
            if r > 1e-6 * (1.0 + e.norm()) {
                log::warn!("point {:?} is not an equilibrium (|f(e)| = {r:.3e})", e.as_slice());
            }
            let a = jacobian(rhs, e, fd_step);
            let drift = -(&a * e);
            let c = jacobian(out, e, fd_step);
            let offset = out.eval(e);
            AffineMode::new(a, drift, c, offset, InitialStates::Finite(vec![e.clone()]))
                .map_err(|err| SimError::DimensionMismatch(err.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    PwlSystem::new(modes, p).map_err(|err| SimError::DimensionMismatch(err.to_string()))
}

/// Adds i.i.d. zero-mean Gaussian noise to states and derivatives with
/// per-channel standard deviation `snr_percent / 100 * RMS(channel)`.
pub fn add_noise(traj: &Trajectory, snr_percent: f64, seed: u64) -> Result<Trajectory, SimError> {
    if !snr_percent.is_finite() || snr_percent < 0.0 {
        return Err(SimError::InvalidArgument("SNR must be nonnegative".into()));
    }
    if snr_percent == 0.0 || traj.is_empty() {
        return Ok(traj.clone());
    }
    let n = traj.dim().ok_or_else(|| SimError::DimensionMismatch("noise needs a constant state dimension".into()))?;
    let rms =
        |rows: &[DVector<f64>], c: usize| (rows.iter().map(|r| r[c] * r[c]).sum::<f64>() / rows.len() as f64).sqrt();
    let frac = snr_percent / 100.0;
    let state_sd: Vec<f64> = (0..n).map(|c| frac * rms(&traj.states, c)).collect();
    let deriv_sd: Vec<f64> = (0..n).map(|c| frac * rms(&traj.derivs, c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = traj.clone();
    for i in 0..traj.len() {
        for (c, sd) in state_sd.iter().enumerate() {
            out.states[i][c] += sd * normal.sample(&mut rng);
        }
        for (c, sd) in deriv_sd.iter().enumerate() {
            out.derivs[i][c] += sd * normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Glues trajectories end to end on one time grid; each junction is
/// recorded as a switch time.
pub fn concatenate(trajs: &[Trajectory]) -> Result<Trajectory, SimError> {
    let first = trajs.first().ok_or_else(|| SimError::InvalidArgument("nothing to concatenate".into()))?;
    let delta = first.delta;
    let n = first.dim();
    for t in trajs {
        if (t.delta - delta).abs() > 1e-12 * delta.abs() {
            return Err(SimError::DimensionMismatch(format!("sampling steps {} and {delta} differ", t.delta)));
        }
        if t.dim() != n || n.is_none() {
            return Err(SimError::DimensionMismatch("trajectories of different state dimension".into()));
        }
    }
    let labelled = trajs.iter().all(|t| t.mode_labels.is_some());
    let mut out = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
        mode_labels: labelled.then(Vec::new),
        switch_times: Vec::new(),
        delta,
    };
    let mut offset = 0.0;
    for (k, t) in trajs.iter().enumerate() {
        if k > 0 {
            offset = out.times.last().map_or(0.0, |&last| last + delta);
        }
        let start = t.times.first().copied().unwrap_or(0.0);
        out.times.extend(t.times.iter().map(|&s| s - start + offset));
        out.states.extend(t.states.iter().cloned());
        out.derivs.extend(t.derivs.iter().cloned());
        if let (Some(dst), Some(src)) = (out.mode_labels.as_mut(), t.mode_labels.as_ref()) {
            dst.extend(src.iter().copied());
        }
        let mut shifted: Vec<f64> = t.switch_times.iter().map(|&s| s - start + offset).collect();
        if shifted.first().is_none_or(|&s| s > offset) {
            shifted.insert(0, offset);
        }
        out.switch_times.extend(shifted);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn single(a: DMatrix<f64>, drift: DVector<f64>) -> PwlSystem {
        let n = a.nrows();
        let mode = AffineMode::new(a, drift, DMatrix::identity(n, n), DVector::zeros(n), InitialStates::Unconstrained)
            .unwrap();
        PwlSystem::new(vec![mode], n).unwrap()
    }

    #[test]
    fn constant_drift_flow() {
        let sys = single(DMatrix::zeros(2, 2), v(&[1.5, -0.5]));
        let law = SwitchingLaw::Schedule(vec![]);
        let traj = simulate_pwl(&sys, &law, &v(&[0.0, 0.0]), 0, &SimOptions::new(1.0, 0.1)).unwrap();
        assert_eq!(traj.len(), 10);
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert_relative_eq!(x[0], 1.5 * t, epsilon = 1e-13);
            assert_relative_eq!(x[1], -0.5 * t, epsilon = 1e-13);
        }
    }

    #[test]
    fn rotation_flow() {
        let sys = single(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), v(&[0.0, 0.0]));
        let traj = simulate_pwl(&sys, &SwitchingLaw::Schedule(vec![]), &v(&[1.0, 0.0]), 0, &SimOptions::new(6.0, 0.01))
            .unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x[0] - t.cos()).abs() < 1e-10);
            assert!((x[1] + t.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn schedule_rejects_foreign_entry_state() {
        let mode =
            AffineMode::linear(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), InitialStates::Finite(vec![v(&[1.0])]))
                .unwrap();
        let sys = PwlSystem::new(vec![mode], 1).unwrap();
        let law = SwitchingLaw::Schedule(vec![ScheduledSwitch { time: 0.5, mode: 0, entry_state: vec![2.0] }]);
        assert!(matches!(
            simulate_pwl(&sys, &law, &v(&[1.0]), 0, &SimOptions::new(1.0, 0.1)),
            Err(SimError::InvalidEntryState { mode: 0, .. })
        ));
        let ok = SwitchingLaw::Schedule(vec![ScheduledSwitch { time: 0.5, mode: 0, entry_state: vec![1.0 + 1e-12] }]);
        let traj = simulate_pwl(&sys, &ok, &v(&[1.0]), 0, &SimOptions::new(1.0, 0.1)).unwrap();
        assert_eq!(traj.switch_times, vec![0.0, 0.5]);
    }

    #[test]
    fn schedule_requires_increasing_times() {
        let sys = single(DMatrix::zeros(1, 1), v(&[1.0]));
        let law = SwitchingLaw::Schedule(vec![
            ScheduledSwitch { time: 0.5, mode: 0, entry_state: vec![0.0] },
            ScheduledSwitch { time: 0.5, mode: 0, entry_state: vec![0.0] },
        ]);
        assert!(matches!(
            simulate_pwl(&sys, &law, &v(&[0.0]), 0, &SimOptions::new(1.0, 0.1)),
            Err(SimError::InvalidSchedule(_))
        ));
    }

    #[test]
    fn voronoi_labels_follow_cells() {
        let m0 = AffineMode::new(
            DMatrix::zeros(1, 1),
            v(&[1.0]),
            DMatrix::identity(1, 1),
            v(&[0.0]),
            InitialStates::Unconstrained,
        )
        .unwrap();
        let m1 = AffineMode::new(
            DMatrix::zeros(1, 1),
            v(&[2.0]),
            DMatrix::identity(1, 1),
            v(&[0.0]),
            InitialStates::Unconstrained,
        )
        .unwrap();
        let sys = PwlSystem::new(vec![m0, m1], 1).unwrap();
        let law = SwitchingLaw::voronoi(vec![v(&[0.0]), v(&[1.0])]).unwrap();
        let traj = simulate_pwl(&sys, &law, &v(&[0.0]), 0, &SimOptions::new(1.0, 0.01)).unwrap();
        let labels = traj.mode_labels.as_ref().unwrap();
        for (x, &q) in traj.states.iter().zip(labels) {
            assert_eq!(q, voronoi_cell(&[v(&[0.0]), v(&[1.0])], x));
        }
        assert_eq!(traj.switch_times.len(), 2);
    }

    #[test]
    fn ode_exponential_decay() {
        let f = |x: &DVector<f64>| -x;
        let traj = simulate_ode(&f, &v(&[1.0]), 2.0, 1e-3).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            assert!((x[0] - (-t).exp()).abs() < 1e-8);
        }
        let zero = |x: &DVector<f64>| DVector::zeros(x.len());
        let traj = simulate_ode(&zero, &v(&[3.0, -1.0]), 1.0, 0.1).unwrap();
        assert!(traj.states.iter().all(|x| *x == v(&[3.0, -1.0])));
    }

    #[test]
    fn ode_divergence_is_reported() {
        let f = |x: &DVector<f64>| x.map(|v| v * v);
        assert!(matches!(simulate_ode(&f, &v(&[10.0]), 10.0, 0.01), Err(SimError::NonFiniteState(_))));
    }

    #[test]
    fn lorenz_field_properties() {
        let l = Lorenz::default();
        assert_eq!(l.eval(&v(&[0.0, 0.0, 0.0])), v(&[0.0, 0.0, 0.0]));
        for e in l.equilibria() {
            assert!(l.eval(&e).norm() < 1e-12);
        }
        let p = v(&[1.3, -0.7, 2.1]);
        let q = v(&[-1.3, 0.7, 2.1]);
        let (fp, fq) = (l.eval(&p), l.eval(&q));
        assert_eq!(fq, v(&[-fp[0], -fp[1], fp[2]]));
    }

    #[test]
    fn linearize_cubic() {
        let f = |x: &DVector<f64>| x.map(|s| s - s * s * s);
        let h = |x: &DVector<f64>| x.clone();
        let sys = linearize_at_equilibria(&f, &h, &[v(&[1.0])], 1e-5).unwrap();
        let m = sys.mode(0);
        assert_relative_eq!(m.dynamics[(0, 0)], -2.0, epsilon = 1e-8);
        assert_relative_eq!(m.drift[0], 2.0, epsilon = 1e-8);
        assert!(m.rhs(&v(&[1.0])).norm() < 1e-12);
    }

    #[test]
    fn linearize_linear_map() {
        let mat = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let mc = mat.clone();
        let f = move |x: &DVector<f64>| &mc * x;
        let h = |x: &DVector<f64>| x.clone();
        let sys = linearize_at_equilibria(&f, &h, &[v(&[0.0, 0.0])], 1e-4).unwrap();
        assert_relative_eq!(sys.mode(0).dynamics, mat, epsilon = 1e-9);
        assert_eq!(sys.mode(0).drift, v(&[0.0, 0.0]));
    }

    #[test]
    fn noise_zero_and_determinism() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0]]);
        let traj = simulate_ode(&f, &v(&[1.0, 0.0]), 5.0, 0.01).unwrap();
        assert_eq!(add_noise(&traj, 0.0, 3).unwrap(), traj);
        assert_eq!(add_noise(&traj, 5.0, 3).unwrap(), add_noise(&traj, 5.0, 3).unwrap());
        assert_ne!(add_noise(&traj, 5.0, 3).unwrap(), add_noise(&traj, 5.0, 4).unwrap());
    }

    #[test]
    fn concatenate_two() {
        let f = |x: &DVector<f64>| -x;
        let a = simulate_ode(&f, &v(&[1.0]), 1.0, 0.1).unwrap();
        let b = simulate_ode(&f, &v(&[2.0]), 1.0, 0.1).unwrap();
        assert_eq!(concatenate(std::slice::from_ref(&a)).unwrap(), a);
        let c = concatenate(&[a.clone(), b]).unwrap();
        assert_eq!(c.len(), 2 * a.len());
        assert_eq!(c.switch_times.len(), a.switch_times.len() + 1);
        assert_relative_eq!(c.switch_times[1], 1.0, epsilon = 1e-12);
        assert!(c.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn concatenate_rejects_mismatch() {
        let f = |x: &DVector<f64>| -x;
        let a = simulate_ode(&f, &v(&[1.0]), 1.0, 0.1).unwrap();
        let b = simulate_ode(&f, &v(&[1.0, 1.0]), 1.0, 0.1).unwrap();
        assert!(matches!(concatenate(&[a.clone(), b]), Err(SimError::DimensionMismatch(_))));
        let c = simulate_ode(&f, &v(&[1.0]), 1.0, 0.05).unwrap();
        assert!(concatenate(&[a, c]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = |x: &DVector<f64>| DVector::from_vec(vec![x[1], -x[0] / 3.0]);
        let mut traj = simulate_ode(&f, &v(&[1.0, 0.1]), 1.0, 0.1).unwrap();
        traj.mode_labels = Some((0..traj.len()).map(|i| i % 3).collect());
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap().into_trajectory(Some(&traj.sidecar())).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn fd_dataset_drops_switch_neighbours() {
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let states: Vec<DVector<f64>> = times.iter().map(|&t| v(&[2.0 * t])).collect();
        let ds = fd_dataset(&times, &states, &[0.0, 5.0]).unwrap();
        assert_eq!(ds.times(), &[1.0, 2.0, 3.0, 6.0, 7.0, 8.0]);
        assert!(ds.derivs().iter().all(|d| (d[0] - 2.0).abs() < 1e-12));
    }
}
