//! Piecewise-linear (PWL) systems, linear systems with state jumps (LSSJ) and
//! switched AR models, together with the structural transformations between
//! them: affine-to-linear embedding, merging into one LSSJ, minimal reduction
//! and splitting an LSSJ back into modes along a partition of its pieces.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{block_diag, columns_to_matrix, default_rank_tol, krylov_basis};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("system has nonzero affine terms; embed it into a linear system first")]
    AffineInput,
    #[error("mode {0} has an unconstrained initial set, which has no finite LSSJ image")]
    UnconstrainedInitialStates(usize),
    #[error("inconsistent partition: {0}")]
    InconsistentPartition(String),
    #[error("malformed system document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Set of states a mode may be entered in after a switch.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialStates {
    /// Finitely many designated entry states.
    Finite(Vec<DVector<f64>>),
    /// The whole state space.
    Unconstrained,
    /// All states whose last coordinate is 1, i.e. the image of an
    /// unconstrained affine mode under the linear embedding.
    UnitLastCoordinate,
}

impl InitialStates {
    /// Whether `x` belongs to the set, up to `tol` in the max norm.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self {
            InitialStates::Finite(states) => states.iter().any(|s| s.len() == x.len() && (s - x).amax() <= tol),
            InitialStates::Unconstrained => true,
            InitialStates::UnitLastCoordinate => !x.is_empty() && (x[x.len() - 1] - 1.0).abs() <= tol,
        }
    }

    pub fn finite(&self) -> Option<&[DVector<f64>]> {
        match self {
            InitialStates::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// One affine subsystem `x' = A x + a`, `y = C x + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMode {
    pub dynamics: DMatrix<f64>,
    pub drift: DVector<f64>,
    pub output: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub initial_states: InitialStates,
}

impl AffineMode {
    pub fn new(
        dynamics: DMatrix<f64>,
        drift: DVector<f64>,
        output: DMatrix<f64>,
        offset: DVector<f64>,
        initial_states: InitialStates,
    ) -> Result<Self, ModelError> {
        let n = dynamics.nrows();
        if dynamics.ncols() != n {
            return Err(ModelError::InvalidShape(format!(
                "dynamics matrix is {}x{}, expected square",
                n,
                dynamics.ncols()
            )));
        }
        if drift.len() != n {
            return Err(ModelError::InvalidShape(format!("drift has length {}, expected {n}", drift.len())));
        }
        if output.ncols() != n {
            return Err(ModelError::InvalidShape(format!(
                "output matrix has {} columns, expected {n}",
                output.ncols()
            )));
        }
        if offset.len() != output.nrows() {
            return Err(ModelError::InvalidShape(format!(
                "output offset has length {}, expected {}",
                offset.len(),
                output.nrows()
            )));
        }
        match &initial_states {
            InitialStates::Finite(states) => {
                if states.is_empty() {
                    return Err(ModelError::InvalidShape("empty initial-state set".into()));
                }
                if let Some(bad) = states.iter().find(|s| s.len() != n) {
                    return Err(ModelError::InvalidShape(format!(
                        "initial state of length {}, expected {n}",
                        bad.len()
                    )));
                }
            }
            InitialStates::UnitLastCoordinate if n == 0 => {
                return Err(ModelError::InvalidShape("lifted initial set needs n >= 1".into()));
            }
            _ => {}
        }
        Ok(Self { dynamics, drift, output, offset, initial_states })
    }

    /// Linear mode (`a = 0`, `c = 0`).
    pub fn linear(
        dynamics: DMatrix<f64>,
        output: DMatrix<f64>,
        initial_states: InitialStates,
    ) -> Result<Self, ModelError> {
        let n = dynamics.nrows();
        let p = output.nrows();
        Self::new(dynamics, DVector::zeros(n), output, DVector::zeros(p), initial_states)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.output.nrows()
    }

    pub fn is_linear(&self) -> bool {
        self.drift.iter().all(|&v| v == 0.0) && self.offset.iter().all(|&v| v == 0.0)
    }

    /// Vector field `A x + a`.
    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.dynamics * x + &self.drift
    }

    /// Readout `C x + c`.
    pub fn readout(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.output * x + &self.offset
    }
}

/// Finite collection of affine modes sharing an output space.
#[derive(Clone, Debug, PartialEq)]
pub struct PwlSystem {
    modes: Vec<AffineMode>,
    output_dim: usize,
}

impl PwlSystem {
    pub fn new(modes: Vec<AffineMode>, output_dim: usize) -> Result<Self, ModelError> {
        if modes.is_empty() {
            return Err(ModelError::InvalidShape("a PWL system needs at least one mode".into()));
        }
        if let Some((q, m)) = modes.iter().enumerate().find(|(_, m)| m.output_dim() != output_dim) {
            return Err(ModelError::InvalidShape(format!(
                "mode {q} has output dimension {}, expected {output_dim}",
                m.output_dim()
            )));
        }
        Ok(Self { modes, output_dim })
    }

    pub fn modes(&self) -> &[AffineMode] {
        &self.modes
    }

    pub fn mode(&self, q: usize) -> &AffineMode {
        &self.modes[q]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_linear(&self) -> bool {
        self.modes.iter().all(AffineMode::is_linear)
    }

    pub fn dimension(&self) -> SystemDimension {
        dimension(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SystemDoc::from(self)).expect("system document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let doc: SystemDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

/// Linear system with state jumps: one linear mode `(n, C, A, X0)` with a
/// finite set of jump targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Lssj {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x0: Vec<DVector<f64>>,
}

impl Lssj {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, x0: Vec<DVector<f64>>) -> Result<Self, ModelError> {
        // Reuse the mode validation.
        AffineMode::linear(a.clone(), c.clone(), InitialStates::Finite(x0.clone()))?;
        Ok(Self { a, c, x0 })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// The equivalent single-mode linear PWL.
    pub fn to_pwl(&self) -> PwlSystem {
        let mode = AffineMode::linear(self.a.clone(), self.c.clone(), InitialStates::Finite(self.x0.clone()))
            .expect("validated on construction");
        PwlSystem::new(vec![mode], self.output_dim()).expect("single mode")
    }

    /// Inverse of [`Lssj::to_pwl`]; fails unless the system has one linear
    /// mode with finitely many initial states.
    pub fn from_pwl(sys: &PwlSystem) -> Result<Self, ModelError> {
        if sys.num_modes() != 1 {
            return Err(ModelError::InvalidShape(format!("an LSSJ has exactly one mode, got {}", sys.num_modes())));
        }
        let m = sys.mode(0);
        if !m.is_linear() {
            return Err(ModelError::AffineInput);
        }
        let x0 = m.initial_states.finite().ok_or(ModelError::UnconstrainedInitialStates(0))?.to_vec();
        Ok(Self { a: m.dynamics.clone(), c: m.output.clone(), x0 })
    }

    pub fn to_json(&self) -> String {
        self.to_pwl().to_json()
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        Self::from_pwl(&PwlSystem::from_json(s)?)
    }
}

/// Switched AR model: per mode, `f^(n) = sum_{k=1..n} A_{q,k} f^(n-k)` with
/// `p x p` coefficient matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct SarsModel {
    order: usize,
    output_dim: usize,
    modes: Vec<Vec<DMatrix<f64>>>,
}

impl SarsModel {
    pub fn new(order: usize, output_dim: usize, modes: Vec<Vec<DMatrix<f64>>>) -> Result<Self, ModelError> {
        if order == 0 {
            return Err(ModelError::InvalidShape("AR order must be positive".into()));
        }
        if modes.is_empty() {
            return Err(ModelError::InvalidShape("a SARS model needs at least one mode".into()));
        }
        for (q, coeffs) in modes.iter().enumerate() {
            if coeffs.len() != order {
                return Err(ModelError::InvalidShape(format!(
                    "mode {q} has {} coefficient matrices, expected {order}",
                    coeffs.len()
                )));
            }
            if coeffs.iter().any(|m| m.shape() != (output_dim, output_dim)) {
                return Err(ModelError::InvalidShape(format!(
                    "mode {q} has a coefficient matrix that is not {output_dim}x{output_dim}"
                )));
            }
        }
        Ok(Self { order, output_dim, modes })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn modes(&self) -> &[Vec<DMatrix<f64>>] {
        &self.modes
    }

    pub fn to_json(&self) -> String {
        let doc = SarsDoc {
            output_dim: self.output_dim,
            order: self.order,
            modes: self
                .modes
                .iter()
                .map(|c| SarsModeDoc { coefficients: c.iter().map(matrix_rows).collect() })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("SARS document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let doc: SarsDoc = serde_json::from_str(s)?;
        let p = doc.output_dim;
        let modes = doc
            .modes
            .iter()
            .map(|m| m.coefficients.iter().map(|rows| rows_matrix(rows, p)).collect())
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        Self::new(doc.order, p, modes)
    }
}

/// `(|Q|, n)` with `n = sum n_q` for linear and `sum (n_q + 1)` for affine systems.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDimension {
    pub num_modes: usize,
    pub total_continuous: usize,
}

impl PartialOrd for SystemDimension {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.num_modes.cmp(&other.num_modes), self.total_continuous.cmp(&other.total_continuous)) {
            (a, b) if a == b => Some(a),
            (Ordering::Equal, o) | (o, Ordering::Equal) => Some(o),
            _ => None,
        }
    }
}

/// Disjoint, nonempty blocks of piece indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Blocks are normalized: each sorted, blocks ordered by their smallest element.
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for b in &mut blocks {
            if b.is_empty() {
                return Err(ModelError::InconsistentPartition("empty block".into()));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if !seen.insert(i) {
                    return Err(ModelError::InconsistentPartition(format!("index {i} appears twice")));
                }
            }
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn single(indices: &[usize]) -> Result<Self, ModelError> {
        Self::new(vec![indices.to_vec()])
    }

    pub fn singletons(indices: &[usize]) -> Result<Self, ModelError> {
        Self::new(indices.iter().map(|&i| vec![i]).collect())
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn ground_set(&self) -> BTreeSet<usize> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn block_of(&self, index: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.binary_search(&index).is_ok())
    }

    /// Checks that the blocks cover exactly `ground`.
    pub fn check_covers(&self, ground: &[usize]) -> Result<(), ModelError> {
        let want: BTreeSet<usize> = ground.iter().copied().collect();
        let have = self.ground_set();
        if let Some(i) = want.difference(&have).next() {
            return Err(ModelError::InconsistentPartition(format!("index {i} is not in any block")));
        }
        if let Some(i) = have.difference(&want).next() {
            return Err(ModelError::InconsistentPartition(format!("unknown index {i}")));
        }
        Ok(())
    }
}

pub fn dimension(sys: &PwlSystem) -> SystemDimension {
    let extra = usize::from(!sys.is_linear());
    SystemDimension {
        num_modes: sys.num_modes(),
        total_continuous: sys.modes().iter().map(|m| m.state_dim() + extra).sum(),
    }
}

/// Linear PWL with one extra constant coordinate per mode:
/// `A^L = [[A, a], [0, 0]]`, `C^L = [C, c]`, initial states lifted to `(x, 1)`.
pub fn embed_affine_to_linear(sys: &PwlSystem) -> PwlSystem {
    let modes = sys
        .modes()
        .iter()
        .map(|m| {
            let n = m.state_dim();
            let p = m.output_dim();
            let mut a = DMatrix::zeros(n + 1, n + 1);
            a.view_mut((0, 0), (n, n)).copy_from(&m.dynamics);
            a.view_mut((0, n), (n, 1)).copy_from(&m.drift);
            let mut c = DMatrix::zeros(p, n + 1);
            c.view_mut((0, 0), (p, n)).copy_from(&m.output);
            c.view_mut((0, n), (p, 1)).copy_from(&m.offset);
            let init = match &m.initial_states {
                InitialStates::Finite(states) => InitialStates::Finite(states.iter().map(lift).collect()),
                InitialStates::Unconstrained | InitialStates::UnitLastCoordinate => InitialStates::UnitLastCoordinate,
            };
            AffineMode::linear(a, c, init).expect("embedding preserves shapes")
        })
        .collect();
    PwlSystem::new(modes, sys.output_dim()).expect("embedding preserves output dimension")
}

/// Appends a trailing 1.
pub fn lift(x: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(x.len() + 1);
    v.rows_mut(0, x.len()).copy_from(x);
    v[x.len()] = 1.0;
    v
}

/// Block-diagonal LSSJ of a linear PWL. Initial states of mode `q` are
/// zero-padded into the `q`-th block; their order is mode-major.
pub fn merge_to_lssj(sys: &PwlSystem) -> Result<Lssj, ModelError> {
    if !sys.is_linear() {
        return Err(ModelError::AffineInput);
    }
    let dims: Vec<usize> = sys.modes().iter().map(AffineMode::state_dim).collect();
    let n: usize = dims.iter().sum();
    let a = block_diag(&sys.modes().iter().map(|m| &m.dynamics).collect::<Vec<_>>());
    let mut c = DMatrix::zeros(sys.output_dim(), n);
    let mut x0 = Vec::new();
    let mut off = 0;
    for (q, m) in sys.modes().iter().enumerate() {
        let nq = dims[q];
        c.view_mut((0, off), (sys.output_dim(), nq)).copy_from(&m.output);
        let states = m.initial_states.finite().ok_or(ModelError::UnconstrainedInitialStates(q))?;
        for s in states {
            let mut z = DVector::zeros(n);
            z.rows_mut(off, nq).copy_from(s);
            x0.push(z);
        }
        off += nq;
    }
    Lssj::new(a, c, x0)
}

/// Span-reachable and observable LSSJ with the same Markov sequences
/// `C A^k x0` for every `x0` (order of `X0` is kept).
///
/// The state space is first restricted to the orthonormal basis of
/// `Span{A^k x0}`, then projected onto the orthogonal complement of the
/// unobservable subspace.
pub fn reduce_minimal(sys: &Lssj, rank_tol: Option<f64>) -> Lssj {
    let n = sys.n();
    if n == 0 {
        return sys.clone();
    }
    let tol = rank_tol.unwrap_or_else(|| default_rank_tol(n, n * sys.x0.len().max(1)));
    let seeds = columns_to_matrix(n, &sys.x0);
    let v = krylov_basis(&sys.a, &seeds, tol);
    let a_r = v.transpose() * &sys.a * &v;
    let c_r = &sys.c * &v;
    let x_r: Vec<DVector<f64>> = sys.x0.iter().map(|x| v.transpose() * x).collect();

    let w = krylov_basis(&a_r.transpose(), &c_r.transpose(), tol);
    let a_m = w.transpose() * &a_r * &w;
    let c_m = &c_r * &w;
    let x_m = x_r.iter().map(|x| w.transpose() * x).collect();
    Lssj { a: a_m, c: c_m, x0: x_m }
}

pub fn check_span_reachable(sys: &Lssj, tol: Option<f64>) -> bool {
    let n = sys.n();
    if n == 0 {
        return true;
    }
    let tol = tol.unwrap_or_else(|| default_rank_tol(n, n * sys.x0.len().max(1)));
    krylov_basis(&sys.a, &columns_to_matrix(n, &sys.x0), tol).ncols() == n
}

pub fn check_observable(sys: &Lssj, tol: Option<f64>) -> bool {
    let n = sys.n();
    if n == 0 {
        return true;
    }
    let tol = tol.unwrap_or_else(|| default_rank_tol(n * sys.output_dim().max(1), n));
    krylov_basis(&sys.a.transpose(), &sys.c.transpose(), tol).ncols() == n
}

/// Splits an observable LSSJ into one linear mode per partition block.
///
/// `switch_states` lists, for each analytic piece, the state the LSSJ jumps
/// to at the start of that piece. Mode `q` lives on
/// `Span{A^k x | x a switch state of block q}` (orthonormal basis), with
/// `A`, `C` restricted to it and the block's switch states as its initial set.
pub fn split_by_partition(
    sys: &Lssj,
    partition: &Partition,
    switch_states: &[(usize, DVector<f64>)],
    rank_tol: Option<f64>,
) -> Result<PwlSystem, ModelError> {
    let n = sys.n();
    let pieces: Vec<usize> = switch_states.iter().map(|(i, _)| *i).collect();
    partition.check_covers(&pieces)?;
    if let Some((_, x)) = switch_states.iter().find(|(_, x)| x.len() != n) {
        return Err(ModelError::InvalidShape(format!("switch state of length {}, expected {n}", x.len())));
    }
    let mut modes = Vec::with_capacity(partition.len());
    for block in partition.blocks() {
        let states: Vec<DVector<f64>> =
            switch_states.iter().filter(|(i, _)| block.binary_search(i).is_ok()).map(|(_, x)| x.clone()).collect();
        let tol = rank_tol.unwrap_or_else(|| default_rank_tol(n, n * states.len()));
        let v = krylov_basis(&sys.a, &columns_to_matrix(n, &states), tol);
        let a_q = v.transpose() * &sys.a * &v;
        let c_q = &sys.c * &v;
        let x_q = states.iter().map(|x| v.transpose() * x).collect();
        modes.push(AffineMode::linear(a_q, c_q, InitialStates::Finite(x_q))?);
    }
    PwlSystem::new(modes, sys.output_dim())
}

/// Companion-form linear PWL of a SARS model over the regressor
/// `x = (f^(n-1), ..., f', f)`; every mode has an unconstrained initial set.
pub fn sars_to_pwl(sars: &SarsModel) -> PwlSystem {
    let n = sars.order();
    let p = sars.output_dim();
    let dim = n * p;
    let modes = sars
        .modes()
        .iter()
        .map(|coeffs| {
            let mut a = DMatrix::zeros(dim, dim);
            for (k, ak) in coeffs.iter().enumerate() {
                a.view_mut((0, k * p), (p, p)).copy_from(ak);
            }
            for j in 1..n {
                a.view_mut((j * p, (j - 1) * p), (p, p)).fill_with_identity();
            }
            let mut c = DMatrix::zeros(p, dim);
            c.view_mut((0, (n - 1) * p), (p, p)).fill_with_identity();
            AffineMode::linear(a, c, InitialStates::Unconstrained).expect("companion shapes")
        })
        .collect();
    PwlSystem::new(modes, p).expect("SARS has at least one mode")
}

// ---- JSON documents ----

#[derive(Serialize, Deserialize)]
pub(crate) struct SystemDoc {
    pub output_dim: usize,
    pub modes: Vec<ModeDoc>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ModeDoc {
    #[serde(rename = "A")]
    pub dynamics: Vec<Vec<f64>>,
    #[serde(rename = "a")]
    pub drift: Vec<f64>,
    #[serde(rename = "C")]
    pub output: Vec<Vec<f64>>,
    #[serde(rename = "c")]
    pub offset: Vec<f64>,
    pub initial_states: InitialStatesDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub(crate) enum InitialStatesDoc {
    Finite(Vec<Vec<f64>>),
    Keyword(InitialKeyword),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum InitialKeyword {
    Unconstrained,
    UnitLastCoordinate,
}

#[derive(Serialize, Deserialize)]
struct SarsDoc {
    output_dim: usize,
    order: usize,
    modes: Vec<SarsModeDoc>,
}

#[derive(Serialize, Deserialize)]
struct SarsModeDoc {
    coefficients: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Row-major nested array to matrix; `cols` is used when there are no rows.
pub(crate) fn rows_matrix(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>, ModelError> {
    let ncols = rows.first().map_or(cols, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::InvalidShape("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<&PwlSystem> for SystemDoc {
    fn from(sys: &PwlSystem) -> Self {
        let modes = sys
            .modes()
            .iter()
            .map(|m| ModeDoc {
                dynamics: matrix_rows(&m.dynamics),
                drift: m.drift.iter().copied().collect(),
                output: matrix_rows(&m.output),
                offset: m.offset.iter().copied().collect(),
                initial_states: match &m.initial_states {
                    InitialStates::Finite(v) => {
                        InitialStatesDoc::Finite(v.iter().map(|x| x.iter().copied().collect()).collect())
                    }
                    InitialStates::Unconstrained => InitialStatesDoc::Keyword(InitialKeyword::Unconstrained),
                    InitialStates::UnitLastCoordinate => InitialStatesDoc::Keyword(InitialKeyword::UnitLastCoordinate),
                },
            })
            .collect();
        SystemDoc { output_dim: sys.output_dim(), modes }
    }
}

impl TryFrom<SystemDoc> for PwlSystem {
    type Error = ModelError;

    fn try_from(doc: SystemDoc) -> Result<Self, ModelError> {
        let p = doc.output_dim;
        let modes = doc
            .modes
            .into_iter()
            .map(|m| {
                let n = m.dynamics.len();
                let dynamics = rows_matrix(&m.dynamics, 0)?;
                let output = if m.output.is_empty() { DMatrix::zeros(0, n) } else { rows_matrix(&m.output, n)? };
                let init = match m.initial_states {
                    InitialStatesDoc::Finite(v) => {
                        InitialStates::Finite(v.into_iter().map(DVector::from_vec).collect())
                    }
                    InitialStatesDoc::Keyword(InitialKeyword::Unconstrained) => InitialStates::Unconstrained,
                    InitialStatesDoc::Keyword(InitialKeyword::UnitLastCoordinate) => InitialStates::UnitLastCoordinate,
                };
                AffineMode::new(dynamics, DVector::from_vec(m.drift), output, DVector::from_vec(m.offset), init)
            })
            .collect::<Result<Vec<_>, _>>()?;
        PwlSystem::new(modes, p)
    }
}
