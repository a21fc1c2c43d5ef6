//! Markov parameters, finite Hankel matrices and the two realization
//! algorithms: a Kalman-Ho style LSSJ realization and the K-N realization
//! that clusters analytic pieces into modes of bounded dimension.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, default_rank_tol, pinv, rank_above, singular_values, svd};
use crate::model::{matrix_rows, rows_matrix, AffineMode, InitialStates, Lssj, ModelError, Partition, PwlSystem};

pub use crate::linalg::numerical_rank;

/// Relative residual of the shift equation above which the realization is rejected.
pub const SHIFT_RESIDUAL_TOL: f64 = 1e-6;
/// Relative distance under which two extracted initial states are merged.
pub const DEDUP_TOL: f64 = 1e-9;
/// Largest piece count the exhaustive partition search accepts.
pub const MAX_EXHAUSTIVE_PIECES: usize = 12;

#[derive(Debug, Error)]
pub enum RealizationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Markov table has order {have}, the Hankel matrix needs {needed}")]
    InsufficientOrder { needed: usize, have: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shift equation inconsistent (relative residual {relative_residual:.3e}); increase L or M")]
    RankDeficientShift { relative_residual: f64 },
    #[error("no partition into at most {k} blocks of rank at most {n}")]
    NotFound { k: usize, n: usize },
    #[error("exhaustive partition search supports at most {MAX_EXHAUSTIVE_PIECES} pieces, got {0}")]
    TooManyPieces(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("malformed Hankel document: {0}")]
    Json(#[from] serde_json::Error),
}

/// `C A^k x0` for `k = 0..=k_max`.
pub fn markov_from_lssj(sys: &Lssj, x0: &DVector<f64>, k_max: usize) -> Result<Vec<DVector<f64>>, RealizationError> {
    if x0.len() != sys.n() {
        return Err(RealizationError::DimensionMismatch(format!(
            "initial state has length {}, system has n = {}",
            x0.len(),
            sys.n()
        )));
    }
    let mut out = Vec::with_capacity(k_max + 1);
    let mut x = x0.clone();
    for k in 0..=k_max {
        out.push(&sys.c * &x);
        if k < k_max {
            x = &sys.a * x;
        }
    }
    Ok(out)
}

/// Markov sequences `M_i(k)`, one per analytic piece, all of the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovTable {
    output_dim: usize,
    sequences: Vec<Vec<DVector<f64>>>,
}

impl MarkovTable {
    pub fn new(output_dim: usize, sequences: Vec<Vec<DVector<f64>>>) -> Result<Self, RealizationError> {
        let len = sequences.first().map_or(0, Vec::len);
        if sequences.is_empty() || len == 0 {
            return Err(RealizationError::InvalidArgument("Markov table needs at least one nonempty sequence".into()));
        }
        if sequences.iter().any(|s| s.len() != len) {
            return Err(RealizationError::DimensionMismatch("Markov sequences of unequal length".into()));
        }
        if sequences.iter().flatten().any(|v| v.len() != output_dim) {
            return Err(RealizationError::DimensionMismatch(format!("Markov parameter not of length {output_dim}")));
        }
        Ok(Self { output_dim, sequences })
    }

    /// One sequence per initial state of `sys`, in `X0` order.
    pub fn from_lssj(sys: &Lssj, k_max: usize) -> Result<Self, RealizationError> {
        let seqs = sys.x0.iter().map(|x| markov_from_lssj(sys, x, k_max)).collect::<Result<Vec<_>, _>>()?;
        Self::new(sys.output_dim(), seqs)
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn k_max(&self) -> usize {
        self.sequences[0].len() - 1
    }

    pub fn num_pieces(&self) -> usize {
        self.sequences.len()
    }

    pub fn sequence(&self, piece: usize) -> &[DVector<f64>] {
        &self.sequences[piece]
    }
}

/// Finite block of the Hankel matrix.
///
/// Rows are ordered `(i, r)` with `i = 0..=l` outer and output component `r`
/// inner; columns are grouped by piece (in `pieces` order) with the shift
/// `j = 0..=m` inner. Entry `((i, r), (j, piece))` is `M_piece(i + j)_r`.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelMatrix {
    pub l: usize,
    pub m: usize,
    pub p: usize,
    pub pieces: Vec<usize>,
    pub entries: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct HankelDoc {
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "R")]
    r: usize,
    p: usize,
    pieces: Vec<usize>,
    entries: Vec<Vec<f64>>,
}

impl HankelMatrix {
    pub fn r(&self) -> usize {
        self.pieces.len()
    }

    pub fn row_index(&self, i: usize, r: usize) -> usize {
        i * self.p + r
    }

    /// Column of shift `j` in the group at position `pos` of `pieces`.
    pub fn column_index(&self, pos: usize, j: usize) -> usize {
        pos * (self.m + 1) + j
    }

    /// Piece label of a column.
    pub fn column_piece(&self, col: usize) -> usize {
        self.pieces[col / (self.m + 1)]
    }

    /// All columns of the group belonging to piece position `pos`.
    pub fn piece_columns(&self, pos: usize) -> DMatrix<f64> {
        self.entries.columns(self.column_index(pos, 0), self.m + 1).into_owned()
    }

    pub fn to_json(&self) -> String {
        let doc = HankelDoc {
            l: self.l,
            m: self.m,
            r: self.r(),
            p: self.p,
            pieces: self.pieces.clone(),
            entries: matrix_rows(&self.entries),
        };
        serde_json::to_string_pretty(&doc).expect("Hankel document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RealizationError> {
        let doc: HankelDoc = serde_json::from_str(s)?;
        if doc.pieces.len() != doc.r {
            return Err(RealizationError::DimensionMismatch(format!(
                "R = {} but {} piece labels",
                doc.r,
                doc.pieces.len()
            )));
        }
        let mut sorted = doc.pieces.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != doc.pieces.len() {
            return Err(RealizationError::InvalidArgument("duplicate piece labels".into()));
        }
        let rows = (doc.l + 1) * doc.p;
        let cols = doc.r * (doc.m + 1);
        let entries = rows_matrix(&doc.entries, cols)?;
        if entries.shape() != (rows, cols) {
            return Err(RealizationError::DimensionMismatch(format!(
                "entries are {}x{}, expected {rows}x{cols}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { l: doc.l, m: doc.m, p: doc.p, pieces: doc.pieces, entries })
    }
}

/// Hankel block over the first `r` pieces with row depth `l` and column depth `m`.
pub fn build_hankel(table: &MarkovTable, l: usize, m: usize, r: usize) -> Result<HankelMatrix, RealizationError> {
    if table.k_max() < l + m {
        return Err(RealizationError::InsufficientOrder { needed: l + m, have: table.k_max() });
    }
    if r == 0 || r > table.num_pieces() {
        return Err(RealizationError::InvalidArgument(format!("R = {r} must lie in 1..={}", table.num_pieces())));
    }
    let p = table.output_dim();
    let mut h = HankelMatrix { l, m, p, pieces: (0..r).collect(), entries: DMatrix::zeros((l + 1) * p, r * (m + 1)) };
    for pos in 0..r {
        let seq = table.sequence(pos);
        for j in 0..=m {
            let col = h.column_index(pos, j);
            for i in 0..=l {
                let row = h.row_index(i, 0);
                h.entries.view_mut((row, col), (p, 1)).copy_from(&seq[i + j]);
            }
        }
    }
    Ok(h)
}

fn resolve_tol(h: &HankelMatrix, rank_tol: Option<f64>) -> f64 {
    rank_tol.unwrap_or_else(|| default_rank_tol(h.entries.nrows(), h.entries.ncols()))
}

/// Absolute singular-value threshold for rank decisions on `h` and its column blocks.
fn rank_threshold(h: &HankelMatrix, rank_tol: Option<f64>) -> f64 {
    let tol = resolve_tol(h, rank_tol);
    let smax = singular_values(&h.entries).first().copied().unwrap_or(0.0);
    if smax > 0.0 {
        tol * smax
    } else {
        tol
    }
}

/// Output of the Kalman-Ho step with the state reached at the start of
/// every analytic piece (before deduplication).
#[derive(Clone, Debug)]
pub struct HoRealization {
    pub system: Lssj,
    pub piece_states: Vec<(usize, DVector<f64>)>,
    /// Balanced reachability factor `R` with `H = O R`.
    pub reach: DMatrix<f64>,
}

/// Minimal LSSJ realization of the Markov data in `h`. The shift equation
/// pairs column shifts `0..M` with `1..=M`, so `M >= 1` is required.
pub fn kalman_ho(h: &HankelMatrix, rank_tol: Option<f64>) -> Result<Lssj, RealizationError> {
    kalman_ho_detailed(h, rank_tol).map(|r| r.system)
}

pub fn kalman_ho_detailed(h: &HankelMatrix, rank_tol: Option<f64>) -> Result<HoRealization, RealizationError> {
    if h.m == 0 {
        return Err(RealizationError::InvalidArgument(
            "Hankel matrix needs column depth >= 1 for the shift equation".into(),
        ));
    }
    let (rows, cols) = h.entries.shape();
    let p = h.p;
    let threshold = rank_threshold(h, rank_tol);

    // H = O R with balanced factors from the truncated SVD.
    let dec = svd(&h.entries);
    let n = dec.s.iter().take_while(|&&s| s > threshold).count();
    let mut obs = DMatrix::zeros(rows, n);
    let mut reach = DMatrix::zeros(n, cols);
    for k in 0..n {
        let s = dec.s[k].sqrt();
        obs.set_column(k, &(dec.u.column(k) * s));
        reach.set_row(k, &(dec.vt.row(k) * s));
    }

    let c = obs.rows(0, p).into_owned();

    // Shift equation R_hat = A R_bar over columns j = 0..m-1 of every piece.
    let r = h.r();
    let mut r_bar = DMatrix::zeros(n, r * h.m);
    let mut r_hat = DMatrix::zeros(n, r * h.m);
    for pos in 0..r {
        for j in 0..h.m {
            let dst = pos * h.m + j;
            r_bar.set_column(dst, &reach.column(h.column_index(pos, j)));
            r_hat.set_column(dst, &reach.column(h.column_index(pos, j + 1)));
        }
    }
    let a = if n == 0 {
        DMatrix::zeros(0, 0)
    } else {
        let a = &r_hat * pinv(&r_bar, resolve_tol(h, rank_tol));
        let scale = r_hat.norm();
        if scale > 0.0 {
            let rel = (&r_hat - &a * &r_bar).norm() / scale;
            if rel > SHIFT_RESIDUAL_TOL {
                return Err(RealizationError::RankDeficientShift { relative_residual: rel });
            }
        }
        a
    };

    let piece_states: Vec<(usize, DVector<f64>)> =
        (0..r).map(|pos| (h.pieces[pos], reach.column(h.column_index(pos, 0)).into_owned())).collect();
    let mut x0: Vec<DVector<f64>> = Vec::new();
    for (_, x) in &piece_states {
        if !x0.iter().any(|y| nearly_equal(x, y)) {
            x0.push(x.clone());
        }
    }
    let system = Lssj::new(a, c, x0)?;
    Ok(HoRealization { system, piece_states, reach })
}

fn nearly_equal(x: &DVector<f64>, y: &DVector<f64>) -> bool {
    let scale = x.norm().max(y.norm());
    (x - y).norm() <= DEDUP_TOL * scale
}

/// Column sub-matrices of `h`, one per partition block, all rows kept.
pub fn partition_hankel(h: &HankelMatrix, partition: &Partition) -> Result<Vec<DMatrix<f64>>, RealizationError> {
    for &i in &partition.ground_set() {
        if !h.pieces.contains(&i) {
            return Err(ModelError::InconsistentPartition(format!(
                "piece {i} is not a column group of the Hankel matrix"
            ))
            .into());
        }
    }
    Ok(partition
        .blocks()
        .iter()
        .map(|block| {
            let groups: Vec<DMatrix<f64>> = block
                .iter()
                .map(|label| {
                    let pos = h.pieces.iter().position(|p| p == label).expect("checked above");
                    h.piece_columns(pos)
                })
                .collect();
            groups.iter().skip(1).fold(groups[0].clone(), |acc, g| linalg::hcat(&acc, g))
        })
        .collect())
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionSearch {
    #[default]
    Greedy,
    Exhaustive,
}

/// Rank oracle over unions of piece column groups.
struct BlockRanks<'a> {
    h: &'a HankelMatrix,
    threshold: f64,
}

impl BlockRanks<'_> {
    /// Rank of the union of the column groups at the given piece positions.
    fn rank(&self, positions: &[usize]) -> usize {
        let mut m = DMatrix::zeros(self.h.entries.nrows(), 0);
        for &pos in positions {
            m = linalg::hcat(&m, &self.h.piece_columns(pos));
        }
        rank_above(&m, self.threshold)
    }
}

/// Partition of the pieces of `h` into at most `k` blocks whose Hankel column
/// blocks have numerical rank at most `n`.
pub fn find_kn_partition(
    h: &HankelMatrix,
    k: usize,
    n: usize,
    rank_tol: Option<f64>,
    search: PartitionSearch,
) -> Result<Partition, RealizationError> {
    if k == 0 {
        return Err(RealizationError::InvalidArgument("K must be at least 1".into()));
    }
    let oracle = BlockRanks { h, threshold: rank_threshold(h, rank_tol) };
    let blocks = match search {
        PartitionSearch::Greedy => greedy_partition(&oracle, h.r(), k, n),
        PartitionSearch::Exhaustive => {
            if h.r() > MAX_EXHAUSTIVE_PIECES {
                return Err(RealizationError::TooManyPieces(h.r()));
            }
            exhaustive_partition(&oracle, h.r(), k, n)
        }
    }
    .ok_or(RealizationError::NotFound { k, n })?;
    let labelled = blocks.into_iter().map(|b| b.into_iter().map(|pos| h.pieces[pos]).collect()).collect();
    Ok(Partition::new(labelled)?)
}

/// Agglomerative merging from singletons: always merge the pair whose union
/// has the smallest rank (ties to the lowest index pair) while that rank is
/// at most `n`, until at most `k` blocks remain.
fn greedy_partition(oracle: &BlockRanks, pieces: usize, k: usize, n: usize) -> Option<Vec<Vec<usize>>> {
    let mut blocks: Vec<Vec<usize>> = (0..pieces).map(|i| vec![i]).collect();
    if blocks.iter().any(|b| oracle.rank(b) > n) {
        return None;
    }
    while blocks.len() > k {
        let mut best: Option<(usize, usize, usize)> = None;
        for a in 0..blocks.len() {
            for b in a + 1..blocks.len() {
                let union: Vec<usize> = blocks[a].iter().chain(&blocks[b]).copied().collect();
                let r = oracle.rank(&union);
                if r <= n && best.is_none_or(|(_, _, br)| r < br) {
                    best = Some((a, b, r));
                }
            }
        }
        let (a, b, _) = best?;
        let moved = blocks.remove(b);
        blocks[a].extend(moved);
    }
    Some(blocks)
}

/// Depth-first enumeration of set partitions in restricted-growth order,
/// pruned by rank monotonicity (adding columns never lowers the rank).
fn exhaustive_partition(oracle: &BlockRanks, pieces: usize, k: usize, n: usize) -> Option<Vec<Vec<usize>>> {
    fn go(oracle: &BlockRanks, next: usize, pieces: usize, k: usize, n: usize, blocks: &mut Vec<Vec<usize>>) -> bool {
        if next == pieces {
            return true;
        }
        for b in 0..blocks.len() {
            blocks[b].push(next);
            if oracle.rank(&blocks[b]) <= n && go(oracle, next + 1, pieces, k, n, blocks) {
                return true;
            }
            blocks[b].pop();
        }
        if blocks.len() < k && oracle.rank(&[next]) <= n {
            blocks.push(vec![next]);
            if go(oracle, next + 1, pieces, k, n, blocks) {
                return true;
            }
            blocks.pop();
        }
        false
    }
    let mut blocks = Vec::new();
    go(oracle, 0, pieces, k, n, &mut blocks).then_some(blocks)
}

/// K-N realization: Kalman-Ho LSSJ, K-N partition of the pieces, then one
/// mode per block on the span of that block's reachability columns.
pub fn kn_realize(
    h: &HankelMatrix,
    k: usize,
    n: usize,
    rank_tol: Option<f64>,
    search: PartitionSearch,
) -> Result<PwlSystem, RealizationError> {
    let ho = kalman_ho_detailed(h, rank_tol)?;
    let partition = find_kn_partition(h, k, n, rank_tol, search)?;
    kn_split(h, &ho, &partition, rank_tol)
}

/// Splits a Kalman-Ho realization of `h` along a partition of its pieces.
///
/// Mode `q` lives on the span of the columns of `R` belonging to block `q`,
/// truncated to the numerical rank of the block's Hankel columns, with `A`
/// and `C` compressed onto it and the block's piece states as initial set.
pub fn kn_split(
    h: &HankelMatrix,
    ho: &HoRealization,
    partition: &Partition,
    rank_tol: Option<f64>,
) -> Result<PwlSystem, RealizationError> {
    let blocks = partition_hankel(h, partition)?;
    let threshold = rank_threshold(h, rank_tol);
    let sys = &ho.system;
    let n = sys.n();
    let mut modes = Vec::with_capacity(partition.len());
    for (block, h_q) in partition.blocks().iter().zip(&blocks) {
        let rank = rank_above(h_q, threshold);
        let mut r_q = DMatrix::zeros(n, 0);
        for label in block {
            let pos = h.pieces.iter().position(|p| p == label).expect("checked by partition_hankel");
            let cols = h.m + 1;
            r_q = linalg::hcat(&r_q, &ho.reach.columns(pos * cols, cols).into_owned());
        }
        let basis = svd(&r_q).u.columns(0, rank.min(r_q.ncols())).into_owned();
        let states =
            ho.piece_states.iter().filter(|(i, _)| block.contains(i)).map(|(_, x)| basis.transpose() * x).collect();
        let a_q = basis.transpose() * &sys.a * &basis;
        let c_q = &sys.c * &basis;
        modes.push(AffineMode::linear(a_q, c_q, InitialStates::Finite(states))?);
    }
    Ok(PwlSystem::new(modes, sys.output_dim())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn m(r: usize, c: usize, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, x)
    }

    fn ones_table(k_max: usize) -> MarkovTable {
        MarkovTable::new(1, vec![vec![v(&[1.0]); k_max + 1]]).unwrap()
    }

    #[test]
    fn markov_example_one() {
        let sys = Lssj::new(m(2, 2, &[0.0, 0.0, 0.0, 1.0]), DMatrix::identity(2, 2), vec![v(&[1.0, 0.0])]).unwrap();
        let seq = markov_from_lssj(&sys, &v(&[1.0, 0.0]), 4).unwrap();
        assert_eq!(seq[0], v(&[1.0, 0.0]));
        for y in &seq[1..] {
            assert_eq!(*y, v(&[0.0, 0.0]));
        }
    }

    #[test]
    fn markov_scalar_exponential_and_cosine() {
        let exp = Lssj::new(m(1, 1, &[1.0]), m(1, 1, &[1.0]), vec![v(&[1.0])]).unwrap();
        assert!(markov_from_lssj(&exp, &v(&[1.0]), 6).unwrap().iter().all(|y| y[0] == 1.0));
        let rot = Lssj::new(m(2, 2, &[0.0, -1.0, 1.0, 0.0]), m(1, 2, &[0.0, 1.0]), vec![v(&[0.0, 1.0])]).unwrap();
        let seq: Vec<f64> = markov_from_lssj(&rot, &v(&[0.0, 1.0]), 5).unwrap().iter().map(|y| y[0]).collect();
        assert_eq!(seq, vec![1.0, 0.0, -1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn markov_dimension_mismatch() {
        let exp = Lssj::new(m(1, 1, &[1.0]), m(1, 1, &[1.0]), vec![v(&[1.0])]).unwrap();
        assert!(matches!(markov_from_lssj(&exp, &v(&[1.0, 2.0]), 3), Err(RealizationError::DimensionMismatch(_))));
    }

    #[test]
    fn hankel_of_ones() {
        let h = build_hankel(&ones_table(2), 1, 1, 1).unwrap();
        assert_eq!(h.entries, DMatrix::from_element(2, 2, 1.0));
        assert_eq!(numerical_rank(&h.entries, None), 1);
    }

    #[test]
    fn hankel_of_cosine() {
        let rot = Lssj::new(m(2, 2, &[0.0, -1.0, 1.0, 0.0]), m(1, 2, &[0.0, 1.0]), vec![v(&[0.0, 1.0])]).unwrap();
        let h = build_hankel(&MarkovTable::from_lssj(&rot, 2).unwrap(), 1, 1, 1).unwrap();
        assert_eq!(h.entries, m(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert_eq!(numerical_rank(&h.entries, None), 2);
    }

    #[test]
    fn hankel_duplicate_pieces_keep_rank() {
        let seq: Vec<DVector<f64>> = (0..6).map(|k| v(&[0.5f64.powi(k)])).collect();
        let one = build_hankel(&MarkovTable::new(1, vec![seq.clone()]).unwrap(), 2, 2, 1).unwrap();
        let two = build_hankel(&MarkovTable::new(1, vec![seq.clone(), seq]).unwrap(), 2, 2, 2).unwrap();
        assert_eq!(two.entries.columns(0, 3), two.entries.columns(3, 3));
        assert_eq!(numerical_rank(&one.entries, None), numerical_rank(&two.entries, None));
    }

    #[test]
    fn hankel_insufficient_order() {
        assert!(matches!(
            build_hankel(&ones_table(2), 2, 1, 1),
            Err(RealizationError::InsufficientOrder { needed: 3, have: 2 })
        ));
    }

    #[test]
    fn hankel_json_round_trip() {
        let h = build_hankel(&ones_table(4), 2, 2, 1).unwrap();
        assert_eq!(HankelMatrix::from_json(&h.to_json()).unwrap(), h);
    }

    #[test]
    fn ho_on_exponential() {
        let h = build_hankel(&ones_table(6), 3, 3, 1).unwrap();
        let sys = kalman_ho(&h, None).unwrap();
        assert_eq!(sys.n(), 1);
        for y in markov_from_lssj(&sys, &sys.x0[0], 6).unwrap() {
            assert_relative_eq!(y[0], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ho_on_zero_hankel() {
        let t = MarkovTable::new(2, vec![vec![v(&[0.0, 0.0]); 5]]).unwrap();
        let sys = kalman_ho(&build_hankel(&t, 2, 2, 1).unwrap(), None).unwrap();
        assert_eq!(sys.n(), 0);
        assert_eq!(sys.output_dim(), 2);
    }

    #[test]
    fn ho_needs_shift_column() {
        let h = build_hankel(&ones_table(2), 1, 0, 1).unwrap();
        assert!(matches!(kalman_ho(&h, None), Err(RealizationError::InvalidArgument(_))));
    }

    #[test]
    fn ho_detects_too_short_hankel() {
        // Three-dimensional dynamics seen through a Hankel block of row depth 0:
        // the column space holds only one direction and cannot support the shift.
        let sys = Lssj::new(
            m(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -0.3, 0.2, -0.5]),
            m(1, 3, &[1.0, 0.0, 0.0]),
            vec![v(&[1.0, -0.5, 0.25])],
        )
        .unwrap();
        let h = build_hankel(&MarkovTable::from_lssj(&sys, 6).unwrap(), 0, 4, 1).unwrap();
        assert!(matches!(kalman_ho(&h, None), Err(RealizationError::RankDeficientShift { .. })));
    }

    #[test]
    fn partition_hankel_blocks() {
        let seq1: Vec<DVector<f64>> = (0..5).map(|k| v(&[0.5f64.powi(k)])).collect();
        let seq2: Vec<DVector<f64>> = (0..5).map(|k| v(&[(-0.3f64).powi(k)])).collect();
        let h = build_hankel(&MarkovTable::new(1, vec![seq1, seq2]).unwrap(), 2, 2, 2).unwrap();
        let whole = partition_hankel(&h, &Partition::single(&[0, 1]).unwrap()).unwrap();
        assert_eq!(whole[0], h.entries);
        let parts = partition_hankel(&h, &Partition::singletons(&[0, 1]).unwrap()).unwrap();
        assert_eq!(parts[1], h.entries.columns(3, 3).into_owned());
        assert!(partition_hankel(&h, &Partition::single(&[0, 7]).unwrap()).is_err());
    }

    #[test]
    fn kn_single_block_iff_rank_bound() {
        let seq1: Vec<DVector<f64>> = (0..7).map(|k| v(&[0.5f64.powi(k)])).collect();
        let seq2: Vec<DVector<f64>> = (0..7).map(|k| v(&[(-0.3f64).powi(k)])).collect();
        let h = build_hankel(&MarkovTable::new(1, vec![seq1, seq2]).unwrap(), 3, 3, 2).unwrap();
        for search in [PartitionSearch::Greedy, PartitionSearch::Exhaustive] {
            assert!(matches!(find_kn_partition(&h, 1, 1, None, search), Err(RealizationError::NotFound { .. })));
            let p = find_kn_partition(&h, 1, 2, None, search).unwrap();
            assert_eq!(p.len(), 1);
            let p = find_kn_partition(&h, 2, 1, None, search).unwrap();
            assert_eq!(p.len(), 2);
        }
    }

    #[test]
    fn kn_zero_rank_bound_on_nonzero_data() {
        let h = build_hankel(&ones_table(4), 2, 2, 1).unwrap();
        assert!(matches!(
            kn_realize(&h, 1, 0, None, PartitionSearch::Greedy),
            Err(RealizationError::NotFound { k: 1, n: 0 })
        ));
    }
}
