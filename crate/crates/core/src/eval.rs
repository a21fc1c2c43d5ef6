//! Comparison of identified and ground-truth systems: mode matching,
//! parameter correlation, segmentation agreement and AR-relation checks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identify::{Dataset, ModeParams};
use crate::linalg::char_poly;
use crate::sim::Trajectory;

/// Largest problem size solved by enumerating injective maps.
pub const MAX_EXHAUSTIVE_LABELS: usize = 8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label sequences have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("segment contains the switch at t = {0}")]
    SegmentContainsSwitch(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Result of pairing estimated modes with true modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// `permutation[e]` is the true mode matched to estimated mode `e`.
    pub permutation: Vec<Option<usize>>,
    /// Relative Frobenius error of `[A a]` per estimated mode.
    pub per_mode_error: Vec<Option<f64>>,
    /// Pearson correlation of the flattened `[A a]` entries per estimated mode.
    pub per_mode_correlation: Vec<Option<f64>>,
    pub unmatched_true: Vec<usize>,
    pub unmatched_estimated: Vec<usize>,
    pub total_error: f64,
}

impl MatchReport {
    pub fn max_error(&self) -> f64 {
        self.per_mode_error.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Injective assignment of rows to columns minimizing the total cost.
/// Returns the column of each row, `None` for rows left over.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (r, c) = cost.shape();
    if r == 0 || c == 0 {
        return vec![None; r];
    }
    if r.max(c) <= MAX_EXHAUSTIVE_LABELS {
        exhaustive_assignment(cost)
    } else {
        hungarian(cost)
    }
}

fn exhaustive_assignment(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (r, c) = cost.shape();
    let mut best = (f64::INFINITY, vec![None; r]);
    let mut current = vec![None; r];
    let mut used = vec![false; c];
    // Rows beyond the number of columns stay unassigned; every choice of
    // which rows are matched is explored.
    let mut skips_left = r.saturating_sub(c);
    fn go(
        row: usize,
        acc: f64,
        cost: &DMatrix<f64>,
        current: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        skips_left: &mut usize,
        best: &mut (f64, Vec<Option<usize>>),
    ) {
        if row == cost.nrows() {
            if acc < best.0 {
                *best = (acc, current.clone());
            }
            return;
        }
        for col in 0..cost.ncols() {
            if !used[col] {
                used[col] = true;
                current[row] = Some(col);
                go(row + 1, acc + cost[(row, col)], cost, current, used, skips_left, best);
                used[col] = false;
                current[row] = None;
            }
        }
        if *skips_left > 0 {
            *skips_left -= 1;
            go(row + 1, acc, cost, current, used, skips_left, best);
            *skips_left += 1;
        }
    }
    go(0, 0.0, cost, &mut current, &mut used, &mut skips_left, &mut best);
    best.1
}

/// Kuhn-Munkres with potentials on the zero-padded square cost matrix.
fn hungarian(cost: &DMatrix<f64>) -> Vec<Option<usize>> {
    let (r, c) = cost.shape();
    let n = r.max(c);
    let at = |i: usize, j: usize| if i < r && j < c { cost[(i, j)] } else { 0.0 };
    // 1-based arrays following the classical formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; r];
    for (j, &i) in p.iter().enumerate().skip(1) {
        if i >= 1 && i <= r && j <= c {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

/// Pearson correlation; constant inputs give 1 when equal and 0 otherwise.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Pairs estimated modes with true modes minimizing the summed Frobenius
/// distance of `[A a]` blocks over injective maps.
pub fn match_modes(true_params: &ModeParams, est_params: &ModeParams) -> Result<MatchReport, EvalError> {
    if true_params.num_modes() > 0 && est_params.num_modes() > 0 && true_params.dim() != est_params.dim() {
        return Err(EvalError::DimensionMismatch(format!(
            "true modes have dimension {}, estimated modes {}",
            true_params.dim(),
            est_params.dim()
        )));
    }
    let truth: Vec<DMatrix<f64>> = true_params.modes.iter().map(|m| m.augmented()).collect();
    let est: Vec<DMatrix<f64>> = est_params.modes.iter().map(|m| m.augmented()).collect();
    let cost = DMatrix::from_fn(est.len(), truth.len(), |e, t| (&est[e] - &truth[t]).norm());
    let permutation = min_cost_assignment(&cost);
    let mut per_mode_error = vec![None; est.len()];
    let mut per_mode_correlation = vec![None; est.len()];
    let mut total_error = 0.0;
    for (e, m) in permutation.iter().enumerate() {
        if let Some(t) = *m {
            let diff = cost[(e, t)];
            total_error += diff;
            let scale = truth[t].norm();
            per_mode_error[e] = Some(if scale > 0.0 { diff / scale } else { diff });
            per_mode_correlation[e] = Some(pearson(est[e].as_slice(), truth[t].as_slice()));
        }
    }
    let unmatched_true = (0..truth.len()).filter(|t| !permutation.contains(&Some(*t))).collect();
    let unmatched_estimated = (0..est.len()).filter(|&e| permutation[e].is_none()).collect();
    Ok(MatchReport {
        permutation,
        per_mode_error,
        per_mode_correlation,
        unmatched_true,
        unmatched_estimated,
        total_error,
    })
}

/// Relative derivative residual of each matched estimated mode on the samples
/// carrying the corresponding true label.
pub fn derivative_fit(
    data: &Dataset,
    true_labels: &[usize],
    est_params: &ModeParams,
    report: &MatchReport,
) -> Result<Vec<Option<f64>>, EvalError> {
    if true_labels.len() != data.len() {
        return Err(EvalError::LengthMismatch(true_labels.len(), data.len()));
    }
    let mut out = vec![None; est_params.num_modes()];
    for (e, m) in report.permutation.iter().enumerate() {
        let Some(t) = *m else { continue };
        let (mut res, mut scale) = (0.0, 0.0);
        for i in (0..data.len()).filter(|&i| true_labels[i] == t) {
            res += est_params.residual(e, &data.states()[i], &data.derivs()[i]);
            scale += data.derivs()[i].norm_squared();
        }
        if scale > 0.0 {
            out[e] = Some((res / scale).sqrt());
        }
    }
    Ok(out)
}

/// Largest fraction of samples on which the two labelings agree after
/// relabeling `a` injectively onto the labels of `b`.
pub fn segmentation_agreement(a: &[usize], b: &[usize]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let la = compact_labels(a);
    let lb = compact_labels(b);
    let ka = la.iter().max().map_or(0, |m| m + 1);
    let kb = lb.iter().max().map_or(0, |m| m + 1);
    let mut confusion = DMatrix::<f64>::zeros(ka, kb);
    for (&x, &y) in la.iter().zip(&lb) {
        confusion[(x, y)] += 1.0;
    }
    let matched: f64 = if ka.max(kb) <= MAX_EXHAUSTIVE_LABELS {
        let map = exhaustive_assignment(&(-&confusion));
        map.iter().enumerate().filter_map(|(i, j)| j.map(|j| confusion[(i, j)])).sum()
    } else {
        greedy_confusion(&confusion)
    };
    Ok(matched / a.len() as f64)
}

fn compact_labels(labels: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    labels.iter().map(|l| seen.binary_search(l).expect("present")).collect()
}

/// Repeatedly takes the largest remaining confusion entry.
fn greedy_confusion(confusion: &DMatrix<f64>) -> f64 {
    let (r, c) = confusion.shape();
    let mut row_used = vec![false; r];
    let mut col_used = vec![false; c];
    let mut total = 0.0;
    loop {
        let mut best: Option<(usize, usize)> = None;
        for i in (0..r).filter(|&i| !row_used[i]) {
            for j in (0..c).filter(|&j| !col_used[j]) {
                if best.is_none_or(|(bi, bj)| confusion[(i, j)] > confusion[(bi, bj)]) {
                    best = Some((i, j));
                }
            }
        }
        let Some((i, j)) = best else { break };
        row_used[i] = true;
        col_used[j] = true;
        total += confusion[(i, j)];
    }
    total
}

/// Source of the derivatives entering the AR relation.
#[derive(Clone, Copy, Debug)]
pub enum ArSignal<'a> {
    /// Signal `C x` on the trajectory states with `f^(k) = C A^k x`.
    LinearModel { a: &'a DMatrix<f64>, c: &'a DMatrix<f64> },
    /// The trajectory states, differentiated by fourth-order central differences.
    FiniteDifference,
}

/// AR coefficients `A_k = -c_k I_p` from the characteristic polynomial of `a`.
pub fn char_poly_ar_coefficients(a: &DMatrix<f64>, p: usize) -> Vec<DMatrix<f64>> {
    char_poly(a).into_iter().map(|ck| DMatrix::identity(p, p) * -ck).collect()
}

/// Maximum over the samples of `segment` of `|f^(n) - sum_k A_k f^(n-k)|`.
///
/// `segment` is a closed time interval, the whole trajectory when `None`;
/// switch times strictly after its start are rejected.
pub fn verify_ar(
    traj: &Trajectory,
    coeffs: &[DMatrix<f64>],
    signal: ArSignal<'_>,
    segment: Option<(f64, f64)>,
) -> Result<f64, EvalError> {
    let n = coeffs.len();
    if n == 0 {
        return Err(EvalError::InvalidArgument("at least one AR coefficient is needed".into()));
    }
    let p = coeffs[0].nrows();
    if coeffs.iter().any(|m| m.shape() != (p, p)) {
        return Err(EvalError::DimensionMismatch("AR coefficients must be square of equal size".into()));
    }
    let (t0, t1) =
        segment.unwrap_or((traj.times.first().copied().unwrap_or(0.0), traj.times.last().copied().unwrap_or(0.0)));
    if let Some(&s) = traj.switch_times.iter().find(|&&s| s > t0 && s <= t1) {
        return Err(EvalError::SegmentContainsSwitch(s));
    }
    let idx: Vec<usize> = (0..traj.len()).filter(|&i| traj.times[i] >= t0 && traj.times[i] <= t1).collect();
    let mut worst = 0.0_f64;
    match signal {
        ArSignal::LinearModel { a, c } => {
            if c.nrows() != p || a.nrows() != c.ncols() {
                return Err(EvalError::DimensionMismatch("model and coefficient sizes disagree".into()));
            }
            // Rows C A^k for k = 0..=n.
            let mut powers = vec![c.clone()];
            for k in 1..=n {
                powers.push(&powers[k - 1] * a);
            }
            let mut m = powers[n].clone();
            for k in 1..=n {
                m -= &coeffs[k - 1] * &powers[n - k];
            }
            for &i in &idx {
                let x = &traj.states[i];
                if x.len() != a.ncols() {
                    return Err(EvalError::DimensionMismatch("state and model sizes disagree".into()));
                }
                worst = worst.max((&m * x).norm());
            }
        }
        ArSignal::FiniteDifference => {
            if traj.states.iter().any(|x| x.len() != p) {
                return Err(EvalError::DimensionMismatch("signal and coefficient sizes disagree".into()));
            }
            let half = n.div_ceil(2) + 1;
            let (Some(&first), Some(&last)) = (idx.first(), idx.last()) else {
                return Ok(0.0);
            };
            for &i in &idx {
                if i < first + half || i + half > last {
                    continue;
                }
                let offsets: Vec<f64> = (i - half..=i + half).map(|j| traj.times[j] - traj.times[i]).collect();
                let w = fornberg_weights(&offsets, n);
                let deriv = |k: usize| -> DVector<f64> {
                    let mut d = DVector::zeros(p);
                    for (s, j) in (i - half..=i + half).enumerate() {
                        d += &traj.states[j] * w[k][s];
                    }
                    d
                };
                let mut r = deriv(n);
                for k in 1..=n {
                    r -= &coeffs[k - 1] * deriv(n - k);
                }
                worst = worst.max(r.norm());
            }
        }
    }
    Ok(worst)
}

/// Finite-difference weights at 0 for derivative orders `0..=m` on the given
/// nodes (Fornberg's recursion). `w[k][j]` multiplies the value at node `j`.
pub fn fornberg_weights(nodes: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0];
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i];
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}
