//! Dense linear-algebra helpers shared by the realization, reduction and
//! identification code: rank decisions, orthonormal bases, Krylov subspaces
//! and the matrix exponential.

use nalgebra::{DMatrix, DVector};

pub const EPS: f64 = f64::EPSILON;

/// Relative rank tolerance used when the caller does not supply one:
/// `max(rows, cols) * 2^-52`, applied as a multiple of the largest singular value.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols).max(1) as f64 * EPS
}

/// Thin singular value decomposition `m = u diag(s) vt` with `s` descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

/// Thin SVD (faer backend).
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return Svd { u: DMatrix::zeros(r, 0), s: Vec::new(), vt: DMatrix::zeros(0, c) };
    }
    let fm = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let dec = fm.thin_svd().expect("SVD converges for finite input");
    let (u, v, s) = (dec.U(), dec.V(), dec.S().column_vector());
    Svd {
        u: DMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        s: (0..k).map(|i| s[i]).collect(),
        vt: DMatrix::from_fn(k, c, |i, j| v[(j, i)]),
    }
}

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    svd(m).s
}

/// Number of singular values strictly above `tol * sigma_max`. When the
/// matrix is zero the tolerance is used as an absolute threshold.
pub fn numerical_rank(m: &DMatrix<f64>, tol: Option<f64>) -> usize {
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols()));
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let threshold = if smax > 0.0 { tol * smax } else { tol };
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Number of singular values strictly above an absolute threshold.
pub fn rank_above(m: &DMatrix<f64>, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > threshold).count()
}

/// Spectral norm.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the column space, keeping left singular vectors whose
/// singular value exceeds `threshold` (absolute).
fn orth_above(m: &DMatrix<f64>, threshold: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 || m.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let dec = svd(m);
    let keep = dec.s.iter().take_while(|&&s| s > threshold).count();
    dec.u.columns(0, keep).into_owned()
}

/// Orthonormal basis of the column space of `m` with a relative rank tolerance.
pub fn orth_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let smax = norm2(m);
    if smax == 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    orth_above(m, rel_tol * smax)
}

/// Smallest relative threshold used when expanding a Krylov basis; residuals
/// of a Gram-Schmidt sweep sit a few ulps times `||A||` above zero.
pub const KRYLOV_MIN_TOL: f64 = 1e-12;

/// Orthonormal basis of `Span{A^k s | k >= 0, s column of seeds}`.
///
/// Built by block Arnoldi expansion with double Gram-Schmidt; a new direction is
/// accepted when its component orthogonal to the current basis exceeds
/// `max(rel_tol, KRYLOV_MIN_TOL) * ||A||` (seed directions are judged relative
/// to the largest seed with `rel_tol`).
pub fn krylov_basis(a: &DMatrix<f64>, seeds: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "krylov_basis needs a square matrix");
    assert_eq!(seeds.nrows(), n, "seed dimension mismatch");
    let mut basis = orth_basis(seeds, rel_tol);
    if basis.ncols() == 0 || basis.ncols() == n {
        return basis;
    }
    let anorm = norm2(a);
    if anorm == 0.0 {
        return basis;
    }
    let mut frontier = basis.clone();
    while basis.ncols() < n && frontier.ncols() > 0 {
        let mut w = a * &frontier;
        for _ in 0..2 {
            let proj = basis.transpose() * &w;
            w -= &basis * proj;
        }
        let candidates = orth_above(&w, rel_tol.max(KRYLOV_MIN_TOL) * anorm);
        let start = basis.ncols();
        for c in candidates.column_iter() {
            if basis.ncols() == n {
                break;
            }
            if let Some(u) = orthonormal_complement(&basis, &c.into_owned()) {
                basis = hcat(&basis, &DMatrix::from_column_slice(n, 1, u.as_slice()));
            }
        }
        if basis.ncols() == start {
            break;
        }
        frontier = basis.columns(start, basis.ncols() - start).into_owned();
    }
    basis
}

/// Unit vector along the part of `v` orthogonal to the orthonormal columns of
/// `basis`, or `None` when that part is lost in rounding.
fn orthonormal_complement(basis: &DMatrix<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    let norm = v.norm();
    let mut u = v.clone();
    for _ in 0..2 {
        u -= basis * (basis.transpose() * &u);
    }
    let rest = u.norm();
    (rest > 1e-8 * norm).then(|| u / rest)
}

/// Horizontal concatenation.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Matrix whose columns are the given vectors (all of length `rows`).
pub fn columns_to_matrix(rows: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Moore-Penrose pseudoinverse with relative singular-value cutoff.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let dec = svd(m);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let mut out = DMatrix::zeros(c, r);
    if smax == 0.0 {
        return out;
    }
    for (i, &s) in dec.s.iter().enumerate() {
        if s > rel_tol * smax {
            out += dec.vt.row(i).transpose() * dec.u.column(i).transpose() / s;
        }
    }
    out
}

/// Matrix exponential (scaling and squaring with a Padé approximant).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    m.exp()
}

/// Coefficients `c_1..c_n` of the characteristic polynomial
/// `det(sI - A) = s^n + c_1 s^{n-1} + ... + c_n` (Faddeev-LeVerrier).
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = Vec::with_capacity(n);
    let mut m = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        let am = a * &m;
        let ck = -am.trace() / k as f64;
        coeffs.push(ck);
        m = am + DMatrix::identity(n, n) * ck;
    }
    coeffs
}
