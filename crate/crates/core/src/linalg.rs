//! Dense linear-algebra helpers that nalgebra does not ship: real Schur
//! reordering, small Sylvester solves, Kronecker products and PSD checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Diagonal blocks of a real quasi-upper-triangular matrix as `(start, size)`.
pub fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, 2));
            i += 2;
        } else {
            blocks.push((i, 1));
            i += 1;
        }
    }
    blocks
}

/// Eigenvalues of a 1x1 or 2x2 diagonal block.
pub fn block_eigenvalues(t: &DMatrix<f64>, start: usize, size: usize) -> Vec<Complex64> {
    if size == 1 {
        return vec![Complex64::new(t[(start, start)], 0.0)];
    }
    let (a, b, c, d) = (
        t[(start, start)],
        t[(start, start + 1)],
        t[(start + 1, start)],
        t[(start + 1, start + 1)],
    );
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        vec![
            Complex64::new(half_tr + s, 0.0),
            Complex64::new(half_tr - s, 0.0),
        ]
    } else {
        let s = (-disc).sqrt();
        vec![Complex64::new(half_tr, s), Complex64::new(half_tr, -s)]
    }
}

/// Real Schur form `a = z t zᵀ` with every 2x2 block carrying a genuinely
/// complex pair (2x2 blocks with real eigenvalues are split).
pub fn real_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("real Schur iteration did not converge".into()))?;
    let (mut z, mut t) = schur.unpack();
    let scale = t.norm().max(1.0);
    for i in 0..n.saturating_sub(1) {
        if t[(i + 1, i)].abs() <= 4.0 * f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
    for (start, size) in schur_blocks(&t) {
        if size == 2 && block_eigenvalues(&t, start, 2)[0].im == 0.0 {
            split_real_2x2(&mut t, &mut z, start);
        }
    }
    for j in 0..n {
        for i in j + 2..n {
            t[(i, j)] = 0.0;
        }
    }
    Ok((z, t))
}

fn split_real_2x2(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize) {
    let lambda = block_eigenvalues(t, k, 2)[0].re;
    let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
    // eigenvector for lambda
    let (mut v0, mut v1) = (b, lambda - a);
    if v0.hypot(v1) < (lambda - d).hypot(c) {
        v0 = lambda - d;
        v1 = c;
    }
    let r = v0.hypot(v1);
    if r == 0.0 {
        t[(k + 1, k)] = 0.0;
        return;
    }
    let (cs, sn) = (v0 / r, v1 / r);
    let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    apply_local_similarity(t, z, k, &g);
    t[(k + 1, k)] = 0.0;
}

/// `t <- qᵀ t q`, `z <- z q` where `q` acts on rows/columns `k..k+q.nrows()`.
fn apply_local_similarity(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize, q: &DMatrix<f64>) {
    let w = q.nrows();
    let rows = t.rows(k, w).into_owned();
    t.rows_mut(k, w).copy_from(&(q.transpose() * rows));
    let cols = t.columns(k, w).into_owned();
    t.columns_mut(k, w).copy_from(&(cols * q));
    let zc = z.columns(k, w).into_owned();
    z.columns_mut(k, w).copy_from(&(zc * q));
}

/// Swap the adjacent diagonal blocks of sizes `p` (at `k`) and `q` (at `k+p`).
fn swap_blocks(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, k: usize, p: usize, q: usize) -> Result<()> {
    let a11 = t.view((k, k), (p, p)).into_owned();
    let a22 = t.view((k + p, k + p), (q, q)).into_owned();
    let a12 = t.view((k, k + p), (p, q)).into_owned();
    let x = solve_sylvester(&a11, &a22, &(-a12))?;
    let w = p + q;
    let mut m = DMatrix::<f64>::zeros(w, w);
    m.view_mut((0, 0), (p, q)).copy_from(&x);
    m.view_mut((p, 0), (q, q)).fill_with_identity();
    m.view_mut((0, q), (p, p)).fill_with_identity();
    let qmat = m.qr().q();
    apply_local_similarity(t, z, k, &qmat);
    for j in k..k + q {
        for i in k + q..k + w {
            t[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Reorder a real Schur form so that blocks for which `select` returns true
/// come first. Returns the dimension of the selected leading part.
pub fn reorder_schur<F>(t: &mut DMatrix<f64>, z: &mut DMatrix<f64>, select: F) -> Result<usize>
where
    F: Fn(&[Complex64]) -> bool,
{
    let mut blocks: Vec<(usize, bool)> = schur_blocks(t)
        .into_iter()
        .map(|(s, n)| (n, select(&block_eigenvalues(t, s, n))))
        .collect();
    let mut placed = 0;
    for i in 0..blocks.len() {
        if !blocks[i].1 {
            continue;
        }
        let mut j = i;
        while j > placed {
            let start: usize = blocks[..j - 1].iter().map(|b| b.0).sum();
            let (p, q) = (blocks[j - 1].0, blocks[j].0);
            swap_blocks(t, z, start, p, q)?;
            blocks.swap(j - 1, j);
            j -= 1;
        }
        placed += 1;
    }
    Ok(blocks.iter().filter(|b| b.1).map(|b| b.0).sum())
}

/// Solve `a x - x b = c` through the Kronecker form (small systems only).
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, q) = (a.nrows(), b.nrows());
    if p == 0 || q == 0 {
        return Ok(DMatrix::zeros(p, q));
    }
    let k = kron(&DMatrix::identity(q, q), a) - kron(&b.transpose(), &DMatrix::identity(p, p));
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Sylvester equation (shared eigenvalues)".into()))?;
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Moore-Penrose pseudo-inverse, numerical rank and singular values.
pub fn pinv_with_rank(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize, Vec<f64>) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (DMatrix::zeros(m.ncols(), m.nrows()), 0, Vec::new());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rel_tol * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let pinv = svd
        .pseudo_inverse(tol)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
    (pinv, rank, sv)
}

pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    pinv_with_rank(m, rel_tol).1
}

/// Orthonormal basis (columns) of the null space of a complex matrix, with
/// singular values below `tol` counted as zero.
pub fn complex_null_space(m: &DMatrix<Complex64>, tol: f64) -> DMatrix<Complex64> {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut cols = Vec::new();
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            cols.push(v_t.row(i).adjoint());
        }
    }
    // fewer singular values than columns when m is wide
    if m.nrows() < n {
        // fall back to the square padded problem
        let mut sq = DMatrix::<Complex64>::zeros(n, n);
        sq.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        return complex_null_space(&sq, tol);
    }
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    sym.clone().symmetric_eigen().eigenvalues.min()
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm2(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return 0.0;
    }
    sym.clone().symmetric_eigen().eigenvalues.amax()
}

/// Clip negative eigenvalues of a symmetric matrix to zero.
pub fn project_psd(sym: &DMatrix<f64>) -> DMatrix<f64> {
    if sym.nrows() == 0 {
        return sym.clone();
    }
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.min() >= 0.0 {
        return sym.clone();
    }
    let vals = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
}

pub fn check_psd(m: &DMatrix<f64>, what: &'static str, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{what} must be square")));
    }
    if (m - m.transpose()).amax() > tol * m.amax().max(1.0) {
        return Err(Error::NotPsd(what));
    }
    if min_eigenvalue(&symmetrize(m)) < -tol * m.amax().max(1.0) {
        return Err(Error::NotPsd(what));
    }
    Ok(())
}

pub fn check_pd(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!("{what} must be square")));
    }
    if (m - m.transpose()).amax() > 1e-10 * m.amax().max(1.0) || symmetrize(m).cholesky().is_none() {
        return Err(Error::NotPd(what));
    }
    Ok(())
}

/// Square-root factor `l` with `l lᵀ = m` for a PSD matrix; Cholesky first,
/// eigen-decomposition fallback for singular inputs.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sq)
}
