//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Thin SVD `X = U diag(sigma) V'` with singular values sorted in
/// descending order and truncated below `rel_tol * sigma_max`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

pub fn thin_svd(x: &DMatrix<f64>, rel_tol: f64) -> ThinSvd {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return ThinSvd {
            u: DMatrix::zeros(n, 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(p, 0),
        };
    }
    // nalgebra's Golub–Kahan SVD can silently lose accuracy on numerically
    // rank-deficient inputs, so the decomposition is done by faer.
    let svd = to_faer(x)
        .thin_svd()
        .expect("SVD converges on finite input");
    let s = svd.S().column_vector();
    let k = n.min(p);
    let sigma = DVector::from_fn(k, |i, _| s[i]);
    let u = from_faer(svd.U());
    let v = from_faer(svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let smax = order.first().map(|&i| sigma[i]).unwrap_or(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&i| smax > 0.0 && sigma[i] > rel_tol * smax)
        .collect();
    ThinSvd {
        u: select_columns(&u, &keep),
        sigma: DVector::from_iterator(keep.len(), keep.iter().map(|&i| sigma[i])),
        v: select_columns(&v, &keep),
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = to_faer(&sym)
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric eigensolver converges on finite input");
    let raw = eig.S().column_vector();
    let vectors = from_faer(eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| raw[i]));
    (values, select_columns(&vectors, &order))
}

pub fn select_columns(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Completes an orthonormal set of columns in R^m to a basis and returns
/// only the added columns. Classical Gram–Schmidt with reorthogonalisation
/// against the standard basis.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let m = basis.nrows();
    let r = basis.ncols();
    let mut cols: Vec<DVector<f64>> = (0..r).map(|j| basis.column(j).into_owned()).collect();
    let mut added = Vec::with_capacity(m.saturating_sub(r));
    // Try the standard basis vectors least represented in the span first.
    let mut candidates: Vec<(usize, f64)> = (0..m)
        .map(|i| {
            let lev: f64 = (0..r).map(|j| basis[(i, j)].powi(2)).sum();
            (i, lev)
        })
        .collect();
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    for (i, _) in candidates {
        if cols.len() == m {
            break;
        }
        let mut v = DVector::zeros(m);
        v[i] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dot(&v);
                v.axpy(-proj, c, 1.0);
            }
        }
        let nrm = v.norm();
        if nrm > 1e-6 {
            v /= nrm;
            cols.push(v.clone());
            added.push(v);
        }
    }
    if added.is_empty() {
        DMatrix::zeros(m, 0)
    } else {
        DMatrix::from_columns(&added)
    }
}

/// Orthonormal basis (m × (m − rank B)) of the null space of `B'`.
pub fn null_space_of_transpose(b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let m = b.nrows();
    if b.ncols() == 0 {
        return DMatrix::identity(m, m);
    }
    let svd = thin_svd(b, rel_tol);
    if svd.rank() == 0 {
        return DMatrix::identity(m, m);
    }
    orthonormal_complement(&svd.u)
}

/// Orthonormal basis of the column space of `w` (numerical rank by `rel_tol`).
pub fn column_basis(w: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if w.ncols() == 0 {
        return DMatrix::zeros(w.nrows(), 0);
    }
    thin_svd(w, rel_tol).u
}

/// Pseudo-inverse of a symmetric matrix. The flag reports whether any
/// eigenvalue fell below `rel_tol * max|eigenvalue|` and was dropped.
pub fn pinv_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, bool) {
    let n = a.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let (vals, vecs) = sym_eigen_desc(a);
    let amax = vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut dropped = false;
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = vals[k];
        if l.abs() <= rel_tol * amax || l == 0.0 {
            dropped = true;
            continue;
        }
        let v = vecs.column(k);
        inv += (v * v.transpose()) / l;
    }
    (inv, dropped)
}

/// Least-squares coefficients `(S'S)^+ S'y`, computed through the SVD of `S`.
pub fn least_squares(s: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let k = s.ncols();
    if k == 0 || s.nrows() == 0 {
        return DVector::zeros(k);
    }
    let svd = thin_svd(s, 1e-12);
    let mut coef = DVector::zeros(k);
    let uty = svd.u.transpose() * y;
    for j in 0..svd.rank() {
        coef.axpy(uty[j] / svd.sigma[j], &svd.v.column(j).into_owned(), 1.0);
    }
    coef
}

/// `(W'W)^{-1} W'`, the loading matrix that reconstructs `X W (W'W)^{-1} W'`.
pub fn left_pseudo_inverse(w: &DMatrix<f64>) -> DMatrix<f64> {
    let k = w.ncols();
    if k == 0 {
        return DMatrix::zeros(0, w.nrows());
    }
    let (gram_inv, _) = pinv_symmetric(&(w.transpose() * w), 1e-14);
    gram_inv * w.transpose()
}

/// Numerical rank via singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(x: &DMatrix<f64>, rel_tol: f64) -> usize {
    thin_svd(x, rel_tol).rank()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Vertical concatenation of row blocks that share a column count.
pub fn vstack(blocks: &[&DMatrix<f64>], ncols: usize) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, ncols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn hstack(blocks: &[&DMatrix<f64>], nrows: usize) -> DMatrix<f64> {
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(nrows, k);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (nrows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs_wide_and_tall() {
        let x = DMatrix::from_fn(4, 7, |i, j| ((i * 7 + j) as f64).sin());
        for m in [x.clone(), x.transpose()] {
            let svd = thin_svd(&m, 1e-12);
            let rec = &svd.u * DMatrix::from_diagonal(&svd.sigma) * svd.v.transpose();
            assert!((rec - &m).norm() < 1e-10 * m.norm());
            for w in svd.sigma.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn svd_truncates_rank() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let x = &a * b.transpose();
        assert_eq!(thin_svd(&x, 1e-10).rank(), 1);
    }

    #[test]
    fn null_space_is_orthogonal_and_complete() {
        let b = DMatrix::from_fn(6, 2, |i, j| (i as f64 + 1.0).powi(j as i32 + 1));
        let p = null_space_of_transpose(&b, 1e-12);
        assert_eq!(p.ncols(), 4);
        assert!((b.transpose() * &p).norm() < 1e-12);
        assert!((p.transpose() * &p - DMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn pinv_flags_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, dropped) = pinv_symmetric(&a, 1e-12);
        assert!(dropped);
        assert!((&a * &inv * &a - &a).norm() < 1e-12);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let s = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let c = least_squares(&s, &y);
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
    }
}
