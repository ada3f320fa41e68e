//! Small dense linear-algebra kernels.
//!
//! Every matrix in this crate is tiny (states and inputs are single digits,
//! data horizons a few dozen columns), so the routines here favor robustness
//! and simplicity over asymptotics: cyclic Jacobi for symmetric
//! eigenproblems, one-sided Jacobi for singular values, and Householder QR
//! for orthonormal null-space bases.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted descending
/// and eigenvectors as columns. The input must be symmetric; only the upper
/// triangle is trusted.
pub fn symmetric_eig(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::shape(format!(
            "symmetric_eig needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return Ok((m.diag().to_owned(), v));
    }

    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals = Array1::from_iter(idx.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (new, &old) in idx.iter().enumerate() {
        vecs.column_mut(new).assign(&v.column(old));
    }
    Ok((vals, vecs))
}

/// Singular values of a rectangular matrix, sorted descending.
///
/// One-sided Jacobi on the side with fewer columns, which keeps small
/// singular values accurate (no squaring of the condition number).
pub fn singular_values(a: &Array2<f64>) -> Array1<f64> {
    let work = if a.nrows() < a.ncols() {
        a.t().to_owned()
    } else {
        a.clone()
    };
    let (m, n) = (work.nrows(), work.ncols());
    if m == 0 || n == 0 {
        return Array1::zeros(0);
    }
    let mut w = work;
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut aii = 0.0;
                let mut ajj = 0.0;
                let mut aij = 0.0;
                for k in 0..m {
                    aii += w[[k, i]] * w[[k, i]];
                    ajj += w[[k, j]] * w[[k, j]];
                    aij += w[[k, i]] * w[[k, j]];
                }
                if aij.abs() <= 1e-16 * (aii * ajj).sqrt() || aij == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (ajj - aii) / (2.0 * aij);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..m {
                    let wki = w[[k, i]];
                    let wkj = w[[k, j]];
                    w[[k, i]] = c * wki - s * wkj;
                    w[[k, j]] = s * wki + c * wkj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|k| w[[k, j]] * w[[k, j]]).sum::<f64>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Array1::from_vec(sv)
}

/// Numerical rank with threshold `tol * sigma_max`.
pub fn numerical_rank(a: &Array2<f64>, tol: f64) -> usize {
    let sv = singular_values(a);
    if sv.is_empty() {
        return 0;
    }
    let cutoff = tol * sv[0];
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Householder QR with the full orthogonal factor.
///
/// For `a` of size m x n with m >= n, returns `(q, r)` where `q` is m x m
/// orthogonal and `r` is m x n upper triangular with `a = q r`.
pub fn qr_full(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (m, n) = (a.nrows(), a.ncols());
    let mut r = a.clone();
    let mut q = Array2::<f64>::eye(m);
    for k in 0..n.min(m.saturating_sub(1)) {
        let mut norm = 0.0;
        for i in k..m {
            norm += r[[i, k]] * r[[i, k]];
        }
        let norm = norm.sqrt();
        if norm <= 1e-300 {
            continue;
        }
        let alpha = if r[[k, k]] >= 0.0 { -norm } else { norm };
        let mut v = Array1::<f64>::zeros(m);
        for i in k..m {
            v[i] = r[[i, k]];
        }
        v[k] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 <= 1e-300 {
            continue;
        }
        // r <- (I - 2 v v^T / v^T v) r
        for j in 0..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i] * r[[i, j]];
            }
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                r[[i, j]] -= f * v[i];
            }
        }
        // q <- q (I - 2 v v^T / v^T v)
        for i in 0..m {
            let mut dot = 0.0;
            for j in k..m {
                dot += q[[i, j]] * v[j];
            }
            let f = 2.0 * dot / vnorm2;
            for j in k..m {
                q[[i, j]] -= f * v[j];
            }
        }
    }
    (q, r)
}

/// Solve a square linear system by Gaussian elimination with partial pivoting.
pub fn solve_square(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::shape(format!(
            "solve_square: {}x{} vs rhs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let rhs = x.ncols();
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if lu[[i, k]].abs() > lu[[piv, k]].abs() {
                piv = i;
            }
        }
        if lu[[piv, k]].abs() <= 1e-300 {
            return Err(Error::RankDeficient(
                "singular matrix in solve_square".into(),
            ));
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..rhs {
                x.swap([k, j], [piv, j]);
            }
        }
        for i in (k + 1)..n {
            let f = lu[[i, k]] / lu[[k, k]];
            lu[[i, k]] = 0.0;
            for j in (k + 1)..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
            for j in 0..rhs {
                x[[i, j]] -= f * x[[k, j]];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..rhs {
            let mut s = x[[k, j]];
            for i in (k + 1)..n {
                s -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = s / lu[[k, k]];
        }
    }
    Ok(x)
}

/// Invert a square matrix.
pub fn invert(a: &Array2<f64>) -> Result<Array2<f64>> {
    solve_square(a, &Array2::eye(a.nrows()))
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix, via Jacobi
/// eigendecomposition with relative cutoff `tol * lambda_max`.
pub fn pinv_symmetric(a: &Array2<f64>, tol: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = symmetric_eig(a)?;
    let n = a.nrows();
    let lmax = vals.iter().cloned().fold(0.0f64, f64::max);
    let mut out = Array2::<f64>::zeros((n, n));
    for k in 0..n {
        if vals[k] > tol * lmax && vals[k] > 0.0 {
            let inv = 1.0 / vals[k];
            let vk = vecs.column(k);
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] += inv * vk[i] * vk[j];
                }
            }
        }
    }
    Ok(out)
}

/// Frobenius norm.
pub fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max absolute entry of a matrix (infinity vector norm applied elementwise).
pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Max absolute entry of a vector.
pub fn max_abs_vec(a: &Array1<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Matrix infinity norm (max absolute row sum).
pub fn inf_norm(a: &Array2<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eig_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = symmetric_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        // eigenvectors orthonormal
        let vtv = vecs.t().dot(&vecs);
        assert!(max_abs(&(&vtv - &Array2::<f64>::eye(2))) < 1e-12);
    }

    #[test]
    fn singular_values_match_known() {
        let a = array![[3.0, 0.0], [0.0, -2.0], [0.0, 0.0]];
        let sv = singular_values(&a);
        assert!((sv[0] - 3.0).abs() < 1e-12);
        assert!((sv[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn qr_reconstructs_and_q_orthogonal() {
        let a = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 9.0]];
        let (q, r) = qr_full(&a);
        let qr = q.dot(&r);
        assert!(max_abs(&(&qr - &a)) < 1e-12);
        let qtq = q.t().dot(&q);
        assert!(max_abs(&(&qtq - &Array2::<f64>::eye(4))) < 1e-12);
    }

    #[test]
    fn solve_square_roundtrip() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![[1.0], [2.0]];
        let x = solve_square(&a, &b).unwrap();
        let res = &a.dot(&x) - &b;
        assert!(max_abs(&res) < 1e-12);
    }

    #[test]
    fn rank_detects_deficiency() {
        let a = array![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]];
        assert_eq!(numerical_rank(&a, 1e-10), 1);
        let b = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(numerical_rank(&b, 1e-10), 2);
    }
}
