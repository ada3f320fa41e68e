//! Convex polytopes in halfspace form.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, LpStatus};

use super::{MatrixInterval, Zonotope};

/// `{ x : H x <= h }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    #[serde(with = "crate::io::a2")]
    h_mat: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    h_vec: Array1<f64>,
}

impl Polytope {
    pub fn new(h_mat: Array2<f64>, h_vec: Array1<f64>) -> Result<Self> {
        if h_mat.nrows() != h_vec.len() {
            return Err(Error::shape(format!(
                "polytope has {} rows but {} offsets",
                h_mat.nrows(),
                h_vec.len()
            )));
        }
        Ok(Polytope { h_mat, h_vec })
    }

    pub fn dim(&self) -> usize {
        self.h_mat.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn h_mat(&self) -> &Array2<f64> {
        &self.h_mat
    }

    pub fn h_vec(&self) -> &Array1<f64> {
        &self.h_vec
    }

    pub fn contains(&self, x: &Array1<f64>, tol: f64) -> bool {
        let hx = self.h_mat.dot(x);
        hx.iter().zip(self.h_vec.iter()).all(|(v, h)| *v <= h + tol)
    }

    /// Worst violation of the row constraints at `x` (negative means strictly
    /// inside).
    pub fn violation(&self, x: &Array1<f64>) -> f64 {
        let hx = self.h_mat.dot(x);
        hx.iter()
            .zip(self.h_vec.iter())
            .map(|(v, h)| v - h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Tightest axis-aligned enclosure, computed by one min and one max LP
    /// per coordinate, together with `M_x = max_i max(|lo_i|, |hi_i|)` so
    /// that `||x||_inf <= M_x` for every member.
    ///
    /// Errors when some coordinate is unbounded.
    pub fn interval_hull(&self) -> Result<(MatrixInterval, f64)> {
        let n = self.dim();
        let mut lo = Array2::zeros((n, 1));
        let mut hi = Array2::zeros((n, 1));
        for i in 0..n {
            for (sign, out) in [(1.0, &mut lo), (-1.0, &mut hi)] {
                let mut lp = LinearProgram::new(n);
                lp.set_objective(i, sign);
                for r in 0..self.num_rows() {
                    let terms = (0..n).map(|j| (j, self.h_mat[[r, j]])).collect();
                    lp.add_ineq(terms, self.h_vec[r]);
                }
                let outcome = lp.solve(1e-9)?;
                match outcome.status {
                    LpStatus::Optimal => {
                        out[[i, 0]] = outcome.solution.unwrap()[i];
                    }
                    LpStatus::Unbounded => {
                        return Err(Error::Unbounded(format!(
                            "polytope coordinate {i} has no finite bound"
                        )))
                    }
                    LpStatus::Infeasible => {
                        return Err(Error::EmptySet("polytope has no points".into()))
                    }
                    LpStatus::NumericalFailure => {
                        return Err(Error::LpFailure("polytope interval hull".into()))
                    }
                }
            }
        }
        let m_x = lo
            .iter()
            .chain(hi.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        Ok((MatrixInterval::new(lo, hi)?, m_x))
    }

    /// Largest `tau >= 0` with `from + tau * dir` still inside, or `None`
    /// when the ray never leaves (unbounded direction).
    pub fn ray_to_boundary(&self, from: &Array1<f64>, dir: &Array1<f64>) -> Option<f64> {
        let hd = self.h_mat.dot(dir);
        let hf = self.h_mat.dot(from);
        let mut tau = f64::INFINITY;
        for r in 0..self.num_rows() {
            if hd[r] > 1e-12 {
                tau = tau.min((self.h_vec[r] - hf[r]) / hd[r]);
            }
        }
        tau.is_finite().then_some(tau.max(0.0))
    }

    /// Exact zonotope form for centrally symmetric parallelotope-like
    /// polytopes: rows come in `(row, -row)` pairs with equal offsets and the
    /// `n` independent pair directions form an invertible matrix `M` with
    /// `|M x| <= 1`; then the set equals `<M^-1, 0>`.
    pub fn to_symmetric_zonotope(&self) -> Result<Zonotope> {
        let n = self.dim();
        let q = self.num_rows();
        if q != 2 * n {
            return Err(Error::InvalidParameter(format!(
                "symmetric zonotope form needs {} rows, found {q}",
                2 * n
            )));
        }
        let mut used = vec![false; q];
        let mut m = Array2::<f64>::zeros((n, n));
        let mut next = 0;
        for i in 0..q {
            if used[i] {
                continue;
            }
            let mut mate = None;
            for j in (i + 1)..q {
                if used[j] {
                    continue;
                }
                let opposite = (0..n).all(|k| (self.h_mat[[i, k]] + self.h_mat[[j, k]]).abs() < 1e-12);
                if opposite && (self.h_vec[i] - self.h_vec[j]).abs() < 1e-12 {
                    mate = Some(j);
                    break;
                }
            }
            let j = mate.ok_or_else(|| {
                Error::InvalidParameter(format!("row {i} has no opposite row; polytope not symmetric"))
            })?;
            used[i] = true;
            used[j] = true;
            if self.h_vec[i] <= 0.0 {
                return Err(Error::InvalidParameter(
                    "symmetric polytope rows need positive offsets".into(),
                ));
            }
            for k in 0..n {
                m[[next, k]] = self.h_mat[[i, k]] / self.h_vec[i];
            }
            next += 1;
        }
        debug_assert_eq!(next, n);
        let g = linalg::invert(&m)
            .map_err(|_| Error::InvalidParameter("symmetric polytope directions are dependent".into()))?;
        Zonotope::new(g, Array1::zeros(n))
    }
}
