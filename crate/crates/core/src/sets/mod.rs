//! Set representations and their algebra.
//!
//! All types are immutable values; every operation is a pure function that
//! returns a new set, so they are safe to share across threads. Emptiness of
//! constrained sets is a queryable property, never an invariant violation.

mod constrained;
mod inclusion;
mod interval;
mod matrix;
mod polytope;
mod zonotope;

pub use constrained::ConstrainedZonotope;
pub use inclusion::{inclusion, InclusionCertificate};
pub use interval::MatrixInterval;
pub use matrix::{ConstrainedMatrixZonotope, MatrixZonotope};
pub use polytope::Polytope;
pub use zonotope::Zonotope;

use ndarray::{Array1, Array2};

/// Append zero columns so `m` has `cols` columns.
pub(crate) fn pad_cols(m: &Array2<f64>, cols: usize) -> Array2<f64> {
    debug_assert!(cols >= m.ncols());
    if m.ncols() == cols {
        return m.clone();
    }
    let mut out = Array2::zeros((m.nrows(), cols));
    out.slice_mut(ndarray::s![.., ..m.ncols()]).assign(m);
    out
}

/// Column-major flattening of a matrix (columns stacked into one vector).
pub(crate) fn vec_col_major(m: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(m.nrows() * m.ncols());
    let mut k = 0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out[k] = m[[i, j]];
            k += 1;
        }
    }
    out
}

/// Inverse of [`vec_col_major`].
pub(crate) fn unvec_col_major(v: &Array1<f64>, rows: usize, cols: usize) -> Array2<f64> {
    debug_assert_eq!(v.len(), rows * cols);
    let mut out = Array2::zeros((rows, cols));
    let mut k = 0;
    for j in 0..cols {
        for i in 0..rows {
            out[[i, j]] = v[k];
            k += 1;
        }
    }
    out
}
