//! Matrix intervals: elementwise boxes of matrices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `{ X : lower <= X <= upper }` elementwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixInterval {
    #[serde(with = "crate::io::a2")]
    lower: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    upper: Array2<f64>,
}

impl MatrixInterval {
    pub fn new(lower: Array2<f64>, upper: Array2<f64>) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(Error::shape(format!(
                "interval bounds {:?} vs {:?}",
                lower.dim(),
                upper.dim()
            )));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter(
                "interval lower bound exceeds upper bound".into(),
            ));
        }
        Ok(MatrixInterval { lower, upper })
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &Array2<f64> {
        &self.upper
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lower.dim()
    }

    /// Elementwise containment with slack `tol`.
    pub fn contains(&self, x: &Array2<f64>, tol: f64) -> bool {
        x.dim() == self.lower.dim()
            && x.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// True when every entry range of `self` lies inside the other interval.
    pub fn within(&self, other: &MatrixInterval, tol: f64) -> bool {
        other.contains(&self.lower, tol) && other.contains(&self.upper, tol)
    }

    pub fn width(&self) -> Array2<f64> {
        &self.upper - &self.lower
    }
}
