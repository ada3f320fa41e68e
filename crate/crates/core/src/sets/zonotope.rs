//! Plain zonotopes: affine images of the unit hypercube.

use ndarray::{Array1, Array2};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `{ G z + c : ||z||_inf <= 1 }` with generator matrix `G` (one generator
/// per column) and center `c`. Zero generators make a singleton.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zonotope {
    #[serde(with = "crate::io::a1")]
    center: Array1<f64>,
    #[serde(with = "crate::io::a2")]
    generators: Array2<f64>,
}

impl Zonotope {
    pub fn new(generators: Array2<f64>, center: Array1<f64>) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::shape(format!(
                "zonotope generators have {} rows for a {}-dim center",
                generators.nrows(),
                center.len()
            )));
        }
        Ok(Zonotope { center, generators })
    }

    /// Singleton `{c}`.
    pub fn singleton(center: Array1<f64>) -> Self {
        let n = center.len();
        Zonotope {
            center,
            generators: Array2::zeros((n, 0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn center(&self) -> &Array1<f64> {
        &self.center
    }

    pub fn generators(&self) -> &Array2<f64> {
        &self.generators
    }

    /// Scale all generators by `alpha` (center unchanged).
    pub fn scale_generators(&self, alpha: f64) -> Self {
        Zonotope {
            center: self.center.clone(),
            generators: &self.generators * alpha,
        }
    }

    /// The point `G z + c` for a latent vector `z`.
    pub fn point_for(&self, zeta: &Array1<f64>) -> Array1<f64> {
        self.generators.dot(zeta) + &self.center
    }

    /// Draw a member with latent coordinates uniform on the unit box.
    pub fn sample(&self, rng: &mut impl Rng) -> Array1<f64> {
        let zeta = Array1::from_iter(
            (0..self.num_generators()).map(|_| rng.random_range(-1.0f64..=1.0)),
        );
        self.point_for(&zeta)
    }

    /// Draw a member with latent coordinates on the box corners.
    pub fn sample_corner(&self, rng: &mut impl Rng) -> Array1<f64> {
        let zeta = Array1::from_iter(
            (0..self.num_generators()).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }),
        );
        self.point_for(&zeta)
    }

    /// Membership test via the constrained-zonotope LP.
    pub fn contains(&self, x: &Array1<f64>, tol: f64) -> Result<bool> {
        self.to_constrained().contains(x, tol)
    }

    /// View as a constrained zonotope with no constraints.
    pub fn to_constrained(&self) -> super::ConstrainedZonotope {
        super::ConstrainedZonotope::unconstrained(self.generators.clone(), self.center.clone())
    }
}
