//! Constrained zonotopes: zonotopes with an affine constraint on the latent
//! box variable. They can represent any bounded polytope.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, LpStatus};

/// `{ G z + c : ||z||_inf <= 1, A z = b }`.
///
/// The represented set may be empty; emptiness is a queryable property, not
/// an invariant violation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedZonotope {
    #[serde(with = "crate::io::a2")]
    generators: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    center: Array1<f64>,
    #[serde(with = "crate::io::a2")]
    con_a: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    con_b: Array1<f64>,
}

impl ConstrainedZonotope {
    pub fn new(
        generators: Array2<f64>,
        center: Array1<f64>,
        con_a: Array2<f64>,
        con_b: Array1<f64>,
    ) -> Result<Self> {
        if generators.nrows() != center.len() {
            return Err(Error::shape(format!(
                "generators have {} rows for a {}-dim center",
                generators.nrows(),
                center.len()
            )));
        }
        if con_a.ncols() != generators.ncols() {
            return Err(Error::shape(format!(
                "constraint matrix has {} columns for {} generators",
                con_a.ncols(),
                generators.ncols()
            )));
        }
        if con_a.nrows() != con_b.len() {
            return Err(Error::shape(format!(
                "constraint matrix has {} rows but offset has {}",
                con_a.nrows(),
                con_b.len()
            )));
        }
        Ok(ConstrainedZonotope {
            generators,
            center,
            con_a,
            con_b,
        })
    }

    pub fn unconstrained(generators: Array2<f64>, center: Array1<f64>) -> Self {
        let s = generators.ncols();
        ConstrainedZonotope {
            generators,
            center,
            con_a: Array2::zeros((0, s)),
            con_b: Array1::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.con_a.nrows()
    }

    pub fn generators(&self) -> &Array2<f64> {
        &self.generators
    }

    pub fn center(&self) -> &Array1<f64> {
        &self.center
    }

    pub fn con_a(&self) -> &Array2<f64> {
        &self.con_a
    }

    pub fn con_b(&self) -> &Array1<f64> {
        &self.con_b
    }

    /// The point `G z + c`.
    pub fn point_for(&self, zeta: &Array1<f64>) -> Array1<f64> {
        self.generators.dot(zeta) + &self.center
    }

    /// `||A z - b||_inf`.
    pub fn constraint_residual(&self, zeta: &Array1<f64>) -> f64 {
        if self.num_constraints() == 0 {
            return 0.0;
        }
        linalg::max_abs_vec(&(self.con_a.dot(zeta) - &self.con_b))
    }

    /// True when `z` is an admissible latent vector within `tol`.
    pub fn latent_feasible(&self, zeta: &Array1<f64>, tol: f64) -> bool {
        linalg::max_abs_vec(zeta) <= 1.0 + tol && self.constraint_residual(zeta) <= tol
    }

    /// Minkowski sum: generators concatenate, constraints go block-diagonal.
    pub fn minkowski_sum(&self, other: &ConstrainedZonotope) -> Result<ConstrainedZonotope> {
        if self.dim() != other.dim() {
            return Err(Error::shape(format!(
                "minkowski sum of {}-dim and {}-dim sets",
                self.dim(),
                other.dim()
            )));
        }
        let generators = concatenate![Axis(1), self.generators, other.generators];
        let center = &self.center + &other.center;
        let (q1, s1) = self.con_a.dim();
        let (q2, s2) = other.con_a.dim();
        let mut con_a = Array2::zeros((q1 + q2, s1 + s2));
        con_a
            .slice_mut(ndarray::s![..q1, ..s1])
            .assign(&self.con_a);
        con_a
            .slice_mut(ndarray::s![q1.., s1..])
            .assign(&other.con_a);
        let con_b = concatenate![Axis(0), self.con_b, other.con_b];
        ConstrainedZonotope::new(generators, center, con_a, con_b)
    }

    /// Boundary-scaled level set `<lambda G, c, A, lambda b>` for
    /// `0 < lambda <= 1`. The center is not scaled.
    pub fn scale_level_set(&self, lambda: f64) -> Result<ConstrainedZonotope> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "level-set scale must lie in (0, 1], got {lambda}"
            )));
        }
        Ok(ConstrainedZonotope {
            generators: &self.generators * lambda,
            center: self.center.clone(),
            con_a: self.con_a.clone(),
            con_b: &self.con_b * lambda,
        })
    }

    /// Smallest equality residual over admissible latent vectors:
    /// `min t  s.t.  |G z - (x - c)| <= t, |A z - b| <= t, ||z||_inf <= 1 + box_slack`.
    ///
    /// Membership holds exactly when this is ~0; the value doubles as the
    /// reported membership residual.
    pub fn membership_residual(&self, x: &Array1<f64>, box_slack: f64) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "membership of a {}-dim point in a {}-dim set",
                x.len(),
                self.dim()
            )));
        }
        let s = self.num_generators();
        let t_var = s;
        let mut lp = LinearProgram::new(s + 1);
        for i in 0..s {
            lp.set_bounds(i, -1.0 - box_slack, 1.0 + box_slack);
        }
        lp.set_bounds(t_var, 0.0, f64::INFINITY);
        lp.set_objective(t_var, 1.0);
        let diff = x - &self.center;
        for r in 0..self.dim() {
            let row: Vec<(usize, f64)> = (0..s).map(|j| (j, self.generators[[r, j]])).collect();
            let mut up = row.clone();
            up.push((t_var, -1.0));
            lp.add_ineq(up, diff[r]);
            let mut down: Vec<(usize, f64)> = row.into_iter().map(|(j, c)| (j, -c)).collect();
            down.push((t_var, -1.0));
            lp.add_ineq(down, -diff[r]);
        }
        for r in 0..self.num_constraints() {
            let row: Vec<(usize, f64)> = (0..s).map(|j| (j, self.con_a[[r, j]])).collect();
            let mut up = row.clone();
            up.push((t_var, -1.0));
            lp.add_ineq(up, self.con_b[r]);
            let mut down: Vec<(usize, f64)> = row.into_iter().map(|(j, c)| (j, -c)).collect();
            down.push((t_var, -1.0));
            lp.add_ineq(down, -self.con_b[r]);
        }
        let outcome = lp.solve(1e-9)?;
        let sol = outcome.require_optimal("membership residual LP")?;
        Ok(sol[t_var].max(0.0))
    }

    /// LP membership: some `z` with `||z||_inf <= 1 + tol` reproduces `x`
    /// and satisfies the constraints within `tol`.
    pub fn contains(&self, x: &Array1<f64>, tol: f64) -> Result<bool> {
        Ok(self.membership_residual(x, tol)? <= tol)
    }

    /// Emptiness of the latent set `{ ||z||_inf <= 1, A z = b }`.
    pub fn is_empty(&self, tol: f64) -> Result<bool> {
        let s = self.num_generators();
        let mut lp = LinearProgram::new(s);
        for i in 0..s {
            lp.set_bounds(i, -1.0, 1.0);
        }
        for r in 0..self.num_constraints() {
            let terms = (0..s).map(|j| (j, self.con_a[[r, j]])).collect();
            lp.add_eq(terms, self.con_b[r]);
        }
        let outcome = lp.solve(tol)?;
        match outcome.status {
            LpStatus::Optimal => Ok(false),
            LpStatus::Infeasible => Ok(true),
            LpStatus::Unbounded => Ok(false),
            LpStatus::NumericalFailure => Err(Error::LpFailure("emptiness check".into())),
        }
    }

    /// Latent samples: draw `z` uniform on the unit box, apply the
    /// minimum-norm correction onto `{A z = b}`, reject if the corrected
    /// point leaves the box.
    ///
    /// Thin feasible slices can defeat pure rejection (the projected draws
    /// almost never land inside the box). When the rejection budget runs
    /// out, remaining samples are produced by scaling projected draws
    /// toward an LP-found feasible anchor along the constraint subspace;
    /// those points are still exact members, just anchored for coverage.
    /// Errors when not even an anchor exists within the budget.
    pub fn sample_latent(&self, rng: &mut impl Rng, count: usize) -> Result<Vec<Array1<f64>>> {
        let s = self.num_generators();
        if s == 0 {
            if linalg::max_abs_vec(&self.con_b) > 1e-9 {
                return Err(Error::EmptySet(
                    "zero-generator set with nonzero constraint offset".into(),
                ));
            }
            return Ok(vec![Array1::zeros(0); count]);
        }
        // Minimum-norm correction: z* = z - A^T (A A^T)^+ (A z - b).
        let correction = if self.num_constraints() > 0 {
            let aat = self.con_a.dot(&self.con_a.t());
            let pinv = linalg::pinv_symmetric(&aat, 1e-12)?;
            Some(self.con_a.t().dot(&pinv))
        } else {
            None
        };
        let project = |zeta: &Array1<f64>| -> Array1<f64> {
            match &correction {
                Some(corr) => {
                    let residual = self.con_a.dot(zeta) - &self.con_b;
                    zeta - &corr.dot(&residual)
                }
                None => zeta.clone(),
            }
        };
        let mut out = Vec::with_capacity(count);
        let budget = 200 * count.max(1) + 1000;
        for _ in 0..budget {
            if out.len() == count {
                break;
            }
            let draw = Array1::from_iter((0..s).map(|_| rng.random_range(-1.0f64..=1.0)));
            let zeta = project(&draw);
            // The residual gate matters: for empty sets the constraint
            // system is inconsistent and projection cannot zero it.
            if linalg::max_abs_vec(&zeta) <= 1.0 + 1e-12
                && self.constraint_residual(&zeta) <= 1e-9
            {
                out.push(zeta);
            }
        }
        if out.len() < count {
            let anchor = self.feasible_latent_point()?;
            while out.len() < count {
                let draw = Array1::from_iter((0..s).map(|_| rng.random_range(-1.0f64..=1.0)));
                let dir = &project(&draw) - &anchor;
                // Largest step from the anchor that keeps the unit box.
                let mut tau = 1.0f64;
                for i in 0..s {
                    if dir[i] > 1e-14 {
                        tau = tau.min((1.0 - anchor[i]) / dir[i]);
                    } else if dir[i] < -1e-14 {
                        tau = tau.min((-1.0 - anchor[i]) / dir[i]);
                    }
                }
                let step = tau.max(0.0) * rng.random_range(0.0f64..=1.0);
                out.push(&anchor + &(&dir * step));
            }
        }
        Ok(out)
    }

    /// Explicit compaction: drop generator columns that are zero in both
    /// the generator matrix and the constraint matrix. Never applied
    /// implicitly.
    pub fn prune_zero_generators(&self) -> ConstrainedZonotope {
        let keep: Vec<usize> = (0..self.num_generators())
            .filter(|&j| {
                self.generators.column(j).iter().any(|v| *v != 0.0)
                    || self.con_a.column(j).iter().any(|v| *v != 0.0)
            })
            .collect();
        let mut generators = Array2::zeros((self.dim(), keep.len()));
        let mut con_a = Array2::zeros((self.num_constraints(), keep.len()));
        for (new, &old) in keep.iter().enumerate() {
            generators.column_mut(new).assign(&self.generators.column(old));
            con_a.column_mut(new).assign(&self.con_a.column(old));
        }
        ConstrainedZonotope {
            generators,
            center: self.center.clone(),
            con_a,
            con_b: self.con_b.clone(),
        }
    }

    /// Some admissible latent vector, via the feasibility LP. Errors when
    /// the latent set is empty.
    pub fn feasible_latent_point(&self) -> Result<Array1<f64>> {
        let s = self.num_generators();
        let mut lp = LinearProgram::new(s);
        for i in 0..s {
            lp.set_bounds(i, -1.0, 1.0);
        }
        for r in 0..self.num_constraints() {
            let terms = (0..s).map(|j| (j, self.con_a[[r, j]])).collect();
            lp.add_eq(terms, self.con_b[r]);
        }
        let outcome = lp.solve(1e-9)?;
        if outcome.status == LpStatus::Infeasible {
            return Err(Error::EmptinessSuspected(
                "no admissible latent point exists".into(),
            ));
        }
        let sol = outcome.require_optimal("feasible latent point")?;
        Ok(sol.clone())
    }

    /// Member points; see [`Self::sample_latent`].
    pub fn sample(&self, rng: &mut impl Rng, count: usize) -> Result<Vec<Array1<f64>>> {
        Ok(self
            .sample_latent(rng, count)?
            .into_iter()
            .map(|z| self.point_for(&z))
            .collect())
    }

    /// Range of the `i`-th latent coordinate over the admissible latent set,
    /// one LP per endpoint. Both endpoints lie in `[-1, 1]` and the lower
    /// never exceeds the upper; constraints may exclude zero.
    pub fn generator_bounds(&self, index: usize) -> Result<(f64, f64)> {
        let s = self.num_generators();
        if index >= s {
            return Err(Error::shape(format!(
                "generator index {index} out of {s}"
            )));
        }
        let mut bounds = [0.0f64; 2];
        for (k, sign) in [(0usize, 1.0f64), (1, -1.0)] {
            let mut lp = LinearProgram::new(s);
            for i in 0..s {
                lp.set_bounds(i, -1.0, 1.0);
            }
            lp.set_objective(index, sign);
            for r in 0..self.num_constraints() {
                let terms = (0..s).map(|j| (j, self.con_a[[r, j]])).collect();
                lp.add_eq(terms, self.con_b[r]);
            }
            let outcome = lp.solve(1e-9)?;
            if outcome.status == LpStatus::Infeasible {
                return Err(Error::EmptySet("generator bounds of an empty set".into()));
            }
            let sol = outcome.require_optimal("generator bound LP")?;
            bounds[k] = sol[index].clamp(-1.0, 1.0);
        }
        let (lo, hi) = (bounds[0].min(bounds[1]), bounds[0].max(bounds[1]));
        Ok((lo, hi))
    }
}
