//! Sufficient LP certificate for constrained-zonotope inclusion.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpStatus};

use super::ConstrainedZonotope;

/// Witness that one constrained zonotope lies inside another: maps every
/// admissible inner latent vector `z` to the outer latent vector
/// `Gamma z + L`, with `P` relaxing the inner constraints onto the outer
/// ones. Valid certificates satisfy
///
/// ```text
/// c2 - c1 = G2 L          G1 = G2 Gamma
/// P A1 = A2 Gamma         P b1 = b2 + A2 L
/// |Gamma| 1 + |L| <= 1
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InclusionCertificate {
    #[serde(with = "crate::io::a2")]
    pub gamma: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    pub l: Array1<f64>,
    #[serde(with = "crate::io::a2")]
    pub p: Array2<f64>,
}

impl InclusionCertificate {
    /// Max violation across the five defining relations.
    pub fn violation(&self, inner: &ConstrainedZonotope, outer: &ConstrainedZonotope) -> f64 {
        let mut worst = 0.0f64;
        let center_gap = outer.center() - inner.center() - &outer.generators().dot(&self.l);
        worst = worst.max(crate::linalg::max_abs_vec(&center_gap));
        let gen_gap = inner.generators() - &outer.generators().dot(&self.gamma);
        worst = worst.max(crate::linalg::max_abs(&gen_gap));
        let con_gap = self.p.dot(inner.con_a()) - outer.con_a().dot(&self.gamma);
        worst = worst.max(crate::linalg::max_abs(&con_gap));
        let off_gap = self.p.dot(inner.con_b()) - outer.con_b() - &outer.con_a().dot(&self.l);
        worst = worst.max(crate::linalg::max_abs_vec(&off_gap));
        for i in 0..self.gamma.nrows() {
            let row_sum: f64 = self.gamma.row(i).iter().map(|v| v.abs()).sum();
            worst = worst.max(row_sum + self.l[i].abs() - 1.0);
        }
        worst
    }

    /// True when all relations hold within `tol`.
    pub fn validate(
        &self,
        inner: &ConstrainedZonotope,
        outer: &ConstrainedZonotope,
        tol: f64,
    ) -> bool {
        self.violation(inner, outer) <= tol
    }

    /// Outer latent witness for an inner latent vector: with
    /// `c1 = c2 - G2 L`, the inner point `c1 + G1 z` equals
    /// `c2 + G2 (Gamma z - L)`.
    pub fn witness(&self, zeta_inner: &Array1<f64>) -> Array1<f64> {
        self.gamma.dot(zeta_inner) - &self.l
    }
}

/// Search for an inclusion certificate `inner ⊆ outer` by linear
/// feasibility. Absolute values are linearized with elementwise slack
/// variables so the whole search stays an LP.
///
/// `Ok(None)` means the LP is infeasible, a legitimate outcome: the
/// condition is sufficient, not necessary.
pub fn inclusion(
    inner: &ConstrainedZonotope,
    outer: &ConstrainedZonotope,
    tol: f64,
) -> Result<Option<InclusionCertificate>> {
    if inner.dim() != outer.dim() {
        return Err(Error::shape(format!(
            "inclusion of a {}-dim set in a {}-dim set",
            inner.dim(),
            outer.dim()
        )));
    }
    let n = inner.dim();
    let s1 = inner.num_generators();
    let s2 = outer.num_generators();
    let q1 = inner.num_constraints();
    let q2 = outer.num_constraints();

    // Variable layout: Gamma (s2 x s1, row major), L (s2), P (q2 x q1),
    // slack |Gamma|, slack |L|.
    let gamma_at = |i: usize, j: usize| i * s1 + j;
    let l_at = |i: usize| s2 * s1 + i;
    let p_at = |i: usize, j: usize| s2 * s1 + s2 + i * q1 + j;
    let sg_at = |i: usize, j: usize| s2 * s1 + s2 + q2 * q1 + i * s1 + j;
    let sl_at = |i: usize| s2 * s1 + s2 + q2 * q1 + s2 * s1 + i;
    let nvars = 2 * s2 * s1 + 2 * s2 + q2 * q1;

    let mut lp = LinearProgram::new(nvars);
    for i in 0..s2 {
        for j in 0..s1 {
            lp.set_bounds(sg_at(i, j), 0.0, 1.0);
        }
        lp.set_bounds(sl_at(i), 0.0, 1.0);
    }

    // c2 - c1 = G2 L
    for r in 0..n {
        let terms = (0..s2).map(|k| (l_at(k), outer.generators()[[r, k]])).collect();
        lp.add_eq(terms, outer.center()[r] - inner.center()[r]);
    }
    // G1 = G2 Gamma
    for r in 0..n {
        for j in 0..s1 {
            let terms = (0..s2)
                .map(|k| (gamma_at(k, j), outer.generators()[[r, k]]))
                .collect();
            lp.add_eq(terms, inner.generators()[[r, j]]);
        }
    }
    // P A1 = A2 Gamma
    for r in 0..q2 {
        for j in 0..s1 {
            let mut terms: Vec<(usize, f64)> = (0..q1)
                .map(|k| (p_at(r, k), inner.con_a()[[k, j]]))
                .collect();
            terms.extend((0..s2).map(|k| (gamma_at(k, j), -outer.con_a()[[r, k]])));
            lp.add_eq(terms, 0.0);
        }
    }
    // P b1 = b2 + A2 L
    for r in 0..q2 {
        let mut terms: Vec<(usize, f64)> =
            (0..q1).map(|k| (p_at(r, k), inner.con_b()[k])).collect();
        terms.extend((0..s2).map(|k| (l_at(k), -outer.con_a()[[r, k]])));
        lp.add_eq(terms, outer.con_b()[r]);
    }
    // |Gamma| and |L| slacks plus the row-sum contraction bound.
    for i in 0..s2 {
        for j in 0..s1 {
            lp.add_ineq(vec![(gamma_at(i, j), 1.0), (sg_at(i, j), -1.0)], 0.0);
            lp.add_ineq(vec![(gamma_at(i, j), -1.0), (sg_at(i, j), -1.0)], 0.0);
        }
        lp.add_ineq(vec![(l_at(i), 1.0), (sl_at(i), -1.0)], 0.0);
        lp.add_ineq(vec![(l_at(i), -1.0), (sl_at(i), -1.0)], 0.0);
        let mut row: Vec<(usize, f64)> = (0..s1).map(|j| (sg_at(i, j), 1.0)).collect();
        row.push((sl_at(i), 1.0));
        lp.add_ineq(row, 1.0);
    }

    let outcome = lp.solve(tol)?;
    match outcome.status {
        LpStatus::Optimal => {
            let x = outcome.solution.unwrap();
            let gamma = Array2::from_shape_fn((s2, s1), |(i, j)| x[gamma_at(i, j)]);
            let l = Array1::from_shape_fn(s2, |i| x[l_at(i)]);
            let p = Array2::from_shape_fn((q2, q1), |(i, j)| x[p_at(i, j)]);
            Ok(Some(InclusionCertificate { gamma, l, p }))
        }
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(Error::LpFailure(
            "inclusion feasibility LP reported unbounded".into(),
        )),
        LpStatus::NumericalFailure => Err(Error::LpFailure("inclusion LP failed".into())),
    }
}
