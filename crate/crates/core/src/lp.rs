//! The single linear-programming contract used by every solve in the crate.
//!
//! Callers compile their constructions into one canonical form
//! `min c'x  s.t.  A x <= b,  A_eq x = b_eq,  lo <= x <= hi`
//! and get a status-faithful outcome back. Feasibility problems use a zero
//! objective. The backing solver is an implementation detail behind
//! [`LinearProgram::solve`]; swapping it touches nothing else.

use std::collections::BTreeMap;
use std::path::Path;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse constraint row: terms `(variable index, coefficient)` and a
/// right-hand side.
type Row = (Vec<(usize, f64)>, f64);

/// A linear program in canonical minimization form.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    nvars: usize,
    objective: Vec<f64>,
    ineq: Vec<Row>,
    eq: Vec<Row>,
    bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Result of [`LinearProgram::solve`].
#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Present when `status == Optimal`.
    pub solution: Option<Array1<f64>>,
    /// Present when `status == Optimal`.
    pub objective_value: Option<f64>,
    /// Max violation of equality rows at the returned solution.
    pub max_eq_residual: f64,
    /// Max violation of inequality rows at the returned solution.
    pub max_ineq_residual: f64,
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// The solution vector, or an error naming the failed status.
    pub fn require_optimal(&self, what: &str) -> Result<&Array1<f64>> {
        match self.status {
            LpStatus::Optimal => Ok(self.solution.as_ref().expect("optimal carries solution")),
            LpStatus::Infeasible => Err(Error::EmptySet(format!("{what}: LP infeasible"))),
            LpStatus::Unbounded => Err(Error::Unbounded(what.into())),
            LpStatus::NumericalFailure => Err(Error::LpFailure(what.into())),
        }
    }
}

impl LinearProgram {
    /// A feasibility problem over `nvars` free variables (zero objective).
    pub fn new(nvars: usize) -> Self {
        LinearProgram {
            nvars,
            objective: vec![0.0; nvars],
            ineq: Vec::new(),
            eq: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); nvars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    /// Adds `sum coeff_i x_i <= rhs`.
    pub fn add_ineq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.ineq.push((terms, rhs));
    }

    /// Adds `sum coeff_i x_i = rhs`.
    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.eq.push((terms, rhs));
    }

    pub fn num_rows(&self) -> (usize, usize) {
        (self.ineq.len(), self.eq.len())
    }

    fn validate(&self) -> Result<()> {
        if !self.objective.iter().all(|c| c.is_finite()) {
            return Err(Error::shape("LP objective has non-finite coefficients"));
        }
        for (lo, hi) in &self.bounds {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::shape(format!("invalid variable bounds ({lo}, {hi})")));
            }
        }
        for (terms, rhs) in self.ineq.iter().chain(self.eq.iter()) {
            if !rhs.is_finite() {
                return Err(Error::shape("LP row rhs is non-finite"));
            }
            for &(idx, c) in terms {
                if idx >= self.nvars {
                    return Err(Error::shape(format!(
                        "LP row references variable {idx} of {}",
                        self.nvars
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::shape("LP row coefficient is non-finite"));
                }
            }
        }
        Ok(())
    }

    /// Merge duplicate indices and drop entries below noise level.
    fn compact(terms: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, c) in terms {
            *map.entry(i).or_insert(0.0) += c;
        }
        map.into_iter().filter(|(_, c)| c.abs() > 1e-14).collect()
    }

    /// Solve the program. Status is faithful to the solver; `Optimal`
    /// solutions satisfy all rows within `tol` (reported in the residual
    /// fields). Structurally void rows (all coefficients ~0) are decided
    /// directly from their right-hand side.
    ///
    /// With `ZONOSAFE_LP_DUMP_DIR` set, every solved program is also
    /// recorded to that directory as numbered structured text files.
    pub fn solve(&self, tol: f64) -> Result<LpOutcome> {
        self.validate()?;
        if let Ok(dir) = std::env::var("ZONOSAFE_LP_DUMP_DIR") {
            static COUNTER: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
            let id = COUNTER.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            let _ = std::fs::create_dir_all(&dir);
            let _ = self.dump(std::path::Path::new(&dir).join(format!("lp_{id:06}.json")));
        }

        let infeasible = LpOutcome {
            status: LpStatus::Infeasible,
            solution: None,
            objective_value: None,
            max_eq_residual: f64::INFINITY,
            max_ineq_residual: f64::INFINITY,
        };

        // Screen structurally void rows once.
        for (terms, rhs) in &self.ineq {
            if Self::compact(terms).is_empty() && *rhs < -tol {
                return Ok(infeasible.clone());
            }
        }
        for (terms, rhs) in &self.eq {
            if Self::compact(terms).is_empty() && rhs.abs() > tol {
                return Ok(infeasible.clone());
            }
        }

        // The backing simplex can occasionally fail on a particular pivot
        // path. All retries pose the same program: rows reversed, then
        // equalities split into inequality pairs.
        let attempts: [(bool, bool); 3] = [(false, false), (true, false), (false, true)];
        let mut last = LpOutcome {
            status: LpStatus::NumericalFailure,
            solution: None,
            objective_value: None,
            max_eq_residual: f64::INFINITY,
            max_ineq_residual: f64::INFINITY,
        };
        for (reverse_rows, split_eq) in attempts {
            match self.solve_once(reverse_rows, split_eq) {
                SolveAttempt::Done(outcome) => return Ok(outcome),
                SolveAttempt::Failed => {
                    last.status = LpStatus::NumericalFailure;
                }
            }
        }
        Ok(last)
    }

    fn solve_once(&self, reverse_rows: bool, split_eq: bool) -> SolveAttempt {
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let vars: Vec<_> = (0..self.nvars)
            .map(|i| problem.add_var(self.objective[i], self.bounds[i]))
            .collect();

        // Rows are equilibrated to unit max coefficient before they reach
        // the solver; semantically identical, keeps the simplex well
        // conditioned when callers mix very different magnitudes.
        let mut rows: Vec<(Vec<(usize, f64)>, ComparisonOp, f64)> = Vec::new();
        for (terms, rhs) in &self.ineq {
            let compacted = Self::compact(terms);
            if compacted.is_empty() {
                continue;
            }
            let scale = row_scale(&compacted);
            let scaled: Vec<_> = compacted.iter().map(|&(i, c)| (i, c * scale)).collect();
            rows.push((scaled, ComparisonOp::Le, rhs * scale));
        }
        for (terms, rhs) in &self.eq {
            let compacted = Self::compact(terms);
            if compacted.is_empty() {
                continue;
            }
            let scale = row_scale(&compacted);
            let scaled: Vec<_> = compacted.iter().map(|&(i, c)| (i, c * scale)).collect();
            if split_eq {
                rows.push((scaled.clone(), ComparisonOp::Le, rhs * scale));
                rows.push((scaled, ComparisonOp::Ge, rhs * scale));
            } else {
                rows.push((scaled, ComparisonOp::Eq, rhs * scale));
            }
        }
        if reverse_rows {
            rows.reverse();
        }
        for (terms, op, rhs) in rows {
            let expr: Vec<_> = terms.iter().map(|&(i, c)| (vars[i], c)).collect();
            problem.add_constraint(expr.as_slice(), op, rhs);
        }

        let outcome = match problem.solve() {
            Ok(outcome) => outcome,
            Err(microlp::Error::Infeasible) => {
                return SolveAttempt::Done(LpOutcome {
                    status: LpStatus::Infeasible,
                    solution: None,
                    objective_value: None,
                    max_eq_residual: f64::INFINITY,
                    max_ineq_residual: f64::INFINITY,
                })
            }
            Err(microlp::Error::Unbounded) => {
                return SolveAttempt::Done(LpOutcome {
                    status: LpStatus::Unbounded,
                    solution: None,
                    objective_value: None,
                    max_eq_residual: f64::INFINITY,
                    max_ineq_residual: f64::INFINITY,
                })
            }
            Err(_) => return SolveAttempt::Failed,
        };
        let solution = match outcome.into_solution() {
            Ok(sol) => sol,
            Err(_) => return SolveAttempt::Failed,
        };

        let x = Array1::from_iter(vars.iter().map(|&v| solution.var_value(v)));
        let (eq_res, ineq_res) = self.residuals(&x);
        SolveAttempt::Done(LpOutcome {
            status: LpStatus::Optimal,
            solution: Some(x),
            objective_value: Some(solution.objective()),
            max_eq_residual: eq_res,
            max_ineq_residual: ineq_res,
        })
    }

    /// Max equality / inequality violations of `x` across all rows.
    pub fn residuals(&self, x: &Array1<f64>) -> (f64, f64) {
        let eval = |terms: &[(usize, f64)]| terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>();
        let eq = self
            .eq
            .iter()
            .map(|(t, rhs)| (eval(t) - rhs).abs())
            .fold(0.0f64, f64::max);
        let ineq = self
            .ineq
            .iter()
            .map(|(t, rhs)| (eval(t) - rhs).max(0.0))
            .fold(0.0f64, f64::max);
        (eq, ineq)
    }

    /// Dense view of the program for inspection dumps and tests.
    fn dense(&self) -> DenseLp {
        let to_dense = |rows: &[Row]| {
            let mut a = Array2::<f64>::zeros((rows.len(), self.nvars));
            let mut b = Array1::<f64>::zeros(rows.len());
            for (r, (terms, rhs)) in rows.iter().enumerate() {
                for &(i, c) in terms {
                    a[[r, i]] += c;
                }
                b[r] = *rhs;
            }
            (a, b)
        };
        let (ineq_a, ineq_b) = to_dense(&self.ineq);
        let (eq_a, eq_b) = to_dense(&self.eq);
        DenseLp {
            objective: Array1::from_vec(self.objective.clone()),
            ineq_a,
            ineq_b,
            eq_a,
            eq_b,
            bounds: self
                .bounds
                .iter()
                .map(|&(lo, hi)| {
                    (
                        lo.is_finite().then_some(lo),
                        hi.is_finite().then_some(hi),
                    )
                })
                .collect(),
        }
    }

    /// Write the program to a structured text file for offline inspection.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::save_json(path, &self.dense())
    }
}

enum SolveAttempt {
    Done(LpOutcome),
    Failed,
}

fn row_scale(terms: &[(usize, f64)]) -> f64 {
    let max = terms.iter().fold(0.0f64, |acc, &(_, c)| acc.max(c.abs()));
    if max > 0.0 {
        1.0 / max
    } else {
        1.0
    }
}

#[derive(Serialize)]
struct DenseLp {
    #[serde(with = "crate::io::a1")]
    objective: Array1<f64>,
    #[serde(with = "crate::io::a2")]
    ineq_a: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    ineq_b: Array1<f64>,
    #[serde(with = "crate::io::a2")]
    eq_a: Array2<f64>,
    #[serde(with = "crate::io::a1")]
    eq_b: Array1<f64>,
    bounds: Vec<(Option<f64>, Option<f64>)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimize_with_lower_bound() {
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, 1.0);
        lp.add_ineq(vec![(0, -1.0)], -3.0); // x >= 3
        let out = lp.solve(1e-9).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.solution.unwrap()[0] - 3.0).abs() < 1e-9);
        assert!((out.objective_value.unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.add_ineq(vec![(0, 1.0)], -1.0); // x <= -1
        lp.add_ineq(vec![(0, -1.0)], -1.0); // x >= 1
        let out = lp.solve(1e-9).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
    }

    #[test]
    fn free_descent_is_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.set_objective(0, -1.0);
        let out = lp.solve(1e-9).unwrap();
        assert_eq!(out.status, LpStatus::Unbounded);
    }

    #[test]
    fn void_rows_decided_by_rhs() {
        let mut lp = LinearProgram::new(1);
        lp.add_eq(vec![(0, 0.0)], 0.0);
        lp.add_ineq(vec![], 1.0);
        lp.set_bounds(0, 0.0, 1.0);
        assert_eq!(lp.solve(1e-9).unwrap().status, LpStatus::Optimal);

        let mut bad = LinearProgram::new(1);
        bad.add_eq(vec![(0, 0.0)], 5.0);
        assert_eq!(bad.solve(1e-9).unwrap().status, LpStatus::Infeasible);
    }

    /// Random bounded feasible LPs: primal optimum equals the optimum of the
    /// explicit dual `max -b'y s.t. A'y = -c, y >= 0`.
    #[test]
    fn duality_spot_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 3;
            let k = 5;
            // Random rows plus a box so the problem is bounded; rhs chosen so
            // a known point is strictly feasible.
            let mut a = vec![vec![0.0; n]; k + 2 * n];
            let mut b = vec![0.0; k + 2 * n];
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            for r in 0..k {
                for c in 0..n {
                    a[r][c] = rng.random_range(-1.0..1.0);
                }
                let ax: f64 = (0..n).map(|c| a[r][c] * x0[c]).sum();
                b[r] = ax + rng.random_range(0.1..1.0);
            }
            for i in 0..n {
                a[k + 2 * i][i] = 1.0;
                b[k + 2 * i] = 10.0;
                a[k + 2 * i + 1][i] = -1.0;
                b[k + 2 * i + 1] = 10.0;
            }
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

            let rows = k + 2 * n;
            let mut primal = LinearProgram::new(n);
            for (i, ci) in c.iter().enumerate() {
                primal.set_objective(i, *ci);
            }
            for r in 0..rows {
                let terms = (0..n).map(|j| (j, a[r][j])).collect();
                primal.add_ineq(terms, b[r]);
            }
            let p = primal.solve(1e-9).unwrap();
            assert_eq!(p.status, LpStatus::Optimal);

            let mut dual = LinearProgram::new(rows);
            for r in 0..rows {
                dual.set_bounds(r, 0.0, f64::INFINITY);
                dual.set_objective(r, b[r]); // min b'y == max -b'y
            }
            for j in 0..n {
                let terms = (0..rows).map(|r| (r, a[r][j])).collect();
                dual.add_eq(terms, -c[j]);
            }
            let d = dual.solve(1e-9).unwrap();
            assert_eq!(d.status, LpStatus::Optimal);
            let dual_opt = -d.objective_value.unwrap();
            assert!(
                (p.objective_value.unwrap() - dual_opt).abs() < 1e-6,
                "primal {} vs dual {}",
                p.objective_value.unwrap(),
                dual_opt
            );
        }
    }

    /// Positive scaling of the objective changes neither status nor argmin.
    #[test]
    fn objective_scaling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = 3;
            let mut base = LinearProgram::new(n);
            for i in 0..n {
                base.set_bounds(i, -2.0, 2.0);
                base.set_objective(i, rng.random_range(-1.0..1.0));
            }
            base.add_ineq(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.5);

            let mut scaled = base.clone();
            for i in 0..n {
                scaled.set_objective(i, 7.5 * base.objective[i]);
            }
            let a = base.solve(1e-9).unwrap();
            let b = scaled.solve(1e-9).unwrap();
            assert_eq!(a.status, b.status);
            let xa = a.solution.unwrap();
            let xb = b.solution.unwrap();
            for i in 0..n {
                assert!((xa[i] - xb[i]).abs() < 1e-7);
            }
        }
    }
}
