//! Matrix-valued zonotopes and their constrained refinement.
//!
//! A matrix zonotope sums matrix generators scaled by shared latent scalars;
//! the constrained variant adds a matrix-valued linear constraint on those
//! scalars. Membership, sampling, and latent-coordinate bounds all reduce to
//! the vector case by column-stacking.

use ndarray::{Array1, Array2};
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{pad_cols, unvec_col_major, vec_col_major, ConstrainedZonotope, MatrixInterval};

/// `{ sum_i G_i z_i + C : ||z||_inf <= 1 }` with matrix generators `G_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixZonotope {
    #[serde(with = "crate::io::a2")]
    center: Array2<f64>,
    #[serde(with = "crate::io::a2vec")]
    generators: Vec<Array2<f64>>,
}

impl MatrixZonotope {
    pub fn new(center: Array2<f64>, generators: Vec<Array2<f64>>) -> Result<Self> {
        for (i, g) in generators.iter().enumerate() {
            if g.dim() != center.dim() {
                return Err(Error::shape(format!(
                    "generator {i} is {:?}, center is {:?}",
                    g.dim(),
                    center.dim()
                )));
            }
        }
        Ok(MatrixZonotope { center, generators })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.center.dim()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn center(&self) -> &Array2<f64> {
        &self.center
    }

    pub fn generators(&self) -> &[Array2<f64>] {
        &self.generators
    }

    /// Interval enclosure `[C - dG, C + dG]` with `dG = sum_i |G_i|`.
    pub fn interval_hull(&self) -> MatrixInterval {
        let mut delta = Array2::<f64>::zeros(self.center.dim());
        for g in &self.generators {
            delta = &delta + &g.mapv(f64::abs);
        }
        MatrixInterval::new(&self.center - &delta, &self.center + &delta)
            .expect("hull bounds are ordered by construction")
    }

    /// Right multiplication: `{ X N : X in self }` has generators `G_i N` and
    /// center `C N`.
    pub fn transform(&self, n: &Array2<f64>) -> Result<MatrixZonotope> {
        if n.nrows() != self.dims().1 {
            return Err(Error::shape(format!(
                "transform by {}x{} on a set of {}x{} matrices",
                n.nrows(),
                n.ncols(),
                self.dims().0,
                self.dims().1
            )));
        }
        Ok(MatrixZonotope {
            center: self.center.dot(n),
            generators: self.generators.iter().map(|g| g.dot(n)).collect(),
        })
    }

    /// The matrix `sum_i G_i z_i + C`.
    pub fn point_for(&self, zeta: &Array1<f64>) -> Array2<f64> {
        let mut out = self.center.clone();
        for (g, &z) in self.generators.iter().zip(zeta.iter()) {
            out = &out + &(g * z);
        }
        out
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Array2<f64> {
        let zeta = Array1::from_iter(
            (0..self.num_generators()).map(|_| rng.random_range(-1.0f64..=1.0)),
        );
        self.point_for(&zeta)
    }

    /// View as a constrained matrix zonotope with no constraints.
    pub fn to_constrained(&self) -> ConstrainedMatrixZonotope {
        ConstrainedMatrixZonotope::unconstrained(self.center.clone(), self.generators.clone())
    }
}

/// `{ sum_i G_i z_i + C : ||z||_inf <= 1, sum_i A_i z_i = B }` with matrix
/// generators `G_i` and matrix constraint blocks `A_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedMatrixZonotope {
    #[serde(with = "crate::io::a2")]
    center: Array2<f64>,
    #[serde(with = "crate::io::a2vec")]
    generators: Vec<Array2<f64>>,
    #[serde(with = "crate::io::a2vec")]
    con_a: Vec<Array2<f64>>,
    #[serde(with = "crate::io::a2")]
    con_b: Array2<f64>,
}

impl ConstrainedMatrixZonotope {
    pub fn new(
        center: Array2<f64>,
        generators: Vec<Array2<f64>>,
        con_a: Vec<Array2<f64>>,
        con_b: Array2<f64>,
    ) -> Result<Self> {
        for (i, g) in generators.iter().enumerate() {
            if g.dim() != center.dim() {
                return Err(Error::shape(format!(
                    "generator {i} is {:?}, center is {:?}",
                    g.dim(),
                    center.dim()
                )));
            }
        }
        if con_a.len() != generators.len() {
            return Err(Error::shape(format!(
                "{} constraint blocks for {} generators",
                con_a.len(),
                generators.len()
            )));
        }
        for (i, a) in con_a.iter().enumerate() {
            if a.dim() != con_b.dim() {
                return Err(Error::shape(format!(
                    "constraint block {i} is {:?}, offset is {:?}",
                    a.dim(),
                    con_b.dim()
                )));
            }
        }
        Ok(ConstrainedMatrixZonotope {
            center,
            generators,
            con_a,
            con_b,
        })
    }

    pub fn unconstrained(center: Array2<f64>, generators: Vec<Array2<f64>>) -> Self {
        let s = generators.len();
        ConstrainedMatrixZonotope {
            center,
            generators,
            con_a: vec![Array2::zeros((0, 0)); s],
            con_b: Array2::zeros((0, 0)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.center.dim()
    }

    /// Shape `(n_c, p_c)` of the constraint blocks.
    pub fn con_dims(&self) -> (usize, usize) {
        self.con_b.dim()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn center(&self) -> &Array2<f64> {
        &self.center
    }

    pub fn generators(&self) -> &[Array2<f64>] {
        &self.generators
    }

    pub fn con_a(&self) -> &[Array2<f64>] {
        &self.con_a
    }

    pub fn con_b(&self) -> &Array2<f64> {
        &self.con_b
    }

    pub fn point_for(&self, zeta: &Array1<f64>) -> Array2<f64> {
        let mut out = self.center.clone();
        for (g, &z) in self.generators.iter().zip(zeta.iter()) {
            out = &out + &(g * z);
        }
        out
    }

    /// Column-stacked vector form. The latent variable and its constraint
    /// set are preserved exactly, so membership, emptiness, sampling, and
    /// latent bounds of the matrix set coincide with those of this set.
    pub fn vectorize(&self) -> ConstrainedZonotope {
        let (n, p) = self.dims();
        let s = self.num_generators();
        let mut gens = Array2::zeros((n * p, s));
        for (j, g) in self.generators.iter().enumerate() {
            gens.column_mut(j).assign(&vec_col_major(g));
        }
        let (nc, pc) = self.con_dims();
        let mut con = Array2::zeros((nc * pc, s));
        for (j, a) in self.con_a.iter().enumerate() {
            con.column_mut(j).assign(&vec_col_major(a));
        }
        ConstrainedZonotope::new(
            gens,
            vec_col_major(&self.center),
            con,
            vec_col_major(&self.con_b),
        )
        .expect("vectorized shapes are consistent by construction")
    }

    /// Exact intersection. Constraint blocks of both operands are padded
    /// with zero columns to the common width `max(p, q1, q2)` and stacked
    /// together with a generator-matching condition; the generator list
    /// extends by zero matrices for the second operand's latent variables.
    pub fn intersect(&self, other: &ConstrainedMatrixZonotope) -> Result<ConstrainedMatrixZonotope> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!(
                "intersection of {:?} and {:?} matrix sets",
                self.dims(),
                other.dims()
            )));
        }
        let (n, p) = self.dims();
        let (k1, q1) = self.con_dims();
        let (k2, q2) = other.con_dims();
        let s1 = self.num_generators();
        let s2 = other.num_generators();
        let b = p.max(q1).max(q2);

        let mut generators = self.generators.clone();
        generators.extend(std::iter::repeat_n(Array2::zeros((n, p)), s2));

        let rows = k1 + k2 + n;
        let mut con_a = Vec::with_capacity(s1 + s2);
        for i in 0..s1 {
            let mut block = Array2::zeros((rows, b));
            block
                .slice_mut(ndarray::s![..k1, ..])
                .assign(&pad_cols(&self.con_a[i], b));
            block
                .slice_mut(ndarray::s![k1 + k2.., ..])
                .assign(&pad_cols(&self.generators[i], b));
            con_a.push(block);
        }
        for j in 0..s2 {
            let mut block = Array2::zeros((rows, b));
            block
                .slice_mut(ndarray::s![k1..k1 + k2, ..])
                .assign(&pad_cols(&other.con_a[j], b));
            block
                .slice_mut(ndarray::s![k1 + k2.., ..])
                .assign(&(-&pad_cols(&other.generators[j], b)));
            con_a.push(block);
        }

        let mut con_b = Array2::zeros((rows, b));
        con_b
            .slice_mut(ndarray::s![..k1, ..])
            .assign(&pad_cols(&self.con_b, b));
        con_b
            .slice_mut(ndarray::s![k1..k1 + k2, ..])
            .assign(&pad_cols(&other.con_b, b));
        con_b
            .slice_mut(ndarray::s![k1 + k2.., ..])
            .assign(&(&pad_cols(&other.center, b) - &pad_cols(&self.center, b)));

        ConstrainedMatrixZonotope::new(self.center.clone(), generators, con_a, con_b)
    }

    /// Right multiplication by a matrix: `<G o N, C N, A, B>`.
    pub fn transform_matrix(&self, n: &Array2<f64>) -> Result<ConstrainedMatrixZonotope> {
        if n.nrows() != self.dims().1 {
            return Err(Error::shape(format!(
                "transform by {}x{} on a set of {}x{} matrices",
                n.nrows(),
                n.ncols(),
                self.dims().0,
                self.dims().1
            )));
        }
        Ok(ConstrainedMatrixZonotope {
            center: self.center.dot(n),
            generators: self.generators.iter().map(|g| g.dot(n)).collect(),
            con_a: self.con_a.clone(),
            con_b: self.con_b.clone(),
        })
    }

    /// Right multiplication by a vector gives a constrained zonotope with
    /// column-stacked constraints.
    pub fn transform_vector(&self, n: &Array1<f64>) -> Result<ConstrainedZonotope> {
        if n.len() != self.dims().1 {
            return Err(Error::shape(format!(
                "transform by a {}-vector on a set of {}x{} matrices",
                n.len(),
                self.dims().0,
                self.dims().1
            )));
        }
        let rows = self.dims().0;
        let s = self.num_generators();
        let mut gens = Array2::zeros((rows, s));
        for (j, g) in self.generators.iter().enumerate() {
            gens.column_mut(j).assign(&g.dot(n));
        }
        let (nc, pc) = self.con_dims();
        let mut con = Array2::zeros((nc * pc, s));
        for (j, a) in self.con_a.iter().enumerate() {
            con.column_mut(j).assign(&vec_col_major(a));
        }
        ConstrainedZonotope::new(gens, self.center.dot(n), con, vec_col_major(&self.con_b))
    }

    pub fn membership_residual(&self, x: &Array2<f64>, box_slack: f64) -> Result<f64> {
        if x.dim() != self.dims() {
            return Err(Error::shape(format!(
                "membership of a {:?} matrix in a {:?} set",
                x.dim(),
                self.dims()
            )));
        }
        self.vectorize()
            .membership_residual(&vec_col_major(x), box_slack)
    }

    pub fn contains(&self, x: &Array2<f64>, tol: f64) -> Result<bool> {
        Ok(self.membership_residual(x, tol)? <= tol)
    }

    pub fn is_empty(&self, tol: f64) -> Result<bool> {
        self.vectorize().is_empty(tol)
    }

    pub fn sample(&self, rng: &mut impl Rng, count: usize) -> Result<Vec<Array2<f64>>> {
        let (n, p) = self.dims();
        Ok(self
            .vectorize()
            .sample(rng, count)?
            .into_iter()
            .map(|v| unvec_col_major(&v, n, p))
            .collect())
    }

    pub fn sample_latent(&self, rng: &mut impl Rng, count: usize) -> Result<Vec<Array1<f64>>> {
        self.vectorize().sample_latent(rng, count)
    }

    pub fn generator_bounds(&self, index: usize) -> Result<(f64, f64)> {
        self.vectorize().generator_bounds(index)
    }

    /// Exact per-entry ranges under the latent constraints, two LPs per
    /// entry. Unlike [`MatrixZonotope::interval_hull`] this accounts for the
    /// constraint set, so refining a set never widens this hull.
    pub fn interval_hull_exact(&self) -> Result<MatrixInterval> {
        let (n, p) = self.dims();
        let s = self.num_generators();
        let vz = self.vectorize();
        let mut lo = Array2::zeros((n, p));
        let mut hi = Array2::zeros((n, p));
        for j in 0..p {
            for i in 0..n {
                let flat = j * n + i;
                for (sign, out) in [(1.0f64, &mut lo), (-1.0, &mut hi)] {
                    let mut lp = crate::lp::LinearProgram::new(s);
                    for v in 0..s {
                        lp.set_bounds(v, -1.0, 1.0);
                        lp.set_objective(v, sign * vz.generators()[[flat, v]]);
                    }
                    for r in 0..vz.num_constraints() {
                        let terms = (0..s).map(|v| (v, vz.con_a()[[r, v]])).collect();
                        lp.add_eq(terms, vz.con_b()[r]);
                    }
                    let outcome = lp.solve(1e-9)?;
                    let sol = outcome.require_optimal("entry range LP")?;
                    let val: f64 =
                        (0..s).map(|v| vz.generators()[[flat, v]] * sol[v]).sum();
                    out[[i, j]] = self.center[[i, j]] + val;
                }
            }
        }
        // Guard against LP noise inverting near-degenerate entries.
        for i in 0..n {
            for j in 0..p {
                if lo[[i, j]] > hi[[i, j]] {
                    let mid = 0.5 * (lo[[i, j]] + hi[[i, j]]);
                    lo[[i, j]] = mid;
                    hi[[i, j]] = mid;
                }
            }
        }
        MatrixInterval::new(lo, hi)
    }

    /// Nonempty-intersection test with the equality set `{Theta : Theta X = F}`:
    /// holds iff `|F - C X| <= sum_i |G_i X|` and `|B| <= sum_i |A_i|`
    /// elementwise.
    pub fn intersects_equality_set(&self, x: &Array2<f64>, f: &Array2<f64>, tol: f64) -> Result<bool> {
        if x.nrows() != self.dims().1 || f.nrows() != self.dims().0 || f.ncols() != x.ncols() {
            return Err(Error::shape(
                "equality-set test operands do not align with the matrix set",
            ));
        }
        let lhs_top = (f - &self.center.dot(x)).mapv(f64::abs);
        let mut rhs_top = Array2::<f64>::zeros(lhs_top.dim());
        for g in &self.generators {
            rhs_top = &rhs_top + &g.dot(x).mapv(f64::abs);
        }
        let top_ok = lhs_top
            .iter()
            .zip(rhs_top.iter())
            .all(|(l, r)| *l <= *r + tol);

        let lhs_bot = self.con_b.mapv(f64::abs);
        let mut rhs_bot = Array2::<f64>::zeros(lhs_bot.dim());
        for a in &self.con_a {
            rhs_bot = &rhs_bot + &a.mapv(f64::abs);
        }
        let bot_ok = lhs_bot
            .iter()
            .zip(rhs_bot.iter())
            .all(|(l, r)| *l <= *r + tol);
        Ok(top_ok && bot_ok)
    }

    /// Exact intersection with the halfspace-like set
    /// `{Theta : Theta X <= F}` (elementwise).
    ///
    /// Appends one zero generator per scalar inequality entry; the new
    /// latent scalar for entry `(r, c)` carries the constraint coefficient
    /// `L_M[r,c] / 2` with `L_M = F - C X + sum_i |G_i X|`, so the entry's
    /// slack ranges over `[0, L_M[r,c]]` exactly. A single shared slack
    /// scalar would force the slack matrix `F - Theta X` to be proportional
    /// to `L_M` and cut away legitimate members whenever `F` has more than
    /// one entry.
    pub fn intersect_inequality(
        &self,
        x: &Array2<f64>,
        f: &Array2<f64>,
    ) -> Result<ConstrainedMatrixZonotope> {
        if x.nrows() != self.dims().1 || f.nrows() != self.dims().0 || f.ncols() != x.ncols() {
            return Err(Error::shape(
                "inequality intersection operands do not align with the matrix set",
            ));
        }
        let (n, p) = self.dims();
        let (nc, pc) = self.con_dims();
        let s = self.num_generators();
        let r = x.ncols();
        let b = pc.max(r);

        let gx: Vec<Array2<f64>> = self.generators.iter().map(|g| g.dot(x)).collect();
        let mut abs_sum = Array2::<f64>::zeros((n, r));
        for g in &gx {
            abs_sum = &abs_sum + &g.mapv(f64::abs);
        }
        let slack = f - &self.center.dot(x);
        let l_m = &slack + &abs_sum;

        let mut generators = self.generators.clone();
        generators.extend(std::iter::repeat_n(Array2::zeros((n, p)), n * r));

        let rows = nc + n;
        let mut con_a = Vec::with_capacity(s + n * r);
        for i in 0..s {
            let mut block = Array2::zeros((rows, b));
            block
                .slice_mut(ndarray::s![..nc, ..])
                .assign(&pad_cols(&self.con_a[i], b));
            block
                .slice_mut(ndarray::s![nc.., ..])
                .assign(&pad_cols(&gx[i], b));
            con_a.push(block);
        }
        // Slack scalars, column-major over the inequality entries.
        for col in 0..r {
            for row in 0..n {
                let mut block = Array2::zeros((rows, b));
                block[[nc + row, col]] = 0.5 * l_m[[row, col]];
                con_a.push(block);
            }
        }

        let mut con_b = Array2::zeros((rows, b));
        con_b
            .slice_mut(ndarray::s![..nc, ..])
            .assign(&pad_cols(&self.con_b, b));
        con_b
            .slice_mut(ndarray::s![nc.., ..])
            .assign(&pad_cols(&(&slack - &(&l_m * 0.5)), b));

        ConstrainedMatrixZonotope::new(self.center.clone(), generators, con_a, con_b)
    }

    /// Explicit compaction: drop generators whose matrix and constraint
    /// block are both entirely zero. Never applied implicitly, since padded
    /// zero blocks carry positional meaning in stacked constructions.
    pub fn prune_zero_generators(&self) -> ConstrainedMatrixZonotope {
        let mut generators = Vec::new();
        let mut con_a = Vec::new();
        for (g, a) in self.generators.iter().zip(self.con_a.iter()) {
            if g.iter().any(|v| *v != 0.0) || a.iter().any(|v| *v != 0.0) {
                generators.push(g.clone());
                con_a.push(a.clone());
            }
        }
        ConstrainedMatrixZonotope {
            center: self.center.clone(),
            generators,
            con_a,
            con_b: self.con_b.clone(),
        }
    }

    /// Slack scalar implied by a member's latent vector for inequality entry
    /// `(row, col)` of [`Self::intersect_inequality`]'s construction:
    /// `2 (F - C X - L_M/2 - sum_i G_i X z_i)[row,col] / L_M[row,col]`.
    /// For genuine members with a positive `L_M` entry this lies in
    /// `[-1, 1]`.
    pub fn inequality_slack_scalar(
        &self,
        x: &Array2<f64>,
        f: &Array2<f64>,
        zeta: &Array1<f64>,
        row: usize,
        col: usize,
    ) -> f64 {
        let mut gxz = self.center.dot(x);
        for (g, &z) in self.generators.iter().zip(zeta.iter()) {
            gxz = &gxz + &(g.dot(x) * z);
        }
        let mut abs_sum = 0.0;
        for g in &self.generators {
            abs_sum += g.dot(x)[[row, col]].abs();
        }
        let slack = f[[row, col]] - self.center.dot(x)[[row, col]];
        let l_m = slack + abs_sum;
        let residual = f[[row, col]] - gxz[[row, col]] - 0.5 * l_m;
        2.0 * residual / l_m
    }
}
