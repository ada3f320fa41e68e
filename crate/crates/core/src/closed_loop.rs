//! The family of closed-loop systems consistent with data, disturbance
//! bounds, and prior model knowledge.
//!
//! With the gain parametrized as `K = U0 V_K`, `X0 V_K = I`, every
//! closed-loop matrix consistent with the data equals `(X1 - W0) V_K` for a
//! disturbance sequence `W0` that (a) lies in the disturbance-sequence set,
//! (b) leaves the data explainable by *some* model (the right-annihilator
//! constraint), and (c) leaves it explainable by a model inside the prior
//! set. Intersecting those three descriptions gives one constrained matrix
//! zonotope whose constraint blocks are independent of `V_K`; instantiating
//! a gain only rewrites centers and generators.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{right_annihilator, DataBatch, DisturbanceConcat};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sets::{ConstrainedMatrixZonotope, ConstrainedZonotope};

/// Prior knowledge: a constrained matrix zonotope known to contain the true
/// `[A B]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PriorKnowledge {
    pub set: ConstrainedMatrixZonotope,
}

impl PriorKnowledge {
    pub fn new(set: ConstrainedMatrixZonotope) -> Self {
        PriorKnowledge { set }
    }

    /// Exact knowledge `{theta}`.
    pub fn singleton(theta: Array2<f64>) -> Self {
        PriorKnowledge {
            set: ConstrainedMatrixZonotope::unconstrained(theta, Vec::new()),
        }
    }

    /// Box prior: one generator per entry, each of half-width `halfwidth`,
    /// centered at `center`.
    pub fn entry_box(center: Array2<f64>, halfwidth: f64) -> Self {
        let (n, p) = center.dim();
        let mut generators = Vec::with_capacity(n * p);
        for col in 0..p {
            for row in 0..n {
                let mut g = Array2::zeros((n, p));
                g[[row, col]] = halfwidth;
                generators.push(g);
            }
        }
        PriorKnowledge {
            set: ConstrainedMatrixZonotope::unconstrained(center, generators),
        }
    }

    pub fn contains(&self, theta: &Array2<f64>, tol: f64) -> Result<bool> {
        self.set.contains(theta, tol)
    }
}

/// Gain decision variable `V_K` with its induced gain `K = U0 V_K`; valid
/// ones satisfy `X0 V_K = I`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainParam {
    #[serde(with = "crate::io::a2")]
    pub v_k: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub k: Array2<f64>,
}

/// Tolerance on `X0 V_K = I` for accepting a gain parameter.
pub const GAIN_PARAM_TOL: f64 = 1e-6;

/// Validate `X0 V_K = I` and read off `K = U0 V_K`.
pub fn gain_from_vk(batch: &DataBatch, v_k: Array2<f64>) -> Result<GainParam> {
    let n = batch.state_dim();
    if v_k.dim() != (batch.t, n) {
        return Err(Error::shape(format!(
            "gain parameter is {:?}, expected ({}, {n})",
            v_k.dim(),
            batch.t
        )));
    }
    let residual = &batch.x0.dot(&v_k) - &Array2::<f64>::eye(n);
    let err = linalg::max_abs(&residual);
    if err > GAIN_PARAM_TOL {
        return Err(Error::Inconsistent(format!(
            "X0 V_K deviates from identity by {err:.3e}"
        )));
    }
    let k = batch.u0.dot(&v_k);
    Ok(GainParam { v_k, k })
}

/// Minimum-norm solve of `D0 V_K = [I; K]` (exists whenever the data matrix
/// has full row rank).
pub fn vk_from_gain(batch: &DataBatch, k: &Array2<f64>) -> Result<GainParam> {
    let n = batch.state_dim();
    let m = batch.input_dim();
    if k.dim() != (m, n) {
        return Err(Error::shape(format!(
            "gain is {:?}, expected ({m}, {n})",
            k.dim()
        )));
    }
    let mut rhs = Array2::zeros((n + m, n));
    rhs.slice_mut(ndarray::s![..n, ..]).assign(&Array2::eye(n));
    rhs.slice_mut(ndarray::s![n.., ..]).assign(k);
    let gram = batch.d0.dot(&batch.d0.t());
    let sol = linalg::solve_square(&gram, &rhs)
        .map_err(|_| Error::RankDeficient("data matrix lacks full row rank".into()))?;
    let v_k = batch.d0.t().dot(&sol);
    let residual = &batch.d0.dot(&v_k) - &rhs;
    let err = linalg::max_abs(&residual);
    if err > 1e-8 {
        return Err(Error::Inconsistent(format!(
            "gain parametrization residual {err:.3e}"
        )));
    }
    gain_from_vk(batch, v_k)
}

/// Disturbance sequences that leave the data explainable by *some* model:
/// the concatenated disturbance set constrained through the data's right
/// annihilator (`A_i = G_i N`, `B = (X1 - C) N` for `N` the annihilator).
pub fn noise_consistent_disturbances(
    dc: &DisturbanceConcat,
    batch: &DataBatch,
) -> Result<ConstrainedMatrixZonotope> {
    if dc.horizon != batch.t {
        return Err(Error::shape(format!(
            "disturbance horizon {} vs batch length {}",
            dc.horizon, batch.t
        )));
    }
    let ann = right_annihilator(&batch.d0, 1e-10)?;
    let con_a: Vec<Array2<f64>> = dc.mz.generators().iter().map(|g| g.dot(&ann)).collect();
    let con_b = (&batch.x1 - dc.mz.center()).dot(&ann);
    ConstrainedMatrixZonotope::new(
        dc.mz.center().clone(),
        dc.mz.generators().to_vec(),
        con_a,
        con_b,
    )
}

/// Disturbance sequences that leave the data explainable by a model inside
/// the prior set: `W0 = X1 - Theta D0` pushed through the prior's
/// generators.
pub fn prior_consistent_disturbances(
    prior: &PriorKnowledge,
    batch: &DataBatch,
) -> Result<ConstrainedMatrixZonotope> {
    let n = batch.state_dim();
    let m = batch.input_dim();
    if prior.set.dims() != (n, n + m) {
        return Err(Error::shape(format!(
            "prior is over {:?} matrices, expected ({n}, {})",
            prior.set.dims(),
            n + m
        )));
    }
    let generators: Vec<Array2<f64>> = prior
        .set
        .generators()
        .iter()
        .map(|g| -g.dot(&batch.d0))
        .collect();
    let center = &batch.x1 - &prior.set.center().dot(&batch.d0);
    ConstrainedMatrixZonotope::new(
        center,
        generators,
        prior.set.con_a().to_vec(),
        prior.set.con_b().clone(),
    )
}

/// Disturbance sequences consistent with both descriptions. The
/// intersection pads constraint blocks to width `max(T, q1, q2)`, which
/// reproduces the two padding regimes (prior constraint width below or
/// above the data horizon) with zero-width blocks where they degenerate.
pub fn consistent_disturbances(
    noise: &ConstrainedMatrixZonotope,
    prior: &ConstrainedMatrixZonotope,
) -> Result<ConstrainedMatrixZonotope> {
    noise.intersect(prior)
}

/// Generator counts and dimensions of a closed-loop family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCounts {
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
    pub base_disturbance_generators: usize,
    pub prior_generators: usize,
    /// Total latent dimension: `horizon * base + prior`.
    pub total_generators: usize,
}

/// Everything of the closed-loop constrained matrix zonotope except the
/// gain: `<[-(G_w o V_K), 0], (X1 - C_w) V_K, A_C, B_C>` parametrized by
/// `V_K`. The constraint blocks are independent of the gain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedLoopFamily {
    #[serde(with = "crate::io::a2")]
    pub x1_minus_cw: Array2<f64>,
    /// Negated disturbance-sequence generators, one per latent scalar of the
    /// concatenation.
    #[serde(with = "crate::io::a2vec")]
    pub gw_neg: Vec<Array2<f64>>,
    #[serde(with = "crate::io::a2vec")]
    pub con_a: Vec<Array2<f64>>,
    #[serde(with = "crate::io::a2")]
    pub con_b: Array2<f64>,
    pub counts: FamilyCounts,
}

impl ClosedLoopFamily {
    /// The closed-loop set for a concrete gain parameter.
    pub fn instantiate(&self, gain: &GainParam) -> Result<ConstrainedMatrixZonotope> {
        let n = self.counts.state_dim;
        if gain.v_k.dim() != (self.counts.horizon, n) {
            return Err(Error::shape(format!(
                "gain parameter is {:?}, family expects ({}, {n})",
                gain.v_k.dim(),
                self.counts.horizon
            )));
        }
        let mut generators: Vec<Array2<f64>> = self
            .gw_neg
            .iter()
            .map(|g| g.dot(&gain.v_k))
            .collect();
        generators.extend(std::iter::repeat_n(
            Array2::zeros((n, n)),
            self.counts.prior_generators,
        ));
        let center = self.x1_minus_cw.dot(&gain.v_k);
        ConstrainedMatrixZonotope::new(center, generators, self.con_a.clone(), self.con_b.clone())
    }

    /// The latent constraint set `{z : sum_i A_i z_i = B, ||z||_inf <= 1}`
    /// as a zero-dimensional constrained zonotope, for latent-coordinate
    /// bound queries.
    pub fn latent_set(&self) -> ConstrainedZonotope {
        let s = self.counts.total_generators;
        let (rows, rhs) = self.latent_constraints();
        ConstrainedZonotope::new(Array2::zeros((0, s)), Array1::zeros(0), rows, rhs)
            .expect("latent set shapes are consistent by construction")
    }

    /// Scalarized latent constraints: stacked rows of
    /// `sum_i A_i z_i = B` as `(matrix, rhs)`.
    pub fn latent_constraints(&self) -> (Array2<f64>, Array1<f64>) {
        let s = self.counts.total_generators;
        let probe = ConstrainedMatrixZonotope::new(
            Array2::zeros((1, 1)),
            vec![Array2::zeros((1, 1)); s],
            self.con_a.clone(),
            self.con_b.clone(),
        )
        .expect("constraint blocks are consistent");
        let vz = probe.vectorize();
        (vz.con_a().clone(), vz.con_b().clone())
    }

    /// Disturbance sequence encoded by the first `horizon * base` latent
    /// coordinates of a family member.
    pub fn disturbance_for_latent(&self, dc: &DisturbanceConcat, zeta: &Array1<f64>) -> Array2<f64> {
        let mut w = dc.mz.center().clone();
        let lead = self.counts.horizon * self.counts.base_disturbance_generators;
        for (i, g) in dc.mz.generators().iter().enumerate().take(lead) {
            w = &w + &(g * zeta[i]);
        }
        w
    }
}

fn family_from_parts(
    batch: &DataBatch,
    dc: &DisturbanceConcat,
    con_a: Vec<Array2<f64>>,
    con_b: Array2<f64>,
    prior_generators: usize,
) -> ClosedLoopFamily {
    let counts = FamilyCounts {
        state_dim: batch.state_dim(),
        input_dim: batch.input_dim(),
        horizon: batch.t,
        base_disturbance_generators: dc.base_generators,
        prior_generators,
        total_generators: dc.mz.num_generators() + prior_generators,
    };
    ClosedLoopFamily {
        x1_minus_cw: &batch.x1 - dc.mz.center(),
        gw_neg: dc.mz.generators().iter().map(|g| -g).collect(),
        con_a,
        con_b,
        counts,
    }
}

/// Family using only the disturbance-sequence bound (no data-explainability
/// or prior constraints).
pub fn unconstrained_family(batch: &DataBatch, dc: &DisturbanceConcat) -> Result<ClosedLoopFamily> {
    if dc.horizon != batch.t {
        return Err(Error::shape("disturbance horizon vs batch length"));
    }
    let s = dc.mz.num_generators();
    Ok(family_from_parts(
        batch,
        dc,
        vec![Array2::zeros((0, 0)); s],
        Array2::zeros((0, 0)),
        0,
    ))
}

/// Family refined by the data-explainability constraint only.
pub fn noise_refined_family(batch: &DataBatch, dc: &DisturbanceConcat) -> Result<ClosedLoopFamily> {
    let m_w = noise_consistent_disturbances(dc, batch)?;
    Ok(family_from_parts(
        batch,
        dc,
        m_w.con_a().to_vec(),
        m_w.con_b().clone(),
        0,
    ))
}

/// Family refined by both the data-explainability constraint and prior
/// knowledge. Its constraint blocks are exactly those of the consistent
/// disturbance set; the prior contributes trailing zero generators.
pub fn build_family(
    batch: &DataBatch,
    dc: &DisturbanceConcat,
    prior: &PriorKnowledge,
) -> Result<ClosedLoopFamily> {
    let m_w = noise_consistent_disturbances(dc, batch)?;
    let m_d = prior_consistent_disturbances(prior, batch)?;
    let m_dp = consistent_disturbances(&m_w, &m_d)?;
    Ok(family_from_parts(
        batch,
        dc,
        m_dp.con_a().to_vec(),
        m_dp.con_b().clone(),
        prior.set.num_generators(),
    ))
}
