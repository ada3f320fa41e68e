//! Set-membership identification with zonotopic noise bounds.
//!
//! A source data batch (a different task, or samples arriving online) and
//! the interval enclosure of its disturbance-sequence set define a pair of
//! elementwise inequalities every data-consistent model must satisfy. The
//! prior model set intersected with those inequalities stays a constrained
//! matrix zonotope, closing the loop between open-loop identification and
//! closed-loop learning: refined priors shrink the closed-loop family.

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::closed_loop::{build_family, ClosedLoopFamily, PriorKnowledge};
use crate::data::{DataBatch, DisturbanceConcat};
use crate::error::{Error, Result};

/// The data-information set `{Theta : |Theta D - X1 + C_w| <= dG_w}` in
/// split form: `Theta D <= F_upper` and `Theta (-D) <= F_lower_rhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityInfoSet {
    #[serde(with = "crate::io::a2")]
    pub d: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub f_upper: Array2<f64>,
    #[serde(with = "crate::io::a2")]
    pub f_lower_rhs: Array2<f64>,
}

impl InequalityInfoSet {
    pub fn horizon(&self) -> usize {
        self.d.ncols()
    }

    /// Direct substitution test for a model.
    pub fn satisfies(&self, theta: &Array2<f64>, tol: f64) -> bool {
        let td = theta.dot(&self.d);
        let upper_ok = td
            .iter()
            .zip(self.f_upper.iter())
            .all(|(v, f)| *v <= f + tol);
        let lower_ok = td
            .iter()
            .zip(self.f_lower_rhs.iter())
            .all(|(v, f)| -*v <= f + tol);
        upper_ok && lower_ok
    }
}

/// Assemble the information set from a source batch. No rank condition is
/// needed; the set may be unbounded (single samples are fine) because it is
/// only ever intersected with a compact prior.
pub fn build_info_set(source: &DataBatch, dc: &DisturbanceConcat) -> Result<InequalityInfoSet> {
    if dc.horizon != source.t {
        return Err(Error::shape(format!(
            "disturbance horizon {} vs source batch length {}",
            dc.horizon, source.t
        )));
    }
    let hull = dc.mz.interval_hull();
    let delta = (hull.upper() - hull.lower()) * 0.5;
    let f_upper = &source.x1 - dc.mz.center() + &delta;
    let f_lower_rhs = -&source.x1 + dc.mz.center() + &delta;
    Ok(InequalityInfoSet {
        d: source.d0.clone(),
        f_upper,
        f_lower_rhs,
    })
}

/// Intersect the prior with both information-set inequalities in one shot,
/// stacking `[D, -D]` columnwise.
pub fn refine_prior_stacked(
    prior: &PriorKnowledge,
    info: &InequalityInfoSet,
) -> Result<PriorKnowledge> {
    let x = concatenate![Axis(1), info.d, -&info.d];
    let f = concatenate![Axis(1), info.f_upper, info.f_lower_rhs];
    Ok(PriorKnowledge::new(prior.set.intersect_inequality(&x, &f)?))
}

/// Intersect the prior with the two inequalities one after the other.
/// Represents the same model set as the stacked form and is valid for any
/// shapes.
pub fn refine_prior_sequential(
    prior: &PriorKnowledge,
    info: &InequalityInfoSet,
) -> Result<PriorKnowledge> {
    let upper = prior.set.intersect_inequality(&info.d, &info.f_upper)?;
    let both = upper.intersect_inequality(&(-&info.d), &info.f_lower_rhs)?;
    Ok(PriorKnowledge::new(both))
}

/// Refine prior knowledge with a source batch's information set.
///
/// The stacked construction is used when the stacked width exceeds the
/// prior's constraint width (`2 T_s > m_theta`); otherwise the two
/// inequalities are applied sequentially.
pub fn refine_prior(prior: &PriorKnowledge, info: &InequalityInfoSet) -> Result<PriorKnowledge> {
    let m_theta = prior.set.con_dims().1;
    if 2 * info.horizon() > m_theta {
        refine_prior_stacked(prior, info)
    } else {
        log::warn!(
            "stacked refinement needs 2*T_s > m_theta (got {} <= {m_theta}); \
             falling back to sequential intersections",
            2 * info.horizon()
        );
        refine_prior_sequential(prior, info)
    }
}

/// Refine the prior on source data, then build the closed-loop family on
/// target data with the refined prior. Source and target batches may come
/// from different tasks (transfer learning) or from an online stream
/// feeding offline data (adaptation).
pub fn unified_pipeline(
    prior: &PriorKnowledge,
    source_batch: &DataBatch,
    target_batch: &DataBatch,
    dc_source: &DisturbanceConcat,
    dc_target: &DisturbanceConcat,
) -> Result<ClosedLoopFamily> {
    let info = build_info_set(source_batch, dc_source)?;
    let refined = refine_prior(prior, &info)?;
    build_family(target_batch, dc_target, &refined)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::closed_loop::tests::collect;
    use crate::closed_loop::vk_from_gain;
    use crate::data::{
        build_batch, simulate, t_concat_disturbance, BatchTag, InputPolicy, LinearSystem,
    };
    use crate::sets::{ConstrainedMatrixZonotope, Zonotope};
    use ndarray::{array, Array1};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Source-task plant: same dynamics, different disturbance set.
    pub(crate) fn source_system() -> LinearSystem {
        LinearSystem::new(
            array![[0.8, 0.5], [-0.4, 1.2]],
            array![[0.0], [1.0]],
            Zonotope::new(array![[0.03, -0.01], [-0.04, 0.05]], array![1.0, -1.0]).unwrap(),
        )
        .unwrap()
    }

    pub(crate) fn source_batch(t_s: usize, seed: u64) -> (DataBatch, DisturbanceConcat) {
        let sys = source_system();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traj = simulate(
            &sys,
            &array![0.0, 0.0],
            &InputPolicy::Feedback {
                gain: array![[0.4, -1.2]],
                excitation: 1.0,
            },
            t_s,
            &mut rng,
        )
        .unwrap();
        let batch = build_batch(&traj, BatchTag::SourceTask).unwrap();
        let dc = t_concat_disturbance(&sys.disturbance, t_s).unwrap();
        (batch, dc)
    }

    fn truth() -> Array2<f64> {
        array![[0.8, 0.5, 0.0], [-0.4, 1.2, 1.0]]
    }

    #[test]
    fn truth_satisfies_the_information_set() {
        let (batch, dc) = source_batch(12, 1);
        let info = build_info_set(&batch, &dc).unwrap();
        assert!(info.satisfies(&truth(), 1e-9));
        // Bounds bracket a nonnegative band: F_up + F_low = 2 dG_w >= 0.
        let band = &info.f_upper + &info.f_lower_rhs;
        assert!(band.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn zero_disturbance_collapses_to_exact_equations() {
        let sys = LinearSystem::new(
            array![[0.8, 0.5], [-0.4, 1.2]],
            array![[0.0], [1.0]],
            Zonotope::singleton(array![0.0, 0.0]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let traj = simulate(
            &sys,
            &array![1.0, -1.0],
            &InputPolicy::Feedback {
                gain: array![[0.4, -1.2]],
                excitation: 1.0,
            },
            6,
            &mut rng,
        )
        .unwrap();
        let batch = build_batch(&traj, BatchTag::SourceTask).unwrap();
        let dc = t_concat_disturbance(&sys.disturbance, 6).unwrap();
        let info = build_info_set(&batch, &dc).unwrap();
        // The band collapses: the set is exactly {Theta : Theta D = X1}.
        assert!(info.satisfies(&truth(), 1e-9));
        let mut off = truth();
        off[[0, 0]] += 1e-3;
        assert!(!info.satisfies(&off, 1e-9));
    }

    #[test]
    fn single_sample_updates_are_valid() {
        let (batch, dc) = source_batch(1, 3);
        let info = build_info_set(&batch, &dc).unwrap();
        assert_eq!(info.horizon(), 1);
        assert_eq!(info.d.dim(), (3, 1));
        assert!(info.satisfies(&truth(), 1e-9));
    }

    #[test]
    fn refinement_keeps_the_truth() {
        let prior = PriorKnowledge::entry_box(Array2::zeros((2, 3)), 5.0);
        let (batch, dc) = source_batch(10, 4);
        let info = build_info_set(&batch, &dc).unwrap();
        let refined = refine_prior(&prior, &info).unwrap();
        assert!(refined.contains(&truth(), 1e-6).unwrap());
    }

    #[test]
    fn vacuous_information_changes_nothing() {
        let prior = PriorKnowledge::entry_box(Array2::zeros((2, 3)), 2.0);
        let (batch, dc) = source_batch(5, 5);
        let mut info = build_info_set(&batch, &dc).unwrap();
        info.f_upper.mapv_inplace(|_| 1e6);
        info.f_lower_rhs.mapv_inplace(|_| 1e6);
        let refined = refine_prior(&prior, &info).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for theta in prior.set.sample(&mut rng, 20).unwrap() {
            assert!(refined.contains(&theta, 1e-6).unwrap());
        }
    }

    #[test]
    fn refined_hull_shrinks_monotonically() {
        let prior = PriorKnowledge::entry_box(Array2::zeros((2, 3)), 5.0);
        let (batch, dc) = source_batch(10, 7);
        let info = build_info_set(&batch, &dc).unwrap();
        let refined = refine_prior(&prior, &info).unwrap();
        let before = prior.set.interval_hull_exact().unwrap();
        let after = refined.set.interval_hull_exact().unwrap();
        assert!(after.within(&before, 1e-7));

        // Appending more source columns keeps shrinking (or stalls), never
        // grows.
        let (batch2, dc2) = source_batch(20, 8);
        let info2 = build_info_set(&batch2, &dc2).unwrap();
        let twice = refine_prior(&refined, &info2).unwrap();
        let third = twice.set.interval_hull_exact().unwrap();
        assert!(third.within(&after, 1e-7));
    }

    #[test]
    fn stacked_and_sequential_paths_agree_on_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for round in 0..5 {
            let prior = PriorKnowledge::entry_box(
                Array2::from_shape_fn((2, 3), |_| rng.random_range(-0.5..0.5)),
                1.0,
            );
            let (batch, dc) = source_batch(4, 100 + round);
            let info = build_info_set(&batch, &dc).unwrap();
            let stacked = refine_prior_stacked(&prior, &info).unwrap();
            let sequential = refine_prior_sequential(&prior, &info).unwrap();
            let sample_stacked = match stacked.set.sample(&mut rng, 10) {
                Ok(s) => s,
                Err(_) => continue, // thin sets can defeat rejection sampling
            };
            for theta in sample_stacked {
                assert!(sequential.set.contains(&theta, 1e-6).unwrap());
            }
            if let Ok(samples) = sequential.set.sample(&mut rng, 10) {
                for theta in samples {
                    assert!(stacked.set.contains(&theta, 1e-6).unwrap());
                }
            }
        }
    }

    #[test]
    fn refinement_matches_direct_inequality_semantics() {
        // Members of the refined prior are exactly the prior members that
        // satisfy the information set, two-sided by sampling. Draw half
        // the candidates near the truth (likely consistent) and half from
        // the full prior box (likely not) to exercise both sides.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let prior = PriorKnowledge::entry_box(truth(), 0.3);
        let near = PriorKnowledge::entry_box(truth(), 0.01);
        let (batch, dc) = source_batch(3, 11);
        let info = build_info_set(&batch, &dc).unwrap();
        let refined = refine_prior(&prior, &info).unwrap();
        let mut kept = 0;
        let mut dropped = 0;
        let mut candidates = prior.set.sample(&mut rng, 60).unwrap();
        candidates.extend(near.set.sample(&mut rng, 60).unwrap());
        for theta in candidates {
            let inside = info.satisfies(&theta, 1e-9);
            let member = refined.contains(&theta, 1e-6).unwrap();
            assert_eq!(inside, member, "set membership disagrees with inequalities");
            if inside {
                kept += 1;
            } else {
                dropped += 1;
            }
        }
        assert!(kept > 0 && dropped > 0, "kept {kept}, dropped {dropped}");
    }

    #[test]
    fn slack_scalars_of_members_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let prior = PriorKnowledge::entry_box(truth(), 0.3);
        let (batch, dc) = source_batch(3, 13);
        let info = build_info_set(&batch, &dc).unwrap();
        let x = concatenate![Axis(1), info.d, -&info.d];
        let f = concatenate![Axis(1), info.f_upper, info.f_lower_rhs];
        let mut exercised = 0;
        for theta in prior.set.sample(&mut rng, 200).unwrap() {
            if !info.satisfies(&theta, 1e-12) {
                continue;
            }
            exercised += 1;
            let zeta = recover_box_latent(&prior.set, &theta);
            for row in 0..2 {
                for col in 0..f.ncols() {
                    let scalar = prior.set.inequality_slack_scalar(&x, &f, &zeta, row, col);
                    if scalar.is_finite() {
                        assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&scalar));
                    }
                }
            }
            if exercised >= 10 {
                break;
            }
        }
        assert!(exercised > 0);
    }

    /// For an entry box prior the latent coordinates are just the scaled
    /// entry deviations.
    fn recover_box_latent(set: &ConstrainedMatrixZonotope, theta: &Array2<f64>) -> Array1<f64> {
        let diff = theta - set.center();
        let mut zeta = Array1::zeros(set.num_generators());
        for (idx, g) in set.generators().iter().enumerate() {
            let mut val = 0.0;
            for ((r, c), v) in g.indexed_iter() {
                if *v != 0.0 {
                    val = diff[[r, c]] / v;
                }
            }
            zeta[idx] = val;
        }
        zeta
    }

    #[test]
    fn pipeline_shrinks_the_family() {
        let setup = collect(1.0, 10, 14);
        let prior = PriorKnowledge::entry_box(Array2::zeros((2, 3)), 5.0);
        let (sbatch, sdc) = source_batch(10, 15);

        let unrefined = build_family(&setup.batch, &setup.dc, &prior).unwrap();
        let refined_family =
            unified_pipeline(&prior, &sbatch, &setup.batch, &sdc, &setup.dc).unwrap();

        let gain = vk_from_gain(&setup.batch, &array![[0.1, -0.4]]).unwrap();
        let m_unref = unrefined.instantiate(&gain).unwrap();
        let m_ref = refined_family.instantiate(&gain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for x in m_ref.sample(&mut rng, 10).unwrap() {
            assert!(m_unref.contains(&x, 1e-6).unwrap());
        }
        // The true closed loop stays a member after refinement.
        let a_k = setup.sys.closed_loop(&gain.k);
        assert!(m_ref.contains(&a_k, 1e-6).unwrap());
    }

    #[test]
    fn singleton_prior_collapses_the_family() {
        let setup = collect(1.0, 8, 17);
        let prior = PriorKnowledge::singleton(truth());
        let (sbatch, sdc) = source_batch(5, 18);
        let family = unified_pipeline(&prior, &sbatch, &setup.batch, &sdc, &setup.dc).unwrap();
        let gain = vk_from_gain(&setup.batch, &array![[0.25, -0.9]]).unwrap();
        let m_cl = family.instantiate(&gain).unwrap();
        let a_k = setup.sys.closed_loop(&gain.k);
        assert!(m_cl.contains(&a_k, 1e-6).unwrap());
        let hull = m_cl.interval_hull_exact().unwrap();
        assert!(crate::linalg::max_abs(&hull.width()) < 1e-7);
    }

    #[test]
    fn online_updates_never_exclude_the_truth() {
        let mut prior = PriorKnowledge::entry_box(Array2::zeros((2, 3)), 5.0);
        for step in 0..10 {
            let (batch, dc) = source_batch(1, 200 + step);
            let info = build_info_set(&batch, &dc).unwrap();
            prior = refine_prior(&prior, &info).unwrap();
            assert!(prior.contains(&truth(), 1e-6).unwrap(), "step {step}");
        }
    }
}
