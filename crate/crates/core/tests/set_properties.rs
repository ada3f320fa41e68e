//! Property tests: serialization round-trips are bit-faithful for finite
//! doubles, and the core set-algebra invariants hold on arbitrary inputs.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use zonosafe_core::sets::{
    ConstrainedMatrixZonotope, ConstrainedZonotope, MatrixInterval, MatrixZonotope, Polytope,
    Zonotope,
};

fn finite_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e12f64..1e12,
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
        Just(1.0 / 3.0),
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(finite_f64(), rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn vector(len: usize) -> impl Strategy<Value = Array1<f64>> {
    proptest::collection::vec(finite_f64(), len).prop_map(Array1::from_vec)
}

fn bits2(m: &Array2<f64>) -> Vec<u64> {
    m.iter().map(|v| v.to_bits()).collect()
}

fn bits1(v: &Array1<f64>) -> Vec<u64> {
    v.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zonotope_roundtrip(g in matrix(3, 4), c in vector(3)) {
        let z = Zonotope::new(g, c).unwrap();
        let text = serde_json::to_string(&z).unwrap();
        let back: Zonotope = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(bits2(z.generators()), bits2(back.generators()));
        prop_assert_eq!(bits1(z.center()), bits1(back.center()));
    }

    #[test]
    fn constrained_zonotope_roundtrip(
        g in matrix(2, 3),
        c in vector(2),
        a in matrix(2, 3),
        b in vector(2),
    ) {
        let z = ConstrainedZonotope::new(g, c, a, b).unwrap();
        let text = serde_json::to_string(&z).unwrap();
        let back: ConstrainedZonotope = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(bits2(z.generators()), bits2(back.generators()));
        prop_assert_eq!(bits1(z.center()), bits1(back.center()));
        prop_assert_eq!(bits2(z.con_a()), bits2(back.con_a()));
        prop_assert_eq!(bits1(z.con_b()), bits1(back.con_b()));
    }

    #[test]
    fn matrix_sets_roundtrip(
        c in matrix(2, 3),
        g1 in matrix(2, 3),
        g2 in matrix(2, 3),
        a1 in matrix(1, 2),
        a2 in matrix(1, 2),
        b in matrix(1, 2),
    ) {
        let mz = MatrixZonotope::new(c.clone(), vec![g1.clone(), g2.clone()]).unwrap();
        let back: MatrixZonotope =
            serde_json::from_str(&serde_json::to_string(&mz).unwrap()).unwrap();
        prop_assert_eq!(bits2(mz.center()), bits2(back.center()));
        for (x, y) in mz.generators().iter().zip(back.generators()) {
            prop_assert_eq!(bits2(x), bits2(y));
        }

        let k = ConstrainedMatrixZonotope::new(c, vec![g1, g2], vec![a1, a2], b).unwrap();
        let back: ConstrainedMatrixZonotope =
            serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        prop_assert_eq!(bits2(k.con_b()), bits2(back.con_b()));
        for (x, y) in k.con_a().iter().zip(back.con_a()) {
            prop_assert_eq!(bits2(x), bits2(y));
        }
    }

    #[test]
    fn polytope_and_interval_roundtrip(h in matrix(4, 2), b in vector(4)) {
        let p = Polytope::new(h.clone(), b).unwrap();
        let back: Polytope = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(bits2(p.h_mat()), bits2(back.h_mat()));
        prop_assert_eq!(bits1(p.h_vec()), bits1(back.h_vec()));

        let lo = h.mapv(|v| -v.abs());
        let hi = h.mapv(f64::abs);
        let iv = MatrixInterval::new(lo, hi).unwrap();
        let back: MatrixInterval =
            serde_json::from_str(&serde_json::to_string(&iv).unwrap()).unwrap();
        prop_assert_eq!(bits2(iv.lower()), bits2(back.lower()));
        prop_assert_eq!(bits2(iv.upper()), bits2(back.upper()));
    }

    /// Minkowski-sum soundness on arbitrary unconstrained operands: latent
    /// pairs always produce members of the sum.
    #[test]
    fn minkowski_latent_soundness(
        ga in matrix(2, 3),
        gb in matrix(2, 2),
        ca in vector(2),
        cb in vector(2),
        za in proptest::collection::vec(-1.0f64..1.0, 3),
        zb in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        let a = ConstrainedZonotope::unconstrained(ga, ca);
        let b = ConstrainedZonotope::unconstrained(gb, cb);
        let sum = a.minkowski_sum(&b).unwrap();
        let xa = a.point_for(&Array1::from_vec(za.clone()));
        let xb = b.point_for(&Array1::from_vec(zb.clone()));
        // The stacked latent reproduces the summed point exactly.
        let mut stacked = za;
        stacked.extend(zb);
        let joint = sum.point_for(&Array1::from_vec(stacked));
        for (lhs, rhs) in (xa + xb).iter().zip(joint.iter()) {
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }

    /// Interval hulls contain every latent evaluation.
    #[test]
    fn hull_contains_latent_points(
        c in matrix(2, 2),
        g1 in matrix(2, 2),
        g2 in matrix(2, 2),
        z in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        let mz = MatrixZonotope::new(c, vec![g1, g2]).unwrap();
        let hull = mz.interval_hull();
        let x = mz.point_for(&Array1::from_vec(z));
        prop_assert!(hull.contains(&x, 1e-9 * (1.0 + zonosafe_core::linalg::max_abs(&x))));
    }
}
