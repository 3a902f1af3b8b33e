use proptest::prelude::*;
use rand::SeedableRng;

use grasscode::analysis::{alpha, expectation_eij_closed, joint_distance_terms, kappa, lambda_star, pep_pair_proposed, NoiseModel};
use grasscode::baselines::haar_random_point;
use grasscode::designer::smoothed_objective;
use grasscode::grassmann::{chordal_distance, chordal_distance_projector, chordal_product_distance, principal_angles};
use grasscode::io::{to_sparse_store, SPARSITY_THRESHOLD};
use grasscode::rng::SimRng;
use grasscode::schubert::{count_patterns, enumerate_patterns, materialize, ParamSet};
use grasscode::simulator::{DenseDetector, SparseDetector};
use grasscode::{Constellation, C64};

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=7).prop_flat_map(|t| (Just(t), 1..t.min(4)))
}

fn tms() -> impl Strategy<Value = (usize, usize, usize)> {
    shape().prop_flat_map(|(t, m)| (Just(t), Just(m), m..=t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distances_are_bounded_and_symmetric((t, m) in shape(), seed in any::<u64>()) {
        let mut rng = SimRng::seed_from_u64(seed);
        let a = haar_random_point(t, m, &mut rng).unwrap();
        let b = haar_random_point(t, m, &mut rng).unwrap();
        let dc = chordal_distance(&a, &b).unwrap();
        prop_assert!((0.0..=(m as f64).sqrt() + 1e-12).contains(&dc));
        prop_assert!((dc - chordal_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((dc - chordal_distance_projector(&a, &b).unwrap()).abs() < 1e-9);
        let dcp = chordal_product_distance(&a, &b).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&dcp));
        let angles = principal_angles(&a, &b).unwrap();
        prop_assert!(angles.angles.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        prop_assert!(chordal_distance(&a, &a).unwrap() < 1e-7);
    }

    #[test]
    fn distances_ignore_right_unitary((t, m) in shape(), seed in any::<u64>()) {
        let mut rng = SimRng::seed_from_u64(seed);
        let a = haar_random_point(t, m, &mut rng).unwrap();
        let b = haar_random_point(t, m, &mut rng).unwrap();
        let u = grasscode::rng::complex_normal_matrix(&mut rng, m, m, 1.0).qr().q();
        let au = a.right_multiply(&u).unwrap();
        prop_assert!((chordal_distance(&a, &b).unwrap() - chordal_distance(&au, &b).unwrap()).abs() < 1e-9);
        prop_assert!((chordal_product_distance(&a, &b).unwrap() - chordal_product_distance(&au, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn enumeration_matches_count((t, m, s) in tms()) {
        let listed = enumerate_patterns(t, m, s).unwrap();
        prop_assert_eq!(listed.len() as u64, count_patterns(t, m, s).unwrap());
        for p in &listed {
            prop_assert_eq!(p.sparsity(), s);
            prop_assert_eq!(p.m_antennas(), m);
        }
    }

    #[test]
    fn materialized_codewords_are_orthonormal_and_sparse((t, m, s) in tms(), pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let patterns = enumerate_patterns(t, m, s).unwrap();
        let p = &patterns[pick.index(patterns.len())];
        let mut rng = SimRng::seed_from_u64(seed);
        let x = materialize(p, &ParamSet::random(p, &mut rng)).unwrap();
        let e = x.entries();
        let gram = e.adjoint() * e;
        for i in 0..m {
            for j in 0..m {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[(i, j)] - C64::new(want, 0.0)).norm() < 1e-10);
            }
        }
        for r in 0..t {
            let nonzero = (0..m).filter(|&c| e[(r, c)].norm() > SPARSITY_THRESHOLD).count();
            prop_assert!(nonzero <= 1);
        }
    }

    #[test]
    fn param_roundtrip((t, m, s) in tms(), pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let patterns = enumerate_patterns(t, m, s).unwrap();
        let p = &patterns[pick.index(patterns.len())];
        let params = ParamSet::random(p, &mut SimRng::seed_from_u64(seed));
        let back = ParamSet::from_flat(p, &params.to_flat()).unwrap();
        prop_assert_eq!(params, back);
    }

    #[test]
    fn sparse_detector_agrees(seed in any::<u64>(), card in 2usize..10) {
        let mut rng = SimRng::seed_from_u64(seed);
        let patterns = grasscode::schubert::allocate_patterns(5, 2, 5, card).unwrap();
        let points = patterns.iter().map(|p| materialize(p, &ParamSet::random(p, &mut rng)).unwrap()).collect();
        let c = Constellation::new(points).unwrap();
        let store = to_sparse_store(&c).unwrap();
        let (dense, sparse) = (DenseDetector::new(&c), SparseDetector::new(&store));
        let y: Vec<C64> = grasscode::rng::complex_normal_matrix(&mut rng, 5, 2, 1.0).iter().copied().collect();
        let (mut md, mut ms) = (vec![0.0; card], vec![0.0; card]);
        dense.metrics(&y, 2, &mut md);
        sparse.metrics(&y, 2, &mut ms);
        for (a, b) in md.iter().zip(&ms) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        prop_assert_eq!(dense.detect(&y, 2), sparse.detect(&y, 2));
    }

    #[test]
    fn lambda_star_and_kappa(snr in -10.0f64..40.0, (t, m) in shape()) {
        let noise = NoiseModel::from_snr_db(snr).unwrap();
        let ls = lambda_star(&noise, t, m);
        prop_assert!(ls > 0.0 && ls <= 1.0);
        let k = kappa(ls, &noise, t, m).unwrap();
        prop_assert!(k > 0.0);
        // κ(λ★) is the maximum over λ ∈ (0, 1]
        for lambda in [0.05, 0.2, 0.5, 0.8, 1.0] {
            prop_assert!(kappa(lambda, &noise, t, m).unwrap() <= k + 1e-9 * k.abs().max(1.0));
        }
        prop_assert!(alpha(ls, &noise, t, m).unwrap() > 0.0);
    }

    #[test]
    fn expectation_bounds((t, m) in shape(), snr in 0.0f64..25.0, seed in any::<u64>()) {
        prop_assume!(t >= 2 * m);
        let mut rng = SimRng::seed_from_u64(seed);
        let a = haar_random_point(t, m, &mut rng).unwrap();
        let b = haar_random_point(t, m, &mut rng).unwrap();
        let noise = NoiseModel::from_snr_db(snr).unwrap();
        let e = expectation_eij_closed(&a, &b, &noise, 2, lambda_star(&noise, t, m)).unwrap();
        prop_assert!(e > 0.0 && e <= 1.0 + 1e-12);
        let pep = pep_pair_proposed(&a, &b, &noise, 2, 1e-9).unwrap();
        prop_assert!(pep.bound > 0.0 && pep.bound.is_finite());
        prop_assert!(pep.eigenvalues.iter().all(|&mu| mu > 0.0 && mu <= 1.0 + 1e-9));
    }

    #[test]
    fn joint_terms_expand_the_product(sines in prop::collection::vec(0.0f64..1.0, 1..5), k in 0.0f64..20.0) {
        let terms = joint_distance_terms(&sines, k);
        let product: f64 = sines.iter().map(|s| 1.0 + k * s).product();
        prop_assert_eq!(terms.len(), sines.len() + 1);
        prop_assert!((terms.iter().sum::<f64>() - product).abs() <= 1e-9 * product);
    }

    #[test]
    fn smoothed_min_is_below_min(values in prop::collection::vec(0.01f64..4.0, 1..20), eps in 1e-3f64..0.5) {
        let s = -eps * smoothed_objective(&values, eps);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(s <= min + 1e-12);
        prop_assert!(s >= min - eps * (values.len() as f64).ln() - 1e-12);
    }
}
