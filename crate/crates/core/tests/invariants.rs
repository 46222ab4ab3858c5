use proptest::prelude::*;
use spce_core::basis::{total_degree_count, univariate_norm_sq, BasisSet, GermKind};
use spce_core::datasets::{split_train_test, Ensemble};
use spce_core::expansion::sobol_partition;
use spce_core::kle::{fit_kle, FieldEnsemble, Truncation};
use spce_core::synthetic::{bimodal_ensemble, midpoint_design};

fn germ() -> impl Strategy<Value = GermKind> {
    prop_oneof![Just(GermKind::Normal), Just(GermKind::Uniform)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_set_structure(kinds in prop::collection::vec(germ(), 1..5), order in 0usize..6) {
        let b = BasisSet::total_degree(kinds.clone(), order).unwrap();
        prop_assert_eq!(b.len(), total_degree_count(kinds.len(), order).unwrap());
        prop_assert!(b.indices()[0].is_zero());
        let mut seen = std::collections::HashSet::new();
        for (idx, &n) in b.indices().iter().zip(b.norms_sq()) {
            prop_assert_eq!(idx.dim(), kinds.len());
            prop_assert!(idx.total_degree() <= order);
            prop_assert!(seen.insert(idx.0.clone()));
            let want: f64 = idx.degrees().iter().zip(&kinds).map(|(&d, &k)| univariate_norm_sq(k, d)).product();
            prop_assert!((n - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn sobol_partition_sums_to_one(
        n_param in 1usize..4,
        n_stoch in 1usize..3,
        order in 1usize..4,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        let mut kinds = vec![GermKind::Uniform; n_param];
        kinds.extend(vec![GermKind::Normal; n_stoch]);
        let b = BasisSet::total_degree(kinds, order).unwrap();
        let c: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = sobol_partition(&b, &c, n_param).unwrap();
        prop_assert!((r.partition_sum() - 1.0).abs() < 1e-10);
        prop_assert!(r.main_effects.iter().all(|&s| (0.0..=1.0 + 1e-12).contains(&s)));
        prop_assert!(r.noise_group >= 0.0 && r.interaction_residual >= -1e-12);
    }

    #[test]
    fn full_rank_kle_reconstructs_fields(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 8..20)) {
        let grid: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let fe = FieldEnsemble::from_rows(&rows, grid).unwrap();
        let kle = fit_kle(&fe, Truncation::Modes(6)).unwrap();
        let trace: f64 = kle.eigenvalues.iter().sum();
        prop_assert!(kle.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((kle.explained_fraction - 1.0).abs() < 1e-9 || trace == 0.0);
        for row in &rows {
            let back = kle.reconstruct_one(&kle.project_one(row).unwrap()).unwrap();
            for (a, b) in row.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn split_partitions_parameter_points(n in 2usize..30, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let ens = bimodal_ensemble(&midpoint_design(n), 3, 1).unwrap();
        let Ok((train, test)) = split_train_test(&ens, fraction, seed) else {
            return Ok(());
        };
        prop_assert_eq!(train.n() + test.n(), n);
        let key = |e: &Ensemble, i: usize| e.lambdas[i][0].to_bits();
        let a: std::collections::HashSet<u64> = (0..train.n()).map(|i| key(&train, i)).collect();
        let b: std::collections::HashSet<u64> = (0..test.n()).map(|i| key(&test, i)).collect();
        prop_assert!(a.is_disjoint(&b));
        for i in 0..train.n() {
            let src = ens.lambdas.iter().position(|l| l[0].to_bits() == key(&train, i)).unwrap();
            prop_assert_eq!(train.replicas(i), ens.replicas(src));
        }
    }
}
