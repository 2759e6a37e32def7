use lassomix::model::{cluster_stats, label_conditional, log_labels_joint, log_target};
use lassomix::{ClusterParams, Dataset, Hyperparameters, LatentState};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_state(seed: u64, n: usize, p: usize, k: usize) -> (Dataset, Hyperparameters, LatentState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hyper = Hyperparameters { k, ..Hyperparameters::default() };
    let x = DMatrix::from_fn(n, p, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let y = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset::new(y, x).unwrap();
    let params = ClusterParams::sample_prior(n, p, &hyper, &mut rng).unwrap();
    let z = (0..n).map(|_| rng.random_range(0..k)).collect();
    (data, hyper, LatentState { z, params })
}

fn permutation(seed: u64, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    perm
}

fn truncated(data: &Dataset, rows: usize) -> Dataset {
    Dataset::new(data.y()[..rows].to_vec(), data.x().rows(0, rows).into_owned()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn target_ignores_label_names(seed in any::<u64>(), n in 2usize..12, p in 1usize..5, k in 1usize..5) {
        let (data, hyper, state) = random_state(seed, n, p, k);
        let perm = permutation(seed ^ 0xabc, k);
        let a = log_target(&state, &data, &hyper).unwrap();
        let b = log_target(&state.permuted(&perm), &data, &hyper).unwrap();
        prop_assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn label_conditional_is_a_distribution(seed in any::<u64>(), n in 2usize..10, p in 1usize..4, k in 1usize..5) {
        let (data, hyper, state) = random_state(seed, n, p, k);
        let i = (seed % n as u64) as usize;
        let probs = label_conditional(i, &state.z[..i], &state.params, &data, &hyper).unwrap();
        prop_assert_eq!(probs.len(), k);
        prop_assert!(probs.iter().all(|&q| (0.0..=1.0).contains(&q)));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // Ratios agree with the joint over the first i + 1 observations.
        let prefix = truncated(&data, i + 1);
        let mut params = state.params.clone();
        params.s = params.s.rows(0, i + 1).into_owned();
        let joint = |label: usize| {
            let mut z = state.z[..i].to_vec();
            z.push(label);
            log_labels_joint(&z, &params, &prefix, &hyper).unwrap()
        };
        for a in 0..k {
            for b in 0..k {
                let lhs = probs[a].ln() - probs[b].ln();
                let rhs = joint(a) - joint(b);
                prop_assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn posterior_shape_and_covariance_shrink(seed in any::<u64>(), n in 0usize..8, q in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyper = Hyperparameters::default();
        let x = DMatrix::from_fn(n, q, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let tau2: Vec<f64> = (1..q).map(|_| rng.random_range(0.05..5.0)).collect();
        let stats = cluster_stats(&y, &x, &s, &tau2, &hyper).unwrap();
        prop_assert_eq!(stats.a_star - hyper.a, n as f64 / 2.0);

        let v = DMatrix::from_fn(q, q, |i, j| if i != j { 0.0 } else if i == 0 { 1.0 } else { tau2[i - 1] });
        let gap = SymmetricEigen::new(v - &stats.v_star);
        let floor = -1e-10 * stats.v_star.amax().max(1.0);
        prop_assert!(gap.eigenvalues.iter().all(|&e| e >= floor), "{:?}", gap.eigenvalues);
    }
}
