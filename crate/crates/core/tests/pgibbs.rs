use lassomix::pgibbs::{run_chain, update_s, ChainConfig};
use lassomix::{ClusterParams, Dataset, Hyperparameters, LatentState};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Gamma};

fn dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, c| if c == 0 { 1.0 } else { rng.sample(StandardNormal) });
    let y = (0..n).map(|i| i as f64 % 2.0 * 4.0 + rng.sample::<f64, _>(StandardNormal)).collect();
    Dataset::new(y, x).unwrap()
}

fn ks_statistic(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn unassigned_scales_follow_their_prior() {
    let data = dataset(1, 5, 2);
    let hyper = Hyperparameters { k: 2, ..Hyperparameters::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ClusterParams::sample_prior(5, 2, &hyper, &mut rng).unwrap();
    let mut state = LatentState { z: vec![0; 5], params };
    let mut draws = Vec::with_capacity(10_000);
    while draws.len() < 10_000 {
        update_s(&mut state, &data, &hyper, &mut rng).unwrap();
        draws.push(state.params.s[(draws.len() % 5, 1)]);
    }
    let prior = Gamma::new(hyper.s_shape(), hyper.s_shape()).unwrap();
    let d = ks_statistic(draws, |x| prior.cdf(x));
    assert!(d < 1.6276 / 100.0, "KS distance {d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn chains_are_reproducible(seed in any::<u64>(), k in 1usize..4) {
        let data = dataset(seed, 12, 3);
        let hyper = Hyperparameters { k, particles: 16, ..Hyperparameters::default() };
        let config = ChainConfig { iterations: 30, burn_in: 5, thinning: 2, seed };
        let a = run_chain(&data, &hyper, &config).unwrap();
        let b = run_chain(&data, &hyper, &config).unwrap();
        prop_assert_eq!(a.counters, b.counters);
        prop_assert_eq!(&a.samples, &b.samples);
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert!(a.counters.s_accepted <= a.counters.s_proposed);
        prop_assert!(a.counters.tau_accepted <= a.counters.tau_proposed);
        prop_assert_eq!(a.counters.gamma_proposed, 30 * k as u64 * 2);
    }
}
