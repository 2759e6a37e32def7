use lassomix::model::{cluster_stats, log_labels_joint, log_xi};
use lassomix::pgibbs::update_gamma;
use lassomix::{ClusterParams, Dataset, Hyperparameters, LatentState};
use lassomix_acceptance::enumerate::{self, all_labelings, all_patterns};
use lassomix_acceptance::stats::batch_means;
use lassomix_acceptance::xi::{log_xi_quadrature, log_xi_student, ClusterData};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

fn random_cluster(rng: &mut ChaCha8Rng, n: usize, q: usize) -> ClusterData {
    let x = DMatrix::from_fn(n, q, |_, c| if c == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
    let s_prior = Gamma::new(2.0, 0.5).unwrap();
    let tau_prior = Exp::new(0.5).unwrap();
    ClusterData {
        y: (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
        x,
        s: (0..n).map(|_| s_prior.sample(rng)).collect(),
        prior_var: (0..q).map(|c| if c == 0 { 1.0 } else { tau_prior.sample(rng) }).collect(),
    }
}

#[test]
fn student_form_matches_direct_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, q) in [(1, 1), (2, 2), (3, 3), (4, 4), (4, 2)] {
        let c = random_cluster(&mut rng, n, q);
        let closed = log_xi_student(&c, 2.0, 4.0);
        let (quad, err) = log_xi_quadrature(&c, 2.0, 4.0, 4, 240);
        assert!(err < 1e-8, "n {n} q {q}: error estimate {err}");
        assert!((closed - quad).abs() < 1e-8, "n {n} q {q}: {closed} vs {quad}");
    }
}

#[test]
fn student_form_matches_the_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let hyper = Hyperparameters::default();
    for _ in 0..20 {
        let n = rng.random_range(1..=6);
        let q = rng.random_range(1..=4);
        let c = random_cluster(&mut rng, n, q);
        let stats = cluster_stats(&c.y, &c.x, &c.s, &c.prior_var[1..], &hyper).unwrap();
        let lib = log_xi(&stats, &hyper).unwrap();
        let oracle = log_xi_student(&c, hyper.a, hyper.b);
        assert!((lib - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "{lib} vs {oracle}");
    }
}

fn small_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, c| if c == 0 { 1.0 } else { rng.sample::<f64, _>(StandardNormal) });
    let y = (0..n)
        .map(|i| if i % 2 == 0 { 2.0 } else { -2.0 } + x[(i, p - 1)] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Dataset::new(y, x).unwrap()
}

#[test]
fn labelled_joint_matches_the_library() {
    let data = small_dataset(4, 3, 3);
    let hyper = Hyperparameters { k: 2, ..Hyperparameters::default() };
    let params = ClusterParams::sample_prior(4, 3, &hyper, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    for z in all_labelings(4, 2) {
        let lib = log_labels_joint(&z, &params, &data, &hyper).unwrap();
        let oracle = enumerate::log_joint_labels(&z, &data, &params, &hyper);
        assert!((lib - oracle).abs() < 1e-10, "{z:?}: {lib} vs {oracle}");
    }
}

#[test]
fn enumerated_posterior_is_converged_in_the_node_count() {
    let data = small_dataset(3, 2, 5);
    let hyper = Hyperparameters { k: 2, ..Hyperparameters::default() };
    let coarse = enumerate::labeling_posterior(&data, &hyper, 12, 12);
    let fine = enumerate::labeling_posterior(&data, &hyper, 20, 20);
    for ((z, a), (_, b)) in coarse.iter().zip(&fine) {
        assert!((a - b).abs() < 1e-4, "{z:?}: {a} vs {b}");
    }
    let total: f64 = fine.iter().map(|e| e.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

/// With the labels and `s` held fixed, repeated inclusion sweeps must visit
/// each of the eight models of a four-column design in proportion to its
/// prior mass times the slab-averaged marginal likelihood.
#[test]
fn inclusion_sweeps_target_the_slab_averaged_posterior() {
    let data = small_dataset(3, 4, 6);
    let hyper = Hyperparameters { k: 1, ..Hyperparameters::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ClusterParams::sample_prior(3, 4, &hyper, &mut rng).unwrap();
    let s: Vec<f64> = params.s.column(0).iter().copied().collect();
    let exact = enumerate::pattern_posterior(&data, &[0, 1, 2], &s, &hyper, 40);
    let mut state = LatentState { z: vec![0; 3], params };
    let models = all_patterns(4);
    let sweeps = 200_000;
    let mut hits = vec![Vec::with_capacity(sweeps); models.len()];
    for _ in 0..sweeps {
        update_gamma(&mut state, &data, &hyper, &mut rng).unwrap();
        for (m, g) in models.iter().enumerate() {
            hits[m].push(f64::from(u8::from(state.params.gamma[0] == *g)));
        }
    }
    for (m, (g, prob)) in exact.iter().enumerate() {
        let (freq, se) = batch_means(&hits[m], 100);
        assert!((freq - prob).abs() < 3.0 * se, "{g:?}: {freq} vs {prob} (se {se})");
    }
}
