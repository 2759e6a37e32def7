//! Brute-force posteriors over labels and inclusion patterns.

use lassomix::{ClusterParams, Dataset, Hyperparameters};
use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::log_sum_exp;
use crate::quadrature::{gamma_expectation, Rule};
use crate::xi::{log_xi_student, ClusterData};

/// Every label vector of length `n` over `k` labels, first index slowest.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|z| {
                (0..k).map(move |l| {
                    let mut next = z.clone();
                    next.push(l);
                    next
                })
            })
            .collect();
    }
    out
}

/// Normalised Dirichlet-multinomial probability of a label vector.
pub fn log_label_prior(z: &[usize], k: usize, delta: f64) -> f64 {
    let mut counts = vec![0usize; k];
    for &l in z {
        counts[l] += 1;
    }
    ln_gamma(k as f64 * delta) - ln_gamma(k as f64 * delta + z.len() as f64)
        + counts.iter().map(|&c| ln_gamma(delta + c as f64) - ln_gamma(delta)).sum::<f64>()
}

/// Rows `members` of the data restricted to `cols`, with the given scales.
pub fn cluster_data(data: &Dataset, members: &[usize], cols: &[usize], s: &[f64], prior_var: &[f64]) -> ClusterData {
    ClusterData {
        y: members.iter().map(|&i| data.y()[i]).collect(),
        x: DMatrix::from_fn(members.len(), cols.len(), |r, c| data.x()[(members[r], cols[c])]),
        s: s.to_vec(),
        prior_var: prior_var.to_vec(),
    }
}

fn included(gamma: &[bool]) -> Vec<usize> {
    (0..gamma.len()).filter(|&d| d == 0 || gamma[d]).collect()
}

/// `ln p(y, z | s, gamma, tau2)` from the multivariate-t form.
pub fn log_joint_labels(z: &[usize], data: &Dataset, params: &ClusterParams, hyper: &Hyperparameters) -> f64 {
    let mut total = log_label_prior(z, hyper.k, hyper.delta);
    for k in 0..hyper.k {
        let members: Vec<usize> = (0..z.len()).filter(|&i| z[i] == k).collect();
        let cols = included(&params.gamma[k]);
        let prior_var: Vec<f64> = cols.iter().map(|&d| if d == 0 { 1.0 } else { params.tau2[(k, d)] }).collect();
        let s: Vec<f64> = members.iter().map(|&i| params.s[(i, k)]).collect();
        total += log_xi_student(&cluster_data(data, &members, &cols, &s, &prior_var), hyper.a, hyper.b);
    }
    total
}

/// `ln p(y | s, gamma, tau2)` by summing over all `K^n` label vectors.
pub fn log_evidence(data: &Dataset, params: &ClusterParams, hyper: &Hyperparameters) -> f64 {
    let terms: Vec<f64> = all_labelings(data.n(), hyper.k)
        .iter()
        .map(|z| log_joint_labels(z, data, params, hyper))
        .collect();
    log_sum_exp(&terms)
}

/// Visits every point of a tensor grid of `dims` copies of `rule`, passing
/// the nodes and the log of the product weight.
fn tensor(rules: &[&Rule], mut visit: impl FnMut(&[f64], f64)) {
    let dims = rules.len();
    let mut idx = vec![0usize; dims];
    let mut nodes = vec![0.0; dims];
    loop {
        let mut log_w = 0.0;
        for d in 0..dims {
            nodes[d] = rules[d].nodes[idx[d]];
            log_w += rules[d].weights[idx[d]].ln();
        }
        visit(&nodes, log_w);
        let mut d = 0;
        while d < dims {
            idx[d] += 1;
            if idx[d] < rules[d].nodes.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims {
            return;
        }
    }
}

/// All `2^(p-1)` inclusion patterns with the intercept switched on.
pub fn all_patterns(p: usize) -> Vec<Vec<bool>> {
    (0..1usize << (p - 1))
        .map(|mask| (0..p).map(|d| d == 0 || mask >> (d - 1) & 1 == 1).collect())
        .collect()
}

/// `ln E[xi]` over the slab variances of the included columns, with `s`
/// fixed, for one inclusion pattern.
pub fn log_mean_xi_over_tau(
    data: &Dataset,
    members: &[usize],
    s: &[f64],
    pattern: &[bool],
    hyper: &Hyperparameters,
    tau_nodes: usize,
) -> f64 {
    let cols = included(pattern);
    let tau_rule = gamma_expectation(tau_nodes, 1.0, hyper.tau_rate());
    let rules: Vec<&Rule> = vec![&tau_rule; cols.len() - 1];
    let mut terms = Vec::new();
    tensor(&rules, |tau, log_w| {
        let prior_var: Vec<f64> = std::iter::once(1.0).chain(tau.iter().copied()).collect();
        terms.push(log_w + log_xi_student(&cluster_data(data, members, &cols, s, &prior_var), hyper.a, hyper.b));
    });
    log_sum_exp(&terms)
}

/// Posterior over inclusion patterns of one cluster with `s` fixed and the
/// slab variances integrated against their prior.
pub fn pattern_posterior(data: &Dataset, members: &[usize], s: &[f64], hyper: &Hyperparameters, tau_nodes: usize) -> Vec<(Vec<bool>, f64)> {
    let patterns = all_patterns(data.p());
    let logs: Vec<f64> = patterns
        .iter()
        .map(|g| {
            let on = g.iter().skip(1).filter(|&&b| b).count() as f64;
            let off = (data.p() - 1) as f64 - on;
            on * hyper.phi.ln() + off * (1.0 - hyper.phi).ln()
                + log_mean_xi_over_tau(data, members, s, g, hyper, tau_nodes)
        })
        .collect();
    let norm = log_sum_exp(&logs);
    patterns.into_iter().zip(logs).map(|(g, l)| (g, (l - norm).exp())).collect()
}

/// `ln` of the cluster factor with `s`, the slab variances and the
/// inclusion pattern all integrated against their priors.
pub fn log_cluster_factor(data: &Dataset, members: &[usize], hyper: &Hyperparameters, s_nodes: usize, tau_nodes: usize) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let s_rule = gamma_expectation(s_nodes, hyper.s_shape(), hyper.s_shape());
    let rules: Vec<&Rule> = vec![&s_rule; members.len()];
    let mut terms = Vec::new();
    for g in all_patterns(data.p()) {
        let on = g.iter().skip(1).filter(|&&b| b).count() as f64;
        let off = (data.p() - 1) as f64 - on;
        let log_prior = on * hyper.phi.ln() + off * (1.0 - hyper.phi).ln();
        tensor(&rules, |s, log_w| {
            terms.push(log_prior + log_w + log_mean_xi_over_tau(data, members, s, &g, hyper, tau_nodes));
        });
    }
    log_sum_exp(&terms)
}

/// Posterior probability of every label vector, in [`all_labelings`] order,
/// with `s`, the slab variances and the inclusion patterns integrated out.
pub fn labeling_posterior(data: &Dataset, hyper: &Hyperparameters, s_nodes: usize, tau_nodes: usize) -> Vec<(Vec<usize>, f64)> {
    let n = data.n();
    // Cluster factors depend only on the member set.
    let factor: Vec<f64> = (0..1usize << n)
        .map(|mask| {
            let members: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            log_cluster_factor(data, &members, hyper, s_nodes, tau_nodes)
        })
        .collect();
    let labelings = all_labelings(n, hyper.k);
    let logs: Vec<f64> = labelings
        .iter()
        .map(|z| {
            let mut lp = log_label_prior(z, hyper.k, hyper.delta);
            for k in 0..hyper.k {
                let mask = (0..n).filter(|&i| z[i] == k).fold(0usize, |m, i| m | 1 << i);
                lp += factor[mask];
            }
            lp
        })
        .collect();
    let norm = log_sum_exp(&logs);
    labelings.into_iter().zip(logs).map(|(z, l)| (z, (l - norm).exp())).collect()
}
