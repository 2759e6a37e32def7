use statrs::function::gamma::ln_gamma;

use super::{
    label_counts, ln_exp_density, ln_gamma_density, ClusterParams, CollapsedModel, Dataset,
    Hyperparameters, LatentState, Scratch,
};
use crate::error::{Error, Result};

/// `sum_k ln Gamma(delta + n_k) - ln Gamma(sum_k (n_k + delta))`, the label
/// term of the collapsed posterior (Dirichlet normaliser dropped).
pub fn log_label_prior(counts: &[usize], delta: f64) -> f64 {
    let total: f64 = counts.iter().map(|&c| c as f64 + delta).sum();
    counts.iter().map(|&c| ln_gamma(delta + c as f64)).sum::<f64>() - ln_gamma(total)
}

/// Log probability of a specific label sequence with the mixture weights
/// integrated out (Dirichlet-multinomial, normalised).
pub fn log_partition_prior(counts: &[usize], delta: f64) -> f64 {
    let k = counts.len() as f64;
    log_label_prior(counts, delta) + ln_gamma(k * delta) - k * ln_gamma(delta)
}

/// `ln p(y, z | s, gamma, tau2)`: the sum of `ln xi_k` plus the normalised
/// label prior. Summed over all label vectors this gives the marginal
/// likelihood that the particle filter estimates.
pub fn log_labels_joint(
    z: &[usize],
    params: &ClusterParams,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<f64> {
    let model = CollapsedModel::new(data, params, hyper)?;
    check_labels(z, data.n(), hyper.k)?;
    let mut scratch = Scratch::default();
    let mut total = log_partition_prior(&label_counts(z, hyper.k), hyper.delta);
    for k in 0..hyper.k {
        let acc = model.accumulate(k, members(z, k));
        total += model.log_xi(k, &acc, &mut scratch)?;
    }
    Ok(total)
}

/// Log of the unnormalised collapsed posterior of `(z, s, gamma, tau2)`.
///
/// Includes every `ln xi_k`, the `Gamma(d/2, d/2)` density of every `s[i, k]`,
/// the `Exp(lambda^2/2)` density of every included non-intercept `tau2`, the
/// Bernoulli(phi) inclusion prior and the Dirichlet-multinomial label term.
pub fn log_target(state: &LatentState, data: &Dataset, hyper: &Hyperparameters) -> Result<f64> {
    state.validate(data, hyper)?;
    let params = &state.params;
    let model = CollapsedModel::new(data, params, hyper)?;
    let mut scratch = Scratch::default();
    let shape = hyper.s_shape();
    let tau_rate = hyper.tau_rate();
    let (log_phi, log_not_phi) = (hyper.phi.ln(), (1.0 - hyper.phi).ln());

    let mut total = log_label_prior(&state.counts(hyper.k), hyper.delta);
    for k in 0..hyper.k {
        let acc = model.accumulate(k, members(&state.z, k));
        total += model.log_xi(k, &acc, &mut scratch)?;
        total += params.s.column(k).iter().map(|&s| ln_gamma_density(s, shape, shape)).sum::<f64>();
        for d in 1..data.p() {
            if params.gamma[k][d] {
                total += ln_exp_density(params.tau2[(k, d)], tau_rate) + log_phi;
            } else {
                total += log_not_phi;
            }
        }
    }
    Ok(total)
}

/// Full conditional of the label of observation `i` given the labels of
/// observations `0..i` on the same path.
///
/// Component `k` receives mass `xi_k(with i) / xi_k(without i) * (delta + n_k)`.
pub fn label_conditional(
    i: usize,
    z_prefix: &[usize],
    params: &ClusterParams,
    data: &Dataset,
    hyper: &Hyperparameters,
) -> Result<Vec<f64>> {
    if z_prefix.len() != i {
        return Err(Error::InvalidInput(format!(
            "observation {i} needs a prefix of length {i}, got {}",
            z_prefix.len()
        )));
    }
    if i >= data.n() {
        return Err(Error::InvalidInput(format!("observation {i} out of range")));
    }
    check_labels(z_prefix, data.n(), hyper.k)?;
    let model = CollapsedModel::new(data, params, hyper)?;
    let mut scratch = Scratch::default();
    let mut log_mass = Vec::with_capacity(hyper.k);
    for k in 0..hyper.k {
        let acc = model.accumulate(k, members(z_prefix, k));
        let gain = model.log_xi_with(k, &acc, i, &mut scratch)? - model.log_xi(k, &acc, &mut scratch)?;
        log_mass.push(gain + (hyper.delta + acc.count() as f64).ln());
    }
    normalise_log(&log_mass).ok_or_else(|| {
        Error::Degenerate(format!(
            "all label masses vanish at observation {} (prefix {:?})",
            i + 1,
            z_prefix
        ))
    })
}

/// Softmax of log masses; `None` when every mass underflows.
pub(crate) fn normalise_log(log_mass: &[f64]) -> Option<Vec<f64>> {
    let max = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let unnorm: Vec<f64> = log_mass.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = unnorm.iter().sum();
    Some(unnorm.into_iter().map(|w| w / total).collect())
}

fn members(z: &[usize], k: usize) -> impl Iterator<Item = usize> + '_ {
    z.iter().enumerate().filter_map(move |(i, &l)| (l == k).then_some(i))
}

fn check_labels(z: &[usize], n: usize, k: usize) -> Result<()> {
    if z.len() > n {
        return Err(Error::LengthMismatch { left: z.len(), right: n });
    }
    match z.iter().find(|&&l| l >= k) {
        Some(&bad) => Err(Error::InvalidInput(format!("label {} outside 1..={k}", bad + 1))),
        None => Ok(()),
    }
}
