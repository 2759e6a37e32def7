//! Metropolis-within-Gibbs updates and the particle Gibbs driver.
//!
//! One sweep runs the conditional filter to refresh the labels, then updates
//! `s`, `gamma` and `tau2` in that order given the new labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{
    accumulate_rows, fill_row, ln_exp_density, ln_gamma_density, log_target, ClusterParams,
    Dataset, Hyperparameters, LatentState, Scratch,
};
use crate::smc::{csmc_run, sample_retained, smc_run, ParticleSystem, RetainedPath};

/// Iteration budget and output thinning of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            burn_in: 1000,
            thinning: 1,
            seed: 1,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidInput(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidInput("thinning must be positive".into()));
        }
        Ok(())
    }

    /// Number of stored samples.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thinning)
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.burn_in && (iteration - self.burn_in) % self.thinning == 0
    }
}

/// Proposal and acceptance counts of the three Metropolis updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AcceptanceCounters {
    pub tau_proposed: u64,
    pub tau_accepted: u64,
    pub s_proposed: u64,
    pub s_accepted: u64,
    pub gamma_proposed: u64,
    pub gamma_accepted: u64,
}

impl AcceptanceCounters {
    pub fn tau_rate(&self) -> Option<f64> {
        rate(self.tau_accepted, self.tau_proposed)
    }

    pub fn s_rate(&self) -> Option<f64> {
        rate(self.s_accepted, self.s_proposed)
    }

    pub fn gamma_rate(&self) -> Option<f64> {
        rate(self.gamma_accepted, self.gamma_proposed)
    }
}

impl std::ops::AddAssign for AcceptanceCounters {
    fn add_assign(&mut self, o: Self) {
        self.tau_proposed += o.tau_proposed;
        self.tau_accepted += o.tau_accepted;
        self.s_proposed += o.s_proposed;
        self.s_accepted += o.s_accepted;
        self.gamma_proposed += o.gamma_proposed;
        self.gamma_accepted += o.gamma_accepted;
    }
}

fn rate(accepted: u64, proposed: u64) -> Option<f64> {
    (proposed > 0).then(|| accepted as f64 / proposed as f64)
}

/// Per-iteration summary of the sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    /// 0-based iteration; iteration 0 is the unconditional initial pass.
    pub iteration: usize,
    pub log_target: f64,
    pub log_evidence: f64,
    /// Smallest and mean ESS/N over the observations of this sweep's filter.
    pub ess_min: f64,
    pub ess_mean: f64,
    /// Fraction of distinct lineages left after the last observation.
    pub unique_paths: f64,
    pub resample_count: usize,
    /// Cumulative acceptance counts up to and including this iteration.
    pub counters: AcceptanceCounters,
}

/// Output of [`run_chain`].
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorChain {
    /// Retained post-update states after burn-in and thinning.
    pub samples: Vec<LatentState>,
    /// Iteration index of each stored sample.
    pub sample_iterations: Vec<usize>,
    /// One record per iteration, burn-in included.
    pub trace: Vec<TraceRecord>,
    pub counters: AcceptanceCounters,
    /// Filter of the final sweep, for degeneracy plots.
    pub last_system: ParticleSystem,
}

fn metropolis<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> Result<bool> {
    if log_ratio.is_nan() {
        return Err(Error::Degenerate("acceptance log-ratio is NaN".into()));
    }
    Ok(log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio)
}

/// Evaluates a proposal; numerical failure on the proposed side counts as
/// zero target density so the move is rejected.
fn proposal_value(value: Result<f64>) -> Result<f64> {
    match value {
        Ok(v) => Ok(v),
        Err(e) if e.is_numerical() => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

fn members_of(z: &[usize], k: usize) -> Vec<usize> {
    z.iter().enumerate().filter_map(|(i, &l)| (l == k).then_some(i)).collect()
}

fn cluster_log_xi(
    data: &Dataset,
    params: &ClusterParams,
    k: usize,
    members: &[usize],
    hyper: &Hyperparameters,
    scratch: &mut Scratch,
) -> Result<f64> {
    let cols = params.included(k);
    let acc = accumulate_rows(data, &cols, |i| params.s[(i, k)], members);
    acc.evaluate(&params.prior_variances(k), hyper, scratch)
}

/// Joint multiplicative random-walk update of the included slab variances
/// of each component. Returns, per component, whether a proposal was made
/// and accepted (`None` for intercept-only components).
pub fn update_tau<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<Vec<Option<bool>>> {
    state.validate(data, hyper)?;
    let rate = hyper.tau_rate();
    let mut scratch = Scratch::default();
    let mut out = Vec::with_capacity(hyper.k);
    for k in 0..hyper.k {
        let cols = state.params.included(k);
        if cols.len() < 2 {
            out.push(None);
            continue;
        }
        let members = members_of(&state.z, k);
        let params = &state.params;
        let acc = accumulate_rows(data, &cols, |i| params.s[(i, k)], &members);
        let current = acc.evaluate(&params.prior_variances(k), hyper, &mut scratch)?;

        let mut proposed = params.prior_variances(k);
        let mut log_ratio = 0.0;
        for (v, &d) in proposed.iter_mut().zip(&cols).skip(1) {
            let old = params.tau2[(k, d)];
            let eps: f64 = rng.sample(StandardNormal);
            let new = old * (hyper.nu_tau * eps).exp();
            log_ratio += ln_exp_density(new, rate) + new.ln() - ln_exp_density(old, rate) - old.ln();
            *v = new;
        }
        let candidate = proposal_value(acc.evaluate(&proposed, hyper, &mut scratch))?;
        let accepted = metropolis(candidate - current + log_ratio, rng)?;
        if accepted {
            for (&v, &d) in proposed.iter().zip(&cols).skip(1) {
                state.params.tau2[(k, d)] = v;
            }
        }
        out.push(Some(accepted));
    }
    Ok(out)
}

/// Single-site updates of the variance scales. Pairs whose observation
/// belongs to the component get a multiplicative random-walk proposal; the
/// rest are redrawn from the prior.
pub fn update_s<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<AcceptanceCounters> {
    state.validate(data, hyper)?;
    let shape = hyper.s_shape();
    let prior = Gamma::new(shape, 1.0 / shape).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut scratch = Scratch::default();
    let mut counters = AcceptanceCounters::default();
    for k in 0..hyper.k {
        let cols = state.params.included(k);
        let prior_var = state.params.prior_variances(k);
        let members = members_of(&state.z, k);
        let s = &mut state.params.s;
        let mut acc = accumulate_rows(data, &cols, |i| s[(i, k)], &members);
        let mut current = acc.evaluate(&prior_var, hyper, &mut scratch)?;
        let mut row = vec![0.0; cols.len()];
        let mut next_member = members.iter().peekable();
        for i in 0..data.n() {
            if next_member.peek() != Some(&&i) {
                s[(i, k)] = prior.sample(rng);
                continue;
            }
            next_member.next();
            let old = s[(i, k)];
            let eps: f64 = rng.sample(StandardNormal);
            let new = old * (hyper.nu_s * eps).exp();
            fill_row(data, &cols, i, &mut row);
            let mut candidate_acc = acc.clone();
            candidate_acc.reweight(&row, data.y()[i], old, new);
            let candidate = proposal_value(candidate_acc.evaluate(&prior_var, hyper, &mut scratch))?;
            let log_ratio = candidate - current + ln_gamma_density(new, shape, shape) + new.ln()
                - ln_gamma_density(old, shape, shape)
                - old.ln();
            counters.s_proposed += 1;
            if metropolis(log_ratio, rng)? {
                counters.s_accepted += 1;
                s[(i, k)] = new;
                acc = candidate_acc;
                current = candidate;
            }
        }
    }
    Ok(counters)
}

/// Birth/death flips of every non-intercept inclusion indicator. A birth
/// draws its slab variance from the prior.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<AcceptanceCounters> {
    state.validate(data, hyper)?;
    let tau_prior = Exp::new(hyper.tau_rate()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let log_odds = hyper.phi.ln() - (1.0 - hyper.phi).ln();
    let mut scratch = Scratch::default();
    let mut counters = AcceptanceCounters::default();
    for k in 0..hyper.k {
        let members = members_of(&state.z, k);
        let mut current = cluster_log_xi(data, &state.params, k, &members, hyper, &mut scratch)?;
        for d in 1..data.p() {
            let mut proposal = state.params.clone();
            let birth = !proposal.gamma[k][d];
            proposal.gamma[k][d] = birth;
            if birth {
                proposal.tau2[(k, d)] = tau_prior.sample(rng);
            }
            let candidate =
                proposal_value(cluster_log_xi(data, &proposal, k, &members, hyper, &mut scratch))?;
            let prior_term = if birth { log_odds } else { -log_odds };
            counters.gamma_proposed += 1;
            if metropolis(candidate - current + prior_term, rng)? {
                counters.gamma_accepted += 1;
                state.params = proposal;
                current = candidate;
            }
        }
    }
    Ok(counters)
}

fn mcmc_updates<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<AcceptanceCounters> {
    let mut sweep = update_s(state, data, hyper, rng)?;
    sweep += update_gamma(state, data, hyper, rng)?;
    for flag in update_tau(state, data, hyper, rng)?.into_iter().flatten() {
        sweep.tau_proposed += 1;
        sweep.tau_accepted += u64::from(flag);
    }
    Ok(sweep)
}

fn conditional_sweep<R: Rng + ?Sized>(
    state: &mut LatentState,
    retained: &mut RetainedPath,
    data: &Dataset,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<(ParticleSystem, AcceptanceCounters)> {
    retained.labels.clone_from(&state.z);
    let system = csmc_run(data, &state.params, hyper, retained, rng)?;
    *retained = sample_retained(&system, rng)?;
    state.z.clone_from(&retained.labels);
    let sweep = mcmc_updates(state, data, hyper, rng)?;
    Ok((system, sweep))
}

/// Runs the two-stage particle Gibbs sampler seeded from `config.seed`.
pub fn run_chain(data: &Dataset, hyper: &Hyperparameters, config: &ChainConfig) -> Result<PosteriorChain> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_chain_with(data, hyper, config, &mut rng, |_| {})
}

/// Runs the sampler with an explicit generator, calling `observe` after
/// every iteration.
pub fn run_chain_with<R: Rng + ?Sized>(
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    rng: &mut R,
    mut observe: impl FnMut(&TraceRecord),
) -> Result<PosteriorChain> {
    hyper.validate()?;
    config.validate()?;
    let params = ClusterParams::sample_prior(data.n(), data.p(), hyper, rng)?;
    let system = smc_run(data, &params, hyper, rng).map_err(at(0))?;
    let retained = sample_retained(&system, rng).map_err(at(0))?;
    let state = LatentState {
        z: retained.labels.clone(),
        params,
    };
    drive(data, hyper, config, state, retained, Some(system), rng, &mut observe)
}

/// Runs the conditional sweeps from a given state instead of a prior draw.
pub fn run_chain_from<R: Rng + ?Sized>(
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    init: LatentState,
    rng: &mut R,
    mut observe: impl FnMut(&TraceRecord),
) -> Result<PosteriorChain> {
    hyper.validate()?;
    config.validate()?;
    init.validate(data, hyper)?;
    let retained = RetainedPath {
        labels: init.z.clone(),
        lineage: vec![0; data.n()],
    };
    drive(data, hyper, config, init, retained, None, rng, &mut observe)
}

fn at(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| Error::AtIteration {
        iteration,
        source: Box::new(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn drive<R: Rng + ?Sized>(
    data: &Dataset,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    mut state: LatentState,
    mut retained: RetainedPath,
    initial: Option<ParticleSystem>,
    rng: &mut R,
    observe: &mut impl FnMut(&TraceRecord),
) -> Result<PosteriorChain> {
    let mut system = match initial {
        Some(system) => system,
        None => csmc_run(data, &state.params, hyper, &retained, rng).map_err(at(0))?,
    };
    let mut counters = AcceptanceCounters::default();
    let mut chain = PosteriorChain {
        samples: Vec::with_capacity(config.kept()),
        sample_iterations: Vec::with_capacity(config.kept()),
        trace: Vec::with_capacity(config.iterations),
        counters,
        last_system: system.clone(),
    };

    for iteration in 0..config.iterations {
        let result = if iteration == 0 {
            mcmc_updates(&mut state, data, hyper, rng).map(|c| (system.clone(), c))
        } else {
            conditional_sweep(&mut state, &mut retained, data, hyper, rng)
        };
        let (filter, sweep) = result.map_err(at(iteration))?;
        system = filter;
        counters += sweep;

        let record = TraceRecord {
            iteration,
            log_target: log_target(&state, data, hyper).map_err(at(iteration))?,
            log_evidence: system.log_evidence,
            ess_min: system.ess.iter().copied().fold(f64::INFINITY, f64::min) / hyper.particles as f64,
            ess_mean: system.ess.iter().sum::<f64>() / (system.ess.len() * hyper.particles) as f64,
            unique_paths: *system.unique_paths.last().unwrap_or(&1.0),
            resample_count: system.resample_steps.len(),
            counters,
        };
        observe(&record);
        chain.trace.push(record);
        if config.keeps(iteration) {
            chain.samples.push(state.clone());
            chain.sample_iterations.push(iteration);
        }
    }
    chain.counters = counters;
    chain.last_system = system;
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;

    fn instance(seed: u64) -> (Dataset, Hyperparameters, LatentState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyper = Hyperparameters {
            k: 2,
            particles: 10,
            ..Hyperparameters::default()
        };
        let n = 6;
        let x = DMatrix::from_fn(n, 3, |i, d| match d {
            0 => 1.0,
            1 => i as f64 - 2.5,
            _ => ((i * 7) % 5) as f64 - 2.0,
        });
        let y = (0..n).map(|i| if i < 3 { 2.0 + 0.5 * i as f64 } else { -1.0 - i as f64 }).collect();
        let data = Dataset::new(y, x).unwrap();
        let mut params = ClusterParams::sample_prior(n, 3, &hyper, &mut rng).unwrap();
        params.gamma[0] = vec![true, true, false];
        params.gamma[1] = vec![true, false, false];
        let state = LatentState {
            z: vec![0, 0, 0, 1, 1, 1],
            params,
        };
        (data, hyper, state)
    }

    #[test]
    fn zero_step_tau_always_accepts() {
        let (data, mut hyper, mut state) = instance(1);
        hyper.nu_tau = 0.0;
        let before = state.clone();
        let flags = update_tau(&mut state, &data, &hyper, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(flags, vec![Some(true), None]);
        assert_eq!(state, before);
    }

    #[test]
    fn zero_step_s_always_accepts() {
        let (data, mut hyper, mut state) = instance(3);
        hyper.nu_s = 0.0;
        let before = state.clone();
        let c = update_s(&mut state, &data, &hyper, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(c.s_proposed, 6);
        assert_eq!(c.s_accepted, 6);
        for i in 0..6 {
            assert_eq!(state.params.s[(i, state.z[i])], before.params.s[(i, before.z[i])]);
        }
    }

    #[test]
    fn gamma_sweep_counts_every_column() {
        let (data, hyper, mut state) = instance(5);
        let c = update_gamma(&mut state, &data, &hyper, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(c.gamma_proposed, 4);
        assert!(c.gamma_accepted <= 4);
        assert!(state.params.gamma.iter().all(|g| g[0]));
    }

    #[test]
    fn config_validation_and_sample_count() {
        let c = ChainConfig {
            iterations: 11,
            burn_in: 10,
            thinning: 1,
            seed: 0,
        };
        assert_eq!(c.kept(), 1);
        let c = ChainConfig {
            iterations: 20,
            burn_in: 5,
            thinning: 4,
            seed: 0,
        };
        assert_eq!(c.kept(), 4);
        assert!((0..20).filter(|&i| c.keeps(i)).count() == 4);
        assert!(ChainConfig { burn_in: 20, ..c }.validate().is_err());
        assert!(ChainConfig { thinning: 0, ..c }.validate().is_err());
    }

    #[test]
    fn chain_is_reproducible() {
        let (data, hyper, _) = instance(7);
        let config = ChainConfig {
            iterations: 6,
            burn_in: 2,
            thinning: 2,
            seed: 42,
        };
        let a = run_chain(&data, &hyper, &config).unwrap();
        let b = run_chain(&data, &hyper, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 2);
        assert_eq!(a.sample_iterations, vec![2, 4]);
        assert_eq!(a.trace.len(), 6);
    }
}
