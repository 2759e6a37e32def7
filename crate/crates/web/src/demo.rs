//! Host-independent computations behind the browser exports.

use lassomix::diagnostics::{
    adjusted_rand_index, align_labels, cocluster, degeneracy_trace, hierarchical_cluster, Linkage,
};
use lassomix::finance::{ema, pnl_and_sharpe, positions, StrategyParams};
use lassomix::pgibbs::{run_chain, ChainConfig};
use lassomix::simgen::{simulate, SimSettings};
use lassomix::smc::smc_run;
use lassomix::{ClusterParams, Error, Hyperparameters, ResampleTrigger, ResamplingScheme, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

/// Columns of the demo datasets, intercept included.
const DEMO_P: usize = 6;
const MAX_N: usize = 300;

#[derive(Debug, Serialize)]
pub struct Acceptance {
    pub tau: Option<f64>,
    pub s: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ClusterReport {
    pub y: Vec<f64>,
    /// First non-intercept covariate, for plotting.
    pub x: Vec<f64>,
    pub truth: Vec<usize>,
    /// Consensus partition from the co-clustering tree, aligned to `truth`.
    pub estimate: Vec<usize>,
    /// ARI of every sampled partition against the truth.
    pub ari: Vec<f64>,
    pub consensus_ari: f64,
    pub log_target: Vec<f64>,
    pub acceptance: Acceptance,
}

fn check_size(n: usize, k: usize) -> Result<()> {
    if n > MAX_N {
        return Err(Error::InvalidInput(format!("demo is limited to {MAX_N} observations")));
    }
    if k == 0 || k > 6 {
        return Err(Error::InvalidInput("demo supports 1 to 6 components".into()));
    }
    Ok(())
}

fn demo_settings(seed: u64, n: usize, k: usize, particles: usize) -> SimSettings {
    let hyper = Hyperparameters {
        k,
        particles,
        ..Hyperparameters::default()
    };
    SimSettings::new(n, DEMO_P, hyper, seed)
}

/// Simulates `n` observations from `k` components and runs the sampler.
pub fn cluster(seed: u64, n: usize, k: usize, iterations: usize, particles: usize) -> Result<ClusterReport> {
    check_size(n, k)?;
    let settings = demo_settings(seed, n, k, particles);
    let sim = simulate(&settings)?;
    let truth = sim.state.z.clone();
    let config = ChainConfig {
        iterations: iterations.max(2),
        burn_in: 0,
        thinning: 1,
        seed,
    };
    let chain = run_chain(&sim.data, &settings.hyper, &config)?;
    let ari = chain
        .samples
        .iter()
        .map(|s| adjusted_rand_index(&s.z, &truth))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<&[usize]> = chain.samples[chain.samples.len() / 2..].iter().map(|s| s.z.as_slice()).collect();
    let co = cocluster(&kept)?;
    let tree = hierarchical_cluster(&co.dissimilarity(), Linkage::Average)?;
    let hard = tree.cut(k.min(n))?;
    let perm = align_labels(&hard, &truth, k)?;
    let estimate: Vec<usize> = hard.iter().map(|&l| perm[l]).collect();
    Ok(ClusterReport {
        y: sim.data.y().to_vec(),
        x: sim.data.x().column(1).iter().copied().collect(),
        consensus_ari: adjusted_rand_index(&estimate, &truth)?,
        truth,
        estimate,
        ari,
        log_target: chain.trace.iter().map(|t| t.log_target).collect(),
        acceptance: Acceptance {
            tau: chain.counters.tau_rate(),
            s: chain.counters.s_rate(),
            gamma: chain.counters.gamma_rate(),
        },
    })
}

#[derive(Debug, Serialize)]
pub struct FilterTrace {
    pub ess_over_n: Vec<f64>,
    pub unique_path_fraction: Vec<f64>,
    pub resample_count: usize,
}

#[derive(Debug, Serialize)]
pub struct DegeneracyReport {
    pub adaptive: FilterTrace,
    pub every_step: FilterTrace,
}

/// Runs one filter with each resampling rule on the same data and
/// parameters, using the same generator seed.
pub fn degeneracy(seed: u64, n: usize, particles: usize) -> Result<DegeneracyReport> {
    check_size(n, 3)?;
    let settings = demo_settings(seed, n, 3, particles);
    let sim = simulate(&settings)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ClusterParams::sample_prior(n, DEMO_P, &settings.hyper, &mut rng)?;
    let run = |scheme, trigger| -> Result<FilterTrace> {
        let hyper = Hyperparameters {
            scheme,
            trigger,
            ..settings.hyper.clone()
        };
        let system = smc_run(&sim.data, &params, &hyper, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed))?;
        let trace = degeneracy_trace(&system);
        Ok(FilterTrace {
            ess_over_n: trace.ess_over_n,
            unique_path_fraction: trace.unique_path_fraction,
            resample_count: system.resample_steps.len(),
        })
    };
    Ok(DegeneracyReport {
        adaptive: run(ResamplingScheme::Multinomial, ResampleTrigger::Adaptive)?,
        every_step: run(ResamplingScheme::Systematic, ResampleTrigger::EveryStep)?,
    })
}

#[derive(Debug, Serialize)]
pub struct CrossoverReport {
    pub prices: Vec<f64>,
    pub fast: Vec<f64>,
    pub slow: Vec<f64>,
    pub positions: Vec<f64>,
    /// Running sum of the daily profit and loss.
    pub cumulative_pnl: Vec<f64>,
    pub sharpe: f64,
}

/// Geometric random walk starting at 100 with 1% daily volatility.
pub fn random_walk(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0002, 0.01).expect("valid normal");
    let mut p = 100.0;
    (0..len)
        .map(|_| {
            let v = p;
            p *= f64::exp(step.sample(&mut rng));
            v
        })
        .collect()
}

/// One price per line; blank lines are skipped and for comma-separated
/// lines the last field is used.
pub fn parse_prices(text: &str) -> Result<Vec<f64>> {
    let last_field = |l: &str| l.rsplit(',').next().unwrap_or(l).trim().to_string();
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    // A non-numeric first line is a header.
    let skip = usize::from(lines.first().is_some_and(|l| last_field(l).parse::<f64>().is_err()));
    lines
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(i, l)| {
            let field = last_field(l);
            field
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("line {}: {field:?} is not a price", i + 1)))
        })
        .collect()
}

pub fn crossover(prices: &[f64], alpha_fast: f64, alpha_slow: f64, vol_decay: f64) -> Result<CrossoverReport> {
    let params = StrategyParams {
        alpha_fast,
        alpha_slow,
        vol_decay,
        ..StrategyParams::default()
    };
    params.validate()?;
    let pos = positions(prices, &params)?;
    let (pnl, sharpe) = pnl_and_sharpe(prices, &pos, params.trading_days)?;
    let cumulative_pnl = pnl
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    Ok(CrossoverReport {
        prices: prices.to_vec(),
        fast: ema(prices, alpha_fast)?,
        slow: ema(prices, alpha_slow)?,
        positions: pos,
        cumulative_pnl,
        sharpe,
    })
}
