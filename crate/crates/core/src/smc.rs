//! Sequential Monte Carlo over the cluster labels.
//!
//! Observations are absorbed one at a time. Each particle carries a label
//! path and, per component, the accumulated cross-products needed to
//! evaluate `xi_k`. Labels are proposed from their exact full conditional
//! given the particle's own prefix, so the incremental weight is the
//! normaliser of that conditional (the one-step predictive density).
//!
//! Running weights accumulate multiplicatively between resampling epochs and
//! are reset to one when the system is resampled; the evidence estimate is
//! the product over epochs of the mean running weight.
//!
//! The conditional variant keeps one label path (with its lineage) alive in
//! every generation, which is what the particle Gibbs kernel needs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{
    ClusterAccumulator, ClusterParams, CollapsedModel, Dataset, Hyperparameters,
    ResampleTrigger, ResamplingScheme, Scratch,
};

/// A completed particle system.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    /// `labels[i][j]`: label drawn for observation `i` by slot `j`.
    pub labels: Vec<Vec<usize>>,
    /// `ancestors[i][j]`: slot at step `i - 1` that slot `j` extends at step `i`.
    /// `ancestors[0]` is the identity.
    pub ancestors: Vec<Vec<usize>>,
    /// Forward-stored label paths of the final particles.
    pub paths: Vec<Vec<usize>>,
    /// Final running log-weights.
    pub log_weights: Vec<f64>,
    /// Log of the normalising-constant estimate `p(y | s, gamma, tau2)`.
    pub log_evidence: f64,
    /// Observations (0-based) before which the system was resampled.
    pub resample_steps: Vec<usize>,
    /// Effective sample size after weighting at each observation.
    pub ess: Vec<f64>,
    /// Fraction of distinct surviving lineages at each observation.
    pub unique_paths: Vec<f64>,
}

impl ParticleSystem {
    pub fn n_particles(&self) -> usize {
        self.log_weights.len()
    }

    /// Number of absorbed observations.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Normalised final weights.
    pub fn normalized_weights(&self) -> Vec<f64> {
        normalized_from_log(&self.log_weights).unwrap_or_default()
    }

    /// Labels of final slot `t` reconstructed from the ancestor table.
    pub fn trace_back(&self, t: usize) -> RetainedPath {
        let n = self.len();
        let mut lineage = vec![0; n];
        lineage[n - 1] = t;
        for i in (1..n).rev() {
            lineage[i - 1] = self.ancestors[i][lineage[i]];
        }
        let labels = lineage.iter().enumerate().map(|(i, &b)| self.labels[i][b]).collect();
        RetainedPath { labels, lineage }
    }
}

/// One label path together with the slots it occupied at every step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetainedPath {
    pub labels: Vec<usize>,
    pub lineage: Vec<usize>,
}

/// Effective sample size `(sum w_j^2)^-1` of the normalised weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    let total = checked_total(weights)?;
    Ok(1.0 / weights.iter().map(|w| (w / total).powi(2)).sum::<f64>())
}

/// `N` i.i.d. draws from the categorical distribution of the normalised weights.
pub fn resample_multinomial<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let cumulative = cumulative(weights)?;
    let total = *cumulative.last().unwrap_or(&0.0);
    Ok((0..weights.len())
        .map(|_| {
            let u = rng.random::<f64>() * total;
            search(&cumulative, u)
        })
        .collect())
}

/// Systematic resampling: one uniform offset, `N` evenly spaced points.
pub fn resample_systematic<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let cumulative = cumulative(weights)?;
    let n = weights.len();
    let total = *cumulative.last().unwrap_or(&0.0);
    let offset = rng.random::<f64>();
    let mut out = Vec::with_capacity(n);
    let mut idx = 0;
    for j in 0..n {
        let u = (j as f64 + offset) / n as f64 * total;
        while idx + 1 < n && cumulative[idx] <= u {
            idx += 1;
        }
        // skip trailing zero-weight slots
        while weights[idx] == 0.0 && idx + 1 < n {
            idx += 1;
        }
        out.push(idx);
    }
    Ok(out)
}

fn checked_total(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        Ok(total)
    } else {
        Err(Error::Degenerate("all weights are zero".into()))
    }
}

fn cumulative(weights: &[f64]) -> Result<Vec<f64>> {
    checked_total(weights)?;
    Ok(weights
        .iter()
        .scan(0.0, |acc, &w| {
            *acc += w;
            Some(*acc)
        })
        .collect())
}

/// First index whose cumulative weight exceeds `u`, skipping zero-weight slots.
fn search(cumulative: &[f64], u: f64) -> usize {
    let idx = cumulative.partition_point(|&c| c <= u);
    idx.min(cumulative.len() - 1)
}

fn normalized_from_log(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Some(w.into_iter().map(|v| v / total).collect())
}

fn log_mean_exp(log_w: &[f64]) -> f64 {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + (log_w.iter().map(|l| (l - max).exp()).sum::<f64>() / log_w.len() as f64).ln()
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding: fall back to the last component with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[derive(Clone)]
struct Particle {
    accs: Vec<ClusterAccumulator>,
    log_xi: Vec<f64>,
    path: Vec<usize>,
}

/// Runs the unconditional filter over all observations.
pub fn smc_run<R: Rng + ?Sized>(
    data: &Dataset,
    params: &ClusterParams,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<ParticleSystem> {
    run(data, params, hyper, None, rng)
}

/// Runs the conditional filter: slot `retained.lineage[i]` carries
/// `retained.labels[i]` at every step.
pub fn csmc_run<R: Rng + ?Sized>(
    data: &Dataset,
    params: &ClusterParams,
    hyper: &Hyperparameters,
    retained: &RetainedPath,
    rng: &mut R,
) -> Result<ParticleSystem> {
    let n = data.n();
    if retained.labels.len() != n || retained.lineage.len() != n {
        return Err(Error::InvalidInput(format!(
            "retained path covers {} observations, data has {n}",
            retained.labels.len()
        )));
    }
    if retained.lineage.iter().any(|&b| b >= hyper.particles) {
        return Err(Error::InvalidInput("retained lineage refers to a missing slot".into()));
    }
    if retained.labels.iter().any(|&l| l >= hyper.k) {
        return Err(Error::InvalidInput("retained labels outside 1..=K".into()));
    }
    run(data, params, hyper, Some(retained), rng)
}

/// Draws the final slot from the normalised weights and traces its lineage.
pub fn sample_retained<R: Rng + ?Sized>(system: &ParticleSystem, rng: &mut R) -> Result<RetainedPath> {
    if system.is_empty() {
        return Err(Error::InvalidInput("particle system is empty".into()));
    }
    let weights = normalized_from_log(&system.log_weights)
        .ok_or(Error::ParticleDegeneracy { step: system.len() })?;
    let t = sample_categorical(&weights, rng);
    Ok(system.trace_back(t))
}

fn run<R: Rng + ?Sized>(
    data: &Dataset,
    params: &ClusterParams,
    hyper: &Hyperparameters,
    retained: Option<&RetainedPath>,
    rng: &mut R,
) -> Result<ParticleSystem> {
    hyper.validate()?;
    let model = CollapsedModel::new(data, params, hyper)?;
    let n = data.n();
    let big_n = hyper.particles;
    let k = hyper.k;
    let kd = k as f64 * hyper.delta;
    let mut scratch = Scratch::default();

    let empty = Particle {
        accs: (0..k).map(|c| model.empty(c)).collect(),
        log_xi: vec![0.0; k],
        path: Vec::with_capacity(n),
    };

    // First observation: the conditional is the same for every particle.
    let mut first = Vec::with_capacity(k);
    let mut log_mass = Vec::with_capacity(k);
    for c in 0..k {
        let lx = model.log_xi_with(c, &empty.accs[c], 0, &mut scratch)?;
        first.push(lx);
        log_mass.push(lx + hyper.delta.ln() - kd.ln());
    }
    let (log_norm, probs) = normalise(&log_mass).ok_or(Error::ParticleDegeneracy { step: 1 })?;
    let mut log_evidence = log_norm;

    let mut particles = vec![empty; big_n];
    let mut step_labels = Vec::with_capacity(big_n);
    for (j, particle) in particles.iter_mut().enumerate() {
        let label = match retained {
            Some(r) if r.lineage[0] == j => r.labels[0],
            _ => sample_categorical(&probs, rng),
        };
        model.absorb(label, &mut particle.accs[label], 0);
        particle.log_xi[label] = first[label];
        particle.path.push(label);
        step_labels.push(label);
    }

    let identity: Vec<usize> = (0..big_n).collect();
    let mut labels = vec![step_labels];
    let mut ancestors = vec![identity.clone()];
    let mut log_w = vec![0.0; big_n];
    let mut roots = identity.clone();
    let mut resample_steps = Vec::new();
    let mut ess_trace = vec![big_n as f64];
    let mut unique_trace = vec![1.0];
    let mut log_mass = vec![0.0; k];
    let mut with_i = vec![0.0; k];

    for i in 1..n {
        let weights = normalized_from_log(&log_w).ok_or(Error::ParticleDegeneracy { step: i })?;
        let current_ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let resample = match hyper.trigger {
            ResampleTrigger::EveryStep => true,
            ResampleTrigger::Adaptive => current_ess < hyper.ess_fraction * big_n as f64,
        };

        let mut parents = identity.clone();
        if resample {
            log_evidence += log_mean_exp(&log_w);
            parents = match hyper.scheme {
                ResamplingScheme::Multinomial => resample_multinomial(&weights, rng)?,
                ResamplingScheme::Systematic => resample_systematic(&weights, rng)?,
            };
            if let Some(r) = retained {
                parents[r.lineage[i]] = r.lineage[i - 1];
            }
            resample_steps.push(i);
            particles = parents.iter().map(|&a| particles[a].clone()).collect();
            roots = parents.iter().map(|&a| roots[a]).collect();
            log_w.iter_mut().for_each(|w| *w = 0.0);
        } else if let Some(r) = retained {
            // Keep every particle; move the retained one into its recorded slot.
            let (to, from) = (r.lineage[i], r.lineage[i - 1]);
            if to != from {
                parents.swap(to, from);
                particles.swap(to, from);
                roots.swap(to, from);
                log_w.swap(to, from);
            }
        }
        unique_trace.push(distinct_fraction(&roots));

        let log_prior_norm = (i as f64 + kd).ln();
        let mut step_labels = Vec::with_capacity(big_n);
        for (j, particle) in particles.iter_mut().enumerate() {
            for c in 0..k {
                with_i[c] = model.log_xi_with(c, &particle.accs[c], i, &mut scratch)?;
                let n_c = particle.accs[c].count() as f64;
                log_mass[c] = with_i[c] - particle.log_xi[c] + (hyper.delta + n_c).ln() - log_prior_norm;
            }
            let (log_u, probs) =
                normalise(&log_mass).ok_or(Error::ParticleDegeneracy { step: i + 1 })?;
            let label = match retained {
                Some(r) if r.lineage[i] == j => r.labels[i],
                _ => sample_categorical(&probs, rng),
            };
            model.absorb(label, &mut particle.accs[label], i);
            particle.log_xi[label] = with_i[label];
            particle.path.push(label);
            log_w[j] += log_u;
            step_labels.push(label);
        }
        if log_w.iter().all(|w| !w.is_finite()) {
            return Err(Error::ParticleDegeneracy { step: i + 1 });
        }
        let weights = normalized_from_log(&log_w).ok_or(Error::ParticleDegeneracy { step: i + 1 })?;
        ess_trace.push(1.0 / weights.iter().map(|w| w * w).sum::<f64>());
        labels.push(step_labels);
        ancestors.push(parents);
    }
    log_evidence += log_mean_exp(&log_w);

    Ok(ParticleSystem {
        labels,
        ancestors,
        paths: particles.into_iter().map(|p| p.path).collect(),
        log_weights: log_w,
        log_evidence,
        resample_steps,
        ess: ess_trace,
        unique_paths: unique_trace,
    })
}

/// Log-normaliser and normalised probabilities of a vector of log masses.
fn normalise(log_mass: &[f64]) -> Option<(f64, Vec<f64>)> {
    let max = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_mass.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Some((max + total.ln(), w.into_iter().map(|v| v / total).collect()))
}

fn distinct_fraction(roots: &[usize]) -> f64 {
    let mut seen = vec![false; roots.len()];
    let mut count = 0;
    for &r in roots {
        if !seen[r] {
            seen[r] = true;
            count += 1;
        }
    }
    count as f64 / roots.len() as f64
}
