//! The mixture-of-lasso-regressions model.
//!
//! Observation `i` belongs to component `z[i]`; given the component it follows
//! a linear regression on the included covariates with error variance
//! `sigma2_k * s[i, k]`. Regression coefficients, `sigma2_k` and the mixture
//! weights are integrated out analytically, so the sampled state is
//! `(z, s, gamma, tau2)` only. Column 0 of the design matrix is the intercept:
//! it is always included and carries unit prior variance.
//!
//! Labels are 0-based everywhere in the library; file formats use 1-based
//! labels.

mod target;
mod xi;

pub use target::{
    label_conditional, log_label_prior, log_labels_joint, log_partition_prior, log_target,
};
pub(crate) use xi::{accumulate_rows, fill_row};
pub use xi::{
    cluster_stats, draw_beta_sigma, log_xi, ClusterAccumulator, ClusterPosteriorStats,
    CollapsedModel, Scratch,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Gamma};

use crate::error::{Error, Result};

/// Paired observations `(y_i, x_i)` with an all-ones leading covariate column.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    truth: Option<Truth>,
}

/// Generating labels and inclusion indicators, kept for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub labels: Vec<usize>,
    pub gamma: Vec<Vec<bool>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidInput("dataset has no observations".into()));
        }
        if x.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "response has {n} rows but the design matrix has {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidInput("design matrix has no columns".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("response {} is not finite", i + 1)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite entries".into()));
        }
        if let Some(i) = (0..n).find(|&i| x[(i, 0)] != 1.0) {
            return Err(Error::InvalidInput(format!(
                "first covariate of observation {} is {} (intercept column must be 1)",
                i + 1,
                x[(i, 0)]
            )));
        }
        Ok(Self { y, x, truth: None })
    }

    /// Attaches generating labels and inclusion indicators.
    pub fn with_truth(mut self, truth: Truth) -> Result<Self> {
        if truth.labels.len() != self.n() {
            return Err(Error::LengthMismatch {
                left: truth.labels.len(),
                right: self.n(),
            });
        }
        if truth.gamma.iter().any(|row| row.len() != self.p()) {
            return Err(Error::InvalidInput("truth gamma rows must have p entries".into()));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }
}

/// Which resampling algorithm draws ancestor indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResamplingScheme {
    Multinomial,
    Systematic,
}

/// When the particle system is resampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleTrigger {
    /// Resample when `ESS < ess_fraction * N`.
    Adaptive,
    /// Resample before every observation after the first.
    EveryStep,
}

/// Fixed model constants together with the sampler tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparameters {
    /// Number of mixture components.
    pub k: usize,
    /// Symmetric Dirichlet concentration of the mixture weights.
    pub delta: f64,
    /// Degrees of freedom `d`: `s[i, k] ~ Gamma(d/2, rate d/2)`.
    pub dof: f64,
    /// Inverse-gamma shape of `sigma2_k`.
    pub a: f64,
    /// Inverse-gamma scale of `sigma2_k`.
    pub b: f64,
    /// Lasso rate: `tau2 ~ Exp(rate lambda^2 / 2)`.
    pub lambda: f64,
    /// Prior inclusion probability of each non-intercept covariate.
    pub phi: f64,
    /// Particle count `N`.
    pub particles: usize,
    /// Log-scale random-walk step for `tau2`.
    pub nu_tau: f64,
    /// Log-scale random-walk step for `s`.
    pub nu_s: f64,
    /// Resampling threshold as a fraction of `N`.
    pub ess_fraction: f64,
    pub scheme: ResamplingScheme,
    pub trigger: ResampleTrigger,
}

impl Default for Hyperparameters {
    /// The simulation-study settings.
    fn default() -> Self {
        Self {
            k: 3,
            delta: 2.0,
            dof: 4.0,
            a: 2.0,
            b: 4.0,
            lambda: 1.0,
            phi: 0.5,
            particles: 100,
            nu_tau: 2.0,
            nu_s: 3.0,
            ess_fraction: 0.5,
            scheme: ResamplingScheme::Multinomial,
            trigger: ResampleTrigger::Adaptive,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(self.dof > 0.0 && self.dof.is_finite()) {
            return bad("degrees of freedom must be positive");
        }
        if !(self.a > 1.0 && self.a.is_finite()) {
            return bad("inverse-gamma shape a must exceed 1");
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return bad("inverse-gamma scale b must be positive");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return bad("phi must lie in (0, 1)");
        }
        if self.particles == 0 {
            return bad("particle count must be at least 1");
        }
        if !(self.nu_tau >= 0.0 && self.nu_tau.is_finite()) {
            return bad("nu_tau must be non-negative");
        }
        if !(self.nu_s >= 0.0 && self.nu_s.is_finite()) {
            return bad("nu_s must be non-negative");
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return bad("ess_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    /// Rate of the exponential prior on `tau2`.
    pub fn tau_rate(&self) -> f64 {
        0.5 * self.lambda * self.lambda
    }

    /// Shape (= rate) of the gamma prior on `s`.
    pub fn s_shape(&self) -> f64 {
        0.5 * self.dof
    }
}

/// The non-label part of the state: `s` (n x K), `gamma` (K x p), `tau2` (K x p).
///
/// `gamma[k][0]` is always true. `tau2[(k, d)]` is only meaningful where
/// `gamma[k][d]` holds; column 0 is unused.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterParams {
    pub s: DMatrix<f64>,
    pub gamma: Vec<Vec<bool>>,
    pub tau2: DMatrix<f64>,
}

impl ClusterParams {
    /// Draws every variable from its prior.
    pub fn sample_prior<R: Rng + ?Sized>(
        n: usize,
        p: usize,
        hyper: &Hyperparameters,
        rng: &mut R,
    ) -> Result<Self> {
        let k = hyper.k;
        let s_prior = Gamma::new(hyper.s_shape(), 1.0 / hyper.s_shape())
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let tau_prior =
            Exp::new(hyper.tau_rate()).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let incl = Bernoulli::new(hyper.phi).map_err(|e| Error::InvalidInput(e.to_string()))?;

        let s = DMatrix::from_fn(n, k, |_, _| s_prior.sample(rng));
        let mut gamma = vec![vec![false; p]; k];
        let mut tau2 = DMatrix::from_element(k, p, 1.0);
        for c in 0..k {
            gamma[c][0] = true;
            for d in 1..p {
                gamma[c][d] = incl.sample(rng);
                tau2[(c, d)] = tau_prior.sample(rng);
            }
        }
        Ok(Self { s, gamma, tau2 })
    }

    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    /// Included columns of component `k`, intercept first.
    pub fn included(&self, k: usize) -> Vec<usize> {
        self.gamma[k]
            .iter()
            .enumerate()
            .filter_map(|(d, &g)| g.then_some(d))
            .collect()
    }

    /// Diagonal of the prior covariance `V_k = diag(1, tau2 of included columns)`.
    pub fn prior_variances(&self, k: usize) -> Vec<f64> {
        self.included(k)
            .into_iter()
            .map(|d| if d == 0 { 1.0 } else { self.tau2[(k, d)] })
            .collect()
    }

    pub fn validate(&self, n: usize, p: usize, k: usize) -> Result<()> {
        if self.s.nrows() != n || self.s.ncols() != k {
            return Err(Error::InvalidInput(format!(
                "s is {}x{}, expected {n}x{k}",
                self.s.nrows(),
                self.s.ncols()
            )));
        }
        if self.gamma.len() != k || self.gamma.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput(format!("gamma must be {k}x{p}")));
        }
        if self.tau2.nrows() != k || self.tau2.ncols() != p {
            return Err(Error::InvalidInput(format!("tau2 must be {k}x{p}")));
        }
        if self.s.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("s must be positive and finite".into()));
        }
        for c in 0..k {
            if !self.gamma[c][0] {
                return Err(Error::InvalidInput(format!(
                    "intercept excluded from component {}",
                    c + 1
                )));
            }
            for d in 1..p {
                let t = self.tau2[(c, d)];
                if self.gamma[c][d] && !(t > 0.0 && t.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "tau2[{}, {}] = {t} must be positive",
                        c + 1,
                        d + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Relabels components: old component `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k();
        let mut out = self.clone();
        for old in 0..k {
            let new = perm[old];
            out.s.set_column(new, &self.s.column(old));
            out.gamma[new] = self.gamma[old].clone();
            out.tau2.set_row(new, &self.tau2.row(old));
        }
        out
    }
}

/// A full draw of the sampled variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub z: Vec<usize>,
    pub params: ClusterParams,
}

impl LatentState {
    pub fn validate(&self, data: &Dataset, hyper: &Hyperparameters) -> Result<()> {
        if self.z.len() != data.n() {
            return Err(Error::LengthMismatch {
                left: self.z.len(),
                right: data.n(),
            });
        }
        if let Some(&bad) = self.z.iter().find(|&&z| z >= hyper.k) {
            return Err(Error::InvalidInput(format!(
                "label {} outside 1..={}",
                bad + 1,
                hyper.k
            )));
        }
        self.params.validate(data.n(), data.p(), hyper.k)
    }

    /// Applies a label permutation to `z`, `s` columns, `gamma` rows and `tau2` rows.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            z: self.z.iter().map(|&z| perm[z]).collect(),
            params: self.params.permuted(perm),
        }
    }

    /// Cluster sizes `n_k`.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        label_counts(&self.z, k)
    }
}

pub(crate) fn label_counts(z: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for &l in z {
        counts[l] += 1;
    }
    counts
}

/// `ln Gamma(x; shape, rate)` density.
pub fn ln_gamma_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// `ln Exp(x; rate)` density.
pub fn ln_exp_density(x: f64, rate: f64) -> f64 {
    rate.ln() - rate * x
}
