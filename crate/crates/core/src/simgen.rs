//! Synthetic datasets drawn from the generative model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Gamma, Normal};

use crate::error::{Error, Result};
use crate::model::{ClusterParams, Dataset, Hyperparameters, LatentState, Truth};

/// Simulation settings. The number of components is `hyper.k`, and `p`
/// counts the intercept column.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSettings {
    pub n: usize,
    pub p: usize,
    pub hyper: Hyperparameters,
    /// Standard deviation of the covariates of each component's observations.
    pub covariate_dispersion: Vec<f64>,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self::new(50, 20, Hyperparameters::default(), 1)
    }
}

impl SimSettings {
    /// Settings with the default dispersions for `hyper.k` components.
    pub fn new(n: usize, p: usize, hyper: Hyperparameters, seed: u64) -> Self {
        let covariate_dispersion = default_dispersion(hyper.k);
        Self {
            n,
            p,
            hyper,
            covariate_dispersion,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        let k = self.hyper.k;
        if self.n < k {
            return Err(Error::InvalidInput(format!("n = {} is smaller than K = {k}", self.n)));
        }
        if self.p == 0 {
            return Err(Error::InvalidInput("p must be at least 1 (the intercept)".into()));
        }
        if self.covariate_dispersion.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} dispersions given for {k} components",
                self.covariate_dispersion.len()
            )));
        }
        if self.covariate_dispersion.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput("dispersions must be positive".into()));
        }
        Ok(())
    }
}

/// `(0.5, 1, 2)` for three components; otherwise geometric from 0.5 to 2.
pub fn default_dispersion(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..k).map(|c| 0.5 * 4f64.powf(c as f64 / (k - 1) as f64)).collect(),
    }
}

/// A generated dataset with everything used to produce it.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    /// Data with the true labels and inclusion pattern attached.
    pub data: Dataset,
    pub state: LatentState,
    /// Coefficients over all `p` columns; zero where excluded.
    pub beta: Vec<DVector<f64>>,
    pub sigma2: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Generates a dataset using a generator seeded from `settings.seed`.
pub fn simulate(settings: &SimSettings) -> Result<Simulation> {
    generate(settings, &mut ChaCha8Rng::seed_from_u64(settings.seed))
}

/// Generates a dataset with an explicit generator.
pub fn generate<R: Rng + ?Sized>(settings: &SimSettings, rng: &mut R) -> Result<Simulation> {
    settings.validate()?;
    let SimSettings { n, p, ref hyper, .. } = *settings;
    let k = hyper.k;
    let bad = |e: &dyn std::fmt::Display| Error::InvalidInput(e.to_string());

    let weight_draw = Gamma::new(hyper.delta, 1.0).map_err(|e| bad(&e))?;
    let raw: Vec<f64> = (0..k).map(|_| weight_draw.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    let inclusion = Bernoulli::new(hyper.phi).map_err(|e| bad(&e))?;
    let tau_prior = Exp::new(hyper.tau_rate()).map_err(|e| bad(&e))?;
    let precision = Gamma::new(hyper.a, 1.0 / hyper.b).map_err(|e| bad(&e))?;
    let s_prior = Gamma::new(hyper.s_shape(), 1.0 / hyper.s_shape()).map_err(|e| bad(&e))?;

    let mut gamma = vec![vec![false; p]; k];
    let mut tau2 = DMatrix::from_element(k, p, 1.0);
    let mut sigma2 = Vec::with_capacity(k);
    let mut beta = Vec::with_capacity(k);
    for c in 0..k {
        // A component with no active covariate is redrawn, unless that is the only possibility.
        let can_activate = p > 1 && hyper.phi > 0.0;
        loop {
            gamma[c][0] = true;
            for d in 1..p {
                gamma[c][d] = inclusion.sample(rng);
            }
            if !can_activate || gamma[c][1..].iter().any(|&g| g) {
                break;
            }
        }
        for d in 1..p {
            tau2[(c, d)] = tau_prior.sample(rng);
        }
        let s2 = 1.0 / precision.sample(rng);
        let coef = DVector::from_fn(p, |d, _| {
            if !gamma[c][d] {
                return 0.0;
            }
            let sd = (s2 * if d == 0 { 1.0 } else { tau2[(c, d)] }).sqrt();
            sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        sigma2.push(s2);
        beta.push(coef);
    }

    let z: Vec<usize> = (0..n).map(|_| categorical(&weights, rng)).collect();
    let s = DMatrix::from_fn(n, k, |_, _| s_prior.sample(rng));
    let mut x = DMatrix::from_element(n, p, 1.0);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = z[i];
        let spread = Normal::new(0.0, settings.covariate_dispersion[c]).map_err(|e| bad(&e))?;
        for d in 1..p {
            x[(i, d)] = spread.sample(rng);
        }
        let mean = x.row(i).transpose().dot(&beta[c]);
        // The response noise has variance s; sigma2 only scales the coefficients.
        let sd = s[(i, c)].sqrt();
        y.push(mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal));
    }

    let params = ClusterParams { s, gamma, tau2 };
    let truth = Truth {
        labels: z.clone(),
        gamma: params.gamma.clone(),
    };
    let data = Dataset::new(y, x)?.with_truth(truth)?;
    Ok(Simulation {
        data,
        state: LatentState { z, params },
        beta,
        sigma2,
        weights,
    })
}

fn categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    weights.len() - 1
}
