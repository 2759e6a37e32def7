//! The collapsed cluster marginal `xi_k`.
//!
//! For the rows of cluster `k` restricted to its included columns, with
//! `Sigma = diag(s)` and `V = diag(1, tau2)`:
//!
//! ```text
//! V*  = (V^-1 + X' Sigma^-1 X)^-1
//! m*  = V* X' Sigma^-1 y
//! a*  = a + n_k / 2
//! b*  = b + (y' Sigma^-1 y - m*' V*^-1 m*) / 2
//! xi  = |V*|^1/2 Gamma(a*) b^a / (|V|^1/2 Gamma(a) (b*)^a* (2 pi)^(n_k/2) |Sigma|^1/2)
//! ```
//!
//! which is the exact marginal density of `y` under
//! `y | beta, sigma2 ~ N(X beta, sigma2 Sigma)`, `beta | sigma2 ~ N(0, sigma2 V)`,
//! `sigma2 ~ IG(a, b)`. Everything is evaluated in log space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{ClusterParams, Dataset, Hyperparameters};
use crate::error::{Error, Result};

/// Posterior quantities of one cluster regression.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterPosteriorStats {
    pub n_k: usize,
    pub log_det_v: f64,
    pub log_det_vstar: f64,
    /// `ln |Sigma| = sum ln s_i` over the cluster rows.
    pub log_det_sigma: f64,
    pub m_star: DVector<f64>,
    pub v_star: DMatrix<f64>,
    pub a_star: f64,
    pub b_star: f64,
}

/// Computes `V*`, `m*`, `a*`, `b*` with a dense Cholesky factorisation.
///
/// `x` holds the cluster rows restricted to the included columns (intercept
/// first); `tau2` holds the prior variances of the non-intercept columns.
pub fn cluster_stats(
    y: &[f64],
    x: &DMatrix<f64>,
    s: &[f64],
    tau2: &[f64],
    hyper: &Hyperparameters,
) -> Result<ClusterPosteriorStats> {
    let n_k = y.len();
    let q = x.ncols();
    if x.nrows() != n_k || s.len() != n_k {
        return Err(Error::InvalidInput(format!(
            "cluster rows disagree: y {n_k}, x {}, s {}",
            x.nrows(),
            s.len()
        )));
    }
    if q == 0 || tau2.len() + 1 != q {
        return Err(Error::InvalidInput(format!(
            "{q} included columns need {} tau2 values, got {}",
            q.saturating_sub(1),
            tau2.len()
        )));
    }
    if s.iter().any(|&v| !(v > 0.0)) || tau2.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput("s and tau2 must be positive".into()));
    }

    let prior_var: Vec<f64> = std::iter::once(1.0).chain(tau2.iter().copied()).collect();
    let log_det_v: f64 = prior_var.iter().map(|v| v.ln()).sum();

    let w = DVector::from_iterator(n_k, s.iter().map(|v| 1.0 / v));
    let yv = DVector::from_column_slice(y);
    let xw = DMatrix::from_fn(n_k, q, |i, j| x[(i, j)] * w[i]);
    let mut precision = x.transpose() * &xw;
    for d in 0..q {
        precision[(d, d)] += 1.0 / prior_var[d];
    }
    let r = xw.transpose() * &yv;
    let yty: f64 = y.iter().zip(w.iter()).map(|(y, w)| y * y * w).sum();

    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::SingularModel("posterior precision is not positive definite".into()))?;
    let log_det_vstar = -2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let v_star = chol.inverse();
    let m_star = chol.solve(&r);
    let b_star = hyper.b + 0.5 * (yty - m_star.dot(&r));
    if !(b_star > 0.0 && b_star.is_finite()) {
        return Err(Error::Degenerate(format!("b* = {b_star} is not positive")));
    }

    Ok(ClusterPosteriorStats {
        n_k,
        log_det_v,
        log_det_vstar,
        log_det_sigma: s.iter().map(|v| v.ln()).sum(),
        m_star,
        v_star,
        a_star: hyper.a + 0.5 * n_k as f64,
        b_star,
    })
}

/// `ln xi_k` from precomputed posterior statistics.
pub fn log_xi(stats: &ClusterPosteriorStats, hyper: &Hyperparameters) -> Result<f64> {
    if !(stats.b_star > 0.0) {
        return Err(Error::Degenerate(format!("b* = {} is not positive", stats.b_star)));
    }
    let value = assemble_log_xi(
        stats.n_k,
        stats.log_det_vstar,
        stats.log_det_v,
        stats.log_det_sigma,
        stats.b_star,
        hyper,
    );
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Degenerate(format!("ln xi = {value}")))
    }
}

fn assemble_log_xi(
    n_k: usize,
    log_det_vstar: f64,
    log_det_v: f64,
    log_det_sigma: f64,
    b_star: f64,
    hyper: &Hyperparameters,
) -> f64 {
    let half_n = 0.5 * n_k as f64;
    let a_star = hyper.a + half_n;
    0.5 * (log_det_vstar - log_det_v) + ln_gamma(a_star) - ln_gamma(hyper.a) + hyper.a * hyper.b.ln()
        - a_star * b_star.ln()
        - half_n * (2.0 * PI).ln()
        - 0.5 * log_det_sigma
}

/// Draws `(beta, sigma2)` from the conjugate posterior:
/// `sigma2 ~ IG(a*, b*)`, `beta | sigma2 ~ N(m*, sigma2 V*)`.
pub fn draw_beta_sigma<R: Rng + ?Sized>(
    stats: &ClusterPosteriorStats,
    rng: &mut R,
) -> Result<(DVector<f64>, f64)> {
    let precision = Gamma::new(stats.a_star, 1.0 / stats.b_star)
        .map_err(|e| Error::Degenerate(e.to_string()))?
        .sample(rng);
    let sigma2 = 1.0 / precision;
    let chol = stats
        .v_star
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularModel("V* is not positive definite".into()))?;
    let q = stats.m_star.len();
    let eps = DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = &stats.m_star + chol.l() * eps * sigma2.sqrt();
    Ok((beta, sigma2))
}

/// Weighted cross-products `X' Sigma^-1 X` (lower triangle), `X' Sigma^-1 y`,
/// `y' Sigma^-1 y` and `ln |Sigma|` of one cluster over a fixed column set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAccumulator {
    count: usize,
    q: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    log_det_sigma: f64,
}

impl ClusterAccumulator {
    pub fn new(q: usize) -> Self {
        Self {
            count: 0,
            q,
            gram: vec![0.0; q * q],
            xty: vec![0.0; q],
            yty: 0.0,
            log_det_sigma: 0.0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one row with variance scale `s`.
    pub fn add(&mut self, row: &[f64], y: f64, s: f64) {
        debug_assert_eq!(row.len(), self.q);
        let w = 1.0 / s;
        let q = self.q;
        for a in 0..q {
            let wa = w * row[a];
            let line = &mut self.gram[a * q..a * q + a + 1];
            for (g, &xb) in line.iter_mut().zip(&row[..=a]) {
                *g += wa * xb;
            }
            self.xty[a] += wa * y;
        }
        self.yty += w * y * y;
        self.log_det_sigma += s.ln();
        self.count += 1;
    }

    /// Changes the variance scale of a row previously added with scale `old`.
    pub fn reweight(&mut self, row: &[f64], y: f64, old: f64, new: f64) {
        debug_assert_eq!(row.len(), self.q);
        let w = 1.0 / new - 1.0 / old;
        let q = self.q;
        for a in 0..q {
            let wa = w * row[a];
            let line = &mut self.gram[a * q..a * q + a + 1];
            for (g, &xb) in line.iter_mut().zip(&row[..=a]) {
                *g += wa * xb;
            }
            self.xty[a] += wa * y;
        }
        self.yty += w * y * y;
        self.log_det_sigma += new.ln() - old.ln();
    }

    /// `ln xi` of the accumulated rows under prior variances `prior_var`.
    pub fn evaluate(&self, prior_var: &[f64], hyper: &Hyperparameters, scratch: &mut Scratch) -> Result<f64> {
        let inv_prior: Vec<f64> = prior_var.iter().map(|v| 1.0 / v).collect();
        let log_det_v = prior_var.iter().map(|v| v.ln()).sum();
        self.log_xi(&inv_prior, log_det_v, None, hyper, scratch)
    }

    /// `ln xi` under prior precisions `inv_prior` (diagonal of `V^-1`).
    fn log_xi(
        &self,
        inv_prior: &[f64],
        log_det_v: f64,
        extra: Option<(&[f64], f64, f64)>,
        hyper: &Hyperparameters,
        scratch: &mut Scratch,
    ) -> Result<f64> {
        let q = self.q;
        scratch.prec.clear();
        scratch.prec.extend_from_slice(&self.gram);
        scratch.r.clear();
        scratch.r.extend_from_slice(&self.xty);
        let (mut count, mut yty, mut log_det_sigma) = (self.count, self.yty, self.log_det_sigma);
        if let Some((row, y, s)) = extra {
            let w = 1.0 / s;
            for a in 0..q {
                let wa = w * row[a];
                for b in 0..=a {
                    scratch.prec[a * q + b] += wa * row[b];
                }
                scratch.r[a] += wa * y;
            }
            count += 1;
            yty += w * y * y;
            log_det_sigma += s.ln();
        }
        for d in 0..q {
            scratch.prec[d * q + d] += inv_prior[d];
        }
        if !cholesky_lower(&mut scratch.prec, q) {
            return Err(Error::SingularModel(format!(
                "posterior precision of a {q}-column cluster is not positive definite"
            )));
        }
        let log_det_vstar = -2.0 * (0..q).map(|d| scratch.prec[d * q + d].ln()).sum::<f64>();
        forward_substitute(&scratch.prec, q, &mut scratch.r);
        let quad: f64 = scratch.r.iter().map(|v| v * v).sum();
        let b_star = hyper.b + 0.5 * (yty - quad);
        if !(b_star > 0.0 && b_star.is_finite()) {
            return Err(Error::Degenerate(format!("b* = {b_star} is not positive")));
        }
        let value = assemble_log_xi(count, log_det_vstar, log_det_v, log_det_sigma, b_star, hyper);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Degenerate(format!("ln xi = {value}")))
        }
    }
}

/// Reusable buffers for the factorisations.
#[derive(Clone, Debug, Default)]
pub struct Scratch {
    prec: Vec<f64>,
    r: Vec<f64>,
}

/// In-place Cholesky of the lower triangle of a row-major `q x q` matrix.
fn cholesky_lower(a: &mut [f64], q: usize) -> bool {
    for j in 0..q {
        let mut diag = a[j * q + j];
        for k in 0..j {
            diag -= a[j * q + k] * a[j * q + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let diag = diag.sqrt();
        a[j * q + j] = diag;
        for i in j + 1..q {
            let mut v = a[i * q + j];
            for k in 0..j {
                v -= a[i * q + k] * a[j * q + k];
            }
            a[i * q + j] = v / diag;
        }
    }
    true
}

/// Solves `L u = r` in place.
fn forward_substitute(l: &[f64], q: usize, r: &mut [f64]) {
    for i in 0..q {
        let mut v = r[i];
        for k in 0..i {
            v -= l[i * q + k] * r[k];
        }
        r[i] = v / l[i * q + i];
    }
}

struct Design {
    cols: Vec<usize>,
    inv_prior: Vec<f64>,
    log_det_v: f64,
    /// `n x q` row-major restriction of the design to `cols`.
    rows: Vec<f64>,
}

/// Per-component designs prepared for fast repeated evaluation of `ln xi`
/// while `(s, gamma, tau2)` stay fixed.
pub struct CollapsedModel<'a> {
    data: &'a Dataset,
    params: &'a ClusterParams,
    hyper: &'a Hyperparameters,
    designs: Vec<Design>,
}

impl<'a> CollapsedModel<'a> {
    pub fn new(
        data: &'a Dataset,
        params: &'a ClusterParams,
        hyper: &'a Hyperparameters,
    ) -> Result<Self> {
        params.validate(data.n(), data.p(), hyper.k)?;
        let designs = (0..hyper.k)
            .map(|k| {
                let cols = params.included(k);
                let prior = params.prior_variances(k);
                let q = cols.len();
                let mut rows = Vec::with_capacity(data.n() * q);
                for i in 0..data.n() {
                    rows.extend(cols.iter().map(|&d| data.x()[(i, d)]));
                }
                Design {
                    log_det_v: prior.iter().map(|v| v.ln()).sum(),
                    inv_prior: prior.iter().map(|v| 1.0 / v).collect(),
                    cols,
                    rows,
                }
            })
            .collect();
        Ok(Self {
            data,
            params,
            hyper,
            designs,
        })
    }

    pub fn k(&self) -> usize {
        self.designs.len()
    }

    pub fn hyper(&self) -> &Hyperparameters {
        self.hyper
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn columns(&self, k: usize) -> &[usize] {
        &self.designs[k].cols
    }

    pub fn empty(&self, k: usize) -> ClusterAccumulator {
        ClusterAccumulator::new(self.designs[k].cols.len())
    }

    fn row(&self, k: usize, i: usize) -> &[f64] {
        let q = self.designs[k].cols.len();
        &self.designs[k].rows[i * q..(i + 1) * q]
    }

    /// Adds observation `i` to the accumulator of component `k`.
    pub fn absorb(&self, k: usize, acc: &mut ClusterAccumulator, i: usize) {
        acc.add(self.row(k, i), self.data.y()[i], self.params.s[(i, k)]);
    }

    /// Accumulator of component `k` over the given observations.
    pub fn accumulate(&self, k: usize, members: impl IntoIterator<Item = usize>) -> ClusterAccumulator {
        let mut acc = self.empty(k);
        for i in members {
            self.absorb(k, &mut acc, i);
        }
        acc
    }

    pub fn log_xi(&self, k: usize, acc: &ClusterAccumulator, scratch: &mut Scratch) -> Result<f64> {
        let d = &self.designs[k];
        acc.log_xi(&d.inv_prior, d.log_det_v, None, self.hyper, scratch)
    }

    /// `ln xi_k` of the accumulated rows plus observation `i`, leaving `acc` untouched.
    pub fn log_xi_with(
        &self,
        k: usize,
        acc: &ClusterAccumulator,
        i: usize,
        scratch: &mut Scratch,
    ) -> Result<f64> {
        let d = &self.designs[k];
        let extra = (self.row(k, i), self.data.y()[i], self.params.s[(i, k)]);
        acc.log_xi(&d.inv_prior, d.log_det_v, Some(extra), self.hyper, scratch)
    }
}

/// Accumulates the given rows over the column set `cols`, with variance
/// scale `s_of(i)` for row `i`.
pub(crate) fn accumulate_rows(
    data: &Dataset,
    cols: &[usize],
    s_of: impl Fn(usize) -> f64,
    members: &[usize],
) -> ClusterAccumulator {
    let q = cols.len();
    let mut acc = ClusterAccumulator::new(q);
    let mut row = vec![0.0; q];
    for &i in members {
        fill_row(data, cols, i, &mut row);
        acc.add(&row, data.y()[i], s_of(i));
    }
    acc
}

/// Copies row `i` of the design restricted to `cols` into `row`.
pub(crate) fn fill_row(data: &Dataset, cols: &[usize], i: usize, row: &mut [f64]) {
    for (slot, &d) in row.iter_mut().zip(cols) {
        *slot = data.x()[(i, d)];
    }
}
