//! Two independent evaluations of the cluster marginal likelihood.
//!
//! The model for one cluster is `y | beta, w ~ N(X beta, w diag(s))`,
//! `beta | w ~ N(0, w V)`, `w ~ IG(a, b)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::quadrature::gauss_hermite;

/// One cluster's rows restricted to its included columns (intercept first).
#[derive(Clone, Debug)]
pub struct ClusterData {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub s: Vec<f64>,
    /// Prior variance of each included coefficient, before scaling by `w`.
    pub prior_var: Vec<f64>,
}

/// Marginal density as a multivariate t:
/// `y ~ t_{2a}(0, (b / a) (diag(s) + X V X'))`.
pub fn log_xi_student(c: &ClusterData, a: f64, b: f64) -> f64 {
    let n = c.y.len();
    if n == 0 {
        return 0.0;
    }
    let v = DMatrix::from_diagonal(&DVector::from_column_slice(&c.prior_var));
    let mut scale = &c.x * v * c.x.transpose();
    for i in 0..n {
        scale[(i, i)] += c.s[i];
    }
    scale *= b / a;
    let chol = scale.cholesky().expect("scale matrix is positive definite");
    let y = DVector::from_column_slice(&c.y);
    let maha = y.dot(&chol.solve(&y));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nu = 2.0 * a;
    let nf = n as f64;
    ln_gamma(0.5 * (nu + nf)) - ln_gamma(0.5 * nu) - 0.5 * nf * (nu * PI).ln() - 0.5 * log_det
        - 0.5 * (nu + nf) * (maha / nu).ln_1p()
}

/// Log of the joint density `N(y | X beta, w S) N(beta | 0, w V) IG(w | a, b)`.
fn log_joint(c: &ClusterData, beta: &DVector<f64>, w: f64, a: f64, b: f64) -> f64 {
    let n = c.y.len() as f64;
    let q = beta.len() as f64;
    let resid = DVector::from_column_slice(&c.y) - &c.x * beta;
    let lik: f64 = resid
        .iter()
        .zip(&c.s)
        .map(|(r, s)| -0.5 * (w * s).ln() - r * r / (2.0 * w * s))
        .sum::<f64>()
        - 0.5 * n * (2.0 * PI).ln();
    let prior: f64 = beta
        .iter()
        .zip(&c.prior_var)
        .map(|(bd, v)| -0.5 * (w * v).ln() - bd * bd / (2.0 * w * v))
        .sum::<f64>()
        - 0.5 * q * (2.0 * PI).ln();
    let ig = a * b.ln() - ln_gamma(a) - (a + 1.0) * w.ln() - b / w;
    lik + prior + ig
}

/// Marginal density by numerical integration: a tensor Gauss-Hermite rule
/// over `beta` (affinely mapped onto the integrand's curvature) nested in a
/// trapezoid rule over `ln w`. Returns `(ln xi, error estimate)`, the error
/// being the change when the `ln w` grid is halved.
pub fn log_xi_quadrature(c: &ClusterData, a: f64, b: f64, hermite_nodes: usize, grid: usize) -> (f64, f64) {
    let q = c.x.ncols();
    let n = c.y.len();
    let w_inv = DVector::from_iterator(n, c.s.iter().map(|s| 1.0 / s));
    let xw = DMatrix::from_fn(n, q, |i, j| c.x[(i, j)] * w_inv[i]);
    let mut h = c.x.transpose() * &xw;
    for d in 0..q {
        h[(d, d)] += 1.0 / c.prior_var[d];
    }
    let centre = h.clone().cholesky().expect("curvature is positive definite");
    let beta_hat = centre.solve(&(xw.transpose() * DVector::from_column_slice(&c.y)));
    // beta = beta_hat + sqrt(2 w) L^-T x  maps exp(-x'x) onto the integrand.
    let l_inv_t = centre.l().try_inverse().expect("triangular factor inverts").transpose();
    let log_det_map = -centre.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let rule = gauss_hermite(hermite_nodes);

    let inner = |w: f64| -> f64 {
        let scale = (2.0 * w).sqrt();
        let mut terms = Vec::with_capacity(hermite_nodes.pow(q as u32));
        let mut idx = vec![0usize; q];
        loop {
            let x = DVector::from_iterator(q, idx.iter().map(|&i| rule.nodes[i]));
            let beta = &beta_hat + &l_inv_t * &x * scale;
            let log_w: f64 = idx.iter().map(|&i| rule.weights[i].ln()).sum();
            terms.push(log_w + x.norm_squared() + log_joint(c, &beta, w, a, b));
            let mut d = 0;
            while d < q {
                idx[d] += 1;
                if idx[d] < hermite_nodes {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == q {
                break;
            }
        }
        crate::log_sum_exp(&terms) + 0.5 * q as f64 * (2.0 * w).ln() + log_det_map
    };

    assert!(grid % 2 == 0, "grid must be even");
    // Locate the bulk of the ln w integrand on a coarse scan, then refine.
    let integrand = |u: f64| inner(u.exp()) + u;
    let scan: Vec<(f64, f64)> = (0..=400).map(|i| -40.0 + 0.2 * i as f64).map(|u| (u, integrand(u))).collect();
    let peak = scan.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let inside: Vec<f64> = scan.iter().filter(|p| p.1 > peak - 80.0).map(|p| p.0).collect();
    let (lo, hi) = (inside[0] - 1.0, inside[inside.len() - 1] + 1.0);
    let step = (hi - lo) / grid as f64;
    let values: Vec<f64> = (0..=grid).map(|i| integrand(lo + step * i as f64)).collect();
    let trapezoid = |stride: usize| -> f64 {
        let h = step * stride as f64;
        let mut terms: Vec<f64> = values.iter().step_by(stride).copied().collect();
        let last = terms.len() - 1;
        terms[0] -= std::f64::consts::LN_2;
        terms[last] -= std::f64::consts::LN_2;
        crate::log_sum_exp(&terms) + h.ln()
    };
    let fine = trapezoid(1);
    let coarse = trapezoid(2);
    (fine, (fine - coarse).abs())
}
