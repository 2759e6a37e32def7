//! Gaussian quadrature rules from the eigen-decomposition of the Jacobi matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::gamma;

/// Nodes and weights of an `n`-point rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let mut j = DMatrix::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Rule for `integral f(x) exp(-x^2) dx` over the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    let off: Vec<f64> = (1..n).map(|i| (i as f64 / 2.0).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &off, std::f64::consts::PI.sqrt())
}

/// Rule for `integral f(x) x^alpha exp(-x) dx` over the positive half-line.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule {
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|i| (i as f64 * (i as f64 + alpha)).sqrt()).collect();
    golub_welsch(&diag, &off, gamma(alpha + 1.0))
}

/// Expectation rule for `Gamma(shape, rate)`: `E f(X) ~ sum w_i f(x_i)`.
pub fn gamma_expectation(n: usize, shape: f64, rate: f64) -> Rule {
    let r = gauss_laguerre(n, shape - 1.0);
    let norm = gamma(shape);
    Rule {
        nodes: r.nodes.iter().map(|u| u / rate).collect(),
        weights: r.weights.iter().map(|w| w / norm).collect(),
    }
}
