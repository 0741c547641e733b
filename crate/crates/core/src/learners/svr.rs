//! Epsilon-insensitive support vector regression with an RBF kernel.
//!
//! The dual is written over 2n box-constrained variables β = [α; α*] with
//! signs z = [+1; −1]:
//!
//! ```text
//! min ½ βᵀQβ + pᵀβ   s.t.  zᵀβ = 0,  0 ≤ β ≤ C
//! Q_st = z_s z_t k(x_s, x_t),  p = [ε − y; ε + y]
//! ```
//!
//! and solved by sequential minimal optimization on the maximal violating
//! pair. The regression function is `f(x) = Σ (αᵢ − αᵢ*) k(xᵢ, x) + b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Absolute(f64),
    /// `factor / n_features`.
    PerFeature(f64),
}

impl Gamma {
    pub fn resolve(self, n_features: usize) -> f64 {
        match self {
            Gamma::Absolute(g) => g,
            Gamma::PerFeature(f) => f / n_features.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Gamma,
    /// Stop when the maximal KKT violation falls below this.
    pub tol: f64,
    /// Iteration budget, in multiples of the number of dual variables.
    pub max_passes: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            gamma: Gamma::PerFeature(1.0),
            tol: 1e-3,
            max_passes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// αᵢ − αᵢ* for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
    pub epsilon: f64,
    pub n_features: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective at the returned iterate.
    pub objective: f64,
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
    (-gamma * d2).exp()
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(self.gamma, sv, x))
            .sum::<f64>()
            + self.bias
    }
}

/// Full solver output, including the dual variables for every training row.
#[derive(Debug, Clone)]
pub struct SvrSolution {
    pub model: SvrModel,
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
}

pub fn fit_svr(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    solve_svr(x, y, params).map(|s| s.model)
}

/// Kernel matrix of the training rows.
pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        k[i][i] = 1.0;
        for j in 0..i {
            let v = rbf(gamma, &x[i], &x[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

const TAU: f64 = 1e-12;

pub fn solve_svr(x: &[Vec<f64>], y: &[f64], params: &SvrParams) -> Result<SvrSolution> {
    let n = y.len();
    if n < 2 {
        return Err(Error::TooFewSpeakers { needed: 2, have: n });
    }
    if x.len() != n {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: n,
        });
    }
    if !(params.c > 0.0) || params.epsilon < 0.0 {
        return Err(Error::Config(format!(
            "SVR needs C > 0 and epsilon >= 0 (got C={}, epsilon={})",
            params.c, params.epsilon
        )));
    }
    let d = x[0].len();
    let gamma = params.gamma.resolve(d);
    let kmat = kernel_matrix(x, gamma);
    let c = params.c;
    let l = 2 * n;
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();

    let mut beta = vec![0.0; l];
    let mut grad = p.clone();
    let max_iter = params.max_passes.max(1).saturating_mul(l);
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |t: usize, b: f64| if t < n { b < c } else { b > 0.0 };
    let in_low = |t: usize, b: f64| if t < n { b > 0.0 } else { b < c };

    while iterations < max_iter {
        // Maximal violating pair.
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..l {
            let v = -z(t) * grad[t];
            if in_up(t, beta[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(t, beta[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (yi, yj) = (z(i), z(j));
        let kij = kmat[i % n][j % n];
        let qij = yi * yj * kij;
        let (old_i, old_j) = (beta[i], beta[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let mut quad = 2.0 + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = 2.0 - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        ai = ai.clamp(0.0, c);
        aj = aj.clamp(0.0, c);
        beta[i] = ai;
        beta[j] = aj;

        let di = ai - old_i;
        let dj = aj - old_j;
        let row_i = &kmat[i % n];
        let row_j = &kmat[j % n];
        for t in 0..l {
            let zt = z(t);
            let r = t % n;
            grad[t] += zt * (yi * row_i[r] * di + yj * row_j[r] * dj);
        }
    }

    // Bias: average over free variables, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = z(t) * grad[t];
        if beta[t] >= c {
            if z(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if z(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            free_sum += yg;
        }
    }
    let rho = if n_free > 0 {
        free_sum / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    let objective = 0.5 * (0..l).map(|t| beta[t] * (grad[t] + p[t])).sum::<f64>();
    let alpha = beta[..n].to_vec();
    let alpha_star = beta[n..].to_vec();
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for i in 0..n {
        let coef = alpha[i] - alpha_star[i];
        if coef != 0.0 {
            support_vectors.push(x[i].clone());
            dual_coef.push(coef);
        }
    }
    Ok(SvrSolution {
        model: SvrModel {
            support_vectors,
            dual_coef,
            bias: -rho,
            gamma,
            c,
            epsilon: params.epsilon,
            n_features: d,
            converged,
            iterations,
            objective,
        },
        alpha,
        alpha_star,
    })
}

/// Dual objective ½ (α−α*)ᵀK(α−α*) + ε Σ(α+α*) − Σ y(α−α*).
pub fn dual_objective(kmat: &[Vec<f64>], y: &[f64], epsilon: f64, alpha: &[f64], alpha_star: &[f64]) -> f64 {
    let n = y.len();
    let coef: Vec<f64> = (0..n).map(|i| alpha[i] - alpha_star[i]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += coef[i] * kmat[i][j] * coef[j];
        }
    }
    0.5 * quad + epsilon * (0..n).map(|i| alpha[i] + alpha_star[i]).sum::<f64>()
        - (0..n).map(|i| y[i] * coef[i]).sum::<f64>()
}
