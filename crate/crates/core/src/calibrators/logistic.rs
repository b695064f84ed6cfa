//! Ridge-regularized logistic regression by damped Newton iterations.
//!
//! Objective: `mean(loss(sigmoid(x . w), y)) + ridge/2 * |w|^2`, where the loss is
//! cross-entropy or squared error. Squared error uses the Gauss-Newton Hessian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkLoss {
    #[default]
    CrossEntropy,
    Brier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub ridge: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub loss: LinkLoss,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            max_iters: 100,
            grad_tol: 1e-8,
            loss: LinkLoss::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Numerically stable `log(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    opts: SolverOptions,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn margin(row: &[f64], w: &DVector<f64>) -> f64 {
        row.iter().zip(w.iter()).map(|(x, w)| x * w).sum()
    }

    fn objective(&self, w: &DVector<f64>) -> f64 {
        let n = self.rows.len() as f64;
        let data: f64 = self
            .rows
            .iter()
            .zip(self.labels)
            .map(|(row, &y)| {
                let z = Self::margin(row, w);
                match self.opts.loss {
                    LinkLoss::CrossEntropy => softplus(z) - if y { z } else { 0.0 },
                    LinkLoss::Brier => (sigmoid(z) - if y { 1.0 } else { 0.0 }).powi(2),
                }
            })
            .sum();
        data / n + 0.5 * self.opts.ridge * w.norm_squared()
    }

    fn gradient_and_hessian(&self, w: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let n = self.rows.len() as f64;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for (row, &y) in self.rows.iter().zip(self.labels) {
            let p = sigmoid(Self::margin(row, w));
            let t = if y { 1.0 } else { 0.0 };
            let s = p * (1.0 - p);
            let (g, h) = match self.opts.loss {
                LinkLoss::CrossEntropy => (p - t, s),
                LinkLoss::Brier => (2.0 * (p - t) * s, 2.0 * s * s),
            };
            for a in 0..d {
                grad[a] += g * row[a];
                for b in a..d {
                    hess[(a, b)] += h * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        grad /= n;
        hess /= n;
        grad += w * self.opts.ridge;
        for a in 0..d {
            hess[(a, a)] += self.opts.ridge;
        }
        (grad, hess)
    }
}

fn newton_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let mut damping = 0.0;
    loop {
        let mut h = hess.clone();
        for a in 0..h.nrows() {
            h[(a, a)] += damping;
        }
        if let Some(chol) = h.cholesky() {
            return chol.solve(grad);
        }
        damping = if damping == 0.0 { 1e-10 } else { damping * 10.0 };
        if damping > 1e6 {
            return grad.clone();
        }
    }
}

/// Fits weights for feature rows (intercept column supplied by the caller).
pub fn fit_logistic(rows: &[Vec<f64>], labels: &[bool], opts: SolverOptions) -> LogisticFit {
    let problem = Problem { rows, labels, opts };
    let d = problem.dim();
    let mut w = DVector::zeros(d);
    let mut f = problem.objective(&w);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let (grad, hess) = problem.gradient_and_hessian(&w);
        grad_norm = grad.norm();
        if grad_norm <= opts.grad_tol {
            return LogisticFit {
                weights: w.iter().copied().collect(),
                iterations: iter,
                grad_norm,
                converged: true,
            };
        }
        let step = newton_direction(hess, &grad);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand = &w - &step * t;
            let fc = problem.objective(&cand);
            if fc <= f - 1e-4 * t * slope {
                w = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No further decrease representable in floating point.
            break;
        }
    }
    let (grad, _) = problem.gradient_and_hessian(&w);
    grad_norm = grad_norm.min(grad.norm());
    LogisticFit {
        weights: w.iter().copied().collect(),
        iterations,
        grad_norm,
        converged: grad_norm <= opts.grad_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn intercept_only_matches_base_rate() {
        let rows = vec![vec![1.0]; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 8).collect();
        let fit = fit_logistic(&rows, &labels, SolverOptions::default());
        assert!(fit.converged);
        assert!((sigmoid(fit.weights[0]) - 0.8).abs() < 1e-5);
    }

    #[test]
    fn recovers_planted_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (1.5, -0.5);
        let rows: Vec<Vec<f64>> = (0..20_000).map(|_| vec![rng.gen_range(-3.0..3.0), 1.0]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| rng.gen::<f64>() < sigmoid(a * r[0] + b)).collect();
        let fit = fit_logistic(&rows, &labels, SolverOptions::default());
        assert!(fit.converged, "{fit:?}");
        assert!((fit.weights[0] - a).abs() < 0.1);
        assert!((fit.weights[1] - b).abs() < 0.1);
    }

    #[test]
    fn separable_data_stays_finite() {
        let rows = vec![vec![-1.0, 1.0], vec![-0.5, 1.0], vec![0.5, 1.0], vec![1.0, 1.0]];
        let labels = [false, false, true, true];
        let fit = fit_logistic(&rows, &labels, SolverOptions::default());
        assert!(fit.weights.iter().all(|w| w.is_finite()));
        assert!(fit.weights[0] > 0.0);
    }

    #[test]
    fn brier_loss_intercept() {
        let rows = vec![vec![1.0]; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 3).collect();
        let opts = SolverOptions {
            loss: LinkLoss::Brier,
            ..SolverOptions::default()
        };
        let fit = fit_logistic(&rows, &labels, opts);
        assert!((sigmoid(fit.weights[0]) - 0.3).abs() < 1e-4);
    }
}
