//! Gaussian-process surrogate over masks embedded as hypercube vertices,
//! with an expected-improvement acquisition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const JITTER: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    pub length_scale: f64,
    pub xi: f64,
    observations: Vec<(Vec<f64>, f64)>,
}

/// A fitted posterior.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    xs: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
    best: f64,
    length_scale: f64,
    xi: f64,
}

impl GpSurrogate {
    pub fn new(length_scale: f64, xi: f64) -> Self {
        GpSurrogate {
            length_scale,
            xi,
            observations: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[(Vec<f64>, f64)] {
        &self.observations
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.observations.iter().any(|(o, _)| o.as_slice() == x)
    }

    /// Records a score; a repeated point has its score replaced.
    pub fn observe(&mut self, x: Vec<f64>, y: f64) {
        match self.observations.iter_mut().find(|(o, _)| *o == x) {
            Some(entry) => entry.1 = y,
            None => self.observations.push((x, y)),
        }
    }

    pub fn clear(&mut self) {
        self.observations.clear();
    }

    /// Fits the posterior on normalized scores. `None` before the first
    /// observation or if the kernel matrix is not positive definite.
    pub fn fit(&self) -> Option<GpPosterior> {
        let n = self.observations.len();
        if n == 0 {
            return None;
        }
        let ys: Vec<f64> = self.observations.iter().map(|(_, y)| *y).collect();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let xs: Vec<Vec<f64>> = self.observations.iter().map(|(x, _)| x.clone()).collect();
        let k = DMatrix::from_fn(n, n, |i, j| {
            rbf(&xs[i], &xs[j], self.length_scale) + if i == j { JITTER } else { 0.0 }
        });
        let chol = Cholesky::new(k)?;
        let yn = DVector::from_iterator(n, ys.iter().map(|y| (y - y_mean) / y_std));
        let alpha = chol.solve(&yn);
        Some(GpPosterior {
            xs,
            chol,
            alpha,
            y_mean,
            y_std,
            best: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            length_scale: self.length_scale,
            xi: self.xi,
        })
    }
}

fn rbf(a: &[f64], b: &[f64], ls: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-d2 / (2.0 * ls * ls)).exp()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

impl GpPosterior {
    pub fn best_observed(&self) -> f64 {
        self.best
    }

    /// Posterior mean and standard deviation in score units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kstar = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| rbf(x, xi, self.length_scale)));
        let mu_n = kstar.dot(&self.alpha);
        let w = self.chol.solve(&kstar);
        let var_n = (1.0 - kstar.dot(&w)).max(0.0);
        (self.y_mean + self.y_std * mu_n, self.y_std * var_n.sqrt())
    }

    pub fn expected_improvement(&self, x: &[f64]) -> f64 {
        let (mu, sigma) = self.predict(x);
        ei(mu - self.best - self.xi, sigma)
    }

    /// Expected improvement and its gradient with respect to `x`.
    pub fn expected_improvement_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let n = self.xs.len();
        let dim = x.len();
        let ls2 = self.length_scale * self.length_scale;
        let kstar = DVector::from_iterator(n, self.xs.iter().map(|xi| rbf(x, xi, self.length_scale)));
        let mu_n = kstar.dot(&self.alpha);
        let w = self.chol.solve(&kstar);
        let var_n = (1.0 - kstar.dot(&w)).max(0.0);
        let sigma_n = var_n.sqrt();
        let mu = self.y_mean + self.y_std * mu_n;
        let sigma = self.y_std * sigma_n;
        let improve = mu - self.best - self.xi;
        let value = ei(improve, sigma);
        if sigma < 1e-9 {
            return (value, vec![0.0; dim]);
        }
        let z = improve / sigma;
        let nd = std_normal();
        let (d_mu_coef, d_sigma_coef) = (nd.cdf(z), nd.pdf(z));

        let mut grad = vec![0.0; dim];
        for (j, g) in grad.iter_mut().enumerate() {
            let mut dmu = 0.0;
            let mut dvar = 0.0;
            for i in 0..n {
                let dk = -kstar[i] * (x[j] - self.xs[i][j]) / ls2;
                dmu += self.alpha[i] * dk;
                dvar += -2.0 * w[i] * dk;
            }
            let dsigma_n = dvar / (2.0 * sigma_n);
            *g = d_mu_coef * self.y_std * dmu + d_sigma_coef * self.y_std * dsigma_n;
        }
        (value, grad)
    }
}

fn ei(improve: f64, sigma: f64) -> f64 {
    if sigma < 1e-9 {
        return improve.max(0.0);
    }
    let z = improve / sigma;
    let nd = std_normal();
    improve * nd.cdf(z) + sigma * nd.pdf(z)
}
