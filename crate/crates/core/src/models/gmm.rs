use super::{Model, Observation};
use crate::numeric::log_sum_exp;

/// One-dimensional location family whose density is a `J`-component Gaussian
/// mixture with components at `θ + k`, `k = -(J-1)/2, ..., (J-1)/2`, all of
/// variance `σ0²`, weighted by a discretized `N(0, σ1²)` profile. The
/// log-likelihood has a local mode at every integer offset from the truth.
#[derive(Debug, Clone)]
pub struct GmmDemo {
    pub components: usize,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    offsets: Vec<f64>,
    log_alpha: Vec<f64>,
}

impl Default for GmmDemo {
    fn default() -> Self {
        Self::new(21, 0.01, 0.64)
    }
}

impl GmmDemo {
    pub fn new(components: usize, sigma0_sq: f64, sigma1_sq: f64) -> Self {
        let half = (components as f64 - 1.0) / 2.0;
        let offsets: Vec<f64> = (0..components).map(|j| j as f64 - half).collect();
        let raw: Vec<f64> = offsets
            .iter()
            .map(|o| -0.5 * o * o / sigma1_sq)
            .collect();
        let norm = log_sum_exp(&raw);
        let log_alpha = raw.iter().map(|r| r - norm).collect();
        Self {
            components,
            sigma0_sq,
            sigma1_sq,
            offsets,
            log_alpha,
        }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.log_alpha.iter().map(|l| l.exp()).collect()
    }

    pub fn log_f(&self, theta: f64, y: f64) -> f64 {
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * self.sigma0_sq).ln();
        let mut max = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 64];
        let terms: &mut [f64] = if self.components <= 64 {
            &mut terms[..self.components]
        } else {
            return self.log_f_alloc(theta, y);
        };
        for (j, slot) in terms.iter_mut().enumerate() {
            let r = y - theta - self.offsets[j];
            *slot = self.log_alpha[j] - 0.5 * r * r / self.sigma0_sq;
            max = max.max(*slot);
        }
        let sum: f64 = terms.iter().map(|v| (v - max).exp()).sum();
        log_norm + max + sum.ln()
    }

    fn log_f_alloc(&self, theta: f64, y: f64) -> f64 {
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * self.sigma0_sq).ln();
        let terms: Vec<f64> = (0..self.components)
            .map(|j| {
                let r = y - theta - self.offsets[j];
                self.log_alpha[j] - 0.5 * r * r / self.sigma0_sq
            })
            .collect();
        log_norm + log_sum_exp(&terms)
    }
}

impl Model for GmmDemo {
    fn dim(&self) -> usize {
        1
    }

    fn covariate_dim(&self) -> usize {
        0
    }

    fn log_density(&self, theta: &[f64], y: &Observation) -> f64 {
        self.log_f(theta[0], y.z)
    }

    fn name(&self) -> String {
        format!("gmm-demo(J={})", self.components)
    }
}
