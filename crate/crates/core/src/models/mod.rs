//! Likelihood families behind a per-observation log-density interface, plus
//! synthetic stream generators and CSV ingestion.

mod csv_stream;
mod data;
mod gmm;
mod mixture;
mod quantile;

pub use csv_stream::{read_csv, CsvStream};
pub use data::{
    build_linear_covariance, gen_gmm_demo, gen_linear, gen_mixture, gen_nl1, gen_nl2,
    mixture_truth, Covariates, SyntheticStream,
};
pub use gmm::GmmDemo;
pub use mixture::{mixture_relabelings, MixtureLogistic};
pub use quantile::{check_loss, mean_fn_nl1, mean_fn_nl2, MeanFn, Quantile};

use serde::{Deserialize, Serialize};

/// One data point `y = (z, x)`: a response and a covariate vector. Models
/// without covariates read `z` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub z: f64,
    pub x: Vec<f64>,
}

impl Observation {
    pub fn scalar(z: f64) -> Self {
        Self { z, x: Vec::new() }
    }
}

/// A parametric family `θ ↦ log f_θ(y)`.
///
/// Implementations must return a finite value for every finite `θ` and
/// well-formed `y`; the particle systems treat anything else as an error.
pub trait Model: Send + Sync {
    /// Parameter dimension `d`.
    fn dim(&self) -> usize;

    /// Expected length of `Observation::x`.
    fn covariate_dim(&self) -> usize;

    fn log_density(&self, theta: &[f64], y: &Observation) -> f64;

    /// Log-densities of the row-major `points` (rows of length `dim()`) into
    /// `out`, one slot per row.
    fn log_density_rows(&self, points: &[f64], y: &Observation, out: &mut [f64]) {
        for (slot, theta) in out.iter_mut().zip(points.chunks_exact(self.dim())) {
            *slot = self.log_density(theta, y);
        }
    }

    /// Parameter vectors with identical likelihood to `theta`. The first entry
    /// is always `theta` itself.
    fn relabelings(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        vec![theta.to_vec()]
    }

    fn name(&self) -> String;
}

/// `N(θ, σ² I)` location model over `x`; used for oracle checks.
#[derive(Debug, Clone)]
pub struct GaussianLocation {
    pub dim: usize,
    pub sigma: f64,
}

impl GaussianLocation {
    pub fn new(dim: usize) -> Self {
        Self { dim, sigma: 1.0 }
    }
}

impl Model for GaussianLocation {
    fn dim(&self) -> usize {
        self.dim
    }

    fn covariate_dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, theta: &[f64], y: &Observation) -> f64 {
        let s2 = self.sigma * self.sigma;
        let sq: f64 = theta.iter().zip(&y.x).map(|(t, v)| (v - t) * (v - t)).sum();
        -0.5 * sq / s2 - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * s2).ln()
    }

    fn name(&self) -> String {
        format!("gaussian-location(d={})", self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_location_matches_density() {
        let m = GaussianLocation::new(1);
        let y = Observation { z: 0.0, x: vec![0.3] };
        let direct = (-(0.3f64 * 0.3) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((m.log_density(&[0.0], &y) - direct.ln()).abs() < 1e-14);
    }
}
