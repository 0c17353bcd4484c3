use serde::{Deserialize, Serialize};

use super::{Model, Observation};

/// Check loss `ρ_q(u) = (|u| + (2q − 1) u) / 2`.
pub fn check_loss(u: f64, q: f64) -> f64 {
    0.5 * (u.abs() + (2.0 * q - 1.0) * u)
}

/// Sigmoidal growth curve in four parameters with three covariates.
pub fn mean_fn_nl1(theta: &[f64], x: &[f64]) -> f64 {
    let mut scale = theta[2];
    if scale.abs() < 1e-12 {
        scale = if scale < 0.0 { -1e-12 } else { 1e-12 };
    }
    let expo = ((theta[1] + x[1] - x[2]) / scale).max(-40.0);
    theta[3] + (theta[0] - theta[3] + x[0]) / (1.0 + expo.exp())
}

/// `Σ_i (exp(−x_i θ_i²) + x_i θ_{d−i+1})`.
pub fn mean_fn_nl2(theta: &[f64], x: &[f64]) -> f64 {
    let d = theta.len();
    (0..d)
        .map(|i| (-x[i] * theta[i] * theta[i]).exp() + x[i] * theta[d - 1 - i])
        .sum()
}

fn mean_fn_linear(theta: &[f64], x: &[f64]) -> f64 {
    crate::numeric::dot(theta, x)
}

/// Conditional quantile curve `μ(θ, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeanFn {
    Nl1,
    Nl2 { d: usize },
    Linear { d: usize },
}

impl MeanFn {
    pub fn dim(&self) -> usize {
        match *self {
            MeanFn::Nl1 => 4,
            MeanFn::Nl2 { d } | MeanFn::Linear { d } => d,
        }
    }

    pub fn covariate_dim(&self) -> usize {
        match *self {
            MeanFn::Nl1 => 3,
            MeanFn::Nl2 { d } | MeanFn::Linear { d } => d,
        }
    }

    #[inline]
    pub fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        match self {
            MeanFn::Nl1 => mean_fn_nl1(theta, x),
            MeanFn::Nl2 { .. } => mean_fn_nl2(theta, x),
            MeanFn::Linear { .. } => mean_fn_linear(theta, x),
        }
    }
}

/// Asymmetric-Laplace working likelihood for the `q`-th conditional quantile:
/// `log f_θ(z | x) = ln(q(1−q)) − ρ_q(z − μ(θ, x))`.
#[derive(Debug, Clone)]
pub struct Quantile {
    pub q: f64,
    pub mean: MeanFn,
    log_norm: f64,
}

impl Quantile {
    pub fn new(q: f64, mean: MeanFn) -> Self {
        assert!(q > 0.0 && q < 1.0, "quantile level must lie in (0,1)");
        Self {
            q,
            mean,
            log_norm: (q * (1.0 - q)).ln(),
        }
    }

    /// Same likelihood with the normalizing constant replaced by 1.
    pub fn unnormalized(q: f64, mean: MeanFn) -> Self {
        Self {
            log_norm: 0.0,
            ..Self::new(q, mean)
        }
    }
}

impl Model for Quantile {
    fn dim(&self) -> usize {
        self.mean.dim()
    }

    fn covariate_dim(&self) -> usize {
        self.mean.covariate_dim()
    }

    #[inline]
    fn log_density(&self, theta: &[f64], y: &Observation) -> f64 {
        self.log_norm - check_loss(y.z - self.mean.eval(theta, &y.x), self.q)
    }

    fn log_density_rows(&self, points: &[f64], y: &Observation, out: &mut [f64]) {
        let d = self.dim();
        let rows = points.chunks_exact(d);
        let value = |mu: f64| self.log_norm - check_loss(y.z - mu, self.q);
        match self.mean {
            MeanFn::Linear { .. } => {
                for (slot, theta) in out.iter_mut().zip(rows) {
                    *slot = value(crate::numeric::dot(theta, &y.x));
                }
            }
            MeanFn::Nl1 => {
                for (slot, theta) in out.iter_mut().zip(rows) {
                    *slot = value(mean_fn_nl1(theta, &y.x));
                }
            }
            MeanFn::Nl2 { .. } => {
                for (slot, theta) in out.iter_mut().zip(rows) {
                    *slot = value(mean_fn_nl2(theta, &y.x));
                }
            }
        }
    }

    fn name(&self) -> String {
        format!("quantile(q={}, {:?})", self.q, self.mean)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_loss_values() {
        assert!((check_loss(1.0, 0.05) - 0.05).abs() < 1e-15);
        assert!((check_loss(-1.0, 0.05) - 0.95).abs() < 1e-15);
        assert_eq!(check_loss(0.0, 0.3), 0.0);
    }

    #[test]
    fn zero_residual_gives_normalizer() {
        let m = Quantile::new(0.3, MeanFn::Linear { d: 2 });
        let y = Observation { z: 1.0 * 2.0 + 3.0 * 0.5, x: vec![2.0, 0.5] };
        let v = m.log_density(&[1.0, 3.0], &y);
        assert!((v - (0.3f64 * 0.7).ln()).abs() < 1e-14);
    }

    #[test]
    fn median_is_half_absolute() {
        let m = Quantile::new(0.5, MeanFn::Linear { d: 1 });
        for u in [-2.5, 0.7, 4.0] {
            let y = Observation { z: u, x: vec![0.0] };
            assert!((m.log_density(&[0.0], &y) - (0.25f64.ln() - u.abs() / 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn nl1_values() {
        let th = [70.0, 10.0, 3.0, 10.0];
        assert!((mean_fn_nl1(&th, &[0.0, 0.0, 10.0]) - 40.0).abs() < 1e-12);
        // exponent -> -inf gives theta_1 + x_1; -> +inf gives theta_4
        assert!((mean_fn_nl1(&th, &[1.0, 0.0, 1e4]) - 71.0).abs() < 1e-9);
        assert!((mean_fn_nl1(&th, &[1.0, 1e4, 0.0]) - 10.0).abs() < 1e-9);
        // scale guard
        let g = mean_fn_nl1(&[70.0, 10.0, 0.0, 10.0], &[0.0, 0.0, 5.0]);
        assert!(g.is_finite());
    }

    #[test]
    fn nl2_values() {
        let d = 5;
        let ones = vec![1.0; d];
        let v = mean_fn_nl2(&ones, &ones);
        assert!((v - d as f64 * ((-1.0f64).exp() + 1.0)).abs() < 1e-12);
        assert!((mean_fn_nl2(&[0.3, -2.0, 1.0, 4.0, 0.1], &[0.0; 5]) - 5.0).abs() < 1e-15);
    }
}
