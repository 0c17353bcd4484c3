//! Synthetic i.i.d. streams for the bundled experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::gmm::GmmDemo;
use super::mixture::MixtureLogistic;
use super::quantile::MeanFn;
use super::Observation;
use crate::error::{Error, Result};

/// Covariate law of a synthetic stream.
#[derive(Debug, Clone)]
pub enum Covariates {
    /// `N_2(0, [[4,−2],[−2,4]]) ⊗ Unif(0, 20)`.
    Nl1,
    /// `δ_1 ⊗ Unif(0,1)^{d−1}`.
    UnitIntercept { d: usize },
    /// `δ_1 ⊗ N_{d−1}(0, L Lᵀ)`; stores the lower Cholesky factor.
    GaussianIntercept { d: usize, chol: DMatrix<f64> },
}

impl Covariates {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Covariates::Nl1 => {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                // chol([[4,-2],[-2,4]]) = [[2,0],[-1,sqrt(3)]]
                vec![2.0 * z1, -z1 + 3f64.sqrt() * z2, rng.random_range(0.0..20.0)]
            }
            Covariates::UnitIntercept { d } => {
                let mut x = Vec::with_capacity(*d);
                x.push(1.0);
                x.extend((1..*d).map(|_| rng.random::<f64>()));
                x
            }
            Covariates::GaussianIntercept { d, chol } => {
                let z = DVector::from_iterator(d - 1, (1..*d).map(|_| rng.sample(StandardNormal)));
                let v = chol * z;
                let mut x = Vec::with_capacity(*d);
                x.push(1.0);
                x.extend(v.iter());
                x
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Law {
    Gmm { model: GmmDemo, theta: f64 },
    Quantile { mean: MeanFn, theta: Vec<f64>, cov: Covariates },
    Mixture { model: MixtureLogistic, theta: Vec<f64>, cov: Covariates },
}

/// Endless i.i.d. observation stream with its own random generator.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    law: Law,
    rng: ChaCha8Rng,
}

impl Iterator for SyntheticStream {
    type Item = Observation;

    fn next(&mut self) -> Option<Observation> {
        let rng = &mut self.rng;
        let obs = match &self.law {
            Law::Gmm { model, theta } => {
                let alphas = model.alphas();
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut j = alphas.len() - 1;
                for (k, a) in alphas.iter().enumerate() {
                    acc += a;
                    if u < acc {
                        j = k;
                        break;
                    }
                }
                let noise: f64 = rng.sample(StandardNormal);
                Observation::scalar(theta + model.offsets()[j] + model.sigma0_sq.sqrt() * noise)
            }
            Law::Quantile { mean, theta, cov } => {
                let x = cov.draw(rng);
                let noise: f64 = rng.sample(StandardNormal);
                Observation { z: mean.eval(theta, &x) + noise, x }
            }
            Law::Mixture { model, theta, cov } => {
                let x = cov.draw(rng);
                let p = model.prob_one(theta, &x);
                let z = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                Observation { z, x }
            }
        };
        Some(obs)
    }
}

pub fn gen_gmm_demo(theta_star: f64, rng: ChaCha8Rng) -> SyntheticStream {
    SyntheticStream {
        law: Law::Gmm { model: GmmDemo::default(), theta: theta_star },
        rng,
    }
}

/// Responses `z = μ(θ⋆, x) + N(0,1)` with the NL1 covariate law.
pub fn gen_nl1(theta_star: Vec<f64>, rng: ChaCha8Rng) -> SyntheticStream {
    SyntheticStream {
        law: Law::Quantile { mean: MeanFn::Nl1, theta: theta_star, cov: Covariates::Nl1 },
        rng,
    }
}

pub fn gen_nl2(theta_star: Vec<f64>, rng: ChaCha8Rng) -> SyntheticStream {
    let d = theta_star.len();
    SyntheticStream {
        law: Law::Quantile {
            mean: MeanFn::Nl2 { d },
            theta: theta_star,
            cov: Covariates::UnitIntercept { d },
        },
        rng,
    }
}

/// Linear quantile model with `x = (1, N_{d−1}(0, Σ_x))`; `sigma_x` is the
/// `(d−1)×(d−1)` covariance.
pub fn gen_linear(theta_star: Vec<f64>, sigma_x: &DMatrix<f64>, rng: ChaCha8Rng) -> Result<SyntheticStream> {
    let d = theta_star.len();
    if sigma_x.nrows() != d - 1 || sigma_x.ncols() != d - 1 {
        return Err(Error::Dimension { expected: d - 1, got: sigma_x.nrows() });
    }
    let chol = sigma_x
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .l();
    Ok(SyntheticStream {
        law: Law::Quantile {
            mean: MeanFn::Linear { d },
            theta: theta_star,
            cov: Covariates::GaussianIntercept { d, chol },
        },
        rng,
    })
}

/// Mixture of logistic regressions with `x = (1, N_{d_x−1}(0, I))`.
pub fn gen_mixture(model: MixtureLogistic, theta_star: Vec<f64>, rng: ChaCha8Rng) -> SyntheticStream {
    let dx = model.dx;
    SyntheticStream {
        law: Law::Mixture {
            model,
            theta: theta_star,
            cov: Covariates::GaussianIntercept { d: dx, chol: DMatrix::identity(dx - 1, dx - 1) },
        },
        rng,
    }
}

/// Covariance of the `d − 1` non-intercept covariates of the linear model:
/// two diagonal blocks `AᵀA` and `ÃᵀÃ` (sizes `⌊(d−1)/2⌋` and the rest) with
/// `rho` everywhere off the blocks, scaled by its largest entry. Entries of
/// `A`, `Ã` are `Unif(0,1)`; draws are rejected until the result is positive
/// definite.
pub fn build_linear_covariance(d: usize, rho: f64, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if d < 3 {
        return Err(Error::Config("linear model needs d >= 3".into()));
    }
    let m = d - 1;
    let a = m / 2;
    let b = m - a;
    for _ in 0..10_000 {
        let ma = DMatrix::from_fn(a, a, |_, _| rng.random::<f64>());
        let mb = DMatrix::from_fn(b, b, |_, _| rng.random::<f64>());
        let ata = ma.transpose() * &ma;
        let btb = mb.transpose() * &mb;
        let mut s = DMatrix::from_element(m, m, rho);
        s.view_mut((0, 0), (a, a)).copy_from(&ata);
        s.view_mut((a, a), (b, b)).copy_from(&btb);
        let max = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        s /= max;
        if s.clone().cholesky().is_some() {
            let eig = s.clone().symmetric_eigenvalues();
            if eig.iter().all(|&e| e > 1e-10) {
                return Ok(s);
            }
        }
    }
    Err(Error::Data("no positive definite covariance after 10^4 attempts".into()))
}

/// Seeded ground truth for the mixture experiments: the second component has
/// mixing weight 0.7, intercepts are `Unif(−3, −1)`, slopes `N(0, 1)`.
pub fn mixture_truth(model: &MixtureLogistic, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut theta = Vec::with_capacity(crate::models::Model::dim(model));
    let logit = (0.7f64 / 0.3).ln();
    theta.extend(std::iter::repeat_n(logit, model.components - 1));
    for _ in 0..model.components {
        theta.push(rng.random_range(-3.0..-1.0));
        for _ in 1..model.dx {
            theta.push(rng.sample(StandardNormal));
        }
    }
    theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn nl2_intercept_is_one() {
        let s = gen_nl2(vec![1.0; 7], rng(1));
        for o in s.take(100) {
            assert_eq!(o.x[0], 1.0);
            assert!(o.x[1..].iter().all(|v| (0.0..1.0).contains(v)));
        }
    }

    #[test]
    fn nl1_covariate_moments() {
        let n = 100_000;
        let s = gen_nl1(vec![70.0, 10.0, 3.0, 10.0], rng(2));
        let (mut s11, mut s22, mut s12, mut m3) = (0.0, 0.0, 0.0, 0.0);
        for o in s.take(n) {
            s11 += o.x[0] * o.x[0];
            s22 += o.x[1] * o.x[1];
            s12 += o.x[0] * o.x[1];
            m3 += o.x[2];
        }
        let n = n as f64;
        assert!((s11 / n - 4.0).abs() < 0.2);
        assert!((s22 / n - 4.0).abs() < 0.2);
        assert!((s12 / n + 2.0).abs() < 0.1);
        assert!((m3 / n - 10.0).abs() < 0.1);
    }

    #[test]
    fn mixture_truth_weight() {
        let m = MixtureLogistic::new(2, 3);
        let th = mixture_truth(&m, &mut rng(4));
        assert!((th[0] - 0.847_297_860_387_203_7).abs() < 1e-12);
        let w = m.mixing_weights(&th);
        assert!((w[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn linear_covariance_block_structure() {
        let s = build_linear_covariance(20, 0.0, &mut rng(5)).unwrap();
        assert_eq!(s.nrows(), 19);
        let max = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((max - 1.0).abs() < 1e-15);
        for i in 0..9 {
            for j in 9..19 {
                assert_eq!(s[(i, j)], 0.0);
            }
        }
        let s1 = build_linear_covariance(20, 1.0, &mut rng(5)).unwrap();
        assert!(s1[(0, 18)] > 0.0);
    }

    #[test]
    fn gmm_stream_centered_on_truth() {
        let s = gen_gmm_demo(0.0, rng(6));
        let mean: f64 = s.take(50_000).map(|o| o.z).sum::<f64>() / 50_000.0;
        assert!(mean.abs() < 0.02);
    }
}
