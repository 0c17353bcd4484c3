use super::{Model, Observation};
use crate::numeric::{log_sigmoid, sigmoid};

/// Mixture of `J` logistic regressions for a binary response.
///
/// Parameter layout: `J − 1` mixing logits (the first component's logit is
/// pinned to 0), followed by `J` regression blocks of length `d_x`.
#[derive(Debug, Clone)]
pub struct MixtureLogistic {
    pub components: usize,
    pub dx: usize,
}

impl MixtureLogistic {
    pub fn new(components: usize, dx: usize) -> Self {
        assert!(components >= 1 && dx >= 1);
        Self { components, dx }
    }

    fn logits(&self, theta: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1..self.components].copy_from_slice(&theta[..self.components - 1]);
    }

    fn block<'a>(&self, theta: &'a [f64], j: usize) -> &'a [f64] {
        let start = self.components - 1 + j * self.dx;
        &theta[start..start + self.dx]
    }

    /// Mixing weights `softmax(0, θ_1, ..., θ_{J−1})`.
    pub fn mixing_weights(&self, theta: &[f64]) -> Vec<f64> {
        let mut l = vec![0.0; self.components];
        self.logits(theta, &mut l);
        crate::numeric::softmax(&l)
    }

    /// `P(Z = 1 | x)`.
    pub fn prob_one(&self, theta: &[f64], x: &[f64]) -> f64 {
        let w = self.mixing_weights(theta);
        (0..self.components)
            .map(|j| {
                let eta: f64 = self.block(theta, j).iter().zip(x).map(|(b, v)| b * v).sum();
                w[j] * sigmoid(eta)
            })
            .sum()
    }
}

impl Model for MixtureLogistic {
    fn dim(&self) -> usize {
        (self.dx + 1) * self.components - 1
    }

    fn covariate_dim(&self) -> usize {
        self.dx
    }

    fn log_density(&self, theta: &[f64], y: &Observation) -> f64 {
        let j_max = self.components;
        let mut buf = [0.0f64; 16];
        let mut heap;
        let logits: &mut [f64] = if j_max <= 16 {
            &mut buf[..j_max]
        } else {
            heap = vec![0.0; j_max];
            &mut heap
        };
        self.logits(theta, logits);
        let lmax = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lnorm = lmax + logits.iter().map(|l| (l - lmax).exp()).sum::<f64>().ln();
        let sign = if y.z >= 0.5 { 1.0 } else { -1.0 };
        // log mixture weight + log component probability, reused in place
        for (j, l) in logits.iter_mut().enumerate() {
            let eta: f64 = self.block(theta, j).iter().zip(&y.x).map(|(b, v)| b * v).sum();
            *l = *l - lnorm + log_sigmoid(sign * eta);
        }
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    fn relabelings(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        mixture_relabelings(theta, self.components, self.dx)
    }

    fn name(&self) -> String {
        format!("mixture-logistic(J={}, dx={})", self.components, self.dx)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// All `J!` parameter vectors describing the same mixture as `theta`, the
/// identity first. Component `k` of a relabeled vector is component `σ(k)`
/// of `theta`; mixing logits are re-anchored so the first stays 0.
pub fn mixture_relabelings(theta: &[f64], components: usize, dx: usize) -> Vec<Vec<f64>> {
    let mut full = vec![0.0; components];
    full[1..].copy_from_slice(&theta[..components - 1]);
    permutations(components)
        .into_iter()
        .map(|perm| {
            let anchor = full[perm[0]];
            let mut out = Vec::with_capacity(theta.len());
            out.extend(perm[1..].iter().map(|&src| full[src] - anchor));
            for &src in &perm {
                let start = components - 1 + src * dx;
                out.extend_from_slice(&theta[start..start + dx]);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn naive(theta: &[f64], z: f64, x: &[f64], j: usize, dx: usize) -> f64 {
        let mut logits = vec![0.0];
        logits.extend_from_slice(&theta[..j - 1]);
        let denom: f64 = logits.iter().map(|l| l.exp()).sum();
        let mut total = 0.0;
        for c in 0..j {
            let b = &theta[j - 1 + c * dx..j - 1 + (c + 1) * dx];
            let eta: f64 = b.iter().zip(x).map(|(u, v)| u * v).sum();
            let e = (-eta).exp();
            total += logits[c].exp() / denom * (z + (1.0 - z) * e) / (1.0 + e);
        }
        total.ln()
    }

    #[test]
    fn matches_naive_formula() {
        let m = MixtureLogistic::new(2, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let theta: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x = vec![1.0, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            for z in [0.0, 1.0] {
                let y = Observation { z, x: x.clone() };
                let a = m.log_density(&theta, &y);
                let b = naive(&theta, z, &x, 2, 3);
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_component_is_logistic() {
        let m = MixtureLogistic::new(1, 2);
        let theta = [0.4, -1.3];
        let y = Observation { z: 1.0, x: vec![1.0, 2.0] };
        let eta = 0.4 - 2.6;
        assert!((m.log_density(&theta, &y) - log_sigmoid(eta)).abs() < 1e-14);
    }

    #[test]
    fn saturated_predictor_gives_zero() {
        let m = MixtureLogistic::new(2, 1);
        let y = Observation { z: 1.0, x: vec![1.0] };
        assert!(m.log_density(&[0.3, 900.0, 800.0], &y).abs() < 1e-12);
    }

    #[test]
    fn two_component_swap() {
        let theta = [0.8, 1.0, 2.0, -1.0, -2.0];
        let r = mixture_relabelings(&theta, 2, 2);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0], theta.to_vec());
        assert_eq!(r[1], vec![-0.8, -1.0, -2.0, 1.0, 2.0]);
    }

    #[test]
    fn relabeling_count_and_identity() {
        let theta: Vec<f64> = (0..(3 * 3 - 1)).map(|i| i as f64 * 0.1).collect();
        let r = mixture_relabelings(&theta, 3, 2);
        assert_eq!(r.len(), 6);
        assert_eq!(r[0], theta);
    }
}
