//! Weighted finite-support distributions over the parameter space and their
//! per-observation Bayes updates.
//!
//! Weights live in the log domain and are only normalized when a query needs
//! them; between perturbations a block can run for 10^5+ observations, far
//! past where raw likelihood products underflow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, Observation};
use crate::norm::in_ball;
use crate::numeric::{argmax, softmax_into};

/// Minimum number of particles handed to one rayon task.
const PAR_MIN_LEN: usize = 512;

/// Support points (row-major, `len × dim`) with unnormalized log-weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    dim: usize,
    points: Vec<f64>,
    log_weights: Vec<f64>,
    /// Low-order parts of the log-weights, which are accumulated in
    /// double-double arithmetic.
    #[serde(default)]
    log_weights_lo: Vec<f64>,
    /// Observation count at the last weight reset.
    block_start_t: u64,
}

impl ParticleSystem {
    /// Uniform-weight system on the given row-major points.
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "particle buffer of length {} does not hold whole points of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        Ok(Self { dim, points, log_weights: vec![0.0; n], log_weights_lo: vec![0.0; n], block_start_t: 0 })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Config("ragged particle rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    /// Rebuilds a system from a checkpoint.
    pub fn from_parts(dim: usize, points: Vec<f64>, log_weights: Vec<f64>, block_start_t: u64) -> Result<Self> {
        let mut sys = Self::new(dim, points)?;
        if log_weights.len() != sys.len() {
            return Err(Error::Dimension { expected: sys.len(), got: log_weights.len() });
        }
        sys.log_weights = log_weights;
        sys.block_start_t = block_start_t;
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, n: usize) -> &[f64] {
        &self.points[n * self.dim..(n + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn block_start_t(&self) -> u64 {
        self.block_start_t
    }

    /// `log f_θ(y)` for every particle, written into `out`. Slots are
    /// independent, so the result does not depend on the thread count.
    pub fn log_likelihoods(&self, model: &dyn Model, y: &Observation, out: &mut Vec<f64>) -> Result<()> {
        if model.dim() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: model.dim() });
        }
        eval_log_densities(model, &self.points, self.dim, y, out)
    }

    /// Adds precomputed per-particle log-likelihood increments.
    pub fn apply_increments(&mut self, inc: &[f64]) {
        debug_assert_eq!(inc.len(), self.len());
        if self.log_weights_lo.len() != self.log_weights.len() {
            self.log_weights_lo = vec![0.0; self.log_weights.len()];
        }
        for ((hi, lo), &d) in self.log_weights.iter_mut().zip(&mut self.log_weights_lo).zip(inc) {
            let (s, e) = two_sum(*hi, d);
            if !s.is_finite() {
                (*hi, *lo) = (s, 0.0);
                continue;
            }
            let (h, l) = fast_two_sum(s, *lo + e);
            *hi = h;
            *lo = l;
        }
    }

    /// `w_t^n = w_{t-1}^n f_{θ^n}(y)`. On a non-finite log-density the
    /// observation is rejected and the weights are left untouched.
    pub fn bayes_update(&mut self, y: &Observation, model: &dyn Model) -> Result<()> {
        let mut inc = Vec::with_capacity(self.len());
        self.log_likelihoods(model, y, &mut inc)?;
        self.apply_increments(&inc);
        Ok(())
    }

    /// All weights back to 1 at observation count `t`.
    pub fn reset_weights(&mut self, t: u64) {
        self.log_weights.iter_mut().for_each(|w| *w = 0.0);
        self.log_weights_lo.iter_mut().for_each(|w| *w = 0.0);
        self.block_start_t = t;
    }

    /// Replace the support and reset the weights.
    pub fn replace_support(&mut self, points: Vec<f64>, t: u64) -> Result<()> {
        if points.len() != self.points.len() {
            return Err(Error::Dimension { expected: self.points.len(), got: points.len() });
        }
        self.points = points;
        self.reset_weights(t);
        Ok(())
    }

    /// Normalized weights, using the low-order log-weight words so long blocks
    /// keep full relative precision.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        if self.is_empty() {
            return w;
        }
        let top = argmax(&self.log_weights);
        let (hi0, lo0) = (self.log_weights[top], self.lo(top));
        if !hi0.is_finite() {
            softmax_into(&self.log_weights, &mut w);
            return w;
        }
        let rel: Vec<f64> = (0..self.len())
            .map(|i| (self.log_weights[i] - hi0) + (self.lo(i) - lo0))
            .collect();
        softmax_into(&rel, &mut w);
        w
    }

    fn lo(&self, i: usize) -> f64 {
        self.log_weights_lo.get(i).copied().unwrap_or(0.0)
    }

    /// Weighted mean `Σ_n W^n θ^n`.
    pub fn posterior_mean(&self) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.len()).collect();
        weighted_mean_subset(&self.points, self.dim, &self.log_weights, &idx, |_| 1.0)
    }

    /// Index of the largest weight (lowest index on ties).
    pub fn mode_index(&self) -> usize {
        argmax(&self.log_weights)
    }

    /// Normalized mass of particles in the closed max-norm ball.
    pub fn mass_in_ball(&self, center: &[f64], radius: f64) -> f64 {
        let w = self.normalized_weights();
        self.rows()
            .zip(&w)
            .filter(|(p, _)| in_ball(p, center, radius))
            .map(|(_, w)| w)
            .sum()
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Log-densities of `model` at each row of `points`, one slot per row.
pub fn eval_log_densities(
    model: &dyn Model,
    points: &[f64],
    dim: usize,
    y: &Observation,
    out: &mut Vec<f64>,
) -> Result<()> {
    let n = points.len() / dim;
    out.clear();
    out.resize(n, 0.0);
    if n >= 2 * PAR_MIN_LEN && rayon::current_num_threads() > 1 {
        out.par_chunks_mut(PAR_MIN_LEN)
            .zip(points.par_chunks(PAR_MIN_LEN * dim))
            .for_each(|(slots, rows)| model.log_density_rows(rows, y, slots));
    } else {
        model.log_density_rows(&points[..n * dim], y, out);
    }
    if let Some((index, &value)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteLogDensity { index, value });
    }
    Ok(())
}

/// `Σ_{n∈idx} c_n w_n θ^n / Σ_{n∈idx} c_n w_n` with `w = exp(log_w)`,
/// max-shifted over `idx`. `coef` supplies positive multipliers `c_n`.
pub(crate) fn weighted_mean_subset(
    points: &[f64],
    dim: usize,
    log_w: &[f64],
    idx: &[usize],
    coef: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let max = idx.iter().map(|&n| log_w[n]).fold(f64::NEG_INFINITY, f64::max);
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for &n in idx {
        let w = coef(n) * (log_w[n] - max).exp();
        total += w;
        for (a, x) in acc.iter_mut().zip(&points[n * dim..(n + 1) * dim]) {
            *a += w * x;
        }
    }
    for a in acc.iter_mut() {
        *a /= total;
    }
    acc
}

/// Runs plain Bayes updates on a fixed support and returns the index holding
/// the largest posterior mass.
pub fn concentration_index<I>(rows: &[Vec<f64>], model: &dyn Model, stream: I) -> Result<(usize, f64)>
where
    I: IntoIterator<Item = Observation>,
{
    let mut sys = ParticleSystem::from_rows(rows)?;
    for y in stream {
        sys.bayes_update(&y, model)?;
    }
    let w = sys.normalized_weights();
    let best = argmax(&w);
    Ok((best, w[best]))
}
