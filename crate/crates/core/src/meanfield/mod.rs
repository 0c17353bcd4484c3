//! Mean-field exploration for parameters too high-dimensional for a full grid:
//! coordinates are split into blocks, each explored on its own slice of the
//! ball, and the split is relearned from importance-weighted correlations.

mod blockwise;
mod mincut;

pub use blockwise::{estimate_g_mf, estimate_gtilde_mf, gen_support_ftilde_mf, in_slice};
pub use mincut::{min_rcut_partition, partition_count, CutResult, SizeRule};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::support::{pow_exceeds, sat_pow};

/// Ordered disjoint coordinate blocks covering `0..d`, each with its own grid
/// resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    d: usize,
    blocks: Vec<Vec<usize>>,
    k: Vec<usize>,
}

impl Partition {
    pub fn new(d: usize, mut blocks: Vec<Vec<usize>>, k: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() || blocks.len() != k.len() {
            return Err(Error::Config("partition needs one resolution per block".into()));
        }
        let mut seen = vec![false; d];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::Config("partition blocks must be non-empty".into()));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= d || seen[i] {
                    return Err(Error::Config(format!("coordinate {i} repeated or out of range")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("partition does not cover every coordinate".into()));
        }
        if k.contains(&0) {
            return Err(Error::Config("block resolutions must be at least 1".into()));
        }
        Ok(Self { d, blocks, k })
    }

    /// One block holding every coordinate.
    pub fn trivial(d: usize, k: usize) -> Self {
        Self { d, blocks: vec![(0..d).collect()], k: vec![k] }
    }

    /// Blocks of the given sizes over consecutive coordinates.
    pub fn contiguous(sizes: &[usize], k: Vec<usize>) -> Result<Self> {
        let d = sizes.iter().sum();
        let mut start = 0;
        let blocks = sizes
            .iter()
            .map(|&s| {
                let b: Vec<usize> = (start..start + s).collect();
                start += s;
                b
            })
            .collect();
        Self::new(d, blocks, k)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn resolutions(&self) -> &[usize] {
        &self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    /// `Σ_r K_r^{|S_r|}`.
    pub fn grid_points(&self) -> usize {
        self.blocks
            .iter()
            .zip(&self.k)
            .fold(0usize, |acc, (b, &k)| acc.saturating_add(sat_pow(k, b.len())))
    }

    /// Same blocks as a canonical set (block order ignored).
    pub fn same_blocks(&self, other: &Partition) -> bool {
        let mut a = self.blocks.clone();
        let mut b = other.blocks.clone();
        a.sort();
        b.sort();
        a == b
    }

    /// Human-readable 1-based form, e.g. `1 11:20/2:10`; blocks ordered by
    /// their smallest coordinate.
    pub fn digest(&self) -> String {
        let mut blocks = self.blocks.clone();
        blocks.sort();
        blocks.iter().map(|b| runs(b)).collect::<Vec<_>>().join("/")
    }
}

fn runs(block: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < block.len() {
        let mut j = i;
        while j + 1 < block.len() && block[j + 1] == block[j] + 1 {
            j += 1;
        }
        if j == i {
            parts.push(format!("{}", block[i] + 1));
        } else {
            parts.push(format!("{}:{}", block[i] + 1, block[j] + 1));
        }
        i = j + 1;
    }
    parts.join(" ")
}

/// Balanced block sizes, larger blocks first.
pub fn balanced_sizes(d: usize, r: usize) -> Vec<usize> {
    (0..r).map(|i| d / r + usize::from(i < d % r)).collect()
}

fn grid_cost(sizes: &[usize], k: usize) -> usize {
    sizes.iter().fold(0usize, |acc, &s| acc.saturating_add(sat_pow(k, s)))
}

/// Smallest number of blocks `R` such that `R` balanced blocks of the `d`
/// coordinates can each hold a 2-per-axis grid within `n` particles.
pub fn r_of_n(n: usize, d: usize) -> Result<usize> {
    if d == 0 || n < 2 * d {
        return Err(Error::Config(format!("mean-field exploration needs N >= 2d, got N = {n}, d = {d}")));
    }
    (1..=d)
        .find(|&r| grid_cost(&balanced_sizes(d, r), 2) <= n)
        .ok_or_else(|| Error::Invariant("no feasible block count".into()))
}

/// Common per-axis resolution: the largest `K` with `Σ K^{s_r} ≤ n`.
pub fn common_k(n: usize, sizes: &[usize]) -> usize {
    let mut k = 1;
    while grid_cost(sizes, k + 1) <= n {
        k += 1;
    }
    k
}

/// Raises individual block resolutions from `k` while the grid still fits,
/// always taking the feasible increment that adds the most grid points (ties
/// to the lowest block).
pub fn refine_resolutions(n: usize, sizes: &[usize], k: usize) -> Vec<usize> {
    let mut ks = vec![k; sizes.len()];
    loop {
        let base: usize = sizes.iter().zip(&ks).map(|(&s, &k)| sat_pow(k, s)).sum();
        let mut best: Option<(usize, usize)> = None;
        for (r, (&s, &kr)) in sizes.iter().zip(&ks).enumerate() {
            if pow_exceeds(kr + 1, s, n) {
                continue;
            }
            let extra = sat_pow(kr + 1, s) - sat_pow(kr, s);
            if base.saturating_add(extra) <= n && best.is_none_or(|(_, e)| extra > e) {
                best = Some((r, extra));
            }
        }
        match best {
            Some((r, _)) => ks[r] += 1,
            None => return ks,
        }
    }
}

/// `(sizes, K_N, per-block K_r)` for `R` blocks.
pub fn block_sizes_and_resolutions(n: usize, d: usize, r: usize) -> (Vec<usize>, usize, Vec<usize>) {
    let sizes = balanced_sizes(d, r);
    let k = common_k(n, &sizes);
    let ks = refine_resolutions(n, &sizes, k);
    (sizes, k, ks)
}

/// Weighted correlation matrix of row-major `points` under normalized
/// `weights`. Coordinates with zero weighted variance get zero off-diagonal
/// entries.
pub fn weighted_correlation(points: &[f64], dim: usize, weights: &[f64]) -> DMatrix<f64> {
    let mut mean = vec![0.0; dim];
    for (row, &w) in points.chunks_exact(dim).zip(weights) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += w * x;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for (row, &w) in points.chunks_exact(dim).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            let wi = w * centered[i];
            for j in i..dim {
                cov[(i, j)] += wi * centered[j];
            }
        }
    }
    let sd: Vec<f64> = (0..dim).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let mut rho = DMatrix::<f64>::identity(dim, dim);
    for i in 0..dim {
        for j in i + 1..dim {
            let s = sd[i] * sd[j];
            let v = if s > 0.0 { (cov[(i, j)] / s).clamp(-1.0, 1.0) } else { 0.0 };
            rho[(i, j)] = v;
            rho[(j, i)] = v;
        }
    }
    rho
}

/// Effective sample size `1 / Σ W²` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Tempering exponent update and the resulting block length
/// `τ = max(1, ⌊gap^{1/T}⌋)`.
pub fn adapt_tau(t_gap: u64, t_prev: f64, ess_prev: f64, n_mf: usize) -> (u64, f64) {
    let half = (n_mf / 2) as f64;
    let t = if ess_prev < half / 4.0 {
        t_prev + 0.1
    } else if ess_prev > 3.0 * half / 4.0 {
        (t_prev - 0.1).max(1.0)
    } else {
        t_prev
    };
    (tau_for(t_gap, t), t)
}

/// `max(1, ⌊gap^{1/T}⌋)`.
pub fn tau_for(t_gap: u64, t: f64) -> u64 {
    let v = (t_gap as f64).powf(1.0 / t);
    // guard against 1000^(1/3) = 9.999999999999998
    let r = v.round();
    let v = if (v - r).abs() < 1e-9 * r.max(1.0) { r } else { v.floor() };
    (v as u64).max(1)
}

/// Exploration pool around `center`: the first `⌊n_aux/2⌋` points uniform on
/// the box `center ± xi`, the rest `N(center, Σ)` given the lower Cholesky
/// factor of `Σ`. Returns row-major points.
pub fn aux_pool_sampler(
    center: &[f64],
    xi: f64,
    sigma_chol: &DMatrix<f64>,
    n_aux: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let d = center.len();
    let n_mf = n_aux / 2;
    let mut out = Vec::with_capacity(n_aux * d);
    for _ in 0..n_mf {
        out.extend(center.iter().map(|c| c - xi + 2.0 * xi * rng.random::<f64>()));
    }
    for _ in n_mf..n_aux {
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = sigma_chol * z;
        out.extend(center.iter().zip(v.iter()).map(|(c, x)| c + x));
    }
    out
}

/// `10 ρ̂`, with eigenvalues floored at `1e-6 · trace / d` so the result is
/// symmetric positive definite.
pub fn sigma_update(rho: &DMatrix<f64>) -> DMatrix<f64> {
    let d = rho.nrows();
    let s = (rho + rho.transpose()) * 5.0;
    let floor = 1e-6 * s.trace() / d as f64;
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= floor) {
        return s;
    }
    let lam = eig.eigenvalues.map(|e| e.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&lam) * v.transpose();
    (&out + out.transpose()) * 0.5
}
