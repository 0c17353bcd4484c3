//! Point estimates computed at each perturbation: the weighted mean of the
//! main system and the guarded mean-or-mode estimate of the auxiliary system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::in_ball;
use crate::numeric::argmax;
use crate::particles::{weighted_mean_subset, ParticleSystem};

/// Constants of the auxiliary estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtWeights {
    pub delta: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
    pub kappa: f64,
}

impl Default for GtWeights {
    fn default() -> Self {
        Self { delta: 0.95, zeta1: 1.0, zeta2: 0.5, zeta3: 1.0, zeta4: 0.5, kappa: 0.9 }
    }
}

impl GtWeights {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.delta) || !unit(self.zeta2) || !unit(self.zeta4) || !unit(self.kappa) {
            return Err(Error::Config("delta, zeta2, zeta4 and kappa must lie in (0,1)".into()));
        }
        if !(self.zeta1 > 0.0 && self.zeta3 > 0.0) {
            return Err(Error::Config("zeta1 and zeta3 must be positive".into()));
        }
        Ok(())
    }
}

/// Which formula produced the auxiliary estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GtBranch {
    /// Reweighted mean over the ball and the nearby extra points.
    Mean,
    /// Highest-weight auxiliary particle.
    Mode,
}

impl GtBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            GtBranch::Mean => "mean",
            GtBranch::Mode => "mode",
        }
    }
}

/// Auxiliary system state handed to the estimate: `N + M` row-major points,
/// their log-weights, and the center and radius used to generate them.
#[derive(Debug, Clone, Copy)]
pub struct AuxEstimateInputs<'a> {
    pub eps: f64,
    pub mu: &'a [f64],
    pub log_weights: &'a [f64],
    pub points: &'a [f64],
    pub n: usize,
    pub m: usize,
}

impl<'a> AuxEstimateInputs<'a> {
    pub fn from_system(sys: &'a ParticleSystem, n: usize, mu: &'a [f64], eps: f64) -> Self {
        Self {
            eps,
            mu,
            log_weights: sys.log_weights(),
            points: sys.points(),
            n,
            m: sys.len() - n,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        let total = self.n + self.m;
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("auxiliary estimate needs N >= 1 and M >= 1".into()));
        }
        if self.log_weights.len() != total || self.points.len() != total * d {
            return Err(Error::Dimension { expected: total, got: self.log_weights.len() });
        }
        Ok(())
    }
}

/// Weighted mean of the main system.
pub fn estimate_g(sys: &ParticleSystem) -> Vec<f64> {
    sys.posterior_mean()
}

/// Highest-weight auxiliary point (lowest index on ties).
pub fn estimate_gtilde_mode(inputs: &AuxEstimateInputs) -> Vec<f64> {
    inputs.point(argmax(inputs.log_weights)).to_vec()
}

/// Ball mass `Z` and reweighted mean restricted to one coordinate block.
pub(crate) struct BlockEstimate {
    pub z: f64,
    pub mean: Vec<f64>,
}

/// `grid` indexes the grid particles, `extras` the extra particles with the
/// heavy-tailed draw first; `m_scale` multiplies the grid and heavy-tailed
/// weights. Ball tests and the returned mean only look at `axes`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn block_estimate(
    log_w: &[f64],
    points: &[f64],
    dim: usize,
    grid: &[usize],
    extras: &[usize],
    axes: &[usize],
    mu: &[f64],
    eps: f64,
    m_scale: f64,
    gw: &GtWeights,
) -> BlockEstimate {
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let block_in = |i: usize, r: f64| axes.iter().all(|&a| (row(i)[a] - mu[a]).abs() <= r);
    let n_grid = grid.len() as f64;
    let max = grid
        .iter()
        .chain(extras)
        .map(|&i| log_w[i])
        .fold(f64::NEG_INFINITY, f64::max);

    let r1 = (1.0 + gw.kappa) * eps;
    let (mut num, mut den) = (0.0, 0.0);
    for &i in grid {
        let a = gw.zeta1 * m_scale / n_grid * (log_w[i] - max).exp();
        den += a;
        if block_in(i, r1) {
            num += a;
        }
    }
    for (k, &i) in extras.iter().enumerate() {
        let a = if k == 0 { gw.zeta2 * m_scale } else { 1.0 - gw.zeta2 };
        let a = a * (log_w[i] - max).exp();
        den += a;
        if block_in(i, r1) {
            num += a;
        }
    }
    let z = num / den;

    let r2 = (1.0 + 2.0 * gw.kappa) * eps;
    let near: Vec<(usize, usize)> = extras
        .iter()
        .enumerate()
        .filter(|(_, &i)| block_in(i, r2))
        .map(|(k, &i)| (k, i))
        .collect();
    let j = near.len() as f64;
    let heavy = extras.first().copied();
    let mut idx: Vec<usize> = grid.to_vec();
    idx.extend(near.iter().map(|&(_, i)| i));
    let coef = |i: usize| {
        if Some(i) == heavy && near.iter().any(|&(_, e)| e == i) {
            gw.zeta4 * j
        } else if near.iter().any(|&(_, e)| e == i) {
            1.0 - gw.zeta4
        } else {
            gw.zeta3 * j.max(1.0) / n_grid
        }
    };
    let full = weighted_mean_subset(points, dim, log_w, &idx, coef);
    let mean = axes.iter().map(|&a| full[a]).collect();
    BlockEstimate { z, mean }
}

/// Reweighted ball mass `Z_t` of the auxiliary system.
pub fn compute_zt(inputs: &AuxEstimateInputs, gw: &GtWeights) -> Result<f64> {
    inputs.check()?;
    Ok(full_block(inputs, gw).z)
}

fn full_block(inputs: &AuxEstimateInputs, gw: &GtWeights) -> BlockEstimate {
    let d = inputs.dim();
    let grid: Vec<usize> = (0..inputs.n).collect();
    let extras: Vec<usize> = (inputs.n..inputs.n + inputs.m).collect();
    let axes: Vec<usize> = (0..d).collect();
    block_estimate(
        inputs.log_weights,
        inputs.points,
        d,
        &grid,
        &extras,
        &axes,
        inputs.mu,
        inputs.eps,
        inputs.m as f64,
        gw,
    )
}

/// Auxiliary estimate: the reweighted mean when `Z_t > Δ`, else the mode.
pub fn estimate_gtilde(inputs: &AuxEstimateInputs, gw: &GtWeights) -> Result<(Vec<f64>, GtBranch, f64)> {
    inputs.check()?;
    let b = full_block(inputs, gw);
    if b.z > gw.delta {
        Ok((b.mean, GtBranch::Mean, b.z))
    } else {
        Ok((estimate_gtilde_mode(inputs), GtBranch::Mode, b.z))
    }
}

/// True when every grid point lies in `B_ε(μ)`.
pub fn grid_within(inputs: &AuxEstimateInputs) -> bool {
    (0..inputs.n).all(|i| in_ball(inputs.point(i), inputs.mu, inputs.eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(pts: &'a [f64], lw: &'a [f64], n: usize, mu: &'a [f64], eps: f64) -> AuxEstimateInputs<'a> {
        AuxEstimateInputs { eps, mu, log_weights: lw, points: pts, n, m: lw.len() - n }
    }

    #[test]
    fn z_hand_example() {
        // a = (2, 1, 0.5); only the first point inside the ball
        let pts = [0.0, 5.0, 6.0];
        let lw = [0.0; 3];
        let gw = GtWeights::default();
        let z = compute_zt(&inputs(&pts, &lw, 1, &[0.0], 1.0), &gw).unwrap();
        assert!((z - 2.0 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn z_extremes() {
        let gw = GtWeights::default();
        let lw = [0.3, -1.0, 2.0, 0.0];
        let z = compute_zt(&inputs(&[0.1, 0.2, -0.3, 0.0], &lw, 2, &[0.0], 1.0), &gw).unwrap();
        assert_eq!(z, 1.0);
        let z = compute_zt(&inputs(&[9.0, 8.0, 7.0, 10.0], &lw, 2, &[0.0], 1.0), &gw).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn empty_ball_uses_mode() {
        let gw = GtWeights::default();
        let lw = [0.0, 3.0, 1.0, 3.0];
        let inp = inputs(&[9.0, 8.0, 7.0, 10.0], &lw, 2, &[0.0], 1.0);
        let (v, b, _) = estimate_gtilde(&inp, &gw).unwrap();
        assert_eq!(b, GtBranch::Mode);
        assert_eq!(v, vec![8.0]);
    }

    #[test]
    fn no_near_extras_gives_grid_mean() {
        let gw = GtWeights::default();
        let pts = [-0.5, 0.5, 0.25, 40.0];
        let lw = [0.0, 0.0, 0.0, -50.0];
        let (v, b, _) = estimate_gtilde(&inputs(&pts, &lw, 3, &[0.0], 1.0), &gw).unwrap();
        assert_eq!(b, GtBranch::Mean);
        assert!((v[0] - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_points_return_point() {
        let gw = GtWeights::default();
        let pts = [1.5; 5];
        for lw in [[0.0; 5], [-3.0, 1.0, 0.0, 7.0, -2.0]] {
            let (v, _, _) = estimate_gtilde(&inputs(&pts, &lw, 3, &[1.5], 0.2), &gw).unwrap();
            assert!((v[0] - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn mode_tie_breaks_low() {
        let pts = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let lw = [0.0, 0.0, 2.0, 0.0, 0.0, 2.0];
        assert_eq!(estimate_gtilde_mode(&inputs(&pts, &lw, 4, &[0.0], 1.0)), vec![2.0]);
        assert_eq!(estimate_gtilde_mode(&inputs(&pts, &[0.0; 6], 4, &[0.0], 1.0)), vec![0.0]);
    }

    #[test]
    fn heavy_tailed_point_weight_when_near() {
        // J = {N+1}: grid gets zeta3/N, the heavy-tailed point zeta4 * 1
        let gw = GtWeights::default();
        let pts = [0.0, 1.0, 1.5, 30.0];
        let lw = [0.0; 4];
        let (v, b, z) = estimate_gtilde(&inputs(&pts, &lw, 2, &[0.5], 0.5), &gw).unwrap();
        assert!(z > gw.delta || b == GtBranch::Mode);
        let b = full_block(&inputs(&pts, &lw, 2, &[0.5], 0.5), &gw);
        let expect = (0.5 * 0.0 + 0.5 * 1.0 + 0.5 * 1.5) / 1.5;
        assert!((b.mean[0] - expect).abs() < 1e-15, "{:?} {v:?}", b.mean);
    }
}
