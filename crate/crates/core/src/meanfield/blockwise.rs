//! Support generation and point estimates on the coordinate slices of a
//! partition. With a single block every function here coincides with its
//! full-dimensional counterpart.

use rand_chacha::ChaCha8Rng;

use super::Partition;
use crate::error::{Error, Result};
use crate::estimators::{block_estimate, estimate_gtilde_mode, AuxEstimateInputs, GtBranch, GtWeights};
use crate::particles::{weighted_mean_subset, ParticleSystem};
use crate::support::{extra_points, gen_support_partitioned, Scored, StudentT};

/// `x` lies on the slice of `B_ε(μ)` spanned by `axes`: coordinates off the
/// block equal `μ`, block coordinates within `ε` (with rounding slack).
pub fn in_slice(x: &[f64], mu: &[f64], eps: f64, axes: &[usize]) -> bool {
    let mut a = axes.iter().peekable();
    for (i, (xi, mi)) in x.iter().zip(mu).enumerate() {
        if a.peek() == Some(&&i) {
            a.next();
            if (xi - mi).abs() > eps + 1e-12 * (eps + mi.abs()) {
                return false;
            }
        } else if xi != mi {
            return false;
        }
    }
    true
}

fn slice_members(points: &[f64], dim: usize, n: usize, mu: &[f64], eps: f64, axes: &[usize]) -> Vec<usize> {
    (0..n)
        .filter(|&i| in_slice(&points[i * dim..(i + 1) * dim], mu, eps, axes))
        .collect()
}

/// Auxiliary support for a partition with `R` blocks: `N` slice-grid points,
/// then for each block `M'` points equal to `μ` off the block and to the
/// extra points on it, then (when `R > 1`) the `M'` extra points themselves.
/// The first extra point is the heavy-tailed draw.
#[allow(clippy::too_many_arguments)]
pub fn gen_support_ftilde_mf(
    mu: &[f64],
    eps: f64,
    n: usize,
    m_prime: usize,
    partition: &Partition,
    student: &StudentT,
    pool: &[Scored],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut pts = gen_support_partitioned(mu, eps, n, partition, rng)?;
    let extras = extra_points(mu, m_prime, student, pool, rng);
    for block in partition.blocks() {
        for e in &extras {
            let start = pts.len();
            pts.extend_from_slice(mu);
            for &a in block {
                pts[start + a] = e[a];
            }
        }
    }
    if partition.r() > 1 {
        for e in &extras {
            pts.extend_from_slice(e);
        }
    }
    Ok(pts)
}

/// Blockwise weighted mean of the main system, each block averaged over the
/// particles lying on its slice of `B_ε(μ)`.
pub fn estimate_g_mf(sys: &ParticleSystem, partition: &Partition, mu: &[f64], eps: f64) -> Result<Vec<f64>> {
    let d = sys.dim();
    let mut out = mu.to_vec();
    for (r, axes) in partition.blocks().iter().enumerate() {
        let members = slice_members(sys.points(), d, sys.len(), mu, eps, axes);
        if members.is_empty() {
            return Err(Error::Invariant(format!("no main particle on slice of block {r}")));
        }
        let mean = weighted_mean_subset(sys.points(), d, sys.log_weights(), &members, |_| 1.0);
        for &a in axes {
            out[a] = mean[a];
        }
    }
    Ok(out)
}

/// Blockwise auxiliary estimate: per-block ball masses `Z_r` over the block's
/// slice grid points and its `M'` projected extra points; if `min_r Z_r > Δ`
/// the blockwise reweighted means, else the global mode.
pub fn estimate_gtilde_mf(
    inputs: &AuxEstimateInputs,
    partition: &Partition,
    m_prime: usize,
    gw: &GtWeights,
) -> Result<(Vec<f64>, GtBranch, f64)> {
    let d = inputs.dim();
    let r_count = partition.r();
    let expect = if r_count == 1 { m_prime } else { (r_count + 1) * m_prime };
    if inputs.m != expect || m_prime == 0 {
        return Err(Error::Dimension { expected: expect, got: inputs.m });
    }
    let mut z = f64::INFINITY;
    let mut mean = inputs.mu.to_vec();
    for (r, axes) in partition.blocks().iter().enumerate() {
        let grid = slice_members(inputs.points, d, inputs.n, inputs.mu, inputs.eps, axes);
        if grid.is_empty() {
            return Err(Error::Invariant(format!("no auxiliary grid particle on slice of block {r}")));
        }
        let start = inputs.n + r * m_prime;
        let extras: Vec<usize> = (start..start + m_prime).collect();
        let b = block_estimate(
            inputs.log_weights,
            inputs.points,
            d,
            &grid,
            &extras,
            axes,
            inputs.mu,
            inputs.eps,
            m_prime as f64,
            gw,
        );
        z = z.min(b.z);
        for (&a, v) in axes.iter().zip(b.mean) {
            mean[a] = v;
        }
    }
    if z > gw.delta {
        Ok((mean, GtBranch::Mean, z))
    } else {
        Ok((estimate_gtilde_mode(inputs), GtBranch::Mode, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::estimate_gtilde;
    use crate::support::{gen_support_f, gen_support_ftilde};
    use nalgebra::DMatrix;
    use rand::SeedableRng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    fn fig2() -> Partition {
        Partition::new(3, vec![vec![0], vec![1, 2]], vec![2, 2]).unwrap()
    }

    #[test]
    fn two_block_grid_configuration() {
        let p = gen_support_partitioned(&[0.0; 3], 1.0, 6, &fig2(), &mut rng(0)).unwrap();
        let rows: Vec<&[f64]> = p.chunks(3).collect();
        assert_eq!(rows[0], &[-0.5, 0.0, 0.0]);
        assert_eq!(rows[1], &[0.5, 0.0, 0.0]);
        assert_eq!(rows[2], &[0.0, -0.5, -0.5]);
        assert_eq!(rows[5], &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn every_point_on_one_slice() {
        let part = fig2();
        let mu = [0.3, -1.0, 2.0];
        let p = gen_support_partitioned(&mu, 0.4, 40, &part, &mut rng(7)).unwrap();
        for row in p.chunks(3) {
            assert!(part.blocks().iter().any(|b| in_slice(row, &mu, 0.4, b)));
        }
    }

    #[test]
    fn single_block_matches_full_dimension() {
        let student = StudentT::new(&DMatrix::identity(2, 2), 3.0, 500.0).unwrap();
        let pool = vec![Scored { point: vec![3.0, 3.0], score: 1.0 }];
        let mu = [0.2, 0.1];
        let part = Partition::trivial(2, 3);
        let a = gen_support_ftilde_mf(&mu, 0.5, 11, 2, &part, &student, &pool, &mut rng(5)).unwrap();
        let b = gen_support_ftilde(&mu, 0.5, 11, 2, &student, &pool, &mut rng(5)).unwrap();
        assert_eq!(a, b);

        let lw: Vec<f64> = (0..13).map(|i| -((i * 7 % 5) as f64)).collect();
        let sys = ParticleSystem::from_parts(2, a.clone(), lw.clone(), 0).unwrap();
        let inp = AuxEstimateInputs::from_system(&sys, 11, &mu, 0.5);
        let gw = GtWeights::default();
        assert_eq!(estimate_gtilde_mf(&inp, &part, 2, &gw).unwrap(), estimate_gtilde(&inp, &gw).unwrap());

        let main = ParticleSystem::from_parts(2, gen_support_f(&mu, 0.5, 11, &mut rng(1)).unwrap(), lw[..11].to_vec(), 0)
            .unwrap();
        assert_eq!(estimate_g_mf(&main, &part, &mu, 0.5).unwrap(), main.posterior_mean());
    }

    #[test]
    fn uniform_weights_on_symmetric_grid_give_center() {
        let sys = ParticleSystem::new(3, gen_support_partitioned(&[0.0; 3], 1.0, 6, &fig2(), &mut rng(0)).unwrap()).unwrap();
        assert_eq!(estimate_g_mf(&sys, &fig2(), &[0.0; 3], 1.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn concentrated_weights_pick_block_points() {
        let pts = gen_support_partitioned(&[0.0; 3], 1.0, 6, &fig2(), &mut rng(0)).unwrap();
        let mut lw = vec![0.0; 6];
        lw[1] = 800.0;
        lw[5] = 800.0;
        let sys = ParticleSystem::from_parts(3, pts, lw, 0).unwrap();
        let g = estimate_g_mf(&sys, &fig2(), &[0.0; 3], 1.0).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-12 && (g[1] - 0.5).abs() < 1e-12 && (g[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn layout_and_identical_points() {
        let student = StudentT::new(&DMatrix::identity(3, 3), 3.0, 500.0).unwrap();
        let p = gen_support_ftilde_mf(&[0.0; 3], 1.0, 6, 2, &fig2(), &student, &[], &mut rng(2)).unwrap();
        assert_eq!(p.len(), (6 + 3 * 2) * 3);
        // block-1 slots keep coordinates 2 and 3 at the center
        assert_eq!(&p[6 * 3 + 1..6 * 3 + 3], &[0.0, 0.0]);
        let v = vec![1.25; 12 * 3];
        let lw: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let inp = AuxEstimateInputs { eps: 0.5, mu: &[1.25; 3], log_weights: &lw, points: &v, n: 6, m: 6 };
        let (est, _, _) = estimate_gtilde_mf(&inp, &fig2(), 2, &GtWeights::default()).unwrap();
        assert!(est.iter().all(|v| (v - 1.25).abs() < 1e-14));
    }
}
