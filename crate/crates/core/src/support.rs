//! Random support generation: exhaustive grid exploration of max-norm balls
//! (or of their coordinate slices), the heavy-tailed exploration particle and
//! the best-likelihood exploratory particles.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::meanfield::Partition;

/// Largest `k` with `k^d ≤ n`.
pub fn k_of_n(n: usize, d: usize) -> usize {
    assert!(n >= 1 && d >= 1);
    let mut k = (n as f64).powf(1.0 / d as f64).round() as usize + 1;
    while k > 1 && pow_exceeds(k, d, n) {
        k -= 1;
    }
    k.max(1)
}

/// `k^d > n`, without overflow.
pub(crate) fn pow_exceeds(k: usize, d: usize, n: usize) -> bool {
    let mut acc: usize = 1;
    for _ in 0..d {
        acc = match acc.checked_mul(k) {
            Some(v) if v <= n => v,
            _ => return true,
        };
    }
    false
}

/// `k^d`, saturating at `usize::MAX`.
pub(crate) fn sat_pow(k: usize, d: usize) -> usize {
    (0..d).fold(1usize, |acc, _| acc.saturating_mul(k))
}

/// Partition of the max-norm ball `B_ε(μ)` restricted to the coordinates in
/// `axes` into `k^|axes|` equal hypercubes; other coordinates stay at `μ`.
#[derive(Debug, Clone)]
pub struct BallGrid<'a> {
    pub center: &'a [f64],
    pub radius: f64,
    pub k: usize,
    pub axes: &'a [usize],
}

impl BallGrid<'_> {
    pub fn cell_count(&self) -> usize {
        sat_pow(self.k, self.axes.len())
    }

    fn side(&self) -> f64 {
        2.0 * self.radius / self.k as f64
    }

    /// Per-axis cell digits of row-major cell index `j` (last axis fastest).
    fn digits(&self, mut j: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = j % self.k;
            j /= self.k;
        }
    }

    /// Writes the centroid of cell `j` into `out` (a full `d`-vector).
    pub fn centroid_into(&self, j: usize, out: &mut [f64]) {
        out.copy_from_slice(self.center);
        let mut digits = vec![0; self.axes.len()];
        self.digits(j, &mut digits);
        let side = self.side();
        for (&axis, &g) in self.axes.iter().zip(&digits) {
            out[axis] = self.center[axis] - self.radius + (g as f64 + 0.5) * side;
        }
    }

    /// Uniform draw inside cell `j`, kept inside the ball.
    pub fn sample_cell_into(&self, j: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        out.copy_from_slice(self.center);
        let mut digits = vec![0; self.axes.len()];
        self.digits(j, &mut digits);
        let side = self.side();
        for (&axis, &g) in self.axes.iter().zip(&digits) {
            let lo = self.center[axis] - self.radius + g as f64 * side;
            let v = lo + rng.random::<f64>() * side;
            out[axis] = v.clamp(self.center[axis] - self.radius, self.center[axis] + self.radius);
        }
    }

    /// Cell index containing `x`, or `None` if `x` lies outside the slice.
    /// Points on a shared face are assigned to the upper cell.
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let on_slice = (0..x.len())
            .filter(|i| !self.axes.contains(i))
            .all(|i| x[i] == self.center[i]);
        if !on_slice {
            return None;
        }
        let side = self.side();
        let mut j = 0;
        for &axis in self.axes {
            let off = x[axis] - (self.center[axis] - self.radius);
            if off < 0.0 || off > 2.0 * self.radius {
                return None;
            }
            let g = ((off / side).floor() as usize).min(self.k - 1);
            j = j * self.k + g;
        }
        Some(j)
    }
}

/// Support generation for a (possibly trivial) partition: for each block, the
/// centroids of all `K_r^{|S_r|}` cells of its slice, then the surplus drawn
/// uniformly in cells visited in a shuffled cyclic order so no cell holds more
/// than `ceil(N / Σ K_r^{|S_r|}) + 1` points. Returns `N` row-major points.
pub fn gen_support_partitioned(
    mu: &[f64],
    eps: f64,
    n: usize,
    partition: &Partition,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let d = mu.len();
    if partition.dim() != d {
        return Err(Error::Dimension { expected: d, got: partition.dim() });
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("support radius must be positive, got {eps}")));
    }
    let grids: Vec<BallGrid> = partition
        .blocks()
        .iter()
        .zip(partition.resolutions())
        .map(|(axes, &k)| BallGrid { center: mu, radius: eps, k, axes })
        .collect();
    let total: usize = grids.iter().map(BallGrid::cell_count).sum();
    if total > n {
        return Err(Error::Config(format!(
            "partition needs {total} grid points but only {n} particles are available"
        )));
    }
    let mut out = vec![0.0; n * d];
    let mut row = 0;
    for g in &grids {
        for j in 0..g.cell_count() {
            g.centroid_into(j, &mut out[row * d..(row + 1) * d]);
            row += 1;
        }
    }
    if row < n {
        let mut cells: Vec<(usize, usize)> = grids
            .iter()
            .enumerate()
            .flat_map(|(r, g)| (0..g.cell_count()).map(move |j| (r, j)))
            .collect();
        cells.shuffle(rng);
        for (i, slot) in out[row * d..].chunks_exact_mut(d).enumerate() {
            let (r, j) = cells[i % cells.len()];
            grids[r].sample_cell_into(j, rng, slot);
        }
    }
    Ok(out)
}

/// Full-dimensional support: `N ≥ 2^d` points in `B_ε(μ)` covering every cell
/// of the `K_N`-per-axis grid, the first `K_N^d` being the cell centroids.
pub fn gen_support_f(mu: &[f64], eps: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let d = mu.len();
    if pow_exceeds(2, d, n) {
        return Err(Error::Config(format!(
            "{n} particles cannot cover a {d}-dimensional ball (need at least 2^{d}); use the mean-field pathway"
        )));
    }
    gen_support_partitioned(mu, eps, n, &Partition::trivial(d, k_of_n(n, d)), rng)
}

/// Componentwise projection onto `[−L, L]^d`.
pub fn clamp_g(theta: &[f64], l: f64) -> Vec<f64> {
    theta.iter().map(|v| v.clamp(-l, l)).collect()
}

/// Multivariate Student-t sampler with a fixed scale matrix.
#[derive(Debug, Clone)]
pub struct StudentT {
    chol: DMatrix<f64>,
    chi2: ChiSquared<f64>,
    nu: f64,
    pub clamp: f64,
}

impl StudentT {
    pub fn new(sigma: &DMatrix<f64>, nu: f64, clamp: f64) -> Result<Self> {
        if !(nu > 0.0) || !(clamp > 0.0) {
            return Err(Error::Config("Student-t needs nu > 0 and a positive clamp box".into()));
        }
        if sigma.nrows() != sigma.ncols() {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        let chi2 = ChiSquared::new(nu).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self { chol, chi2, nu, clamp })
    }

    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    /// Draw from `t_ν(clamp_g(μ), Σ)` as `g(μ) + L z sqrt(ν / χ²_ν)`.
    pub fn draw(&self, mu: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let scale = (self.nu / self.chi2.sample(rng)).sqrt();
        let v = &self.chol * z;
        mu.iter()
            .zip(v.iter())
            .map(|(m, x)| m.clamp(-self.clamp, self.clamp) + x * scale)
            .collect()
    }
}

/// A candidate point with its log-likelihood over the last block.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub point: Vec<f64>,
    pub score: f64,
}

/// The `m` highest-scoring candidates, best first; ties keep input order.
pub fn best_candidates(pool: &[Scored], m: usize) -> Vec<&Scored> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| pool[b].score.total_cmp(&pool[a].score).then(a.cmp(&b)));
    idx.into_iter().take(m).map(|i| &pool[i]).collect()
}

/// The `m` extra auxiliary points: a Student-t draw followed by the best
/// candidates from `pool`, padded with further Student-t draws.
pub fn extra_points(
    mu: &[f64],
    m: usize,
    student: &StudentT,
    pool: &[Scored],
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(m);
    if m == 0 {
        return out;
    }
    out.push(student.draw(mu, rng));
    out.extend(best_candidates(pool, m - 1).into_iter().map(|c| c.point.clone()));
    while out.len() < m {
        out.push(student.draw(mu, rng));
    }
    out
}

/// Full-dimensional auxiliary support of `N + M` points: `N` as in
/// [`gen_support_f`], then [`extra_points`].
pub fn gen_support_ftilde(
    mu: &[f64],
    eps: f64,
    n: usize,
    m: usize,
    student: &StudentT,
    pool: &[Scored],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let mut pts = gen_support_f(mu, eps, n, rng)?;
    for e in extra_points(mu, m, student, pool, rng) {
        pts.extend_from_slice(&e);
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norm::in_ball;
    use rand::SeedableRng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn k_of_n_examples() {
        assert_eq!(k_of_n(5, 1), 5);
        assert_eq!(k_of_n(4096, 4), 8);
        assert_eq!(k_of_n(4095, 4), 7);
        for d in 2..10 {
            assert_eq!(k_of_n(1 << d, d), 2);
        }
        assert_eq!(k_of_n(35000, 20), 1);
    }

    #[test]
    fn centroids_small_cases() {
        let p = gen_support_f(&[0.0], 1.0, 2, &mut rng(0)).unwrap();
        assert_eq!(p, vec![-0.5, 0.5]);
        let p = gen_support_f(&[0.0, 0.0], 1.0, 4, &mut rng(0)).unwrap();
        assert_eq!(p, vec![-0.5, -0.5, -0.5, 0.5, 0.5, -0.5, 0.5, 0.5]);
    }

    #[test]
    fn surplus_fills_cells_within_cap() {
        let mu = [1.0, -2.0];
        let (n, eps) = (23, 0.7);
        let p = gen_support_f(&mu, eps, n, &mut rng(3)).unwrap();
        let axes = [0, 1];
        let g = BallGrid { center: &mu, radius: eps, k: 4, axes: &axes };
        let mut counts = vec![0; 16];
        for row in p.chunks(2) {
            assert!(in_ball(row, &mu, eps));
            counts[g.cell_of(row).unwrap()] += 1;
        }
        let cap = n.div_ceil(16) + 1;
        assert!(counts.iter().all(|&c| c >= 1 && c <= cap), "{counts:?}");
    }

    #[test]
    fn too_few_particles_is_config_error() {
        assert!(matches!(gen_support_f(&[0.0; 4], 1.0, 15, &mut rng(0)), Err(Error::Config(_))));
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_g(&[600.0, -700.0], 500.0), vec![500.0, -500.0]);
        assert_eq!(clamp_g(&[3.0, -4.0], 500.0), vec![3.0, -4.0]);
    }

    #[test]
    fn student_t_location_is_clamped() {
        let s = StudentT::new(&DMatrix::identity(2, 2), 3.0, 500.0).unwrap();
        let mut r = rng(1);
        let mut xs: Vec<f64> = (0..4001).map(|_| s.draw(&[900.0, -900.0], &mut r)[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[2000] - 500.0).abs() < 0.1);
    }

    #[test]
    fn student_t_rejects_indefinite_scale() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(StudentT::new(&sigma, 3.0, 500.0), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn ftilde_picks_best_candidate() {
        let s = StudentT::new(&DMatrix::identity(1, 1), 3.0, 500.0).unwrap();
        let pool = vec![
            Scored { point: vec![7.0], score: -10.0 },
            Scored { point: vec![9.0], score: -5.0 },
        ];
        let p = gen_support_ftilde(&[0.0], 1.0, 3, 2, &s, &pool, &mut rng(2)).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p[4], 9.0);
        let p = gen_support_ftilde(&[0.0], 1.0, 3, 4, &s, &[], &mut rng(2)).unwrap();
        assert_eq!(p.len(), 7);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn ftilde_with_single_extra_extends_f() {
        let s = StudentT::new(&DMatrix::identity(2, 2), 3.0, 500.0).unwrap();
        let a = gen_support_f(&[0.0, 1.0], 0.5, 9, &mut rng(4)).unwrap();
        let b = gen_support_ftilde(&[0.0, 1.0], 0.5, 9, 1, &s, &[], &mut rng(4)).unwrap();
        assert_eq!(&b[..18], &a[..]);
        assert_eq!(b.len(), 20);
    }
}
