//! The online estimation loop: Bayes updates of the main and auxiliary
//! particle systems on every observation, and support regeneration at the
//! scheduled perturbation times.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_g, estimate_gtilde, AuxEstimateInputs, GtBranch, GtWeights,
};
use crate::meanfield::{
    adapt_tau, aux_pool_sampler, block_sizes_and_resolutions, estimate_g_mf, estimate_gtilde_mf,
    gen_support_ftilde_mf, in_slice, min_rcut_partition, r_of_n, refine_resolutions, sigma_update,
    tau_for, weighted_correlation, Partition, SizeRule,
};
use crate::meanfield::ess as ess_of;
use crate::models::{Model, Observation};
use crate::norm::max_dist;
use crate::numeric::softmax_into;
use crate::particles::{eval_log_densities, ParticleSystem};
use crate::rng::{substream, Role};
use crate::schedule::{apply_interaction, epsilon_p, Branch, ScheduleConfig, ScheduleState};
use crate::support::{gen_support_partitioned, k_of_n, pow_exceeds, Scored, StudentT};

/// Initial tempering exponent for the partition-learning block length.
const T0: f64 = 3.0;
/// Below this effective sample size the previous partition and scale are kept.
const MIN_ESS: f64 = 4.0;

/// Whether to explore coordinate blocks separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanField {
    /// Blocks whenever `N < 2^d`.
    #[default]
    Auto,
    /// Always a single block; requires `N ≥ 2^d`.
    Off,
    /// Always use the block machinery (a single block when `N ≥ 2^d`).
    On,
}

/// Tunables of the estimation loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoConfig {
    /// Grid particles per system `N`.
    pub n: usize,
    /// Extra auxiliary particles per block `M'`.
    pub m_prime: usize,
    pub t1: u64,
    pub kappa: f64,
    pub eps0: f64,
    pub varrho: f64,
    pub beta: f64,
    pub varepsilon: f64,
    pub delta: f64,
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
    /// Student-t degrees of freedom.
    pub nu: f64,
    /// Half-width of the box the Student-t location is clamped to.
    pub clamp_l: f64,
    /// Exploration pool size; 0 disables the pool.
    pub n_aux: usize,
    pub mean_field: MeanField,
    /// Reuse the auxiliary grid as the main support whenever both radii agree.
    pub share_support: bool,
    /// Fixed 0-based coordinate blocks instead of learned ones.
    pub partition: Option<Vec<Vec<usize>>>,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        Self {
            n: 64,
            m_prime: 2,
            t1: 10,
            kappa: 0.9,
            eps0: 1.0,
            varrho: 2.1,
            beta: 0.01,
            varepsilon: 0.1,
            delta: 0.95,
            zeta1: 1.0,
            zeta2: 0.5,
            zeta3: 1.0,
            zeta4: 0.5,
            nu: 3.0,
            clamp_l: 500.0,
            n_aux: 100,
            mean_field: MeanField::Auto,
            share_support: false,
            partition: None,
        }
    }
}

impl AlgoConfig {
    pub fn schedule(&self, d: usize) -> ScheduleConfig {
        ScheduleConfig {
            kappa: self.kappa,
            t1: self.t1,
            eps0: self.eps0,
            varrho: self.varrho,
            beta: self.beta,
            varepsilon: self.varepsilon,
            d,
        }
    }

    pub fn gt_weights(&self) -> GtWeights {
        GtWeights {
            delta: self.delta,
            zeta1: self.zeta1,
            zeta2: self.zeta2,
            zeta3: self.zeta3,
            zeta4: self.zeta4,
            kappa: self.kappa,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.schedule(d).validate()?;
        self.gt_weights().validate()?;
        if self.m_prime == 0 {
            return Err(Error::Config("m_prime must be at least 1".into()));
        }
        if !(self.nu > 0.0 && self.clamp_l > 0.0) {
            return Err(Error::Config("nu and clamp_l must be positive".into()));
        }
        if self.n_aux == 1 {
            return Err(Error::Config("n_aux must be 0 or at least 2".into()));
        }
        if self.n < 2 * d {
            return Err(Error::Config(format!("N = {} is below 2d = {}", self.n, 2 * d)));
        }
        if self.mean_field == MeanField::Off && pow_exceeds(2, d, self.n) {
            return Err(Error::Config(format!(
                "N = {} < 2^{d}: full-dimensional exploration is impossible, enable mean_field",
                self.n
            )));
        }
        Ok(())
    }
}

/// Law of the starting supports: i.i.d. `N(mean, var · I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub mean: Vec<f64>,
    pub var: f64,
}

/// Summary of one perturbation, or of a sampled time between perturbations
/// (then `p` is the last perturbation index and `branch` is `None`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub p: u64,
    pub xi: f64,
    pub eps: f64,
    pub q: u64,
    pub branch: Option<Branch>,
    pub aux_branch: Option<GtBranch>,
    pub z: f64,
    pub estimate: Vec<f64>,
    pub error: Option<f64>,
    pub ess: f64,
    pub tau: u64,
    pub temper: f64,
    pub mincut_objective: f64,
    /// Spectral norm of the exploration covariance `Σ_t`.
    pub sigma_norm: f64,
    pub partition: String,
    pub wall_ns_per_obs: f64,
}

/// Outcome of [`Engine::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<TraceRow>,
    pub final_estimate: Vec<f64>,
    /// Accepted observations.
    pub observations: u64,
    /// Observations rejected for a non-finite log-density.
    pub rejected: u64,
    pub first_rejection: Option<String>,
    /// The stream ended before the horizon.
    pub early_stop: bool,
    /// Mean wall time per accepted observation (0 unless timing is enabled).
    pub wall_ns_per_obs: f64,
}

/// Options for [`Engine::run`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub horizon: u64,
    pub truth: Option<Vec<f64>>,
    /// Extra trace rows at these observation counts.
    pub checkpoints: Vec<u64>,
    /// Record wall-clock time per observation (makes traces non-reproducible).
    pub timing: bool,
}

/// Exploration pool scored over the current block.
#[derive(Debug, Clone)]
struct Pool {
    points: Vec<f64>,
    n_mf: usize,
    score: Vec<f64>,
    score_tau: Vec<f64>,
    tau: u64,
}

/// Full state of the estimation loop. A clone is an independent snapshot.
#[derive(Clone)]
pub struct Engine {
    cfg: AlgoConfig,
    sched_cfg: ScheduleConfig,
    gw: GtWeights,
    model: Arc<dyn Model>,
    seed: u64,
    d: usize,
    mean_field: bool,
    r: usize,
    k_n: usize,
    main: ParticleSystem,
    aux: ParticleSystem,
    sched: ScheduleState,
    partition: Partition,
    structured: bool,
    shared: bool,
    main_center: Vec<f64>,
    main_radius: f64,
    aux_center: Vec<f64>,
    aux_radius: f64,
    sigma: DMatrix<f64>,
    student: StudentT,
    pool: Pool,
    temper: f64,
    ess: f64,
    mincut_objective: f64,
    t: u64,
    block_start: Option<Instant>,
    timing: bool,
    inc_main: Vec<f64>,
    inc_aux: Vec<f64>,
    inc_pool: Vec<f64>,
}

impl Engine {
    pub fn new(cfg: AlgoConfig, model: Arc<dyn Model>, init: &InitSpec, seed: u64) -> Result<Self> {
        let d = model.dim();
        cfg.validate(d)?;
        if init.mean.len() != d {
            return Err(Error::Dimension { expected: d, got: init.mean.len() });
        }
        if !(init.var > 0.0) {
            return Err(Error::Config("initial variance must be positive".into()));
        }
        let full_ok = !pow_exceeds(2, d, cfg.n);
        let mean_field = match cfg.mean_field {
            MeanField::Auto => !full_ok,
            MeanField::Off => false,
            MeanField::On => true,
        };
        let (r, k_n, partition) = if mean_field {
            let r = r_of_n(cfg.n, d)?;
            let (sizes, k, ks) = block_sizes_and_resolutions(cfg.n, d, r);
            let partition = match &cfg.partition {
                Some(blocks) => fixed_partition(d, blocks, cfg.n, k)?,
                None => Partition::contiguous(&sizes, ks)?,
            };
            (partition.r(), k, partition)
        } else {
            let k = k_of_n(cfg.n, d);
            (1, k, Partition::trivial(d, k))
        };
        let m = if r == 1 { cfg.m_prime } else { (r + 1) * cfg.m_prime };

        let sd = init.var.sqrt();
        let draw = |count: usize, role: Role| {
            let mut rng = substream(seed, 0, role);
            (0..count * d)
                .map(|i| init.mean[i % d] + sd * rng.sample::<f64, _>(StandardNormal))
                .collect::<Vec<f64>>()
        };
        let main = ParticleSystem::new(d, draw(cfg.n, Role::InitMain))?;
        let aux = ParticleSystem::new(d, draw(cfg.n + m, Role::InitAux))?;
        let aux_center = aux.rows().fold(vec![0.0; d], |mut acc, p| {
            for (a, x) in acc.iter_mut().zip(p) {
                *a += x;
            }
            acc
        });
        let aux_center: Vec<f64> = aux_center.iter().map(|v| v / aux.len() as f64).collect();
        let main_center = main.posterior_mean();

        let sigma = DMatrix::identity(d, d) * 10.0;
        let student = StudentT::new(&sigma, cfg.nu, cfg.clamp_l)?;
        let sched_cfg = cfg.schedule(d);
        let sched = ScheduleState::initial(&sched_cfg);
        let pool = new_pool(&aux_center, 1.0, &sigma, cfg.n_aux, tau_for(cfg.t1, T0), seed, 0)?;
        let gw = cfg.gt_weights();
        Ok(Self {
            sched_cfg,
            gw,
            model,
            seed,
            d,
            mean_field,
            r,
            k_n,
            main,
            aux,
            sched,
            partition,
            structured: false,
            shared: false,
            main_center,
            main_radius: 1.0,
            aux_radius: sched.eps_p,
            aux_center,
            sigma,
            student,
            pool,
            temper: T0,
            ess: f64::NAN,
            mincut_objective: f64::NAN,
            t: 0,
            block_start: None,
            timing: false,
            inc_main: Vec::new(),
            inc_aux: Vec::new(),
            inc_pool: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &AlgoConfig {
        &self.cfg
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Accepted observations so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn schedule_state(&self) -> &ScheduleState {
        &self.sched
    }

    pub fn main(&self) -> &ParticleSystem {
        &self.main
    }

    pub fn aux(&self) -> &ParticleSystem {
        &self.aux
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn is_mean_field(&self) -> bool {
        self.mean_field
    }

    /// Number of blocks and the common per-axis resolution.
    pub fn layout(&self) -> (usize, usize) {
        (self.r, self.k_n)
    }

    /// `(center, radius)` the main and auxiliary supports were generated with.
    pub fn support_balls(&self) -> ((&[f64], f64), (&[f64], f64)) {
        ((&self.main_center, self.main_radius), (&self.aux_center, self.aux_radius))
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn set_timing(&mut self, on: bool) {
        self.timing = on;
    }

    /// Point estimate `θ̂_t`: the weighted mean of the main system, taken
    /// blockwise over the slices when the supports are block-structured.
    pub fn estimate(&self) -> Vec<f64> {
        if self.structured && self.r > 1 {
            if let Ok(v) = estimate_g_mf(&self.main, &self.partition, &self.main_center, self.main_radius) {
                return v;
            }
        }
        self.main.posterior_mean()
    }

    /// Processes one observation, perturbing first if it is due. On error the
    /// observation is rejected and the weights are unchanged.
    pub fn step(&mut self, y: &Observation) -> Result<Option<TraceRow>> {
        if y.x.len() != self.model.covariate_dim() {
            return Err(Error::Dimension { expected: self.model.covariate_dim(), got: y.x.len() });
        }
        let row = if self.t == self.sched.next_time(&self.sched_cfg) {
            Some(self.perturb()?)
        } else {
            None
        };
        self.bayes_update(y)?;
        self.t += 1;
        Ok(row)
    }

    fn bayes_update(&mut self, y: &Observation) -> Result<()> {
        let model = self.model.as_ref();
        let d = self.d;
        eval_log_densities(model, self.aux.points(), d, y, &mut self.inc_aux)?;
        if self.shared {
            self.inc_main.clear();
            self.inc_main.extend_from_slice(&self.inc_aux[..self.cfg.n]);
        } else {
            eval_log_densities(model, self.main.points(), d, y, &mut self.inc_main)?;
        }
        if !self.pool.points.is_empty() {
            eval_log_densities(model, &self.pool.points, d, y, &mut self.inc_pool)?;
        }
        self.aux.apply_increments(&self.inc_aux);
        self.main.apply_increments(&self.inc_main);
        if !self.pool.points.is_empty() {
            let within_tau = self.t - self.sched.t_cur < self.pool.tau;
            for (i, inc) in self.inc_pool.iter().enumerate() {
                self.pool.score[i] += inc;
                if within_tau && i < self.pool.n_mf {
                    self.pool.score_tau[i] += inc;
                }
            }
        }
        Ok(())
    }

    /// Distance between the two estimates, minimized over relabelings of `b`.
    pub fn estimate_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        estimate_distance(a, b, self.model.as_ref())
    }

    fn perturb(&mut self) -> Result<TraceRow> {
        let p = self.sched.p + 1;
        let n = self.cfg.n;
        let wall = match (self.timing, self.block_start) {
            (true, Some(start)) => {
                let obs = (self.t - self.sched.t_cur).max(1);
                start.elapsed().as_nanos() as f64 / obs as f64
            }
            _ => 0.0,
        };
        let estimate = self.estimate();

        // point estimates on the supports generated at the previous perturbation
        let eps_prev = epsilon_p(p - 1, &self.sched_cfg);
        let inputs = AuxEstimateInputs::from_system(&self.aux, n, &self.aux_center, eps_prev);
        let (theta_bar, (vartheta_bar, aux_branch, z)) = if !self.structured || self.r == 1 {
            (estimate_g(&self.main), estimate_gtilde(&inputs, &self.gw)?)
        } else {
            (
                estimate_g_mf(&self.main, &self.partition, &self.main_center, self.main_radius)?,
                estimate_gtilde_mf(&inputs, &self.partition, self.cfg.m_prime, &self.gw)?,
            )
        };
        let dist = self.estimate_distance(&theta_bar, &vartheta_bar);
        let (sched, branch) = apply_interaction(&self.sched, dist, &self.sched_cfg);
        let theta_hat = match branch {
            Branch::Own => theta_bar,
            Branch::Aux => vartheta_bar.clone(),
        };
        let mode = self.aux.point(self.aux.mode_index()).to_vec();

        // partition and scale from the importance-weighted pool
        let mut partition = self.partition.clone();
        if self.pool.n_mf >= 2 {
            let mut w = Vec::with_capacity(self.pool.n_mf);
            softmax_into(&self.pool.score_tau[..self.pool.n_mf], &mut w);
            self.ess = ess_of(&w);
            if self.ess >= MIN_ESS {
                let rho = weighted_correlation(&self.pool.points[..self.pool.n_mf * self.d], self.d, &w);
                self.sigma = sigma_update(&rho);
                self.student = StudentT::new(&self.sigma, self.cfg.nu, self.cfg.clamp_l)?;
                if self.r > 1 && self.cfg.partition.is_none() {
                    let cut = min_rcut_partition(&rho, self.r, &SizeRule::Budget { k: self.k_n, n })?;
                    let sizes: Vec<usize> = cut.blocks.iter().map(Vec::len).collect();
                    let ks = refine_resolutions(n, &sizes, self.k_n);
                    partition = Partition::new(self.d, cut.blocks, ks)?;
                    self.mincut_objective = cut.objective;
                }
            }
        }

        let best = self.best_candidates(self.cfg.m_prime.saturating_sub(1));

        let mut rng = substream(self.seed, p, Role::AuxSupport);
        let aux_pts = gen_support_ftilde_mf(
            &vartheta_bar,
            sched.eps_p,
            n,
            self.cfg.m_prime,
            &partition,
            &self.student,
            &best,
            &mut rng,
        )?;
        self.shared = self.cfg.share_support && sched.xi == sched.eps_p;
        let main_pts = if self.shared {
            aux_pts[..n * self.d].to_vec()
        } else {
            let mut rng = substream(self.seed, p, Role::MainSupport);
            gen_support_partitioned(&theta_hat, sched.xi, n, &partition, &mut rng)?
        };
        self.main = ParticleSystem::new(self.d, main_pts)?;
        self.aux = ParticleSystem::new(self.d, aux_pts)?;
        self.main.reset_weights(self.t);
        self.aux.reset_weights(self.t);

        let next_gap = sched.next_time(&self.sched_cfg) - sched.t_cur;
        let tau = if self.pool.n_mf >= 2 && self.ess.is_finite() {
            let (tau, temper) = adapt_tau(next_gap, self.temper, self.ess, self.pool.n_mf);
            self.temper = temper;
            tau
        } else {
            tau_for(next_gap, self.temper)
        };
        self.pool = new_pool(&mode, sched.xi, &self.sigma, self.cfg.n_aux, tau, self.seed, p)?;

        self.sched = sched;
        self.partition = partition;
        self.structured = true;
        self.main_center = theta_hat;
        self.main_radius = sched.xi;
        self.aux_center = vartheta_bar;
        self.aux_radius = sched.eps_p;
        debug_assert!(self.supports_within_balls());
        self.block_start = self.timing.then(Instant::now);

        Ok(TraceRow {
            t: self.t,
            p,
            xi: sched.xi,
            eps: sched.eps_p,
            q: sched.q,
            branch: Some(branch),
            aux_branch: Some(aux_branch),
            z,
            estimate,
            error: None,
            ess: self.ess,
            tau,
            temper: self.temper,
            mincut_objective: self.mincut_objective,
            sigma_norm: self.sigma_norm(),
            partition: self.partition.digest(),
            wall_ns_per_obs: wall,
        })
    }

    /// The `k` highest block log-likelihoods over the pool, the main and the
    /// auxiliary supports (in that order on ties).
    fn best_candidates(&self, k: usize) -> Vec<Scored> {
        let d = self.d;
        let sources: [(&[f64], &[f64]); 3] = [
            (&self.pool.points, &self.pool.score),
            (self.main.points(), self.main.log_weights()),
            (self.aux.points(), self.aux.log_weights()),
        ];
        let mut top: Vec<(f64, usize, usize)> = Vec::with_capacity(k + 1);
        for (s, (_, scores)) in sources.iter().enumerate() {
            for (i, &v) in scores.iter().enumerate() {
                if top.len() == k && top.last().is_some_and(|&(b, _, _)| v <= b) {
                    continue;
                }
                let pos = top.iter().position(|&(b, _, _)| v > b).unwrap_or(top.len());
                top.insert(pos, (v, s, i));
                top.truncate(k);
            }
        }
        top.into_iter()
            .map(|(score, s, i)| Scored { point: sources[s].0[i * d..(i + 1) * d].to_vec(), score })
            .collect()
    }

    /// Main support inside `B_ξ(θ̂)` and auxiliary grid inside `B_ε(ϑ̄)`, each
    /// point on some block slice.
    pub fn supports_within_balls(&self) -> bool {
        let blocks = self.partition.blocks();
        let main_ok = self
            .main
            .rows()
            .all(|x| blocks.iter().any(|b| in_slice(x, &self.main_center, self.main_radius, b)));
        let aux_ok = self
            .aux
            .rows()
            .take(self.cfg.n)
            .all(|x| blocks.iter().any(|b| in_slice(x, &self.aux_center, self.aux_radius, b)));
        main_ok && aux_ok
    }

    /// Consumes up to `opts.horizon` observations in one pass.
    pub fn run<I>(&mut self, stream: I, opts: &RunOptions) -> Result<RunReport>
    where
        I: IntoIterator<Item = Result<Observation>>,
    {
        self.set_timing(opts.timing);
        self.block_start = opts.timing.then(Instant::now);
        let start = Instant::now();
        let mut rows = Vec::new();
        let mut checkpoints = opts.checkpoints.clone();
        checkpoints.sort_unstable();
        let mut next_cp = checkpoints.into_iter().peekable();
        let mut rejected = 0;
        let mut first_rejection = None;
        let mut stream = stream.into_iter();
        let first_t = self.t;
        let mut early_stop = false;
        while self.t < opts.horizon {
            let Some(y) = stream.next() else {
                early_stop = true;
                break;
            };
            let y = y?;
            match self.step(&y) {
                Ok(Some(mut row)) => {
                    row.error = opts.truth.as_ref().map(|th| self.error_of(&row.estimate, th));
                    rows.push(row);
                }
                Ok(None) => {}
                Err(e @ Error::NonFiniteLogDensity { .. }) => {
                    rejected += 1;
                    first_rejection.get_or_insert_with(|| format!("observation {}: {e}", self.t + 1));
                    continue;
                }
                Err(e) => return Err(e),
            }
            while next_cp.peek().is_some_and(|&c| c <= self.t) {
                let c = next_cp.next().unwrap_or_default();
                if c == self.t && rows.last().is_none_or(|r: &TraceRow| r.t != c) {
                    rows.push(self.sample_row(opts.truth.as_deref()));
                }
            }
        }
        let observations = self.t - first_t;
        let wall_ns_per_obs = if opts.timing && observations > 0 {
            start.elapsed().as_nanos() as f64 / observations as f64
        } else {
            0.0
        };
        Ok(RunReport {
            rows,
            final_estimate: self.estimate(),
            observations,
            rejected,
            first_rejection,
            early_stop,
            wall_ns_per_obs,
        })
    }

    fn sigma_norm(&self) -> f64 {
        self.sigma.symmetric_eigenvalues().max()
    }

    fn error_of(&self, estimate: &[f64], truth: &[f64]) -> f64 {
        estimate_distance(truth, estimate, self.model.as_ref())
    }

    fn sample_row(&self, truth: Option<&[f64]>) -> TraceRow {
        let estimate = self.estimate();
        TraceRow {
            t: self.t,
            p: self.sched.p,
            xi: self.sched.xi,
            eps: self.sched.eps_p,
            q: self.sched.q,
            branch: None,
            aux_branch: None,
            z: f64::NAN,
            error: truth.map(|th| self.error_of(&estimate, th)),
            estimate,
            ess: self.ess,
            tau: self.pool.tau,
            temper: self.temper,
            mincut_objective: self.mincut_objective,
            sigma_norm: self.sigma_norm(),
            partition: self.partition.digest(),
            wall_ns_per_obs: 0.0,
        }
    }
}

/// `min_v ‖a − v‖` over the relabelings `v` of `b` (max-norm).
pub fn estimate_distance(a: &[f64], b: &[f64], model: &dyn Model) -> f64 {
    model
        .relabelings(b)
        .iter()
        .map(|v| max_dist(a, v))
        .fold(f64::INFINITY, f64::min)
}

fn fixed_partition(d: usize, blocks: &[Vec<usize>], n: usize, k: usize) -> Result<Partition> {
    let sizes: Vec<usize> = blocks.iter().map(Vec::len).collect();
    if sizes.iter().fold(0usize, |a, &s| a.saturating_add(crate::support::sat_pow(k.max(2), s))) > n {
        return Err(Error::Config("fixed partition does not fit a 2-per-axis grid in N particles".into()));
    }
    let k = crate::meanfield::common_k(n, &sizes);
    Partition::new(d, blocks.to_vec(), refine_resolutions(n, &sizes, k))
}

fn new_pool(center: &[f64], xi: f64, sigma: &DMatrix<f64>, n_aux: usize, tau: u64, seed: u64, p: u64) -> Result<Pool> {
    if n_aux == 0 {
        return Ok(Pool { points: Vec::new(), n_mf: 0, score: Vec::new(), score_tau: Vec::new(), tau });
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    let mut rng = substream(seed, p, Role::Pool);
    let points = aux_pool_sampler(center, xi, &chol, n_aux, &mut rng);
    Ok(Pool { points, n_mf: n_aux / 2, score: vec![0.0; n_aux], score_tau: vec![0.0; n_aux / 2], tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gen_gmm_demo, GaussianLocation, GmmDemo, MixtureLogistic};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gmm_engine(seed: u64) -> Engine {
        let cfg = AlgoConfig { n: 5, m_prime: 2, t1: 10, n_aux: 20, ..AlgoConfig::default() };
        Engine::new(cfg, Arc::new(GmmDemo::default()), &InitSpec { mean: vec![-8.0], var: 0.5 }, seed).unwrap()
    }

    #[test]
    fn first_perturbation_after_t1() {
        let mut e = gmm_engine(1);
        let ys: Vec<_> = gen_gmm_demo(0.0, ChaCha8Rng::seed_from_u64(9)).take(11).collect();
        for (i, y) in ys.iter().enumerate() {
            let row = e.step(y).unwrap();
            assert_eq!(row.is_some(), i == 10, "observation {}", i + 1);
        }
        assert_eq!(e.schedule_state().p, 1);
        assert!(e.supports_within_balls());
    }

    #[test]
    fn horizon_zero_reports_init_mean() {
        let mut e = gmm_engine(2);
        let init_mean = e.main().posterior_mean();
        let rep = e.run(std::iter::empty(), &RunOptions::default()).unwrap();
        assert!(rep.rows.is_empty());
        assert_eq!(rep.final_estimate, init_mean);
    }

    #[test]
    fn early_stop_on_short_stream() {
        let mut e = gmm_engine(3);
        let ys = gen_gmm_demo(0.0, ChaCha8Rng::seed_from_u64(1)).take(25).map(Ok);
        let rep = e.run(ys, &RunOptions { horizon: 100, ..Default::default() }).unwrap();
        assert!(rep.early_stop);
        assert_eq!(rep.observations, 25);
        assert_eq!(rep.rows.len(), 2);
    }

    #[test]
    fn distance_uses_relabelings() {
        let m = MixtureLogistic::new(2, 2);
        let a = [0.8, 1.0, 2.0, -1.0, -2.0];
        let swapped = [-0.8, -1.0, -2.0, 1.0, 2.0];
        assert_eq!(estimate_distance(&a, &swapped, &m), 0.0);
        let g = GaussianLocation::new(2);
        assert_eq!(estimate_distance(&[0.0, 0.0], &[1.0, -3.0], &g), 3.0);
    }

    #[test]
    fn rejects_wrong_covariate_length() {
        let mut e = gmm_engine(4);
        assert!(e.step(&Observation { z: 0.0, x: vec![1.0] }).is_err());
        assert_eq!(e.t(), 0);
    }

    #[test]
    fn off_mode_needs_full_grid() {
        let cfg = AlgoConfig { n: 8, mean_field: MeanField::Off, ..AlgoConfig::default() };
        let r = Engine::new(cfg, Arc::new(GaussianLocation::new(4)), &InitSpec { mean: vec![0.0; 4], var: 1.0 }, 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn mean_field_layout() {
        let cfg = AlgoConfig { n: 40, n_aux: 50, ..AlgoConfig::default() };
        let e = Engine::new(cfg, Arc::new(GaussianLocation::new(6)), &InitSpec { mean: vec![0.0; 6], var: 1.0 }, 0)
            .unwrap();
        assert!(e.is_mean_field());
        assert_eq!(e.layout().0, 2);
        assert_eq!(e.aux().len(), 40 + 3 * 2);
    }
}
