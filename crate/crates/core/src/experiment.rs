//! Experiment descriptions: model, data source, tunables and presets for the
//! bundled scenarios.

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{AlgoConfig, Engine, InitSpec, RunOptions, RunReport};
use crate::error::{Error, Result};
use crate::models::{
    build_linear_covariance, gen_gmm_demo, gen_linear, gen_mixture, gen_nl1, gen_nl2, mixture_truth,
    CsvStream, GaussianLocation, GmmDemo, MeanFn, MixtureLogistic, Model, Observation, Quantile,
};
use crate::rng::{substream, Role};

/// Statistical model of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// One-dimensional 21-component Gaussian mixture location model.
    GmmDemo,
    /// Sigmoidal quantile regression in four parameters.
    Nl1 { q: f64 },
    Nl2 { q: f64, d: usize },
    /// Linear quantile regression; `rho` is the cross-block covariate
    /// correlation of the synthetic design.
    Linear { q: f64, d: usize, rho: f64 },
    Mixture { components: usize, dx: usize },
    Gaussian { d: usize },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Arc<dyn Model>> {
        let q_ok = |q: f64| {
            if q > 0.0 && q < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("quantile level {q} outside (0,1)")))
            }
        };
        Ok(match *self {
            ModelSpec::GmmDemo => Arc::new(GmmDemo::default()),
            ModelSpec::Nl1 { q } => {
                q_ok(q)?;
                Arc::new(Quantile::new(q, MeanFn::Nl1))
            }
            ModelSpec::Nl2 { q, d } => {
                q_ok(q)?;
                Arc::new(Quantile::new(q, MeanFn::Nl2 { d }))
            }
            ModelSpec::Linear { q, d, .. } => {
                q_ok(q)?;
                if d < 3 {
                    return Err(Error::Config("linear model needs d >= 3".into()));
                }
                Arc::new(Quantile::new(q, MeanFn::Linear { d }))
            }
            ModelSpec::Mixture { components, dx } => {
                if components == 0 || components > 16 || dx < 2 {
                    return Err(Error::Config("mixture needs 1..=16 components and dx >= 2".into()));
                }
                Arc::new(MixtureLogistic::new(components, dx))
            }
            ModelSpec::Gaussian { d } => {
                if d == 0 {
                    return Err(Error::Config("gaussian model needs d >= 1".into()));
                }
                Arc::new(GaussianLocation::new(d))
            }
        })
    }

    /// Seeded default `θ⋆` for synthetic data.
    pub fn default_truth(&self, seed: u64) -> Vec<f64> {
        match *self {
            ModelSpec::GmmDemo => vec![0.0],
            ModelSpec::Nl1 { .. } => vec![70.0, 10.0, 3.0, 10.0],
            ModelSpec::Nl2 { d, .. } => vec![1.0; d],
            ModelSpec::Linear { d, .. } => {
                let mut rng = substream(seed, 1, Role::Truth);
                (0..d).map(|_| rng.random_range(1.0..5.0)).collect()
            }
            ModelSpec::Mixture { components, dx } => {
                mixture_truth(&MixtureLogistic::new(components, dx), &mut substream(seed, 1, Role::Truth))
            }
            ModelSpec::Gaussian { d } => vec![0.0; d],
        }
    }
}

/// Where observations come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    /// i.i.d. draws from the model at `θ⋆`.
    #[default]
    Synthetic,
    /// Rows of a CSV file (response first), optionally shuffled once.
    Csv { path: PathBuf, shuffle_seed: Option<u64> },
}

/// Starting law `N(mean, var · I)`; without an explicit mean, `θ⋆ + shift`
/// when the truth is known, else the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub mean: Option<Vec<f64>>,
    pub shift: Option<f64>,
    pub var: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { mean: None, shift: None, var: 1.0 }
    }
}

/// Run-level settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: u64,
    /// Known `θ⋆` (enables the error column).
    pub truth: Option<Vec<f64>>,
    /// Trace CSV destination.
    pub output: Option<PathBuf>,
    /// Extra trace rows at these observation counts.
    pub checkpoints: Vec<u64>,
    /// Record wall time per observation (traces stop being reproducible).
    pub timing: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 1, horizon: 10_000, truth: None, output: None, checkpoints: Vec::new(), timing: false }
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub model: ModelSpec,
    #[serde(default)]
    pub algo: AlgoConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub data: DataSpec,
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["gmm-demo", "nl1", "nl2", "linear", "mixture"];

/// Bundled scenario configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let with = |model, algo, init, horizon| ExperimentConfig {
        run: RunConfig { horizon, ..RunConfig::default() },
        model,
        algo,
        init,
        data: DataSpec::Synthetic,
    };
    let quantile_init = InitConfig { mean: None, shift: Some(-10.0), var: 1.0 };
    Ok(match name {
        "gmm-demo" => with(
            ModelSpec::GmmDemo,
            AlgoConfig { n: 5, m_prime: 2, t1: 10, n_aux: 100, ..AlgoConfig::default() },
            InitConfig { mean: Some(vec![-8.0]), shift: None, var: 0.5 },
            400_000,
        ),
        "nl1" => with(
            ModelSpec::Nl1 { q: 0.5 },
            AlgoConfig { n: 4096, t1: 5, n_aux: 1000, ..AlgoConfig::default() },
            quantile_init,
            1_000_000,
        ),
        "nl2" => with(
            ModelSpec::Nl2 { q: 0.5, d: 7 },
            AlgoConfig { n: 16_384, t1: 5, n_aux: 20_000, ..AlgoConfig::default() },
            quantile_init,
            1_000_000,
        ),
        "linear" => with(
            ModelSpec::Linear { q: 0.5, d: 20, rho: 0.0 },
            AlgoConfig { n: 35_000, t1: 5, n_aux: 40_000, ..AlgoConfig::default() },
            quantile_init,
            1_000_000,
        ),
        "mixture" => with(
            ModelSpec::Mixture { components: 2, dx: 3 },
            AlgoConfig { n: 16_384, t1: 100, n_aux: 10_000, ..AlgoConfig::default() },
            InitConfig::default(),
            1_000_000,
        ),
        other => {
            return Err(Error::Config(format!("unknown preset {other:?}; known: {}", PRESETS.join(", "))));
        }
    })
}

/// Everything needed to start a run.
pub struct Prepared {
    pub model: Arc<dyn Model>,
    pub truth: Option<Vec<f64>>,
    pub init: InitSpec,
    pub stream: Box<dyn Iterator<Item = Result<Observation>> + Send>,
}

impl ExperimentConfig {
    /// `θ⋆` used for the data and the error column.
    pub fn truth(&self) -> Option<Vec<f64>> {
        match (&self.run.truth, &self.data) {
            (Some(t), _) => Some(t.clone()),
            (None, DataSpec::Synthetic) => Some(self.model.default_truth(self.run.seed)),
            (None, DataSpec::Csv { .. }) => None,
        }
    }

    pub fn prepare(&self) -> Result<Prepared> {
        let model = self.model.build()?;
        let d = model.dim();
        let truth = self.truth();
        if let Some(t) = &truth {
            if t.len() != d {
                return Err(Error::Dimension { expected: d, got: t.len() });
            }
        }
        let mean = match (&self.init.mean, self.init.shift, &truth) {
            (Some(m), _, _) => m.clone(),
            (None, Some(s), Some(t)) => t.iter().map(|v| v + s).collect(),
            _ => vec![0.0; d],
        };
        let init = InitSpec { mean, var: self.init.var };
        let seed = self.run.seed;
        let stream: Box<dyn Iterator<Item = Result<Observation>> + Send> = match &self.data {
            DataSpec::Csv { path, shuffle_seed: None } => Box::new(CsvStream::open(path, model.covariate_dim())?),
            DataSpec::Csv { path, shuffle_seed: Some(s) } => {
                Box::new(crate::models::read_csv(path, model.covariate_dim(), Some(*s))?.into_iter().map(Ok))
            }
            DataSpec::Synthetic => {
                let theta = truth.clone().unwrap_or_else(|| self.model.default_truth(seed));
                let rng = substream(seed, 0, Role::Data);
                match self.model {
                    ModelSpec::GmmDemo => Box::new(gen_gmm_demo(theta[0], rng).map(Ok)),
                    ModelSpec::Nl1 { .. } => Box::new(gen_nl1(theta, rng).map(Ok)),
                    ModelSpec::Nl2 { .. } => Box::new(gen_nl2(theta, rng).map(Ok)),
                    ModelSpec::Linear { d, rho, .. } => {
                        let sigma = build_linear_covariance(d, rho, &mut substream(seed, 2, Role::Truth))?;
                        Box::new(gen_linear(theta, &sigma, rng)?.map(Ok))
                    }
                    ModelSpec::Mixture { components, dx } => {
                        Box::new(gen_mixture(MixtureLogistic::new(components, dx), theta, rng).map(Ok))
                    }
                    ModelSpec::Gaussian { .. } => {
                        let sd = 1.0;
                        let mut rng = rng;
                        Box::new(std::iter::from_fn(move || {
                            let x: Vec<f64> = theta
                                .iter()
                                .map(|m| m + sd * rng.sample::<f64, _>(rand_distr::StandardNormal))
                                .collect();
                            Some(Ok(Observation { z: 0.0, x }))
                        }))
                    }
                }
            }
        };
        Ok(Prepared { model, truth, init, stream })
    }

    pub fn engine(&self, prepared: &Prepared) -> Result<Engine> {
        Engine::new(self.algo.clone(), prepared.model.clone(), &prepared.init, self.run.seed)
    }

    /// Builds the model and data and runs to the horizon.
    pub fn run(&self) -> Result<RunReport> {
        let prepared = self.prepare()?;
        let mut engine = self.engine(&prepared)?;
        let opts = RunOptions {
            horizon: self.run.horizon,
            truth: prepared.truth.clone(),
            checkpoints: self.run.checkpoints.clone(),
            timing: self.run.timing,
        };
        engine.run(prepared.stream, &opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_build_and_default_table() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let p = cfg.prepare().unwrap();
            assert_eq!(p.init.mean.len(), p.model.dim(), "{name}");
            assert_eq!(cfg.algo.kappa, 0.9);
            assert_eq!(cfg.algo.delta, 0.95);
            assert_eq!((cfg.algo.zeta1, cfg.algo.zeta2, cfg.algo.zeta3, cfg.algo.zeta4), (1.0, 0.5, 1.0, 0.5));
            assert_eq!((cfg.algo.nu, cfg.algo.clamp_l, cfg.algo.m_prime), (3.0, 500.0, 2));
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn quantile_init_is_shifted_truth() {
        let p = preset("nl1").unwrap().prepare().unwrap();
        assert_eq!(p.init.mean, vec![60.0, 0.0, -7.0, 0.0]);
    }

    #[test]
    fn linear_truth_in_range_and_seeded() {
        let spec = ModelSpec::Linear { q: 0.5, d: 20, rho: 0.0 };
        let a = spec.default_truth(3);
        assert!(a.iter().all(|v| (1.0..5.0).contains(v)));
        assert_eq!(a, spec.default_truth(3));
        assert_ne!(a, spec.default_truth(4));
    }

    #[test]
    fn csv_without_truth_has_no_error() {
        let cfg = ExperimentConfig {
            run: RunConfig::default(),
            model: ModelSpec::GmmDemo,
            algo: AlgoConfig::default(),
            init: InitConfig::default(),
            data: DataSpec::Csv { path: "x.csv".into(), shuffle_seed: None },
        };
        assert_eq!(cfg.truth(), None);
    }
}
