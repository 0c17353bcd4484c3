//! Perturbation schedule and the scalar sequences driving support radii.
//!
//! Perturbation `p` fires when observation `t_p + 1` arrives. Gaps between
//! perturbation times grow geometrically (by a factor close to `κ^{-2}`) so
//! the number of perturbations up to time `t` is `O(log t)`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub kappa: f64,
    pub t1: u64,
    pub eps0: f64,
    pub varrho: f64,
    pub beta: f64,
    pub varepsilon: f64,
    /// Parameter dimension.
    pub d: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return config_err(format!("kappa must lie in (0,1), got {}", self.kappa));
        }
        if !(self.varrho > 2.0) {
            return config_err(format!("varrho must exceed 2, got {}", self.varrho));
        }
        if !(self.eps0 > 0.0 && self.beta > 0.0 && self.varepsilon > 0.0) {
            return config_err("eps0, beta and varepsilon must be positive");
        }
        if self.t1 == 0 {
            return config_err("t1 must be at least 1");
        }
        if self.d == 0 {
            return config_err("parameter dimension must be at least 1");
        }
        Ok(())
    }
}

/// `t_p` from `t_{p-1}`: the increment is `max(ceil((κ^{-2} − 1) t_{p-1}), t_1)`,
/// saturating at `u64::MAX`.
pub fn next_perturbation_time(t_prev: u64, cfg: &ScheduleConfig) -> u64 {
    let growth = (cfg.kappa.powi(-2) - 1.0) * t_prev as f64;
    let inc = (growth.ceil() as u64).max(cfg.t1);
    t_prev.saturating_add(inc)
}

/// Iterator over `t_1, t_2, ...`.
pub fn perturbation_times(cfg: ScheduleConfig) -> impl Iterator<Item = u64> {
    let mut t = 0u64;
    std::iter::from_fn(move || {
        t = next_perturbation_time(t, &cfg);
        Some(t)
    })
}

/// Guidance radius `ε_p = ε_0 · min(1, (ϱ ln(p+1) / p)^{1/(d+β)})` for `p ≥ 1`;
/// `p = 0` returns `ε_0`.
pub fn epsilon_p(p: u64, cfg: &ScheduleConfig) -> f64 {
    if p == 0 {
        return cfg.eps0;
    }
    let p = p as f64;
    let base = cfg.varrho * (p + 1.0).ln() / p;
    let expo = 1.0 / (cfg.d as f64 + cfg.beta);
    cfg.eps0 * base.powf(expo).min(1.0)
}

/// `c_0 = 1`, `c_p = min(((1+κ)/(2κ))^p, p^{(1+ε)/2})`.
pub fn c_p(p: u64, cfg: &ScheduleConfig) -> f64 {
    if p == 0 {
        return 1.0;
    }
    let geometric = ((1.0 + cfg.kappa) / (2.0 * cfg.kappa)).powi(p as i32);
    let poly = (p as f64).powf((1.0 + cfg.varepsilon) / 2.0);
    geometric.min(poly)
}

/// Which estimate became the new support center at a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `‖θ̄ − ϑ̄‖ ≤ 2ε_p`: keep the main estimate and shrink the radius.
    Own,
    /// The auxiliary estimate took over; radius reset to `ε_p`.
    Aux,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Own => "own",
            Branch::Aux => "aux",
        }
    }
}

/// Schedule bookkeeping after perturbation `p` (`p = 0` before the first one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub p: u64,
    /// `t_{p-1}`.
    pub t_prev: u64,
    /// `t_p`; perturbation `p` fired at observation `t_p + 1`.
    pub t_cur: u64,
    /// Consecutive perturbations that kept the main estimate.
    pub q: u64,
    /// Support radius `ξ_p`.
    pub xi: f64,
    /// Guidance radius `ε_p`.
    pub eps_p: f64,
    /// `c_{q_{p-1}}`.
    pub c_prev: f64,
    /// `c_{q_p}`.
    pub c_cur: f64,
}

impl ScheduleState {
    /// State before any perturbation: `t_0 = 0`, `q_0 = 0`, `ξ_0 = 1`, `ε_0` from the config.
    pub fn initial(cfg: &ScheduleConfig) -> Self {
        Self {
            p: 0,
            t_prev: 0,
            t_cur: 0,
            q: 0,
            xi: 1.0,
            eps_p: epsilon_p(0, cfg),
            c_prev: 1.0,
            c_cur: 1.0,
        }
    }

    /// Observation count `t_{p+1}` at which the next perturbation fires (it
    /// runs on arrival of observation `t_{p+1} + 1`).
    pub fn next_time(&self, cfg: &ScheduleConfig) -> u64 {
        next_perturbation_time(self.t_cur, cfg)
    }

    /// Guidance radius the next perturbation will test against.
    pub fn next_eps(&self, cfg: &ScheduleConfig) -> f64 {
        epsilon_p(self.p + 1, cfg)
    }
}

/// Advance from perturbation `p − 1` to `p` given the distance between the two
/// point estimates.
pub fn apply_interaction(
    state: &ScheduleState,
    dist: f64,
    cfg: &ScheduleConfig,
) -> (ScheduleState, Branch) {
    let p = state.p + 1;
    let eps_p = epsilon_p(p, cfg);
    let t_prev = state.t_cur;
    let t_cur = next_perturbation_time(t_prev, cfg);
    if dist <= 2.0 * eps_p {
        let q = state.q + 1;
        let c_prev = c_p(state.q, cfg);
        let c_cur = c_p(q, cfg);
        let xi = cfg.kappa * (c_cur / c_prev) * state.xi;
        let next = ScheduleState {
            p,
            t_prev,
            t_cur,
            q,
            xi,
            eps_p,
            c_prev,
            c_cur,
        };
        (next, Branch::Own)
    } else {
        let next = ScheduleState {
            p,
            t_prev,
            t_cur,
            q: 1,
            xi: eps_p,
            eps_p,
            c_prev: c_p(state.q, cfg),
            c_cur: c_p(1, cfg),
        };
        (next, Branch::Aux)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize) -> ScheduleConfig {
        ScheduleConfig {
            kappa: 0.9,
            t1: 10,
            eps0: 1.0,
            varrho: 2.1,
            beta: 0.01,
            varepsilon: 0.1,
            d,
        }
    }

    #[test]
    fn perturbation_time_examples() {
        let c = cfg(1);
        assert_eq!(next_perturbation_time(0, &c), 10);
        assert_eq!(next_perturbation_time(10, &c), 20);
        assert_eq!(next_perturbation_time(50, &c), 62);
    }

    #[test]
    fn epsilon_examples() {
        let c = cfg(4);
        assert_eq!(epsilon_p(1, &c), 1.0);
        let c1 = cfg(1);
        let expected = (2.1 * 101f64.ln() / 100.0).powf(1.0 / 1.01);
        assert!((epsilon_p(100, &c1) - expected).abs() < 1e-15);
        assert!((expected - 0.099_183_164_718_723).abs() < 1e-12);
    }

    #[test]
    fn c_examples() {
        let c = cfg(1);
        assert_eq!(c_p(0, &c), 1.0);
        assert_eq!(c_p(1, &c), 1.0);
        assert!((c_p(2, &c) - 1.114_197_530_864_197_6).abs() < 1e-12);
    }

    #[test]
    fn interaction_branches() {
        let c = cfg(1);
        let s = ScheduleState::initial(&c);
        let (own, b) = apply_interaction(&s, 0.0, &c);
        assert_eq!(b, Branch::Own);
        assert_eq!(own.q, 1);

        let eps1 = epsilon_p(1, &c);
        let (aux, b) = apply_interaction(&s, 3.0 * eps1, &c);
        assert_eq!(b, Branch::Aux);
        assert_eq!(aux.q, 1);
        assert_eq!(aux.xi, aux.eps_p);

        let prev = ScheduleState { q: 1, xi: 1.0, ..own };
        let (next, b) = apply_interaction(&prev, 0.0, &c);
        assert_eq!(b, Branch::Own);
        assert!((next.xi - 0.9 * 1.114_197_530_864_197_6).abs() < 1e-12);
        assert!((next.xi - 1.002_78).abs() < 1e-5);
    }

    #[test]
    fn aux_branch_on_boundary_is_own() {
        let c = cfg(2);
        let s = ScheduleState::initial(&c);
        let eps1 = epsilon_p(1, &c);
        assert_eq!(apply_interaction(&s, 2.0 * eps1, &c).1, Branch::Own);
    }
}
