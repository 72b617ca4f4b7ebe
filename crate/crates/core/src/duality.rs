//! Statistical equivalence checks between forward (frequency process) and
//! backward (line-counting) Monte Carlo estimates, and between Monte Carlo
//! and the deterministic solvers.
//!
//! Every check draws its two sides from independent RNG streams derived
//! from one seed, reports both estimates, and passes when the difference is
//! within three combined standard errors.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diffusion::{terminal_annealed, terminal_quenched, DiffusionConfig};
use crate::error::Result;
use crate::genealogy::{
    chain_run_annealed, chain_run_quenched, ChainKind, DAGGER, DEFAULT_STATE_CAP,
};
use crate::model::{env_sample, Environment, LevyMeasure, ModelParams, SigmaTable};
use crate::path::RunningMoments;
use crate::recursion::{h_series, solve_fearnhead};
use crate::rng::{replicate_rng, STREAM_BACKWARD, STREAM_FORWARD};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub replicates: u64,
    pub tag: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DualityReport {
    pub lhs: MomentEstimate,
    pub rhs: MomentEstimate,
    pub z: f64,
    pub pass: bool,
    pub seed: u64,
    pub config: serde_json::Value,
}

fn make_report(
    lhs: MomentEstimate,
    rhs: MomentEstimate,
    seed: u64,
    config: serde_json::Value,
) -> DualityReport {
    let se = (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt();
    let diff = lhs.value - rhs.value;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    DualityReport {
        pass: z.abs() <= 3.0,
        lhs,
        rhs,
        z,
        seed,
        config,
    }
}

/// Mean and standard error of `observe` over independent replicate streams.
pub fn mc_estimate<F>(
    replicates: u64,
    seed: u64,
    stream: u64,
    tag: &str,
    mut observe: F,
) -> Result<MomentEstimate>
where
    F: FnMut(&mut rand_chacha::ChaCha12Rng) -> Result<f64>,
{
    let mut acc = RunningMoments::new();
    for r in 0..replicates {
        let mut rng = replicate_rng(seed, stream, r);
        acc.push(observe(&mut rng)?);
    }
    Ok(MomentEstimate {
        value: acc.mean(),
        stderr: acc.stderr(),
        replicates,
        tag: tag.into(),
    })
}

/// (1-x)^R with the cemetery contributing 0.
fn dual_observable(terminal: f64, x: f64) -> f64 {
    if terminal == DAGGER {
        0.0
    } else {
        (1.0 - x).powi(terminal as i32)
    }
}

/// Annealed moment duality: E[(1-X(T))^n | X(0)=x] against
/// E[(1-x)^{R(T)} | R(0)=n], both sides integrating out the environment.
pub fn duality_check_annealed(
    params: &ModelParams,
    mu: &LevyMeasure,
    n: u64,
    x: f64,
    horizon: f64,
    dt: f64,
    replicates: u64,
    seed: u64,
) -> Result<DualityReport> {
    let cfg = DiffusionConfig::new(*params, dt, horizon)?;
    let lhs = mc_estimate(replicates, seed, STREAM_FORWARD, "forward-X", |rng| {
        let xt = terminal_annealed(&cfg, mu, x, rng)?;
        Ok((1.0 - xt).powi(n as i32))
    })?;
    let table = SigmaTable::build(mu, 1)?;
    let rhs = mc_estimate(replicates, seed, STREAM_BACKWARD, "backward-R", |rng| {
        let path = chain_run_annealed(
            ChainKind::Killed,
            n,
            horizon,
            params,
            &table,
            DEFAULT_STATE_CAP,
            rng,
        )?;
        Ok(dual_observable(path.last_value().unwrap(), x))
    })?;
    let config = json!({
        "check": "annealed-duality",
        "params": params, "mu": mu, "n": n, "x": x,
        "T": horizon, "dt": dt, "replicates": replicates,
    });
    Ok(make_report(lhs, rhs, seed, config))
}

/// Quenched moment duality against a fixed environment: the backward chain
/// runs on the time-reversed environment.
pub fn duality_check_quenched(
    params: &ModelParams,
    omega: &Environment,
    n: u64,
    x: f64,
    dt: f64,
    replicates: u64,
    seed: u64,
) -> Result<DualityReport> {
    let horizon = omega.horizon;
    let cfg = DiffusionConfig::new(*params, dt, horizon)?;
    let lhs = mc_estimate(replicates, seed, STREAM_FORWARD, "forward-X", |rng| {
        let xt = terminal_quenched(&cfg, omega, x, rng)?;
        Ok((1.0 - xt).powi(n as i32))
    })?;
    let rev = omega.reversed();
    let rhs = mc_estimate(replicates, seed, STREAM_BACKWARD, "backward-R", |rng| {
        let path = chain_run_quenched(
            ChainKind::Killed,
            n,
            &rev,
            horizon,
            params,
            DEFAULT_STATE_CAP,
            rng,
        )?;
        Ok(dual_observable(path.last_value().unwrap(), x))
    })?;
    let config = json!({
        "check": "quenched-duality",
        "params": params, "omega": omega, "n": n, "x": x,
        "dt": dt, "replicates": replicates,
    });
    Ok(make_report(lhs, rhs, seed, config))
}

/// Reinforced annealed duality restricted to an environment window: both
/// sides estimate E[1_{J(T) in [lo,hi)} (1-X(T))^n] by sampling the
/// environment explicitly and weighting by the indicator.
pub fn duality_check_reinforced(
    params: &ModelParams,
    mu: &LevyMeasure,
    n: u64,
    x: f64,
    horizon: f64,
    dt: f64,
    window: (f64, f64),
    replicates: u64,
    seed: u64,
) -> Result<DualityReport> {
    let cfg = DiffusionConfig::new(*params, dt, horizon)?;
    let (lo, hi) = window;
    let lhs = mc_estimate(replicates, seed, STREAM_FORWARD, "forward-X", |rng| {
        let env = env_sample(mu, horizon, rng)?;
        let j = env.total_increment();
        if j < lo || j >= hi {
            return Ok(0.0);
        }
        let xt = terminal_quenched(&cfg, &env, x, rng)?;
        Ok((1.0 - xt).powi(n as i32))
    })?;
    let rhs = mc_estimate(replicates, seed, STREAM_BACKWARD, "backward-R", |rng| {
        let env = env_sample(mu, horizon, rng)?;
        let j = env.total_increment();
        if j < lo || j >= hi {
            return Ok(0.0);
        }
        let path = chain_run_quenched(
            ChainKind::Killed,
            n,
            &env.reversed(),
            horizon,
            params,
            DEFAULT_STATE_CAP,
            rng,
        )?;
        Ok(dual_observable(path.last_value().unwrap(), x))
    })?;
    let config = json!({
        "check": "reinforced-duality",
        "params": params, "mu": mu, "n": n, "x": x,
        "T": horizon, "dt": dt, "window": [lo, hi], "replicates": replicates,
    });
    Ok(make_report(lhs, rhs, seed, config))
}

/// Ancestral-type checks. Without mutation the ancestral-type distribution
/// at horizon T equals E[X(T)], compared by two Monte Carlo runs. With
/// mutation, the long-horizon Monte Carlo of the pruned chain is compared
/// against the deterministic tail-series solver.
pub fn ancestral_check(
    params: &ModelParams,
    mu: &LevyMeasure,
    x: f64,
    horizon: f64,
    dt: f64,
    replicates: u64,
    seed: u64,
) -> Result<DualityReport> {
    let table = SigmaTable::build(mu, 1)?;
    let rhs = mc_estimate(replicates, seed, STREAM_BACKWARD, "backward-L", |rng| {
        let path = chain_run_annealed(
            ChainKind::Pldasg,
            1,
            horizon,
            params,
            &table,
            DEFAULT_STATE_CAP,
            rng,
        )?;
        let l = path.last_value().unwrap();
        Ok(1.0 - (1.0 - x).powi(l as i32))
    })?;
    let lhs = if params.theta == 0.0 {
        let cfg = DiffusionConfig::new(*params, dt, horizon)?;
        mc_estimate(replicates, seed, STREAM_FORWARD, "forward-X", |rng| {
            terminal_annealed(&cfg, mu, x, rng)
        })?
    } else {
        let a = solve_fearnhead(params, &table, 64, 1e-10)?;
        MomentEstimate {
            value: h_series(&a, x)?.value,
            stderr: 0.0,
            replicates: 0,
            tag: "solver".into(),
        }
    };
    let config = json!({
        "check": "ancestral",
        "params": params, "mu": mu, "x": x,
        "T": horizon, "dt": dt, "replicates": replicates,
    });
    Ok(make_report(lhs, rhs, seed, config))
}
