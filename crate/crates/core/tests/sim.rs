//! Forward-in-time checks: Euler scheme consistency, jump timing, the
//! Moran backends against each other, and both simulators against exact
//! moment formulas.

use wfenv::diffusion::{
    run_quenched, terminal_annealed, terminal_quenched, DiffusionConfig,
};
use wfenv::model::{Environment, LevyMeasure, ModelParams, SigmaTable};
use wfenv::moran::{moran_coupled_run, moran_run, MoranParams};
use wfenv::path::RunningMoments;
use wfenv::recursion::solve_wn;
use wfenv::rng::{replicate_rng, STREAM_AUX, STREAM_FORWARD};

/// Without mutation the frequency is a submartingale: selection and the
/// environment only push upward.
#[test]
fn frequency_is_submartingale_without_mutation() {
    let p = ModelParams::new(0.8, 0.0, 0.5).unwrap();
    let cfg = DiffusionConfig::new(p, 1e-3, 1.0).unwrap();
    let mu = LevyMeasure::new(vec![(0.5, 0.3)]).unwrap();
    let x0 = 0.3;
    let mut acc = RunningMoments::new();
    for r in 0..10_000u64 {
        let mut rng = replicate_rng(300, STREAM_FORWARD, r);
        acc.push(terminal_annealed(&cfg, &mu, x0, &mut rng).unwrap());
    }
    assert!(
        acc.mean() >= x0 - 3.0 * acc.stderr(),
        "mean {} dropped below start {x0}",
        acc.mean()
    );
}

/// Halving dt does not move the terminal mean beyond Monte Carlo noise.
#[test]
fn terminal_mean_is_stable_under_dt_halving() {
    let p = ModelParams::new(1.0, 1.0, 0.3).unwrap();
    let env = Environment::new(1.0, vec![(0.6, 0.4)]).unwrap();
    let run = |dt: f64, seed: u64| {
        let cfg = DiffusionConfig::new(p, dt, 1.0).unwrap();
        let mut acc = RunningMoments::new();
        for r in 0..20_000u64 {
            let mut rng = replicate_rng(seed, STREAM_FORWARD, r);
            acc.push(terminal_quenched(&cfg, &env, 0.4, &mut rng).unwrap());
        }
        acc
    };
    let coarse = run(2e-3, 301);
    let fine = run(1e-3, 302);
    let se = (coarse.stderr().powi(2) + fine.stderr().powi(2)).sqrt();
    assert!(
        (coarse.mean() - fine.mean()).abs() <= 3.0 * se,
        "dt=2e-3 mean {} vs dt=1e-3 mean {} (se {se})",
        coarse.mean(),
        fine.mean()
    );
}

/// A jump listed exactly at the horizon still acts: with the noise and all
/// rates off the terminal value is the jump map applied to x0.
#[test]
fn jump_at_horizon_acts_on_terminal_value() {
    let p = ModelParams::new(0.0, 0.0, 0.5).unwrap();
    let cfg = DiffusionConfig::new(p, 1e-2, 1.0).unwrap().without_noise();
    let env = Environment::new(1.0, vec![(1.0, 0.4)]).unwrap();
    let mut rng = replicate_rng(303, STREAM_FORWARD, 0);
    let path = run_quenched(&cfg, &env, 0.5, &mut rng).unwrap();
    let expect = 0.5 + 0.5 * 0.5 * 0.4;
    assert_eq!(path.last_value(), Some(expect));
    assert_eq!(path.value_at(0.99), Some(0.5));
}

/// The frequency-level Gillespie chain and the individual-level coupled
/// background describe the same process: first two terminal moments agree.
#[test]
fn moran_backends_agree_on_terminal_moments() {
    let p = MoranParams::new(60, 0.3, 0.4, 0.5).unwrap();
    let env = Environment::new(1.0, vec![(0.4, 0.3), (0.8, 0.5)]).unwrap();
    let reps = 5_000u64;
    let x0 = 0.5;
    let mut agg = [RunningMoments::new(), RunningMoments::new()];
    let mut ind = [RunningMoments::new(), RunningMoments::new()];
    for r in 0..reps {
        let mut rng = replicate_rng(304, STREAM_FORWARD, r);
        let xa = moran_run(&p, &env, x0, 1.0, &mut rng).unwrap().last_value().unwrap();
        agg[0].push(xa);
        agg[1].push(xa * xa);
        let mut rng = replicate_rng(305, STREAM_FORWARD, r);
        // delta below every jump size makes the truncated copy identical
        let (full, _, _) = moran_coupled_run(&p, &env, 0.01, x0, 1.0, &mut rng).unwrap();
        let xi = full.last_value().unwrap();
        ind[0].push(xi);
        ind[1].push(xi * xi);
    }
    for m in 0..2 {
        let se = (agg[m].stderr().powi(2) + ind[m].stderr().powi(2)).sqrt();
        assert!(
            (agg[m].mean() - ind[m].mean()).abs() <= 3.0 * se,
            "moment {}: aggregate {} vs individual {} (se {se})",
            m + 1,
            agg[m].mean(),
            ind[m].mean()
        );
    }
}

/// Long-run Moran moments against the stationary moment recursion of the
/// diffusion limit. N = 50 with sigma_N = theta_N = 1/N and time sped up by
/// N corresponds to sigma = theta = 1; the comparison carries an O(1/N)
/// finite-size allowance on top of Monte Carlo error.
#[test]
fn moran_long_run_matches_stationary_moments() {
    let n = 50u64;
    let p = MoranParams::new(n, 1.0 / n as f64, 1.0 / n as f64, 0.5).unwrap();
    let dp = ModelParams::new(1.0, 1.0, 0.5).unwrap();
    let table = SigmaTable::build(&LevyMeasure::empty(), 4).unwrap();
    let w = solve_wn(&dp, &table, 8, 1e-10).unwrap();
    let horizon = 300.0; // 6 diffusion time units
    let env = Environment::empty(horizon);
    let reps = 600u64;
    let mut acc = [RunningMoments::new(), RunningMoments::new()];
    for r in 0..reps {
        let mut rng = replicate_rng(306, STREAM_FORWARD, r);
        let x = moran_run(&p, &env, 0.5, horizon, &mut rng).unwrap().last_value().unwrap();
        acc[0].push(1.0 - x);
        acc[1].push((1.0 - x) * (1.0 - x));
    }
    for (m, a) in acc.iter().enumerate() {
        let exact = w.values[m + 1];
        let allow = 2.0 / n as f64;
        assert!(
            (a.mean() - exact).abs() <= 3.0 * a.stderr() + allow,
            "w_{}: Moran {} vs recursion {exact} (se {})",
            m + 1,
            a.mean(),
            a.stderr()
        );
    }
}

/// Neutral mean relaxation: without selection or environment the mean obeys
/// dE/dt = theta (nu0 - E) exactly.
#[test]
fn neutral_mean_relaxes_exponentially() {
    let p = ModelParams::new(0.0, 1.0, 0.5).unwrap();
    let t = 6.0;
    let cfg = DiffusionConfig::new(p, 1e-3, t).unwrap();
    let env = Environment::empty(t);
    let x0 = 0.2;
    let mut acc = RunningMoments::new();
    for r in 0..20_000u64 {
        let mut rng = replicate_rng(307, STREAM_AUX, r);
        acc.push(terminal_quenched(&cfg, &env, x0, &mut rng).unwrap());
    }
    let exact = 0.5 + (x0 - 0.5) * (-t).exp();
    // 2e-3 covers the Euler weak error at dt = 1e-3
    assert!(
        (acc.mean() - exact).abs() <= 3.0 * acc.stderr() + 2e-3,
        "mean {} vs exact {exact} (se {})",
        acc.mean(),
        acc.stderr()
    );
}
