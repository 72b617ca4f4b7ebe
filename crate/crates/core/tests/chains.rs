//! Distributional checks on the backward line-counting chains.

use wfenv::genealogy::{
    chain_run_annealed, chain_run_quenched, sample_env_increment, ChainKind, DAGGER,
    DEFAULT_STATE_CAP,
};
use wfenv::model::{weighted_sigma_mk, Environment, LevyMeasure, ModelParams, SigmaTable};
use wfenv::rng::{replicate_rng, STREAM_AUX, STREAM_BACKWARD};

fn params(sigma: f64, theta: f64, nu0: f64) -> ModelParams {
    ModelParams::new(sigma, theta, nu0).unwrap()
}

/// The killed chain is killed from any state at rate >= theta*nu0, so
/// P(neither absorbed at 0 nor killed by t) <= e^{-theta*nu0*t} fails:
/// killing alone gives P(not killed by t) <= e^{-theta*nu0*t} only until
/// absorption at 0 removes the kill channel. The clean testable bound is
/// P(alive, i.e. not absorbed anywhere, at t) <= e^{-theta*nu0*t}.
#[test]
fn killed_alive_probability_decays_exponentially() {
    let p = params(0.5, 1.0, 0.4); // theta*nu0 = 0.4
    let mu = LevyMeasure::new(vec![(0.8, 0.3)]).unwrap();
    let table = SigmaTable::build(&mu, 1).unwrap();
    let reps = 20_000u64;
    for (ti, t) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let mut alive = 0u64;
        for r in 0..reps {
            let mut rng = replicate_rng(40 + ti as u64, STREAM_BACKWARD, r);
            let path =
                chain_run_annealed(ChainKind::Killed, 3, t, &p, &table, DEFAULT_STATE_CAP, &mut rng)
                    .unwrap();
            let last = path.last_value().unwrap();
            if last != 0.0 && last != DAGGER {
                alive += 1;
            }
        }
        let freq = alive as f64 / reps as f64;
        let bound = (-0.4 * t).exp();
        let se = (freq * (1.0 - freq) / reps as f64).sqrt();
        assert!(
            freq <= bound + 3.0 * se,
            "t={t}: alive frequency {freq} exceeds bound {bound}"
        );
    }
}

/// The atom-then-positive-binomial sampler has the same law as the direct
/// k-channel decomposition with rates C(m,k) sigma_{m,k}: chi-square on the
/// increment from m = 4 lines at the 1% level.
#[test]
fn env_increment_matches_channel_rates_chi_square() {
    let mu = LevyMeasure::new(vec![(0.9, 0.2), (0.4, 0.65)]).unwrap();
    let m = 4u64;
    let draws = 100_000u64;
    let mut counts = [0u64; 5];
    for r in 0..draws {
        let mut rng = replicate_rng(41, STREAM_AUX, r);
        let k = sample_env_increment(&mu, m, &mut rng);
        counts[k as usize] += 1;
    }
    let lambda = mu.lambda(m);
    let mut chi2 = 0.0;
    for k in 1..=m {
        let p = weighted_sigma_mk(&mu, m, k).unwrap() / lambda;
        let expect = p * draws as f64;
        let diff = counts[k as usize] as f64 - expect;
        chi2 += diff * diff / expect;
    }
    // 3 degrees of freedom, 1% critical value
    assert!(chi2 < 11.345, "chi-square {chi2} over counts {counts:?}");
}

/// At an environmental jump of size dp the quenched chain moves i -> i + k
/// with Binomial(i, dp) probabilities; empirical pmf for i = 3, dp = 0.4.
#[test]
fn quenched_jump_increment_is_binomial() {
    let p = params(0.0, 0.0, 0.5);
    // jump at backward time 0 acts before any other transition fires, so
    // the second recorded point isolates the binomial increment
    let mut env = Environment::new(1.0, vec![(0.0, 0.4)]).unwrap();
    env.orientation = wfenv::Orientation::Reversed;
    let draws = 100_000u64;
    let mut counts = [0u64; 4];
    for r in 0..draws {
        let mut rng = replicate_rng(42, STREAM_BACKWARD, r);
        let path =
            chain_run_quenched(ChainKind::Pldasg, 3, &env, 1.0, &p, DEFAULT_STATE_CAP, &mut rng)
                .unwrap();
        let k = path.values[1] as usize - 3;
        counts[k] += 1;
    }
    for k in 0..=3usize {
        let pmf = wfenv::model::binomial(3, k as u64) * 0.4f64.powi(k as i32) * 0.6f64.powi(3 - k as i32);
        let freq = counts[k] as f64 / draws as f64;
        let se = (pmf * (1.0 - pmf) / draws as f64).sqrt();
        assert!((freq - pmf).abs() < 4.0 * se, "k={k}: {freq} vs {pmf}");
    }
}

fn occupancy(
    kind: ChainKind,
    horizon: f64,
    p: &ModelParams,
    table: &SigmaTable,
    paths: u64,
    seed: u64,
    max_state: usize,
) -> Vec<f64> {
    let mut occ = vec![0.0; max_state + 1];
    let mut total = 0.0;
    for r in 0..paths {
        let mut rng = replicate_rng(seed, STREAM_BACKWARD, r);
        let path =
            chain_run_annealed(kind, 1, horizon, p, table, DEFAULT_STATE_CAP, &mut rng).unwrap();
        // time-average over the second half of the run
        let lo = horizon / 2.0;
        let mut t = lo;
        let mut v = path.value_at(lo).unwrap();
        for (s, x) in path.times.iter().zip(&path.values) {
            if *s <= lo {
                continue;
            }
            let idx = (v as usize).min(max_state);
            occ[idx] += s - t;
            total += s - t;
            t = *s;
            v = *x;
        }
        let idx = (v as usize).min(max_state);
        occ[idx] += horizon - t;
        total += horizon - t;
    }
    occ.iter().map(|o| o / total).collect()
}

/// Positive recurrence of the pruned chain: the time-averaged occupancy over
/// the second half of the run is stable when the horizon doubles.
#[test]
fn pldasg_occupancy_stabilizes_with_horizon() {
    let p = params(0.8, 0.6, 0.5);
    let mu = LevyMeasure::new(vec![(0.7, 0.35)]).unwrap();
    let table = SigmaTable::build(&mu, 1).unwrap();
    let a = occupancy(ChainKind::Pldasg, 10.0, &p, &table, 600, 43, 40);
    let b = occupancy(ChainKind::Pldasg, 20.0, &p, &table, 600, 44, 40);
    let tv: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.02 + 0.02, "occupancy total variation {tv}");
}

/// Memory-loss coupling: terminal distributions of the quenched pruned chain
/// from two different starts differ in total variation by at most
/// e^{-theta*nu0*T} (the chain rebuilds from one line at rate theta*nu0).
#[test]
fn quenched_pldasg_forgets_initial_state() {
    let p = params(0.6, 1.0, 0.5); // theta*nu0 = 0.5
    let horizon = 2.0;
    let env = Environment::new(horizon, vec![(0.4, 0.5), (1.3, 0.3)]).unwrap();
    let rev = env.reversed();
    let reps = 30_000u64;
    let max_state = 30usize;
    let terminal = |start: u64, seed: u64| -> Vec<f64> {
        let mut counts = vec![0u64; max_state + 1];
        for r in 0..reps {
            let mut rng = replicate_rng(seed, STREAM_BACKWARD, r);
            let path = chain_run_quenched(
                ChainKind::Pldasg,
                start,
                &rev,
                horizon,
                &p,
                DEFAULT_STATE_CAP,
                &mut rng,
            )
            .unwrap();
            let v = path.last_value().unwrap() as usize;
            counts[v.min(max_state)] += 1;
        }
        counts.iter().map(|&c| c as f64 / reps as f64).collect()
    };
    let from_one = terminal(1, 45);
    let from_six = terminal(6, 46);
    let tv: f64 = from_one
        .iter()
        .zip(&from_six)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0;
    let bound = (-0.5f64 * horizon).exp();
    // statistical slack: TV of two empirical pmfs of equal laws is O(sqrt(k/n))
    let slack = 3.0 * (max_state as f64 / reps as f64).sqrt();
    assert!(tv <= bound + slack, "TV {tv} vs bound {bound} + {slack}");
}
