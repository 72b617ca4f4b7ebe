//! Structural and Monte Carlo checks of the triangular spectral machinery:
//! exact identities of the decomposition, agreement with a matrix
//! exponential, composition over time splits, and quenched chain runs.

use wfenv::genealogy::{chain_run_quenched, ChainKind, DAGGER, DEFAULT_STATE_CAP};
use wfenv::model::{Environment, ModelParams};
use wfenv::rng::{replicate_rng, STREAM_BACKWARD};
use wfenv::spectral::{
    ancestral_eval, build_decomposition, quenched_ancestral_coeffs, quenched_moment_coeffs,
    quenched_moment_eval, quenched_wn, DecompKind, Mat,
};

#[test]
fn decomposition_identities_hold_at_block_64() {
    for theta in [0.3, 1.0, 3.0] {
        for kind in [DecompKind::Killed, DecompKind::Pldasg] {
            let d = build_decomposition(kind, theta, 0.5, 64).unwrap();
            let (uv, vu) = d.identity_residuals();
            let q = d.generator_residual();
            assert!(uv < 1e-8, "{kind:?} theta={theta}: |UV-I| = {uv:.3e}");
            assert!(vu < 1e-8, "{kind:?} theta={theta}: |VU-I| = {vu:.3e}");
            assert!(q < 1e-8, "{kind:?} theta={theta}: |UDV-Q| = {q:.3e}");
        }
    }
}

/// The eigen-polynomial expansion of y^n terminates and is exact:
/// y^n = sum_k u_{n,k} P_k(y).
#[test]
fn moment_basis_reproduces_monomials() {
    let d = build_decomposition(DecompKind::Killed, 0.7, 0.4, 64).unwrap();
    for n in 0..=10usize {
        for i in 0..=10 {
            let y = i as f64 / 10.0;
            let err = (d.moment_basis_eval(n, y) - y.powi(n as i32)).abs();
            assert!(err < 1e-7, "n={n} y={y}: err {err:.3e}");
        }
    }
}

/// Dense matrix exponential by scaling and squaring with a Taylor core,
/// adequate as an oracle at small dimension.
fn expm(q: &Mat, t: f64, dim: usize) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..dim)
        .map(|i| q.row(i).iter().map(|&v| v * t / 2f64.powi(30)).collect())
        .collect();
    let mul = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; dim]; dim];
        for i in 0..dim {
            for k in 0..dim {
                let xv = x[i][k];
                if xv != 0.0 {
                    for j in 0..dim {
                        out[i][j] += xv * y[k][j];
                    }
                }
            }
        }
        out
    };
    // Taylor to order 12 on the scaled matrix
    let mut term = a.clone();
    let mut sum = vec![vec![0.0; dim]; dim];
    for (i, row) in sum.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for i in 0..dim {
        for j in 0..dim {
            sum[i][j] += term[i][j];
        }
    }
    for order in 2..=12u32 {
        term = mul(&term, &a);
        let inv = 1.0 / (1..=order).map(f64::from).product::<f64>();
        for i in 0..dim {
            for j in 0..dim {
                sum[i][j] += term[i][j] * inv;
            }
        }
    }
    for _ in 0..30 {
        sum = mul(&sum, &sum);
    }
    sum
}

/// With no jumps C(T) V = U e^{DT} V = e^{QT}.
#[test]
fn coefficients_match_matrix_exponential_without_jumps() {
    let t = 0.7;
    for kind in [DecompKind::Killed, DecompKind::Pldasg] {
        let d = build_decomposition(kind, 1.2, 0.45, 24).unwrap();
        let dim = d.dim();
        let env = Environment::empty(t);
        let c = match kind {
            DecompKind::Killed => quenched_moment_coeffs(&d, &env, 3, 1e-8).unwrap().c,
            DecompKind::Pldasg => quenched_ancestral_coeffs(&d, &env, 1e-8).unwrap().c,
        };
        let semigroup = c.mul(&d.v);
        let oracle = expm(&d.rate_matrix(), t, dim);
        let mut worst = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max((semigroup[(i, j)] - oracle[i][j]).abs());
            }
        }
        assert!(worst < 1e-7, "{kind:?}: |CV - expm| = {worst:.3e}");
    }
}

/// Markov consistency: splitting the window at time s and chaining the two
/// coefficient matrices through V reproduces the one-shot computation.
#[test]
fn coefficients_compose_over_time_splits() {
    let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 32).unwrap();
    let full = Environment::new(2.0, vec![(0.4, 0.35), (1.3, 0.2)]).unwrap();
    let s = 0.9;
    let early = Environment::new(s, vec![(0.4, 0.35)]).unwrap();
    let late = Environment::new(2.0 - s, vec![(1.3 - s, 0.2)]).unwrap();
    let c_full = quenched_moment_coeffs(&d, &full, 2, 1e-8).unwrap().c;
    let c_early = quenched_moment_coeffs(&d, &early, 2, 1e-8).unwrap().c;
    let c_late = quenched_moment_coeffs(&d, &late, 2, 1e-8).unwrap().c;
    let chained = c_late.mul(&d.v).mul(&c_early);
    let diff = chained.max_abs_diff(&c_full);
    assert!(diff < 1e-7, "composition residual {diff:.3e}");
}

/// Every row of the binomial jump matrix whose support fits in the block is
/// a probability distribution.
#[test]
fn binomial_rows_are_stochastic() {
    let d = build_decomposition(DecompKind::Killed, 1.0, 0.5, 64).unwrap();
    for z in [0.1, 0.5, 0.9] {
        let b = d.binomial_matrix(z).unwrap();
        for i in 0..=32usize {
            let sum: f64 = b.row(d.idx(i)).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "z={z} i={i}: row sum {sum}");
        }
    }
}

/// E^omega[(1-x)^{R(T)}] from the coefficient matrix against a quenched
/// Monte Carlo run of the killed chain through the same jump.
#[test]
fn quenched_moments_match_killed_chain_runs() {
    let p = ModelParams::new(0.0, 1.0, 0.5).unwrap();
    let d = build_decomposition(DecompKind::Killed, p.theta, p.nu0, 40).unwrap();
    let env = Environment::new(2.0, vec![(1.0, 0.35)]).unwrap();
    let coeffs = quenched_moment_coeffs(&d, &env, 1, 1e-8).unwrap();
    let x = 0.3;
    let exact = quenched_moment_eval(&coeffs, &d, 1, x).unwrap();
    let rev = env.reversed();
    let reps = 30_000u64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for r in 0..reps {
        let mut rng = replicate_rng(200, STREAM_BACKWARD, r);
        let path =
            chain_run_quenched(ChainKind::Killed, 1, &rev, 2.0, &p, DEFAULT_STATE_CAP, &mut rng)
                .unwrap();
        let v = path.last_value().unwrap();
        let obs = if v == DAGGER { 0.0 } else { (1.0 - x).powi(v as i32) };
        sum += obs;
        sumsq += obs * obs;
    }
    let mean = sum / reps as f64;
    let var = (sumsq / reps as f64 - mean * mean).max(0.0);
    let se = (var / reps as f64).sqrt();
    assert!(
        (mean - exact).abs() <= 3.0 * se,
        "MC {mean} vs spectral {exact} (se {se})"
    );
}

/// W_1(omega) against quenched absorption frequencies at a horizon long
/// enough that the chain has almost surely resolved.
#[test]
fn quenched_absorption_limit_matches_chain_runs() {
    let p = ModelParams::new(0.0, 1.0, 0.5).unwrap();
    let d = build_decomposition(DecompKind::Killed, p.theta, p.nu0, 40).unwrap();
    let horizon = 12.0;
    let env = Environment::new(horizon, vec![(11.0, 0.4)]).unwrap();
    let w1 = quenched_wn(&d, &env, 1, 1e-8).unwrap()[0];
    let rev = env.reversed();
    let reps = 20_000u64;
    let mut hits = 0u64;
    for r in 0..reps {
        let mut rng = replicate_rng(201, STREAM_BACKWARD, r);
        let path = chain_run_quenched(
            ChainKind::Killed,
            1,
            &rev,
            horizon,
            &p,
            DEFAULT_STATE_CAP,
            &mut rng,
        )
        .unwrap();
        if path.last_value() == Some(0.0) {
            hits += 1;
        }
    }
    let freq = hits as f64 / reps as f64;
    let se = (freq * (1.0 - freq) / reps as f64).sqrt();
    // finite-horizon gap: P(still undecided at T) <= e^{-theta*nu0*T}
    let slack = (-p.theta_nu0() * horizon).exp();
    assert!(
        (freq - w1).abs() <= 3.0 * se + slack,
        "MC {freq} vs limit {w1} (se {se})"
    );
}

/// h^omega_T(x) from the ancestral coefficients against a quenched Monte
/// Carlo run of the pruned chain through two jumps.
#[test]
fn quenched_ancestral_matches_pruned_chain_runs() {
    let p = ModelParams::new(0.0, 0.8, 0.5).unwrap();
    let d = build_decomposition(DecompKind::Pldasg, p.theta, p.nu0, 40).unwrap();
    let horizon = 2.0;
    let env = Environment::new(horizon, vec![(0.7, 0.4), (1.5, 0.3)]).unwrap();
    let coeffs = quenched_ancestral_coeffs(&d, &env, 1e-8).unwrap();
    let rev = env.reversed();
    let reps = 20_000u64;
    for (xi, x) in [0.3, 0.6].into_iter().enumerate() {
        let exact = ancestral_eval(&coeffs, &d, x).unwrap();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for r in 0..reps {
            let mut rng = replicate_rng(210 + xi as u64, STREAM_BACKWARD, r);
            let path = chain_run_quenched(
                ChainKind::Pldasg,
                1,
                &rev,
                horizon,
                &p,
                DEFAULT_STATE_CAP,
                &mut rng,
            )
            .unwrap();
            let l = path.last_value().unwrap();
            let obs = 1.0 - (1.0 - x).powi(l as i32);
            sum += obs;
            sumsq += obs * obs;
        }
        let mean = sum / reps as f64;
        let var = (sumsq / reps as f64 - mean * mean).max(0.0);
        let se = (var / reps as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se,
            "x={x}: MC {mean} vs spectral {exact} (se {se})"
        );
    }
}
