//! Deterministic solvers for the annealed stationary moments w_n, the tail
//! probabilities a_n = P(L_inf > n) of the pruned lookdown chain, the
//! ancestral type distribution h(x) built from them, and the Simpson index.
//!
//! Both recursions couple each unknown to finitely many higher ones through
//! the environmental channels, so truncation closes the system with
//! w_m = 0 (resp. a_m = 0) beyond the working level K. Acceptance is by
//! K-doubling stability, not an a-priori bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KahanSum, ModelParams, SigmaTable};

/// Solved moment or tail vector. `values[n]` holds w_n (or a_n) for
/// n = 0..=k, with values[0] = 1. `defect` is the max absolute residual of
/// the recursion over n <= k/2, where truncation plays no role.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MomentVector {
    #[serde(rename = "K")]
    pub k: usize,
    pub values: Vec<f64>,
    pub defect: f64,
    pub tol: f64,
}

impl MomentVector {
    pub fn get(&self, n: usize) -> f64 {
        if n <= self.k {
            self.values[n]
        } else {
            0.0
        }
    }
}

const MAX_DOUBLINGS: u32 = 5;

fn ensure_table(table: &SigmaTable, m_max: u64) -> Result<SigmaTable> {
    if table.m_max() >= m_max {
        Ok(table.clone())
    } else {
        SigmaTable::build(table.measure(), m_max)
    }
}

fn check_shape(label: &str, values: &[f64]) -> Result<()> {
    let slack = 1e-8;
    let mut prev = 1.0 + slack;
    for (n, &v) in values.iter().enumerate() {
        if !(-slack..=1.0 + slack).contains(&v) {
            return Err(Error::Convergence(format!(
                "{label}[{n}] = {v} outside [0,1]"
            )));
        }
        if v > prev + slack {
            return Err(Error::Convergence(format!(
                "{label}[{n}] = {v} increases past {prev}"
            )));
        }
        prev = v;
    }
    Ok(())
}

/// Stationary moments w_n = E[(1-X(inf))^n] of the annealed frequency
/// process, n = 0..=K. Requires theta > 0 and both mutation directions
/// active, the regime in which the stationary law is unique.
pub fn solve_wn(
    params: &ModelParams,
    table: &SigmaTable,
    k: usize,
    tol: f64,
) -> Result<MomentVector> {
    if params.theta <= 0.0 || params.nu0 <= 0.0 || params.nu0 >= 1.0 {
        return Err(Error::Domain(
            "stationary moments need theta > 0 and nu0 in (0,1)".into(),
        ));
    }
    if k < 2 {
        return Err(Error::Domain("K must be >= 2".into()));
    }
    solve_doubling("w", params, table, k, tol, solve_wn_at)
}

/// Tail probabilities a_n = P(L_inf > n) of the stationary pruned lookdown
/// line count, n = 0..=K.
pub fn solve_fearnhead(
    params: &ModelParams,
    table: &SigmaTable,
    k: usize,
    tol: f64,
) -> Result<MomentVector> {
    if k < 2 {
        return Err(Error::Domain("K must be >= 2".into()));
    }
    solve_doubling("a", params, table, k, tol, solve_fearnhead_at)
}

fn solve_doubling(
    label: &str,
    params: &ModelParams,
    table: &SigmaTable,
    k0: usize,
    tol: f64,
    solve_at: fn(&ModelParams, &SigmaTable, usize) -> Result<Vec<f64>>,
) -> Result<MomentVector> {
    // the reported entries are n <= k0; the internal truncation level is
    // doubled until those entries stop moving (tail entries near the
    // truncation edge converge only slowly and are never reported)
    let mut trunc = 2 * k0;
    let t = ensure_table(table, trunc as u64)?;
    let mut coarse = solve_at(params, &t, trunc)?;
    for _ in 0..MAX_DOUBLINGS {
        let trunc2 = 2 * trunc;
        let t2 = ensure_table(table, trunc2 as u64)?;
        let fine = solve_at(params, &t2, trunc2)?;
        let diff = (0..=k0)
            .map(|n| (coarse[n] - fine[n]).abs())
            .fold(0.0f64, f64::max);
        if diff < tol {
            check_shape(label, &fine)?;
            let defect = match label {
                "w" => wn_defect(params, &t2, &fine)?,
                _ => fearnhead_defect(params, &t2, &fine)?,
            };
            return Ok(MomentVector {
                k: k0,
                values: fine[..=k0].to_vec(),
                defect,
                tol,
            });
        }
        trunc = trunc2;
        coarse = fine;
    }
    Err(Error::Convergence(format!(
        "{label}-recursion not stable after {MAX_DOUBLINGS} doublings from K={k0} at tol {tol}"
    )))
}

/// Dense solve of the w-recursion truncated at level k (w_m = 0 beyond).
fn solve_wn_at(params: &ModelParams, table: &SigmaTable, k: usize) -> Result<Vec<f64>> {
    let (sigma, theta, tn1) = (params.sigma, params.theta, params.theta_nu1());
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    // unknown index n-1 holds w_n, n = 1..=k
    for n in 1..=k {
        let fnn = n as f64;
        let row = n - 1;
        let mut diag = sigma + theta + fnn - 1.0;
        if n + 1 <= k {
            a[(row, n)] -= sigma;
        }
        if n >= 2 {
            a[(row, n - 2)] -= tn1 + fnn - 1.0;
        } else {
            rhs[row] += tn1;
        }
        for j in 1..=n {
            let w = table.weighted(n as u64, j as u64)? / fnn;
            diag += w;
            if n + j <= k {
                a[(row, n + j - 1)] -= w;
            }
        }
        a[(row, row)] += diag;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Convergence("singular w-recursion system".into()))?;
    let mut values = Vec::with_capacity(k + 1);
    values.push(1.0);
    values.extend(sol.iter());
    Ok(values)
}

/// Dense solve of the tail-probability recursion truncated at level k.
fn solve_fearnhead_at(params: &ModelParams, table: &SigmaTable, k: usize) -> Result<Vec<f64>> {
    let (sigma, theta, tn1) = (params.sigma, params.theta, params.theta_nu1());
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    // unknown index n-1 holds a_n, n = 1..=k
    for n in 1..=k {
        let fnn = n as f64;
        let row = n - 1;
        a[(row, row)] += sigma + theta + fnn + 1.0;
        if n + 1 <= k {
            a[(row, n)] -= tn1 + fnn + 1.0;
        }
        if n >= 2 {
            a[(row, n - 2)] -= sigma;
        } else {
            rhs[row] += sigma;
        }
        for j in 1..=n {
            let g = table.gamma_ij(n as u64 + 1, j as u64)? / fnn;
            if g == 0.0 {
                continue;
            }
            // contributes -g a_{j-1} + g a_j to the left-hand side
            if j >= 2 {
                a[(row, j - 2)] -= g;
            } else {
                rhs[row] += g;
            }
            a[(row, j - 1)] += g;
        }
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Convergence("singular tail-recursion system".into()))?;
    let mut values = Vec::with_capacity(k + 1);
    values.push(1.0);
    values.extend(sol.iter());
    Ok(values)
}

fn wn_defect(params: &ModelParams, table: &SigmaTable, w: &[f64]) -> Result<f64> {
    let k = w.len() - 1;
    let get = |m: usize| if m <= k { w[m] } else { 0.0 };
    let mut worst = 0.0f64;
    for n in 1..=k / 2 {
        let fnn = n as f64;
        let mut env = KahanSum::new();
        for j in 1..=n {
            env.add(table.weighted(n as u64, j as u64)? * (get(n + j) - w[n]));
        }
        let lhs = (params.sigma + params.theta + fnn - 1.0) * w[n];
        let rhs = params.sigma * get(n + 1)
            + (params.theta_nu1() + fnn - 1.0) * w[n - 1]
            + env.value() / fnn;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

fn fearnhead_defect(params: &ModelParams, table: &SigmaTable, a: &[f64]) -> Result<f64> {
    let k = a.len() - 1;
    let get = |m: usize| if m <= k { a[m] } else { 0.0 };
    let mut worst = 0.0f64;
    for n in 1..=k / 2 {
        let fnn = n as f64;
        let mut env = KahanSum::new();
        for j in 1..=n {
            env.add(table.gamma_ij(n as u64 + 1, j as u64)? * (a[j - 1] - a[j]));
        }
        let lhs = (params.sigma + params.theta + fnn + 1.0) * a[n];
        let rhs = params.sigma * a[n - 1]
            + (params.theta_nu1() + fnn + 1.0) * get(n + 1)
            + env.value() / fnn;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Value of the truncated ancestral-type series together with its tail
/// bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// h(x) = sum_{n>=0} x (1-x)^n a_n evaluated from a solved tail vector.
/// The dropped tail is at most (1-x)^{K+1}.
pub fn h_series(a: &MomentVector, x: f64) -> Result<SeriesValue> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x must be in [0,1], got {x}")));
    }
    let mut s = KahanSum::new();
    let mut geom = x;
    for n in 0..=a.k {
        s.add(geom * a.values[n]);
        geom *= 1.0 - x;
    }
    Ok(SeriesValue {
        value: s.value().clamp(0.0, 1.0),
        tail_bound: (1.0 - x).powi(a.k as i32 + 1),
    })
}

/// Expected stationary Simpson index, 1 - 2 w_1 + 2 w_2.
pub fn simpson_index(w: &MomentVector) -> f64 {
    1.0 - 2.0 * w.values[1] + 2.0 * w.values[2]
}
