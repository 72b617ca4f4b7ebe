//! Exact-event simulation of the finite-N two-type Moran model in a simple
//! (finitely many jumps) environment.
//!
//! Two backends: a frequency-level Gillespie chain used everywhere, and an
//! explicit individual-level background used by the coupling experiment,
//! where the shared randomness lives on individuals.

use rand::Rng;
use rand_distr::{Distribution, Exp, Hypergeometric};

use crate::error::{Error, Result};
use crate::genealogy::sample_binomial;
use crate::model::{Environment, Orientation};
use crate::path::PathSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranParams {
    pub n: u64,
    pub sigma_n: f64,
    pub theta_n: f64,
    pub nu0: f64,
}

impl MoranParams {
    pub fn new(n: u64, sigma_n: f64, theta_n: f64, nu0: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain("population size must be >= 1".into()));
        }
        if !(sigma_n >= 0.0) || !(theta_n >= 0.0) {
            return Err(Error::Domain("rates must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&nu0) {
            return Err(Error::Domain(format!("nu0 must be in [0,1], got {nu0}")));
        }
        Ok(Self { n, sigma_n, theta_n, nu0 })
    }

    pub fn nu1(&self) -> f64 {
        1.0 - self.nu0
    }

    /// Converts a frequency in the lattice {0, 1/N, ..., 1} to a count.
    pub fn count_from_frequency(&self, x0: f64) -> Result<u64> {
        let scaled = x0 * self.n as f64;
        let rounded = scaled.round();
        if !(0.0..=1.0).contains(&x0) || (scaled - rounded).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "x0 = {x0} is not a multiple of 1/{}",
                self.n
            )));
        }
        Ok(rounded as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranState {
    pub n: u64,
    pub fit_count: u64,
    pub time: f64,
}

impl MoranState {
    pub fn frequency(&self) -> f64 {
        self.fit_count as f64 / self.n as f64
    }
}

/// Environmental jump: each fit individual is marked with probability dp
/// (binomial), the marked ones copy onto targets drawn uniformly without
/// replacement from the whole population (hypergeometric count of unfit
/// targets). Time is unchanged.
pub fn moran_env_jump<R: Rng + ?Sized>(state: MoranState, dp: f64, rng: &mut R) -> Result<MoranState> {
    if !(dp > 0.0 && dp < 1.0) {
        return Err(Error::Domain(format!("dp must be in (0,1), got {dp}")));
    }
    let b = sample_binomial(state.fit_count, dp, rng);
    let unfit = state.n - state.fit_count;
    let h = if b == 0 || unfit == 0 {
        0
    } else {
        Hypergeometric::new(state.n, unfit, b)
            .map_err(|e| Error::Domain(format!("hypergeometric: {e}")))?
            .sample(rng)
    };
    Ok(MoranState {
        fit_count: state.fit_count + h,
        ..state
    })
}

/// Frequency-level Gillespie run up to `horizon`, applying the listed
/// environmental jumps at their times.
pub fn moran_run<R: Rng + ?Sized>(
    params: &MoranParams,
    omega: &Environment,
    x0: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<PathSample> {
    if omega.orientation != Orientation::Forward {
        return Err(Error::Domain("moran_run needs a forward environment".into()));
    }
    if horizon > omega.horizon {
        return Err(Error::Domain(format!(
            "run horizon {horizon} exceeds environment horizon {}",
            omega.horizon
        )));
    }
    let nf = params.n as f64;
    let mut state = MoranState {
        n: params.n,
        fit_count: params.count_from_frequency(x0)?,
        time: 0.0,
    };
    let mut path = PathSample::new();
    path.push(0.0, state.frequency());

    let mut jumps = omega.jumps.iter().filter(|j| j.t <= horizon).peekable();
    while let Some(j) = jumps.peek() {
        if j.t == 0.0 {
            state = moran_env_jump(state, j.dp, rng)?;
            path.push(0.0, state.frequency());
            jumps.next();
        } else {
            break;
        }
    }

    loop {
        let boundary = jumps.peek().map_or(horizon, |j| j.t);
        loop {
            let x = state.frequency();
            let up = nf * (1.0 + params.sigma_n) * x * (1.0 - x) + nf * params.theta_n * params.nu0 * (1.0 - x);
            let down = nf * x * (1.0 - x) + nf * params.theta_n * params.nu1() * x;
            let total = up + down;
            if total == 0.0 {
                state.time = boundary;
                break;
            }
            let wait = Exp::new(total).expect("positive rate").sample(rng);
            if state.time + wait > boundary {
                state.time = boundary;
                break;
            }
            state.time += wait;
            if rng.random_range(0.0..total) < up {
                state.fit_count += 1;
            } else {
                state.fit_count -= 1;
            }
            path.push(state.time, state.frequency());
        }
        match jumps.next() {
            Some(j) => {
                state = moran_env_jump(state, j.dp, rng)?;
                path.push(state.time, state.frequency());
            }
            None => break,
        }
    }
    Ok(path)
}

/// One individual-level background event.
enum Event {
    /// Source reproduces onto target; fires unconditionally.
    Neutral { source: usize, target: usize },
    /// Source reproduces onto target only if the source is fit.
    Selective { source: usize, target: usize },
    /// Individual mutates to the given type.
    Mutation { individual: usize, to_fit: bool },
}

fn fit_count(types: &[bool]) -> u64 {
    types.iter().filter(|&&b| b).count() as u64
}

fn apply_event(types: &mut [bool], ev: &Event) {
    match *ev {
        Event::Neutral { source, target } => types[target] = types[source],
        Event::Selective { source, target } => {
            if types[source] {
                types[target] = true;
            }
        }
        Event::Mutation { individual, to_fit } => types[individual] = to_fit,
    }
}

/// Environmental jump on a type vector with externally supplied randomness:
/// individual i is marked when it is fit and `uniforms[i] <= dp`; marked
/// individuals copy onto `targets[i]`. `targets` must be a permutation so
/// the marked set maps injectively.
fn apply_env_jump(types: &mut [bool], dp: f64, uniforms: &[f64], targets: &[usize]) {
    let marked: Vec<usize> = (0..types.len())
        .filter(|&i| types[i] && uniforms[i] <= dp)
        .collect();
    for &i in &marked {
        types[targets[i]] = true;
    }
}

fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Runs the model under `omega` and under its large-jump part (jumps of
/// size >= delta) on one shared individual-level background, from identical
/// initial configurations. Returns both frequency paths and the largest
/// frequency discrepancy seen along the run.
pub fn moran_coupled_run<R: Rng + ?Sized>(
    params: &MoranParams,
    omega: &Environment,
    delta: f64,
    x0: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<(PathSample, PathSample, f64)> {
    if omega.orientation != Orientation::Forward {
        return Err(Error::Domain("coupled run needs a forward environment".into()));
    }
    if horizon > omega.horizon {
        return Err(Error::Domain(format!(
            "run horizon {horizon} exceeds environment horizon {}",
            omega.horizon
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must be in (0,1), got {delta}")));
    }
    let n = params.n as usize;
    let k0 = params.count_from_frequency(x0)? as usize;
    let mut full: Vec<bool> = (0..n).map(|i| i < k0).collect();
    let mut trunc = full.clone();

    let nf = params.n as f64;
    // the background clock is state-independent
    let total_rate = nf * (1.0 + params.sigma_n + params.theta_n);
    let mut path_full = PathSample::new();
    let mut path_trunc = PathSample::new();
    let mut sup = 0.0f64;
    let record = |t: f64, full: &[bool], trunc: &[bool], pf: &mut PathSample, pt: &mut PathSample, sup: &mut f64| {
        let xf = fit_count(full) as f64 / nf;
        let xt = fit_count(trunc) as f64 / nf;
        pf.push(t, xf);
        pt.push(t, xt);
        *sup = sup.max((xf - xt).abs());
    };
    record(0.0, &full, &trunc, &mut path_full, &mut path_trunc, &mut sup);

    let mut t = 0.0;
    let mut jumps = omega.jumps.iter().filter(|j| j.t <= horizon).peekable();
    loop {
        let boundary = jumps.peek().map_or(horizon, |j| j.t);
        loop {
            if total_rate == 0.0 {
                break;
            }
            let wait = Exp::new(total_rate).expect("positive rate").sample(rng);
            if t + wait > boundary {
                break;
            }
            t += wait;
            let u = rng.random_range(0.0..1.0 + params.sigma_n + params.theta_n);
            let ev = if u < 1.0 {
                Event::Neutral {
                    source: rng.random_range(0..n),
                    target: rng.random_range(0..n),
                }
            } else if u < 1.0 + params.sigma_n {
                Event::Selective {
                    source: rng.random_range(0..n),
                    target: rng.random_range(0..n),
                }
            } else {
                Event::Mutation {
                    individual: rng.random_range(0..n),
                    to_fit: rng.random_range(0.0..1.0) < params.nu0,
                }
            };
            apply_event(&mut full, &ev);
            apply_event(&mut trunc, &ev);
            record(t, &full, &trunc, &mut path_full, &mut path_trunc, &mut sup);
        }
        t = boundary;
        match jumps.next() {
            Some(j) => {
                let uniforms: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let targets = random_permutation(n, rng);
                apply_env_jump(&mut full, j.dp, &uniforms, &targets);
                if j.dp >= delta {
                    apply_env_jump(&mut trunc, j.dp, &uniforms, &targets);
                }
                record(t, &full, &trunc, &mut path_full, &mut path_trunc, &mut sup);
            }
            None => break,
        }
    }
    Ok((path_full, path_trunc, sup))
}
