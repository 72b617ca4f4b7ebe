//! Line-counting dual chains run in backward time: the killed ancestral
//! selection graph R on {0,1,2,...} + cemetery, the pruned lookdown ASG L
//! on {1,2,...}, and the Siegmund-dual chain D of L.
//!
//! Annealed runs integrate out the environment (simultaneous branchings fire
//! at total rate Lambda_m, realized atom-by-atom); quenched runs take a
//! fixed, already time-reversed environment and apply a binomial branching
//! at each of its jump times.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Environment, KahanSum, LevyMeasure, ModelParams, Orientation, SigmaTable};
use crate::path::PathSample;

/// Cemetery encoding in recorded paths and CSV output.
pub const DAGGER: f64 = -1.0;

/// Default ceiling on the line count before a run aborts.
pub const DEFAULT_STATE_CAP: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    /// Killed ASG line count R; 0 and the cemetery are absorbing.
    Killed,
    /// Pruned lookdown ASG line count L; lives on {1,2,...}.
    Pldasg,
    /// Siegmund dual D of L; 1 and the cemetery are absorbing.
    Siegmund,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    State(u64),
    Dagger,
}

/// Off-diagonal rates out of one state, plus the diagonal entry.
/// Only strictly positive rates are listed.
#[derive(Debug, Clone, Default)]
pub struct RateMap {
    pub transitions: Vec<(Target, f64)>,
    pub diagonal: f64,
}

impl RateMap {
    pub fn total_rate(&self) -> f64 {
        let mut s = KahanSum::new();
        for &(_, r) in &self.transitions {
            s.add(r);
        }
        s.value()
    }

    pub fn rate_to(&self, target: Target) -> f64 {
        self.transitions
            .iter()
            .find(|(t, _)| *t == target)
            .map_or(0.0, |&(_, r)| r)
    }

    fn push(&mut self, target: Target, rate: f64) {
        debug_assert!(rate.is_finite() && rate >= 0.0);
        if rate > 0.0 {
            self.transitions.push((target, rate));
        }
    }

    /// Samples a target with probability proportional to its rate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Target {
        debug_assert!(!self.transitions.is_empty());
        let u = rng.random_range(0.0..self.total_rate());
        let mut acc = 0.0;
        for &(t, r) in &self.transitions {
            acc += r;
            if u < acc {
                return t;
            }
        }
        self.transitions[self.transitions.len() - 1].0
    }
}

/// Rates out of state i for the killed chain R: coalescence and deleterious
/// mutation send i to i-1, selection and the environment branch upward,
/// beneficial mutation kills.
pub fn killed_asg_rates(i: u64, params: &ModelParams, table: &SigmaTable) -> Result<RateMap> {
    if i < 1 {
        return Err(Error::Domain("killed_asg_rates needs i >= 1".into()));
    }
    let mut m = RateMap::default();
    let fi = i as f64;
    m.push(Target::State(i - 1), fi * (fi - 1.0) + fi * params.theta_nu1());
    m.push(Target::Dagger, fi * params.theta_nu0());
    for k in 1..=i {
        let env = table.weighted(i, k)?;
        let extra = if k == 1 { fi * params.sigma } else { 0.0 };
        m.push(Target::State(i + k), extra + env);
    }
    m.diagonal = -(fi * (fi - 1.0 + params.theta + params.sigma)) - table.lambda(i);
    Ok(m)
}

/// Rates out of state i for the pruned lookdown chain L. Relative to R, a
/// beneficial mutation prunes back to a uniform lower level instead of
/// killing, and one line (the immune line) never coalesces or is pruned.
pub fn pruned_ldasg_rates(i: u64, params: &ModelParams, table: &SigmaTable) -> Result<RateMap> {
    if i < 1 {
        return Err(Error::Domain("pruned_ldasg_rates needs i >= 1".into()));
    }
    let mut m = RateMap::default();
    let fi = i as f64;
    if i >= 2 {
        m.push(
            Target::State(i - 1),
            fi * (fi - 1.0) + (fi - 1.0) * params.theta_nu1() + params.theta_nu0(),
        );
        for j in 1..=(i - 2) {
            m.push(Target::State(j), params.theta_nu0());
        }
    }
    for k in 1..=i {
        let env = table.weighted(i, k)?;
        let extra = if k == 1 { fi * params.sigma } else { 0.0 };
        m.push(Target::State(i + k), extra + env);
    }
    m.diagonal = -((fi - 1.0) * (fi + params.theta)) - fi * params.sigma - table.lambda(i);
    Ok(m)
}

/// Rates out of state i for the Siegmund dual D of L. States 1 and the
/// cemetery are absorbing; every rate carries a factor (i-1).
pub fn siegmund_rates(i: u64, params: &ModelParams, table: &SigmaTable) -> Result<RateMap> {
    if i < 1 {
        return Err(Error::Domain("siegmund_rates needs i >= 1".into()));
    }
    let mut m = RateMap::default();
    if i == 1 {
        return Ok(m);
    }
    let fi = i as f64;
    if i - 1 > table.m_max() {
        return Err(Error::TableRange {
            requested: i - 1,
            max: table.m_max(),
        });
    }
    m.push(
        Target::State(i + 1),
        (fi - 1.0) * params.theta_nu1() + fi * (fi - 1.0),
    );
    // environmental channel: rate to state j is the increment
    // gamma_{i,j} - gamma_{i,j-1}; the increments sum to
    // gamma_{i,i-1} = Lambda_{i-1}
    let mut gamma_prev = 0.0;
    for j in 1..i {
        let g = table.gamma_ij(i, j)?;
        // gamma_{i,j} is nondecreasing in j; clamp rounding noise once both
        // sums saturate at the total mass
        let env = (g - gamma_prev).max(0.0);
        let sel = if j == i - 1 { (fi - 1.0) * params.sigma } else { 0.0 };
        m.push(Target::State(j), sel + env);
        gamma_prev = g;
    }
    m.push(Target::Dagger, (fi - 1.0) * params.theta_nu0());
    m.diagonal = -m.total_rate();
    Ok(m)
}

pub fn rate_map(kind: ChainKind, i: u64, params: &ModelParams, table: &SigmaTable) -> Result<RateMap> {
    match kind {
        ChainKind::Killed => killed_asg_rates(i, params, table),
        ChainKind::Pldasg => pruned_ldasg_rates(i, params, table),
        ChainKind::Siegmund => siegmund_rates(i, params, table),
    }
}

/// Binomial(n, p) conditioned on a strictly positive outcome, by inverse
/// transform over the conditional cdf.
pub fn sample_binomial_positive<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    debug_assert!(n >= 1 && p > 0.0 && p < 1.0);
    let q0 = (1.0 - p).powi(n as i32);
    let u = rng.random_range(q0..1.0);
    let mut pmf = q0;
    let mut cum = q0;
    let ratio = p / (1.0 - p);
    for k in 0..n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
        cum += pmf;
        if u < cum {
            return k + 1;
        }
    }
    n
}

/// Plain Binomial(n, p) draw.
pub fn sample_binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    rand_distr::Binomial::new(n, p)
        .expect("binomial parameters validated upstream")
        .sample(rng)
}

/// Samples the environmental branching increment seen by m lines: an atom
/// chosen with probability proportional to c_a (1 - (1-p_a)^m), then a
/// positive binomial thinning. Equal in law to the k-channel decomposition
/// with rates C(m,k) sigma_{m,k}.
pub fn sample_env_increment<R: Rng + ?Sized>(mu: &LevyMeasure, m: u64, rng: &mut R) -> u64 {
    debug_assert!(!mu.is_empty() && m >= 1);
    let total = mu.lambda(m);
    let u = rng.random_range(0.0..total);
    let mut acc = 0.0;
    let mut peak = mu.atoms[mu.atoms.len() - 1].peak;
    for a in &mu.atoms {
        acc += a.mass * (1.0 - (1.0 - a.peak).powi(m as i32));
        if u < acc {
            peak = a.peak;
            break;
        }
    }
    sample_binomial_positive(m, peak, rng)
}

/// Non-increasing channels (down, prune, kill) shared by the annealed and
/// quenched Gillespie loops. State 1 of L has no downward moves.
fn branching_down_rates(kind: ChainKind, i: u64, fi: f64, params: &ModelParams) -> (f64, f64, f64) {
    match kind {
        ChainKind::Killed => (
            fi * (fi - 1.0) + fi * params.theta_nu1(),
            0.0,
            fi * params.theta_nu0(),
        ),
        ChainKind::Pldasg if i >= 2 => (
            fi * (fi - 1.0) + (fi - 1.0) * params.theta_nu1() + params.theta_nu0(),
            (i - 2) as f64 * params.theta_nu0(),
            0.0,
        ),
        ChainKind::Pldasg => (0.0, 0.0, 0.0),
        ChainKind::Siegmund => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Alive(u64),
    Dagger,
}

impl State {
    fn encode(self) -> f64 {
        match self {
            State::Alive(v) => v as f64,
            State::Dagger => DAGGER,
        }
    }
}

fn exp_wait<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Gillespie run driven by a precomputed rate table; `rates[i-1]` holds the
/// rates out of state i. Shared across replicates when simulating ensembles
/// of the Siegmund chain, whose per-state rates are expensive to rebuild.
pub fn chain_run_with_rates<R: Rng + ?Sized>(
    rates: &[RateMap],
    start: u64,
    horizon: f64,
    rng: &mut R,
) -> Result<PathSample> {
    if start < 1 || start as usize > rates.len() {
        return Err(Error::Domain(format!(
            "start {start} outside the precomputed rate table (1..={})",
            rates.len()
        )));
    }
    let mut path = PathSample::new();
    let mut state = State::Alive(start);
    let mut beta = 0.0;
    path.push(beta, state.encode());
    loop {
        let i = match state {
            State::Alive(i) => i,
            State::Dagger => break,
        };
        let map = &rates[(i - 1) as usize];
        let total = map.total_rate();
        if total == 0.0 {
            break;
        }
        beta += exp_wait(total, rng);
        if beta > horizon {
            break;
        }
        state = match map.sample(rng) {
            Target::State(j) => {
                if j as usize > rates.len() {
                    return Err(Error::StateCap {
                        state: j,
                        cap: rates.len() as u64,
                    });
                }
                State::Alive(j)
            }
            Target::Dagger => State::Dagger,
        };
        path.push(beta, state.encode());
    }
    Ok(path)
}

/// Precomputes `rate_map(kind, i)` for i = 1..=max_state.
pub fn rate_table(
    kind: ChainKind,
    max_state: u64,
    params: &ModelParams,
    table: &SigmaTable,
) -> Result<Vec<RateMap>> {
    (1..=max_state).map(|i| rate_map(kind, i, params, table)).collect()
}

/// Annealed run of one of the three chains up to backward time `horizon`.
///
/// R and L use closed-form rates plus atom-by-atom environmental events, so
/// any state below `state_cap` is reachable regardless of the table depth.
/// D needs table rows up to the current state and is capped by
/// `min(state_cap, m_max + 1)`.
pub fn chain_run_annealed<R: Rng + ?Sized>(
    kind: ChainKind,
    start: u64,
    horizon: f64,
    params: &ModelParams,
    table: &SigmaTable,
    state_cap: u64,
    rng: &mut R,
) -> Result<PathSample> {
    if horizon < 0.0 {
        return Err(Error::Domain("horizon must be >= 0".into()));
    }
    match kind {
        ChainKind::Siegmund => {
            let cap = state_cap.min(table.m_max() + 1);
            if start > cap {
                return Err(Error::StateCap { state: start, cap });
            }
            let rates = rate_table(kind, cap, params, table)?;
            chain_run_with_rates(&rates, start, horizon, rng)
        }
        ChainKind::Killed | ChainKind::Pldasg => {
            run_branching_chain(kind, start, horizon, params, table.measure(), state_cap, rng)
        }
    }
}

fn run_branching_chain<R: Rng + ?Sized>(
    kind: ChainKind,
    start: u64,
    horizon: f64,
    params: &ModelParams,
    mu: &LevyMeasure,
    state_cap: u64,
    rng: &mut R,
) -> Result<PathSample> {
    if start < 1 {
        return Err(Error::Domain(format!("start must be >= 1, got {start}")));
    }
    if start > state_cap {
        return Err(Error::StateCap {
            state: start,
            cap: state_cap,
        });
    }
    let mut path = PathSample::new();
    let mut state = State::Alive(start);
    let mut beta = 0.0;
    path.push(beta, state.encode());
    loop {
        // R is absorbed at 0 and dagger; L has no absorbing state (state 1
        // still branches through selection and the environment)
        let i = match state {
            State::Alive(i) if i >= 1 => i,
            _ => break,
        };
        let fi = i as f64;
        // channel order: down, prune (L only), kill (R only), selection, environment
        let (down, prune, kill) = branching_down_rates(kind, i, fi, params);
        let sel = fi * params.sigma;
        let env = mu.lambda(i);
        let total = down + prune + kill + sel + env;
        if total == 0.0 {
            break;
        }
        beta += exp_wait(total, rng);
        if beta > horizon {
            break;
        }
        let u = rng.random_range(0.0..total);
        state = if u < down {
            State::Alive(i - 1)
        } else if u < down + prune {
            State::Alive(rng.random_range(1..=(i - 2)))
        } else if u < down + prune + kill {
            State::Dagger
        } else {
            let k = if u < down + prune + kill + sel {
                1
            } else {
                sample_env_increment(mu, i, rng)
            };
            if i + k > state_cap {
                return Err(Error::StateCap {
                    state: i + k,
                    cap: state_cap,
                });
            }
            State::Alive(i + k)
        };
        path.push(beta, state.encode());
    }
    Ok(path)
}

/// Quenched run of R or L against a fixed environment. The environment must
/// already be oriented backward (see `Environment::reversed`); a jump at
/// backward time 0 is applied before the clock starts, one at `horizon`
/// right at the end.
pub fn chain_run_quenched<R: Rng + ?Sized>(
    kind: ChainKind,
    start: u64,
    omega_reversed: &Environment,
    horizon: f64,
    params: &ModelParams,
    state_cap: u64,
    rng: &mut R,
) -> Result<PathSample> {
    if kind == ChainKind::Siegmund {
        return Err(Error::Domain("quenched runs support the R and L chains only".into()));
    }
    if omega_reversed.orientation != Orientation::Reversed {
        return Err(Error::Domain(
            "quenched chains need a reversed environment; call Environment::reversed first".into(),
        ));
    }
    if horizon > omega_reversed.horizon {
        return Err(Error::Domain(format!(
            "run horizon {horizon} exceeds environment horizon {}",
            omega_reversed.horizon
        )));
    }
    omega_reversed.validate()?;
    if start < 1 {
        return Err(Error::Domain(format!("start must be >= 1, got {start}")));
    }
    let mut path = PathSample::new();
    let mut state = State::Alive(start);
    let mut beta = 0.0;
    path.push(beta, state.encode());

    let apply_jump = |state: &mut State,
                          path: &mut PathSample,
                          beta: f64,
                          dp: f64,
                          rng: &mut R|
     -> Result<()> {
        if let State::Alive(i) = *state {
            if i >= 1 {
                let k = sample_binomial(i, dp, rng);
                if i + k > state_cap {
                    return Err(Error::StateCap {
                        state: i + k,
                        cap: state_cap,
                    });
                }
                *state = State::Alive(i + k);
                path.push(beta, state.encode());
            }
        }
        Ok(())
    };

    let mut jumps = omega_reversed.jumps.iter().peekable();
    while let Some(j) = jumps.peek() {
        if j.t == 0.0 {
            apply_jump(&mut state, &mut path, 0.0, j.dp, rng)?;
            jumps.next();
        } else {
            break;
        }
    }

    loop {
        let next_jump = jumps.peek().filter(|j| j.t <= horizon).copied().copied();
        let segment_end = next_jump.map_or(horizon, |j| j.t);
        // between jumps the chain runs with the no-environment rates
        while let State::Alive(i) = state {
            if i == 0 {
                break;
            }
            let fi = i as f64;
            let (down, prune, kill) = branching_down_rates(kind, i, fi, params);
            let sel = fi * params.sigma;
            let total = down + prune + kill + sel;
            if total == 0.0 {
                break;
            }
            let next = beta + exp_wait(total, rng);
            if next > segment_end {
                break;
            }
            beta = next;
            let u = rng.random_range(0.0..total);
            state = if u < down {
                State::Alive(i - 1)
            } else if u < down + prune {
                State::Alive(rng.random_range(1..=(i - 2)))
            } else if u < down + prune + kill {
                State::Dagger
            } else {
                if i + 1 > state_cap {
                    return Err(Error::StateCap { state: i + 1, cap: state_cap });
                }
                State::Alive(i + 1)
            };
            path.push(beta, state.encode());
        }
        beta = segment_end;
        match next_jump {
            Some(j) => {
                apply_jump(&mut state, &mut path, j.t, j.dp, rng)?;
                jumps.next();
            }
            None => break,
        }
    }
    Ok(path)
}

/// Absorption tally over an ensemble of terminal values.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct AbsorptionSummary {
    pub absorbed_at_0: u64,
    pub absorbed_at_dagger: u64,
    pub alive: u64,
}

impl AbsorptionSummary {
    pub fn record(&mut self, terminal: f64) {
        if terminal == DAGGER {
            self.absorbed_at_dagger += 1;
        } else if terminal == 0.0 {
            self.absorbed_at_0 += 1;
        } else {
            self.alive += 1;
        }
    }
}
