//! Model parameters, environments, Lévy measures, and the combinatorial
//! rate kernel `sigma_{m,k}` shared by every simulator and solver.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Kahan-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// ln C(n, k).
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// C(n, k) as f64 (may overflow to inf for very large n; callers that need
/// the product with a small factor should use [`ln_binomial`] directly).
pub fn binomial(n: u64, k: u64) -> f64 {
    ln_binomial(n, k).exp()
}

/// Selection rate sigma, total mutation rate theta, and the mutation
/// probability nu0 toward the fit type. nu1 is always `1 - nu0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ModelParams {
    pub sigma: f64,
    pub theta: f64,
    pub nu0: f64,
}

impl ModelParams {
    pub fn new(sigma: f64, theta: f64, nu0: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::Domain(format!("sigma must be >= 0, got {sigma}")));
        }
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!("theta must be >= 0, got {theta}")));
        }
        if !(0.0..=1.0).contains(&nu0) {
            return Err(Error::Domain(format!("nu0 must be in [0,1], got {nu0}")));
        }
        Ok(Self { sigma, theta, nu0 })
    }

    pub fn nu1(&self) -> f64 {
        1.0 - self.nu0
    }

    /// theta * nu0, the per-line rate of beneficial mutations.
    pub fn theta_nu0(&self) -> f64 {
        self.theta * self.nu0
    }

    /// theta * nu1, the per-line rate of deleterious mutations.
    pub fn theta_nu1(&self) -> f64 {
        self.theta * self.nu1()
    }
}

/// One atom of a finite Lévy measure on (0,1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Atom {
    pub mass: f64,
    pub peak: f64,
}

/// A finite atomic measure on (0,1) driving the environmental jumps.
///
/// Continuous measures must be pre-discretized by the caller (quadrature
/// nodes as atoms); infinite-activity subordinators are supported only
/// through explicit small-jump truncation, recorded in `truncation_delta`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LevyMeasure {
    pub atoms: Vec<Atom>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub truncation_delta: Option<f64>,
}

impl LevyMeasure {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(mass, peak)| Atom { mass, peak })
            .collect();
        let m = Self {
            atoms,
            truncation_delta: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn empty() -> Self {
        Self {
            atoms: Vec::new(),
            truncation_delta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.atoms {
            if !(a.mass > 0.0) {
                return Err(Error::Domain(format!("atom mass must be > 0, got {}", a.mass)));
            }
            if !(a.peak > 0.0 && a.peak < 1.0) {
                return Err(Error::Domain(format!(
                    "atom peak must be in (0,1), got {}",
                    a.peak
                )));
            }
        }
        for i in 0..self.atoms.len() {
            for j in (i + 1)..self.atoms.len() {
                if self.atoms[i].peak == self.atoms[j].peak {
                    return Err(Error::Domain(format!(
                        "duplicate atom peak {}",
                        self.atoms[i].peak
                    )));
                }
            }
        }
        if let Some(d) = self.truncation_delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::Domain(format!(
                    "truncation_delta must be in (0,1), got {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        let mut s = KahanSum::new();
        for a in &self.atoms {
            s.add(a.mass);
        }
        s.value()
    }

    /// First moment of the measure, `sum c_i p_i`.
    pub fn first_moment(&self) -> f64 {
        let mut s = KahanSum::new();
        for a in &self.atoms {
            s.add(a.mass * a.peak);
        }
        s.value()
    }

    /// Drops atoms with peak below `delta`. Returns the truncated measure and
    /// the first moment of the dropped part, so callers can bound the bias of
    /// working with the truncation.
    pub fn truncated(&self, delta: f64) -> Result<(LevyMeasure, f64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("delta must be in (0,1), got {delta}")));
        }
        let mut dropped = KahanSum::new();
        let mut kept = Vec::new();
        for a in &self.atoms {
            if a.peak >= delta {
                kept.push(*a);
            } else {
                dropped.add(a.mass * a.peak);
            }
        }
        Ok((
            LevyMeasure {
                atoms: kept,
                truncation_delta: Some(delta),
            },
            dropped.value(),
        ))
    }

    /// Total rate `Lambda_m = int (1 - (1-y)^m) mu(dy)` of environmental
    /// events seen by m lines.
    pub fn lambda(&self, m: u64) -> f64 {
        let mut s = KahanSum::new();
        for a in &self.atoms {
            s.add(a.mass * (1.0 - (1.0 - a.peak).powi(m as i32)));
        }
        s.value()
    }
}

/// Simultaneous-branching rate `sigma_{m,k} = int y^k (1-y)^{m-k} mu(dy)`.
pub fn sigma_mk(mu: &LevyMeasure, m: u64, k: u64) -> Result<f64> {
    if k < 1 || k > m {
        return Err(Error::Domain(format!("sigma_mk needs 1 <= k <= m, got m={m}, k={k}")));
    }
    let mut s = KahanSum::new();
    for a in &mu.atoms {
        s.add(a.mass * a.peak.powi(k as i32) * (1.0 - a.peak).powi((m - k) as i32));
    }
    Ok(s.value())
}

/// `C(m,k) * sigma_{m,k}`, evaluated per atom in log space so that large m
/// does not overflow the binomial factor.
pub fn weighted_sigma_mk(mu: &LevyMeasure, m: u64, k: u64) -> Result<f64> {
    if k < 1 || k > m {
        return Err(Error::Domain(format!(
            "weighted_sigma_mk needs 1 <= k <= m, got m={m}, k={k}"
        )));
    }
    let lb = ln_binomial(m, k);
    let mut s = KahanSum::new();
    for a in &mu.atoms {
        let ln_term = lb + (k as f64) * a.peak.ln() + ((m - k) as f64) * (1.0 - a.peak).ln();
        s.add(a.mass * ln_term.exp());
    }
    Ok(s.value())
}

/// Whether the jump list is oriented forward in time or reversed
/// (backward/genealogical time).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Forward,
    Reversed,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Jump {
    pub t: f64,
    pub dp: f64,
}

/// A finite, time-ordered list of environmental jumps on `[0, horizon]`:
/// the quenched environment omega.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Environment {
    pub horizon: f64,
    pub jumps: Vec<Jump>,
    #[serde(default)]
    pub orientation: Orientation,
}

impl Environment {
    pub fn new(horizon: f64, jumps: Vec<(f64, f64)>) -> Result<Self> {
        let env = Self {
            horizon,
            jumps: jumps.into_iter().map(|(t, dp)| Jump { t, dp }).collect(),
            orientation: Orientation::Forward,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn empty(horizon: f64) -> Self {
        Self {
            horizon,
            jumps: Vec::new(),
            orientation: Orientation::Forward,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Domain(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        let mut prev = -1.0;
        for j in &self.jumps {
            if !(j.t >= 0.0 && j.t <= self.horizon) {
                return Err(Error::Domain(format!(
                    "jump time {} outside [0, {}]",
                    j.t, self.horizon
                )));
            }
            if j.t <= prev {
                return Err(Error::Domain(format!(
                    "jump times must be strictly increasing (t = {})",
                    j.t
                )));
            }
            if !(j.dp > 0.0 && j.dp < 1.0) {
                return Err(Error::Domain(format!("jump size {} outside (0,1)", j.dp)));
            }
            prev = j.t;
        }
        Ok(())
    }

    /// Cumulative environment `omega(t) = sum_{t_k <= t} dp_k`.
    pub fn omega_at(&self, t: f64) -> f64 {
        let mut s = KahanSum::new();
        for j in self.jumps.iter().take_while(|j| j.t <= t) {
            s.add(j.dp);
        }
        s.value()
    }

    pub fn total_increment(&self) -> f64 {
        self.omega_at(self.horizon)
    }

    /// Splits into (jumps with dp >= delta, jumps with dp < delta).
    pub fn split(&self, delta: f64) -> (Environment, Environment) {
        let (big, small): (Vec<_>, Vec<_>) = self.jumps.iter().partition(|j| j.dp >= delta);
        (
            Environment {
                horizon: self.horizon,
                jumps: big,
                orientation: self.orientation,
            },
            Environment {
                horizon: self.horizon,
                jumps: small,
                orientation: self.orientation,
            },
        )
    }

    /// Merges two environments over the same horizon back into one jump list.
    pub fn merge(&self, other: &Environment) -> Result<Environment> {
        if self.horizon != other.horizon || self.orientation != other.orientation {
            return Err(Error::Domain(
                "merge requires matching horizon and orientation".into(),
            ));
        }
        let mut jumps: Vec<Jump> = self.jumps.iter().chain(&other.jumps).copied().collect();
        jumps.sort_by(|a, b| a.t.total_cmp(&b.t));
        let env = Environment {
            horizon: self.horizon,
            jumps,
            orientation: self.orientation,
        };
        env.validate()?;
        Ok(env)
    }

    /// Time reversal: a forward jump at t becomes a backward jump at
    /// `horizon - t` with the same peak. Involutive.
    pub fn reversed(&self) -> Environment {
        let mut jumps: Vec<Jump> = self
            .jumps
            .iter()
            .map(|j| Jump {
                t: self.horizon - j.t,
                dp: j.dp,
            })
            .collect();
        jumps.sort_by(|a, b| a.t.total_cmp(&b.t));
        Environment {
            horizon: self.horizon,
            jumps,
            orientation: match self.orientation {
                Orientation::Forward => Orientation::Reversed,
                Orientation::Reversed => Orientation::Forward,
            },
        }
    }
}

/// Samples a compound-Poisson environment on `[0, horizon]` from a finite
/// atomic measure: jump count ~ Poisson(total_mass * horizon), times i.i.d.
/// uniform, peaks drawn proportionally to atom masses.
pub fn env_sample<R: Rng + ?Sized>(
    mu: &LevyMeasure,
    horizon: f64,
    rng: &mut R,
) -> Result<Environment> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    mu.validate()?;
    let mass = mu.total_mass();
    if mass == 0.0 {
        return Ok(Environment::empty(horizon));
    }
    let count = Poisson::new(mass * horizon)
        .map_err(|e| Error::Domain(format!("poisson rate invalid: {e}")))?
        .sample(rng) as usize;
    let mut jumps = Vec::with_capacity(count);
    loop {
        jumps.clear();
        for _ in 0..count {
            let t = rng.random_range(0.0..horizon);
            let u = rng.random_range(0.0..mass);
            let mut acc = 0.0;
            let mut peak = mu.atoms[mu.atoms.len() - 1].peak;
            for a in &mu.atoms {
                acc += a.mass;
                if u < acc {
                    peak = a.peak;
                    break;
                }
            }
            jumps.push(Jump { t, dp: peak });
        }
        jumps.sort_by(|a, b| a.t.total_cmp(&b.t));
        // ties have probability zero; resample on the off chance
        if jumps.windows(2).all(|w| w[0].t < w[1].t) {
            break;
        }
    }
    Ok(Environment {
        horizon,
        jumps,
        orientation: Orientation::Forward,
    })
}

/// Precomputed rates `sigma_{m,k}` for `1 <= k <= m <= m_max`, the row
/// totals `Lambda_m`, and the underlying measure (kept so that simulators
/// can sample environmental events atom-by-atom at any line count).
#[derive(Debug, Clone)]
pub struct SigmaTable {
    mu: LevyMeasure,
    m_max: u64,
    rows: Vec<Vec<f64>>,
    row_totals: Vec<f64>,
}

impl SigmaTable {
    pub fn build(mu: &LevyMeasure, m_max: u64) -> Result<Self> {
        mu.validate()?;
        if m_max < 1 {
            return Err(Error::Domain("m_max must be >= 1".into()));
        }
        let mut rows = Vec::with_capacity(m_max as usize);
        let mut row_totals = Vec::with_capacity(m_max as usize);
        for m in 1..=m_max {
            let mut row = Vec::with_capacity(m as usize);
            for k in 1..=m {
                row.push(sigma_mk(mu, m, k)?);
            }
            rows.push(row);
            row_totals.push(mu.lambda(m));
        }
        Ok(Self {
            mu: mu.clone(),
            m_max,
            rows,
            row_totals,
        })
    }

    pub fn measure(&self) -> &LevyMeasure {
        &self.mu
    }

    pub fn m_max(&self) -> u64 {
        self.m_max
    }

    pub fn sigma(&self, m: u64, k: u64) -> Result<f64> {
        if m > self.m_max {
            return Err(Error::TableRange {
                requested: m,
                max: self.m_max,
            });
        }
        if k < 1 || k > m {
            return Err(Error::Domain(format!("sigma needs 1 <= k <= m, got m={m}, k={k}")));
        }
        Ok(self.rows[(m - 1) as usize][(k - 1) as usize])
    }

    /// `C(m,k) * sigma_{m,k}`.
    pub fn weighted(&self, m: u64, k: u64) -> Result<f64> {
        if m > self.m_max {
            return Err(Error::TableRange {
                requested: m,
                max: self.m_max,
            });
        }
        weighted_sigma_mk(&self.mu, m, k)
    }

    /// `Lambda_m`, the total environmental event rate for m lines. Computed
    /// directly from the atoms, so any m is allowed.
    pub fn lambda(&self, m: u64) -> f64 {
        if m >= 1 && m <= self.m_max {
            self.row_totals[(m - 1) as usize]
        } else {
            self.mu.lambda(m)
        }
    }

    /// `gamma_{i,j} = sum_{k=i-j}^{j} C(j,k) sigma_{j,k}` from the Siegmund
    /// dual rates. Empty when i - j > j.
    pub fn gamma_ij(&self, i: u64, j: u64) -> Result<f64> {
        if j == 0 {
            return Ok(0.0);
        }
        let lo = i.saturating_sub(j).max(1);
        let mut s = KahanSum::new();
        for k in lo..=j {
            s.add(self.weighted(j, k)?);
        }
        Ok(s.value())
    }
}
