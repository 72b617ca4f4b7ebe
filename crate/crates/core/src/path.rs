//! Path and summary containers shared by the simulators and the CLI.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// A recorded sample path, piecewise constant between the stored points.
/// `times` is nondecreasing and starts at the initial time of the run.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PathSample {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, x: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t >= last));
        self.times.push(t);
        self.values.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Value at time t under the piecewise-constant (cadlag) convention:
    /// the last recorded value with recorded time <= t.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            None
        } else {
            Some(self.values[idx - 1])
        }
    }

    /// Writes `t,x` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x")?;
        for (t, x) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{x}")?;
        }
        Ok(())
    }
}

impl Default for PathSample {
    fn default() -> Self {
        Self::new()
    }
}

/// A Monte Carlo estimate of one moment, with its standard error.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MomentSummary {
    pub n: u64,
    pub mean: f64,
    pub stderr: f64,
    pub replicates: u64,
}

/// Mean and standard error of the mean from a stream of observations,
/// accumulated with Welford's recurrence.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}
