use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fmt_real;

/// Probability masses on the consecutive integers `offset, offset + 1, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub offset: i64,
    pub masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(offset: i64, masses: Vec<f64>) -> Self {
        Self { offset, masses }
    }

    /// Masses `f(n)` for `n` in `lo..=hi`.
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Self {
        Self::new(lo, (lo..=hi).map(f).collect())
    }

    /// Inclusive integer support `(first, last)`.
    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.masses.len() as i64 - 1)
    }

    /// Mass at `n`, zero outside the stored range.
    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.offset;
        if i < 0 {
            return 0.0;
        }
        self.masses.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(n, p)| n as f64 * p).sum::<f64>() / self.total()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses.iter().enumerate().map(|(i, &p)| (self.offset + i as i64, p))
    }

    /// Copy scaled to unit total mass.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidArgument(format!("cannot normalise total mass {total}")));
        }
        Ok(Self::new(self.offset, self.masses.iter().map(|p| p / total).collect()))
    }

    /// Points strictly greater than both neighbours, ignoring the two ends.
    pub fn interior_local_maxima(&self) -> Vec<i64> {
        self.masses
            .windows(3)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0] && w[1] > w[2])
            .map(|(i, _)| self.offset + i as i64 + 1)
            .collect()
    }

    /// Smallest range holding every mass above `threshold`.
    pub fn support_above(&self, threshold: f64) -> Option<(i64, i64)> {
        let first = self.masses.iter().position(|&p| p > threshold)?;
        let last = self.masses.iter().rposition(|&p| p > threshold)?;
        Some((self.offset + first as i64, self.offset + last as i64))
    }

    /// CSV with header `<label>,P`.
    pub fn write_csv<W: Write>(&self, mut out: W, label: &str) -> Result<()> {
        writeln!(out, "{label},P")?;
        for (n, p) in self.iter() {
            writeln!(out, "{n},{}", fmt_real(p))?;
        }
        Ok(())
    }
}
