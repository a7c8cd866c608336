//! Error norms, log-log slopes and cost bookkeeping.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::estimators::{DriftDiffusionTable, Method};
use crate::util::fmt_real;

/// `‖p − q‖₂ / ‖q‖₂` over the union of both supports, `q` being the reference.
pub fn relative_l2_error(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    let (plo, phi) = p.support();
    let (qlo, qhi) = q.support();
    let lo = plo.min(qlo);
    let hi = phi.max(qhi);
    let mut num = 0.0;
    let mut den = 0.0;
    for n in lo..=hi {
        let (a, b) = (p.get(n), q.get(n));
        num += (a - b) * (a - b);
        den += b * b;
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::InvalidArgument("reference distribution has zero norm".into()));
    }
    Ok((num / den).sqrt())
}

/// Closed range on the x axis used by [`loglog_slope`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub const ALL: Window = Window {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Least-squares slope of `ln y` against `ln x` over the points with `x` in
/// `window`.
pub fn loglog_slope(xs: &[f64], ys: &[f64], window: Window) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    let mut pts = Vec::new();
    for (&x, &y) in xs.iter().zip(ys) {
        if !window.contains(x) {
            continue;
        }
        if !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidArgument(format!("log-log fit needs positive data, got ({x}, {y})")));
        }
        pts.push((x.ln(), y.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "log-log fit needs at least 3 points in the window, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Total simulated reactions per method.
pub fn cost_tally<'a>(tables: impl IntoIterator<Item = &'a DriftDiffusionTable>) -> BTreeMap<Method, u64> {
    let mut out = BTreeMap::new();
    for t in tables {
        *out.entry(t.method).or_insert(0) += t.total_cost();
    }
    out
}

/// One point of an error-versus-budget study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub method: Method,
    /// Simulated reactions spent.
    pub budget: u64,
    pub error: f64,
    pub seed: u64,
    pub wall_ms: f64,
}

impl ErrorRecord {
    pub fn new(method: Method, budget: u64, error: f64, seed: u64, wall_ms: f64) -> Result<Self> {
        if !(error >= 0.0) {
            return Err(Error::InvalidArgument(format!("error must be non-negative, got {error}")));
        }
        Ok(Self {
            method,
            budget,
            error,
            seed,
            wall_ms,
        })
    }
}

pub const RECORD_HEADER: &str = "method,budget,error,seed,wall_ms";

/// Results CSV `method,budget,error,seed,wall_ms`; the header is written when
/// `header` is set so records can be appended to an existing file.
pub fn write_records<W: Write>(mut out: W, records: &[ErrorRecord], header: bool) -> Result<()> {
    if header {
        writeln!(out, "{RECORD_HEADER}")?;
    }
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.budget,
            fmt_real(r.error),
            r.seed,
            fmt_real(r.wall_ms)
        )?;
    }
    Ok(())
}
