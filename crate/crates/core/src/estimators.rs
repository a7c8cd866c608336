//! Effective drift and diffusion of the slow variable.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constrained::{run_cssa, run_fast_subsystem, JumpStatistics, SimOptions, StoppingRule};
use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, SlowProjection};
use crate::rng::RandomStream;
use crate::systems::BistableParams;
use crate::util::fmt_real;

/// Effective propensity `ᾱ_i(s)` of one slow reaction together with its
/// change `ν_{i,S}` of the slow variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectivePropensity {
    pub value: f64,
    pub slow_change: i64,
}

pub type EffectivePropensitySet = Vec<EffectivePropensity>;

/// `V = Σ ᾱ_i ν_{i,S}`, `D = ½ Σ ᾱ_i ν_{i,S}²`.
pub fn drift_diffusion_from_propensities(props: &[EffectivePropensity]) -> (f64, f64) {
    let mut v = 0.0;
    let mut d = 0.0;
    for p in props {
        let nu = p.slow_change as f64;
        v += p.value * nu;
        d += p.value * nu * nu;
    }
    (v, 0.5 * d)
}

/// `V = Σ dS / T`, `D = Σ dS² / (2T)`.
pub fn cma_estimate(stats: &JumpStatistics) -> Result<(f64, f64)> {
    let t = stats.elapsed_time;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("jump statistics cover zero elapsed time".into()));
    }
    Ok((stats.sum() / t, stats.sum_squares() / (2.0 * t)))
}

/// How NMA turns a fast-subsystem run into effective slow propensities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmaClosure {
    /// Slow propensities evaluated at the time-averaged fast means `⟨x⟩`.
    #[default]
    MeanField,
    /// Slow propensities time-averaged along the trajectory, i.e. simulated
    /// first and second moments substituted.
    TimeAverage,
}

impl fmt::Display for NmaClosure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NmaClosure::MeanField => "mean-field",
            NmaClosure::TimeAverage => "time-average",
        })
    }
}

impl FromStr for NmaClosure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean-field" => Ok(NmaClosure::MeanField),
            "time-average" => Ok(NmaClosure::TimeAverage),
            other => Err(Error::InvalidArgument(format!("unknown NMA closure `{other}`"))),
        }
    }
}

/// Effective slow propensities from a fast-subsystem run of `n_fast` events.
pub fn nma_estimate(
    network: &ReactionNetwork,
    projection: &SlowProjection,
    s: i64,
    n_fast: u64,
    closure: NmaClosure,
    rng: &mut RandomStream,
    options: &SimOptions,
) -> Result<(EffectivePropensitySet, u64)> {
    let avg = run_fast_subsystem(network, projection, s, n_fast, rng, options)?;
    let props = avg
        .slow_propensities
        .iter()
        .map(|&(j, averaged)| EffectivePropensity {
            value: match closure {
                NmaClosure::MeanField => network.propensity_at(j, &avg.means),
                NmaClosure::TimeAverage => averaged,
            },
            slow_change: projection.slow_change(network.net(j)),
        })
        .collect();
    Ok((props, avg.cost))
}

/// Linear-system closure: `{(k₁V, +1), (k₂ s/2, −1)}`.
pub fn qssma_linear_propensities(k1: f64, k2: f64, volume: f64, s: i64) -> Result<EffectivePropensitySet> {
    if s < 0 {
        return Err(Error::InvalidArgument(format!("slow value {s} is negative")));
    }
    Ok(vec![
        EffectivePropensity {
            value: k1 * volume,
            slow_change: 1,
        },
        EffectivePropensity {
            value: k2 * s as f64 / 2.0,
            slow_change: -1,
        },
    ])
}

/// Closed-form fast equilibrium and effective propensities of the bistable
/// system at slow value `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BistableClosure {
    pub mean_x1: f64,
    pub mean_x2: f64,
    /// Last term of `α̂₂`, kept for diagnostics.
    pub correction: f64,
    pub propensities: EffectivePropensitySet,
}

/// Closure with `⟨X₁⟩`, `⟨X₂⟩` from the deterministic rate equations of the
/// fast dimerisation.
pub fn bistable_closure(p: &BistableParams, s: i64) -> Result<BistableClosure> {
    if s < 0 {
        return Err(Error::InvalidArgument(format!("slow value {s} is negative")));
    }
    let sf = s as f64;
    let x1 = p.k6 / (4.0 * p.k5_over_v) * ((1.0 + 8.0 * p.k5_over_v * sf / p.k6).sqrt() - 1.0);
    bistable_closure_at(p, s, (sf - x1) / 2.0)
}

/// Same effective propensities evaluated at a given mean `⟨X₂⟩ = mean_x2`,
/// with `⟨X₁⟩ = s − 2⟨X₂⟩`.
pub fn bistable_closure_at(p: &BistableParams, s: i64, mean_x2: f64) -> Result<BistableClosure> {
    if s < 0 {
        return Err(Error::InvalidArgument(format!("slow value {s} is negative")));
    }
    let sf = s as f64;
    let x2 = mean_x2;
    let x1 = sf - 2.0 * x2;
    let denom = 8.0 * p.k5_over_v * x2 - 2.0 * p.k5_over_v * (2.0 * sf + 3.0) - p.k6;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::SingularClosure {
            s,
            reason: format!("correction denominator is {denom}"),
        });
    }
    if !(x2 >= 0.0 && x1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("mean ⟨X₂⟩ = {x2} is inconsistent with s = {s}")));
    }
    let correction = 2.0 * p.k2_over_v * p.k6 * x2 / denom;
    let a2 = p.k2_over_v * sf * x2 - 2.0 * p.k2_over_v * x2 * x2 + correction;
    let propensities = [(p.k1 * x2, 1), (a2, -1), (p.k3_v, 1), (p.k4 * x1, -1)]
        .into_iter()
        .map(|(value, slow_change)| EffectivePropensity { value, slow_change })
        .collect();
    Ok(BistableClosure {
        mean_x1: x1,
        mean_x2: x2,
        correction,
        propensities,
    })
}

pub fn qssma_bistable_propensities(p: &BistableParams, s: i64) -> Result<EffectivePropensitySet> {
    Ok(bistable_closure(p, s)?.propensities)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cma,
    Nma,
    Qssma,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cma, Method::Nma, Method::Qssma];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cma => "cma",
            Method::Nma => "nma",
            Method::Qssma => "qssma",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cma" => Ok(Method::Cma),
            "nma" => Ok(Method::Nma),
            "qssma" => Ok(Method::Qssma),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// Analytic fast-subsystem closure used by QSSMA.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum QssmaModel {
    Linear { k1: f64, k2: f64, volume: f64 },
    Bistable(BistableParams),
}

impl QssmaModel {
    pub fn propensities(&self, s: i64) -> Result<EffectivePropensitySet> {
        match self {
            QssmaModel::Linear { k1, k2, volume } => qssma_linear_propensities(*k1, *k2, *volume, s),
            QssmaModel::Bistable(p) => qssma_bistable_propensities(p, s),
        }
    }
}

/// Estimator and per-point budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Estimator {
    Cma(StoppingRule),
    /// Fast events per grid point.
    Nma(u64, NmaClosure),
    Qssma(QssmaModel),
}

impl Estimator {
    pub fn method(&self) -> Method {
        match self {
            Estimator::Cma(_) => Method::Cma,
            Estimator::Nma(..) => Method::Nma,
            Estimator::Qssma(_) => Method::Qssma,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub s: i64,
    pub v: f64,
    pub d: f64,
    /// Simulated reactions spent on this point.
    pub cost: u64,
    pub stream_id: u64,
    /// Set when the estimator failed here; `v` and `d` are NaN then.
    pub failure: Option<String>,
}

/// `V(s)` and `D(s)` on an increasing grid of slow values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDiffusionTable {
    pub method: Method,
    pub seed: u64,
    pub rows: Vec<TableRow>,
}

impl DriftDiffusionTable {
    /// Table from plain arrays, e.g. analytic coefficients.
    pub fn from_values(method: Method, grid: &[i64], v: &[f64], d: &[f64]) -> Result<Self> {
        if grid.len() != v.len() || grid.len() != d.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: v.len().min(d.len()),
            });
        }
        let rows = grid
            .iter()
            .zip(v.iter().zip(d))
            .enumerate()
            .map(|(i, (&s, (&v, &d)))| TableRow {
                s,
                v,
                d,
                cost: 0,
                stream_id: i as u64,
                failure: None,
            })
            .collect();
        let table = Self { method, seed: 0, rows };
        table.check_grid()?;
        Ok(table)
    }

    pub fn grid(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.s).collect()
    }

    pub fn drift(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.v).collect()
    }

    pub fn diffusion(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.d).collect()
    }

    pub fn total_cost(&self) -> u64 {
        self.rows.iter().map(|r| r.cost).sum()
    }

    pub fn failures(&self) -> impl Iterator<Item = &TableRow> {
        self.rows.iter().filter(|r| r.failure.is_some())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn check_grid(&self) -> Result<()> {
        if self.rows.windows(2).any(|w| w[0].s >= w[1].s) {
            return Err(Error::InvalidArgument("table grid must be strictly increasing".into()));
        }
        Ok(())
    }

    /// CSV with header `s,V,D,cost,method,seed,stream_id`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "V", "D", "cost", "method", "seed", "stream_id"])
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.s.to_string(),
                fmt_real(r.v),
                fmt_real(r.d),
                r.cost.to_string(),
                self.method.to_string(),
                self.seed.to_string(),
                r.stream_id.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        let mut method = None;
        let mut seed = 0;
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != 7 {
                return Err(parse_err(format!("expected 7 columns, found {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64> { rec[i].trim().parse().map_err(|_| parse_err(format!("bad number `{}`", &rec[i]))) };
            let int = |i: usize| -> Result<i64> { rec[i].trim().parse().map_err(|_| parse_err(format!("bad integer `{}`", &rec[i]))) };
            method = Some(rec[4].parse()?);
            seed = int(5)? as u64;
            let (v, d) = (num(1)?, num(2)?);
            rows.push(TableRow {
                s: int(0)?,
                v,
                d,
                cost: int(3)? as u64,
                stream_id: int(6)? as u64,
                failure: (v.is_nan() || d.is_nan()).then(|| "missing value".to_string()),
            });
        }
        let table = Self {
            method: method.ok_or_else(|| parse_err("table has no rows".into()))?,
            seed,
            rows,
        };
        table.check_grid()?;
        Ok(table)
    }
}

fn csv_err(e: csv::Error) -> Error {
    parse_err(e.to_string())
}

fn parse_err(message: String) -> Error {
    Error::Parse {
        path: "drift-diffusion table".into(),
        message,
    }
}

/// Runs one estimator at one grid point. `stream_id` selects the random stream.
pub fn estimate_point(
    network: &ReactionNetwork,
    projection: &SlowProjection,
    s: i64,
    estimator: &Estimator,
    seed: u64,
    stream_id: u64,
    options: &SimOptions,
) -> Result<(f64, f64, u64)> {
    let mut rng = RandomStream::new(seed, stream_id);
    match estimator {
        Estimator::Cma(stop) => {
            let stats = run_cssa(network, projection, s, *stop, &mut rng, options)?;
            let (v, d) = cma_estimate(&stats)?;
            Ok((v, d, stats.cost))
        }
        Estimator::Nma(n_fast, closure) => {
            let (props, cost) = nma_estimate(network, projection, s, *n_fast, *closure, &mut rng, options)?;
            let (v, d) = drift_diffusion_from_propensities(&props);
            Ok((v, d, cost))
        }
        Estimator::Qssma(model) => {
            let (v, d) = drift_diffusion_from_propensities(&model.propensities(s)?);
            Ok((v, d, 0))
        }
    }
}

/// Evaluates `estimator` independently at every grid point on a pool of
/// `workers` threads. Point `i` uses stream `i`, so the table does not depend
/// on the worker count. Failures at single points are kept in the table.
pub fn build_table(
    network: &ReactionNetwork,
    projection: &SlowProjection,
    grid: &[i64],
    estimator: &Estimator,
    seed: u64,
    workers: usize,
    options: &SimOptions,
) -> Result<DriftDiffusionTable> {
    if let Some(&s) = grid.iter().find(|&&s| !projection.contains(s)) {
        return Err(Error::InvalidArgument(format!(
            "grid point {s} outside [{}, {}]",
            projection.s_min, projection.s_max
        )));
    }
    let eval = |(i, &s): (usize, &i64)| {
        let stream_id = i as u64;
        match estimate_point(network, projection, s, estimator, seed, stream_id, options) {
            Ok((v, d, cost)) => TableRow {
                s,
                v,
                d,
                cost,
                stream_id,
                failure: None,
            },
            Err(e) => TableRow {
                s,
                v: f64::NAN,
                d: f64::NAN,
                cost: 0,
                stream_id,
                failure: Some(e.to_string()),
            },
        }
    };
    let rows: Vec<TableRow> = if workers <= 1 {
        grid.iter().enumerate().map(eval).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        pool.install(|| grid.par_iter().enumerate().map(eval).collect())
    };
    let table = DriftDiffusionTable {
        method: estimator.method(),
        seed,
        rows,
    };
    table.check_grid()?;
    Ok(table)
}
