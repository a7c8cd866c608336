//! Experiment drivers: configuration, the figure runs and their CSV output.
//!
//! Every run writes `<id>.csv` (plus `fig4_marginal.csv` for `fig4`), a
//! metadata sidecar `<id>.meta.json` and `<id>.timings.csv`. The CSVs and the
//! sidecar depend only on the configuration and seed, never on the worker
//! count; wall times go to the timings file alone.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cme::{linear_exact_slow_distribution, linear_qssa_slow_distribution, marginalize_slow, solve_truncated_cme};
use crate::cme::{PoissonLaw, SolverOptions, TruncatedDomain};
use crate::constrained::{SimOptions, StoppingRule};
use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::estimators::{build_table, DriftDiffusionTable, Estimator, Method, NmaClosure, QssmaModel};
use crate::fpe::{birth_death_pmf_range, project_to_pmf, solve_stationary};
use crate::metrics::{loglog_slope, relative_l2_error, Window};
use crate::netfile::load_network;
use crate::network::{ReactionNetwork, SlowProjection, StateVector};
use crate::rng::{RandomStream, RNG_ALGORITHM};
use crate::ssa::{simulate, Recorder};
use crate::systems::{bistable, linear, BistableParams, LINEAR_GRID};
use crate::util::fmt_real;

/// Largest per-point budget accepted without `full_sweep`.
pub const BUDGET_CAP: u64 = 10_000_000;

/// Rate constants and volume of the linear system in every linear experiment.
pub const LINEAR_K1: f64 = 1.0;
pub const LINEAR_K2: f64 = 1.0;
pub const LINEAR_VOLUME: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Fig1a,
    Fig1b,
    Fig2,
    Fig3,
    Fig4,
    Custom,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Fig1a,
        ExperimentId::Fig1b,
        ExperimentId::Fig2,
        ExperimentId::Fig3,
        ExperimentId::Fig4,
        ExperimentId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Fig1a => "fig1a",
            ExperimentId::Fig1b => "fig1b",
            ExperimentId::Fig2 => "fig2",
            ExperimentId::Fig3 => "fig3",
            ExperimentId::Fig4 => "fig4",
            ExperimentId::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}`")))
    }
}

/// Full description of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Network file, required for `custom`.
    pub network: Option<PathBuf>,
    pub methods: Vec<Method>,
    /// Inclusive slow-variable grid; `fig4` defaults to the support of the
    /// reference marginal above `grid_threshold`.
    pub grid: Option<(i64, i64)>,
    /// Per-point budgets: slow events for CMA, fast events for NMA.
    pub budgets: Vec<u64>,
    pub cma_budgets: Option<Vec<u64>>,
    pub nma_budgets: Option<Vec<u64>>,
    /// `K` values (`fig1a`, `fig2`) or `λ` values (`fig1b`).
    pub sweep: Vec<f64>,
    pub seed: u64,
    /// Replicate `r` runs with seed `seed + r`.
    pub replicates: u64,
    #[serde(skip_serializing)]
    pub workers: usize,
    #[serde(skip_serializing)]
    pub out: PathBuf,
    pub slope_window: Option<(f64, f64)>,
    /// Truncation bounds of the reference CME solve.
    pub domain: Option<Vec<i64>>,
    /// Smaller domain for the truncation stability check.
    pub check_domain: Option<Vec<i64>>,
    pub grid_threshold: f64,
    pub cme_tol: f64,
    /// Volume scale of the bistable system (1 = the standard parameters).
    pub scale: f64,
    pub t_end: f64,
    pub mesh: f64,
    pub nma_closure: NmaClosure,
    /// Allows budgets above [`BUDGET_CAP`].
    pub full_sweep: bool,
}

impl ExperimentConfig {
    /// Defaults for `id`.
    pub fn new(id: ExperimentId) -> Self {
        let decades = |lo: i32, hi: i32| -> Vec<u64> { (lo..=hi).map(|e| 10u64.pow(e as u32)).collect() };
        let mut c = Self {
            experiment: id,
            network: None,
            methods: Method::ALL.to_vec(),
            grid: None,
            budgets: decades(1, 5),
            cma_budgets: None,
            nma_budgets: None,
            sweep: Vec::new(),
            seed: 1,
            replicates: 1,
            workers: 1,
            out: PathBuf::from("results"),
            slope_window: None,
            domain: None,
            check_domain: None,
            grid_threshold: 1e-12,
            cme_tol: SolverOptions::default().tol,
            scale: 1.0,
            t_end: 5.0,
            mesh: 0.01,
            nma_closure: NmaClosure::default(),
            full_sweep: false,
        };
        match id {
            ExperimentId::Fig1a => {
                c.sweep = (0..=16).map(|i| 10f64.powf(1.0 + i as f64 / 4.0)).collect();
                c.slope_window = Some((1e2, f64::INFINITY));
            }
            ExperimentId::Fig1b => {
                c.sweep = vec![
                    1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 50.0, 70.0, 100.0, 150.0, 200.0, 250.0, 300.0,
                ];
                c.slope_window = Some((50.0, 300.0));
            }
            ExperimentId::Fig2 => {
                c.sweep = vec![10.0, 200.0, 1000.0];
                c.grid = Some(LINEAR_GRID);
            }
            ExperimentId::Fig4 => {
                c.cma_budgets = Some(decades(1, 4));
                c.nma_budgets = Some(decades(1, 6));
                c.domain = Some(vec![1000, 1500]);
                c.check_domain = Some(vec![800, 1250]);
            }
            ExperimentId::Fig3 | ExperimentId::Custom => {}
        }
        c
    }

    /// Defaults for the `experiment` named in a TOML document, overridden by
    /// the document's other keys.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let o: ConfigOverrides = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        let id = o.experiment.ok_or_else(|| err("missing key `experiment`".into()))?;
        let mut c = Self::new(id);
        c.apply(o);
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    /// Replaces every field set in `o`.
    pub fn apply(&mut self, o: ConfigOverrides) {
        if let Some(id) = o.experiment {
            self.experiment = id;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        macro_rules! set_opt {
            ($($f:ident),*) => { $( if o.$f.is_some() { self.$f = o.$f; } )* };
        }
        set!(methods, budgets, sweep, seed, replicates, workers, out, grid_threshold, cme_tol, scale, t_end, mesh);
        set!(nma_closure, full_sweep);
        set_opt!(network, grid, cma_budgets, nma_budgets, slope_window, domain, check_domain);
    }

    /// Budgets used for `method`.
    pub fn budgets_for(&self, method: Method) -> &[u64] {
        match method {
            Method::Cma => self.cma_budgets.as_deref().unwrap_or(&self.budgets),
            Method::Nma => self.nma_budgets.as_deref().unwrap_or(&self.budgets),
            Method::Qssma => &[],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.workers == 0 {
            return bad("worker count must be at least 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        for (name, list) in [
            ("budgets", Some(&self.budgets)),
            ("cma_budgets", self.cma_budgets.as_ref()),
            ("nma_budgets", self.nma_budgets.as_ref()),
        ] {
            let Some(list) = list else { continue };
            if list.contains(&0) {
                return bad(format!("{name} must be positive"));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("{name} must be strictly ascending"));
            }
            if !self.full_sweep && list.iter().any(|&b| b > BUDGET_CAP) {
                return bad(format!("{name} above {BUDGET_CAP} per point need full_sweep"));
            }
        }
        let needs_sweep = matches!(
            self.experiment,
            ExperimentId::Fig1a | ExperimentId::Fig1b | ExperimentId::Fig2
        );
        if needs_sweep && self.sweep.is_empty() {
            return bad(format!("{} needs a non-empty sweep", self.experiment));
        }
        if self.sweep.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return bad("sweep values must be positive".into());
        }
        if self.methods.is_empty() && matches!(self.experiment, ExperimentId::Fig2 | ExperimentId::Fig4 | ExperimentId::Custom) {
            return bad("no methods selected".into());
        }
        if let Some((lo, hi)) = self.grid {
            if lo > hi {
                return bad(format!("empty grid {lo}:{hi}"));
            }
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if !(self.t_end > 0.0 && self.mesh > 0.0) {
            return bad("t_end and mesh must be positive".into());
        }
        if self.experiment == ExperimentId::Custom && self.network.is_none() {
            return bad("custom experiment needs a network file".into());
        }
        Ok(())
    }
}

/// Optional replacements for [`ExperimentConfig`] fields, as read from a
/// config file or the command line.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub experiment: Option<ExperimentId>,
    pub network: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
    pub grid: Option<(i64, i64)>,
    pub budgets: Option<Vec<u64>>,
    pub cma_budgets: Option<Vec<u64>>,
    pub nma_budgets: Option<Vec<u64>>,
    pub sweep: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub replicates: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub slope_window: Option<(f64, f64)>,
    pub domain: Option<Vec<i64>>,
    pub check_domain: Option<Vec<i64>>,
    pub grid_threshold: Option<f64>,
    pub cme_tol: Option<f64>,
    pub scale: Option<f64>,
    pub t_end: Option<f64>,
    pub mesh: Option<f64>,
    pub nma_closure: Option<NmaClosure>,
    pub full_sweep: Option<bool>,
}

/// Wall-clock time per stage, kept apart from every reproducible output.
#[derive(Clone, Debug, Default)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    fn time<T>(&mut self, stage: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push((stage.into(), start.elapsed().as_secs_f64() * 1e3));
        out
    }
}

/// One error measurement of a multiscale method.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: Method,
    /// Per-point budget; 0 for QSSMA.
    pub budget: u64,
    pub replicate: u64,
    /// Simulated reactions over the whole grid.
    pub cost: u64,
    pub error: f64,
}

/// Run that produced no error value, with the reason.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailedRun {
    pub k: Option<f64>,
    pub method: Method,
    pub budget: u64,
    pub replicate: u64,
    pub reason: String,
}

/// Relative ℓ² error of the stationary FPE distribution built from `table`.
pub fn table_error(table: &DriftDiffusionTable, reference: &DiscreteDistribution) -> Result<f64> {
    if let Some(row) = table.failures().next() {
        return Err(Error::InvalidArgument(format!(
            "estimation failed at s = {}: {}",
            row.s,
            row.failure.as_deref().unwrap_or("unknown")
        )));
    }
    let density = solve_stationary(table)?;
    let pmf = project_to_pmf(&density)?;
    relative_l2_error(&pmf.distribution, reference)
}

/// Poisson law tabulated far enough into both tails for ℓ² comparisons.
fn poisson_table(law: &PoissonLaw) -> DiscreteDistribution {
    let l = law.lambda();
    law.on_range(0, (l + 40.0 * l.sqrt() + 50.0).ceil() as i64)
}

fn window_slope(xs: &[f64], ys: &[f64], window: Option<(f64, f64)>) -> Option<f64> {
    let w = window.map_or(Window::ALL, |(lo, hi)| Window::new(lo, hi));
    loglog_slope(xs, ys, w).ok()
}

/// Error of the exact slow law relative to the QSSA law as `K` varies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig1a {
    /// `(K, error)`.
    pub rows: Vec<(f64, f64)>,
    pub slope: Option<f64>,
}

pub fn run_fig1a(cfg: &ExperimentConfig) -> Result<Fig1a> {
    if cfg.sweep.is_empty() {
        return Err(Error::InvalidArgument("fig1a needs a non-empty K sweep".into()));
    }
    let qssa = poisson_table(&linear_qssa_slow_distribution(LINEAR_K1, LINEAR_K2, LINEAR_VOLUME)?);
    let rows = cfg
        .sweep
        .iter()
        .map(|&k| {
            let exact = linear_exact_slow_distribution(LINEAR_K1, LINEAR_K2, LINEAR_VOLUME, k)?;
            // The QSSA law is the reference (denominator).
            Ok((k, relative_l2_error(&poisson_table(&exact), &qssa)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().copied().unzip();
    let slope = window_slope(&xs, &ys, cfg.slope_window);
    Ok(Fig1a { rows, slope })
}

/// Diffusion-approximation error of the birth–death process as `λ` varies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig1b {
    /// `(λ, error, e^{−λ})`.
    pub rows: Vec<(f64, f64, f64)>,
    pub slope: Option<f64>,
}

pub fn fpe_error(lambda: f64) -> Result<f64> {
    let exact = poisson_table(&PoissonLaw::new(lambda)?);
    let n_max = exact.support().1 as u64;
    relative_l2_error(&birth_death_pmf_range(lambda, n_max)?, &exact)
}

pub fn run_fig1b(cfg: &ExperimentConfig) -> Result<Fig1b> {
    if cfg.sweep.is_empty() {
        return Err(Error::InvalidArgument("fig1b needs a non-empty λ sweep".into()));
    }
    let rows = cfg
        .sweep
        .iter()
        .map(|&l| Ok((l, fpe_error(l)?, (-l).exp())))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let slope = window_slope(&xs, &ys, cfg.slope_window);
    Ok(Fig1b { rows, slope })
}

/// Runs every configured method/budget/replicate against `reference`.
fn method_sweep(
    cfg: &ExperimentConfig,
    network: &ReactionNetwork,
    projection: &SlowProjection,
    grid: &[i64],
    qssma: Option<QssmaModel>,
    reference: &DiscreteDistribution,
    k: Option<f64>,
    timings: &mut Timings,
) -> Result<(Vec<MethodRow>, Vec<FailedRun>)> {
    let opts = SimOptions::default();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    let tag = k.map(|k| format!("K={k} ")).unwrap_or_default();
    for &method in &cfg.methods {
        let runs: Vec<(u64, u64, Estimator)> = match method {
            Method::Qssma => {
                let model = qssma.ok_or_else(|| Error::InvalidArgument("no QSSMA closure for this network".into()))?;
                vec![(0, 0, Estimator::Qssma(model))]
            }
            Method::Cma | Method::Nma => {
                let mut v = Vec::new();
                for &b in cfg.budgets_for(method) {
                    for r in 0..cfg.replicates {
                        let est = if method == Method::Cma {
                            Estimator::Cma(StoppingRule::SlowEvents(b))
                        } else {
                            Estimator::Nma(b, cfg.nma_closure)
                        };
                        v.push((b, r, est));
                    }
                }
                v
            }
        };
        for (budget, replicate, est) in runs {
            let seed = cfg.seed.wrapping_add(replicate);
            let stage = format!("{tag}{method} budget={budget} replicate={replicate}");
            let table = timings.time(stage, || build_table(network, projection, grid, &est, seed, cfg.workers, &opts))?;
            match table_error(&table, reference) {
                Ok(error) => rows.push(MethodRow {
                    method,
                    budget,
                    replicate,
                    cost: table.total_cost(),
                    error,
                }),
                Err(e) => failed.push(FailedRun {
                    k,
                    method,
                    budget,
                    replicate,
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok((rows, failed))
}

/// Method errors on the linear system for each `K`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig2 {
    /// `(K, row)`.
    pub rows: Vec<(f64, MethodRow)>,
    pub failed: Vec<FailedRun>,
}

pub fn run_fig2(cfg: &ExperimentConfig, timings: &mut Timings) -> Result<Fig2> {
    cfg.validate()?;
    let (lo, hi) = cfg.grid.unwrap_or(LINEAR_GRID);
    let grid: Vec<i64> = (lo..=hi).collect();
    let model = QssmaModel::Linear {
        k1: LINEAR_K1,
        k2: LINEAR_K2,
        volume: LINEAR_VOLUME,
    };
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &k in &cfg.sweep {
        let (net, mut proj) = linear(LINEAR_K1, LINEAR_K2, LINEAR_VOLUME, k);
        proj.s_min = proj.s_min.min(lo);
        proj.s_max = proj.s_max.max(hi);
        let reference = poisson_table(&linear_exact_slow_distribution(LINEAR_K1, LINEAR_K2, LINEAR_VOLUME, k)?);
        let (r, f) = method_sweep(cfg, &net, &proj, &grid, Some(model), &reference, Some(k), timings)?;
        rows.extend(r.into_iter().map(|row| (k, row)));
        failed.extend(f);
    }
    Ok(Fig2 { rows, failed })
}

/// Cumulative reaction counts of one SSA trajectory of the bistable system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig3 {
    pub reactions: Vec<String>,
    pub times: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
}

pub fn run_fig3(cfg: &ExperimentConfig) -> Result<Fig3> {
    cfg.validate()?;
    let (net, initial) = match &cfg.network {
        Some(path) => {
            let f = load_network(path)?;
            let x0 = f.initial.clone().unwrap_or_else(|| vec![100; f.network.species_count()]);
            (f.network, x0)
        }
        None => {
            let (net, _) = bistable(&BistableParams::default().scaled(cfg.scale));
            (net, vec![100, 100])
        }
    };
    let mut rng = RandomStream::new(cfg.seed, 0);
    let traj = simulate(&net, &StateVector::new(initial), cfg.t_end, &mut rng, Recorder::Mesh(cfg.mesh))?;
    Ok(Fig3 {
        reactions: net.reactions().iter().map(|r| r.name.clone()).collect(),
        times: traj.times,
        counts: traj.counts,
    })
}

/// Bistable reference marginal and method errors against it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Fig4 {
    pub marginal: DiscreteDistribution,
    pub peaks: Vec<i64>,
    pub residual: f64,
    /// Relative ℓ² difference to the marginal on the check domain.
    pub check_difference: Option<f64>,
    pub grid: (i64, i64),
    pub rows: Vec<MethodRow>,
    pub failed: Vec<FailedRun>,
}

fn scaled_bounds(bounds: &[i64], scale: f64) -> Vec<i64> {
    bounds.iter().map(|&b| (b as f64 * scale).round() as i64).collect()
}

/// Reference marginal of the slow variable from a truncated CME solve.
pub fn bistable_reference(
    params: &BistableParams,
    bounds: &[i64],
    tol: f64,
) -> Result<(DiscreteDistribution, f64)> {
    let (net, proj) = bistable(params);
    let domain = TruncatedDomain::new(bounds.to_vec())?;
    let opts = SolverOptions {
        tol,
        ..Default::default()
    };
    let lattice = solve_truncated_cme(&net, &domain, Some(&proj), &opts)?;
    Ok((marginalize_slow(&lattice, &proj)?, lattice.residual))
}

pub fn run_fig4(cfg: &ExperimentConfig, timings: &mut Timings) -> Result<Fig4> {
    cfg.validate()?;
    let params = BistableParams::default().scaled(cfg.scale);
    let (net, mut proj) = bistable(&params);
    let omega = cfg.domain.clone().unwrap_or_else(|| scaled_bounds(&[1000, 1500], cfg.scale));
    let (marginal, residual) = timings.time("cme reference", || bistable_reference(&params, &omega, cfg.cme_tol))?;
    let check_difference = match &cfg.check_domain {
        Some(b) => {
            let (small, _) = timings.time("cme check", || bistable_reference(&params, b, cfg.cme_tol))?;
            Some(relative_l2_error(&small, &marginal)?)
        }
        None => None,
    };
    let (lo, hi) = match cfg.grid {
        Some(g) => g,
        None => marginal
            .support_above(cfg.grid_threshold)
            .ok_or_else(|| Error::DomainTooSmall("reference marginal has no mass above the threshold".into()))?,
    };
    proj.s_min = proj.s_min.min(lo);
    proj.s_max = proj.s_max.max(hi);
    let grid: Vec<i64> = (lo..=hi).collect();
    let (rows, failed) = method_sweep(
        cfg,
        &net,
        &proj,
        &grid,
        Some(QssmaModel::Bistable(params)),
        &marginal,
        None,
        timings,
    )?;
    Ok(Fig4 {
        peaks: marginal.interior_local_maxima(),
        marginal,
        residual,
        check_difference,
        grid: (lo, hi),
        rows,
        failed,
    })
}

/// Method runs on a user network; errors need a CME reference domain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Custom {
    pub grid: (i64, i64),
    /// `(method, budget, replicate, cost, error)`; error is absent without a
    /// reference.
    pub rows: Vec<(Method, u64, u64, u64, Option<f64>)>,
    pub failed: Vec<FailedRun>,
}

pub fn run_custom(cfg: &ExperimentConfig, timings: &mut Timings) -> Result<Custom> {
    cfg.validate()?;
    let path = cfg.network.as_ref().expect("validated");
    let file = load_network(path)?;
    crate::network::validate_network(&file.network, &file.projection).into_result()?;
    let (lo, hi) = cfg.grid.unwrap_or((file.projection.s_min, file.projection.s_max));
    let grid: Vec<i64> = (lo..=hi).collect();
    let mut proj = file.projection.clone();
    proj.s_min = proj.s_min.min(lo);
    proj.s_max = proj.s_max.max(hi);
    let reference = match &cfg.domain {
        Some(bounds) => {
            let domain = TruncatedDomain::new(bounds.clone())?;
            let opts = SolverOptions {
                tol: cfg.cme_tol,
                ..Default::default()
            };
            let lattice = timings.time("cme reference", || solve_truncated_cme(&file.network, &domain, Some(&proj), &opts))?;
            Some(marginalize_slow(&lattice, &proj)?)
        }
        None => None,
    };
    match reference {
        Some(reference) => {
            let (rows, failed) = method_sweep(cfg, &file.network, &proj, &grid, file.qssma, &reference, None, timings)?;
            Ok(Custom {
                grid: (lo, hi),
                rows: rows
                    .into_iter()
                    .map(|r| (r.method, r.budget, r.replicate, r.cost, Some(r.error)))
                    .collect(),
                failed,
            })
        }
        None => {
            let opts = SimOptions::default();
            let mut rows = Vec::new();
            for &method in &cfg.methods {
                let runs: Vec<(u64, u64)> = match method {
                    Method::Qssma => vec![(0, 0)],
                    _ => cfg
                        .budgets_for(method)
                        .iter()
                        .flat_map(|&b| (0..cfg.replicates).map(move |r| (b, r)))
                        .collect(),
                };
                for (budget, replicate) in runs {
                    let est = match method {
                        Method::Cma => Estimator::Cma(StoppingRule::SlowEvents(budget)),
                        Method::Nma => Estimator::Nma(budget, cfg.nma_closure),
                        Method::Qssma => Estimator::Qssma(
                            file.qssma
                                .ok_or_else(|| Error::InvalidArgument("no QSSMA closure for this network".into()))?,
                        ),
                    };
                    let seed = cfg.seed.wrapping_add(replicate);
                    let table = timings.time(format!("{method} budget={budget} replicate={replicate}"), || {
                        build_table(&file.network, &proj, &grid, &est, seed, cfg.workers, &opts)
                    })?;
                    rows.push((method, budget, replicate, table.total_cost(), None));
                }
            }
            Ok(Custom {
                grid: (lo, hi),
                rows,
                failed: Vec::new(),
            })
        }
    }
}

/// Sidecar written next to every experiment's CSVs.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub experiment: ExperimentId,
    pub seed: u64,
    pub rng: &'static str,
    pub budgets: Vec<(Method, Vec<u64>)>,
    /// Source revision, taken from `SLOWVAR_COMMIT` when set.
    pub commit: Option<String>,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

/// What an experiment run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub outputs: Vec<PathBuf>,
    pub metadata: Metadata,
    pub timings: Timings,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

/// Runs `cfg`, writing CSVs, the sidecar and the timings file into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    let id = cfg.experiment;
    let mut timings = Timings::default();
    let mut outputs = Vec::new();
    let main = cfg.out.join(format!("{id}.csv"));
    let summary = match id {
        ExperimentId::Fig1a => {
            let r = timings.time("fig1a", || run_fig1a(cfg))?;
            let mut w = create(&main)?;
            writeln!(w, "K,error_qssa")?;
            for (k, e) in &r.rows {
                writeln!(w, "{},{}", fmt_real(*k), fmt_real(*e))?;
            }
            w.flush()?;
            serde_json::json!({ "slope": r.slope, "slope_window": cfg.slope_window })
        }
        ExperimentId::Fig1b => {
            let r = timings.time("fig1b", || run_fig1b(cfg))?;
            let mut w = create(&main)?;
            writeln!(w, "lambda,error_fpe,poisson_at_zero")?;
            for (l, e, p0) in &r.rows {
                writeln!(w, "{},{},{}", fmt_real(*l), fmt_real(*e), fmt_real(*p0))?;
            }
            w.flush()?;
            serde_json::json!({ "slope": r.slope, "slope_window": cfg.slope_window })
        }
        ExperimentId::Fig2 => {
            let r = run_fig2(cfg, &mut timings)?;
            let mut w = create(&main)?;
            writeln!(w, "K,method,budget,replicate,cost,error")?;
            for (k, row) in &r.rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    fmt_real(*k),
                    row.method,
                    row.budget,
                    row.replicate,
                    row.cost,
                    fmt_real(row.error)
                )?;
            }
            w.flush()?;
            serde_json::json!({ "failed": r.failed })
        }
        ExperimentId::Fig3 => {
            let r = timings.time("fig3", || run_fig3(cfg))?;
            let mut w = create(&main)?;
            writeln!(w, "t,{}", r.reactions.join(","))?;
            for (t, c) in r.times.iter().zip(&r.counts) {
                let cells: Vec<String> = c.iter().map(u64::to_string).collect();
                writeln!(w, "{},{}", fmt_real(*t), cells.join(","))?;
            }
            w.flush()?;
            serde_json::json!({ "final_counts": r.counts.last() })
        }
        ExperimentId::Fig4 => {
            let r = run_fig4(cfg, &mut timings)?;
            let marginal_path = cfg.out.join("fig4_marginal.csv");
            let mut w = create(&marginal_path)?;
            r.marginal.write_csv(&mut w, "s")?;
            w.flush()?;
            outputs.push(marginal_path);
            let mut w = create(&main)?;
            writeln!(w, "method,budget,replicate,cost,error")?;
            for row in &r.rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    row.method,
                    row.budget,
                    row.replicate,
                    row.cost,
                    fmt_real(row.error)
                )?;
            }
            w.flush()?;
            serde_json::json!({
                "peaks": r.peaks,
                "grid": r.grid,
                "cme_residual": r.residual,
                "check_difference": r.check_difference,
                "failed": r.failed,
            })
        }
        ExperimentId::Custom => {
            let r = run_custom(cfg, &mut timings)?;
            let mut w = create(&main)?;
            writeln!(w, "method,budget,replicate,cost,error")?;
            for (m, b, rep, cost, e) in &r.rows {
                writeln!(w, "{m},{b},{rep},{cost},{}", opt_real(*e))?;
            }
            w.flush()?;
            serde_json::json!({ "grid": r.grid, "failed": r.failed })
        }
    };
    outputs.insert(0, main);

    let metadata = Metadata {
        experiment: id,
        seed: cfg.seed,
        rng: RNG_ALGORITHM,
        budgets: cfg
            .methods
            .iter()
            .map(|&m| (m, cfg.budgets_for(m).to_vec()))
            .collect(),
        commit: std::env::var("SLOWVAR_COMMIT").ok(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        summary,
    };
    let meta_path = cfg.out.join(format!("{id}.meta.json"));
    let mut w = create(&meta_path)?;
    serde_json::to_writer_pretty(&mut w, &metadata).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    w.flush()?;

    let timing_path = cfg.out.join(format!("{id}.timings.csv"));
    let mut w = create(&timing_path)?;
    writeln!(w, "stage,wall_ms")?;
    for (stage, ms) in &timings.0 {
        writeln!(w, "\"{}\",{}", stage.replace('"', "'"), fmt_real(*ms))?;
    }
    w.flush()?;
    outputs.push(meta_path);
    outputs.push(timing_path);
    Ok(RunReport {
        outputs,
        metadata,
        timings,
    })
}
