//! Stationary Fokker–Planck solution of the one-dimensional slow-variable
//! diffusion and its projection onto the integers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::estimators::DriftDiffusionTable;
use crate::special::{ln_diff_exp, ln_regularized_gamma, ln_upper_incomplete_gamma};
use crate::util::fmt_real;

/// A probability density on a bounded interval.
pub trait Density {
    /// Closed interval outside which the density is treated as zero.
    fn support(&self) -> (f64, f64);

    fn ln_value(&self, s: f64) -> f64;

    fn value(&self, s: f64) -> f64 {
        self.ln_value(s).exp()
    }
}

/// Density sampled on a grid, `p(s) = (C/D(s)) exp(∫ V/D)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub ln_values: Vec<f64>,
    /// `ln C`.
    pub ln_normalization: f64,
}

impl ContinuousDensity {
    /// Trapezoidal integral over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// CSV with header `s,p`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "s,p")?;
        for (s, p) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_real(*s), fmt_real(*p))?;
        }
        Ok(())
    }
}

impl Density for ContinuousDensity {
    fn support(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    /// Cubic Lagrange interpolation of `ln p` through the four nearest grid
    /// points (linear on grids of fewer than four points).
    fn ln_value(&self, s: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        if s < g[0] || s > g[n - 1] {
            return f64::NEG_INFINITY;
        }
        let i = g.partition_point(|&x| x <= s).clamp(1, n - 1) - 1;
        if n < 4 {
            let t = (s - g[i]) / (g[i + 1] - g[i]);
            return self.ln_values[i] * (1.0 - t) + self.ln_values[i + 1] * t;
        }
        let start = i.saturating_sub(1).min(n - 4);
        let mut acc = 0.0;
        for a in start..start + 4 {
            let mut w = 1.0;
            for b in start..start + 4 {
                if a != b {
                    w *= (s - g[b]) / (g[a] - g[b]);
                }
            }
            acc += w * self.ln_values[a];
        }
        acc
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Stationary density of the diffusion with drift `V` and diffusion `D`
/// sampled on `grid`. The exponent `∫ V/D` is accumulated by the trapezoidal
/// rule from the left end and shifted by its maximum before exponentiation.
pub fn solve_stationary_on(grid: &[f64], drift: &[f64], diffusion: &[f64]) -> Result<ContinuousDensity> {
    let n = grid.len();
    if drift.len() != n || diffusion.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: drift.len().min(diffusion.len()),
        });
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 grid points, got {n}")));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("grid must be strictly increasing".into()));
    }
    for ((&s, &v), &d) in grid.iter().zip(drift).zip(diffusion) {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NonPositiveDiffusion { s, value: d });
        }
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("drift at s = {s} is {v}")));
        }
    }
    let ratio: Vec<f64> = drift.iter().zip(diffusion).map(|(v, d)| v / d).collect();
    let mut ln_p = Vec::with_capacity(n);
    let mut exponent = 0.0;
    for i in 0..n {
        if i > 0 {
            exponent += 0.5 * (grid[i] - grid[i - 1]) * (ratio[i - 1] + ratio[i]);
        }
        ln_p.push(exponent - diffusion[i].ln());
    }
    let shift = ln_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = ln_p.iter().map(|l| (l - shift).exp()).collect();
    let ln_normalization = -shift - trapezoid(grid, &scaled).ln();
    let ln_values: Vec<f64> = ln_p.iter().map(|l| l + ln_normalization).collect();
    Ok(ContinuousDensity {
        grid: grid.to_vec(),
        values: ln_values.iter().map(|l| l.exp()).collect(),
        ln_values,
        ln_normalization,
    })
}

/// Stationary density for a drift/diffusion table.
pub fn solve_stationary(table: &DriftDiffusionTable) -> Result<ContinuousDensity> {
    if let Some(row) = table.failures().next() {
        return Err(Error::InvalidArgument(format!(
            "table has no estimate at s = {}: {}",
            row.s,
            row.failure.as_deref().unwrap_or("")
        )));
    }
    let grid: Vec<f64> = table.grid().iter().map(|&s| s as f64).collect();
    solve_stationary_on(&grid, &table.drift(), &table.diffusion())
}

/// Closed-form stationary density of the birth–death diffusion
/// `p(s) = C e^{−2s} (s + λ)^{4λ−1}` on `s ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthDeathDensity {
    pub lambda: f64,
    pub ln_normalization: f64,
}

impl BirthDeathDensity {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
        }
        // ∫₀^∞ e^{−2s}(s+λ)^{4λ−1} ds = e^{2λ} 2^{−4λ} Γ(4λ, 2λ).
        let ln_integral = 2.0 * lambda - 4.0 * lambda * std::f64::consts::LN_2 + ln_upper_incomplete_gamma(4.0 * lambda, 2.0 * lambda)?;
        Ok(Self {
            lambda,
            ln_normalization: -ln_integral,
        })
    }
}

impl Density for BirthDeathDensity {
    /// Upper end placed far enough into the tail that the mass beyond it is
    /// below double precision.
    fn support(&self) -> (f64, f64) {
        let l = self.lambda;
        (0.0, l + 60.0 * l.sqrt() + 100.0)
    }

    fn ln_value(&self, s: f64) -> f64 {
        if s < 0.0 {
            return f64::NEG_INFINITY;
        }
        let l = self.lambda;
        self.ln_normalization - 2.0 * s + (4.0 * l - 1.0) * (s + l).ln()
    }
}

pub fn birth_death_density(lambda: f64, s: f64) -> Result<f64> {
    Ok(BirthDeathDensity::new(lambda)?.value(s))
}

/// Integer masses of a density together with the mass found before
/// renormalisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub distribution: DiscreteDistribution,
    pub raw_mass: f64,
}

/// Default number of sub-intervals per unit cell.
pub const REFINEMENT: usize = 8;

const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_663_99, 0.236_926_885_056_189_09),
    (-0.538_469_310_105_683_09, 0.478_628_670_499_366_47),
    (0.0, 0.568_888_888_888_888_89),
    (0.538_469_310_105_683_09, 0.478_628_670_499_366_47),
    (0.906_179_845_938_663_99, 0.236_926_885_056_189_09),
];

/// `P(n) = ∫_{n−½}^{n+½} p`, each cell clipped to the support, integrated by
/// composite Gauss–Legendre on `refine` sub-intervals, then renormalised.
pub fn project_to_pmf_with<D: Density + ?Sized>(density: &D, refine: usize) -> Result<Projection> {
    let (lo, hi) = density.support();
    if !(hi > lo) {
        return Err(Error::InvalidArgument("density support is empty".into()));
    }
    let refine = refine.max(1);
    let first = (lo - 0.5).floor() as i64 + 1;
    let last = (hi + 0.5).ceil() as i64 - 1;
    let masses: Vec<f64> = (first..=last)
        .map(|n| {
            let a = (n as f64 - 0.5).max(lo);
            let b = (n as f64 + 0.5).min(hi);
            let h = (b - a) / refine as f64;
            let mut sum = 0.0;
            for k in 0..refine {
                let mid = a + (k as f64 + 0.5) * h;
                for (t, w) in GAUSS5 {
                    sum += w * density.value(mid + 0.5 * h * t);
                }
            }
            0.5 * h * sum
        })
        .collect();
    let raw = DiscreteDistribution::new(first, masses);
    let raw_mass = raw.total();
    Ok(Projection {
        distribution: raw.normalized()?,
        raw_mass,
    })
}

pub fn project_to_pmf<D: Density + ?Sized>(density: &D) -> Result<Projection> {
    project_to_pmf_with(density, REFINEMENT)
}

/// Mass of the birth–death density on the unit cell around `n`, from
/// incomplete gamma functions.
///
/// The cell `[n − ½, n + ½]` is clipped at `s = 0`, where the density is
/// truncated, so the `n = 0` cell is `[0, ½]` and the masses sum to one.
pub fn birth_death_pmf_analytic(lambda: f64, n: u64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
    }
    let k = 4.0 * lambda;
    // With u = 2(s + λ): the cell maps to [2n−1+2λ, 2n+1+2λ] and s = 0 to 2λ.
    let x_lo = (2.0 * n as f64 - 1.0).max(0.0) + 2.0 * lambda;
    let x_hi = 2.0 * n as f64 + 1.0 + 2.0 * lambda;
    let (lp_lo, lq_lo) = ln_regularized_gamma(k, x_lo)?;
    let (lp_hi, lq_hi) = ln_regularized_gamma(k, x_hi)?;
    let (_, lq_0) = ln_regularized_gamma(k, 2.0 * lambda)?;
    let ln_num = if x_lo > k { ln_diff_exp(lq_lo, lq_hi) } else { ln_diff_exp(lp_hi, lp_lo) };
    Ok((ln_num - lq_0).exp())
}

/// [`birth_death_pmf_analytic`] on `0..=n_max`.
pub fn birth_death_pmf_range(lambda: f64, n_max: u64) -> Result<DiscreteDistribution> {
    let masses = (0..=n_max).map(|n| birth_death_pmf_analytic(lambda, n)).collect::<Result<_>>()?;
    Ok(DiscreteDistribution::new(0, masses))
}
