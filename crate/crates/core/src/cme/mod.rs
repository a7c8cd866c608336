//! Exact stationary distributions: Poisson laws for the linear system and a
//! truncated chemical master equation solver.

mod domain;
mod generator;
mod solver;

use std::io::Write;

use statrs::function::gamma::ln_gamma;

pub use domain::TruncatedDomain;
pub use generator::{build_generator, SparseGenerator};
pub use solver::{
    scaled_residual, stationary_distribution, stationary_distribution_with, SolveMethod, SolverOptions,
    StationarySolution, DENSE_LIMIT,
};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, SlowProjection};
use crate::util::fmt_real;

/// Lattice entries at or below this mass are left out of CSV dumps.
pub const DUMP_THRESHOLD: f64 = 1e-16;

/// Poisson distribution with intensity `lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonLaw {
    lambda: f64,
}

impl PoissonLaw {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("Poisson intensity must be positive, got {lambda}")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn pmf(&self, n: i64) -> f64 {
        if n < 0 {
            return 0.0;
        }
        ln_poisson(self.lambda, n as u64).exp()
    }

    /// Masses on `lo..=hi`.
    pub fn on_range(&self, lo: i64, hi: i64) -> DiscreteDistribution {
        DiscreteDistribution::from_fn(lo, hi, |n| self.pmf(n))
    }
}

fn ln_poisson(lambda: f64, n: u64) -> f64 {
    n as f64 * lambda.ln() - lambda - ln_gamma(n as f64 + 1.0)
}

/// `λⁿ e^{−λ} / n!`.
pub fn poisson_pmf(lambda: f64, n: u64) -> Result<f64> {
    Ok(PoissonLaw::new(lambda)?.pmf(n as i64))
}

fn positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Stationary law of `S = X₁ + X₂` for the linear system:
/// `λ₀ = (k₁V/k₂)(2 + k₂/K)`.
pub fn linear_exact_slow_distribution(k1: f64, k2: f64, volume: f64, k_fast: f64) -> Result<PoissonLaw> {
    positive(&[("k1", k1), ("k2", k2), ("volume", volume), ("K", k_fast)])?;
    PoissonLaw::new(k1 * volume / k2 * (2.0 + k2 / k_fast))
}

/// Quasi-steady-state law of `S`: `λ = 2k₁V/k₂`.
pub fn linear_qssa_slow_distribution(k1: f64, k2: f64, volume: f64) -> Result<PoissonLaw> {
    positive(&[("k1", k1), ("k2", k2), ("volume", volume)])?;
    PoissonLaw::new(2.0 * k1 * volume / k2)
}

/// Intensities `(λ₁, λ₂) = (k₁V/k₂, λ₁(K + k₂)/K)` of the product-Poisson
/// stationary law of the linear system. Balancing the reactions gives
/// `E[X₂] = k₁V/k₂ = λ₁` and `E[X₁] = λ₂`.
pub fn linear_joint_intensities(k1: f64, k2: f64, volume: f64, k_fast: f64) -> Result<(f64, f64)> {
    positive(&[("k1", k1), ("k2", k2), ("volume", volume), ("K", k_fast)])?;
    let l1 = k1 * volume / k2;
    Ok((l1, l1 * (k_fast + k2) / k_fast))
}

/// Stationary probability of `(x₁, x₂)` for the linear system: `X₁` is
/// Poisson(λ₂) and `X₂` is Poisson(λ₁), independently.
pub fn exact_joint_pmf_linear(k1: f64, k2: f64, volume: f64, k_fast: f64, x1: u64, x2: u64) -> Result<f64> {
    let (l1, l2) = linear_joint_intensities(k1, k2, volume, k_fast)?;
    Ok((ln_poisson(l2, x1) + ln_poisson(l1, x2)).exp())
}

/// Stationary distribution on a truncated lattice.
#[derive(Clone, Debug)]
pub struct LatticeDistribution {
    pub domain: TruncatedDomain,
    pub p: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

impl LatticeDistribution {
    pub fn get(&self, x: &[i64]) -> f64 {
        self.domain.index(x).map_or(0.0, |i| self.p[i])
    }

    /// CSV `x1,…,xN,p` of the entries above `threshold`, in lattice order
    /// (row-major, last species fastest).
    pub fn write_csv<W: Write>(&self, mut out: W, threshold: f64) -> Result<()> {
        let n = self.domain.species_count();
        let header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        writeln!(out, "{},p", header.join(","))?;
        let mut x = vec![0i64; n];
        for (i, &p) in self.p.iter().enumerate() {
            if p > threshold {
                self.domain.state_into(i, &mut x);
                for v in &x {
                    write!(out, "{v},")?;
                }
                writeln!(out, "{}", fmt_real(p))?;
            }
        }
        Ok(())
    }
}

/// Solves the CME of `network` truncated to `domain`. Passing the slow
/// projection enables the level-aggregation solver.
pub fn solve_truncated_cme(
    network: &ReactionNetwork,
    domain: &TruncatedDomain,
    projection: Option<&SlowProjection>,
    opts: &SolverOptions,
) -> Result<LatticeDistribution> {
    let gen = build_generator(network, domain)?;
    let levels = projection.map(|proj| slow_levels(domain, &proj.coefficients));
    let sol = stationary_distribution_with(&gen, levels.as_deref(), opts)?;
    Ok(LatticeDistribution {
        domain: domain.clone(),
        p: sol.p,
        residual: sol.residual,
        iterations: sol.iterations,
        method: sol.method,
    })
}

fn slow_levels(domain: &TruncatedDomain, coefficients: &[i64]) -> Vec<i64> {
    let mut x = vec![0i64; domain.species_count()];
    (0..domain.len())
        .map(|i| {
            domain.state_into(i, &mut x);
            x.iter().zip(coefficients).map(|(a, c)| a * c).sum()
        })
        .collect()
}

/// `P(s) = Σ_{c·x = s} p(x)` over the range of `c·x` on the domain.
pub fn marginalize_slow(lattice: &LatticeDistribution, projection: &SlowProjection) -> Result<DiscreteDistribution> {
    let c = &projection.coefficients;
    if c.len() != lattice.domain.species_count() {
        return Err(Error::DimensionMismatch {
            expected: lattice.domain.species_count(),
            got: c.len(),
        });
    }
    let levels = slow_levels(&lattice.domain, c);
    let lo = *levels.iter().min().expect("non-empty domain");
    let hi = *levels.iter().max().expect("non-empty domain");
    let mut masses = vec![0.0; (hi - lo + 1) as usize];
    for (l, p) in levels.iter().zip(&lattice.p) {
        masses[(l - lo) as usize] += p;
    }
    Ok(DiscreteDistribution::new(lo, masses))
}
