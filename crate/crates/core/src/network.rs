//! Reaction networks, mass-action propensities and slow-variable projections.
//!
//! A reaction `j` with reactant stoichiometry `ν⁻` fires with propensity
//!
//! ```text
//! α_j(x) = k_j · V^(1 − Σν⁻) · Π_i ν⁻_i! · C(x_i, ν⁻_i)
//! ```
//!
//! which is a product of falling factorials `x (x − 1) … (x − ν⁻ + 1)` times a
//! single coefficient. Rate constants can be supplied either in that raw
//! mass-action form (volume applied here) or already combined with the volume
//! factor, which is how parameter lists such as `k₂/V = 0.04` are usually
//! written down.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported total reactant order.
pub const MAX_ORDER: u32 = 2;

/// How a reaction's rate constant relates to its propensity coefficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateConvention {
    /// `k` is a mass-action constant; the coefficient is `k · V^(1 − order)`.
    #[default]
    MassAction,
    /// `k` already contains the volume factor and is used as the coefficient.
    Combined,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    pub name: String,
    /// Reactant stoichiometry `ν⁻`, one entry per species.
    pub reactants: Vec<u32>,
    /// Product stoichiometry `ν⁺`, one entry per species.
    pub products: Vec<u32>,
    pub rate: f64,
    pub convention: RateConvention,
}

impl Reaction {
    pub fn new(
        name: impl Into<String>,
        reactants: Vec<u32>,
        products: Vec<u32>,
        rate: f64,
        convention: RateConvention,
    ) -> Self {
        Self {
            name: name.into(),
            reactants,
            products,
            rate,
            convention,
        }
    }

    /// Total reactant order `Σν⁻`.
    pub fn order(&self) -> u32 {
        self.reactants.iter().sum()
    }

    /// Net stoichiometry `ν = ν⁺ − ν⁻`.
    pub fn net(&self) -> Vec<i64> {
        self.products
            .iter()
            .zip(&self.reactants)
            .map(|(&p, &r)| i64::from(p) - i64::from(r))
            .collect()
    }
}

/// Reactant factors of a propensity, specialised for the common low orders.
#[derive(Clone, Debug, PartialEq)]
enum Factors {
    Zeroth,
    Unary(usize),
    Binary(usize, usize),
    Dimer(usize),
    General(Vec<(usize, u32)>),
}

impl Factors {
    fn from_reactants(reactants: &[u32]) -> Self {
        let terms: Vec<(usize, u32)> = reactants
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &n)| (i, n))
            .collect();
        match terms.as_slice() {
            [] => Factors::Zeroth,
            [(i, 1)] => Factors::Unary(*i),
            [(i, 2)] => Factors::Dimer(*i),
            [(i, 1), (k, 1)] => Factors::Binary(*i, *k),
            _ => Factors::General(terms),
        }
    }

    #[inline(always)]
    fn eval(&self, x: &[i64]) -> f64 {
        match *self {
            Factors::Zeroth => 1.0,
            Factors::Unary(i) => x[i].max(0) as f64,
            Factors::Binary(i, k) => (x[i].max(0) * x[k].max(0)) as f64,
            Factors::Dimer(i) => {
                let n = x[i];
                if n < 2 {
                    0.0
                } else {
                    (n * (n - 1)) as f64
                }
            }
            Factors::General(ref terms) => terms
                .iter()
                .map(|&(i, nu)| falling_factorial(x[i], nu))
                .product(),
        }
    }
}

/// Same product with real arguments, each factor clamped at zero.
fn eval_real(reactants: &[u32], x: &[f64]) -> f64 {
    reactants
        .iter()
        .zip(x)
        .flat_map(|(&nu, &v)| (0..nu).map(move |m| (v - f64::from(m)).max(0.0)))
        .product()
}

/// `x (x − 1) … (x − n + 1)`, zero whenever `x < n`.
fn falling_factorial(x: i64, n: u32) -> f64 {
    if x < i64::from(n) {
        return 0.0;
    }
    (0..i64::from(n)).map(|m| (x - m) as f64).product()
}

/// A well-mixed reaction network with a fast/slow partition of its reactions.
#[derive(Clone, Debug)]
pub struct ReactionNetwork {
    species: Vec<String>,
    reactions: Vec<Reaction>,
    volume: f64,
    fast: Vec<bool>,
    coefficients: Vec<f64>,
    factors: Vec<Factors>,
    nets: Vec<Vec<i64>>,
}

impl ReactionNetwork {
    /// Builds a network; reactions listed in `fast` form the fast set and all
    /// others the slow set.
    pub fn new(
        species: Vec<String>,
        reactions: Vec<Reaction>,
        volume: f64,
        fast: &[usize],
    ) -> Result<Self> {
        let n = species.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("no species".into()));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::InvalidNetwork(format!("volume must be positive, got {volume}")));
        }
        for r in &reactions {
            if r.reactants.len() != n || r.products.len() != n {
                return Err(Error::InvalidNetwork(format!(
                    "reaction {} has stoichiometry of length {}/{}, expected {n}",
                    r.name,
                    r.reactants.len(),
                    r.products.len()
                )));
            }
            if !(r.rate.is_finite() && r.rate >= 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "reaction {} has invalid rate constant {}",
                    r.name, r.rate
                )));
            }
        }
        let mut is_fast = vec![false; reactions.len()];
        for &j in fast {
            if j >= reactions.len() {
                return Err(Error::InvalidNetwork(format!("fast reaction index {j} out of range")));
            }
            is_fast[j] = true;
        }
        let coefficients = reactions
            .iter()
            .map(|r| match r.convention {
                RateConvention::Combined => r.rate,
                RateConvention::MassAction => {
                    r.rate * volume.powi(1 - r.order() as i32)
                }
            })
            .collect();
        let factors = reactions.iter().map(|r| Factors::from_reactants(&r.reactants)).collect();
        let nets = reactions.iter().map(Reaction::net).collect();
        Ok(Self {
            species,
            reactions,
            volume,
            fast: is_fast,
            coefficients,
            factors,
            nets,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn species_count(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn reaction_count(&self) -> usize {
        self.reactions.len()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn is_fast(&self, j: usize) -> bool {
        self.fast[j]
    }

    pub fn fast_set(&self) -> Vec<usize> {
        (0..self.reactions.len()).filter(|&j| self.fast[j]).collect()
    }

    pub fn slow_set(&self) -> Vec<usize> {
        (0..self.reactions.len()).filter(|&j| !self.fast[j]).collect()
    }

    /// Net stoichiometry of reaction `j`.
    pub fn net(&self, j: usize) -> &[i64] {
        &self.nets[j]
    }

    /// Propensity coefficient `k_j · V^(1 − order)` (or the combined rate).
    pub fn coefficient(&self, j: usize) -> f64 {
        self.coefficients[j]
    }

    /// Propensity of a single reaction; no dimension check.
    #[inline]
    pub fn propensity(&self, j: usize, x: &[i64]) -> f64 {
        self.coefficients[j] * self.factors[j].eval(x)
    }

    /// Propensity formula of reaction `j` evaluated at real-valued copy
    /// numbers, e.g. mean copy numbers.
    pub fn propensity_at(&self, j: usize, x: &[f64]) -> f64 {
        self.coefficients[j] * eval_real(&self.reactions[j].reactants, x)
    }

    /// Writes all propensities into `out` and returns their sum.
    #[inline(always)]
    pub fn propensities_into(&self, x: &[i64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (j, a) in out.iter_mut().enumerate() {
            *a = self.coefficients[j] * self.factors[j].eval(x);
            total += *a;
        }
        total
    }

    /// All propensities at `state`.
    pub fn propensities(&self, state: &[i64]) -> Result<Vec<f64>> {
        self.check_dims(state)?;
        let mut out = vec![0.0; self.reactions.len()];
        self.propensities_into(state, &mut out);
        Ok(out)
    }

    /// Fires reaction `j`. Negative components are kept and reported.
    pub fn apply_reaction(&self, state: &StateVector, j: usize) -> Applied {
        let mut next = state.clone();
        for (x, d) in next.iter_mut().zip(&self.nets[j]) {
            *x += d;
        }
        let negative = next.iter().any(|&x| x < 0);
        Applied { state: next, negative }
    }

    pub(crate) fn check_dims(&self, state: &[i64]) -> Result<()> {
        if state.len() != self.species.len() {
            return Err(Error::DimensionMismatch {
                expected: self.species.len(),
                got: state.len(),
            });
        }
        Ok(())
    }
}

/// Propensities and sparse state changes of a subset of reactions, laid out
/// for simulation loops.
#[derive(Clone, Debug)]
pub(crate) struct Kernel {
    terms: Vec<(f64, Factors)>,
    delta_start: Vec<usize>,
    deltas: Vec<(usize, i64)>,
}

impl Kernel {
    /// Kernel over `reactions` (network indices) with coefficients divided
    /// by `scale`.
    pub(crate) fn new(network: &ReactionNetwork, reactions: &[usize], scale: f64) -> Self {
        let mut delta_start = vec![0];
        let mut deltas = Vec::new();
        for &j in reactions {
            deltas.extend(network.net(j).iter().enumerate().filter(|(_, &d)| d != 0).map(|(i, &d)| (i, d)));
            delta_start.push(deltas.len());
        }
        Self {
            terms: reactions
                .iter()
                .map(|&j| (network.coefficients[j] / scale, network.factors[j].clone()))
                .collect(),
            delta_start,
            deltas,
        }
    }

    #[inline(always)]
    pub(crate) fn propensities_into(&self, x: &[i64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (a, (c, f)) in out.iter_mut().zip(&self.terms) {
            *a = c * f.eval(x);
            total += *a;
        }
        total
    }

    /// Adds the state change of local reaction `k` to `x`.
    #[inline(always)]
    pub(crate) fn apply(&self, k: usize, x: &mut [i64]) {
        for &(i, d) in &self.deltas[self.delta_start[k]..self.delta_start[k + 1]] {
            x[i] += d;
        }
    }
}

/// Result of [`ReactionNetwork::apply_reaction`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Applied {
    pub state: StateVector,
    pub negative: bool,
}

/// Copy numbers of every species.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateVector(pub Vec<i64>);

impl StateVector {
    pub fn new(copies: Vec<i64>) -> Self {
        Self(copies)
    }
}

impl Deref for StateVector {
    type Target = [i64];
    fn deref(&self) -> &[i64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [i64] {
        &mut self.0
    }
}

impl From<Vec<i64>> for StateVector {
    fn from(v: Vec<i64>) -> Self {
        Self(v)
    }
}

/// The slow variable `S = c · X` together with its grid and the species that
/// absorbs the reset in constrained simulations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowProjection {
    pub coefficients: Vec<i64>,
    pub s_min: i64,
    pub s_max: i64,
    /// Species whose copy number is adjusted to restore `S = s`.
    pub adjustment_species: usize,
}

impl SlowProjection {
    pub fn new(coefficients: Vec<i64>, s_min: i64, s_max: i64, adjustment_species: usize) -> Self {
        Self {
            coefficients,
            s_min,
            s_max,
            adjustment_species,
        }
    }

    #[inline]
    pub fn slow_value(&self, x: &[i64]) -> i64 {
        self.coefficients.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Change of `S` caused by a stoichiometry vector.
    pub fn slow_change(&self, net: &[i64]) -> i64 {
        self.slow_value(net)
    }

    pub fn grid(&self) -> Vec<i64> {
        (self.s_min..=self.s_max).collect()
    }

    pub fn contains(&self, s: i64) -> bool {
        (self.s_min..=self.s_max).contains(&s)
    }

    /// Sets the adjustment species so that `c · x = s`, leaving the others untouched.
    #[inline]
    pub(crate) fn reset(&self, x: &mut [i64], s: i64) {
        let a = self.adjustment_species;
        let rest: i64 = self
            .coefficients
            .iter()
            .zip(x.iter())
            .enumerate()
            .filter(|&(i, _)| i != a)
            .map(|(_, (c, x))| c * x)
            .sum();
        x[a] = (s - rest) * self.coefficients[a];
    }
}

/// A single problem found by [`validate_network`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Violation {
    DimensionMismatch { species: usize, coefficients: usize },
    FastReactionChangesSlow { reaction: usize, name: String, change: i64 },
    UnsupportedOrder { reaction: usize, name: String, order: u32 },
    EmptyGrid { s_min: i64, s_max: i64 },
    BadAdjustmentSpecies { index: usize },
    AdjustmentCoefficient { coefficient: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { species, coefficients } => write!(
                f,
                "projection has {coefficients} coefficients for {species} species"
            ),
            Violation::FastReactionChangesSlow { name, change, .. } => {
                write!(f, "fast reaction {name} changes the slow variable by {change}")
            }
            Violation::UnsupportedOrder { name, order, .. } => {
                write!(f, "reaction {name} has order {order} (maximum {MAX_ORDER})")
            }
            Violation::EmptyGrid { s_min, s_max } => write!(f, "empty grid [{s_min}, {s_max}]"),
            Violation::BadAdjustmentSpecies { index } => {
                write!(f, "adjustment species index {index} out of range")
            }
            Violation::AdjustmentCoefficient { coefficient } => write!(
                f,
                "adjustment species has slow coefficient {coefficient}, must be ±1"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidNetwork(self.to_string()))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks that the projection is invariant under every fast reaction, that all
/// reactions are at most bimolecular and that the grid and adjustment species
/// make sense.
pub fn validate_network(network: &ReactionNetwork, projection: &SlowProjection) -> ValidationReport {
    let mut violations = Vec::new();
    let n = network.species_count();
    if projection.coefficients.len() != n {
        violations.push(Violation::DimensionMismatch {
            species: n,
            coefficients: projection.coefficients.len(),
        });
        return ValidationReport { violations };
    }
    for (j, r) in network.reactions().iter().enumerate() {
        if r.order() > MAX_ORDER {
            violations.push(Violation::UnsupportedOrder {
                reaction: j,
                name: r.name.clone(),
                order: r.order(),
            });
        }
        if network.is_fast(j) {
            let change = projection.slow_change(network.net(j));
            if change != 0 {
                violations.push(Violation::FastReactionChangesSlow {
                    reaction: j,
                    name: r.name.clone(),
                    change,
                });
            }
        }
    }
    if projection.s_min > projection.s_max {
        violations.push(Violation::EmptyGrid {
            s_min: projection.s_min,
            s_max: projection.s_max,
        });
    }
    if projection.adjustment_species >= n {
        violations.push(Violation::BadAdjustmentSpecies {
            index: projection.adjustment_species,
        });
    } else {
        let c = projection.coefficients[projection.adjustment_species];
        if c.abs() != 1 {
            violations.push(Violation::AdjustmentCoefficient { coefficient: c });
        }
    }
    ValidationReport { violations }
}
