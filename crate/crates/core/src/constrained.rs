//! Constrained simulation at a fixed value of the slow variable, and
//! simulation of the fast subsystem alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Kernel, ReactionNetwork, SlowProjection, StateVector};
use crate::rng::RandomStream;
use crate::ssa::{select_from_uniform, waiting_time};

/// Starting fast state for a given slow value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Rounded fixed point of the fast reaction-rate equations, falling back to
    /// [`InitialCondition::AdjustmentSpecies`] when none can be located.
    #[default]
    RreRounded,
    /// All of `s` carried by the adjustment species, every other species zero.
    AdjustmentSpecies,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Fraction of the stopping budget simulated and discarded before
    /// statistics are collected.
    pub burn_in_fraction: f64,
    pub initial: InitialCondition,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            burn_in_fraction: 0.01,
            initial: InitialCondition::RreRounded,
        }
    }
}

/// Builds the starting state at slow value `s`.
pub fn initial_state(
    network: &ReactionNetwork,
    projection: &SlowProjection,
    s: i64,
    initial: InitialCondition,
) -> Result<StateVector> {
    let n = network.species_count();
    let adj = projection.adjustment_species;
    if projection.coefficients.len() != n || adj >= n {
        return Err(Error::InvalidNetwork("projection does not match network".into()));
    }
    let c_adj = projection.coefficients[adj];
    let mut x = vec![0i64; n];
    x[adj] = s * c_adj;
    if x[adj] < 0 {
        return Err(Error::NoConsistentState(s));
    }
    if initial == InitialCondition::RreRounded {
        if let Some(y) = rre_fixed_point(network, projection, s) {
            x = y;
        }
    }
    debug_assert_eq!(projection.slow_value(&x), s);
    Ok(StateVector::new(x))
}

/// Fixed point of the deterministic fast dynamics on `c · x = s` for
/// two-species networks, located by bisection on the non-adjustment species.
fn rre_fixed_point(network: &ReactionNetwork, projection: &SlowProjection, s: i64) -> Option<Vec<i64>> {
    if network.species_count() != 2 {
        return None;
    }
    let adj = projection.adjustment_species;
    let other = 1 - adj;
    let c_adj = projection.coefficients[adj] as f64;
    let c_o = projection.coefficients[other];
    if c_o <= 0 || s < 0 {
        return None;
    }
    let fast = network.fast_set();
    if fast.is_empty() {
        return None;
    }
    let hi = (s / c_o) as f64;
    let rate = |y: f64| -> f64 {
        let mut z = [0.0; 2];
        z[other] = y;
        z[adj] = (s as f64 - c_o as f64 * y) * c_adj;
        fast.iter()
            .map(|&j| {
                let r = &network.reactions()[j];
                let mono: f64 = r
                    .reactants
                    .iter()
                    .zip(z)
                    .map(|(&nu, zi)| zi.max(0.0).powi(nu as i32))
                    .product();
                network.net(j)[other] as f64 * network.coefficient(j) * mono
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, hi);
    let (fa, fb) = (rate(a), rate(b));
    if fa == 0.0 && fb == 0.0 {
        return None;
    }
    if fa * fb > 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = rate(mid);
        if fm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    let y = (0.5 * (a + b)).round().clamp(0.0, hi) as i64;
    let mut x = vec![0i64; 2];
    x[other] = y;
    x[adj] = (s - c_o * y) * projection.coefficients[adj];
    if x[adj] < 0 {
        return None;
    }
    Some(x)
}

/// When a constrained run stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoppingRule {
    /// Number of retained slow-reaction firings `N_S`.
    SlowEvents(u64),
    /// Simulated time `T(s)`.
    ElapsedTime(f64),
}

/// Slow-variable increments harvested by a constrained run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpStatistics {
    /// Increment `dS` → number of occurrences.
    pub increments: BTreeMap<i64, u64>,
    pub elapsed_time: f64,
    pub slow_event_count: u64,
    pub fast_event_count: u64,
    pub reverted_count: u64,
    /// Every simulated iteration, burn-in and reverted steps included.
    pub cost: u64,
}

impl JumpStatistics {
    pub fn sum(&self) -> f64 {
        self.increments.iter().map(|(&d, &n)| d as f64 * n as f64).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.increments.iter().map(|(&d, &n)| (d * d) as f64 * n as f64).sum()
    }

    fn record(&mut self, ds: i64) {
        *self.increments.entry(ds).or_insert(0) += 1;
    }
}

/// Constrained SSA at `S = s`.
///
/// The full network is simulated; after every firing that moves `S` away from
/// `s`, the increment is recorded and the adjustment species is reset so that
/// `S = s` again with all other species untouched. A firing that would leave a
/// negative copy number is undone: its waiting time still counts towards the
/// elapsed time but it records nothing.
pub fn run_cssa(
    network: &ReactionNetwork,
    projection: &SlowProjection,
    s: i64,
    stop: StoppingRule,
    rng: &mut RandomStream,
    options: &SimOptions,
) -> Result<JumpStatistics> {
    if !projection.contains(s) {
        return Err(Error::InvalidArgument(format!(
            "slow value {s} outside grid [{}, {}]",
            projection.s_min, projection.s_max
        )));
    }
    match stop {
        StoppingRule::SlowEvents(0) => {
            return Err(Error::InvalidArgument("slow event budget must be positive".into()))
        }
        StoppingRule::ElapsedTime(t) if !(t > 0.0) => {
            return Err(Error::InvalidArgument("simulation time must be positive".into()))
        }
        _ => {}
    }
    let m = network.reaction_count();
    let slow_change: Vec<i64> = (0..m).map(|j| projection.slow_change(network.net(j))).collect();
    let is_fast: Vec<bool> = (0..m).map(|j| network.is_fast(j)).collect();

    let mut x = initial_state(network, projection, s, options.initial)?;
    let mut trial = x.clone();
    let mut props = vec![0.0; m];
    let mut stats = JumpStatistics::default();

    let (burn_events, burn_time) = match stop {
        StoppingRule::SlowEvents(n) => ((options.burn_in_fraction * n as f64).ceil() as u64, 0.0),
        StoppingRule::ElapsedTime(t) => (0, options.burn_in_fraction * t),
    };
    let mut burning = burn_events > 0 || burn_time > 0.0;
    let mut burn_slow = 0u64;
    let mut burn_clock = 0.0;
    let mut cost = 0u64;

    let all: Vec<usize> = (0..m).collect();
    let kernel = Kernel::new(network, &all, 1.0);
    loop {
        let total = kernel.propensities_into(&x, &mut props);
        if !(total > 0.0) {
            return Err(Error::Absorbing {
                context: Some(format!("constrained simulation at s = {s}")),
            });
        }
        let tau = waiting_time(total, rng.uniform_open());
        let j = select_from_uniform(&props, total, rng.uniform());
        cost += 1;

        if !burning {
            if let StoppingRule::ElapsedTime(t_max) = stop {
                if stats.elapsed_time + tau > t_max {
                    stats.elapsed_time = t_max;
                    break;
                }
            }
            stats.elapsed_time += tau;
        } else {
            burn_clock += tau;
        }

        let ds = slow_change[j];
        if ds == 0 {
            // A positive propensity means the reactants are present.
            kernel.apply(j, &mut x);
        } else {
            trial.copy_from_slice(&x);
            kernel.apply(j, &mut trial);
            projection.reset(&mut trial, s);
            if trial.iter().any(|&v| v < 0) {
                if !burning {
                    stats.reverted_count += 1;
                }
                continue;
            }
            std::mem::swap(&mut x, &mut trial);
        }
        debug_assert_eq!(projection.slow_value(&x), s);

        if is_fast[j] {
            debug_assert_eq!(ds, 0, "fast reaction changed the slow variable");
            if !burning {
                stats.fast_event_count += 1;
            }
        } else if burning {
            burn_slow += 1;
        } else {
            stats.record(ds);
            stats.slow_event_count += 1;
        }

        if burning {
            let done = match stop {
                StoppingRule::SlowEvents(_) => burn_slow >= burn_events,
                StoppingRule::ElapsedTime(_) => burn_clock >= burn_time,
            };
            if done {
                burning = false;
            }
        } else if let StoppingRule::SlowEvents(n) = stop {
            if stats.slow_event_count >= n {
                break;
            }
        }
    }
    stats.cost = cost;
    Ok(stats)
}

/// Time averages collected from a fast-subsystem run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastAverages {
    pub s: i64,
    /// `⟨x_i⟩` per species.
    pub means: Vec<f64>,
    /// `⟨x_i x_k⟩`, row-major `N × N`.
    pub second_moments: Vec<f64>,
    /// Time-averaged propensity of every slow reaction, `(index, ⟨α⟩)`.
    pub slow_propensities: Vec<(usize, f64)>,
    pub events: u64,
    /// Every simulated fast event, burn-in included.
    pub cost: u64,
    /// The fast subsystem reached (or started in) a state where no fast
    /// reaction can fire; averages are that state's values.
    pub absorbed: bool,
}

impl FastAverages {
    fn frozen(network: &ReactionNetwork, s: i64, x: &[i64], events: u64, cost: u64) -> Self {
        let n = x.len();
        let means: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let second_moments = (0..n * n).map(|k| means[k / n] * means[k % n]).collect();
        let slow_propensities = network
            .slow_set()
            .into_iter()
            .map(|j| (j, network.propensity(j, x)))
            .collect();
        Self {
            s,
            means,
            second_moments,
            slow_propensities,
            events,
            cost,
            absorbed: true,
        }
    }
}

/// Simulates only the fast reactions at slow value `s` for `n_fast` events
/// (after burn-in) and returns time-weighted averages.
///
/// The run uses a clock in units of the largest fast rate coefficient. Time
/// averages do not depend on the clock unit, so uniformly rescaling the fast
/// rates leaves the output bit-for-bit unchanged.
pub fn run_fast_subsystem(
    network: &ReactionNetwork,
    projection: &SlowProjection,
    s: i64,
    n_fast: u64,
    rng: &mut RandomStream,
    options: &SimOptions,
) -> Result<FastAverages> {
    let fast = network.fast_set();
    if fast.is_empty() {
        return Err(Error::InvalidNetwork("fast reaction set is empty".into()));
    }
    if n_fast == 0 {
        return Err(Error::InvalidArgument("fast event budget must be positive".into()));
    }
    let mut x = initial_state(network, projection, s, options.initial)?;
    let scale = fast.iter().map(|&j| network.coefficient(j)).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Ok(FastAverages::frozen(network, s, &x, 0, 0));
    }
    let slow = network.slow_set();
    let n = x.len();

    let mut props = vec![0.0; fast.len()];
    let burn = (options.burn_in_fraction * n_fast as f64).ceil() as u64;
    let mut cost = 0u64;

    let kernel = Kernel::new(network, &fast, scale);
    let fire = |x: &mut StateVector, props: &mut [f64], rng: &mut RandomStream| -> Option<f64> {
        let total = kernel.propensities_into(x, props);
        if !(total > 0.0) {
            return None;
        }
        let w = waiting_time(total, rng.uniform_open());
        let k = select_from_uniform(props, total, rng.uniform());
        kernel.apply(k, x);
        Some(w)
    };

    for _ in 0..burn {
        // The state held before this event is the one the weight belongs to.
        if fire(&mut x, &mut props, rng).is_none() {
            return Ok(FastAverages::frozen(network, s, &x, 0, cost));
        }
        cost += 1;
    }

    let mut weight = 0.0;
    let mut sum = vec![0.0; n];
    let mut sum2 = vec![0.0; n * n];
    let mut slow_sum = vec![0.0; slow.len()];
    let mut held = x.clone();
    for event in 0..n_fast {
        held.copy_from_slice(&x);
        let Some(w) = fire(&mut x, &mut props, rng) else {
            return Ok(FastAverages::frozen(network, s, &x, event, cost));
        };
        cost += 1;
        weight += w;
        for i in 0..n {
            let xi = held[i] as f64;
            sum[i] += w * xi;
            for k in 0..n {
                sum2[i * n + k] += w * xi * held[k] as f64;
            }
        }
        for (acc, &j) in slow_sum.iter_mut().zip(&slow) {
            *acc += w * network.propensity(j, &held);
        }
    }
    debug_assert_eq!(projection.slow_value(&x), s);
    Ok(FastAverages {
        s,
        means: sum.iter().map(|v| v / weight).collect(),
        second_moments: sum2.iter().map(|v| v / weight).collect(),
        slow_propensities: slow.iter().zip(&slow_sum).map(|(&j, v)| (j, v / weight)).collect(),
        events: n_fast,
        cost,
        absorbed: false,
    })
}
