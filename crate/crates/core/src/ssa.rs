//! Exact stochastic simulation (direct method).

use crate::error::{Error, Result};
use crate::network::{ReactionNetwork, StateVector};
use crate::rng::RandomStream;

/// Waiting time `−ln(u)/α₀` for a given uniform `u ∈ (0, 1)`.
#[inline]
pub fn waiting_time(total_propensity: f64, u: f64) -> f64 {
    -u.ln() / total_propensity
}

/// Draws the exponential waiting time to the next reaction.
pub fn draw_waiting_time(total_propensity: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(total_propensity > 0.0) || !total_propensity.is_finite() {
        return Err(Error::Absorbing {
            context: Some(format!("total propensity {total_propensity}")),
        });
    }
    Ok(waiting_time(total_propensity, rng.uniform_open()))
}

/// Picks the reaction whose cumulative propensity first exceeds `u · α₀`.
///
/// `u` must lie in `[0, 1)`. Rounding can push the target past the last
/// cumulative sum; the last reaction with positive propensity is returned then.
#[inline]
pub fn select_from_uniform(propensities: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    // Count the cumulative sums not exceeding the target; zero propensities
    // repeat the previous sum and are skipped automatically.
    let mut acc = 0.0;
    let mut j = 0;
    for &a in propensities {
        acc += a;
        j += usize::from(acc <= target);
    }
    if j < propensities.len() {
        return j;
    }
    propensities.iter().rposition(|&a| a > 0.0).unwrap_or(0)
}

/// Picks reaction `j` with probability `α_j/α₀`.
pub fn select_reaction(propensities: &[f64], rng: &mut RandomStream) -> Result<usize> {
    let total: f64 = propensities.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Absorbing { context: None });
    }
    Ok(select_from_uniform(propensities, total, rng.uniform()))
}

/// What [`simulate`] keeps along the way.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Recorder {
    /// Every reaction event.
    Events,
    /// Snapshots on the uniform mesh `0, dt, 2 dt, …, ≤ t_end`.
    Mesh(f64),
    /// Only the initial and final states.
    Final,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Cumulative firing count of every reaction at each recorded time.
    pub counts: Vec<Vec<u64>>,
    /// `∫ x_i dt` over the simulated interval, per species.
    pub time_integrals: Vec<f64>,
    pub end_time: f64,
    pub events: u64,
    /// Set when a state with zero total propensity was reached.
    pub absorbed: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one record")
    }

    pub fn final_counts(&self) -> &[u64] {
        self.counts.last().expect("trajectory has at least one record")
    }

    /// Time average of `Σ c_i x_i` over the whole run.
    pub fn time_average(&self, coefficients: &[i64]) -> f64 {
        coefficients
            .iter()
            .zip(&self.time_integrals)
            .map(|(&c, &v)| c as f64 * v)
            .sum::<f64>()
            / self.end_time
    }
}

/// Runs the direct-method SSA on `[0, t_end]`.
pub fn simulate(
    network: &ReactionNetwork,
    state0: &StateVector,
    t_end: f64,
    rng: &mut RandomStream,
    recorder: Recorder,
) -> Result<Trajectory> {
    simulate_limited(network, state0, t_end, u64::MAX, rng, recorder)
}

/// As [`simulate`], additionally stopping after `max_events` reactions.
pub fn simulate_limited(
    network: &ReactionNetwork,
    state0: &StateVector,
    t_end: f64,
    max_events: u64,
    rng: &mut RandomStream,
    recorder: Recorder,
) -> Result<Trajectory> {
    network.check_dims(state0)?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if let Recorder::Mesh(dt) = recorder {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("mesh spacing must be positive, got {dt}")));
        }
    }
    let m = network.reaction_count();
    let mut x = state0.clone();
    let mut counts = vec![0u64; m];
    let mut props = vec![0.0; m];
    let mut integrals = vec![0.0; x.len()];
    let mut t = 0.0;
    let mut events = 0u64;
    let mut absorbed = false;

    let mut out = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        counts: vec![counts.clone()],
        time_integrals: Vec::new(),
        end_time: t_end,
        events: 0,
        absorbed: false,
    };
    let mut next_mesh = 1usize;

    // Records mesh points strictly inside (t, until] with the state held over it.
    let flush_mesh = |out: &mut Trajectory, next_mesh: &mut usize, until: f64, x: &StateVector, c: &[u64]| {
        if let Recorder::Mesh(dt) = recorder {
            loop {
                let tm = *next_mesh as f64 * dt;
                if tm >= until || tm > t_end {
                    break;
                }
                out.times.push(tm);
                out.states.push(x.clone());
                out.counts.push(c.to_vec());
                *next_mesh += 1;
            }
        }
    };

    while events < max_events {
        let total = network.propensities_into(&x, &mut props);
        if !(total > 0.0) {
            absorbed = true;
            break;
        }
        let tau = waiting_time(total, rng.uniform_open());
        if t + tau > t_end {
            break;
        }
        let j = select_from_uniform(&props, total, rng.uniform());
        let t_next = t + tau;
        for (acc, &xi) in integrals.iter_mut().zip(x.iter()) {
            *acc += xi as f64 * tau;
        }
        flush_mesh(&mut out, &mut next_mesh, t_next, &x, &counts);
        for (xi, d) in x.iter_mut().zip(network.net(j)) {
            *xi += d;
        }
        counts[j] += 1;
        events += 1;
        t = t_next;
        if recorder == Recorder::Events {
            out.times.push(t);
            out.states.push(x.clone());
            out.counts.push(counts.clone());
        }
    }

    // Stopped on the event budget: the run ends at the last event.
    let end = if events >= max_events { t } else { t_end };
    for (acc, &xi) in integrals.iter_mut().zip(x.iter()) {
        *acc += xi as f64 * (end - t);
    }
    if let Recorder::Mesh(dt) = recorder {
        loop {
            let tm = next_mesh as f64 * dt;
            if tm > end {
                break;
            }
            out.times.push(tm);
            out.states.push(x.clone());
            out.counts.push(counts.clone());
            next_mesh += 1;
        }
    }
    if *out.times.last().unwrap() < end {
        out.times.push(end);
        out.states.push(x.clone());
        out.counts.push(counts.clone());
    }
    out.time_integrals = integrals;
    out.end_time = end;
    out.events = events;
    out.absorbed = absorbed;
    Ok(out)
}
