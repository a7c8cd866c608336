//! The two reference systems: a linear fast/slow exchange and a bistable
//! network with fast reversible dimerisation.

use serde::{Deserialize, Serialize};

use crate::network::{RateConvention, Reaction, ReactionNetwork, SlowProjection};

/// Slow grid used for every linear-system experiment.
pub const LINEAR_GRID: (i64, i64) = (101, 300);

/// Linear system
///
/// ```text
/// R1: ∅ → X1 (k1)    R2: X2 → ∅ (k2)    R3: X1 → X2 (K)    R4: X2 → X1 (K)
/// ```
///
/// with R3/R4 fast and slow variable `S = X1 + X2`.
pub fn linear(k1: f64, k2: f64, volume: f64, k_fast: f64) -> (ReactionNetwork, SlowProjection) {
    let ma = RateConvention::MassAction;
    let reactions = vec![
        Reaction::new("R1", vec![0, 0], vec![1, 0], k1, ma),
        Reaction::new("R2", vec![0, 1], vec![0, 0], k2, ma),
        Reaction::new("R3", vec![1, 0], vec![0, 1], k_fast, ma),
        Reaction::new("R4", vec![0, 1], vec![1, 0], k_fast, ma),
    ];
    let net = ReactionNetwork::new(vec!["X1".into(), "X2".into()], reactions, volume, &[2, 3])
        .expect("linear system is well formed");
    (net, SlowProjection::new(vec![1, 1], LINEAR_GRID.0, LINEAR_GRID.1, 0))
}

/// Rate parameters of the bistable system, in the volume-combined form in
/// which they are usually quoted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BistableParams {
    pub k1: f64,
    pub k2_over_v: f64,
    pub k3_v: f64,
    pub k4: f64,
    pub k5_over_v: f64,
    pub k6: f64,
}

impl Default for BistableParams {
    fn default() -> Self {
        Self {
            k1: 32.0,
            k2_over_v: 0.04,
            k3_v: 1475.0,
            k4: 19.75,
            k5_over_v: 10.0,
            k6: 4000.0,
        }
    }
}

impl BistableParams {
    /// Parameters of the same system in a volume scaled by `factor`: every
    /// volume-combined constant is rescaled so that copy numbers scale by
    /// `factor` while first-order rates stay put.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k2_over_v: self.k2_over_v / factor,
            k3_v: self.k3_v * factor,
            k5_over_v: self.k5_over_v / factor,
            ..*self
        }
    }
}

/// Bistable system
///
/// ```text
/// X2 ⇌ X1 + X2 (k1, k2)    ∅ ⇌ X1 (k3, k4)    2 X1 ⇌ X2 (k5, k6)
/// ```
///
/// with the dimerisation pair fast and slow variable `S = X1 + 2 X2`.
pub fn bistable(p: &BistableParams) -> (ReactionNetwork, SlowProjection) {
    let ma = RateConvention::MassAction;
    let co = RateConvention::Combined;
    let reactions = vec![
        Reaction::new("R1", vec![0, 1], vec![1, 1], p.k1, ma),
        Reaction::new("R2", vec![1, 1], vec![0, 1], p.k2_over_v, co),
        Reaction::new("R3", vec![0, 0], vec![1, 0], p.k3_v, co),
        Reaction::new("R4", vec![1, 0], vec![0, 0], p.k4, ma),
        Reaction::new("R5", vec![2, 0], vec![0, 1], p.k5_over_v, co),
        Reaction::new("R6", vec![0, 1], vec![2, 0], p.k6, ma),
    ];
    let net = ReactionNetwork::new(vec!["X1".into(), "X2".into()], reactions, 1.0, &[4, 5])
        .expect("bistable system is well formed");
    (net, SlowProjection::new(vec![1, 2], 0, 2500, 0))
}
