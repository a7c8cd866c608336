use crate::error::{Error, Result};
use crate::network::ReactionNetwork;

use super::domain::TruncatedDomain;

/// CME generator `Q` on a truncated lattice, stored by rows of incoming
/// transitions: row `i` lists `(j, rate)` for every jump `j → i` with `j ≠ i`,
/// and `diagonal[i]` is minus the total retained outflow of state `i`.
///
/// Jumps that would leave the domain are dropped together with their outflow,
/// so every column sums to zero.
#[derive(Clone, Debug)]
pub struct SparseGenerator {
    pub(crate) dim: usize,
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) cols: Vec<u32>,
    pub(crate) rates: Vec<f64>,
    pub(crate) diagonal: Vec<f64>,
}

impl SparseGenerator {
    /// Builds a generator from `(to, from, rate)` triples; duplicates add up.
    pub fn from_transitions(dim: usize, transitions: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; dim + 1];
        let mut diagonal = vec![0.0; dim];
        for &(i, j, a) in transitions {
            if i >= dim || j >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: i.max(j) + 1 });
            }
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("transition rate {a} is not a non-negative number")));
            }
            if i != j && a > 0.0 {
                counts[i + 1] += 1;
                diagonal[j] -= a;
            }
        }
        for i in 0..dim {
            counts[i + 1] += counts[i];
        }
        let nnz = counts[dim];
        let mut cols = vec![0u32; nnz];
        let mut rates = vec![0.0; nnz];
        let mut next = counts.clone();
        for &(i, j, a) in transitions {
            if i != j && a > 0.0 {
                cols[next[i]] = j as u32;
                rates[next[i]] = a;
                next[i] += 1;
            }
        }
        Ok(Self {
            dim,
            row_ptr: counts,
            cols,
            rates,
            diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored off-diagonal entries.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Incoming transitions `(from, rate)` of state `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().zip(&self.rates[r]).map(|(&j, &a)| (j as usize, a))
    }

    /// `Q p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.diagonal[i] * p[i] + self.row(i).map(|(j, a)| a * p[j]).sum::<f64>();
        }
    }

    /// Largest `|Σ_i Q_ij|` relative to `|Q_jj|`.
    pub fn max_column_sum_error(&self) -> f64 {
        let mut sums = self.diagonal.clone();
        for i in 0..self.dim {
            for (j, a) in self.row(i) {
                sums[j] += a;
            }
        }
        sums.iter()
            .zip(&self.diagonal)
            .map(|(s, d)| if *d == 0.0 { s.abs() } else { (s / d).abs() })
            .fold(0.0, f64::max)
    }

    /// Largest outflow rate `max |Q_jj|`.
    pub fn max_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Number of entries per column, including the diagonal.
    pub fn max_column_nnz(&self) -> usize {
        let mut per = vec![1usize; self.dim];
        for &j in &self.cols {
            per[j as usize] += 1;
        }
        per.into_iter().max().unwrap_or(0)
    }

    /// Restriction to the states in `keep` (in that order). Jumps out of the
    /// kept set must not exist; their outflow is left on the diagonal otherwise.
    pub(crate) fn restrict(&self, keep: &[usize]) -> Self {
        let mut local = vec![u32::MAX; self.dim];
        for (k, &i) in keep.iter().enumerate() {
            local[i] = k as u32;
        }
        let mut row_ptr = vec![0usize; keep.len() + 1];
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            for (j, a) in self.row(i) {
                if local[j] != u32::MAX {
                    cols.push(local[j]);
                    rates.push(a);
                }
            }
            row_ptr[k + 1] = cols.len();
        }
        Self {
            dim: keep.len(),
            row_ptr,
            cols,
            rates,
            diagonal: keep.iter().map(|&i| self.diagonal[i]).collect(),
        }
    }
}

/// Generator of `network` on `domain`.
pub fn build_generator(network: &ReactionNetwork, domain: &TruncatedDomain) -> Result<SparseGenerator> {
    let n = network.species_count();
    if domain.species_count() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: domain.species_count(),
        });
    }
    let dim = domain.len();
    if dim > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("domain of {dim} states is too large")));
    }
    let m = network.reaction_count();
    let strides = domain.strides();
    let bounds = domain.bounds();
    // Signed index shift of every reaction.
    let shift: Vec<isize> = (0..m)
        .map(|j| network.net(j).iter().zip(strides).map(|(&d, &s)| d as isize * s as isize).sum())
        .collect();

    let target = |x: &[i64], j: usize| -> bool {
        network.net(j).iter().zip(x).zip(bounds).all(|((&d, &v), &b)| (0..=b).contains(&(v + d)))
    };

    let mut x = vec![0i64; n];
    let mut counts = vec![0usize; dim + 1];
    let mut diagonal = vec![0.0; dim];
    for idx in 0..dim {
        domain.state_into(idx, &mut x);
        for j in 0..m {
            let a = network.propensity(j, &x);
            if a > 0.0 && shift[j] != 0 && target(&x, j) {
                let to = (idx as isize + shift[j]) as usize;
                counts[to + 1] += 1;
                diagonal[idx] -= a;
            }
        }
    }
    for i in 0..dim {
        counts[i + 1] += counts[i];
    }
    let nnz = counts[dim];
    if nnz == 0 {
        return Err(Error::DomainTooSmall("no reaction connects two states of the domain".into()));
    }
    let mut cols = vec![0u32; nnz];
    let mut rates = vec![0.0; nnz];
    let mut next = counts.clone();
    for idx in 0..dim {
        domain.state_into(idx, &mut x);
        for j in 0..m {
            let a = network.propensity(j, &x);
            if a > 0.0 && shift[j] != 0 && target(&x, j) {
                let to = (idx as isize + shift[j]) as usize;
                cols[next[to]] = idx as u32;
                rates[next[to]] = a;
                next[to] += 1;
            }
        }
    }
    let gen = SparseGenerator {
        dim,
        row_ptr: counts,
        cols,
        rates,
        diagonal,
    };
    debug_assert!(gen.max_column_sum_error() < 1e-12);
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{RateConvention, Reaction};
    use crate::systems::{bistable, linear, BistableParams};

    pub(crate) fn birth_death(beta: f64, delta: f64) -> ReactionNetwork {
        let ma = RateConvention::MassAction;
        let r = vec![
            Reaction::new("b", vec![0], vec![1], beta, ma),
            Reaction::new("d", vec![1], vec![0], delta, ma),
        ];
        ReactionNetwork::new(vec!["X".into()], r, 1.0, &[]).unwrap()
    }

    #[test]
    fn three_state_birth_death() {
        let net = birth_death(2.0, 3.0);
        let gen = build_generator(&net, &TruncatedDomain::new(vec![2]).unwrap()).unwrap();
        assert_eq!(gen.dim(), 3);
        assert_eq!(gen.diagonal(), &[-2.0, -5.0, -6.0]);
        let row1: Vec<_> = gen.row(1).collect();
        assert_eq!(row1, vec![(0, 2.0), (2, 6.0)]);
        assert_eq!(gen.max_column_sum_error(), 0.0);
    }

    #[test]
    fn linear_columns_sum_to_zero() {
        let (net, _) = linear(1.0, 1.0, 100.0, 10.0);
        let gen = build_generator(&net, &TruncatedDomain::new(vec![600, 600]).unwrap()).unwrap();
        assert_eq!(gen.dim(), 601 * 601);
        assert!(gen.max_column_sum_error() < 1e-12);
    }

    #[test]
    fn bistable_sparsity() {
        let (net, _) = bistable(&BistableParams::default());
        let gen = build_generator(&net, &TruncatedDomain::new(vec![200, 300]).unwrap()).unwrap();
        assert_eq!(gen.dim(), 201 * 301);
        assert!(gen.max_column_nnz() <= 7);
        assert!(gen.max_column_sum_error() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let net = birth_death(1.0, 1.0);
        assert!(build_generator(&net, &TruncatedDomain::new(vec![3, 3]).unwrap()).is_err());
    }

    #[test]
    fn from_transitions_accumulates_outflow() {
        let g = SparseGenerator::from_transitions(2, &[(1, 0, 2.0), (0, 1, 1.0), (0, 1, 0.5)]).unwrap();
        assert_eq!(g.diagonal(), &[-2.0, -1.5]);
        assert_eq!(g.max_column_sum_error(), 0.0);
    }
}
