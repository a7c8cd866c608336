use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice box `[0, b_1] × … × [0, b_N]`, enumerated row-major in species
/// order (the last species varies fastest).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncatedDomain {
    bounds: Vec<i64>,
    strides: Vec<usize>,
    len: usize,
}

impl TruncatedDomain {
    pub fn new(bounds: Vec<i64>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::DomainTooSmall("no species".into()));
        }
        if let Some(b) = bounds.iter().find(|&&b| b <= 0) {
            return Err(Error::DomainTooSmall(format!("upper bound {b} is not positive")));
        }
        let mut strides = vec![1usize; bounds.len()];
        for k in (0..bounds.len() - 1).rev() {
            strides[k] = strides[k + 1] * (bounds[k + 1] as usize + 1);
        }
        let len = strides[0] * (bounds[0] as usize + 1);
        Ok(Self { bounds, strides, len })
    }

    pub fn bounds(&self) -> &[i64] {
        &self.bounds
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn species_count(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.bounds.len() && x.iter().zip(&self.bounds).all(|(&v, &b)| (0..=b).contains(&v))
    }

    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(x.iter().zip(&self.strides).map(|(&v, &s)| v as usize * s).sum())
    }

    /// Writes the lattice point with linear index `idx` into `out`.
    pub fn state_into(&self, mut idx: usize, out: &mut [i64]) {
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = (idx / s) as i64;
            idx %= s;
        }
    }

    pub fn state(&self, idx: usize) -> Vec<i64> {
        let mut x = vec![0; self.bounds.len()];
        self.state_into(idx, &mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn row_major_layout() {
        let d = TruncatedDomain::new(vec![2, 3]).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(d.index(&[0, 0]), Some(0));
        assert_eq!(d.index(&[0, 3]), Some(3));
        assert_eq!(d.index(&[1, 0]), Some(4));
        assert_eq!(d.index(&[2, 4]), None);
        assert_eq!(d.state(7), vec![1, 3]);
    }

    #[test]
    fn rejects_empty_bounds() {
        assert!(TruncatedDomain::new(vec![0, 4]).is_err());
        assert!(TruncatedDomain::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn enumeration_is_bijective(b1 in 1i64..30, b2 in 1i64..30, idx in 0usize..10_000) {
            let d = TruncatedDomain::new(vec![b1, b2]).unwrap();
            let idx = idx % d.len();
            let x = d.state(idx);
            prop_assert!(d.contains(&x));
            prop_assert_eq!(d.index(&x), Some(idx));
        }
    }
}
