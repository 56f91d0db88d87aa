//! Block-partitioned parameter vectors.
//!
//! A [`BlockPartition`] splits the coordinates `0..n` into contiguous,
//! non-overlapping blocks. Every coordinate inside one block shares a single
//! stepsize. The partition is stored once and shared (via [`Arc`]) by every
//! vector and optimizer of a run.

use std::ops::{Deref, Range};
use std::sync::Arc;

use crate::error::{ensure_finite, ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    block_starts: Vec<usize>,
    total_dim: usize,
}

impl BlockPartition {
    /// Builds a partition from block start indices. The first start must be
    /// zero and the starts must be strictly increasing and below `total_dim`.
    pub fn new(block_starts: Vec<usize>, total_dim: usize) -> Result<Self> {
        if total_dim == 0 {
            return Err(Error::InvalidPartition("total_dim must be positive".into()));
        }
        if block_starts.first() != Some(&0) {
            return Err(Error::InvalidPartition(
                "the first block must start at index 0".into(),
            ));
        }
        for w in block_starts.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidPartition(format!(
                    "block starts must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = block_starts.last() {
            if last >= total_dim {
                return Err(Error::InvalidPartition(format!(
                    "block start {last} is outside 0..{total_dim}"
                )));
            }
        }
        Ok(Self {
            block_starts,
            total_dim,
        })
    }

    /// One block per coordinate (`m == n`).
    pub fn singletons(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    /// A single block covering every coordinate (`m == 1`).
    pub fn full(n: usize) -> Result<Self> {
        Self::new(vec![0], n)
    }

    /// Blocks of `size` coordinates; the last block takes the remainder.
    pub fn uniform(n: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidPartition(
                "block size must be positive".into(),
            ));
        }
        Self::new((0..n).step_by(size).collect(), n)
    }

    pub fn dim(&self) -> usize {
        self.total_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.block_starts.len()
    }

    pub fn is_singletons(&self) -> bool {
        self.num_blocks() == self.total_dim
    }

    pub fn block(&self, k: usize) -> Range<usize> {
        let start = self.block_starts[k];
        let end = self
            .block_starts
            .get(k + 1)
            .copied()
            .unwrap_or(self.total_dim);
        start..end
    }

    pub fn blocks(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_blocks()).map(move |k| self.block(k))
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().map(|r| r.len()).collect()
    }

    /// Per-block sum of squares of a flat slice.
    pub fn sq_norms(&self, x: &[f64]) -> Vec<f64> {
        self.blocks()
            .map(|r| x[r].iter().map(|v| v * v).sum())
            .collect()
    }

    /// Per-block sum of a flat slice (used to aggregate coordinate moments).
    pub fn sums(&self, x: &[f64]) -> Vec<f64> {
        self.blocks().map(|r| x[r].iter().sum()).collect()
    }

    /// Per-block inner products of two flat slices.
    pub fn inner_products(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.blocks()
            .map(|r| a[r.clone()].iter().zip(&b[r]).map(|(p, q)| p * q).sum())
            .collect()
    }
}

/// Dense parameter vector tied to a shared block partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    partition: Arc<BlockPartition>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, partition: Arc<BlockPartition>) -> Result<Self> {
        ensure_len(partition.dim(), values.len())?;
        ensure_finite(&values)?;
        Ok(Self { values, partition })
    }

    pub fn zeros(partition: Arc<BlockPartition>) -> Self {
        Self {
            values: vec![0.0; partition.dim()],
            partition,
        }
    }

    /// Vector with singleton blocks.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let partition = Arc::new(BlockPartition::singletons(values.len())?);
        Self::new(values, partition)
    }

    pub fn partition(&self) -> &Arc<BlockPartition> {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mutates the values in place, then re-checks finiteness.
    pub fn update<F: FnOnce(&mut [f64])>(&mut self, f: F) -> Result<()> {
        f(&mut self.values);
        ensure_finite(&self.values)
    }

    pub fn hadamard(&self, other: &ParamVector) -> Result<ParamVector> {
        hadamard(self, other)
    }

    pub fn block_sq_norms(&self) -> Vec<f64> {
        block_sq_norms(self)
    }

    pub fn sign(&self) -> ParamVector {
        sign_vec(self)
    }

    pub fn sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Elementwise product.
pub fn hadamard(a: &ParamVector, b: &ParamVector) -> Result<ParamVector> {
    ensure_len(a.len(), b.len())?;
    let values: Vec<f64> = a.iter().zip(b.iter()).map(|(p, q)| p * q).collect();
    ParamVector::new(values, Arc::clone(&a.partition))
}

pub fn block_sq_norms(x: &ParamVector) -> Vec<f64> {
    x.partition.sq_norms(&x.values)
}

/// `sign(0) == 0`, including for `-0.0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sign_vec(x: &ParamVector) -> ParamVector {
    ParamVector {
        values: x.iter().map(|&v| sign(v)).collect(),
        partition: Arc::clone(&x.partition),
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(
            hadamard(&pv(&[1.0, 2.0]), &pv(&[3.0, 4.0]))
                .unwrap()
                .values(),
            &[3.0, 8.0]
        );
        let x = pv(&[0.3, -7.5, 2e10]);
        assert_eq!(hadamard(&x, &pv(&[1.0, 1.0, 1.0])).unwrap(), x);
        assert_eq!(
            hadamard(&pv(&[-1.0, 0.0]), &pv(&[-1.0, 5.0]))
                .unwrap()
                .values(),
            &[1.0, 0.0]
        );
    }

    #[test]
    fn hadamard_length_mismatch() {
        let err = hadamard(&pv(&[1.0]), &pv(&[1.0, 2.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                expected: 1,
                got: 2
            }
        ));
    }

    #[test]
    fn hadamard_overflow_is_reported() {
        let err = hadamard(&pv(&[1e200]), &pv(&[1e200])).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 0, .. }));
    }

    #[test]
    fn block_sq_norm_examples() {
        let part = Arc::new(BlockPartition::new(vec![0, 2], 3).unwrap());
        let x = ParamVector::new(vec![3.0, 4.0, 5.0], part).unwrap();
        assert_eq!(block_sq_norms(&x), vec![25.0, 25.0]);

        let full = Arc::new(BlockPartition::full(2).unwrap());
        let x = ParamVector::new(vec![1.0, 1.0], full).unwrap();
        assert_eq!(block_sq_norms(&x), vec![2.0]);

        assert_eq!(block_sq_norms(&pv(&[2.0, -3.0])), vec![4.0, 9.0]);
    }

    #[test]
    fn sign_examples() {
        assert_eq!(sign_vec(&pv(&[0.5, -2.0, 0.0])).values(), &[1.0, -1.0, 0.0]);
        assert_eq!(sign_vec(&pv(&[0.0, 0.0])).values(), &[0.0, 0.0]);
        assert_eq!(sign_vec(&pv(&[1e-300])).values(), &[1.0]);
        assert_eq!(sign(-0.0), 0.0);
        assert_eq!(sign(f64::MIN_POSITIVE / 4.0), 1.0);
    }

    #[test]
    fn partition_rejects_bad_input() {
        assert!(BlockPartition::new(vec![], 3).is_err());
        assert!(BlockPartition::new(vec![1], 3).is_err());
        assert!(BlockPartition::new(vec![0, 2, 2], 3).is_err());
        assert!(BlockPartition::new(vec![0, 3], 3).is_err());
        assert!(BlockPartition::new(vec![0], 0).is_err());
        assert!(BlockPartition::uniform(4, 0).is_err());
    }

    #[test]
    fn uniform_partition_covers_everything() {
        let p = BlockPartition::uniform(7, 3).unwrap();
        assert_eq!(p.block_sizes(), vec![3, 3, 1]);
        assert_eq!(p.block(2), 6..7);
    }

    #[test]
    fn nan_input_is_rejected() {
        assert!(matches!(
            ParamVector::from_values(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    fn partition_strategy() -> impl Strategy<Value = (BlockPartition, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::btree_set(1..n.max(2), 0..n),
                proptest::collection::vec(-1e3f64..1e3, n),
            )
                .prop_map(move |(cuts, x)| {
                    let mut starts = vec![0];
                    starts.extend(cuts.into_iter().filter(|&c| c < n));
                    (BlockPartition::new(starts, n).unwrap(), x)
                })
        })
    }

    proptest! {
        #[test]
        fn blocks_cover_exactly((part, _x) in partition_strategy()) {
            let mut seen = vec![0usize; part.dim()];
            for r in part.blocks() {
                prop_assert!(!r.is_empty());
                for i in r { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert_eq!(part.block_sizes().iter().sum::<usize>(), part.dim());
        }

        #[test]
        fn block_norms_sum_to_full_norm((part, x) in partition_strategy()) {
            let x = ParamVector::new(x, Arc::new(part)).unwrap();
            let total: f64 = block_sq_norms(&x).iter().sum();
            let full = x.sq_norm();
            prop_assert!((total - full).abs() <= 1e-12 * full.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn hadamard_commutes_and_associates(
            v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..30)
        ) {
            let a = pv(&v.iter().map(|t| t.0).collect::<Vec<_>>());
            let b = pv(&v.iter().map(|t| t.1).collect::<Vec<_>>());
            let c = pv(&v.iter().map(|t| t.2).collect::<Vec<_>>());
            prop_assert_eq!(hadamard(&a, &b).unwrap(), hadamard(&b, &a).unwrap());
            let left = hadamard(&hadamard(&a, &b).unwrap(), &c).unwrap();
            let right = hadamard(&a, &hadamard(&b, &c).unwrap()).unwrap();
            // associativity holds to rounding; elementwise the error is one ulp-scale.
            for (l, r) in left.iter().zip(right.iter()) {
                prop_assert!((l - r).abs() <= 4.0 * f64::EPSILON * l.abs());
            }
        }
    }
}
