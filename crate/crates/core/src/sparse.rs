//! Minimal sparse feature vectors used inside the linear-model oracles.

use nalgebra::{DMatrix, DVector};

/// Sparse vector with 0-based, strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    /// Builds from parallel index/value arrays. Indices must be strictly increasing.
    pub fn new(idx: Vec<usize>, val: Vec<f64>) -> Option<Self> {
        if idx.len() != val.len() || idx.windows(2).any(|w| w[0] >= w[1]) {
            return None;
        }
        Some(SparseVec { idx, val })
    }

    /// Keeps every nonzero entry of a dense vector.
    pub fn from_dense(x: &DVector<f64>) -> Self {
        let (idx, val) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseVec { idx, val }
    }

    pub fn indices(&self) -> &[usize] {
        &self.idx
    }

    pub fn values(&self) -> &[f64] {
        &self.val
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }

    /// One past the largest index, or 0 when empty.
    pub fn min_dim(&self) -> usize {
        self.idx.last().map_or(0, |i| i + 1)
    }

    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.iter().map(|(i, v)| v * x[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum()
    }

    /// `out += scale * self`
    pub fn axpy_into(&self, scale: f64, out: &mut DVector<f64>) {
        for (i, v) in self.iter() {
            out[i] += scale * v;
        }
    }

    /// `out += scale * self * selfᵀ`, writing bit-identical values to (i,j) and (j,i).
    pub fn rank_one_into(&self, scale: f64, out: &mut DMatrix<f64>) {
        if scale == 0.0 {
            return;
        }
        for p in 0..self.idx.len() {
            let (ip, xp) = (self.idx[p], self.val[p]);
            let sp = scale * xp;
            out[(ip, ip)] += sp * xp;
            for q in (p + 1)..self.idx.len() {
                let (iq, xq) = (self.idx[q], self.val[q]);
                let v = sp * xq;
                out[(ip, iq)] += v;
                out[(iq, ip)] += v;
            }
        }
    }

    pub fn to_dense(&self, dim: usize) -> DVector<f64> {
        let mut x = DVector::zeros(dim);
        for (i, v) in self.iter() {
            x[i] = v;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_indices() {
        assert!(SparseVec::new(vec![2, 1], vec![1.0, 1.0]).is_none());
        assert!(SparseVec::new(vec![1, 1], vec![1.0, 1.0]).is_none());
        assert!(SparseVec::new(vec![0], vec![]).is_none());
    }

    #[test]
    fn rank_one_is_exactly_symmetric() {
        let x = SparseVec::new(vec![0, 2, 3], vec![0.3, -1.7, 2.9]).unwrap();
        let mut h = DMatrix::zeros(4, 4);
        x.rank_one_into(0.123456789, &mut h);
        x.rank_one_into(-0.0987654321, &mut h);
        assert_eq!(h, h.transpose());
        let xd = x.to_dense(4);
        let want = (0.123456789 - 0.0987654321) * &xd * xd.transpose();
        assert!((h - want).norm() < 1e-14);
    }
}
