//! Dense Cholesky factorization tolerant of positive semidefinite input.

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry are treated as zero.
const ZERO_PIVOT: f64 = 1e-10;
/// Pivots below minus this fraction fail the factorization.
const NEGATIVE_PIVOT: f64 = 1e-8;

/// Lower factor `L` with `L·Lᵀ = C`, keeping only the nonzero columns.
///
/// Stored row-major as `n × rank`. Columns keep their original order, so row
/// `i` only touches the first `row_len[i]` kept columns.
#[derive(Debug, Clone)]
pub(crate) struct LowRankFactor {
    n: usize,
    rank: usize,
    data: Vec<f64>,
    row_len: Vec<usize>,
}

impl LowRankFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `out = L·z`, with `z.len() == rank`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.rank);
        debug_assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.rank..i * self.rank + self.row_len[i]];
            *o = row.iter().zip(z).map(|(l, z)| l * z).sum();
        }
    }
}

/// Factorizes the symmetric `n × n` row-major matrix `cov`.
///
/// Fails with [`Error::Indefinite`] (carrying the smallest eigenvalue) when a
/// pivot is clearly negative.
pub(crate) fn factorize(cov: &[f64], n: usize) -> Result<LowRankFactor> {
    assert_eq!(cov.len(), n * n);
    let scale = (0..n).map(|i| cov[i * n + i]).fold(0.0f64, f64::max);
    let mut l = vec![0.0; n * n];
    let mut kept = vec![false; n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            let v = cov[i * n + j] - dot;
            if i == j {
                if v > ZERO_PIVOT * scale && v > 0.0 {
                    l[i * n + i] = v.sqrt();
                    kept[i] = true;
                } else if v < -NEGATIVE_PIVOT * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::Indefinite(min_eigenvalue(cov, n)));
                }
            } else if kept[j] {
                l[i * n + j] = v / l[j * n + j];
            }
        }
    }
    let cols: Vec<usize> = (0..n).filter(|&j| kept[j]).collect();
    let rank = cols.len();
    let mut data = vec![0.0; n * rank];
    let mut row_len = vec![0; n];
    for i in 0..n {
        for (c, &j) in cols.iter().enumerate() {
            data[i * rank + c] = l[i * n + j];
        }
        row_len[i] = cols.iter().take_while(|&&j| j <= i).count();
    }
    Ok(LowRankFactor {
        n,
        rank,
        data,
        row_len,
    })
}

/// Smallest eigenvalue of a symmetric row-major matrix.
pub(crate) fn min_eigenvalue(cov: &[f64], n: usize) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(n, n, cov);
    nalgebra::SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(f: &LowRankFactor) -> Vec<f64> {
        let n = f.dim();
        let r = f.rank();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..r).map(|c| f.data[i * r + c] * f.data[j * r + c]).sum();
            }
        }
        out
    }

    #[test]
    fn full_rank_roundtrip() {
        let cov = [4.0, 2.0, 0.6, 2.0, 2.0, 0.5, 0.6, 0.5, 3.0];
        let f = factorize(&cov, 3).unwrap();
        assert_eq!(f.rank(), 3);
        for (a, b) in reconstruct(&f).iter().zip(cov.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_one_matrix_keeps_one_column() {
        let cov = vec![1.0; 16];
        let f = factorize(&cov, 4).unwrap();
        assert_eq!(f.rank(), 1);
        let mut out = vec![0.0; 4];
        f.apply(&[0.7], &mut out);
        assert!(out.iter().all(|&x| (x - 0.7).abs() < 1e-15));
    }

    #[test]
    fn indefinite_reports_negative_eigenvalue() {
        let cov = [1.0, 2.0, 2.0, 1.0];
        match factorize(&cov, 2) {
            Err(Error::Indefinite(l)) => assert!((l + 1.0).abs() < 1e-12),
            other => panic!("expected indefinite, got {other:?}"),
        }
    }
}
