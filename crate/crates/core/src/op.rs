//! Sparse complex operators in compressed-sparse-row form.
//!
//! Every Hamiltonian in this crate (bath, Bloch-reduced chain, emitter-coupled
//! system) is at most 5 nonzeros per row, so a minimal CSR with a parallel
//! matrix-vector product covers all needs. Operators are immutable after
//! construction and safe to share across threads.

use crate::C64;
use ndarray::Array2;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
}

impl SparseOp {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>, hermitian: bool) -> Self {
        triplets.retain(|t| t.2 != C64::new(0.0, 0.0) || t.0 == t.1);
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row = 0usize;
        let mut prev: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            while row < r {
                row_ptr.push(col_idx.len());
                row += 1;
            }
            if prev == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                prev = Some((r, c));
            }
        }
        while row < dim {
            row_ptr.push(col_idx.len());
            row += 1;
        }
        SparseOp { dim, row_ptr, col_idx, vals, hermitian }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn set_hermitian(&mut self, h: bool) {
        self.hermitian = h;
    }

    /// Entries of one row as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi].iter().copied().zip(self.vals[lo..hi].iter().copied())
    }

    /// Diagonal entry (zero if not stored).
    pub fn diag(&self, r: usize) -> C64 {
        self.row(r).find(|&(c, _)| c == r).map(|(_, v)| v).unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    /// Add `shift` to every stored diagonal entry, inserting missing ones.
    pub fn shifted_diag(&self, shifts: &[f64]) -> SparseOp {
        assert_eq!(shifts.len(), self.dim);
        let mut triplets: Vec<(usize, usize, C64)> = Vec::with_capacity(self.nnz() + self.dim);
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                triplets.push((r, c, v));
            }
        }
        for (r, &s) in shifts.iter().enumerate() {
            triplets.push((r, r, C64::new(s, 0.0)));
        }
        SparseOp::from_triplets(self.dim, triplets, self.hermitian)
    }

    /// y = H x.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_iter_mut().enumerate().with_min_len(512).for_each(|(r, out)| {
            let lo = self.row_ptr[r];
            let hi = self.row_ptr[r + 1];
            let mut acc = C64::new(0.0, 0.0);
            for k in lo..hi {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            *out = acc;
        });
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// Dense copy, for diagonalization or direct inspection.
    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                m[[r, c]] += v;
            }
        }
        m
    }

    /// Largest deviation |H - H^dagger| over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut defect = 0.0f64;
        for r in 0..self.dim {
            for (c, v) in self.row(r) {
                let vt = self.entry(c, r);
                defect = defect.max((v - vt.conj()).norm());
            }
        }
        defect
    }

    fn entry(&self, r: usize, c: usize) -> C64 {
        self.row(r).find(|&(cc, _)| cc == c).map(|(_, v)| v).unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    /// Gershgorin bounds on the real part of the spectrum: (lower, upper).
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim {
            let mut center = 0.0;
            let mut radius = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    center = v.re;
                    radius += v.im.abs();
                } else {
                    radius += v.norm();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        if self.dim == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn triplets_merge_and_apply() {
        let op = SparseOp::from_triplets(
            3,
            vec![
                (0, 1, c(1.0, 0.0)),
                (0, 1, c(0.5, 0.0)),
                (1, 0, c(1.5, 0.0)),
                (2, 2, c(-1.0, 0.0)),
            ],
            true,
        );
        assert_eq!(op.nnz(), 3);
        let y = op.apply(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(y[0], c(3.0, 0.0));
        assert_eq!(y[1], c(1.5, 0.0));
        assert_eq!(y[2], c(-3.0, 0.0));
    }

    #[test]
    fn hermiticity_defect_detects_asymmetry() {
        let sym = SparseOp::from_triplets(2, vec![(0, 1, c(0.0, 1.0)), (1, 0, c(0.0, -1.0))], true);
        assert_eq!(sym.hermiticity_defect(), 0.0);
        let asym = SparseOp::from_triplets(2, vec![(0, 1, c(0.0, 1.0)), (1, 0, c(0.0, 1.0))], false);
        assert!(asym.hermiticity_defect() > 1.9);
    }

    #[test]
    fn gershgorin_contains_spectrum() {
        let op = SparseOp::from_triplets(
            2,
            vec![(0, 0, c(1.0, 0.0)), (1, 1, c(-1.0, 0.0)), (0, 1, c(2.0, 0.0)), (1, 0, c(2.0, 0.0))],
            true,
        );
        let (lo, hi) = op.gershgorin_bounds();
        // eigenvalues are +-sqrt(5)
        assert!(lo <= -(5.0f64.sqrt()) && hi >= 5.0f64.sqrt());
    }
}
