//! Truncated bosonic Fock spaces and the sparse complex matrices that act on
//! them.
//!
//! Composite basis states are ordered row-major over the per-mode occupations,
//! i.e. the last mode varies fastest. For the two-cavity problem the mode
//! order is always `(a1, a2, b1, b2)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Entries with magnitude below this are dropped after every construction.
pub const DROP_TOLERANCE: f64 = 1e-15;

/// A composite truncated Fock space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockSpace {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total_dim: usize,
}

impl FockSpace {
    /// Build a space from per-mode truncation dimensions (number of Fock
    /// levels kept per mode).
    pub fn new(mode_dims: &[usize]) -> Result<Self> {
        if mode_dims.is_empty() {
            return Err(Error::InvalidSpace("no modes given".into()));
        }
        if let Some((i, &d)) = mode_dims.iter().enumerate().find(|(_, &d)| d < 2) {
            return Err(Error::InvalidSpace(format!(
                "mode {i} has dimension {d}; every mode needs at least 2 levels"
            )));
        }
        let total_dim = mode_dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidSpace("total dimension overflows usize".into()))?;
        let mut strides = vec![1; mode_dims.len()];
        for m in (0..mode_dims.len() - 1).rev() {
            strides[m] = strides[m + 1] * mode_dims[m + 1];
        }
        Ok(Self {
            dims: mode_dims.to_vec(),
            strides,
            total_dim,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.strides[mode]
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.dims.len() {
            Ok(())
        } else {
            Err(Error::InvalidMode {
                mode,
                modes: self.dims.len(),
            })
        }
    }

    /// Basis index of an occupation multi-index.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "multi-index has {} entries, space has {} modes",
                occupations.len(),
                self.dims.len()
            )));
        }
        let mut idx = 0;
        for (m, (&n, &d)) in occupations.iter().zip(&self.dims).enumerate() {
            if n >= d {
                return Err(Error::InvalidSpace(format!(
                    "occupation {n} of mode {m} exceeds truncation {d}"
                )));
            }
            idx += n * self.strides[m];
        }
        Ok(idx)
    }

    /// Occupation multi-index of a basis index.
    pub fn multi_index(&self, index: usize) -> Vec<usize> {
        assert!(index < self.total_dim, "basis index out of range");
        self.dims
            .iter()
            .zip(&self.strides)
            .map(|(&d, &s)| (index / s) % d)
            .collect()
    }

    #[inline]
    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.strides[mode]) % self.dims[mode]
    }

    pub fn identity(&self) -> SparseComplexMatrix {
        SparseComplexMatrix::identity(self.total_dim)
    }

    /// Lowering operator of `mode`, embedded as identity on all other modes.
    pub fn annihilation(&self, mode: usize) -> Result<SparseComplexMatrix> {
        self.check_mode(mode)?;
        let stride = self.strides[mode];
        let triplets = (0..self.total_dim).filter_map(|col| {
            let n = self.occupation(col, mode);
            (n > 0).then(|| (col - stride, col, Complex64::new((n as f64).sqrt(), 0.0)))
        });
        SparseComplexMatrix::from_triplets(self.total_dim, self.total_dim, triplets)
    }

    pub fn creation(&self, mode: usize) -> Result<SparseComplexMatrix> {
        Ok(self.annihilation(mode)?.adjoint())
    }

    /// Diagonal number operator `a†a` of `mode`.
    pub fn number(&self, mode: usize) -> Result<SparseComplexMatrix> {
        self.check_mode(mode)?;
        let diag: Vec<Complex64> = (0..self.total_dim)
            .map(|i| Complex64::new(self.occupation(i, mode) as f64, 0.0))
            .collect();
        Ok(SparseComplexMatrix::from_diagonal(&diag))
    }
}

/// Sparse complex matrix in compressed-row form.
///
/// Rows are sorted by column index, duplicates are summed at construction and
/// entries below [`DROP_TOLERANCE`] are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseComplexMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseComplexMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            if v.norm() >= DROP_TOLERANCE {
                m.col_idx.push(i);
                m.values.push(v);
            }
            m.row_ptr[i + 1] = m.col_idx.len();
        }
        m
    }

    /// Build from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, Complex64)>,
    {
        let mut entries: Vec<(usize, usize, Complex64)> = triplets.into_iter().collect();
        if let Some(&(r, c, _)) = entries.iter().find(|&&(r, c, _)| r >= nrows || c >= ncols) {
            return Err(Error::DimensionMismatch(format!(
                "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
            )));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut iter = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v.norm() >= DROP_TOLERANCE {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.iter().map(|(r, c, v)| (c, r, v)),
        )
        .expect("transpose stays in bounds")
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.iter().map(|(r, c, v)| (c, r, v.conj())),
        )
        .expect("adjoint stays in bounds")
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().map(|(r, c, v)| (r, c, v * factor)),
        )
        .expect("scaling stays in bounds")
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch(format!(
                "{op}: {}x{} vs {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Self::from_triplets(self.nrows, self.ncols, self.iter().chain(other.iter()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().chain(other.iter().map(|(r, c, v)| (r, c, -v))),
        )
    }

    /// Sparse matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} times {}x{}",
                self.nrows, self.ncols, other.nrows, other.ncols
            )));
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut out = Self::zeros(self.nrows, other.ncols);
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                let v = acc[c];
                if v.norm() >= DROP_TOLERANCE {
                    out.col_idx.push(c);
                    out.values.push(v);
                }
                acc[c] = Complex64::new(0.0, 0.0);
                touched[c] = false;
            }
            cols.clear();
            out.row_ptr[r + 1] = out.col_idx.len();
        }
        Ok(out)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let nrows = self.nrows * other.nrows;
        let ncols = self.ncols * other.ncols;
        let mut out = Self::zeros(nrows, ncols);
        out.col_idx.reserve(self.nnz() * other.nnz());
        out.values.reserve(self.nnz() * other.nnz());
        for r1 in 0..self.nrows {
            for r2 in 0..other.nrows {
                for (c1, v1) in self.row(r1) {
                    for (c2, v2) in other.row(r2) {
                        let v = v1 * v2;
                        if v.norm() >= DROP_TOLERANCE {
                            out.col_idx.push(c1 * other.ncols + c2);
                            out.values.push(v);
                        }
                    }
                }
                out.row_ptr[r1 * other.nrows + r2 + 1] = out.col_idx.len();
            }
        }
        out
    }

    /// `y = self * x`.
    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "matvec: {} columns vs vector of length {}",
                self.ncols,
                x.len()
            )));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.nrows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// `⟨x| self |x⟩` without normalization.
    pub fn quadratic_form(&self, x: &[Complex64]) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (r, xr) in x.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.values[k] * x[self.col_idx[k]];
            }
            s += xr.conj() * row;
        }
        s
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation `|self - other|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .sub(other)?
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && self
                .max_abs_diff(&self.adjoint())
                .map(|d| d <= tol)
                .unwrap_or(false)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let triplets = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, m[(r, c)]));
        Self::from_triplets(m.nrows(), m.ncols(), triplets).expect("dense shape is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn build_space_dims() {
        assert_eq!(FockSpace::new(&[3]).unwrap().total_dim(), 3);
        assert_eq!(FockSpace::new(&[3, 2]).unwrap().total_dim(), 6);
        assert_eq!(FockSpace::new(&[8, 4, 8, 4]).unwrap().total_dim(), 1024);
    }

    #[test]
    fn build_space_rejects_bad_dims() {
        assert!(matches!(FockSpace::new(&[]), Err(Error::InvalidSpace(_))));
        assert!(matches!(
            FockSpace::new(&[3, 1]),
            Err(Error::InvalidSpace(_))
        ));
        assert!(matches!(FockSpace::new(&[0]), Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn multi_index_round_trip() {
        let s = FockSpace::new(&[3, 2, 4, 2]).unwrap();
        for i in 0..s.total_dim() {
            assert_eq!(s.index_of(&s.multi_index(i)).unwrap(), i);
        }
        assert_eq!(s.index_of(&[1, 0, 0, 0]).unwrap(), 16);
        assert!(s.index_of(&[3, 0, 0, 0]).is_err());
    }

    #[test]
    fn annihilation_single_mode() {
        let s = FockSpace::new(&[3]).unwrap();
        let a = s.annihilation(0).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), c(1.0));
        assert_eq!(a.get(1, 2), c(2f64.sqrt()));
    }

    #[test]
    fn annihilation_second_mode_of_two() {
        let s = FockSpace::new(&[2, 2]).unwrap();
        let a = s.annihilation(1).unwrap();
        let entries: Vec<_> = a.iter().collect();
        assert_eq!(entries, vec![(0, 1, c(1.0)), (2, 3, c(1.0))]);
    }

    #[test]
    fn invalid_mode_rejected() {
        let s = FockSpace::new(&[2, 2]).unwrap();
        assert!(matches!(
            s.annihilation(2),
            Err(Error::InvalidMode { mode: 2, modes: 2 })
        ));
        assert!(s.number(5).is_err());
    }

    #[test]
    fn adjoint_of_lowering() {
        let a = FockSpace::new(&[3]).unwrap().annihilation(0).unwrap();
        let ad = a.adjoint();
        let entries: Vec<_> = ad.iter().collect();
        assert_eq!(entries, vec![(1, 0, c(1.0)), (2, 1, c(2f64.sqrt()))]);
    }

    #[test]
    fn number_operator_diagonals() {
        let n = FockSpace::new(&[3]).unwrap().number(0).unwrap();
        assert_eq!(
            n.to_dense().diagonal().map(|z| z.re).as_slice(),
            &[0.0, 1.0, 2.0]
        );
        let n = FockSpace::new(&[2, 3]).unwrap().number(1).unwrap();
        assert_eq!(
            n.to_dense().diagonal().map(|z| z.re).as_slice(),
            &[0.0, 1.0, 2.0, 0.0, 1.0, 2.0]
        );
    }

    #[test]
    fn number_equals_adag_a() {
        let s = FockSpace::new(&[3, 4, 2]).unwrap();
        for m in 0..3 {
            let a = s.annihilation(m).unwrap();
            let n = a.adjoint().matmul(&a).unwrap();
            assert!(n.max_abs_diff(&s.number(m).unwrap()).unwrap() < 1e-14);
        }
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let s = FockSpace::new(&[4, 3]).unwrap();
        for m in 0..2 {
            let a = s.annihilation(m).unwrap();
            let ad = a.adjoint();
            let comm = a.matmul(&ad).unwrap().sub(&ad.matmul(&a).unwrap()).unwrap();
            let dense = comm.to_dense();
            let top = s.dims()[m] - 1;
            for i in 0..s.total_dim() {
                for j in 0..s.total_dim() {
                    let expect = if i == j {
                        if s.occupation(i, m) == top {
                            -(top as f64)
                        } else {
                            1.0
                        }
                    } else {
                        0.0
                    };
                    assert!((dense[(i, j)] - c(expect)).norm() < 1e-12, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn distinct_modes_commute() {
        let s = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let ai = s.annihilation(i).unwrap();
                let aj = s.annihilation(j).unwrap();
                let adj = aj.adjoint();
                assert_eq!(ai.matmul(&aj).unwrap(), aj.matmul(&ai).unwrap());
                assert_eq!(ai.matmul(&adj).unwrap(), adj.matmul(&ai).unwrap());
            }
        }
    }

    #[test]
    fn kron_identities() {
        let k = SparseComplexMatrix::identity(2).kron(&SparseComplexMatrix::identity(3));
        assert_eq!(k, SparseComplexMatrix::identity(6));
    }

    #[test]
    fn kron_matches_embedding() {
        // a ⊗ I equals the embedded lowering operator of mode 0.
        let single = FockSpace::new(&[3]).unwrap().annihilation(0).unwrap();
        let k = single.kron(&SparseComplexMatrix::identity(2));
        let embedded = FockSpace::new(&[3, 2]).unwrap().annihilation(0).unwrap();
        assert_eq!(k, embedded);
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m = SparseComplexMatrix::from_triplets(
            2,
            2,
            vec![
                (0, 0, c(1.0)),
                (0, 0, c(-1.0)),
                (1, 0, c(2.0)),
                (1, 0, c(0.5)),
            ],
        )
        .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 0), c(2.5));
        assert!(SparseComplexMatrix::from_triplets(2, 2, vec![(2, 0, c(1.0))]).is_err());
    }

    #[test]
    fn shape_mismatch_errors() {
        let a = SparseComplexMatrix::identity(2);
        let b = SparseComplexMatrix::identity(3);
        assert!(matches!(a.add(&b), Err(Error::DimensionMismatch(_))));
        assert!(matches!(a.matmul(&b), Err(Error::DimensionMismatch(_))));
        assert!(a.mul_vec(&[c(1.0)]).is_err());
    }

    #[test]
    fn construction_is_deterministic() {
        let s = FockSpace::new(&[3, 2, 3, 2]).unwrap();
        assert_eq!(s.annihilation(2).unwrap(), s.annihilation(2).unwrap());
    }
}
