//! Small dense complex matrices with weighted kernel-operator semantics.
//!
//! Operators on a discretized representation space are stored as integral
//! kernels: `(T phi)(s_i) = sum_j T[i,j] phi(s_j) w_j` where `w` are the
//! quadrature weights of the sample points.  With that convention the adjoint
//! with respect to the weighted inner product is the plain conjugate
//! transpose, composition inserts one weight factor, and the Hilbert-Schmidt
//! inner product is the weighted double sum
//! `<S,T> = sum_{ij} w_i w_j S[i,j] conj(T[i,j])`.

use num_complex::Complex64 as C64;

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![C64::new(0.0, 0.0); nrows * ncols] }
    }

    /// Kernel of the identity operator over sample weights `w`: `I[i,i] = 1/w_i`.
    pub fn identity_kernel(w: &[f64]) -> Self {
        let n = w.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0 / w[i], 0.0);
        }
        m
    }

    /// Kernel of the multiplication operator by `diag`: `M[i,i] = diag[i]/w_i`.
    pub fn diag_kernel(diag: &[C64], w: &[f64]) -> Self {
        let n = w.len();
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i] / w[i];
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    /// `(T phi)(s_i) = sum_j T[i,j] phi_j w_j`.
    pub fn apply_weighted(&self, phi: &[C64], w: &[f64]) -> Vec<C64> {
        assert_eq!(phi.len(), self.ncols);
        let mut out = vec![C64::new(0.0, 0.0); self.nrows];
        for i in 0..self.nrows {
            let row = self.row(i);
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..self.ncols {
                acc += row[j] * phi[j] * w[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Kernel composition `(S o T)[i,j] = sum_k S[i,k] w_k T[k,j]`.
    pub fn compose_weighted(&self, rhs: &Self, w: &[f64]) -> Self {
        assert_eq!(self.ncols, rhs.nrows);
        assert_eq!(w.len(), self.ncols);
        let mut out = Self::zeros(self.nrows, rhs.ncols);
        for i in 0..self.nrows {
            for k in 0..self.ncols {
                let f = self[(i, k)] * w[k];
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.ncols..(i + 1) * rhs.ncols];
                for j in 0..rhs.ncols {
                    orow[j] += f * rrow[j];
                }
            }
        }
        out
    }

    /// Adjoint with respect to the weighted inner product: conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// Operator trace `sum_i T[i,i] w_i`.
    pub fn trace_weighted(&self, w: &[f64]) -> C64 {
        assert_eq!(self.nrows, self.ncols);
        (0..self.nrows).map(|i| self[(i, i)] * w[i]).sum()
    }

    /// Hilbert-Schmidt inner product `sum_{ij} w_i w_j S[i,j] conj(T[i,j])`.
    pub fn hs_inner_weighted(&self, rhs: &Self, w: &[f64]) -> C64 {
        assert_eq!(self.nrows, rhs.nrows);
        assert_eq!(self.ncols, rhs.ncols);
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.nrows {
            let a = self.row(i);
            let b = rhs.row(i);
            let wi = w[i];
            for j in 0..self.ncols {
                acc += a[j] * b[j].conj() * (wi * w[j]);
            }
        }
        acc
    }

    pub fn hs_norm_weighted(&self, w: &[f64]) -> f64 {
        self.hs_inner_weighted(self, w).re.max(0.0).sqrt()
    }

    /// Scale every row `i` by `f(i)` (left multiplication by a diagonal operator).
    pub fn scale_rows(&mut self, f: impl Fn(usize) -> C64) {
        for i in 0..self.nrows {
            let row = &mut self.data[i * self.ncols..(i + 1) * self.ncols];
            let s = f(i);
            for v in row {
                *v *= s;
            }
        }
    }

    /// Scale every column `j` by `f(j)` (right multiplication by a diagonal operator).
    pub fn scale_cols(&mut self, f: impl Fn(usize) -> C64) {
        for i in 0..self.nrows {
            let row = &mut self.data[i * self.ncols..(i + 1) * self.ncols];
            for (j, v) in row.iter_mut().enumerate() {
                *v *= f(j);
            }
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    pub fn add_scaled(&mut self, rhs: &Self, s: C64) {
        assert_eq!(self.data.len(), rhs.data.len());
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
        out
    }

    /// Kronecker product; row/column indexing is `i = i1 * n2 + i2`.
    pub fn kron(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.nrows * rhs.nrows, self.ncols * rhs.ncols);
        for i1 in 0..self.nrows {
            for j1 in 0..self.ncols {
                let a = self[(i1, j1)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for i2 in 0..rhs.nrows {
                    for j2 in 0..rhs.ncols {
                        out[(i1 * rhs.nrows + i2, j1 * rhs.ncols + j2)] = a * rhs[(i2, j2)];
                    }
                }
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.ncols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.ncols + j]
    }
}
