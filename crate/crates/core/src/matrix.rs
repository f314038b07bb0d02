//! Dense complex matrices.
//!
//! Everything in this crate lives in small Hilbert spaces (dimension 64 at
//! most), so matrices are stored as a flat row-major `Vec<Complex64>` and all
//! algorithms are the straightforward dense ones. The Hermitian eigensolver is
//! a cyclic complex Jacobi iteration.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 64;

/// Tolerance used by the Hermiticity check before eigensolves.
pub const HERMITIAN_TOL: f64 = 1e-10;

const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix in row-major order.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MatrixJson", try_from = "MatrixJson")]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// On-disk layout shared by every file format: separate real and imaginary
/// arrays in row-major order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<ComplexMatrix> for MatrixJson {
    fn from(m: ComplexMatrix) -> Self {
        MatrixJson {
            rows: m.rows,
            cols: m.cols,
            re: m.data.iter().map(|z| z.re).collect(),
            im: m.data.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(Error::DimensionMismatch(format!(
                "re has {} entries but im has {}",
                j.re.len(),
                j.im.len()
            )));
        }
        let data =
            j.re.iter()
                .zip(&j.im)
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect();
        ComplexMatrix::from_vec(j.rows, j.cols, data)
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C_ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C_ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::from_vec(
            rows,
            cols,
            data.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        )
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(d, 0.0);
        }
        m
    }

    /// `|u><v|`.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    /// Rank-one projector `|v><v|` (not normalised).
    pub fn projector(v: &[Complex64]) -> Self {
        Self::outer(v, v)
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch("columns of unequal length".into()));
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Matrix product, checking shapes.
    pub fn matmul(&self, other: &ComplexMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in row.iter().enumerate() {
                if a == C_ZERO {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// `a ⊗ b`.
    pub fn kron(&self, other: &ComplexMatrix) -> Self {
        let (r1, c1, r2, c2) = (self.rows, self.cols, other.rows, other.cols);
        let mut out = Self::zeros(r1 * r2, c1 * c2);
        let oc = c1 * c2;
        for i1 in 0..r1 {
            for j1 in 0..c1 {
                let a = self.data[i1 * c1 + j1];
                if a == C_ZERO {
                    continue;
                }
                for i2 in 0..r2 {
                    let row = (i1 * r2 + i2) * oc + j1 * c2;
                    for j2 in 0..c2 {
                        out.data[row + j2] = a * other.data[i2 * c2 + j2];
                    }
                }
            }
        }
        out
    }

    /// Kronecker product of a sequence of factors.
    pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Self {
        factors
            .into_iter()
            .fold(Self::identity(1), |acc, f| acc.kron(f))
    }

    /// `ab − ba` for square matrices of equal size.
    pub fn commutator(&self, other: &ComplexMatrix) -> Result<Self> {
        if !self.is_square() || self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "commutator of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(&(self * other) - &(other * self))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `m − m†`; infinite for non-square input.
    pub fn hermiticity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev = 0.0f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    /// `(m + m†)/2`.
    pub fn hermitian_part(&self) -> Self {
        let n = self.rows;
        Self::from_fn(n, n, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Hilbert–Schmidt inner product `tr(self† other)`.
    pub fn inner(&self, other: &ComplexMatrix) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Traces out every subsystem not listed in `keep`.
    ///
    /// `dims` lists subsystem dimensions in tensor order; `keep` may be given
    /// in any order but the result keeps the original subsystem ordering.
    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Self> {
        check_dims(self, dims)?;
        if keep.is_empty() {
            return Err(Error::DimensionMismatch("keep set is empty".into()));
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.len() != keep.len() || kept.iter().any(|&k| k >= dims.len()) {
            return Err(Error::DimensionMismatch(format!(
                "invalid keep set {keep:?} for {} subsystems",
                dims.len()
            )));
        }
        let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
        let strides = strides(dims);
        let kept_dims: Vec<usize> = kept.iter().map(|&k| dims[k]).collect();
        let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
        let dk: usize = kept_dims.iter().product();
        let dt: usize = traced_dims.iter().product();

        // Offsets in the full index for every kept / traced multi-index.
        let kept_off = offsets(&kept, &kept_dims, &strides);
        let traced_off = offsets(&traced, &traced_dims, &strides);

        let n = self.rows;
        let mut out = Self::zeros(dk, dk);
        for (r, &ro) in kept_off.iter().enumerate() {
            for (c, &co) in kept_off.iter().enumerate() {
                let mut acc = C_ZERO;
                for &t in traced_off.iter().take(dt) {
                    acc += self.data[(ro + t) * n + co + t];
                }
                out.data[r * dk + c] = acc;
            }
        }
        Ok(out)
    }

    /// Reorders tensor factors: subsystem `perm[k]` of the input becomes
    /// subsystem `k` of the output.
    pub fn permute_subsystems(&self, dims: &[usize], perm: &[usize]) -> Result<Self> {
        check_dims(self, dims)?;
        let mut seen = perm.to_vec();
        seen.sort_unstable();
        if seen != (0..dims.len()).collect::<Vec<_>>() {
            return Err(Error::DimensionMismatch(format!(
                "{perm:?} is not a permutation of {} subsystems",
                dims.len()
            )));
        }
        let in_strides = strides(dims);
        let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        // Map each output basis index to the input basis index.
        let map = offsets(perm, &new_dims, &in_strides);
        let n = self.rows;
        Ok(Self::from_fn(n, n, |i, j| self.data[map[i] * n + map[j]]))
    }

    /// Eigendecomposition of a Hermitian matrix: eigenvalues ascending, with
    /// the matching orthonormal eigenvectors as columns.
    pub fn hermitian_eig(&self) -> Result<HermitianEig> {
        let mut a = self.checked_hermitian_copy()?;
        let n = self.rows;
        let mut v = Self::identity(n);
        jacobi_sweeps(&mut a.data, n, Some(&mut v.data));
        let mut order: Vec<usize> = (0..n).collect();
        let diag: Vec<f64> = (0..n).map(|i| a.data[i * n + i].re).collect();
        order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
        let values = order.iter().map(|&i| diag[i]).collect();
        let vectors = Self::from_fn(n, n, |r, c| v.data[r * n + order[c]]);
        Ok(HermitianEig { values, vectors })
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        let mut a = self.checked_hermitian_copy()?;
        let mut vals = jacobi_eigenvalues_in_place(&mut a.data, self.rows);
        vals.sort_by(f64::total_cmp);
        Ok(vals)
    }

    fn checked_hermitian_copy(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "eigensolve of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let dev = self.hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(self.hermitian_part())
    }
}

/// Result of [`ComplexMatrix::hermitian_eig`].
#[derive(Clone, Debug)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    /// `V Λ V†`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.values.len();
        let scaled = ComplexMatrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * self.values[j]);
        &scaled * &self.vectors.adjoint()
    }
}

fn check_dims(m: &ComplexMatrix, dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if !m.is_square() || dims.is_empty() || total != m.rows {
        return Err(Error::DimensionMismatch(format!(
            "subsystem dims {dims:?} do not match a {}x{} matrix",
            m.rows, m.cols
        )));
    }
    Ok(())
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Full-space offsets of every multi-index over the listed subsystems,
/// enumerated in row-major order of `sub_dims`.
fn offsets(subsystems: &[usize], sub_dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for (&s, &d) in subsystems.iter().zip(sub_dims) {
        out = out
            .iter()
            .flat_map(|&base| (0..d).map(move |x| base + x * strides[s]))
            .collect();
    }
    out
}

/// Cyclic complex Jacobi on a Hermitian `n×n` row-major buffer. On return
/// the buffer is diagonal (to rounding) and `v`, if given, has been
/// right-multiplied by the accumulated rotations.
fn jacobi_sweeps(a: &mut [Complex64], n: usize, mut v: Option<&mut [Complex64]>) {
    const MAX_SWEEPS: usize = 100;
    let scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 {
        return;
    }
    let tiny = f64::EPSILON * f64::EPSILON * scale * scale;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off <= tiny {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let g = apq.norm();
                if g * g <= tiny / (n * n) as f64 {
                    continue;
                }
                // Phase-rotate (p,q) to a real off-diagonal, then apply the
                // real symmetric rotation that annihilates it.
                let phase = apq / g;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * g);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let e = phase.conj();
                // J = D R with D = diag(1, e) on (p, q).
                let j_pp = Complex64::new(c, 0.0);
                let j_pq = Complex64::new(s, 0.0);
                let j_qp = e * (-s);
                let j_qq = e * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * j_pp + akq * j_qp;
                    a[k * n + q] = akp * j_pq + akq * j_qq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = j_pp.conj() * apk + j_qp.conj() * aqk;
                    a[q * n + k] = j_pq.conj() * apk + j_qq.conj() * aqk;
                }
                a[p * n + q] = C_ZERO;
                a[q * n + p] = C_ZERO;
                a[p * n + p].im = 0.0;
                a[q * n + q].im = 0.0;
                if let Some(v) = v.as_deref_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = vkp * j_pp + vkq * j_qp;
                        v[k * n + q] = vkp * j_pq + vkq * j_qq;
                    }
                }
            }
        }
    }
}

/// Unsorted eigenvalues of a Hermitian buffer, which is overwritten. The
/// caller guarantees Hermiticity; used on hot paths inside the optimisers.
pub(crate) fn jacobi_eigenvalues_in_place(a: &mut [Complex64], n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a[0].re],
        2 => {
            let (p, q, r) = (a[0].re, a[3].re, a[1].norm());
            let mean = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + r * r).sqrt();
            vec![mean - rad, mean + rad]
        }
        _ => {
            jacobi_sweeps(a, n, None);
            (0..n).map(|i| a[i * n + i].re).collect()
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    /// Panics on a shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix sum shape mismatch"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix difference shape mismatch"
        );
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Pauli matrix `σ_k` for `k ∈ {0,1,2,3}` with `σ_0 = I`.
pub fn pauli(k: usize) -> ComplexMatrix {
    let (o, z, i) = (C_ONE, C_ZERO, Complex64::new(0.0, 1.0));
    let data = match k {
        0 => vec![o, z, z, o],
        1 => vec![z, o, o, z],
        2 => vec![z, -i, i, z],
        3 => vec![o, z, z, -o],
        _ => panic!("Pauli index {k} out of range"),
    };
    ComplexMatrix {
        rows: 2,
        cols: 2,
        data,
    }
}

/// `σ_i ⊗ σ_j`.
pub fn pauli2(i: usize, j: usize) -> ComplexMatrix {
    pauli(i).kron(&pauli(j))
}
