//! Density matrices, Bloch decompositions and classical-quantum ensembles.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{pauli, pauli2, ComplexMatrix, HERMITIAN_TOL};

pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue accepted for a valid state.
pub const POSITIVITY_TOL: f64 = -1e-9;

/// A validated quantum state together with its tensor-factor dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateJson", into = "StateJson")]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    dims: Vec<usize>,
}

/// State file layout: `{"dims": [..], "matrix": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateJson {
    pub dims: Vec<usize>,
    pub matrix: ComplexMatrix,
}

impl TryFrom<StateJson> for DensityMatrix {
    type Error = Error;

    fn try_from(j: StateJson) -> Result<Self> {
        DensityMatrix::new(j.matrix, j.dims)
    }
}

impl From<DensityMatrix> for StateJson {
    fn from(d: DensityMatrix) -> Self {
        StateJson {
            dims: d.dims,
            matrix: d.mat,
        }
    }
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity, then stores the
    /// symmetrised matrix.
    pub fn new(mat: ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        check_dims(&mat, &dims)?;
        let dev = mat.hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let mat = mat.hermitian_part();
        let min = mat.eigvalsh()?.first().copied().unwrap_or(0.0);
        if min < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(DensityMatrix { mat, dims })
    }

    /// Skips the spectral check; for matrices that are states by
    /// construction (channel outputs of validated states, tensor products).
    pub(crate) fn from_trusted(mat: ComplexMatrix, dims: Vec<usize>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), mat.rows());
        DensityMatrix {
            mat: mat.hermitian_part(),
            dims,
        }
    }

    /// `|ψ><ψ|` after normalising `ψ`.
    pub fn from_pure(psi: &[Complex64], dims: Vec<usize>) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
        let mat = ComplexMatrix::projector(&v);
        check_dims(&mat, &dims)?;
        Ok(Self::from_trusted(mat, dims))
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Self {
        let d: usize = dims.iter().product();
        Self::from_trusted(ComplexMatrix::identity(d).scale_re(1.0 / d as f64), dims)
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(probs: &[f64], dims: Vec<usize>) -> Result<Self> {
        Self::new(ComplexMatrix::from_diagonal(probs), dims)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    #[inline]
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.mat.eigvalsh().expect("density matrices are Hermitian")
    }

    pub fn purity(&self) -> f64 {
        self.mat.inner(&self.mat).re
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::from_trusted(self.mat.kron(&other.mat), dims)
    }

    /// Reduced state on the listed subsystems.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let m = self.mat.partial_trace(&self.dims, keep)?;
        let mut kept = keep.to_vec();
        kept.sort_unstable();
        let dims = kept.iter().map(|&k| self.dims[k]).collect();
        Ok(Self::from_trusted(m, dims))
    }

    /// Reorders subsystems; output factor `k` is input factor `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<DensityMatrix> {
        let m = self.mat.permute_subsystems(&self.dims, perm)?;
        let dims = perm.iter().map(|&p| self.dims[p]).collect();
        Ok(Self::from_trusted(m, dims))
    }

    /// Re-labels the tensor structure without moving any entries.
    pub fn regroup(&self, dims: Vec<usize>) -> Result<DensityMatrix> {
        check_dims(&self.mat, &dims)?;
        Ok(DensityMatrix {
            mat: self.mat.clone(),
            dims,
        })
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<DensityMatrix> {
        let m = u.matmul(&self.mat)?.matmul(&u.adjoint())?;
        if m.rows() != self.dim() {
            return Err(Error::DimensionMismatch(
                "conjugation changes dimension".into(),
            ));
        }
        Ok(Self::from_trusted(m, self.dims.clone()))
    }
}

fn check_dims(mat: &ComplexMatrix, dims: &[usize]) -> Result<()> {
    if !mat.is_square() || dims.is_empty() || dims.iter().product::<usize>() != mat.rows() {
        return Err(Error::DimensionMismatch(format!(
            "dims {dims:?} for a {}x{} matrix",
            mat.rows(),
            mat.cols()
        )));
    }
    Ok(())
}

/// `(I + r·σ)/2`.
pub fn from_bloch1(r: [f64; 3]) -> Result<DensityMatrix> {
    let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 + 1e-12 {
        return Err(Error::BlochOutsideBall(norm));
    }
    let mut m = pauli(0);
    for (k, &rk) in r.iter().enumerate() {
        m = &m + &pauli(k + 1).scale_re(rk);
    }
    Ok(DensityMatrix::from_trusted(m.scale_re(0.5), vec![2]))
}

/// Bloch vector `tr(ρ σ_k)` of a qubit operator.
pub fn to_bloch1(m: &ComplexMatrix) -> [f64; 3] {
    [1, 2, 3].map(|k| pauli(k).inner(m).re)
}

/// Two-qubit Pauli coordinates:
/// `ρ = ¼[I⊗I + Σ r_i σ_i⊗I + Σ s_i I⊗σ_i + Σ T_ij σ_i⊗σ_j]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitBloch {
    pub r: [f64; 3],
    pub s: [f64; 3],
    pub t: [[f64; 3]; 3],
}

impl TwoQubitBloch {
    pub fn new(r: [f64; 3], s: [f64; 3], t: [[f64; 3]; 3]) -> Self {
        TwoQubitBloch { r, s, t }
    }

    /// The operator these coordinates describe, without any positivity check.
    pub fn to_operator(&self) -> ComplexMatrix {
        let mut m = pauli2(0, 0);
        for i in 0..3 {
            m = &m + &pauli2(i + 1, 0).scale_re(self.r[i]);
            m = &m + &pauli2(0, i + 1).scale_re(self.s[i]);
            for j in 0..3 {
                if self.t[i][j] != 0.0 {
                    m = &m + &pauli2(i + 1, j + 1).scale_re(self.t[i][j]);
                }
            }
        }
        m.scale_re(0.25)
    }

    /// Coordinates of any 4×4 operator (`tr(O σ_i⊗σ_j)`); exact inverse of
    /// [`to_operator`](Self::to_operator) for unit-trace Hermitian input.
    pub fn from_operator(m: &ComplexMatrix) -> Self {
        let coef = |i: usize, j: usize| pauli2(i, j).inner(m).re;
        let mut b = TwoQubitBloch::default();
        for i in 0..3 {
            b.r[i] = coef(i + 1, 0);
            b.s[i] = coef(0, i + 1);
            for j in 0..3 {
                b.t[i][j] = coef(i + 1, j + 1);
            }
        }
        b
    }

    /// Column `j` of `T` (the vector `T_{·j}`).
    pub fn t_column(&self, j: usize) -> [f64; 3] {
        [self.t[0][j], self.t[1][j], self.t[2][j]]
    }

    /// Row `i` of `T` (the vector `T_{i·}`).
    pub fn t_row(&self, i: usize) -> [f64; 3] {
        self.t[i]
    }

    /// Coordinates after local Pauli-diagonal channels with transfer
    /// coefficients `a` (first qubit) and `b` (second qubit).
    pub fn under_local_transfer(&self, a: [f64; 3], b: [f64; 3]) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.r[i] *= a[i];
            out.s[i] *= b[i];
            for j in 0..3 {
                out.t[i][j] *= a[i] * b[j];
            }
        }
        out
    }

    /// Exchanges the two qubits.
    pub fn swapped(&self) -> Self {
        let mut t = [[0.0; 3]; 3];
        for (i, row) in t.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.t[j][i];
            }
        }
        TwoQubitBloch {
            r: self.s,
            s: self.r,
            t,
        }
    }
}

pub fn two_qubit_from_bloch(b: &TwoQubitBloch) -> Result<DensityMatrix> {
    DensityMatrix::new(b.to_operator(), vec![2, 2])
}

pub fn to_two_qubit_bloch(rho: &DensityMatrix) -> Result<TwoQubitBloch> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch(format!(
            "two-qubit coordinates need a 4x4 state, got {}",
            rho.dim()
        )));
    }
    Ok(TwoQubitBloch::from_operator(rho.matrix()))
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Single-qubit basis kets by symbol: `0 1 + - r l` (`r`, `l` are the σ_y
/// eigenstates `(|0> ± i|1>)/√2`).
pub fn qubit_ket(symbol: char) -> Option<[Complex64; 2]> {
    let h = FRAC_1_SQRT_2;
    Some(match symbol {
        '0' => [c(1.0), c(0.0)],
        '1' => [c(0.0), c(1.0)],
        '+' => [c(h), c(h)],
        '-' => [c(h), c(-h)],
        'r' => [c(h), Complex64::new(0.0, h)],
        'l' => [c(h), Complex64::new(0.0, -h)],
        _ => return None,
    })
}

/// Tensor product of single-qubit kets spelled out as a string, e.g. `"0+"`.
pub fn product_ket(label: &str) -> Option<Vec<Complex64>> {
    let mut v = vec![c(1.0)];
    for ch in label.chars() {
        let k = qubit_ket(ch)?;
        v = v
            .iter()
            .flat_map(|a| k.iter().map(move |b| a * b))
            .collect();
    }
    (!label.is_empty()).then_some(v)
}

fn superpose(a: &str, sa: f64, b: &str, sb: f64) -> Vec<Complex64> {
    let (x, y) = (product_ket(a).unwrap(), product_ket(b).unwrap());
    x.iter()
        .zip(&y)
        .map(|(p, q)| (p * sa + q * sb) * FRAC_1_SQRT_2)
        .collect()
}

/// The two-qubit kets `|ψ_ij>`:
/// `ψ00 = (|00>+|11>)/√2`, `ψ11 = (|0+>+|1->)/√2`,
/// `ψ01 = (|01>−|10>)/√2`, `ψ10 = (|0->−|1+>)/√2`.
pub fn psi_ket(i: u8, j: u8) -> Vec<Complex64> {
    match (i, j) {
        (0, 0) => superpose("00", 1.0, "11", 1.0),
        (1, 1) => superpose("0+", 1.0, "1-", 1.0),
        (0, 1) => superpose("01", 1.0, "10", -1.0),
        (1, 0) => superpose("0-", 1.0, "1+", -1.0),
        _ => panic!("psi index ({i},{j}) must be bits"),
    }
}

pub fn psi_family(i: u8, j: u8) -> DensityMatrix {
    DensityMatrix::from_pure(&psi_ket(i, j), vec![2, 2]).expect("normalised ket")
}

/// The flagged kets `|Φ_k>` used by the dephasing/depolarizing example:
/// `Φ0 = (|01>−|10>)/√2`, `Φ1 = (|00>+|11>)/√2`, `Φ2 = (|0+>+|1->)/√2`,
/// `Φ3 = (|−0>−|+1>)/√2`.
pub fn phi_ket(k: u8) -> Vec<Complex64> {
    match k {
        0 => superpose("01", 1.0, "10", -1.0),
        1 => superpose("00", 1.0, "11", 1.0),
        2 => superpose("0+", 1.0, "1-", 1.0),
        3 => superpose("-0", 1.0, "+1", -1.0),
        _ => panic!("phi index {k} out of range"),
    }
}

/// Basis ket from a CQ-file label: a product label such as `"0+"`, or one of
/// the named two-qubit kets `psi00..psi11`, `phi0..phi3`.
pub fn ket_from_label(label: &str) -> Result<Vec<Complex64>> {
    let bits = |s: &str| -> Option<(u8, u8)> {
        let b: Vec<u8> = s.bytes().map(|x| x.wrapping_sub(b'0')).collect();
        (b.len() == 2 && b.iter().all(|&x| x < 2)).then(|| (b[0], b[1]))
    };
    if let Some(rest) = label.strip_prefix("psi") {
        if let Some((i, j)) = bits(rest) {
            return Ok(psi_ket(i, j));
        }
    }
    if let Some(rest) = label.strip_prefix("phi") {
        if let Ok(k @ 0..=3) = rest.parse::<u8>() {
            return Ok(phi_ket(k));
        }
    }
    product_ket(label).ok_or_else(|| Error::InvalidState(format!("unknown basis label {label:?}")))
}

/// Classical-quantum ensemble `Σ_i q_i |α_i><α_i| ⊗ ρ_i`.
#[derive(Clone, Debug)]
pub struct CQState {
    weights: Vec<f64>,
    basis: Vec<Vec<Complex64>>,
    conditionals: Vec<DensityMatrix>,
}

pub const CQ_TOL: f64 = 1e-10;

impl CQState {
    /// Validates the weights (non-negative, summing to one), the basis
    /// (normalised, mutually orthogonal) and the conditionals (common dimension).
    pub fn new(
        weights: Vec<f64>,
        basis: Vec<Vec<Complex64>>,
        conditionals: Vec<DensityMatrix>,
    ) -> Result<Self> {
        let n = weights.len();
        if n == 0 || basis.len() != n || conditionals.len() != n {
            return Err(Error::InvalidState(format!(
                "{} weights, {} basis vectors, {} conditionals",
                n,
                basis.len(),
                conditionals.len()
            )));
        }
        if weights.iter().any(|&q| q < 0.0 || !q.is_finite()) {
            return Err(Error::InvalidState("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > CQ_TOL {
            return Err(Error::InvalidState(format!("weights sum to {total}")));
        }
        let d_a = basis[0].len();
        if d_a == 0 || basis.iter().any(|v| v.len() != d_a) {
            return Err(Error::DimensionMismatch(
                "basis vectors of unequal length".into(),
            ));
        }
        if n > d_a {
            return Err(Error::InvalidState(format!(
                "{n} orthogonal projectors do not fit in dimension {d_a}"
            )));
        }
        for (i, u) in basis.iter().enumerate() {
            for (j, v) in basis.iter().enumerate().skip(i) {
                let ip: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (ip - target).norm() > CQ_TOL {
                    return Err(Error::InvalidState(format!(
                        "basis vectors {i} and {j} have overlap {ip}"
                    )));
                }
            }
        }
        let d_b = conditionals[0].dim();
        if conditionals.iter().any(|r| r.dim() != d_b) {
            return Err(Error::DimensionMismatch(
                "conditionals of unequal dimension".into(),
            ));
        }
        Ok(CQState {
            weights,
            basis,
            conditionals,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> &[Vec<Complex64>] {
        &self.basis
    }

    pub fn conditionals(&self) -> &[DensityMatrix] {
        &self.conditionals
    }

    pub fn dim_a(&self) -> usize {
        self.basis[0].len()
    }

    pub fn dim_b(&self) -> usize {
        self.conditionals[0].dim()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CqFile = serde_json::from_str(&text)?;
        file.try_into()
    }
}

/// `Σ_i q_i Π_i ⊗ ρ_i` with dims `[d_A, d_B]`.
pub fn cq_build(cq: &CQState) -> DensityMatrix {
    let (d_a, d_b) = (cq.dim_a(), cq.dim_b());
    let mut m = ComplexMatrix::zeros(d_a * d_b, d_a * d_b);
    for ((q, v), rho) in cq.weights.iter().zip(&cq.basis).zip(&cq.conditionals) {
        if *q == 0.0 {
            continue;
        }
        let term = ComplexMatrix::projector(v).kron(rho.matrix()).scale_re(*q);
        m = &m + &term;
    }
    DensityMatrix::from_trusted(m, vec![d_a, d_b])
}

/// CQ file layout: `{"weights": [..], "basis_labels": [..], "conditionals": [matrix..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CqFile {
    pub weights: Vec<f64>,
    pub basis_labels: Vec<String>,
    pub conditionals: Vec<ComplexMatrix>,
}

impl TryFrom<CqFile> for CQState {
    type Error = Error;

    fn try_from(f: CqFile) -> Result<Self> {
        let basis = f
            .basis_labels
            .iter()
            .map(|l| ket_from_label(l))
            .collect::<Result<Vec<_>>>()?;
        let conditionals = f
            .conditionals
            .into_iter()
            .map(|m| {
                let d = m.rows();
                DensityMatrix::new(m, vec![d])
            })
            .collect::<Result<Vec<_>>>()?;
        CQState::new(f.weights, basis, conditionals)
    }
}

/// Report form of a [`CQState`]: basis vectors as the columns of a matrix.
#[derive(Clone, Debug, Serialize)]
pub struct CqReport {
    pub weights: Vec<f64>,
    pub basis: ComplexMatrix,
    pub conditionals: Vec<ComplexMatrix>,
}

impl From<&CQState> for CqReport {
    fn from(cq: &CQState) -> Self {
        CqReport {
            weights: cq.weights.clone(),
            basis: ComplexMatrix::from_columns(&cq.basis).expect("validated basis"),
            conditionals: cq.conditionals.iter().map(|r| r.matrix().clone()).collect(),
        }
    }
}
