//! Quantum channels in Kraus form, the standard families, and a parser for
//! the compact channel-spec strings accepted on the command line.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{pauli, ComplexMatrix, MAX_DIM};
use crate::sampling::{random_probabilities, random_unitary, stream_rng};
use crate::states::DensityMatrix;

/// Tolerance on `‖Σ E†E − I‖_F`.
pub const TP_TOL: f64 = 1e-10;
/// Frobenius norm above which a commutator counts as nonzero.
pub const NONZERO_TOL: f64 = 1e-8;
/// Tolerance used when recognising measure-and-prepare structure.
pub const STRUCTURE_TOL: f64 = 1e-8;

const KRAUS_DROP: f64 = 1e-14;

/// A completely positive trace-preserving map `ρ ↦ Σ E_k ρ E_k†`.
#[derive(Clone)]
pub struct KrausChannel {
    kraus_ops: Vec<ComplexMatrix>,
    d_in: usize,
    d_out: usize,
    label: String,
}

impl fmt::Debug for KrausChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "KrausChannel({}: {} -> {}, {} ops)",
            self.label,
            self.d_in,
            self.d_out,
            self.kraus_ops.len()
        )
    }
}

impl KrausChannel {
    /// Builds and validates a channel. Every operator must be `d_out × d_in`
    /// with the shape taken from the first one.
    pub fn new(kraus_ops: Vec<ComplexMatrix>, label: impl Into<String>) -> Result<Self> {
        let first = kraus_ops
            .first()
            .ok_or_else(|| Error::InvalidState("channel with no Kraus operators".into()))?;
        let (d_out, d_in) = (first.rows(), first.cols());
        if d_in > MAX_DIM || d_out > MAX_DIM {
            return Err(Error::DimensionOverflow(d_in.max(d_out), MAX_DIM));
        }
        if kraus_ops
            .iter()
            .any(|e| e.rows() != d_out || e.cols() != d_in)
        {
            return Err(Error::DimensionMismatch(
                "Kraus operators of unequal shape".into(),
            ));
        }
        let ch = KrausChannel {
            kraus_ops,
            d_in,
            d_out,
            label: label.into(),
        };
        ch.validate()?;
        Ok(ch)
    }

    fn trusted(kraus_ops: Vec<ComplexMatrix>, label: String) -> Self {
        let (d_out, d_in) = (kraus_ops[0].rows(), kraus_ops[0].cols());
        KrausChannel {
            kraus_ops: kraus_ops
                .into_iter()
                .filter(|e| e.frobenius_norm() > KRAUS_DROP)
                .collect(),
            d_in,
            d_out,
            label,
        }
    }

    /// `‖Σ E_k† E_k − I‖_F`.
    pub fn tp_deviation(&self) -> f64 {
        let mut s = ComplexMatrix::zeros(self.d_in, self.d_in);
        for e in &self.kraus_ops {
            s = &s + &(&e.adjoint() * e);
        }
        (&s - &ComplexMatrix::identity(self.d_in)).frobenius_norm()
    }

    pub fn validate(&self) -> Result<()> {
        let dev = self.tp_deviation();
        if dev > TP_TOL {
            return Err(Error::NotTracePreserving(dev));
        }
        Ok(())
    }

    pub fn kraus_ops(&self) -> &[ComplexMatrix] {
        &self.kraus_ops
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// The map applied to an arbitrary `d_in × d_in` operator.
    pub fn apply_matrix(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        if m.rows() != self.d_in || m.cols() != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "channel input dimension {} but operator is {}x{}",
                self.d_in,
                m.rows(),
                m.cols()
            )));
        }
        Ok(self.apply_unchecked(m))
    }

    pub(crate) fn apply_unchecked(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.d_out, self.d_out);
        for e in &self.kraus_ops {
            out = &out + &(&(e * m) * &e.adjoint());
        }
        out
    }

    /// `Λ†(X) = Σ E_k† X E_k`.
    pub fn apply_dual(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.d_in, self.d_in);
        for e in &self.kraus_ops {
            out = &out + &(&(&e.adjoint() * x) * e);
        }
        out
    }

    /// Applies the channel to a whole state of dimension `d_in`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let out = self.apply_matrix(rho.matrix())?;
        let dims = if rho.dims().len() > 1 && self.d_in == self.d_out {
            rho.dims().to_vec()
        } else {
            vec![self.d_out]
        };
        Ok(DensityMatrix::from_trusted(out, dims))
    }

    /// `(I ⊗ … ⊗ Λ ⊗ … ⊗ I)(ρ)` with `Λ` on subsystem `subsystem`.
    pub fn apply_on(&self, rho: &DensityMatrix, subsystem: usize) -> Result<DensityMatrix> {
        let dims = rho.dims();
        if subsystem >= dims.len() || dims[subsystem] != self.d_in {
            return Err(Error::DimensionMismatch(format!(
                "channel on {} levels cannot act on subsystem {subsystem} of {dims:?}",
                self.d_in
            )));
        }
        let left: usize = dims[..subsystem].iter().product();
        let right: usize = dims[subsystem + 1..].iter().product();
        let (il, ir) = (
            ComplexMatrix::identity(left),
            ComplexMatrix::identity(right),
        );
        let n_out = left * self.d_out * right;
        let mut out = ComplexMatrix::zeros(n_out, n_out);
        for e in &self.kraus_ops {
            let big = il.kron(e).kron(&ir);
            out = &out + &(&(&big * rho.matrix()) * &big.adjoint());
        }
        let mut new_dims = dims.to_vec();
        new_dims[subsystem] = self.d_out;
        Ok(DensityMatrix::from_trusted(out, new_dims))
    }

    /// `Λ₁ ⊗ Λ₂` with Kraus set `{E_i ⊗ F_j}`.
    pub fn tensor(&self, other: &KrausChannel) -> KrausChannel {
        let ops = self
            .kraus_ops
            .iter()
            .flat_map(|e| other.kraus_ops.iter().map(move |f| e.kron(f)))
            .collect();
        KrausChannel::trusted(ops, format!("{}*{}", self.label, other.label))
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &KrausChannel) -> Result<KrausChannel> {
        if next.d_in != self.d_out {
            return Err(Error::DimensionMismatch(
                "composition of incompatible channels".into(),
            ));
        }
        let ops = next
            .kraus_ops
            .iter()
            .flat_map(|f| self.kraus_ops.iter().map(move |e| f * e))
            .collect();
        Ok(KrausChannel::trusted(
            ops,
            format!("{}>{}", self.label, next.label),
        ))
    }

    /// Unnormalised Choi matrix `Σ_ij |i><j| ⊗ Λ(|i><j|)`.
    pub fn choi(&self) -> ComplexMatrix {
        let (d, k) = (self.d_in, self.d_out);
        let mut j = ComplexMatrix::zeros(d * k, d * k);
        for a in 0..d {
            for b in 0..d {
                let mut unit = ComplexMatrix::zeros(d, d);
                unit[(a, b)] = Complex64::new(1.0, 0.0);
                let block = self.apply_unchecked(&unit);
                for r in 0..k {
                    for c in 0..k {
                        j[(a * k + r, b * k + c)] = block[(r, c)];
                    }
                }
            }
        }
        j
    }

    /// Extensional equality through the Choi matrices.
    pub fn same_map(&self, other: &KrausChannel, tol: f64) -> bool {
        self.d_in == other.d_in
            && self.d_out == other.d_out
            && self.choi().max_abs_diff(&other.choi()) <= tol
    }

    pub fn is_unital(&self) -> bool {
        self.d_in == self.d_out
            && (&self.apply_unchecked(&ComplexMatrix::identity(self.d_in))
                - &ComplexMatrix::identity(self.d_in))
                .frobenius_norm()
                <= TP_TOL
    }

    /// Real 4×4 matrix `R_ij = ½ tr(σ_i Λ(σ_j))` of a qubit channel.
    pub fn pauli_transfer_matrix(&self) -> Result<[[f64; 4]; 4]> {
        self.require_qubit()?;
        let mut r = [[0.0; 4]; 4];
        for j in 0..4 {
            let out = self.apply_unchecked(&pauli(j));
            for (i, row) in r.iter_mut().enumerate() {
                row[j] = 0.5 * pauli(i).inner(&out).re;
            }
        }
        Ok(r)
    }

    /// Diagonal of the Pauli transfer matrix, `Λ(σ_i) = a_i σ_i`.
    pub fn transfer_coefficients(&self) -> Result<TransferCoeffs> {
        let r = self.pauli_transfer_matrix()?;
        let mut off = 0.0f64;
        for (i, row) in r.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if i != j {
                    off = off.max(x.abs());
                }
            }
        }
        if off > 1e-10 {
            return Err(Error::NonDiagonalTransfer(off));
        }
        Ok(TransferCoeffs {
            a: [r[1][1], r[2][2], r[3][3]],
        })
    }

    fn require_qubit(&self) -> Result<()> {
        if self.d_in != 2 || self.d_out != 2 {
            return Err(Error::DimensionMismatch(format!(
                "qubit channel required, got {} -> {}",
                self.d_in, self.d_out
            )));
        }
        Ok(())
    }

    /// Monte-Carlo search for commuting inputs whose outputs do not commute.
    /// Pairs are co-diagonal in a Haar-random basis. One-sided: `preserving`
    /// only means no counterexample turned up.
    pub fn is_commutativity_preserving(&self, trials: usize, seed: u64) -> CpTest {
        let d = self.d_in;
        for trial in 0..trials {
            let mut rng = stream_rng(seed, trial as u64);
            let u = random_unitary(d, &mut rng);
            let p = random_probabilities(d, &mut rng);
            let q = random_probabilities(d, &mut rng);
            let xi1 = &(&u * &ComplexMatrix::from_diagonal(&p)) * &u.adjoint();
            let xi2 = &(&u * &ComplexMatrix::from_diagonal(&q)) * &u.adjoint();
            let c = self
                .apply_unchecked(&xi1)
                .commutator(&self.apply_unchecked(&xi2))
                .expect("square outputs");
            let norm = c.frobenius_norm();
            if norm > NONZERO_TOL {
                return CpTest {
                    preserving: false,
                    trials_run: trial + 1,
                    counterexample: Some(CpCounterexample {
                        xi1: xi1.hermitian_part(),
                        xi2: xi2.hermitian_part(),
                        commutator_norm: norm,
                    }),
                };
            }
        }
        CpTest {
            preserving: true,
            trials_run: trials,
            counterexample: None,
        }
    }

    /// Recovers `Λ(ρ) = Σ_i <b_i|ρ|b_i> η_i` when the channel has that form.
    pub fn mp_structure(&self) -> Option<MpStructure> {
        let d = self.d_in;
        let mut candidates = vec![ComplexMatrix::identity(d)];
        // The dual map sends every operator to something diagonal in the
        // measured basis, so a generic probe reveals it.
        let mut rng = stream_rng(0x4d50, 0);
        let probe = crate::sampling::random_density(self.d_out, self.d_out, &mut rng);
        let probe = &probe
            + &ComplexMatrix::from_diagonal(
                &(0..self.d_out).map(|k| 0.1 * k as f64).collect::<Vec<_>>(),
            );
        if let Ok(eig) = self.apply_dual(&probe).hermitian_eig() {
            candidates.push(eig.vectors);
        }
        candidates
            .into_iter()
            .find_map(|basis| self.check_mp_in(&basis))
    }

    fn check_mp_in(&self, basis: &ComplexMatrix) -> Option<MpStructure> {
        let d = self.d_in;
        let cols: Vec<Vec<Complex64>> = (0..d).map(|j| basis.column(j)).collect();
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    let off = self.apply_unchecked(&ComplexMatrix::outer(&cols[i], &cols[j]));
                    if off.frobenius_norm() > STRUCTURE_TOL {
                        return None;
                    }
                }
            }
        }
        let etas = cols
            .iter()
            .map(|v| {
                self.apply_unchecked(&ComplexMatrix::projector(v))
                    .hermitian_part()
            })
            .collect();
        Some(MpStructure {
            basis: basis.clone(),
            etas,
        })
    }

    pub fn is_measure_prepare(&self) -> bool {
        self.mp_structure().is_some()
    }

    /// Measure-and-prepare with `η_i = |b_i><b_i|`, i.e. full dephasing in
    /// some orthonormal basis.
    pub fn is_completely_decohering(&self) -> bool {
        if self.d_in != self.d_out {
            return false;
        }
        self.mp_structure().is_some_and(|s| {
            (0..self.d_in).all(|i| {
                let b = s.basis.column(i);
                s.etas[i].max_abs_diff(&ComplexMatrix::projector(&b)) <= STRUCTURE_TOL
            })
        })
    }

    /// `ρ ↦ I/d` for every input.
    pub fn is_completely_depolarizing(&self) -> bool {
        self.d_in == self.d_out && self.same_map(&completely_depolarizing(self.d_in), STRUCTURE_TOL)
    }

    /// Some `a` with `Λ(ρ) = aρ + (1−a)I/d`.
    pub fn isotropic_parameter(&self) -> Option<f64> {
        if self.d_in != self.d_out {
            return None;
        }
        let d = self.d_in;
        let mut unit = ComplexMatrix::zeros(d, d);
        if d < 2 {
            return Some(1.0);
        }
        unit[(0, 1)] = Complex64::new(1.0, 0.0);
        let a = self.apply_unchecked(&unit)[(0, 1)].re;
        let iso = isotropic(a, d).ok()?;
        self.same_map(&iso, STRUCTURE_TOL).then_some(a)
    }

    /// `Λ(ρ) = UρU†` for some unitary `U` (a single Kraus operator up to
    /// equivalence, detected through a rank-one Choi matrix).
    pub fn is_unitary_channel(&self) -> bool {
        if self.d_in != self.d_out {
            return false;
        }
        let ev = self.choi().eigvalsh().unwrap_or_default();
        let d = self.d_in as f64;
        ev.len() >= 2 && (ev[ev.len() - 1] - d).abs() <= 1e-8 && ev[ev.len() - 2].abs() <= 1e-8
    }
}

/// Result of [`KrausChannel::is_commutativity_preserving`].
#[derive(Clone, Debug)]
pub struct CpTest {
    pub preserving: bool,
    pub trials_run: usize,
    pub counterexample: Option<CpCounterexample>,
}

#[derive(Clone, Debug)]
pub struct CpCounterexample {
    pub xi1: ComplexMatrix,
    pub xi2: ComplexMatrix,
    pub commutator_norm: f64,
}

/// Measured basis (columns) and prepared states of a measure-and-prepare channel.
#[derive(Clone, Debug)]
pub struct MpStructure {
    pub basis: ComplexMatrix,
    pub etas: Vec<ComplexMatrix>,
}

/// Diagonal action `Λ(σ_i) = a_i σ_i` of a Pauli-diagonal qubit channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCoeffs {
    pub a: [f64; 3],
}

/// Pauli-channel weights `λ₀..λ₃` in normal form (`λ₀` largest).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliParams {
    lambdas: [f64; 4],
}

impl PauliParams {
    pub fn new(lambdas: [f64; 4]) -> Result<Self> {
        check_pauli_weights(&lambdas)?;
        if lambdas[1..].iter().any(|&l| l > lambdas[0] + 1e-12) {
            return Err(Error::ParameterOutOfRange(format!(
                "pauli weights {lambdas:?}: lambda0 must be the largest"
            )));
        }
        Ok(PauliParams { lambdas })
    }

    pub fn lambdas(&self) -> [f64; 4] {
        self.lambdas
    }

    /// `a_i = 2(λ₀ + λ_i) − 1`.
    pub fn transfer(&self) -> [f64; 3] {
        let l = self.lambdas;
        [1, 2, 3].map(|i| 2.0 * (l[0] + l[i]) - 1.0)
    }
}

fn check_pauli_weights(l: &[f64; 4]) -> Result<()> {
    if l.iter().any(|&x| x < -1e-12 || !x.is_finite()) {
        return Err(Error::NotCompletelyPositive(format!(
            "negative pauli weight in {l:?}"
        )));
    }
    let s: f64 = l.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::ParameterOutOfRange(format!(
            "pauli weights sum to {s}"
        )));
    }
    Ok(())
}

fn pauli_kraus(l: [f64; 4], label: String) -> KrausChannel {
    let ops = (0..4)
        .map(|i| pauli(i).scale_re(l[i].max(0.0).sqrt()))
        .collect();
    KrausChannel::trusted(ops, label)
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

/// `Σ λ_i σ_i ρ σ_i`.
pub fn pauli_channel(params: PauliParams) -> KrausChannel {
    let l = params.lambdas;
    let label = format!("pauli:{}", l.map(fmt_num).join(","));
    pauli_kraus(l, label)
}

/// Pauli-diagonal qubit channel with the given transfer coefficients; fails
/// unless the implied weights are non-negative.
pub fn pauli_from_transfer(a: [f64; 3], label: impl Into<String>) -> Result<KrausChannel> {
    let [a1, a2, a3] = a;
    let l = [
        (1.0 + a1 + a2 + a3) / 4.0,
        (1.0 + a1 - a2 - a3) / 4.0,
        (1.0 - a1 + a2 - a3) / 4.0,
        (1.0 - a1 - a2 + a3) / 4.0,
    ];
    if l.iter().any(|&x| x < -1e-12) {
        return Err(Error::NotCompletelyPositive(format!(
            "transfer coefficients {a:?} give pauli weights {l:?}"
        )));
    }
    Ok(pauli_kraus(l, label.into()))
}

fn check_range(name: &str, x: f64, lo: f64, hi: f64) -> Result<()> {
    if !(lo..=hi).contains(&x) || x.is_nan() {
        return Err(Error::ParameterOutOfRange(format!(
            "{name} = {x} outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

pub fn identity(d: usize) -> KrausChannel {
    KrausChannel::trusted(vec![ComplexMatrix::identity(d)], format!("id:{d}"))
}

/// Qubit dephasing: off-diagonals shrink by `√(1−p)`, transfer `(√(1−p), √(1−p), 1)`.
pub fn phase_damping(p: f64) -> Result<KrausChannel> {
    check_range("p", p, 0.0, 1.0)?;
    let k0 = ComplexMatrix::from_diagonal(&[1.0, (1.0 - p).sqrt()]);
    let k1 = ComplexMatrix::from_diagonal(&[0.0, p.sqrt()]);
    Ok(KrausChannel::trusted(vec![k0, k1], format!("pd:{p}")))
}

/// Generalised Pauli (Weyl) operators `X^j Z^k` on `d` levels.
pub fn weyl_operators(d: usize) -> Vec<ComplexMatrix> {
    let mut ops = Vec::with_capacity(d * d);
    for j in 0..d {
        for k in 0..d {
            ops.push(ComplexMatrix::from_fn(d, d, |r, c| {
                if r == (c + j) % d {
                    Complex64::from_polar(1.0, 2.0 * PI * (k * c) as f64 / d as f64)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }));
        }
    }
    ops
}

/// `ρ ↦ aρ + (1−a)I/d`, completely positive for `a ∈ [−1/(d²−1), 1]`.
pub fn isotropic(a: f64, d: usize) -> Result<KrausChannel> {
    if d < 2 {
        return Err(Error::ParameterOutOfRange(format!(
            "isotropic channel needs d >= 2, got {d}"
        )));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionOverflow(d, MAX_DIM));
    }
    let lo = -1.0 / ((d * d - 1) as f64);
    check_range("a", a, lo - 1e-12, 1.0)?;
    let d2 = (d * d) as f64;
    let w_id = a + (1.0 - a) / d2;
    let w_rest = (1.0 - a) / d2;
    let ops = weyl_operators(d)
        .into_iter()
        .enumerate()
        .map(|(n, w)| w.scale_re(if n == 0 { w_id } else { w_rest }.max(0.0).sqrt()))
        .collect();
    let label = if d == 2 {
        format!("dep:{a}")
    } else {
        format!("iso:{a},{d}")
    };
    let ch = KrausChannel::trusted(ops, label);
    let min = ch.choi().eigvalsh()?.first().copied().unwrap_or(0.0);
    if min < -1e-10 {
        return Err(Error::NotCompletelyPositive(format!(
            "Choi eigenvalue {min:e}"
        )));
    }
    Ok(ch)
}

/// Qubit depolarizing channel, transfer `(a, a, a)`.
pub fn depolarizing(a: f64) -> Result<KrausChannel> {
    isotropic(a, 2)
}

/// `ρ ↦ I/d`.
pub fn completely_depolarizing(d: usize) -> KrausChannel {
    isotropic(0.0, d)
        .expect("a = 0 is always valid")
        .with_label(format!("cdp:{d}"))
}

/// `ρ ↦ Σ_i <b_i|ρ|b_i> |b_i><b_i|` for the orthonormal columns `b_i`.
pub fn completely_decohering(basis: &ComplexMatrix) -> Result<KrausChannel> {
    let d = check_basis(basis)?;
    let ops = (0..d)
        .map(|j| ComplexMatrix::projector(&basis.column(j)))
        .collect();
    Ok(KrausChannel::trusted(ops, format!("cd:{d}")))
}

/// Complete dephasing in the computational basis.
pub fn cd_computational(d: usize) -> KrausChannel {
    let ch = completely_decohering(&ComplexMatrix::identity(d)).expect("identity is a basis");
    if d == 2 {
        ch.with_label("cd")
    } else {
        ch
    }
}

fn check_basis(basis: &ComplexMatrix) -> Result<usize> {
    let d = basis.rows();
    if !basis.is_square() {
        return Err(Error::DimensionMismatch(
            "basis matrix must be square".into(),
        ));
    }
    let gram = &basis.adjoint() * basis;
    let dev = gram.max_abs_diff(&ComplexMatrix::identity(d));
    if dev > 1e-10 {
        return Err(Error::InvalidState(format!(
            "basis is not orthonormal (deviation {dev:e})"
        )));
    }
    Ok(d)
}

/// Transfer `(0, a, a)`: the σ₁ Bloch component is removed and the other two
/// shrink by `a`. Completely positive for `|a| ≤ ½`.
pub fn projecting_depolarizing(a: f64) -> Result<KrausChannel> {
    check_range("a", a, -0.5, 0.5)?;
    pauli_from_transfer([0.0, a, a], format!("projdep:{a}"))
}

/// Complete dephasing along σ₁ followed by depolarizing with strength `b`:
/// transfer `(b, 0, 0)`.
pub fn dephase_then_depolarize(b: f64) -> Result<KrausChannel> {
    check_range("b", b, -1.0, 1.0)?;
    pauli_from_transfer([b, 0.0, 0.0], format!("dpd:{b}"))
}

/// `ρ ↦ Σ_i <b_i|ρ|b_i> η_i`, with Kraus operators `√μ |v><b_i|` from the
/// spectral decomposition of each `η_i`.
pub fn mp_channel(basis: &ComplexMatrix, etas: &[DensityMatrix]) -> Result<KrausChannel> {
    let d = check_basis(basis)?;
    if etas.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} prepared states for a {d}-outcome measurement",
            etas.len()
        )));
    }
    let d_out = etas[0].dim();
    if etas.iter().any(|e| e.dim() != d_out) {
        return Err(Error::DimensionMismatch(
            "prepared states of unequal dimension".into(),
        ));
    }
    let mut ops = Vec::new();
    for (i, eta) in etas.iter().enumerate() {
        let b = basis.column(i);
        let eig = eta.matrix().hermitian_eig()?;
        for (k, &mu) in eig.values.iter().enumerate() {
            if mu > KRAUS_DROP {
                let v = eig.vectors.column(k);
                ops.push(ComplexMatrix::outer(&v, &b).scale_re(mu.sqrt()));
            }
        }
    }
    let ch = KrausChannel::new(ops, format!("mp:{d}"))?;
    Ok(ch)
}

/// Measure in `{|0>, |1>}`, prepare `|0>` or `|+>`: Kraus `{|0><0|, |+><1|}`.
pub fn mp_std2() -> KrausChannel {
    let h = FRAC_1_SQRT_2;
    let k0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
    let k1 = ComplexMatrix::from_real(2, 2, &[0.0, h, 0.0, h]).unwrap();
    KrausChannel::trusted(vec![k0, k1], "mp:std2".into())
}

/// `ρ ↦ UρU†`.
pub fn unitary(u: &ComplexMatrix) -> Result<KrausChannel> {
    check_basis(u)?;
    Ok(KrausChannel::trusted(
        vec![u.clone()],
        format!("unitary:{}", u.rows()),
    ))
}

pub fn hadamard() -> ComplexMatrix {
    let h = FRAC_1_SQRT_2;
    ComplexMatrix::from_real(2, 2, &[h, h, h, -h]).unwrap()
}

/// MP-channel file layout: `{"basis": matrix (optional), "etas": [matrix..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpFile {
    #[serde(default)]
    pub basis: Option<ComplexMatrix>,
    pub etas: Vec<ComplexMatrix>,
}

/// Parses a channel spec such as `pd:0.5`, `pauli:0.4,0.3,0.2,0.1`, `iso:0.5,4`
/// or `mp:std2`. File arguments (`unitary:<file>`, `mp:<file>`) are read
/// relative to the working directory.
pub fn parse_channel_spec(text: &str) -> Result<KrausChannel> {
    let perr = |position: usize, message: String| Error::Parse { position, message };
    if text.is_empty() {
        return Err(perr(0, "empty channel spec".into()));
    }
    if let Some(p) = text.find(char::is_whitespace) {
        return Err(perr(p, "whitespace is not allowed in channel specs".into()));
    }
    let (name, arg, arg_pos) = match text.find(':') {
        Some(p) => (&text[..p], Some(&text[p + 1..]), p + 1),
        None => (text, None, text.len()),
    };
    let nums = |expected: usize| -> Result<Vec<f64>> {
        let arg =
            arg.ok_or_else(|| perr(arg_pos, format!("`{name}` needs {expected} parameter(s)")))?;
        let mut out = Vec::new();
        let mut pos = arg_pos;
        for tok in arg.split(',') {
            let x: f64 = tok
                .parse()
                .map_err(|_| perr(pos, format!("`{tok}` is not a decimal number")))?;
            if !x.is_finite() {
                return Err(perr(pos, format!("`{tok}` is not finite")));
            }
            out.push(x);
            pos += tok.len() + 1;
        }
        if out.len() != expected {
            return Err(perr(
                arg_pos,
                format!("`{name}` takes {expected} parameter(s), got {}", out.len()),
            ));
        }
        Ok(out)
    };
    let dim = |x: f64| -> Result<usize> {
        if x.fract() != 0.0 || !(1.0..=MAX_DIM as f64).contains(&x) {
            return Err(perr(
                arg_pos,
                format!("dimension {x} must be an integer in 1..={MAX_DIM}"),
            ));
        }
        Ok(x as usize)
    };
    let ch = match name {
        "id" => identity(dim(nums(1)?[0])?),
        "pauli" => {
            let v = nums(4)?;
            pauli_channel(PauliParams::new([v[0], v[1], v[2], v[3]])?)
        }
        "pd" => phase_damping(nums(1)?[0])?,
        "dep" => depolarizing(nums(1)?[0])?,
        "iso" => {
            let v = nums(2)?;
            isotropic(v[0], dim(v[1])?)?
        }
        "cd" => match arg {
            None => cd_computational(2),
            Some(_) => cd_computational(dim(nums(1)?[0])?),
        },
        "cdp" => completely_depolarizing(dim(nums(1)?[0])?),
        "projdep" => projecting_depolarizing(nums(1)?[0])?,
        "dpd" => dephase_then_depolarize(nums(1)?[0])?,
        "mp" => match arg {
            Some("std2") => mp_std2(),
            Some(path) if !path.is_empty() => mp_from_file(path)?,
            _ => return Err(perr(arg_pos, "`mp` needs `std2` or a file path".into())),
        },
        "unitary" => match arg {
            Some(path) if !path.is_empty() => {
                let u: ComplexMatrix = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                unitary(&u)?
            }
            _ => return Err(perr(arg_pos, "`unitary` needs a matrix file".into())),
        },
        _ => return Err(perr(0, format!("unknown channel family `{name}`"))),
    };
    Ok(ch.with_label(text))
}

fn mp_from_file(path: impl AsRef<Path>) -> Result<KrausChannel> {
    let file: MpFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let etas = file
        .etas
        .into_iter()
        .map(|m| {
            let d = m.rows();
            DensityMatrix::new(m, vec![d])
        })
        .collect::<Result<Vec<_>>>()?;
    let basis = file
        .basis
        .unwrap_or_else(|| ComplexMatrix::identity(etas.len()));
    mp_channel(&basis, &etas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_density;
    use crate::states::{from_bloch1, psi_family, to_bloch1, to_two_qubit_bloch};
    use proptest::prelude::*;

    fn rand_state(d: usize, seed: u64) -> DensityMatrix {
        let mut rng = stream_rng(seed, 99);
        DensityMatrix::new(random_density(d, d, &mut rng), vec![d]).unwrap()
    }

    fn all_families() -> Vec<KrausChannel> {
        vec![
            identity(3),
            pauli_channel(PauliParams::new([0.4, 0.3, 0.2, 0.1]).unwrap()),
            phase_damping(0.3).unwrap(),
            depolarizing(0.6).unwrap(),
            depolarizing(-1.0 / 3.0).unwrap(),
            isotropic(0.5, 3).unwrap(),
            isotropic(-1.0 / 15.0, 4).unwrap(),
            cd_computational(2),
            cd_computational(4),
            completely_depolarizing(3),
            projecting_depolarizing(0.5).unwrap(),
            dephase_then_depolarize(0.6).unwrap(),
            mp_std2(),
            unitary(&hadamard()).unwrap(),
        ]
    }

    #[test]
    fn validate_examples() {
        assert!(KrausChannel::new(vec![hadamard()], "h").is_ok());
        let half = vec![
            pauli(0).scale_re(FRAC_1_SQRT_2),
            pauli(3).scale_re(FRAC_1_SQRT_2),
        ];
        assert!(KrausChannel::new(half, "z").is_ok());
        let err = KrausChannel::new(vec![pauli(0), pauli(0)], "double").unwrap_err();
        match err {
            Error::NotTracePreserving(dev) => assert!((dev - 2f64.sqrt()).abs() < 1e-12),
            e => panic!("unexpected {e}"),
        }
        for ch in all_families() {
            assert!(ch.validate().is_ok(), "{}", ch.label());
        }
    }

    #[test]
    fn apply_examples() {
        let rho = rand_state(3, 1);
        assert!(
            identity(3)
                .apply(&rho)
                .unwrap()
                .matrix()
                .max_abs_diff(rho.matrix())
                < 1e-15
        );
        let q = rand_state(2, 2);
        let out = completely_depolarizing(2).apply(&q).unwrap();
        assert!(
            out.matrix()
                .max_abs_diff(&ComplexMatrix::identity(2).scale_re(0.5))
                < 1e-15
        );
        assert!(identity(2).apply(&rand_state(3, 0)).is_err());
    }

    #[test]
    fn phase_damping_pair_on_bell_state() {
        // independent oracle: dense Kraus sum over all 4 product operators
        let p: f64 = 0.36;
        let c = (1.0 - p).sqrt();
        let pd = phase_damping(p).unwrap();
        let out = pd.tensor(&pd).apply(&psi_family(0, 0)).unwrap();
        let b = to_two_qubit_bloch(&out).unwrap();
        let expected = [c * c, -c * c, 1.0];
        for i in 0..3 {
            assert!((b.t[i][i] - expected[i]).abs() < 1e-12);
        }
        let stepwise = pd
            .apply_on(&pd.apply_on(&psi_family(0, 0), 0).unwrap(), 1)
            .unwrap();
        assert!(stepwise.matrix().max_abs_diff(out.matrix()) < 1e-14);
    }

    #[test]
    fn apply_on_matches_embedded_channel() {
        let rho = rand_state(2, 3)
            .tensor(&rand_state(3, 4))
            .tensor(&rand_state(2, 5));
        let ch = isotropic(0.3, 3).unwrap();
        let out = ch.apply_on(&rho, 1).unwrap();
        let full = identity(2).tensor(&ch).tensor(&identity(2));
        assert!(
            out.matrix()
                .max_abs_diff(full.apply(&rho).unwrap().matrix())
                < 1e-14
        );
        assert_eq!(out.dims(), &[2, 3, 2]);
        assert!(ch.apply_on(&rho, 0).is_err());
    }

    #[test]
    fn tensor_examples() {
        assert!(identity(2)
            .tensor(&identity(3))
            .same_map(&identity(6), 1e-12));
        let cdcd = cd_computational(2).tensor(&cd_computational(2));
        assert!(cdcd.is_completely_decohering());
        assert!(cdcd.same_map(&cd_computational(4), 1e-12));
        let l = pauli_channel(PauliParams::new([0.4, 0.3, 0.2, 0.1]).unwrap());
        let m = pauli_channel(PauliParams::new([0.7, 0.1, 0.1, 0.1]).unwrap());
        let (a, b) = (
            l.transfer_coefficients().unwrap().a,
            m.transfer_coefficients().unwrap().a,
        );
        let lm = l.tensor(&m);
        for i in 1..4 {
            for j in 1..4 {
                let s = pauli(i).kron(&pauli(j));
                let out = lm.apply_matrix(&s).unwrap();
                assert!(out.max_abs_diff(&s.scale_re(a[i - 1] * b[j - 1])) < 1e-12);
            }
        }
    }

    #[test]
    fn family_transfer_coefficients() {
        let dep = depolarizing(0.37)
            .unwrap()
            .transfer_coefficients()
            .unwrap()
            .a;
        for x in dep {
            assert!((x - 0.37).abs() < 1e-12);
        }
        let deph = pauli_channel(PauliParams::new([0.5, 0.0, 0.0, 0.5]).unwrap());
        let a = deph.transfer_coefficients().unwrap().a;
        assert!(a
            .iter()
            .zip([0.0, 0.0, 1.0])
            .all(|(x, e)| (x - e).abs() < 1e-12));
        let a = pauli_channel(PauliParams::new([0.4, 0.3, 0.2, 0.1]).unwrap())
            .transfer_coefficients()
            .unwrap()
            .a;
        assert!(a
            .iter()
            .zip([0.4, 0.2, 0.0])
            .all(|(x, e)| (x - e).abs() < 1e-12));
        let p: f64 = 0.19;
        let a = phase_damping(p).unwrap().transfer_coefficients().unwrap().a;
        let c = (1.0 - p).sqrt();
        assert!(a
            .iter()
            .zip([c, c, 1.0])
            .all(|(x, e)| (x - e).abs() < 1e-12));
        let a = projecting_depolarizing(0.4)
            .unwrap()
            .transfer_coefficients()
            .unwrap()
            .a;
        assert!(a
            .iter()
            .zip([0.0, 0.4, 0.4])
            .all(|(x, e)| (x - e).abs() < 1e-12));
        let a = dephase_then_depolarize(0.6)
            .unwrap()
            .transfer_coefficients()
            .unwrap()
            .a;
        assert!(a
            .iter()
            .zip([0.6, 0.0, 0.0])
            .all(|(x, e)| (x - e).abs() < 1e-12));
        assert!(matches!(
            mp_std2().transfer_coefficients(),
            Err(Error::NonDiagonalTransfer(_))
        ));
    }

    #[test]
    fn projecting_depolarizing_projects_bloch_vectors() {
        let ch = projecting_depolarizing(0.45).unwrap();
        let r = [0.3, -0.5, 0.6];
        let out = ch.apply(&from_bloch1(r).unwrap()).unwrap();
        let b = to_bloch1(out.matrix());
        let e = [0.0, 0.45 * r[1], 0.45 * r[2]];
        assert!(b.iter().zip(e).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn range_errors() {
        assert!(projecting_depolarizing(0.8).is_err());
        assert!(dephase_then_depolarize(1.2).is_err());
        assert!(phase_damping(-0.1).is_err());
        assert!(depolarizing(-0.5).is_err());
        assert!(isotropic(1.1, 3).is_err());
        assert!(PauliParams::new([0.2, 0.5, 0.2, 0.1]).is_err());
        assert!(PauliParams::new([0.6, 0.3, 0.2, -0.1]).is_err());
        assert!(pauli_from_transfer([1.0, 1.0, -1.0], "bad").is_err());
    }

    #[test]
    fn isotropic_full_strength_is_identity() {
        for d in 2..5 {
            let ch = isotropic(1.0, d).unwrap();
            assert!(ch.same_map(&identity(d), 1e-12));
            let rho = rand_state(d, d as u64);
            assert!(ch.apply(&rho).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-12);
        }
        let rho = rand_state(3, 7);
        let out = isotropic(0.25, 3).unwrap().apply(&rho).unwrap();
        let expected = &rho.matrix().scale_re(0.25) + &ComplexMatrix::identity(3).scale_re(0.25);
        assert!(out.matrix().max_abs_diff(&expected) < 1e-12);
        assert_eq!(isotropic_parameter_of("iso:0.3,3"), Some(0.3));
    }

    fn isotropic_parameter_of(spec: &str) -> Option<f64> {
        parse_channel_spec(spec)
            .unwrap()
            .isotropic_parameter()
            .map(|a| (a * 1e9).round() / 1e9)
    }

    #[test]
    fn mp_std2_action() {
        let ch = mp_std2();
        let rho = rand_state(2, 11);
        let (p0, p1) = (rho.matrix()[(0, 0)].re, rho.matrix()[(1, 1)].re);
        let expected = &ComplexMatrix::from_diagonal(&[p0, 0.0])
            + &ComplexMatrix::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5])
                .unwrap()
                .scale_re(p1);
        assert!(ch.apply(&rho).unwrap().matrix().max_abs_diff(&expected) < 1e-12);
        let etas = [
            DensityMatrix::diagonal(&[1.0, 0.0], vec![2]).unwrap(),
            from_bloch1([1.0, 0.0, 0.0]).unwrap(),
        ];
        let built = mp_channel(&ComplexMatrix::identity(2), &etas).unwrap();
        assert!(built.same_map(&ch, 1e-12));
        assert!(!ch.is_unital());
    }

    #[test]
    fn structure_predicates() {
        assert!(mp_std2().is_measure_prepare());
        assert!(!mp_std2().is_completely_decohering());
        assert!(cd_computational(2).is_completely_decohering());
        let rotated = completely_decohering(&hadamard()).unwrap();
        assert!(rotated.is_completely_decohering());
        assert!(completely_depolarizing(2).is_measure_prepare());
        assert!(!identity(2).is_measure_prepare());
        assert!(!phase_damping(0.5).unwrap().is_measure_prepare());
        assert!(completely_depolarizing(3).is_completely_depolarizing());
        assert!(!depolarizing(0.1).unwrap().is_completely_depolarizing());
        assert!(unitary(&hadamard()).unwrap().is_unitary_channel());
        assert!(!mp_std2().is_unitary_channel());
        assert!(mp_std2().tensor(&cd_computational(2)).is_measure_prepare());
    }

    #[test]
    fn commutativity_preservation_examples() {
        assert!(
            cd_computational(2)
                .is_commutativity_preserving(200, 1)
                .preserving
        );
        assert!(
            cd_computational(3)
                .is_commutativity_preserving(200, 1)
                .preserving
        );
        let h = unitary(&hadamard()).unwrap();
        assert!(h.is_unital());
        assert!(h.is_commutativity_preserving(200, 1).preserving);
        assert!(
            depolarizing(0.3)
                .unwrap()
                .is_commutativity_preserving(200, 2)
                .preserving
        );
        let test = mp_std2().is_commutativity_preserving(200, 1);
        assert!(!test.preserving);
        let cx = test.counterexample.unwrap();
        assert!(cx.xi1.commutator(&cx.xi2).unwrap().frobenius_norm() < 1e-12);
        assert!(cx.commutator_norm > NONZERO_TOL);
        let pd = phase_damping(0.5).unwrap();
        assert!(pd.is_commutativity_preserving(200, 3).preserving);
        assert!(
            !pd.tensor(&pd)
                .is_commutativity_preserving(200, 3)
                .preserving
        );
    }

    #[test]
    fn choi_of_identity_is_unnormalised_bell_projector() {
        let j = identity(2).choi();
        let expected = psi_family(0, 0).matrix().scale_re(2.0);
        assert!(j.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn parser_examples() {
        assert!(parse_channel_spec("pd:0.5")
            .unwrap()
            .same_map(&phase_damping(0.5).unwrap(), 1e-15));
        let p = parse_channel_spec("pauli:0.4,0.3,0.2,0.1").unwrap();
        assert!(p.same_map(
            &pauli_channel(PauliParams::new([0.4, 0.3, 0.2, 0.1]).unwrap()),
            1e-15
        ));
        assert_eq!(p.label(), "pauli:0.4,0.3,0.2,0.1");
        assert!(parse_channel_spec("mp:std2")
            .unwrap()
            .same_map(&mp_std2(), 1e-15));
        assert_eq!(parse_channel_spec("cd").unwrap().d_in(), 2);
        assert_eq!(parse_channel_spec("cd:3").unwrap().d_in(), 3);
        assert_eq!(parse_channel_spec("cdp:4").unwrap().d_out(), 4);
        assert_eq!(parse_channel_spec("id:4").unwrap().d_in(), 4);
        assert!(parse_channel_spec("iso:0.5,3").is_ok());
        assert!(parse_channel_spec("projdep:0.4").is_ok());
        assert!(parse_channel_spec("dpd:0.6").is_ok());
        assert!(parse_channel_spec("dep:0.5").is_ok());
    }

    #[test]
    fn parser_errors_carry_positions() {
        let pos = |s: &str| match parse_channel_spec(s) {
            Err(Error::Parse { position, .. }) => position,
            other => panic!("{s}: expected parse error, got {other:?}"),
        };
        assert_eq!(pos("pauli:0.4,x,0.2,0.1"), 10);
        assert_eq!(pos("pd:abc"), 3);
        assert_eq!(pos("bogus:1"), 0);
        assert_eq!(pos("pd"), 2);
        assert_eq!(pos("pd: 0.5"), 3);
        assert_eq!(pos(""), 0);
        assert_eq!(pos("iso:0.5"), 4);
        assert_eq!(pos("cd:2.5"), 3);
        assert!(matches!(
            parse_channel_spec("pd:1.5"),
            Err(Error::ParameterOutOfRange(_))
        ));
        assert!(matches!(
            parse_channel_spec("projdep:0.8"),
            Err(Error::ParameterOutOfRange(_))
        ));
    }

    #[test]
    fn parser_reads_files() {
        let dir = tempfile::tempdir().unwrap();
        let upath = dir.path().join("h.json");
        std::fs::write(&upath, serde_json::to_string(&hadamard()).unwrap()).unwrap();
        let spec = format!("unitary:{}", upath.display());
        assert!(parse_channel_spec(&spec)
            .unwrap()
            .same_map(&unitary(&hadamard()).unwrap(), 1e-15));

        let mpath = dir.path().join("mp.json");
        let file = MpFile {
            basis: None,
            etas: vec![
                ComplexMatrix::from_diagonal(&[1.0, 0.0]),
                ComplexMatrix::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap(),
            ],
        };
        std::fs::write(&mpath, serde_json::to_string(&file).unwrap()).unwrap();
        let ch = parse_channel_spec(&format!("mp:{}", mpath.display())).unwrap();
        assert!(ch.same_map(&mp_std2(), 1e-12));
    }

    proptest! {
        #[test]
        fn pauli_transfer_formula(w in prop::array::uniform4(0.0f64..1.0)) {
            let mut l = w;
            let s: f64 = l.iter().sum::<f64>() + 1e-9;
            l.iter_mut().for_each(|x| *x /= s);
            l.sort_by(|a, b| b.total_cmp(a));
            let sum: f64 = l.iter().sum();
            l[0] += 1.0 - sum;
            let params = PauliParams::new(l).unwrap();
            let a = pauli_channel(params).transfer_coefficients().unwrap().a;
            for i in 0..3 {
                prop_assert!((a[i] - (2.0 * (l[0] + l[i + 1]) - 1.0)).abs() <= 1e-12);
            }
        }

        #[test]
        fn tensor_respects_application(seed in 0u64..500, which in 0usize..14, other in 0usize..14) {
            let fams = all_families();
            let (c1, c2) = (&fams[which], &fams[other]);
            let r1 = rand_state(c1.d_in(), seed);
            let r2 = rand_state(c2.d_in(), seed + 1);
            let lhs = c1.tensor(c2).apply(&r1.tensor(&r2)).unwrap();
            let rhs = c1.apply(&r1).unwrap().tensor(&c2.apply(&r2).unwrap());
            prop_assert!(lhs.matrix().max_abs_diff(rhs.matrix()) <= 1e-10);
        }

        #[test]
        fn decohering_is_idempotent(seed in 0u64..500, d in 2usize..5) {
            let mut rng = stream_rng(seed, 5);
            let basis = random_unitary(d, &mut rng);
            let cd = completely_decohering(&basis).unwrap();
            let rho = rand_state(d, seed);
            let once = cd.apply(&rho).unwrap();
            let twice = cd.apply(&once).unwrap();
            prop_assert!(once.matrix().max_abs_diff(twice.matrix()) <= 1e-12);
            prop_assert!(cd.then(&cd).unwrap().same_map(&cd, 1e-12));
        }

        #[test]
        fn outputs_are_valid_states(seed in 0u64..300, which in 0usize..14) {
            let ch = &all_families()[which];
            let rho = rand_state(ch.d_in(), seed);
            let out = ch.apply(&rho).unwrap();
            prop_assert!(DensityMatrix::new(out.into_matrix(), vec![ch.d_out()]).is_ok());
        }
    }
}
