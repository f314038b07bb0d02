//! Pauli-basis commutator algebra for pairs of two-qubit states, witness
//! pairs for super-activation, and a sampler of commuting pairs with
//! commuting marginals.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::KrausChannel;
use crate::error::{Error, Result};
use crate::matrix::{pauli, pauli2, ComplexMatrix};
use crate::sampling::{random_probabilities, random_unitary, stream_rng};
use crate::states::{psi_ket, two_qubit_from_bloch, DensityMatrix, TwoQubitBloch};

/// Tolerance for the commuting-pair conditions.
pub const CONSTRAINT_TOL: f64 = 1e-10;

type V3 = [f64; 3];

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Coordinates of `[ξ₁, ξ₂]` in the form
/// `(i/16)[Σ α_i σ_i⊗I + Σ β_i I⊗σ_i + Σ Γ_ij σ_i⊗σ_j]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlochCommutator {
    pub alpha: V3,
    pub beta: V3,
    pub gamma: [V3; 3],
}

impl BlochCommutator {
    /// Dense 4×4 operator described by the coordinates.
    pub fn to_operator(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(4, 4);
        for i in 0..3 {
            m = &m + &pauli2(i + 1, 0).scale_re(self.alpha[i]);
            m = &m + &pauli2(0, i + 1).scale_re(self.beta[i]);
            for j in 0..3 {
                m = &m + &pauli2(i + 1, j + 1).scale_re(self.gamma[i][j]);
            }
        }
        m.scale(Complex64::new(0.0, 1.0 / 16.0))
    }

    /// Frobenius norm of the commutator (Pauli products have norm 2).
    pub fn norm(&self) -> f64 {
        let sq: f64 = self
            .alpha
            .iter()
            .chain(&self.beta)
            .chain(self.gamma.iter().flatten())
            .map(|x| x * x)
            .sum();
        sq.sqrt() / 8.0
    }

    pub fn max_coefficient(&self) -> f64 {
        let flat: Vec<f64> = self
            .alpha
            .iter()
            .chain(&self.beta)
            .chain(self.gamma.iter().flatten())
            .copied()
            .collect();
        max_abs(&flat)
    }
}

/// `(α, β, Γ)` of `[ξ₁, ξ₂]` with
/// `α = 2(r¹×r² + Σ_j T¹_{·j}×T²_{·j})`, `β = 2(s¹×s² + Σ_i T¹_{i·}×T²_{i·})`,
/// `Γ_kj = 2[(r¹×T²_{·j} − r²×T¹_{·j})_k + (s¹×T²_{k·} − s²×T¹_{k·})_j]`.
pub fn bloch_commutator(x1: &TwoQubitBloch, x2: &TwoQubitBloch) -> BlochCommutator {
    let mut alpha = cross(x1.r, x2.r);
    for j in 0..3 {
        alpha = add(alpha, cross(x1.t_column(j), x2.t_column(j)));
    }
    let mut beta = cross(x1.s, x2.s);
    for i in 0..3 {
        beta = add(beta, cross(x1.t_row(i), x2.t_row(i)));
    }
    let mut gamma = [[0.0; 3]; 3];
    for j in 0..3 {
        let col = sub(cross(x1.r, x2.t_column(j)), cross(x2.r, x1.t_column(j)));
        for k in 0..3 {
            gamma[k][j] += col[k];
        }
    }
    for k in 0..3 {
        let row = sub(cross(x1.s, x2.t_row(k)), cross(x2.s, x1.t_row(k)));
        for j in 0..3 {
            gamma[k][j] += row[j];
        }
    }
    let scale = |v: V3| v.map(|x| 2.0 * x);
    BlochCommutator {
        alpha: scale(alpha),
        beta: scale(beta),
        gamma: gamma.map(scale),
    }
}

/// True when the pair commutes and so do both pairs of marginals:
/// `α = β = 0`, `Γ = 0`, `r¹×r² = 0`, `s¹×s² = 0`.
pub fn commuting_constraint_check(x1: &TwoQubitBloch, x2: &TwoQubitBloch) -> bool {
    let c = bloch_commutator(x1, x2);
    c.max_coefficient() <= CONSTRAINT_TOL
        && max_abs(&cross(x1.r, x2.r)) <= CONSTRAINT_TOL
        && max_abs(&cross(x1.s, x2.s)) <= CONSTRAINT_TOL
}

/// Named commuting pairs that local channels may fail to keep commuting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase")]
pub enum WitnessCase {
    /// `(|ψ00>, |ψ11>)`: a Bell state and its image under `I⊗H`.
    Bell,
    /// `r¹ = s¹ = (0,0,r)`, `r² = s² = (0,0,nr)`, `T¹ = T² = t·I`.
    Case1 { r: f64, n: f64, t: f64 },
    /// `s¹ = r² = (0,r,r)`, `r¹ = s² = 0`, `T¹ = (T²)ᵀ` with `T₂₁ = t`, `T₃₁ = −t`.
    Case2 { r: f64, t: f64 },
    /// The same pair as `Case2`, used against two different isotropic channels.
    Case3 { r: f64, t: f64 },
}

impl WitnessCase {
    pub fn case1() -> Self {
        WitnessCase::Case1 {
            r: 0.5,
            n: 0.3,
            t: 0.25,
        }
    }

    pub fn case2() -> Self {
        WitnessCase::Case2 { r: 0.4, t: 0.3 }
    }

    pub fn case3() -> Self {
        WitnessCase::Case3 { r: 0.4, t: 0.3 }
    }

    /// Parses `bell`, `case1`, `case2`, `case3` with optional comma-separated
    /// parameters (`r,n,t` for case1, `r,t` otherwise).
    pub fn parse(name: &str, params: Option<&str>) -> Result<Self> {
        let vals: Vec<f64> = match params {
            None | Some("") => Vec::new(),
            Some(p) => p
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad witness parameter `{s}`")))
                })
                .collect::<Result<_>>()?,
        };
        let want = |n: usize| -> Result<()> {
            if vals.len() != n {
                return Err(Error::Config(format!(
                    "`{name}` takes {n} parameters, got {}",
                    vals.len()
                )));
            }
            Ok(())
        };
        Ok(match (name, vals.is_empty()) {
            ("bell", true) => WitnessCase::Bell,
            ("case1", true) => Self::case1(),
            ("case2", true) => Self::case2(),
            ("case3", true) => Self::case3(),
            ("case1", false) => {
                want(3)?;
                WitnessCase::Case1 {
                    r: vals[0],
                    n: vals[1],
                    t: vals[2],
                }
            }
            ("case2", false) => {
                want(2)?;
                WitnessCase::Case2 {
                    r: vals[0],
                    t: vals[1],
                }
            }
            ("case3", false) => {
                want(2)?;
                WitnessCase::Case3 {
                    r: vals[0],
                    t: vals[1],
                }
            }
            _ => return Err(Error::Config(format!("unknown witness case `{name}`"))),
        })
    }

    /// Bloch coordinates of the pair (unchecked).
    pub fn bloch_pair(&self) -> (TwoQubitBloch, TwoQubitBloch) {
        match *self {
            WitnessCase::Bell => {
                let mut t1 = [[0.0; 3]; 3];
                t1[0][0] = 1.0;
                t1[1][1] = -1.0;
                t1[2][2] = 1.0;
                let mut t2 = [[0.0; 3]; 3];
                t2[0][2] = 1.0;
                t2[1][1] = 1.0;
                t2[2][0] = 1.0;
                (
                    TwoQubitBloch::new([0.0; 3], [0.0; 3], t1),
                    TwoQubitBloch::new([0.0; 3], [0.0; 3], t2),
                )
            }
            WitnessCase::Case1 { r, n, t } => {
                let diag = [[t, 0.0, 0.0], [0.0, t, 0.0], [0.0, 0.0, t]];
                let v1 = [0.0, 0.0, r];
                let v2 = [0.0, 0.0, n * r];
                (
                    TwoQubitBloch::new(v1, v1, diag),
                    TwoQubitBloch::new(v2, v2, diag),
                )
            }
            WitnessCase::Case2 { r, t } | WitnessCase::Case3 { r, t } => {
                let t1 = [[0.0, 0.0, 0.0], [t, 0.0, 0.0], [-t, 0.0, 0.0]];
                let t2 = [[0.0, t, -t], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
                (
                    TwoQubitBloch::new([0.0; 3], [0.0, r, r], t1),
                    TwoQubitBloch::new([0.0, r, r], [0.0; 3], t2),
                )
            }
        }
    }
}

/// The witness pair as validated states; fails if either matrix is not
/// positive for the chosen parameters.
pub fn theorem2_witness(case: WitnessCase) -> Result<(DensityMatrix, DensityMatrix)> {
    let (b1, b2) = case.bloch_pair();
    Ok((two_qubit_from_bloch(&b1)?, two_qubit_from_bloch(&b2)?))
}

/// Whether `Iso_a ⊗ Iso_b`, acting as `(r, s, T) ↦ (a r, b s, ab T)`, keeps
/// the pair commuting.
pub fn isotropic_pair_check(
    a: f64,
    b: f64,
    x1: &TwoQubitBloch,
    x2: &TwoQubitBloch,
) -> Result<bool> {
    if !commuting_constraint_check(x1, x2) {
        return Err(Error::Precondition(
            "pair violates the commuting-pair conditions".into(),
        ));
    }
    let (ta, tb) = ([a; 3], [b; 3]);
    let out = bloch_commutator(
        &x1.under_local_transfer(ta, tb),
        &x2.under_local_transfer(ta, tb),
    );
    Ok(out.max_coefficient() <= CONSTRAINT_TOL)
}

/// [`isotropic_pair_check`] with the same isotropic channel on both qubits.
pub fn isotropic_invariance_check(a: f64, x1: &TwoQubitBloch, x2: &TwoQubitBloch) -> Result<bool> {
    isotropic_pair_check(a, a, x1, x2)
}

/// `[Λ₁⊗Λ₂(ξ₁), Λ₁⊗Λ₂(ξ₂)]`.
pub fn output_commutator(
    c1: &KrausChannel,
    c2: &KrausChannel,
    xi1: &ComplexMatrix,
    xi2: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let both = c1.tensor(c2);
    both.apply_matrix(xi1)?.commutator(&both.apply_matrix(xi2)?)
}

/// `[ξ₁, M₂] − [ξ₂, M₁]` with `M_k = ξ_k^A ⊗ I/d + I/d ⊗ ξ_k^{A'}` for
/// states on `d × d`. Vanishes exactly when identical isotropic channels
/// keep the pair commuting.
pub fn commut1_residual(x1: &DensityMatrix, x2: &DensityMatrix) -> Result<ComplexMatrix> {
    let dims = x1.dims();
    if dims.len() != 2 || dims[0] != dims[1] || x2.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "residual needs two states on d x d, got {:?} and {:?}",
            dims,
            x2.dims()
        )));
    }
    let d = dims[0];
    let (m1, m2) = (x1.matrix(), x2.matrix());
    let comm = |a: &ComplexMatrix, b: &ComplexMatrix| a.commutator(b).map(|c| c.frobenius_norm());
    let (a1, a2) = (m1.partial_trace(dims, &[0])?, m2.partial_trace(dims, &[0])?);
    let (b1, b2) = (m1.partial_trace(dims, &[1])?, m2.partial_trace(dims, &[1])?);
    if comm(m1, m2)? > CONSTRAINT_TOL
        || comm(&a1, &a2)? > CONSTRAINT_TOL
        || comm(&b1, &b2)? > CONSTRAINT_TOL
    {
        return Err(Error::Precondition(
            "states or their marginals do not commute".into(),
        ));
    }
    let id = ComplexMatrix::identity(d).scale_re(1.0 / d as f64);
    let embed = |a: &ComplexMatrix, b: &ComplexMatrix| &a.kron(&id) + &id.kron(b);
    let (e1, e2) = (embed(&a1, &b1), embed(&a2, &b2));
    Ok(&m1.commutator(&e2)? - &m2.commutator(&e1)?)
}

/// Pair on two four-level systems (each a qubit pair) that commutes with
/// commuting marginals, yet whose residual is `∝ T₁T₂ (σ₃⊗σ₁)⊗(σ₂⊗σ₀)`:
/// `ξ₁ = [I + T₁ (σ₁σ₂)_A(σ₃σ₁)_{A'} + T₂ (σ₃σ₁)_A(σ₃σ₂)_{A'}]/16`,
/// `ξ₂ = [I + T₁ I_A(σ₁σ₂)_{A'} + T₂ (σ₂σ₃)_A(σ₁σ₁)_{A'}]/16`.
pub fn qudit_counterexample_pair(t1: f64, t2: f64) -> Result<(DensityMatrix, DensityMatrix)> {
    let p4 = |a: usize, b: usize, c: usize, e: usize| {
        ComplexMatrix::kron_all([&pauli(a), &pauli(b), &pauli(c), &pauli(e)])
    };
    let id = ComplexMatrix::identity(16);
    let xi1 = &(&id + &p4(1, 2, 3, 1).scale_re(t1)) + &p4(3, 1, 3, 2).scale_re(t2);
    let xi2 = &(&id + &p4(0, 0, 1, 2).scale_re(t1)) + &p4(2, 3, 1, 1).scale_re(t2);
    Ok((
        DensityMatrix::new(xi1.scale_re(1.0 / 16.0), vec![4, 4])?,
        DensityMatrix::new(xi2.scale_re(1.0 / 16.0), vec![4, 4])?,
    ))
}

/// Which construction produced a sampled pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairFamily {
    /// Both states diagonal in one product basis.
    ProductClassical,
    /// Case-1 or case-2 shape with random parameters, then a random local unitary.
    PerturbedWitness,
    /// Both states diagonal in a locally rotated Bell basis.
    RotatedBellDiagonal,
}

/// A sampled commuting pair.
#[derive(Clone, Debug)]
pub struct ConstrainedPair {
    pub xi1: DensityMatrix,
    pub xi2: DensityMatrix,
    pub family: PairFamily,
}

impl ConstrainedPair {
    pub fn bloch(&self) -> (TwoQubitBloch, TwoQubitBloch) {
        (
            TwoQubitBloch::from_operator(self.xi1.matrix()),
            TwoQubitBloch::from_operator(self.xi2.matrix()),
        )
    }
}

/// Seeded stream of two-qubit pairs satisfying [`commuting_constraint_check`].
/// The three families are drawn in turn; the sampler makes no claim to
/// reach every such pair.
pub struct ConstrainedPairSampler {
    seed: u64,
    index: u64,
}

impl ConstrainedPairSampler {
    pub fn new(seed: u64) -> Self {
        ConstrainedPairSampler { seed, index: 0 }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, family: PairFamily) -> Option<ConstrainedPair> {
        let (m1, m2) = match family {
            PairFamily::ProductClassical => {
                let u = random_unitary(2, rng).kron(&random_unitary(2, rng));
                let p = random_probabilities(4, rng);
                let q = random_probabilities(4, rng);
                (
                    conj(&u, &ComplexMatrix::from_diagonal(&p)),
                    conj(&u, &ComplexMatrix::from_diagonal(&q)),
                )
            }
            PairFamily::PerturbedWitness => {
                let case = if rng.gen_bool(0.5) {
                    WitnessCase::Case1 {
                        r: rng.gen_range(0.01..=0.3),
                        n: rng.gen_range(0.0..1.0),
                        t: rng.gen_range(0.01..=0.3),
                    }
                } else {
                    WitnessCase::Case2 {
                        r: rng.gen_range(0.01..=0.3),
                        t: rng.gen_range(0.01..=0.3),
                    }
                };
                let (b1, b2) = case.bloch_pair();
                let (b1, b2) = if rng.gen_bool(0.5) {
                    (b1.swapped(), b2.swapped())
                } else {
                    (b1, b2)
                };
                let u = random_unitary(2, rng).kron(&random_unitary(2, rng));
                (conj(&u, &b1.to_operator()), conj(&u, &b2.to_operator()))
            }
            PairFamily::RotatedBellDiagonal => {
                let kets = [psi_ket(0, 0), psi_ket(0, 1), psi_ket(1, 0), psi_ket(1, 1)];
                let basis = ComplexMatrix::from_columns(&kets).expect("4 kets");
                let u = &random_unitary(2, rng).kron(&random_unitary(2, rng)) * &basis;
                let p = random_probabilities(4, rng);
                let q = random_probabilities(4, rng);
                (
                    conj(&u, &ComplexMatrix::from_diagonal(&p)),
                    conj(&u, &ComplexMatrix::from_diagonal(&q)),
                )
            }
        };
        let xi1 = DensityMatrix::new(m1, vec![2, 2]).ok()?;
        let xi2 = DensityMatrix::new(m2, vec![2, 2]).ok()?;
        let pair = ConstrainedPair { xi1, xi2, family };
        let (b1, b2) = pair.bloch();
        commuting_constraint_check(&b1, &b2).then_some(pair)
    }
}

fn conj(u: &ComplexMatrix, m: &ComplexMatrix) -> ComplexMatrix {
    (&(u * m) * &u.adjoint()).hermitian_part()
}

impl Iterator for ConstrainedPairSampler {
    type Item = ConstrainedPair;

    fn next(&mut self) -> Option<ConstrainedPair> {
        const FAMILIES: [PairFamily; 3] = [
            PairFamily::ProductClassical,
            PairFamily::PerturbedWitness,
            PairFamily::RotatedBellDiagonal,
        ];
        let family = FAMILIES[(self.index % 3) as usize];
        let mut rng = stream_rng(self.seed, self.index);
        self.index += 1;
        loop {
            if let Some(pair) = self.draw(&mut rng, family) {
                return Some(pair);
            }
        }
    }
}

/// The first `count` pairs of [`ConstrainedPairSampler::new(seed)`].
pub fn constrained_pair_sampler(seed: u64, count: usize) -> Vec<ConstrainedPair> {
    ConstrainedPairSampler::new(seed).take(count).collect()
}
