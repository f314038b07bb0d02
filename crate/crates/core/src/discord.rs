//! Entropies and quantum discord over rank-one projective measurements.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{jacobi_eigenvalues_in_place, ComplexMatrix};
use crate::optimize::{argmin_first, nelder_mead, NmOptions};
use crate::sampling::{apply_givens_right, givens_param_count, random_unitary, stream_rng};
use crate::states::DensityMatrix;

/// Probability below which a measurement outcome is ignored.
pub const OUTCOME_CUTOFF: f64 = 1e-12;
/// Eigenvalues in `[−EIG_CLIP, 0)` are treated as zero.
pub const EIG_CLIP: f64 = 1e-9;

/// `−Σ λ log₂ λ` with `0 log 0 = 0`.
pub fn entropy_from_eigenvalues(eigs: &[f64]) -> f64 {
    -eigs
        .iter()
        .map(|&l| {
            if (-EIG_CLIP..0.0).contains(&l) {
                0.0
            } else {
                l
            }
        })
        .filter(|&l| l > 0.0)
        .map(|l| l * l.log2())
        .sum::<f64>()
}

pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_from_eigenvalues(&rho.eigenvalues())
}

/// Shannon entropy in bits.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    entropy_from_eigenvalues(p)
}

fn matrix_entropy(m: &ComplexMatrix) -> Result<f64> {
    Ok(entropy_from_eigenvalues(&m.eigvalsh()?))
}

/// Reorders a two-factor state so that the measured factor comes first.
fn measured_first(rho: &DensityMatrix, measured: usize) -> Result<DensityMatrix> {
    if rho.dims().len() != 2 || measured > 1 {
        return Err(Error::DimensionMismatch(format!(
            "discord needs a bipartite state and a measured side in {{0, 1}}, got dims {:?}, side {measured}",
            rho.dims()
        )));
    }
    if measured == 0 {
        Ok(rho.clone())
    } else {
        rho.permute(&[1, 0])
    }
}

/// Groups the listed subsystems into side A and the rest into side B,
/// returning a state with dims `[d_A, d_B]`.
pub fn bipartition(rho: &DensityMatrix, side_a: &[usize]) -> Result<DensityMatrix> {
    let n = rho.dims().len();
    if side_a.is_empty() || side_a.iter().any(|&k| k >= n) {
        return Err(Error::DimensionMismatch(format!(
            "bad side {side_a:?} for {n} subsystems"
        )));
    }
    let mut perm = side_a.to_vec();
    perm.extend((0..n).filter(|k| !side_a.contains(k)));
    let permuted = rho.permute(&perm)?;
    let d_a: usize = side_a.iter().map(|&k| rho.dims()[k]).product();
    let d_b = rho.dim() / d_a;
    permuted.regroup(vec![d_a, d_b])
}

/// `S(ρ) − S(ρ_A)` where A is factor `measured` of a bipartite state.
pub fn conditional_entropy(rho: &DensityMatrix, measured: usize) -> Result<f64> {
    let r = measured_first(rho, measured)?;
    let s_a = von_neumann_entropy(&r.partial_trace(&[0])?);
    Ok(von_neumann_entropy(&r) - s_a)
}

/// A POVM `{F_i}` on the measured subsystem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Measurement {
    elements: Vec<ComplexMatrix>,
}

impl Measurement {
    /// Checks `Σ F_i = I` (1e−10) and positivity of each element (1e−9).
    pub fn new(elements: Vec<ComplexMatrix>) -> Result<Self> {
        let d = elements
            .first()
            .map(|e| e.rows())
            .ok_or_else(|| Error::InvalidState("empty measurement".into()))?;
        let mut sum = ComplexMatrix::zeros(d, d);
        for e in &elements {
            if e.rows() != d || !e.is_square() {
                return Err(Error::DimensionMismatch(
                    "measurement elements of unequal shape".into(),
                ));
            }
            let min = e.eigvalsh()?.first().copied().unwrap_or(0.0);
            if min < -1e-9 {
                return Err(Error::InvalidState(format!(
                    "measurement element has eigenvalue {min:e}"
                )));
            }
            sum = &sum + e;
        }
        let dev = (&sum - &ComplexMatrix::identity(d)).frobenius_norm();
        if dev > 1e-10 {
            return Err(Error::InvalidState(format!(
                "measurement elements sum to I up to {dev:e}"
            )));
        }
        Ok(Measurement { elements })
    }

    /// Rank-one projectors onto the columns of a unitary.
    pub fn from_basis(u: &ComplexMatrix) -> Self {
        let elements = (0..u.cols())
            .map(|j| ComplexMatrix::projector(&u.column(j)).hermitian_part())
            .collect();
        Measurement { elements }
    }

    pub fn computational(d: usize) -> Self {
        Self::from_basis(&ComplexMatrix::identity(d))
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn dim(&self) -> usize {
        self.elements[0].rows()
    }
}

/// `Σ_i p_i S(ρ_{B|i})` for a measurement on factor `measured`.
pub fn measured_conditional_entropy(
    rho: &DensityMatrix,
    m: &Measurement,
    measured: usize,
) -> Result<f64> {
    let r = measured_first(rho, measured)?;
    let (d_a, d_b) = (r.dims()[0], r.dims()[1]);
    if m.dim() != d_a {
        return Err(Error::DimensionMismatch(format!(
            "measurement on {} levels for a side of dimension {d_a}",
            m.dim()
        )));
    }
    let id_b = ComplexMatrix::identity(d_b);
    let mut total = 0.0;
    for f in m.elements() {
        let cond = (&f.kron(&id_b) * r.matrix()).partial_trace(r.dims(), &[1])?;
        let p = cond.trace().re;
        if p <= OUTCOME_CUTOFF {
            continue;
        }
        total += p * matrix_entropy(&cond.hermitian_part().scale_re(1.0 / p))?;
    }
    Ok(total)
}

/// Optimiser settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscordConfig {
    /// Seeded random starting bases when the measured side has more than two levels.
    pub restarts: usize,
    pub seed: u64,
    /// Simplex iterations per refinement (multiplied by the parameter count
    /// above two levels).
    pub refine_iters: usize,
    /// Polar × azimuthal grid for a qubit measured side.
    pub grid: (usize, usize),
    pub xtol: f64,
}

impl Default for DiscordConfig {
    fn default() -> Self {
        DiscordConfig {
            restarts: 32,
            seed: 0,
            refine_iters: 200,
            grid: (24, 48),
            xtol: 1e-7,
        }
    }
}

/// Discord `δ_{B|A}` in bits. Restricted to rank-one projective
/// measurements, so the value is an upper bound on the POVM discord.
#[derive(Clone, Debug, Serialize)]
pub struct DiscordResult {
    pub value: f64,
    pub measured_entropy: f64,
    pub conditional_entropy: f64,
    pub optimal_measurement: Measurement,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Minimum of a basis-dependent objective found by [`minimize_over_bases`].
#[derive(Clone, Debug)]
pub struct BasisOptimum {
    pub value: f64,
    pub basis: ComplexMatrix,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Minimises `objective(U)` over unitaries `U` (measurement bases).
///
/// Qubit: deterministic (θ, φ) grid, then simplex refinement of the three
/// best grid points and of every warm start. Larger dimensions: simplex in
/// Givens angles around each starting basis (the identity, the warm starts,
/// then `cfg.restarts` Haar-random bases), re-centred up to three times.
/// Restart results are merged by minimum, ties to the lowest index.
pub fn minimize_over_bases<F>(
    d: usize,
    objective: F,
    cfg: &DiscordConfig,
    warm: &[ComplexMatrix],
) -> BasisOptimum
where
    F: Fn(&ComplexMatrix) -> f64 + Sync,
{
    if d == 1 {
        let u = ComplexMatrix::identity(1);
        return BasisOptimum {
            value: objective(&u),
            basis: u,
            restarts_used: 0,
            converged: true,
        };
    }
    if d == 2 {
        minimize_qubit(objective, cfg, warm)
    } else {
        minimize_qudit(d, objective, cfg, warm)
    }
}

fn qubit_basis(theta: f64, phi: f64) -> ComplexMatrix {
    let mut u = ComplexMatrix::identity(2);
    apply_givens_right(&mut u, &[theta, phi]);
    u
}

fn minimize_qubit<F>(objective: F, cfg: &DiscordConfig, warm: &[ComplexMatrix]) -> BasisOptimum
where
    F: Fn(&ComplexMatrix) -> f64 + Sync,
{
    let (nt, np) = (cfg.grid.0.max(2), cfg.grid.1.max(1));
    let dt = 0.5 * PI / (nt - 1) as f64;
    let dp = 2.0 * PI / np as f64;
    let mut grid: Vec<(f64, f64, f64)> = Vec::with_capacity(nt * np);
    for i in 0..nt {
        let theta = i as f64 * dt;
        // the poles do not depend on φ
        let phis = if i == 0 || i == nt - 1 { 1 } else { np };
        for j in 0..phis {
            let phi = j as f64 * dp;
            grid.push((objective(&qubit_basis(theta, phi)), theta, phi));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut starts: Vec<(f64, f64, f64)> = grid
        .iter()
        .take(3)
        .map(|&(_, t, p)| (t, p, dt.max(dp)))
        .collect();
    for w in warm {
        // column 0 = (cos θ, e^{iφ} sin θ) up to a global phase
        let c = w.column(0);
        let theta = c[1].norm().atan2(c[0].norm());
        let phi = c[1].arg() - c[0].arg();
        starts.push((theta, phi, 0.05));
    }
    let opts = |step: f64| NmOptions {
        max_iters: cfg.refine_iters,
        xtol: cfg.xtol,
        ftol: 1e-14,
        step,
    };
    let runs: Vec<_> = starts
        .iter()
        .map(|&(t, p, step)| {
            nelder_mead(
                |x| objective(&qubit_basis(x[0], x[1])),
                &[t, p],
                &opts(step),
            )
        })
        .collect();
    let values: Vec<f64> = runs.iter().map(|r| r.value).collect();
    let best = argmin_first(&values).expect("at least one start");
    let r = &runs[best];
    let (value, basis) = if grid[0].0 < r.value {
        (grid[0].0, qubit_basis(grid[0].1, grid[0].2))
    } else {
        (r.value, qubit_basis(r.x[0], r.x[1]))
    };
    BasisOptimum {
        value,
        basis,
        restarts_used: runs.len(),
        converged: r.converged,
    }
}

fn minimize_qudit<F>(
    d: usize,
    objective: F,
    cfg: &DiscordConfig,
    warm: &[ComplexMatrix],
) -> BasisOptimum
where
    F: Fn(&ComplexMatrix) -> f64 + Sync,
{
    let n = givens_param_count(d);
    let mut bases = vec![ComplexMatrix::identity(d)];
    bases.extend(warm.iter().cloned());
    bases.extend(
        (0..cfg.restarts).map(|k| random_unitary(d, &mut stream_rng(cfg.seed, k as u64 + 1))),
    );
    let opts = NmOptions {
        max_iters: cfg.refine_iters * n,
        xtol: cfg.xtol,
        ftol: 1e-13,
        step: 0.3,
    };
    let run = |u0: &ComplexMatrix| -> (f64, ComplexMatrix, bool) {
        let mut base = u0.clone();
        let mut value = objective(&base);
        let mut converged = false;
        for _ in 0..3 {
            let r = nelder_mead(
                |x| {
                    let mut u = base.clone();
                    apply_givens_right(&mut u, x);
                    objective(&u)
                },
                &vec![0.0; n],
                &opts,
            );
            converged = r.converged;
            if r.value >= value - 1e-12 {
                break;
            }
            apply_givens_right(&mut base, &r.x);
            value = r.value;
        }
        (value, base, converged)
    };
    let results: Vec<_> = bases.par_iter().map(run).collect();
    let values: Vec<f64> = results.iter().map(|r| r.0).collect();
    let best = argmin_first(&values).expect("at least one start");
    let (value, basis, converged) = results.into_iter().nth(best).unwrap();
    BasisOptimum {
        value,
        basis,
        restarts_used: bases.len(),
        converged,
    }
}

/// `p S(M/p)` in nats from the unnormalised conditional block `M`.
fn weighted_entropy_nats(block: &mut [Complex64], n: usize) -> f64 {
    let eigs = jacobi_eigenvalues_in_place(block, n);
    let p: f64 = eigs.iter().sum();
    if p <= OUTCOME_CUTOFF {
        return 0.0;
    }
    let mut h = p * p.ln();
    for l in eigs {
        if l > 0.0 {
            h -= l * l.ln();
        }
    }
    h
}

/// A bipartite state prepared for repeated evaluation of the measured
/// conditional entropy.
struct Prepared {
    d_a: usize,
    d_b: usize,
    data: Vec<Complex64>,
}

impl Prepared {
    fn new(r: &DensityMatrix) -> Self {
        Prepared {
            d_a: r.dims()[0],
            d_b: r.dims()[1],
            data: r.matrix().as_slice().to_vec(),
        }
    }

    /// Measured conditional entropy in bits for the basis given by the columns of `u`.
    fn measured_entropy(&self, u: &ComplexMatrix) -> f64 {
        let (da, db) = (self.d_a, self.d_b);
        let n = da * db;
        let mut block = vec![Complex64::new(0.0, 0.0); db * db];
        let mut total = 0.0;
        for k in 0..da {
            block.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for a in 0..da {
                let ua = u[(a, k)].conj();
                if ua.norm_sqr() == 0.0 {
                    continue;
                }
                for a2 in 0..da {
                    let coef = ua * u[(a2, k)];
                    if coef.norm_sqr() == 0.0 {
                        continue;
                    }
                    for b in 0..db {
                        let row = (a * db + b) * n + a2 * db;
                        for b2 in 0..db {
                            block[b * db + b2] += coef * self.data[row + b2];
                        }
                    }
                }
            }
            total += weighted_entropy_nats(&mut block, db);
        }
        total / LN_2
    }
}

/// Discord of a bipartite state with factor `measured` as the measured side.
pub fn discord(rho: &DensityMatrix, measured: usize, cfg: &DiscordConfig) -> Result<DiscordResult> {
    let r = measured_first(rho, measured)?;
    let cond = von_neumann_entropy(&r) - von_neumann_entropy(&r.partial_trace(&[0])?);
    let prepared = Prepared::new(&r);
    let opt = minimize_over_bases(prepared.d_a, |u| prepared.measured_entropy(u), cfg, &[]);
    Ok(DiscordResult {
        value: opt.value - cond,
        measured_entropy: opt.value,
        conditional_entropy: cond,
        optimal_measurement: Measurement::from_basis(&opt.basis),
        restarts_used: opt.restarts_used,
        converged: opt.converged,
    })
}

/// Output of a channel on a classical-quantum input with orthogonal flags:
/// `Σ_i q_i σ_i ⊗ |i><i|`, measured on the `σ` side. The conditional states
/// after any measurement are diagonal in the flag basis, so only Shannon
/// entropies are needed.
#[derive(Clone, Debug)]
pub struct FlaggedEnsemble {
    pub weights: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
}

impl FlaggedEnsemble {
    pub fn new(weights: Vec<f64>, states: Vec<ComplexMatrix>) -> Result<Self> {
        if weights.len() != states.len() || weights.is_empty() {
            return Err(Error::DimensionMismatch(
                "one state per weight required".into(),
            ));
        }
        let d = states[0].rows();
        if states.iter().any(|s| s.rows() != d || !s.is_square()) {
            return Err(Error::DimensionMismatch(
                "states of unequal dimension".into(),
            ));
        }
        Ok(FlaggedEnsemble { weights, states })
    }

    pub fn dim(&self) -> usize {
        self.states[0].rows()
    }

    /// `S(ρ) − S(ρ_A) = H(q) + Σ q_i S(σ_i) − S(Σ q_i σ_i)`.
    pub fn conditional_entropy(&self) -> f64 {
        let d = self.dim();
        let mut avg = ComplexMatrix::zeros(d, d);
        let mut s = shannon_entropy(&self.weights);
        for (q, sigma) in self.weights.iter().zip(&self.states) {
            if *q <= 0.0 {
                continue;
            }
            s += q * entropy_from_eigenvalues(&hot_eigs(sigma));
            avg = &avg + &sigma.scale_re(*q);
        }
        s - entropy_from_eigenvalues(&hot_eigs(&avg))
    }

    /// `Σ_k p_k H(i | k)` in bits for the basis given by the columns of `u`.
    pub fn measured_entropy(&self, u: &ComplexMatrix) -> f64 {
        let d = self.dim();
        let mut total = 0.0;
        for k in 0..d {
            let col = u.column(k);
            let mut p = 0.0;
            let mut h = 0.0;
            for (q, sigma) in self.weights.iter().zip(&self.states) {
                if *q <= 0.0 {
                    continue;
                }
                let mut x = Complex64::new(0.0, 0.0);
                for a in 0..d {
                    let ca = col[a].conj();
                    for b in 0..d {
                        x += ca * sigma[(a, b)] * col[b];
                    }
                }
                let x = q * x.re;
                if x > 0.0 {
                    p += x;
                    h -= x * x.ln();
                }
            }
            if p > OUTCOME_CUTOFF {
                total += h + p * p.ln();
            }
        }
        total / LN_2
    }

    pub fn discord(&self, cfg: &DiscordConfig, warm: &[ComplexMatrix]) -> BasisOptimum {
        let cond = self.conditional_entropy();
        let mut opt = minimize_over_bases(self.dim(), |u| self.measured_entropy(u), cfg, warm);
        opt.value -= cond;
        opt
    }

    /// The full state `Σ_i q_i σ_i ⊗ |i><i|` with dims `[d, n]`.
    pub fn to_state(&self) -> DensityMatrix {
        let n = self.weights.len();
        let d = self.dim();
        let mut m = ComplexMatrix::zeros(d * n, d * n);
        for (i, (q, sigma)) in self.weights.iter().zip(&self.states).enumerate() {
            let mut flag = vec![0.0; n];
            flag[i] = 1.0;
            m = &m
                + &sigma
                    .kron(&ComplexMatrix::from_diagonal(&flag))
                    .scale_re(*q);
        }
        DensityMatrix::from_trusted(m, vec![d, n])
    }
}

fn hot_eigs(m: &ComplexMatrix) -> Vec<f64> {
    let mut buf = m.hermitian_part().as_slice().to_vec();
    jacobi_eigenvalues_in_place(&mut buf, m.rows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_density, random_unitary};
    use crate::states::{cq_build, product_ket, psi_family, CQState};
    use proptest::prelude::*;

    fn fast() -> DiscordConfig {
        DiscordConfig {
            restarts: 4,
            ..DiscordConfig::default()
        }
    }

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn entropy_examples() {
        let pure = DensityMatrix::from_pure(&[c(0.6), c(0.8)], vec![2]).unwrap();
        assert!(von_neumann_entropy(&pure).abs() < 1e-12);
        assert!(
            (von_neumann_entropy(&DensityMatrix::maximally_mixed(vec![2])) - 1.0).abs() < 1e-12
        );
        assert!(
            (von_neumann_entropy(&DensityMatrix::maximally_mixed(vec![2, 2])) - 2.0).abs() < 1e-12
        );
        assert_eq!(entropy_from_eigenvalues(&[1.0, -5e-10]), 0.0);
    }

    #[test]
    fn conditional_entropy_examples() {
        assert!((conditional_entropy(&psi_family(0, 0), 0).unwrap() + 1.0).abs() < 1e-12);
        let mut rng = stream_rng(2, 0);
        let ra = DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap();
        let rb = DensityMatrix::new(random_density(3, 3, &mut rng), vec![3]).unwrap();
        let prod = ra.tensor(&rb);
        assert!((conditional_entropy(&prod, 0).unwrap() - von_neumann_entropy(&rb)).abs() < 1e-10);
        assert!((conditional_entropy(&prod, 1).unwrap() - von_neumann_entropy(&ra)).abs() < 1e-10);
        // CQ block-diagonal oracle
        let q = [0.25, 0.75];
        let conds = [
            DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap(),
            DensityMatrix::new(random_density(2, 1, &mut rng), vec![2]).unwrap(),
        ];
        let cq = CQState::new(
            q.to_vec(),
            vec![product_ket("+").unwrap(), product_ket("-").unwrap()],
            conds.to_vec(),
        )
        .unwrap();
        let expected: f64 = q
            .iter()
            .zip(&conds)
            .map(|(p, r)| p * von_neumann_entropy(r))
            .sum();
        assert!((conditional_entropy(&cq_build(&cq), 0).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn measured_entropy_examples() {
        let bell = psi_family(0, 0);
        assert!(
            measured_conditional_entropy(&bell, &Measurement::computational(2), 0)
                .unwrap()
                .abs()
                < 1e-12
        );
        let h = crate::channels::hadamard();
        assert!(
            measured_conditional_entropy(&bell, &Measurement::from_basis(&h), 0)
                .unwrap()
                .abs()
                < 1e-12
        );
        let mut rng = stream_rng(8, 0);
        let ra = DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap();
        let rb = DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap();
        let m = Measurement::from_basis(&random_unitary(2, &mut rng));
        let got = measured_conditional_entropy(&ra.tensor(&rb), &m, 0).unwrap();
        assert!((got - von_neumann_entropy(&rb)).abs() < 1e-10);
    }

    #[test]
    fn prepared_matches_generic_measured_entropy() {
        let mut rng = stream_rng(3, 0);
        for (da, db) in [(2, 2), (2, 3), (3, 2), (4, 4)] {
            let rho = DensityMatrix::new(random_density(da * db, da * db, &mut rng), vec![da, db])
                .unwrap();
            let u = random_unitary(da, &mut rng);
            let fast = Prepared::new(&rho).measured_entropy(&u);
            let slow = measured_conditional_entropy(&rho, &Measurement::from_basis(&u), 0).unwrap();
            assert!((fast - slow).abs() < 1e-10, "{da}x{db}");
        }
    }

    #[test]
    fn measurement_validation() {
        assert!(Measurement::new(vec![ComplexMatrix::identity(2)]).is_ok());
        assert!(
            Measurement::new(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2)]).is_err()
        );
        let neg = ComplexMatrix::from_diagonal(&[1.5, 1.0]);
        let rest = ComplexMatrix::from_diagonal(&[-0.5, 0.0]);
        assert!(Measurement::new(vec![neg, rest]).is_err());
        let half = ComplexMatrix::identity(2).scale_re(0.5);
        assert!(Measurement::new(vec![half.clone(), half]).is_ok());
    }

    #[test]
    fn bell_discord_is_one() {
        let r = discord(&psi_family(0, 0), 0, &fast()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-6, "{}", r.value);
        assert!(r.converged);
    }

    #[test]
    fn cq_states_have_zero_discord() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..5 {
            let u = random_unitary(2, &mut rng);
            let cq = CQState::new(
                vec![0.3, 0.7],
                vec![u.column(0), u.column(1)],
                vec![
                    DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap(),
                    DensityMatrix::new(random_density(2, 1, &mut rng), vec![2]).unwrap(),
                ],
            )
            .unwrap();
            let v = discord(&cq_build(&cq), 0, &fast()).unwrap().value;
            assert!(v.abs() <= 1e-6, "{v}");
        }
        let u = random_unitary(4, &mut rng);
        let cq = CQState::new(
            vec![0.1, 0.2, 0.3, 0.4],
            (0..4).map(|k| u.column(k)).collect(),
            (0..4)
                .map(|_| DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap())
                .collect(),
        )
        .unwrap();
        let v = discord(&cq_build(&cq), 0, &fast()).unwrap().value;
        assert!(v.abs() <= 1e-6, "{v}");
    }

    #[test]
    fn mp_output_discord_matches_grid() {
        // ½|0><0|⊗|0><0| + ½|+><+|⊗|1><1|
        let zero = ComplexMatrix::from_diagonal(&[1.0, 0.0]);
        let plus = ComplexMatrix::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let ens = FlaggedEnsemble::new(vec![0.5, 0.5], vec![zero, plus]).unwrap();
        let rho = ens.to_state();
        let r = discord(&rho, 0, &DiscordConfig::default()).unwrap();
        let mut grid = f64::INFINITY;
        let prep = Prepared::new(&rho);
        for i in 0..=400 {
            let polar = PI * i as f64 / 400.0;
            for j in 0..200 {
                let az = 2.0 * PI * j as f64 / 200.0;
                grid = grid.min(prep.measured_entropy(&qubit_basis(polar / 2.0, az)));
            }
        }
        let cond = conditional_entropy(&rho, 0).unwrap();
        assert!((r.value - (grid - cond)).abs() < 1e-4);
        assert!(r.value > 0.0 && r.value < 1.0);
        let flagged = ens.discord(&DiscordConfig::default(), &[]);
        assert!((flagged.value - r.value).abs() < 1e-9);
    }

    #[test]
    fn flagged_matches_generic() {
        let mut rng = stream_rng(12, 0);
        for d in [2usize, 3, 4] {
            let q = crate::sampling::random_probabilities(d, &mut rng);
            let states: Vec<_> = (0..d)
                .map(|_| random_density(d, 1 + d / 2, &mut rng))
                .collect();
            let ens = FlaggedEnsemble::new(q, states).unwrap();
            let rho = ens.to_state();
            assert!(
                (ens.conditional_entropy() - conditional_entropy(&rho, 0).unwrap()).abs() < 1e-10
            );
            let u = random_unitary(d, &mut rng);
            let slow = measured_conditional_entropy(&rho, &Measurement::from_basis(&u), 0).unwrap();
            assert!((ens.measured_entropy(&u) - slow).abs() < 1e-10);
        }
    }

    #[test]
    fn bipartition_groups_subsystems() {
        let a = psi_family(0, 0);
        let b = psi_family(1, 1);
        // A1 B1 A2 B2 → (A1 A2)(B1 B2)
        let joint = a.tensor(&b).permute(&[0, 2, 1, 3]).unwrap();
        let grouped = bipartition(&joint, &[0, 1]).unwrap();
        assert_eq!(grouped.dims(), &[4, 4]);
        let back = bipartition(&a.tensor(&b), &[0, 2]).unwrap();
        assert!(back.matrix().max_abs_diff(joint.matrix()) < 1e-15);
    }

    #[test]
    fn measured_side_one() {
        let zero = ComplexMatrix::from_diagonal(&[1.0, 0.0]);
        let plus = ComplexMatrix::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let rho = FlaggedEnsemble::new(vec![0.5, 0.5], vec![zero, plus])
            .unwrap()
            .to_state();
        let swapped = rho.permute(&[1, 0]).unwrap();
        let a = discord(&rho, 0, &fast()).unwrap().value;
        let b = discord(&swapped, 1, &fast()).unwrap().value;
        assert!((a - b).abs() < 1e-9);
        // the flag side is classical
        assert!(discord(&rho, 1, &fast()).unwrap().value.abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn discord_is_nonnegative_and_product_states_vanish(seed in 0u64..1000) {
            let mut rng = stream_rng(seed, 0);
            let rho = DensityMatrix::new(random_density(4, 4, &mut rng), vec![2, 2]).unwrap();
            prop_assert!(discord(&rho, 0, &fast()).unwrap().value >= -1e-6);
            let ra = DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap();
            let rb = DensityMatrix::new(random_density(2, 2, &mut rng), vec![2]).unwrap();
            prop_assert!(discord(&ra.tensor(&rb), 0, &fast()).unwrap().value.abs() <= 1e-6);
        }

        #[test]
        fn local_unitary_invariance(seed in 0u64..1000) {
            let mut rng = stream_rng(seed, 1);
            let rho = DensityMatrix::new(random_density(4, 2, &mut rng), vec![2, 2]).unwrap();
            let u = random_unitary(2, &mut rng).kron(&random_unitary(2, &mut rng));
            let a = discord(&rho, 0, &fast()).unwrap().value;
            let b = discord(&rho.conjugate(&u).unwrap(), 0, &fast()).unwrap().value;
            prop_assert!((a - b).abs() <= 2e-4);
        }

        #[test]
        fn channel_on_unmeasured_side_does_not_increase_discord(seed in 0u64..1000, a in 0.0f64..1.0) {
            let mut rng = stream_rng(seed, 2);
            let rho = DensityMatrix::new(random_density(4, 3, &mut rng), vec![2, 2]).unwrap();
            let ch = crate::channels::depolarizing(a).unwrap();
            let before = discord(&rho, 0, &fast()).unwrap().value;
            let after = discord(&ch.apply_on(&rho, 1).unwrap(), 0, &fast()).unwrap().value;
            prop_assert!(after <= before + 2e-4);
        }
    }
}
