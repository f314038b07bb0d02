//! Quantum-correlating power (QCP) estimation, super-activation witnesses
//! and the verification reports built on them.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{self, KrausChannel, PauliParams, NONZERO_TOL};
use crate::commutators::{
    bloch_commutator, commuting_constraint_check, constrained_pair_sampler, WitnessCase,
    CONSTRAINT_TOL,
};
use crate::discord::{discord, DiscordConfig, FlaggedEnsemble};
use crate::error::{Error, Result};
use crate::matrix::{pauli2, ComplexMatrix};
use crate::optimize::{argmax_first, nelder_mead, NmOptions};
use crate::sampling::{apply_givens_right, givens_param_count, random_unitary, stream_rng};
use crate::states::{phi_ket, psi_ket, qubit_ket, CQState, CqReport, DensityMatrix, TwoQubitBloch};

/// Largest output-times-flag dimension handled by the estimator.
pub const MAX_TOTAL_DIM: usize = 16;

/// Settings for [`qcp_estimate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcpConfig {
    /// Number of ensemble terms; defaults to the channel input dimension.
    pub n_terms: Option<usize>,
    /// Random starting inputs in addition to the computational-basis start.
    pub restarts: usize,
    pub seed: u64,
    /// Simplex iterations per outer parameter.
    pub outer_iters: usize,
    /// Discord settings inside the outer loop.
    pub inner: DiscordConfig,
    /// Discord settings for the final re-evaluation of the best inputs.
    pub final_discord: DiscordConfig,
    /// How many of the best inputs are re-evaluated.
    pub candidates: usize,
}

impl Default for QcpConfig {
    fn default() -> Self {
        QcpConfig {
            n_terms: None,
            restarts: 6,
            seed: 0,
            outer_iters: 120,
            inner: DiscordConfig {
                restarts: 0,
                seed: 0,
                refine_iters: 40,
                grid: (10, 20),
                xtol: 1e-6,
            },
            final_discord: DiscordConfig::default(),
            candidates: 3,
        }
    }
}

impl QcpConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.inner.seed = seed;
        self.final_discord.seed = seed;
        self
    }
}

/// A classical-quantum input with orthogonal flags: weights and the basis
/// whose first `weights.len()` columns carry them.
#[derive(Clone, Debug)]
pub struct InputParams {
    pub weights: Vec<f64>,
    pub basis: ComplexMatrix,
}

impl InputParams {
    /// Input for `Λ₁ ⊗ Λ₂` built from inputs of the two factors.
    pub fn product(a: &InputParams, b: &InputParams) -> InputParams {
        let weights = a
            .weights
            .iter()
            .flat_map(|x| b.weights.iter().map(move |y| x * y))
            .collect();
        // Column (i, j) of U₁⊗U₂ is u_i ⊗ v_j, so the leading n₁n₂ columns are
        // not the product pairs unless n equals the dimension; pick them.
        let (d1, d2) = (a.basis.rows(), b.basis.rows());
        let full = a.basis.kron(&b.basis);
        let mut cols: Vec<Vec<Complex64>> = Vec::new();
        for i in 0..a.weights.len() {
            for j in 0..b.weights.len() {
                cols.push(full.column(i * d2 + j));
            }
        }
        for i in 0..d1 {
            for j in 0..d2 {
                if i >= a.weights.len() || j >= b.weights.len() {
                    cols.push(full.column(i * d2 + j));
                }
            }
        }
        InputParams {
            weights,
            basis: ComplexMatrix::from_columns(&cols).expect("square"),
        }
    }

    /// The input state `Σ q_i |u_i><u_i| ⊗ |i><i|`.
    pub fn to_cq(&self) -> CQState {
        let n = self.weights.len();
        let flags = (0..n)
            .map(|i| {
                let mut p = vec![0.0; n];
                p[i] = 1.0;
                DensityMatrix::from_trusted(ComplexMatrix::from_diagonal(&p), vec![n])
            })
            .collect();
        let basis = (0..n).map(|i| self.basis.column(i)).collect();
        CQState::new(self.weights.clone(), basis, flags).expect("validated by construction")
    }
}

/// `Σ q_i Λ(|u_i><u_i|) ⊗ |i><i|` as a flagged ensemble.
pub fn flagged_output(c: &KrausChannel, input: &InputParams) -> FlaggedEnsemble {
    let states = (0..input.weights.len())
        .map(|i| {
            c.apply_unchecked(&ComplexMatrix::projector(&input.basis.column(i)))
                .hermitian_part()
        })
        .collect();
    FlaggedEnsemble::new(input.weights.clone(), states).expect("consistent shapes")
}

/// Discord of the channel output for a given input, measured on the channel side.
pub fn output_discord(c: &KrausChannel, input: &InputParams, cfg: &DiscordConfig) -> f64 {
    flagged_output(c, input).discord(cfg, &[]).value
}

/// Estimated QCP with the input that attains it. The value is a lower bound
/// on the maximisation over inputs and, through the projective-measurement
/// restriction, an upper bound on each discord it maximises.
#[derive(Clone, Debug)]
pub struct QcpEstimate {
    pub value: f64,
    pub optimal_input: CQState,
    pub input: InputParams,
    pub restarts: usize,
    pub converged: bool,
}

#[derive(Serialize)]
struct QcpEstimateJson<'a> {
    value: f64,
    restarts: usize,
    converged: bool,
    semantics: &'static str,
    optimal_input: CqReport,
    #[serde(skip)]
    _p: std::marker::PhantomData<&'a ()>,
}

pub const QCP_SEMANTICS: &str =
    "lower bound over inputs (finite restarts); discord evaluated over rank-one projective measurements";

impl Serialize for QcpEstimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        QcpEstimateJson {
            value: self.value,
            restarts: self.restarts,
            converged: self.converged,
            semantics: QCP_SEMANTICS,
            optimal_input: CqReport::from(&self.optimal_input),
            _p: std::marker::PhantomData,
        }
        .serialize(s)
    }
}

/// Maximises the output discord over classical-quantum inputs
/// `Σ q_i |u_i><u_i| ⊗ |i><i|` with orthogonal flags.
pub fn qcp_estimate(c: &KrausChannel, cfg: &QcpConfig) -> Result<QcpEstimate> {
    qcp_estimate_seeded(c, cfg, &[])
}

/// [`qcp_estimate`] with extra starting inputs tried before the random ones.
pub fn qcp_estimate_seeded(
    c: &KrausChannel,
    cfg: &QcpConfig,
    seeds: &[InputParams],
) -> Result<QcpEstimate> {
    let d = c.d_in();
    let n = cfg.n_terms.unwrap_or(d);
    if n == 0 || n > d {
        return Err(Error::ParameterOutOfRange(format!(
            "n_terms = {n} must lie in 1..={d}"
        )));
    }
    if c.d_out() * n > MAX_TOTAL_DIM {
        return Err(Error::DimensionOverflow(c.d_out() * n, MAX_TOTAL_DIM));
    }
    let mut starts: Vec<InputParams> = vec![InputParams {
        weights: vec![1.0 / n as f64; n],
        basis: ComplexMatrix::identity(d),
    }];
    for s in seeds {
        if s.weights.len() != n || s.basis.rows() != d {
            return Err(Error::DimensionMismatch(
                "seed input does not match the channel".into(),
            ));
        }
        starts.push(s.clone());
    }
    for k in 0..cfg.restarts {
        let mut rng = stream_rng(cfg.seed, 1000 + k as u64);
        let basis = random_unitary(d, &mut rng);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        starts.push(InputParams {
            weights: raw.iter().map(|x| x / total).collect(),
            basis,
        });
    }

    let n_angles = givens_param_count(d);
    let opts = NmOptions {
        max_iters: cfg.outer_iters * (n + n_angles),
        xtol: 1e-6,
        ftol: 1e-10,
        step: 0.25,
    };
    let run = |start: &InputParams| -> (f64, InputParams, bool) {
        let mut base = start.basis.clone();
        let mut x0: Vec<f64> = start.weights.iter().map(|w| w.sqrt()).collect();
        x0.extend(std::iter::repeat_n(0.0, n_angles));
        let mut warm = ComplexMatrix::identity(c.d_out());
        let mut best = (f64::NEG_INFINITY, start.clone(), false);
        for _round in 0..2 {
            let r = nelder_mead(
                |x| {
                    let input = decode(x, n, &base);
                    let opt =
                        flagged_output(c, &input).discord(&cfg.inner, std::slice::from_ref(&warm));
                    warm = opt.basis;
                    -opt.value
                },
                &x0,
                &opts,
            );
            let input = decode(&r.x, n, &base);
            if -r.value <= best.0 + 1e-9 {
                best.2 = best.2 || r.converged;
                break;
            }
            best = (-r.value, input.clone(), r.converged);
            base = input.basis.clone();
            x0 = input.weights.iter().map(|w| w.sqrt()).collect();
            x0.extend(std::iter::repeat_n(0.0, n_angles));
        }
        best
    };
    let runs: Vec<_> = starts.par_iter().map(run).collect();

    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| runs[b].0.total_cmp(&runs[a].0).then(a.cmp(&b)));
    let finals: Vec<(f64, usize)> = order
        .iter()
        .take(cfg.candidates.max(1))
        .map(|&k| (output_discord(c, &runs[k].1, &cfg.final_discord), k))
        .collect();
    let values: Vec<f64> = finals.iter().map(|f| f.0).collect();
    let (value, k) = finals[argmax_first(&values).expect("at least one candidate")];
    let input = runs[k].1.clone();
    Ok(QcpEstimate {
        value,
        optimal_input: input.to_cq(),
        input,
        restarts: runs.len(),
        converged: runs[k].2,
    })
}

fn decode(x: &[f64], n: usize, base: &ComplexMatrix) -> InputParams {
    let sq: Vec<f64> = x[..n].iter().map(|v| v * v).collect();
    let total: f64 = sq.iter().sum();
    let weights = if total > 1e-300 {
        sq.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let mut basis = base.clone();
    apply_givens_right(&mut basis, &x[n..]);
    InputParams { weights, basis }
}

/// Where a witness pair came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessStrategy {
    /// `|a>⊗|b>` versus `|a'>⊗|b⊥>` from a menu of pure states.
    Product,
    /// Pairs of orthogonal maximally entangled two-qubit states.
    Bell,
    /// The case-1/2/3 Bloch pairs under axis permutations, sign changes and swaps.
    Bloch,
    /// Pairs from the constrained sampler.
    Sampler,
    All,
}

impl WitnessStrategy {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "product" => WitnessStrategy::Product,
            "bell" => WitnessStrategy::Bell,
            "bloch" => WitnessStrategy::Bloch,
            "sampler" => WitnessStrategy::Sampler,
            "all" => WitnessStrategy::All,
            _ => return Err(Error::Config(format!("unknown witness strategy `{s}`"))),
        })
    }
}

/// Settings for [`superactivation_witness`].
#[derive(Clone, Copy, Debug)]
pub struct WitnessConfig {
    pub seed: u64,
    /// Pairs drawn by the sampler strategy.
    pub trials: usize,
    /// Trials of the zero-QCP precondition check.
    pub cp_trials: usize,
    pub discord: DiscordConfig,
    /// Compute the output discord of the found witness.
    pub with_discord: bool,
    /// Commutator norms at or below this count as zero.
    pub nonzero_tol: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig {
            seed: 0,
            trials: 1000,
            cp_trials: 200,
            discord: DiscordConfig::default(),
            with_discord: true,
            nonzero_tol: NONZERO_TOL,
        }
    }
}

/// Commuting inputs whose outputs under `Λ₁⊗Λ₂` do not commute.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub strategy: WitnessStrategy,
    pub description: String,
    pub xi1: DensityMatrix,
    pub xi2: DensityMatrix,
    pub commutator_norm: f64,
    /// Whether the marginals of the pair commute (no pairwise correlation induced).
    pub marginals_commute: bool,
    /// Discord of `½ Λ(ξ₁)⊗|0><0| + ½ Λ(ξ₂)⊗|1><1|`, measured on the channel side.
    pub output_discord: Option<f64>,
}

struct Candidate {
    strategy: WitnessStrategy,
    description: String,
    xi1: ComplexMatrix,
    xi2: ComplexMatrix,
    norm: f64,
}

fn pure_menu(d: usize) -> Vec<(String, Vec<Complex64>)> {
    if d == 2 {
        return "01+-rl"
            .chars()
            .map(|c| (c.to_string(), qubit_ket(c).unwrap().to_vec()))
            .collect();
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut menu = Vec::new();
    for i in 0..d {
        let mut v = vec![Complex64::new(0.0, 0.0); d];
        v[i] = Complex64::new(1.0, 0.0);
        menu.push((format!("|{i}>"), v));
    }
    for i in 0..d {
        for j in i + 1..d {
            for (k, ph) in ["+", "+i", "-", "-i"].iter().enumerate() {
                let mut v = vec![Complex64::new(0.0, 0.0); d];
                v[i] = Complex64::new(h, 0.0);
                v[j] = Complex64::from_polar(h, std::f64::consts::FRAC_PI_2 * k as f64);
                menu.push((format!("|{i}>{ph}|{j}>"), v));
            }
        }
    }
    menu
}

fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        .norm()
}

fn product_candidates(c1: &KrausChannel, c2: &KrausChannel, both: &KrausChannel) -> Vec<Candidate> {
    let (m1, m2) = (pure_menu(c1.d_in()), pure_menu(c2.d_in()));
    let mut out = Vec::new();
    // ξ₁ = a⊗b, ξ₂ = a'⊗b⊥ and the mirrored construction a⊗b, a⊥⊗b'.
    for (na, a) in &m1 {
        for (na2, a2) in &m1 {
            for (nb, b) in &m2 {
                for (nb2, b2) in &m2 {
                    let orth_b = overlap(b, b2) < 1e-12;
                    let orth_a = overlap(a, a2) < 1e-12;
                    if !(orth_a || orth_b) {
                        continue;
                    }
                    let k1: Vec<Complex64> = a
                        .iter()
                        .flat_map(|x| b.iter().map(move |y| x * y))
                        .collect();
                    let k2: Vec<Complex64> = a2
                        .iter()
                        .flat_map(|x| b2.iter().map(move |y| x * y))
                        .collect();
                    let (x1, x2) = (ComplexMatrix::projector(&k1), ComplexMatrix::projector(&k2));
                    let norm = pair_norm(both, &x1, &x2);
                    out.push(Candidate {
                        strategy: WitnessStrategy::Product,
                        description: format!("{na}{nb} vs {na2}{nb2}"),
                        xi1: x1,
                        xi2: x2,
                        norm,
                    });
                }
            }
        }
    }
    out
}

fn pair_norm(both: &KrausChannel, x1: &ComplexMatrix, x2: &ComplexMatrix) -> f64 {
    both.apply_unchecked(x1)
        .commutator(&both.apply_unchecked(x2))
        .expect("square")
        .frobenius_norm()
}

fn bell_candidates(both: &KrausChannel) -> Vec<Candidate> {
    let mut kets: Vec<(String, Vec<Complex64>)> = Vec::new();
    for (i, j) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)] {
        kets.push((format!("psi{i}{j}"), psi_ket(i, j)));
    }
    for k in 0..4u8 {
        kets.push((format!("phi{k}"), phi_ket(k)));
    }
    let mut out = Vec::new();
    for (a, (na, ka)) in kets.iter().enumerate() {
        for (nb, kb) in kets.iter().skip(a + 1) {
            if overlap(ka, kb) > 1e-12 {
                continue;
            }
            let (x1, x2) = (ComplexMatrix::projector(ka), ComplexMatrix::projector(kb));
            let norm = pair_norm(both, &x1, &x2);
            out.push(Candidate {
                strategy: WitnessStrategy::Bell,
                description: format!("{na} vs {nb}"),
                xi1: x1,
                xi2: x2,
                norm,
            });
        }
    }
    out
}

/// The 48 signed permutation matrices of three axes.
fn signed_permutations() -> Vec<([[f64; 3]; 3], f64)> {
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let parity = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
    let mut out = Vec::new();
    for (p, par) in perms.iter().zip(parity) {
        for signs in 0..8u8 {
            let mut m = [[0.0; 3]; 3];
            let mut det = par;
            for (row, &col) in p.iter().enumerate() {
                let s = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
                det *= s;
                m[row][col] = s;
            }
            out.push((m, det));
        }
    }
    out
}

fn transform(b: &TwoQubitBloch, oa: &[[f64; 3]; 3], ob: &[[f64; 3]; 3]) -> TwoQubitBloch {
    let mv = |o: &[[f64; 3]; 3], v: [f64; 3]| {
        [0, 1, 2].map(|i| (0..3).map(|k| o[i][k] * v[k]).sum::<f64>())
    };
    let mut t = [[0.0; 3]; 3];
    for (i, row) in t.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            for k in 0..3 {
                for l in 0..3 {
                    *x += oa[i][k] * b.t[k][l] * ob[j][l];
                }
            }
        }
    }
    TwoQubitBloch::new(mv(oa, b.r), mv(ob, b.s), t)
}

fn bloch_candidates(both: &KrausChannel) -> Vec<Candidate> {
    let cases = [
        ("bell", WitnessCase::Bell),
        ("case1", WitnessCase::case1()),
        ("case2", WitnessCase::case2()),
    ];
    let ops = signed_permutations();
    let mut out = Vec::new();
    for (name, case) in cases {
        let (b1, b2) = case.bloch_pair();
        for swap in [false, true] {
            let (b1, b2) = if swap {
                (b1.swapped(), b2.swapped())
            } else {
                (b1, b2)
            };
            for (ia, (oa, da)) in ops.iter().enumerate() {
                for (ib, (ob, db)) in ops.iter().enumerate() {
                    if da * db < 0.0 {
                        continue;
                    }
                    let (t1, t2) = (transform(&b1, oa, ob), transform(&b2, oa, ob));
                    let (x1, x2) = (t1.to_operator(), t2.to_operator());
                    let norm = pair_norm(both, &x1, &x2);
                    if norm <= NONZERO_TOL {
                        continue;
                    }
                    out.push(Candidate {
                        strategy: WitnessStrategy::Bloch,
                        description: format!("{name} swap={swap} axes=({ia},{ib})"),
                        xi1: x1,
                        xi2: x2,
                        norm,
                    });
                }
            }
        }
    }
    out
}

fn sampler_candidates(both: &KrausChannel, seed: u64, trials: usize) -> Vec<Candidate> {
    constrained_pair_sampler(seed, trials)
        .into_iter()
        .enumerate()
        .map(|(k, p)| {
            let norm = pair_norm(both, p.xi1.matrix(), p.xi2.matrix());
            Candidate {
                strategy: WitnessStrategy::Sampler,
                description: format!("sample {k} ({:?})", p.family),
                xi1: p.xi1.into_matrix(),
                xi2: p.xi2.into_matrix(),
                norm,
            }
        })
        .collect()
}

/// Searches for a super-activation witness of `Λ₁⊗Λ₂`. Both channels must
/// pass the commutativity-preservation test. `Ok(None)` means the chosen
/// menu found nothing above the nonzero threshold, which is inconclusive.
pub fn superactivation_witness(
    c1: &KrausChannel,
    c2: &KrausChannel,
    strategy: WitnessStrategy,
    cfg: &WitnessConfig,
) -> Result<Option<Witness>> {
    for (k, c) in [c1, c2].iter().enumerate() {
        let t = c.is_commutativity_preserving(cfg.cp_trials, cfg.seed);
        if !t.preserving {
            return Err(Error::Precondition(format!(
                "channel {} ({}) creates correlations on its own (commutator {:.3e})",
                k + 1,
                c.label(),
                t.counterexample.map(|x| x.commutator_norm).unwrap_or(0.0)
            )));
        }
    }
    let both = c1.tensor(c2);
    let qubits = c1.d_in() == 2 && c2.d_in() == 2;
    let use_ = |s: WitnessStrategy| strategy == s || strategy == WitnessStrategy::All;
    let mut cands = Vec::new();
    if use_(WitnessStrategy::Product) {
        cands.extend(product_candidates(c1, c2, &both));
    }
    if qubits && use_(WitnessStrategy::Bell) {
        cands.extend(bell_candidates(&both));
    }
    if qubits && use_(WitnessStrategy::Bloch) {
        cands.extend(bloch_candidates(&both));
    }
    if qubits && use_(WitnessStrategy::Sampler) {
        cands.extend(sampler_candidates(&both, cfg.seed, cfg.trials));
    }
    let norms: Vec<f64> = cands.iter().map(|c| c.norm).collect();
    let Some(best) = argmax_first(&norms) else {
        return Ok(None);
    };
    if norms[best] <= cfg.nonzero_tol {
        return Ok(None);
    }
    let cand = cands.swap_remove(best);
    let dims = vec![c1.d_in(), c2.d_in()];
    let xi1 = DensityMatrix::new(cand.xi1, dims.clone())?;
    let xi2 = DensityMatrix::new(cand.xi2, dims.clone())?;
    let marg = |k: usize| -> Result<f64> {
        let a = xi1.partial_trace(&[k])?;
        let b = xi2.partial_trace(&[k])?;
        Ok(a.matrix().commutator(b.matrix())?.frobenius_norm())
    };
    let marginals_commute = marg(0)? <= CONSTRAINT_TOL && marg(1)? <= CONSTRAINT_TOL;
    let output_discord = if cfg.with_discord && both.d_out() * 2 <= MAX_TOTAL_DIM {
        let ens = FlaggedEnsemble::new(
            vec![0.5, 0.5],
            vec![
                both.apply(&xi1)?.into_matrix(),
                both.apply(&xi2)?.into_matrix(),
            ],
        )?;
        Some(ens.discord(&cfg.discord, &[]).value)
    } else {
        None
    };
    Ok(Some(Witness {
        strategy: cand.strategy,
        description: cand.description,
        xi1,
        xi2,
        commutator_norm: cand.norm,
        marginals_commute,
        output_discord,
    }))
}

/// Named scalar in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
}

/// Outcome of one verification run. Every quantity is reproducible from the
/// inputs (including the seed); the runtime is only filled in on request.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub inputs: BTreeMap<String, String>,
    pub quantities: Vec<Quantity>,
    pub tolerance: f64,
    pub passed: bool,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime_ms: Option<u64>,
}

impl TheoremReport {
    fn new(theorem: &str, tolerance: f64) -> Self {
        TheoremReport {
            theorem: theorem.into(),
            inputs: BTreeMap::new(),
            quantities: Vec::new(),
            tolerance,
            passed: false,
            notes: Vec::new(),
            runtime_ms: None,
        }
    }

    fn input(mut self, k: &str, v: impl ToString) -> Self {
        self.inputs.insert(k.into(), v.to_string());
        self
    }

    fn push(&mut self, name: &str, value: f64) {
        self.quantities.push(Quantity {
            name: name.into(),
            value,
        });
    }

    pub fn quantity(&self, name: &str) -> Option<f64> {
        self.quantities
            .iter()
            .find(|q| q.name == name)
            .map(|q| q.value)
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Super-activation of two zero-QCP channels is expected unless both are
/// completely decohering or both are unitary; checked with the product
/// construction.
pub fn verify_theorem1(
    c1: &KrausChannel,
    c2: &KrausChannel,
    cfg: &WitnessConfig,
) -> Result<TheoremReport> {
    let mut rep = TheoremReport::new("1", cfg.nonzero_tol)
        .input("channel1", c1.label())
        .input("channel2", c2.label())
        .input("seed", cfg.seed);
    let both_cd = c1.is_completely_decohering() && c2.is_completely_decohering();
    let both_unitary = c1.is_unitary_channel() && c2.is_unitary_channel();
    let expected = !(both_cd || both_unitary);
    let cfg = WitnessConfig {
        with_discord: false,
        ..*cfg
    };
    let w = superactivation_witness(c1, c2, WitnessStrategy::Product, &cfg)?;
    let norm = w.as_ref().map_or(0.0, |w| w.commutator_norm);
    rep.push("expected_superactivation", flag(expected));
    rep.push("witness_found", flag(w.is_some()));
    rep.push("commutator_norm", norm);
    if let Some(w) = &w {
        rep.notes.push(format!("witness: {}", w.description));
    }
    rep.passed = w.is_some() == expected;
    Ok(rep)
}

/// For Pauli-diagonal qubit channels, a witness with commuting marginals is
/// expected unless the channels are identical isotropic, one is completely
/// depolarizing, or both are unitary or both completely decohering.
pub fn theorem2_expects_superactivation(c1: &KrausChannel, c2: &KrausChannel) -> bool {
    let identical_iso = match (c1.isotropic_parameter(), c2.isotropic_parameter()) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        _ => false,
    };
    let any_cdp = c1.is_completely_depolarizing() || c2.is_completely_depolarizing();
    let both_unitary = c1.is_unitary_channel() && c2.is_unitary_channel();
    let both_cd = c1.is_completely_decohering() && c2.is_completely_decohering();
    !(identical_iso || any_cdp || both_unitary || both_cd)
}

pub fn verify_theorem2(
    c1: &KrausChannel,
    c2: &KrausChannel,
    cfg: &WitnessConfig,
) -> Result<TheoremReport> {
    for c in [c1, c2] {
        c.transfer_coefficients().map_err(|e| {
            Error::Precondition(format!(
                "{} is not a Pauli-diagonal qubit channel: {e}",
                c.label()
            ))
        })?;
    }
    let mut rep = TheoremReport::new("2", cfg.nonzero_tol)
        .input("channel1", c1.label())
        .input("channel2", c2.label())
        .input("seed", cfg.seed)
        .input("trials", cfg.trials);
    let expected = theorem2_expects_superactivation(c1, c2);
    let mut best: Option<Witness> = None;
    for s in [
        WitnessStrategy::Bell,
        WitnessStrategy::Bloch,
        WitnessStrategy::Sampler,
    ] {
        if let Some(w) = superactivation_witness(c1, c2, s, cfg)? {
            if w.marginals_commute
                && best
                    .as_ref()
                    .is_none_or(|b| w.commutator_norm > b.commutator_norm)
            {
                best = Some(w);
            }
        }
    }
    rep.push("expected_superactivation", flag(expected));
    rep.push("witness_found", flag(best.is_some()));
    rep.push(
        "commutator_norm",
        best.as_ref().map_or(0.0, |w| w.commutator_norm),
    );
    if let Some(d) = best.as_ref().and_then(|w| w.output_discord) {
        rep.push("output_discord", d);
    }
    if let Some(w) = &best {
        rep.notes
            .push(format!("witness: {:?} {}", w.strategy, w.description));
    }
    rep.passed = best.is_some() == expected;
    Ok(rep)
}

/// Settings shared by the super-additivity checks.
#[derive(Clone, Copy, Debug)]
pub struct TheoremConfig {
    pub qcp: QcpConfig,
    /// Budget for the composite-channel optimisation.
    pub composite: QcpConfig,
    /// Overrides the pass threshold (1e-3 for super-additivity, 2e-2 for the
    /// measure-and-prepare additivity).
    pub tolerance: Option<f64>,
}

impl TheoremConfig {
    pub fn new(seed: u64) -> Self {
        // the product input already attains the sum; the composite search
        // only has to probe around it
        let mut composite = QcpConfig {
            restarts: 1,
            outer_iters: 4,
            candidates: 2,
            ..QcpConfig::default()
        };
        composite.inner.refine_iters = 10;
        composite.final_discord.restarts = 8;
        TheoremConfig {
            qcp: QcpConfig::default().with_seed(seed),
            composite: composite.with_seed(seed),
            tolerance: None,
        }
    }
}

fn product_value(
    c1: &KrausChannel,
    c2: &KrausChannel,
    q1: &QcpEstimate,
    q2: &QcpEstimate,
    cfg: &DiscordConfig,
) -> (InputParams, f64) {
    let input = InputParams::product(&q1.input, &q2.input);
    let v = output_discord(&c1.tensor(c2), &input, cfg);
    (input, v)
}

/// `Q(Λ₁⊗Λ₂) ≥ Q(Λ₁) + Q(Λ₂)`: the composite is evaluated on the product of
/// the two optimal inputs and, when it fits, optimised from there.
pub fn verify_theorem3(
    c1: &KrausChannel,
    c2: &KrausChannel,
    cfg: &TheoremConfig,
) -> Result<TheoremReport> {
    let tol = cfg.tolerance.unwrap_or(1e-3);
    let mut rep = TheoremReport::new("3", tol)
        .input("channel1", c1.label())
        .input("channel2", c2.label())
        .input("seed", cfg.qcp.seed);
    let q1 = qcp_estimate(c1, &cfg.qcp)?;
    let q2 = qcp_estimate(c2, &cfg.qcp)?;
    let both = c1.tensor(c2);
    let (prod_input, q_prod) = product_value(c1, c2, &q1, &q2, &cfg.qcp.final_discord);
    let n = prod_input.weights.len();
    let mut q12 = q_prod;
    rep.push("q1", q1.value);
    rep.push("q2", q2.value);
    rep.push("q12_product_input", q_prod);
    if both.d_out() * n <= MAX_TOTAL_DIM {
        let comp_cfg = QcpConfig {
            n_terms: Some(n),
            ..cfg.composite
        };
        let comp = qcp_estimate_seeded(&both, &comp_cfg, &[prod_input])?;
        rep.push("q12_optimised", comp.value);
        q12 = q12.max(comp.value);
    } else {
        rep.notes.push(format!(
            "composite dimension {} exceeds {MAX_TOTAL_DIM}; product-input bound only",
            both.d_out() * n
        ));
    }
    rep.push("q12", q12);
    rep.push("margin", q12 - q1.value - q2.value);
    rep.passed = q12 >= q1.value + q2.value - tol;
    Ok(rep)
}

/// Splits `Σ_i q_i σ_i ⊗ |i><i|` on `A⊗A'` into the blocks selected by the
/// projectors `|b_k><b_k|` on `A'`: returns `(r_k, ensemble_k)`.
pub fn decohered_blocks(
    ens: &FlaggedEnsemble,
    d_a: usize,
    cd_basis: &ComplexMatrix,
) -> Vec<(f64, FlaggedEnsemble)> {
    let d_b = cd_basis.rows();
    (0..d_b)
        .map(|k| {
            let proj =
                ComplexMatrix::identity(d_a).kron(&ComplexMatrix::projector(&cd_basis.column(k)));
            let mut weights = Vec::new();
            let mut states = Vec::new();
            for (q, s) in ens.weights.iter().zip(&ens.states) {
                let blk = (&(&proj * s) * &proj)
                    .partial_trace(&[d_a, d_b], &[0])
                    .expect("dims");
                let w = blk.trace().re;
                weights.push(q * w);
                states.push(if w > 1e-15 {
                    blk.scale_re(1.0 / w)
                } else {
                    ComplexMatrix::identity(d_a).scale_re(1.0 / d_a as f64)
                });
            }
            let r: f64 = weights.iter().sum();
            if r > 0.0 {
                weights.iter_mut().for_each(|w| *w /= r);
            }
            (r, FlaggedEnsemble::new(weights, states).expect("shapes"))
        })
        .collect()
}

/// Both sides of `δ(ρ̃) ≤ Σ_k r_k δ(ρ_k)` for an output of `Λ ⊗ Λ_CD` whose
/// second factor is decohered in `cd_basis`. The left side is minimised
/// with the block measurement `|b_k><b_k| ⊗ F_k` among its starting points.
pub fn block_inequality(
    ens: &FlaggedEnsemble,
    d_a: usize,
    cd_basis: &ComplexMatrix,
    cfg: &DiscordConfig,
) -> Result<(f64, f64)> {
    let blocks = decohered_blocks(ens, d_a, cd_basis);
    let mut rhs = 0.0;
    let mut cols = Vec::new();
    for (k, (r, blk)) in blocks.iter().enumerate() {
        let opt = blk.discord(cfg, &[]);
        rhs += r * opt.value;
        let ck = cd_basis.column(k);
        for j in 0..d_a {
            let f = opt.basis.column(j);
            cols.push(
                f.iter()
                    .flat_map(|x| ck.iter().map(move |y| x * y))
                    .collect::<Vec<_>>(),
            );
        }
    }
    let block_measurement = ComplexMatrix::from_columns(&cols)?;
    let lhs = ens.discord(cfg, &[block_measurement]).value;
    Ok((lhs, rhs))
}

/// `Q(Λ_MP ⊗ Λ_CD) = Q(Λ_MP)` within 2e−2, plus the block inequality
/// `δ(ρ̃) ≤ Σ_k r_k δ(ρ_k)` on the best composite input.
pub fn verify_theorem4(
    mp: &KrausChannel,
    cd: &KrausChannel,
    cfg: &TheoremConfig,
) -> Result<TheoremReport> {
    if !mp.is_measure_prepare() {
        return Err(Error::Precondition(format!(
            "{} is not a measure-and-prepare channel",
            mp.label()
        )));
    }
    let cd_structure = cd
        .mp_structure()
        .filter(|_| cd.is_completely_decohering())
        .ok_or_else(|| {
            Error::Precondition(format!("{} is not completely decohering", cd.label()))
        })?;
    let tol = cfg.tolerance.unwrap_or(2e-2);
    let block_tol = 1e-4;
    let mut rep = TheoremReport::new("4", tol)
        .input("channel1", mp.label())
        .input("channel2", cd.label())
        .input("seed", cfg.qcp.seed);
    let q_mp = qcp_estimate(mp, &cfg.qcp)?;
    let q_cd = qcp_estimate(cd, &cfg.qcp)?;
    let both = mp.tensor(cd);
    let (prod_input, _) = product_value(mp, cd, &q_mp, &q_cd, &cfg.qcp.final_discord);
    let n = prod_input.weights.len();
    if both.d_out() * n > MAX_TOTAL_DIM {
        return Err(Error::DimensionOverflow(both.d_out() * n, MAX_TOTAL_DIM));
    }
    let comp_cfg = QcpConfig {
        n_terms: Some(n),
        ..cfg.composite
    };
    let comp = qcp_estimate_seeded(&both, &comp_cfg, &[prod_input])?;
    let diff = (comp.value - q_mp.value).abs();

    // block inequality on the best composite input
    let ens = flagged_output(&both, &comp.input);
    let (lhs, rhs) = block_inequality(
        &ens,
        mp.d_out(),
        &cd_structure.basis,
        &cfg.qcp.final_discord,
    )?;

    rep.push("q_mp", q_mp.value);
    rep.push("q_composite", comp.value);
    rep.push("difference", diff);
    rep.push("block_lhs", lhs);
    rep.push("block_rhs", rhs);
    rep.push("block_tolerance", block_tol);
    rep.passed = diff <= tol && lhs <= rhs + block_tol;
    if lhs > rhs + block_tol {
        rep.notes.push("block inequality violated".into());
    }
    Ok(rep)
}

/// Depolarizing `Λ_A` and complete dephasing `Λ_{A'}` on the flagged input
/// `¼ Σ_i |Φ_i><Φ_i| ⊗ |i><i|`: the blocks for flags 1 and 2 stop commuting
/// (`∝ a² σ₂⊗σ₀`) although every two-party marginal of the input is classical.
/// `tol` bounds the pairwise input discord.
pub fn genuine_correlation_demo(a: f64, tol: f64, cfg: &DiscordConfig) -> Result<TheoremReport> {
    let dep = channels::depolarizing(a)?;
    let cd = channels::cd_computational(2);
    let both = dep.tensor(&cd);
    let mut rep = TheoremReport::new("genuine-correlation", tol)
        .input("a", a)
        .input("seed", cfg.seed);
    let phis: Vec<ComplexMatrix> = (0..4)
        .map(|k| ComplexMatrix::projector(&phi_ket(k)))
        .collect();
    let outs: Vec<ComplexMatrix> = phis.iter().map(|p| both.apply_unchecked(p)).collect();
    let comm = outs[1].commutator(&outs[2])?;
    let norm = comm.frobenius_norm();
    let support = pauli2(2, 0);
    let coef = support.inner(&comm) / 4.0;
    let off = (&comm - &support.scale(coef)).frobenius_norm();

    // input ¼ Σ Φ_i ⊗ |i><i| on A, A', B
    let ens = FlaggedEnsemble::new(vec![0.25; 4], phis.clone())?;
    let input = ens.to_state().regroup(vec![2, 2, 4])?;
    let mut pairwise: f64 = 0.0;
    for keep in [[0usize, 1], [0, 2], [1, 2]] {
        let m = input.partial_trace(&keep)?;
        for side in 0..2 {
            pairwise = pairwise.max(discord(&m, side, cfg)?.value.abs());
        }
    }
    let out_ens = FlaggedEnsemble::new(vec![0.25; 4], outs)?;
    let out_discord = out_ens.discord(cfg, &[]).value;

    rep.push("commutator_norm", norm);
    rep.push("sigma2_coefficient_im", coef.im);
    rep.push("off_support_norm", off);
    rep.push("max_pairwise_input_discord", pairwise);
    rep.push("output_discord", out_discord);
    let structure_ok = if a == 0.0 {
        norm <= 1e-10
    } else {
        norm > NONZERO_TOL
    };
    rep.passed = structure_ok && off <= 1e-10 && pairwise <= tol;
    Ok(rep)
}

/// `Λ_PD ⊗ Λ_PD` on `ψ₀₀`, `ψ₁₁` and on `¼ Σ ψ_ij ⊗ |ij><ij|`.
/// `tol` is the threshold for a nonzero commutator.
pub fn phase_damping_demo(p: f64, tol: f64, cfg: &DiscordConfig) -> Result<TheoremReport> {
    let pd = channels::phase_damping(p)?;
    let both = pd.tensor(&pd);
    let mut rep = TheoremReport::new("phase-damping", tol)
        .input("p", p)
        .input("seed", cfg.seed);
    let kets = [psi_ket(0, 0), psi_ket(0, 1), psi_ket(1, 0), psi_ket(1, 1)];
    let outs: Vec<ComplexMatrix> = kets
        .iter()
        .map(|k| both.apply_unchecked(&ComplexMatrix::projector(k)))
        .collect();
    let norm = outs[0].commutator(&outs[3])?.frobenius_norm();
    let scale = p * (1.0 - p).sqrt();
    let out_discord = FlaggedEnsemble::new(vec![0.25; 4], outs)?
        .discord(cfg, &[])
        .value;
    rep.push("commutator_norm", norm);
    if scale > 0.0 {
        rep.push("norm_over_p_sqrt_1_minus_p", norm / scale);
    }
    rep.push("output_discord", out_discord);
    rep.passed = if scale > 0.0 { norm > tol } else { norm <= tol };
    Ok(rep)
}

/// A random qubit channel from the family constructors.
pub fn random_family_channel<R: Rng + ?Sized>(rng: &mut R) -> KrausChannel {
    match rng.gen_range(0..9) {
        0 => {
            let mut l: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            l.sort_by(|a, b| b.total_cmp(a));
            let s: f64 = l.iter().sum();
            let mut l = [l[0] / s, l[1] / s, l[2] / s, l[3] / s];
            l[0] = 1.0 - l[1] - l[2] - l[3];
            channels::pauli_channel(PauliParams::new(l).expect("sorted weights"))
        }
        1 => channels::phase_damping(rng.gen_range(0.0..1.0)).unwrap(),
        2 => channels::depolarizing(rng.gen_range(0.0..1.0)).unwrap(),
        3 => channels::projecting_depolarizing(rng.gen_range(0.0..0.5)).unwrap(),
        4 => channels::dephase_then_depolarize(rng.gen_range(0.0..1.0)).unwrap(),
        5 => channels::cd_computational(2),
        6 => channels::unitary(&random_unitary(2, rng)).unwrap(),
        7 => channels::mp_std2(),
        _ => {
            let basis = random_unitary(2, rng);
            let etas: Vec<DensityMatrix> = (0..2)
                .map(|_| {
                    let m = crate::sampling::random_density(2, 2, rng);
                    DensityMatrix::new(m, vec![2]).unwrap()
                })
                .collect();
            channels::mp_channel(&basis, &etas)
                .unwrap()
                .with_label("mp:random")
        }
    }
}

/// Checks the Bloch-space formulas against a dense commutator for a pair.
pub fn bloch_reconstruction_error(x1: &TwoQubitBloch, x2: &TwoQubitBloch) -> f64 {
    let dense = x1.to_operator().commutator(&x2.to_operator()).expect("4x4");
    (&bloch_commutator(x1, x2).to_operator() - &dense).frobenius_norm()
}

/// Whether the pair satisfies the commuting-pair conditions.
pub fn is_constrained_pair(x1: &DensityMatrix, x2: &DensityMatrix) -> bool {
    commuting_constraint_check(
        &TwoQubitBloch::from_operator(x1.matrix()),
        &TwoQubitBloch::from_operator(x2.matrix()),
    )
}
