use qcp_core::channels::{
    cd_computational, dephase_then_depolarize, hadamard, mp_std2, projecting_depolarizing, unitary,
};
use qcp_core::commutators::{output_commutator, theorem2_witness, WitnessCase};
use qcp_core::discord::DiscordConfig;
use qcp_core::matrix::pauli2;
use qcp_core::qcp::{
    block_inequality, flagged_output, qcp_estimate, verify_theorem3, verify_theorem4, InputParams,
    QcpConfig, TheoremConfig,
};
use qcp_core::sampling::{random_unitary, stream_rng};
use rand::Rng;

/// Frozen from the grid oracle over Σ p_i |i><i| ⊗ |i><i| inputs.
const Q_MP_STD2: f64 = 0.201_752_073_4;

#[test]
fn mp_std2_regression_constant() {
    for seed in [0, 7] {
        let q = qcp_estimate(&mp_std2(), &QcpConfig::default().with_seed(seed)).unwrap();
        assert!(
            (q.value - Q_MP_STD2).abs() < 1e-6,
            "seed {seed}: {}",
            q.value
        );
        assert_eq!(q.optimal_input.dim_a(), 2);
        assert_eq!(q.optimal_input.dim_b(), 2);
    }
}

#[test]
fn zero_qcp_examples() {
    for c in [cd_computational(2), unitary(&hadamard()).unwrap()] {
        let q = qcp_estimate(&c, &QcpConfig::default()).unwrap();
        assert!(q.value.abs() <= 1e-6, "{}: {}", c.label(), q.value);
        assert!(q.value >= -1e-6);
    }
}

#[test]
fn case2_output_commutator_lives_on_sigma1_sigma1() {
    let (a, b, r, t) = (0.4, 0.6, 0.4, 0.3);
    let (x1, x2) = theorem2_witness(WitnessCase::Case2 { r, t }).unwrap();
    let c = output_commutator(
        &projecting_depolarizing(a).unwrap(),
        &dephase_then_depolarize(b).unwrap(),
        x1.matrix(),
        x2.matrix(),
    )
    .unwrap();
    let s11 = pauli2(1, 1);
    let coef = s11.inner(&c) / 4.0;
    assert!((&c - &s11.scale(coef)).frobenius_norm() < 1e-14);
    // Γ₁₁ = 4a²brt with the i/16 prefactor
    assert!((coef.im - a * a * b * r * t / 4.0).abs() < 1e-14, "{coef}");
    assert!(coef.re.abs() < 1e-14);
}

#[test]
fn theorem3_examples() {
    let cfg = TheoremConfig::new(3);
    let cd = cd_computational(2);
    let rep = verify_theorem3(&cd, &cd, &cfg).unwrap();
    assert!(rep.passed);
    assert!(rep.quantity("q12").unwrap().abs() < 1e-6);

    let rep = verify_theorem3(&mp_std2(), &cd, &cfg).unwrap();
    assert!(rep.passed);
    assert!(rep.quantity("q12").unwrap() >= Q_MP_STD2 - 1e-3);

    let rep = verify_theorem3(&mp_std2(), &mp_std2(), &cfg).unwrap();
    assert!(rep.passed);
    assert!(rep.quantity("q12").unwrap() >= 2.0 * Q_MP_STD2 - 1e-3);
}

#[test]
fn theorem4_cd_cd_is_zero() {
    let cd = cd_computational(2);
    let rep = verify_theorem4(&cd, &cd, &TheoremConfig::new(1)).unwrap();
    assert!(rep.passed, "{:?}", rep.quantities);
    assert!(rep.quantity("q_mp").unwrap().abs() < 1e-6);
    assert!(rep.quantity("q_composite").unwrap().abs() < 1e-6);
}

#[test]
fn theorem4_rejects_non_structured_channels() {
    let cfg = TheoremConfig::new(0);
    let h = unitary(&hadamard()).unwrap();
    assert!(verify_theorem4(&h, &cd_computational(2), &cfg).is_err());
    assert!(verify_theorem4(&mp_std2(), &h, &cfg).is_err());
}

#[test]
fn block_inequality_on_random_inputs() {
    let both = mp_std2().tensor(&cd_computational(2));
    let basis = qcp_core::ComplexMatrix::identity(2);
    let cfg = DiscordConfig::default();
    let mut rng = stream_rng(44, 0);
    for _ in 0..4 {
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let input = InputParams {
            weights: raw.iter().map(|w| w / total).collect(),
            basis: random_unitary(4, &mut rng),
        };
        let ens = flagged_output(&both, &input);
        let (lhs, rhs) = block_inequality(&ens, 2, &basis, &cfg).unwrap();
        assert!(lhs <= rhs + 1e-4, "{lhs} > {rhs}");
        assert!(lhs >= -1e-9);
    }
}
