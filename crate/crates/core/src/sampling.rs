//! Seeded random objects and the Givens parametrisation of unitaries.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::matrix::ComplexMatrix;

/// Independent generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

/// Haar-distributed unitary (Gram–Schmidt on a Ginibre matrix).
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<Complex64> = (0..d).map(|_| gaussian_complex(rng)).collect();
        for u in &cols {
            let proj: Complex64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= norm);
        cols.push(v);
    }
    ComplexMatrix::from_columns(&cols).expect("square by construction")
}

/// Uniform point on the probability simplex of size `n`.
pub fn random_probabilities<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d).map(|_| gaussian_complex(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Random mixed state `G G† / tr(G G†)` with a `d × rank` Ginibre factor.
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(d, rank.max(1), |_, _| gaussian_complex(rng));
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    m.scale_re(1.0 / tr).hermitian_part()
}

/// Number of real angles used by [`givens_unitary`] in dimension `d`.
pub fn givens_param_count(d: usize) -> usize {
    d * (d - 1)
}

/// Product of complex Givens rotations, one per index pair `(i, j)` with
/// `i < j`, consuming two angles `(θ, φ)` each. Covers every unitary up to a
/// diagonal phase matrix on the right, which is irrelevant for rank-one
/// projective measurements.
pub fn givens_unitary(d: usize, angles: &[f64]) -> ComplexMatrix {
    assert_eq!(
        angles.len(),
        givens_param_count(d),
        "wrong number of Givens angles"
    );
    let mut u = ComplexMatrix::identity(d);
    apply_givens_right(&mut u, angles);
    u
}

/// `u ← u · G(angles)` in place.
pub fn apply_givens_right(u: &mut ComplexMatrix, angles: &[f64]) {
    let d = u.cols();
    let rows = u.rows();
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            let (theta, phi) = (angles[k], angles[k + 1]);
            k += 2;
            let (s, c) = theta.sin_cos();
            let e = Complex64::from_polar(1.0, phi);
            // G acts on columns i, j: [[c, -e* s], [e s, c]].
            let g_ij = -e.conj() * s;
            let g_ji = e * s;
            let data = u.as_mut_slice();
            for r in 0..rows {
                let a = data[r * d + i];
                let b = data[r * d + j];
                data[r * d + i] = a * c + b * g_ji;
                data[r * d + j] = a * g_ij + b * c;
            }
        }
    }
}

/// Random Givens angles, uniform over a full period.
pub fn random_angles<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..givens_param_count(d))
        .map(|k| {
            if k % 2 == 0 {
                rng.gen_range(0.0..std::f64::consts::PI)
            } else {
                rng.gen_range(0.0..2.0 * std::f64::consts::PI)
            }
        })
        .collect()
}
