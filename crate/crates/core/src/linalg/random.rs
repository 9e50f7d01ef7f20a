//! Seeded random matrices and states.
//!
//! Every sampler takes an explicit RNG. For parallel sampling, use
//! [`stream_rng`] to derive an independent, reproducible stream per index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::{c, diag, hermitian_part, CMatrix, C64};

pub type SeededRng = ChaCha20Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// RNG for sample `index` of a run seeded with `seed`. Streams for different
/// indices do not overlap, so results do not depend on scheduling.
pub fn stream_rng(seed: u64, index: u64) -> SeededRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Complex Gaussian (Ginibre) matrix with unit-variance entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = 0.5f64.sqrt();
    CMatrix::from_fn(rows, cols, |_, _| C64::new(s * normal(rng), s * normal(rng)))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with the phase fix
/// `Q diag(R_ii / |R_ii|)`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, d, rng);
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { c(1.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random Hermitian matrix with Gaussian entries.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    hermitian_part(&ginibre(d, d, rng))
}

/// Random traceless Hermitian matrix.
pub fn random_traceless_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let h = random_hermitian(d, rng);
    let tr = h.trace() / c(d as f64);
    h - CMatrix::identity(d, d) * tr
}

/// Random density of the given rank (`G G^† / tr`, `G` Ginibre `d x rank`).
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> CMatrix {
    let g = ginibre(d, rank.clamp(1, d), rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    m / c(tr)
}

/// Random point of the probability simplex with entries at least `floor`
/// (before renormalization).
pub fn random_probability<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let u = Uniform::new(0.0f64, 1.0).expect("valid range");
    let raw: Vec<f64> = (0..n).map(|_| -u.sample(rng).max(1e-300).ln() + floor).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

/// Random diagonal density.
pub fn random_diagonal_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    diag(&random_probability(d, 0.0, rng))
}

#[cfg(test)]
mod tests {
    use super::super::{check_unitary, eigvalsh, max_abs};
    use super::*;

    #[test]
    fn haar_is_unitary_and_reproducible() {
        let u = haar_unitary(4, &mut seeded_rng(7));
        check_unitary(&u, 1e-12).unwrap();
        assert_eq!(u, haar_unitary(4, &mut seeded_rng(7)));
    }

    #[test]
    fn streams_are_distinct() {
        let a = ginibre(2, 2, &mut stream_rng(1, 0));
        let b = ginibre(2, 2, &mut stream_rng(1, 1));
        assert!(max_abs(&(a - b)) > 1e-6);
    }

    #[test]
    fn random_density_has_requested_rank() {
        let rho = random_density(4, 2, &mut seeded_rng(3));
        let ev = eigvalsh(&rho);
        assert!(ev[0].abs() < 1e-12 && ev[1].abs() < 1e-12 && ev[2] > 1e-6);
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
    }
}
