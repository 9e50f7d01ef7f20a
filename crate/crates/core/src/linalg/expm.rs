use super::{c, eigh, hermiticity_deviation, identity, max_abs, spectral_apply, CMatrix, I};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which each Padé degree is accurate to unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &CMatrix, b: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = identity(n) * c(b[1]);
    let mut v = identity(n) * c(b[0]);
    let mut pow = identity(n);
    for j in 1..b.len() / 2 {
        pow = &pow * &a2;
        u += &pow * c(b[2 * j + 1]);
        v += &pow * c(b[2 * j]);
    }
    (a * u, v)
}

fn pade13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let b = &PADE13;
    let n = a.nrows();
    let id = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]))
        + &a6 * c(b[7])
        + &a4 * c(b[5])
        + &a2 * c(b[3])
        + &id * c(b[1]);
    let u = a * u_inner;
    let v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]))
        + &a6 * c(b[6])
        + &a4 * c(b[4])
        + &a2 * c(b[2])
        + &id * c(b[0]);
    (u, v)
}

/// Matrix exponential by Padé scaling and squaring.
///
/// Hermitian and anti-Hermitian inputs are routed through an
/// eigendecomposition, which is both faster and exactly unitary/positive.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let scale = max_abs(a).max(1.0);
    if hermiticity_deviation(a) <= 1e-14 * scale {
        return expm_hermitian(a, c(1.0));
    }
    let ia = a * (-I);
    if hermiticity_deviation(&ia) <= 1e-14 * scale {
        return expm_hermitian(&ia, I);
    }

    let norm = one_norm(a);
    for &(m, theta) in THETA.iter() {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(&u, &v);
        }
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a * c(0.5f64.powi(s));
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn solve_pade(u: &CMatrix, v: &CMatrix) -> CMatrix {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).expect("Padé denominator is well conditioned")
}

/// `exp(z * h)` for Hermitian `h` through its eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, z: super::C64) -> CMatrix {
    let (vals, vecs) = eigh(h);
    spectral_apply(&vals, &vecs, |x| (z * x).exp())
}

#[cfg(test)]
mod tests {
    use super::super::{diag, frobenius, pauli_x, pauli_z, C64, ONE, ZERO};
    use super::*;

    fn taylor(a: &CMatrix) -> CMatrix {
        // brute-force series with many terms for small-norm inputs
        let n = a.nrows();
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..60 {
            term = &term * a * c(1.0 / k as f64);
            sum += &term;
        }
        sum
    }

    #[test]
    fn exp_of_diagonal() {
        let e = expm(&diag(&[1.0, -2.0]));
        assert!((e[(0, 0)].re - 1f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)].re - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exp_of_rotation_generator() {
        let t = 0.7;
        let e = expm(&(pauli_x() * C64::new(0.0, -t)));
        let expected = identity(2) * c(t.cos()) - pauli_x() * C64::new(0.0, t.sin());
        assert!(max_abs(&(e - expected)) < 1e-14);
    }

    #[test]
    fn exp_of_nilpotent() {
        let n = CMatrix::from_row_slice(2, 2, &[ZERO, c(3.0), ZERO, ZERO]);
        let e = expm(&n);
        let expected = CMatrix::from_row_slice(2, 2, &[ONE, c(3.0), ZERO, ONE]);
        assert!(max_abs(&(e - expected)) < 1e-14);
    }

    #[test]
    fn pade_degrees_match_series() {
        let base = CMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(0.1, 0.2),
                c(0.3),
                C64::new(0.0, -0.1),
                c(-0.2),
                c(0.05),
                c(0.4),
                C64::new(0.1, 0.1),
                ZERO,
                c(-0.3),
            ],
        );
        for s in [0.01, 0.2, 0.9, 2.0, 4.0] {
            let a = &base * c(s);
            let err = frobenius(&(expm(&a) - taylor(&a)));
            assert!(err < 1e-12, "scale {s}: {err}");
        }
    }

    #[test]
    fn large_norm_uses_squaring() {
        let a = CMatrix::from_row_slice(2, 2, &[c(-20.0), c(15.0), ZERO, c(-30.0)]);
        let e = expm(&a);
        // upper-triangular closed form
        let (l1, l2) = (-20.0f64, -30.0f64);
        let off = 15.0 * (l1.exp() - l2.exp()) / (l1 - l2);
        assert!((e[(0, 0)].re - l1.exp()).abs() < 1e-20);
        assert!((e[(0, 1)].re - off).abs() < 1e-20);
        assert!((e[(1, 1)].re - l2.exp()).abs() < 1e-25);
    }

    #[test]
    fn hermitian_route() {
        let e = expm(&(pauli_z() * c(2.0)));
        assert!((e[(0, 0)].re - 2f64.exp()).abs() < 1e-13);
        assert!((e[(1, 1)].re - (-2f64).exp()).abs() < 1e-15);
    }
}
