//! Simulating a dissipator on a system through a one-qubit environment:
//! prepare the environment in `|0>`, evolve under a Hamiltonian coupling,
//! trace the environment out.
//!
//! The composite space is `system (x) environment`, system factor first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, eigh, expm_hermitian, ket_bra, partial_trace, superop_from_action, tensor, trace_norm,
    CMatrix, DensityMatrix, Superoperator, I,
};
use crate::lindblad::{self, QuantumChannel};

/// Coupling Hamiltonian `a (x) |1><0| + a^† (x) |0><1|`: in blocks indexed
/// by the environment it is `[[0, a^†], [a, 0]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilatedHamiltonian {
    #[serde(with = "linalg::json::matrix_serde")]
    pub a: CMatrix,
    #[serde(with = "linalg::json::matrix_serde")]
    pub h_ae: CMatrix,
}

impl DilatedHamiltonian {
    pub fn new(a: &CMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("jump operator must be square".into()));
        }
        if !linalg::is_finite(a) {
            return Err(Error::NonFinite);
        }
        let h_ae = tensor(a, &ket_bra(1, 0, 2)) + tensor(&a.adjoint(), &ket_bra(0, 1, 2));
        Ok(Self { a: a.clone(), h_ae })
    }

    pub fn system_dim(&self) -> usize {
        self.a.nrows()
    }
}

/// `rho (x) |0><0|`.
pub fn prep_channel(rho: &DensityMatrix) -> DensityMatrix {
    DensityMatrix::with_tol(prep(rho.matrix()), 1e-9).expect("tensor product of densities")
}

fn prep(x: &CMatrix) -> CMatrix {
    tensor(x, &ket_bra(0, 0, 2))
}

fn trace_env(x: &CMatrix, d: usize) -> CMatrix {
    partial_trace(x, &[d, 2], &[0]).expect("composite dimensions are consistent")
}

/// Superoperator on the system of `x -> tr_E Phi(x (x) |0><0|)`.
pub fn compress<F>(phi: F, d: usize) -> Superoperator
where
    F: Fn(&CMatrix) -> CMatrix,
{
    superop_from_action(|x| trace_env(&phi(&prep(x)), d), d)
}

/// `tr_E L_H prep` for the coupling Hamiltonian of `a`, where `L_H` is the
/// dissipator with the Hermitian jump `H`.
pub fn reduced_generator(a: &CMatrix) -> Result<Superoperator> {
    let h = DilatedHamiltonian::new(a)?;
    let l = lindblad::Lindbladian::single_jump(h.h_ae.clone());
    let d = h.system_dim();
    Ok(compress(
        |x| lindblad::apply_operator(&l, x).expect("dimensions match"),
        d,
    ))
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and nonnegative, got {t}"
        )));
    }
    Ok(())
}

fn check_hermitian(h: &CMatrix) -> Result<()> {
    if h.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch("Hamiltonian must be square".into()));
    }
    let dev = linalg::hermiticity_deviation(h);
    let tol = linalg::HERM_TOL_PER_DIM * h.nrows() as f64;
    if dev > tol {
        return Err(Error::NotHermitian { deviation: dev, tol });
    }
    Ok(())
}

fn mixture_superop(h: &CMatrix, t: f64) -> Superoperator {
    let s = (2.0 * t).sqrt();
    let up = Superoperator::conjugation(&expm_hermitian(h, I * s));
    let down = Superoperator::conjugation(&expm_hermitian(h, -I * s));
    up.add(&down).scale(0.5)
}

/// Equal mixture of conjugations by `exp(+-i sqrt(2t) H)`.
pub fn unitary_mixture_step(h: &CMatrix, t: f64) -> Result<QuantumChannel> {
    check_time(t)?;
    check_hermitian(h)?;
    QuantumChannel::new(mixture_superop(h, t), 1e-9, 1e-9)
}

/// `exp(t L_H)` in closed form: the `e_j x e_l` component of `x` is damped
/// by `exp(-t (lambda_j - lambda_l)^2)`.
pub fn gaussian_dephasing(h: &CMatrix, t: f64) -> Result<Superoperator> {
    check_time(t)?;
    check_hermitian(h)?;
    let (vals, vecs) = eigh(h);
    let d = vals.len();
    let vd = vecs.adjoint();
    Ok(superop_from_action(
        |x| {
            let mut y = &vd * x * &vecs;
            for j in 0..d {
                for l in 0..d {
                    let g = vals[j] - vals[l];
                    y[(j, l)] *= c((-t * g * g).exp());
                }
            }
            &vecs * y * &vd
        },
        d,
    ))
}

/// Trace norm of the Choi difference, divided by the dimension so that
/// the distance between channels lies in `[0, 2]`.
pub fn choi_distance(a: &Superoperator, b: &Superoperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("superoperators differ in dimension".into()));
    }
    let diff = a.choi().mat - b.choi().mat;
    Ok(trace_norm(&diff) / a.dim() as f64)
}

/// Distance between the unitary mixture and the Gaussian semigroup.
pub fn mixture_error(h: &CMatrix, t: f64) -> Result<f64> {
    let mix = unitary_mixture_step(h, t)?;
    choi_distance(&mix.superop, &gaussian_dephasing(h, t)?)
}

fn power(s: &Superoperator, mut n: usize) -> Superoperator {
    let mut base = s.clone();
    let mut acc = Superoperator::identity(s.dim());
    while n > 0 {
        if n & 1 == 1 {
            acc = acc.compose(&base);
        }
        n >>= 1;
        if n > 0 {
            base = base.compose(&base);
        }
    }
    acc
}

/// `n` repetitions of prepare, mix for `t / n`, trace out.
pub fn simulate_dissipator_via_dilation(a: &CMatrix, t: f64, n_trotter: usize) -> Result<QuantumChannel> {
    check_time(t)?;
    if n_trotter == 0 {
        return Err(Error::InvalidParameter("n_trotter must be at least 1".into()));
    }
    let h = DilatedHamiltonian::new(a)?;
    let d = h.system_dim();
    let mix = mixture_superop(&h.h_ae, t / n_trotter as f64);
    let step = compress(|x| mix.apply(x).expect("dimensions match"), d);
    QuantumChannel::new(power(&step, n_trotter), 1e-9, 1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilationErrorPoint {
    pub n: usize,
    pub error: f64,
}

/// Choi distance between the dilation pipeline and `exp(t D_a)` per `n`.
pub fn dilation_error_curve(a: &CMatrix, t: f64, ns: &[usize]) -> Result<Vec<DilationErrorPoint>> {
    let exact = lindblad::dissipator(a).exp(t);
    ns.iter()
        .map(|&n| {
            let sim = simulate_dissipator_via_dilation(a, t, n)?;
            Ok(DilationErrorPoint {
                n,
                error: choi_distance(&sim.superop, &exact)?,
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two matched points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// `H1 (x) |0><0| + H2 (x) |1><1|` on `AE (x) E'`: a control qubit selects
/// which Hamiltonian acts.
pub fn direct_sum_hamiltonian(h1: &CMatrix, h2: &CMatrix) -> Result<CMatrix> {
    if h1.shape() != h2.shape() {
        return Err(Error::DimensionMismatch("Hamiltonians differ in shape".into()));
    }
    check_hermitian(h1)?;
    check_hermitian(h2)?;
    Ok(tensor(h1, &ket_bra(0, 0, 2)) + tensor(h2, &ket_bra(1, 1, 2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{ginibre, random_density, random_hermitian, seeded_rng};
    use crate::linalg::{is_cp, is_tp, max_abs, pauli_z};
    use crate::lindblad::dissipator;
    use proptest::prelude::*;

    #[test]
    fn prep_examples() {
        let mm = DensityMatrix::maximally_mixed(2);
        let p = prep_channel(&mm);
        assert_eq!(p.matrix(), &tensor(mm.matrix(), &ket_bra(0, 0, 2)));
        assert_eq!(trace_env(p.matrix(), 2), *mm.matrix());
        let pure = DensityMatrix::basis(1, 3);
        let pp = prep_channel(&pure);
        let purity = (pp.matrix() * pp.matrix()).trace().re;
        assert!((purity - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_blocks() {
        let a = ket_bra(0, 1, 2);
        let h = DilatedHamiltonian::new(&a).unwrap();
        assert_eq!(linalg::hermiticity_deviation(&h.h_ae), 0.0);
        // environment-outer view: swap the factor order
        let lower = partial_trace(&(&h.h_ae * tensor(&linalg::identity(2), &ket_bra(0, 1, 2))), &[2, 2], &[0]).unwrap();
        assert_eq!(lower, a);
    }

    #[test]
    fn reduced_generator_examples() {
        let z = reduced_generator(&CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.matrix(), Superoperator::zero(2).matrix());
        let a = ket_bra(0, 1, 2);
        let r = reduced_generator(&a).unwrap();
        assert!(max_abs(&(r.matrix() - dissipator(&a).matrix())) < 1e-12);
        let mut rng = seeded_rng(11);
        let a = ginibre(3, 3, &mut rng);
        let r = reduced_generator(&a).unwrap();
        assert!(max_abs(&(r.matrix() - dissipator(&a).matrix())) < 1e-12);
    }

    #[test]
    fn gaussian_matches_generator_exponential() {
        let mut rng = seeded_rng(3);
        let h = random_hermitian(3, &mut rng);
        let exact = dissipator(&h).exp(0.7);
        assert!(max_abs(&(gaussian_dephasing(&h, 0.7).unwrap().matrix() - exact.matrix())) < 1e-12);
    }

    #[test]
    fn mixture_examples() {
        let z = pauli_z();
        let m0 = unitary_mixture_step(&z, 0.0).unwrap();
        assert!(max_abs(&(m0.superop.matrix() - Superoperator::identity(2).matrix())) < 1e-15);
        let ts = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
        let errs: Vec<f64> = ts.iter().map(|&t| mixture_error(&z, t).unwrap()).collect();
        let slope = log_log_slope(&ts, &errs).unwrap();
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
        assert!(unitary_mixture_step(&z, -1.0).is_err());
    }

    #[test]
    fn dilation_of_amplitude_damping() {
        let a = ket_bra(0, 1, 2);
        let id = simulate_dissipator_via_dilation(&a, 0.0, 3).unwrap();
        assert!(max_abs(&(id.superop.matrix() - Superoperator::identity(2).matrix())) < 1e-14);
        let curve = dilation_error_curve(&a, 1.0, &[64, 128, 256, 4096]).unwrap();
        assert!(curve[3].error <= 1e-3, "{curve:?}");
        for w in curve[..3].windows(2) {
            let ratio = w[0].error / w[1].error;
            assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
        }
        assert!(simulate_dissipator_via_dilation(&a, 1.0, 0).is_err());
    }

    #[test]
    fn direct_sum_selects_block() {
        let mut rng = seeded_rng(8);
        let h1 = random_hermitian(2, &mut rng);
        let h2 = random_hermitian(2, &mut rng);
        let h = direct_sum_hamiltonian(&h1, &h2).unwrap();
        let t = 0.4;
        let u = expm_hermitian(&h, I * t);
        let expected = tensor(&expm_hermitian(&h1, I * t), &ket_bra(0, 0, 2))
            + tensor(&expm_hermitian(&h2, I * t), &ket_bra(1, 1, 2));
        assert!(max_abs(&(u - expected)) < 1e-12);
        // a maximally mixed control qubit turns the selection into an average
        let rho = random_density(2, 2, &mut rng);
        let u = expm_hermitian(&h, I * t);
        let joint = &u * tensor(&rho, &(linalg::identity(2) * c(0.5))) * u.adjoint();
        let u1 = expm_hermitian(&h1, I * t);
        let u2 = expm_hermitian(&h2, I * t);
        let avg = (&u1 * &rho * u1.adjoint() + &u2 * &rho * u2.adjoint()) * c(0.5);
        assert!(max_abs(&(trace_env(&joint, 2) - avg)) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn reduced_generator_is_dissipator(seed in any::<u64>(), d in 2usize..5) {
            let mut rng = seeded_rng(seed);
            let a = ginibre(d, d, &mut rng);
            let r = reduced_generator(&a).unwrap();
            prop_assert!(max_abs(&(r.matrix() - dissipator(&a).matrix())) <= 1e-12);
        }

        #[test]
        fn dilation_output_is_cptp(seed in any::<u64>(), t in 0.0f64..2.0, n in 1usize..32) {
            let mut rng = seeded_rng(seed);
            let a = ginibre(2, 2, &mut rng);
            let ch = simulate_dissipator_via_dilation(&a, t, n).unwrap();
            prop_assert!(is_cp(&ch.superop, 1e-9) && is_tp(&ch.superop, 1e-9));
        }

        #[test]
        fn mixture_is_cptp(seed in any::<u64>(), t in 0.0f64..5.0) {
            let mut rng = seeded_rng(seed);
            let h = random_hermitian(3, &mut rng);
            prop_assert!(unitary_mixture_step(&h, t).is_ok());
        }
    }
}
