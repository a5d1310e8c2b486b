//! Quantum state types, random ensembles and fidelity.
//!
//! Qubit 0 is the most significant bit of a computational-basis index.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{QstError, Result};
use crate::numeric::{hermitian_eig, kron, pauli, CMatrix, EigenDecomposition, ZERO};
use crate::rng::{rng_from, Rng};
use crate::tolerance;

pub const MAX_QUBITS: usize = 10;

/// Normalized amplitude vector over `2^n` basis states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Wraps amplitudes, normalizing them. Fails on zero or mis-sized vectors.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QstError::DimensionMismatch(format!(
                "statevector length {len} is not 2^n with n >= 1"
            )));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(QstError::Unphysical("zero-norm statevector".into()));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// `|index>` on `n` qubits.
    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self {
            num_qubits,
            amplitudes,
        }
    }

    pub fn zero(num_qubits: usize) -> Self {
        Self::basis(num_qubits, 0)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|self> ⊗ |other>`
    pub fn tensor(&self, other: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            for b in &other.amplitudes {
                amps.push(a * b);
            }
        }
        Self {
            num_qubits: self.num_qubits + other.num_qubits,
            amplitudes: amps,
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            matrix: CMatrix::outer(&self.amplitudes),
        }
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and the eigenvalue floor.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QstError::DimensionMismatch("density matrix must be square".into()));
        }
        let asym = matrix.hermitian_asymmetry();
        if asym > tolerance::DENSITY_TRACE {
            return Err(QstError::NotHermitian(asym));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > tolerance::DENSITY_TRACE || tr.im.abs() > tolerance::DENSITY_TRACE
        {
            return Err(QstError::Unphysical(format!("trace {tr}")));
        }
        let matrix = matrix.hermitian_part();
        let min = *hermitian_eig(&matrix)?.eigenvalues.last().unwrap();
        if min < -tolerance::PHYSICAL_EIGENVALUE {
            return Err(QstError::Unphysical(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix })
    }

    /// For matrices physical by construction (Gram forms, convex mixtures).
    /// Symmetrizes and renormalizes the trace; no spectral check.
    pub(crate) fn from_gram_unchecked(matrix: CMatrix) -> Self {
        let h = matrix.hermitian_part();
        let tr = h.trace().re;
        Self {
            matrix: h.scale_real(1.0 / tr),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn num_qubits(&self) -> Option<usize> {
        let d = self.dim();
        d.is_power_of_two().then(|| d.trailing_zeros() as usize)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eig(&self.matrix)
            .expect("density matrix is Hermitian")
            .eigenvalues
    }

    /// Half the trace norm of the difference.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        check_same_dim(self, other)?;
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * hermitian_eig(&diff)?.eigenvalues.iter().map(|l| l.abs()).sum::<f64>())
    }

    /// `<ψ|ρ|ψ>`
    pub fn expectation_pure(&self, psi: &StateVector) -> f64 {
        let v = self.matrix.matvec(psi.amplitudes()).expect("dims");
        psi.amplitudes()
            .iter()
            .zip(&v)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .re
    }

    /// Checks the physicality invariants at the given eigenvalue floor.
    pub fn is_physical(&self, eig_floor: f64) -> bool {
        let tr = self.matrix.trace();
        (tr.re - 1.0).abs() <= tolerance::DENSITY_TRACE
            && tr.im.abs() <= tolerance::DENSITY_TRACE
            && self.matrix.hermitian_asymmetry() <= tolerance::DENSITY_TRACE
            && self.eigenvalues().last().is_some_and(|&m| m >= -eig_floor)
    }
}

fn check_same_dim(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(QstError::DimensionMismatch(format!(
            "states of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let re = (0..d).map(|i| (0..d).map(|j| self.matrix[(i, j)].re).collect()).collect();
        let im = (0..d).map(|i| (0..d).map(|j| self.matrix[(i, j)].im).collect()).collect();
        DensityMatrixJson { dim: d, re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = DensityMatrixJson::deserialize(d)?;
        let n = raw.dim;
        let ok = raw.re.len() == n
            && raw.im.len() == n
            && raw.re.iter().chain(&raw.im).all(|r| r.len() == n);
        if !ok {
            return Err(D::Error::custom("re/im must be dim x dim"));
        }
        let data = (0..n * n)
            .map(|k| C64::new(raw.re[k / n][k % n], raw.im[k / n][k % n]))
            .collect();
        let m = CMatrix::from_vec(n, n, data).map_err(D::Error::custom)?;
        DensityMatrix::new(m).map_err(D::Error::custom)
    }
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => pauli::i2(),
            Pauli::X => pauli::x(),
            Pauli::Y => pauli::y(),
            Pauli::Z => pauli::z(),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(QstError::InvalidArgument(format!("unknown Pauli letter {other:?}"))),
        }
    }
}

/// Tensor product of Pauli letters; leftmost letter acts on qubit 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    /// All `4^n` strings in `I < X < Y < Z` lexicographic order.
    pub fn all(n: usize) -> Vec<PauliString> {
        const L: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        (0..4usize.pow(n as u32))
            .map(|mut k| {
                let mut letters = vec![Pauli::I; n];
                for slot in letters.iter_mut().rev() {
                    *slot = L[k % 4];
                    k /= 4;
                }
                PauliString { letters }
            })
            .collect()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = QstError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(Self {
            letters: s.chars().map(Pauli::from_char).collect::<Result<_>>()?,
        })
    }
}

/// Dense matrix of a Pauli string.
pub fn pauli_matrix(p: &PauliString) -> CMatrix {
    p.letters
        .iter()
        .fold(CMatrix::identity(1), |acc, l| kron(&acc, &l.matrix()))
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(QstError::InvalidArgument(format!(
            "qubit count {n} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

fn gaussian_vector(rng: &mut Rng, len: usize) -> Vec<C64> {
    (0..len)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Haar-random pure state drawn from `rng`.
pub fn random_pure_state_with(n: usize, rng: &mut Rng) -> Result<StateVector> {
    check_qubits(n)?;
    StateVector::new(gaussian_vector(rng, 1 << n))
}

/// Haar-random pure state (normalized complex Gaussian vector).
pub fn random_pure_state(n: usize, seed: u64) -> Result<StateVector> {
    random_pure_state_with(n, &mut rng_from(seed))
}

/// `GG†/Tr(GG†)` with `G` a `2^n × rank` complex Gaussian matrix.
pub fn random_density_matrix_with(n: usize, rank: usize, rng: &mut Rng) -> Result<DensityMatrix> {
    check_qubits(n)?;
    let d = 1 << n;
    if rank == 0 || rank > d {
        return Err(QstError::InvalidArgument(format!("rank {rank} outside 1..={d}")));
    }
    let g = CMatrix::from_vec(d, rank, gaussian_vector(rng, d * rank))?;
    Ok(DensityMatrix::from_gram_unchecked(&g * &g.adjoint()))
}

pub fn random_density_matrix(n: usize, rank: usize, seed: u64) -> Result<DensityMatrix> {
    random_density_matrix_with(n, rank, &mut rng_from(seed))
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, clipped into `[0, 1]`.
///
/// Evaluated on the support of whichever argument has the lower numerical
/// rank: with `W = V_r diag(√λ_r)` the inner matrix is the `r×r` block
/// `W† σ W`.
pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho, sigma)?;
    let er = hermitian_eig(rho.matrix())?;
    let es = hermitian_eig(sigma.matrix())?;
    let rank = |e: &EigenDecomposition| {
        e.eigenvalues
            .iter()
            .filter(|&&l| l > tolerance::FIDELITY_RANK)
            .count()
            .max(1)
    };
    let (e, other) = if rank(&er) <= rank(&es) {
        (er, sigma)
    } else {
        (es, rho)
    };
    let r = rank(&e);
    let d = e.dim();
    let mut w = CMatrix::zeros(d, r);
    for k in 0..r {
        let s = e.eigenvalues[k].max(0.0).sqrt();
        for i in 0..d {
            w[(i, k)] = e.eigenvectors[(i, k)] * s;
        }
    }
    let inner = (&(&w.adjoint() * other.matrix()) * &w).hermitian_part();
    let tr: f64 = hermitian_eig(&inner)?
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    let f = tr * tr;
    if f > 1.0 + tolerance::FIDELITY_OVERSHOOT {
        log::warn!("fidelity overshoot {f}");
    }
    Ok(f.clamp(0.0, 1.0))
}

/// `|<ψ|φ>|²`
pub fn pure_fidelity(psi: &StateVector, phi: &StateVector) -> f64 {
    psi.inner(phi).norm_sqr().min(1.0)
}

/// Tensor the smaller state with a normalized identity so both share the
/// larger dimension. Equal dimensions return the inputs unchanged.
pub fn embed_to_dimension(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
) -> Result<(DensityMatrix, DensityMatrix)> {
    let (d1, d2) = (rho.dim(), sigma.dim());
    let d = d1.max(d2);
    if d % d1 != 0 || d % d2 != 0 {
        return Err(QstError::DimensionMismatch(format!(
            "cannot embed dimensions {d1} and {d2} into a common space"
        )));
    }
    let lift = |s: &DensityMatrix| -> DensityMatrix {
        let k = d / s.dim();
        if k == 1 {
            s.clone()
        } else {
            let id = CMatrix::identity(k).scale_real(1.0 / k as f64);
            DensityMatrix {
                matrix: kron(s.matrix(), &id),
            }
        }
    };
    Ok((lift(rho), lift(sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ONE;

    #[test]
    fn random_pure_state_is_normalized_and_deterministic() {
        let a = random_pure_state(1, 9).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a, random_pure_state(1, 9).unwrap());
        assert_ne!(a, random_pure_state(1, 10).unwrap());
        assert!(random_pure_state(0, 1).is_err());
        assert!(random_pure_state(11, 1).is_err());
    }

    #[test]
    fn haar_first_moment() {
        // E|<0|ψ>|² = 1/2 for Haar qubits.
        let mut rng = rng_from(77);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| random_pure_state_with(1, &mut rng).unwrap().probabilities()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }

    #[test]
    fn random_density_matrix_properties() {
        let rho = random_density_matrix(2, 1, 3).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);
        assert!(random_density_matrix(2, 0, 3).is_err());
        assert!(random_density_matrix(2, 5, 3).is_err());

        // Full-rank Ginibre average tends to I/d.
        let mut rng = rng_from(4);
        let mut acc = CMatrix::zeros(4, 4);
        let m = 2000;
        for _ in 0..m {
            let r = random_density_matrix_with(2, 4, &mut rng).unwrap();
            assert!(r.eigenvalues().last().unwrap() >= &-1e-10);
            acc = &acc + r.matrix();
        }
        let mean = acc.scale_real(1.0 / m as f64);
        assert!(mean.max_abs_diff(&CMatrix::identity(4).scale_real(0.25)) < 0.05);
    }

    #[test]
    fn fidelity_examples() {
        let rho = random_density_matrix(2, 3, 1).unwrap();
        assert!((uhlmann_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-8);
        let zero = StateVector::basis(1, 0).to_density();
        let one = StateVector::basis(1, 1).to_density();
        assert!(uhlmann_fidelity(&zero, &one).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((uhlmann_fidelity(&mixed, &zero).unwrap() - 0.5).abs() < 1e-12);
        assert!(uhlmann_fidelity(&mixed, &DensityMatrix::maximally_mixed(4)).is_err());
    }

    #[test]
    fn embedding() {
        let rho = random_density_matrix(1, 1, 5).unwrap();
        let sigma = random_density_matrix(2, 2, 6).unwrap();
        let (r, s) = embed_to_dimension(&rho, &sigma).unwrap();
        assert_eq!(s, sigma);
        let expect = kron(rho.matrix(), &CMatrix::identity(2).scale_real(0.5));
        assert!(r.matrix().max_abs_diff(&expect) < 1e-15);
        assert!(r.is_physical(1e-10));

        let big = random_density_matrix(3, 2, 7).unwrap();
        let (r, _) = embed_to_dimension(&rho, &big).unwrap();
        assert_eq!(r.dim(), 8);

        let (a, b) = embed_to_dimension(&rho, &rho).unwrap();
        assert_eq!((a.clone(), b), (rho.clone(), rho.clone()));

        let three = DensityMatrix::maximally_mixed(3);
        assert!(embed_to_dimension(&three, &sigma).is_err());
    }

    #[test]
    fn pauli_matrices() {
        let z: PauliString = "Z".parse().unwrap();
        assert_eq!(pauli_matrix(&z), CMatrix::diag_real(&[1.0, -1.0]));
        let xi: PauliString = "XI".parse().unwrap();
        assert_eq!(pauli_matrix(&xi), kron(&pauli::x(), &pauli::i2()));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ghz = StateVector::new(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]).unwrap();
        let zz: PauliString = "ZZ".parse().unwrap();
        let expect = DensityMatrix::new(pauli_matrix(&zz).scale_real(0.25))
            .map(|_| ())
            .is_err();
        assert!(expect, "ZZ/4 is not a state");
        let v = pauli_matrix(&zz).matvec(ghz.amplitudes()).unwrap();
        let e: C64 = ghz.amplitudes().iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
        assert!((e - ONE).norm() < 1e-14);
        assert!("XQ".parse::<PauliString>().is_err());
        assert_eq!(PauliString::all(2).len(), 16);
        assert_eq!(PauliString::all(1)[3].to_string(), "Z");
    }

    #[test]
    fn density_json_round_trip() {
        let rho = random_density_matrix(1, 2, 12).unwrap();
        let text = serde_json::to_string(&rho).unwrap();
        assert!(text.starts_with("{\"dim\":2,\"re\":"));
        let back: DensityMatrix = serde_json::from_str(&text).unwrap();
        assert!(back.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!(serde_json::from_str::<DensityMatrix>(r#"{"dim":2,"re":[[2,0],[0,0]],"im":[[0,0],[0,0]]}"#).is_err());
    }
}
