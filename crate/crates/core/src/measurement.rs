//! Pauli-basis measurement simulation.
//!
//! A basis label such as `"XZ"` measures qubit 0 in X and qubit 1 in Z.
//! Readout rotations: X via H, Y via S† then H, Z unrotated. Outcome bit 0
//! corresponds to the +1 eigenvector of the letter.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::circuit::sample_multinomial;
use crate::error::{QstError, Result};
use crate::numeric::{kron, pauli, CMatrix};
use crate::rng::derived_rng;
use crate::state::{DensityMatrix, Pauli, PauliString, StateVector};
use crate::tolerance;

/// Largest qubit count for which all `3^n` bases are enumerated.
pub const MAX_PAULI_QUBITS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MeasurementBasis {
    label: PauliString,
}

impl MeasurementBasis {
    pub fn new(label: PauliString) -> Result<Self> {
        if label.num_qubits() == 0 {
            return Err(QstError::InvalidArgument("empty basis label".into()));
        }
        if label.letters().contains(&Pauli::I) {
            return Err(QstError::InvalidArgument(format!(
                "basis {label} contains an identity letter"
            )));
        }
        Ok(Self { label })
    }

    pub fn label(&self) -> &PauliString {
        &self.label
    }

    pub fn num_qubits(&self) -> usize {
        self.label.num_qubits()
    }

    /// Single-qubit readout rotation for each letter.
    fn rotation(letter: Pauli) -> CMatrix {
        match letter {
            Pauli::X => pauli::h(),
            Pauli::Y => &pauli::h() * &pauli::s_dagger(),
            _ => pauli::i2(),
        }
    }

    /// Dense readout rotation `U` so that outcome `i` is `U†|i><i|U`.
    pub fn rotation_matrix(&self) -> CMatrix {
        self.label
            .letters()
            .iter()
            .fold(CMatrix::identity(1), |acc, &l| kron(&acc, &Self::rotation(l)))
    }

    /// Projector onto outcome `index`: `⊗_q (I ± P_q)/2`.
    pub fn projector(&self, index: usize) -> CMatrix {
        let n = self.num_qubits();
        self.label
            .letters()
            .iter()
            .enumerate()
            .fold(CMatrix::identity(1), |acc, (q, &l)| {
                let sign = if index & (1 << (n - 1 - q)) != 0 { -1.0 } else { 1.0 };
                let p = (&pauli::i2() + &l.matrix().scale_real(sign)).scale_real(0.5);
                kron(&acc, &p)
            })
    }

    /// Whether the expectation of Pauli string `p` follows from this basis.
    pub fn determines(&self, p: &PauliString) -> bool {
        p.letters()
            .iter()
            .zip(self.label.letters())
            .all(|(a, b)| *a == Pauli::I || a == b)
    }
}

impl fmt::Display for MeasurementBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.label.fmt(f)
    }
}

impl FromStr for MeasurementBasis {
    type Err = QstError;
    fn from_str(s: &str) -> Result<Self> {
        Self::new(s.parse()?)
    }
}

/// All `3^n` bases over `{X, Y, Z}` in lexicographic order.
pub fn all_pauli_bases(n: usize) -> Result<Vec<MeasurementBasis>> {
    if n == 0 || n > MAX_PAULI_QUBITS {
        return Err(QstError::InvalidArgument(format!(
            "all-Pauli bases limited to 1..={MAX_PAULI_QUBITS} qubits, got {n}"
        )));
    }
    const L: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
    Ok((0..3usize.pow(n as u32))
        .map(|mut k| {
            let mut letters = vec![Pauli::X; n];
            for slot in letters.iter_mut().rev() {
                *slot = L[k % 3];
                k /= 3;
            }
            MeasurementBasis {
                label: PauliString::new(letters),
            }
        })
        .collect())
}

/// Anything with Born-rule statistics.
#[derive(Debug, Clone, Copy)]
pub enum QuantumState<'a> {
    Pure(&'a StateVector),
    Mixed(&'a DensityMatrix),
}

impl<'a> From<&'a StateVector> for QuantumState<'a> {
    fn from(s: &'a StateVector) -> Self {
        QuantumState::Pure(s)
    }
}

impl<'a> From<&'a DensityMatrix> for QuantumState<'a> {
    fn from(s: &'a DensityMatrix) -> Self {
        QuantumState::Mixed(s)
    }
}

impl QuantumState<'_> {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(s) => s.dim(),
            QuantumState::Mixed(r) => r.dim(),
        }
    }
}

/// Exact outcome probabilities of measuring `state` in `basis`.
pub fn born_probabilities<'a>(
    state: impl Into<QuantumState<'a>>,
    basis: &MeasurementBasis,
) -> Result<Vec<f64>> {
    let state = state.into();
    let d = 1usize << basis.num_qubits();
    if state.dim() != d {
        return Err(QstError::DimensionMismatch(format!(
            "basis {basis} on a state of dimension {}",
            state.dim()
        )));
    }
    let u = basis.rotation_matrix();
    let mut p: Vec<f64> = match state {
        QuantumState::Pure(s) => u.matvec(s.amplitudes())?.iter().map(|a| a.norm_sqr()).collect(),
        QuantumState::Mixed(r) => {
            let m = r.matrix();
            (0..d)
                .map(|i| {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..d {
                        let uij = u[(i, j)];
                        if uij.norm_sqr() == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            acc += uij * m[(j, k)] * u[(i, k)].conj();
                        }
                    }
                    acc.re
                })
                .collect()
        }
    };
    for x in p.iter_mut() {
        *x = x.max(0.0);
    }
    let total: f64 = p.iter().sum();
    for x in p.iter_mut() {
        *x /= total;
    }
    Ok(p)
}

/// Per-basis empirical outcome frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementDataset {
    num_qubits: usize,
    bases: Vec<MeasurementBasis>,
    freqs: Vec<Vec<f64>>,
    /// Zero marks exact (noiseless) probabilities.
    shots_per_basis: u64,
}

impl MeasurementDataset {
    pub fn new(
        num_qubits: usize,
        bases: Vec<MeasurementBasis>,
        freqs: Vec<Vec<f64>>,
        shots_per_basis: u64,
    ) -> Result<Self> {
        if bases.is_empty() {
            return Err(QstError::InvalidArgument("dataset has no bases".into()));
        }
        if bases.len() != freqs.len() {
            return Err(QstError::DimensionMismatch(format!(
                "{} bases but {} frequency vectors",
                bases.len(),
                freqs.len()
            )));
        }
        let d = 1usize << num_qubits;
        for (b, f) in bases.iter().zip(&freqs) {
            if b.num_qubits() != num_qubits || f.len() != d {
                return Err(QstError::DimensionMismatch(format!(
                    "basis {b} with {} frequencies in a {num_qubits}-qubit dataset",
                    f.len()
                )));
            }
            let s: f64 = f.iter().sum();
            if (s - 1.0).abs() > tolerance::FREQUENCY_SUM || f.iter().any(|&x| x < 0.0) {
                return Err(QstError::InvalidArgument(format!(
                    "frequencies for basis {b} do not form a distribution (sum {s})"
                )));
            }
        }
        Ok(Self {
            num_qubits,
            bases,
            freqs,
            shots_per_basis,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn bases(&self) -> &[MeasurementBasis] {
        &self.bases
    }

    pub fn freqs(&self) -> &[Vec<f64>] {
        &self.freqs
    }

    pub fn shots_per_basis(&self) -> u64 {
        self.shots_per_basis
    }

    pub fn is_noiseless(&self) -> bool {
        self.shots_per_basis == 0
    }

    /// Recovered raw counts (`f * shots`); `None` in noiseless mode.
    pub fn counts(&self) -> Option<Vec<Vec<u64>>> {
        (!self.is_noiseless()).then(|| {
            self.freqs
                .iter()
                .map(|f| {
                    f.iter()
                        .map(|x| (x * self.shots_per_basis as f64).round() as u64)
                        .collect()
                })
                .collect()
        })
    }

    /// Iterates `(basis, outcome index, frequency)` over the whole dataset.
    pub fn outcomes(&self) -> impl Iterator<Item = (&MeasurementBasis, usize, f64)> {
        self.bases
            .iter()
            .zip(&self.freqs)
            .flat_map(|(b, f)| f.iter().enumerate().map(move |(i, &x)| (b, i, x)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    n: usize,
    shots: u64,
    bases: Vec<String>,
    freqs: Vec<Vec<f64>>,
}

impl Serialize for MeasurementDataset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetJson {
            n: self.num_qubits,
            shots: self.shots_per_basis,
            bases: self.bases.iter().map(ToString::to_string).collect(),
            freqs: self.freqs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementDataset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = DatasetJson::deserialize(d)?;
        let bases = raw
            .bases
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<MeasurementBasis>>>()
            .map_err(D::Error::custom)?;
        MeasurementDataset::new(raw.n, bases, raw.freqs, raw.shots).map_err(D::Error::custom)
    }
}

/// Simulates `shots` measurements per basis. `shots == 0` stores the exact
/// Born probabilities. Each basis draws from its own stream derived from
/// `(seed, basis index)`.
pub fn simulate_dataset<'a>(
    state: impl Into<QuantumState<'a>>,
    bases: &[MeasurementBasis],
    shots: u64,
    seed: u64,
) -> Result<MeasurementDataset> {
    let state = state.into();
    let first = bases
        .first()
        .ok_or_else(|| QstError::InvalidArgument("no measurement bases given".into()))?;
    let n = first.num_qubits();
    let freqs = bases
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let p = born_probabilities(state, b)?;
            if shots == 0 {
                return Ok(p);
            }
            let mut rng = derived_rng(seed, &[k as u64]);
            Ok(sample_multinomial(&p, shots, &mut rng)
                .into_iter()
                .map(|c| c as f64 / shots as f64)
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    MeasurementDataset::new(n, bases.to_vec(), freqs, shots)
}
