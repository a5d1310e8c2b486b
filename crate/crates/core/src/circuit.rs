//! Gate-level statevector simulation and circuit builders.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{QstError, Result};
use crate::numeric::{CMatrix, I, ONE, ZERO};
use crate::rng::{rng_from, Rng};
use crate::state::StateVector;

/// Rotation angle: either fixed at construction or bound to a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Angle {
    Fixed(f64),
    Param(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Cnot { control: usize, target: usize },
    Rx(usize, Angle),
    Ry(usize, Angle),
    Rz(usize, Angle),
    /// Applies `matrix` to `targets` (first target most significant) when
    /// `control` is set.
    ControlledU {
        control: usize,
        targets: Vec<usize>,
        matrix: CMatrix,
    },
}

impl Gate {
    fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Rx(q, _) | Gate::Ry(q, _) | Gate::Rz(q, _) => vec![*q],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::ControlledU {
                control, targets, ..
            } => std::iter::once(*control).chain(targets.iter().copied()).collect(),
        }
    }

    fn angle(&self) -> Option<Angle> {
        match self {
            Gate::Rx(_, a) | Gate::Ry(_, a) | Gate::Rz(_, a) => Some(*a),
            _ => None,
        }
    }
}

/// Which template [`build_ansatz`] emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzTag {
    /// Per layer: RX and RY on every qubit, then a CNOT ladder.
    VqcLayered,
    /// Per layer: RY and RZ on every qubit, then a CNOT ladder.
    CircuitA,
    /// Per layer: RY on every qubit, then a CNOT ladder; one closing RY layer.
    CircuitB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnsatzKind {
    pub tag: AnsatzTag,
    pub depth: usize,
}

impl AnsatzKind {
    pub fn new(tag: AnsatzTag, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(QstError::InvalidArgument("ansatz depth must be >= 1".into()));
        }
        Ok(Self { tag, depth })
    }
}

/// Ordered gate list with rotation angles bound to parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterizedCircuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    /// `parameter_slots[k]` is the position in `gates` of the gate reading slot `k`.
    parameter_slots: Vec<usize>,
}

impl ParameterizedCircuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            gates: Vec::new(),
            parameter_slots: Vec::new(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_parameters(&self) -> usize {
        self.parameter_slots.len()
    }

    pub fn parameter_slots(&self) -> &[usize] {
        &self.parameter_slots
    }

    /// Appends a gate, checking qubit indices. A rotation given
    /// `Angle::Param(_)` is assigned the next free slot regardless of the
    /// index passed in.
    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let qs = gate.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= self.num_qubits {
                return Err(QstError::InvalidArgument(format!(
                    "qubit {q} out of range for a {}-qubit circuit",
                    self.num_qubits
                )));
            }
            if qs[..i].contains(&q) {
                return Err(QstError::InvalidArgument(format!("qubit {q} repeated in gate")));
            }
        }
        if let Gate::ControlledU { targets, matrix, .. } = &gate {
            let d = 1usize << targets.len();
            if matrix.rows() != d || matrix.cols() != d {
                return Err(QstError::DimensionMismatch(format!(
                    "controlled unitary on {} qubits needs a {d}x{d} matrix",
                    targets.len()
                )));
            }
        }
        let gate = match gate {
            Gate::Rx(q, Angle::Param(_)) => Gate::Rx(q, Angle::Param(self.parameter_slots.len())),
            Gate::Ry(q, Angle::Param(_)) => Gate::Ry(q, Angle::Param(self.parameter_slots.len())),
            Gate::Rz(q, Angle::Param(_)) => Gate::Rz(q, Angle::Param(self.parameter_slots.len())),
            g => g,
        };
        if matches!(gate.angle(), Some(Angle::Param(_))) {
            self.parameter_slots.push(self.gates.len());
        }
        self.gates.push(gate);
        Ok(self)
    }

    /// Circuit containing only the first `len` gates (parameters renumbered).
    pub fn prefix(&self, len: usize) -> Self {
        let mut c = Self::new(self.num_qubits);
        for g in self.gates.iter().take(len) {
            c.push(g.clone()).expect("gates were valid in the parent circuit");
        }
        c
    }

    fn cnot_ladder(&mut self) {
        for q in 0..self.num_qubits.saturating_sub(1) {
            self.push(Gate::Cnot {
                control: q,
                target: q + 1,
            })
            .expect("ladder qubits in range");
        }
    }
}

impl fmt::Display for ParameterizedCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.num_qubits;
        let mut lines: Vec<String> = (0..n).map(|q| format!("q{q}: ")).collect();
        let width = lines.iter().map(String::len).max().unwrap_or(0);
        for l in lines.iter_mut() {
            while l.len() < width {
                l.push(' ');
            }
        }
        let label = |a: &Angle| match a {
            Angle::Fixed(t) => format!("{t:.2}"),
            Angle::Param(k) => format!("t{k}"),
        };
        for g in &self.gates {
            let mut cells = vec![String::from("-"); n];
            match g {
                Gate::H(q) => cells[*q] = "H".into(),
                Gate::X(q) => cells[*q] = "X".into(),
                Gate::Rx(q, a) => cells[*q] = format!("RX({})", label(a)),
                Gate::Ry(q, a) => cells[*q] = format!("RY({})", label(a)),
                Gate::Rz(q, a) => cells[*q] = format!("RZ({})", label(a)),
                Gate::Cnot { control, target } => {
                    cells[*control] = "*".into();
                    cells[*target] = "+".into();
                }
                Gate::ControlledU {
                    control, targets, ..
                } => {
                    cells[*control] = "*".into();
                    for t in targets {
                        cells[*t] = "U".into();
                    }
                }
            }
            let w = cells.iter().map(String::len).max().unwrap_or(1);
            for (line, cell) in lines.iter_mut().zip(cells) {
                line.push('-');
                line.push_str(&cell);
                for _ in cell.len()..w {
                    line.push('-');
                }
            }
        }
        for (i, l) in lines.iter().enumerate() {
            if i + 1 < lines.len() {
                writeln!(f, "{l}-")?;
            } else {
                write!(f, "{l}-")?;
            }
        }
        Ok(())
    }
}

fn rotation_matrix(gate: &Gate, theta: f64) -> [C64; 4] {
    let (s, c) = (theta / 2.0).sin_cos();
    match gate {
        Gate::Rx(..) => [C64::new(c, 0.0), -I * s, -I * s, C64::new(c, 0.0)],
        Gate::Ry(..) => [C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
        Gate::Rz(..) => [(-I * (theta / 2.0)).exp(), ZERO, ZERO, (I * (theta / 2.0)).exp()],
        _ => unreachable!("not a rotation"),
    }
}

#[inline]
fn bit(n: usize, q: usize) -> usize {
    1 << (n - 1 - q)
}

fn apply_single(amps: &mut [C64], n: usize, q: usize, m: [C64; 4]) {
    let mask = bit(n, q);
    for i in 0..amps.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a, b) = (amps[i], amps[j]);
            amps[i] = m[0] * a + m[1] * b;
            amps[j] = m[2] * a + m[3] * b;
        }
    }
}

fn apply_cnot(amps: &mut [C64], n: usize, control: usize, target: usize) {
    let cm = bit(n, control);
    let tm = bit(n, target);
    for i in 0..amps.len() {
        if i & cm != 0 && i & tm == 0 {
            amps.swap(i, i | tm);
        }
    }
}

fn apply_controlled(amps: &mut [C64], n: usize, control: usize, targets: &[usize], u: &CMatrix) {
    let cm = bit(n, control);
    let masks: Vec<usize> = targets.iter().map(|&t| bit(n, t)).collect();
    let all: usize = masks.iter().sum();
    let d = 1usize << targets.len();
    let offset = |k: usize| -> usize {
        masks
            .iter()
            .enumerate()
            .filter(|(pos, _)| k & (1 << (targets.len() - 1 - pos)) != 0)
            .map(|(_, m)| m)
            .sum()
    };
    let offsets: Vec<usize> = (0..d).map(offset).collect();
    let mut buf = vec![ZERO; d];
    for base in 0..amps.len() {
        if base & cm == 0 || base & all != 0 {
            continue;
        }
        for (k, o) in offsets.iter().enumerate() {
            buf[k] = amps[base + o];
        }
        for (r, o) in offsets.iter().enumerate() {
            amps[base + o] = (0..d).map(|c| u[(r, c)] * buf[c]).sum();
        }
    }
}

/// Runs `c` on `input` with rotation slots bound to `params`.
pub fn run_circuit(
    c: &ParameterizedCircuit,
    params: &[f64],
    input: &StateVector,
) -> Result<StateVector> {
    if params.len() != c.num_parameters() {
        return Err(QstError::InvalidArgument(format!(
            "circuit has {} parameter slots, got {} values",
            c.num_parameters(),
            params.len()
        )));
    }
    if input.num_qubits() != c.num_qubits {
        return Err(QstError::DimensionMismatch(format!(
            "{}-qubit input for a {}-qubit circuit",
            input.num_qubits(),
            c.num_qubits
        )));
    }
    let n = c.num_qubits;
    let mut out = input.clone();
    let amps = out.amplitudes_mut();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for g in &c.gates {
        match g {
            Gate::H(q) => apply_single(
                amps,
                n,
                *q,
                [C64::new(h, 0.0), C64::new(h, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0)],
            ),
            Gate::X(q) => apply_single(amps, n, *q, [ZERO, ONE, ONE, ZERO]),
            Gate::Cnot { control, target } => apply_cnot(amps, n, *control, *target),
            Gate::Rx(q, a) | Gate::Ry(q, a) | Gate::Rz(q, a) => {
                let theta = match a {
                    Angle::Fixed(t) => *t,
                    Angle::Param(k) => params[*k],
                };
                apply_single(amps, n, *q, rotation_matrix(g, theta));
            }
            Gate::ControlledU {
                control,
                targets,
                matrix,
            } => apply_controlled(amps, n, *control, targets, matrix),
        }
    }
    Ok(out)
}

/// Hadamard on qubit 0 followed by the CNOT chain `i -> i+1`.
pub fn build_ghz(n: usize) -> Result<ParameterizedCircuit> {
    if n < 2 {
        return Err(QstError::InvalidArgument(format!("GHZ needs >= 2 qubits, got {n}")));
    }
    let mut c = ParameterizedCircuit::new(n);
    c.push(Gate::H(0))?;
    c.cnot_ladder();
    Ok(c)
}

pub fn build_ansatz(kind: AnsatzKind, n: usize) -> Result<ParameterizedCircuit> {
    if n == 0 {
        return Err(QstError::InvalidArgument("ansatz needs >= 1 qubit".into()));
    }
    if kind.depth == 0 {
        return Err(QstError::InvalidArgument("ansatz depth must be >= 1".into()));
    }
    let p = Angle::Param(0);
    let mut c = ParameterizedCircuit::new(n);
    for _ in 0..kind.depth {
        match kind.tag {
            AnsatzTag::VqcLayered => {
                for q in 0..n {
                    c.push(Gate::Rx(q, p))?;
                    c.push(Gate::Ry(q, p))?;
                }
            }
            AnsatzTag::CircuitA => {
                for q in 0..n {
                    c.push(Gate::Ry(q, p))?;
                }
                for q in 0..n {
                    c.push(Gate::Rz(q, p))?;
                }
            }
            AnsatzTag::CircuitB => {
                for q in 0..n {
                    c.push(Gate::Ry(q, p))?;
                }
            }
        }
        c.cnot_ladder();
    }
    if kind.tag == AnsatzTag::CircuitB {
        for q in 0..n {
            c.push(Gate::Ry(q, p))?;
        }
    }
    Ok(c)
}

/// Inverse quantum Fourier transform on `qubits` (first = most significant).
pub fn push_inverse_qft(c: &mut ParameterizedCircuit, qubits: &[usize]) -> Result<()> {
    let m = qubits.len();
    for i in 0..m / 2 {
        push_swap(c, qubits[i], qubits[m - 1 - i])?;
    }
    for j in (0..m).rev() {
        for k in (j + 1..m).rev() {
            let angle = -2.0 * PI / (1u64 << (k - j + 1)) as f64;
            c.push(Gate::ControlledU {
                control: qubits[k],
                targets: vec![qubits[j]],
                matrix: CMatrix::diag(&[ONE, (I * angle).exp()]),
            })?;
        }
        c.push(Gate::H(qubits[j]))?;
    }
    Ok(())
}

fn push_swap(c: &mut ParameterizedCircuit, a: usize, b: usize) -> Result<()> {
    c.push(Gate::Cnot { control: a, target: b })?;
    c.push(Gate::Cnot { control: b, target: a })?;
    c.push(Gate::Cnot { control: a, target: b })?;
    Ok(())
}

/// Multinomial draw of `shots` outcomes from `probs` (sequential binomials).
pub fn sample_multinomial(probs: &[f64], shots: u64, rng: &mut Rng) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass = 1.0f64;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p.max(0.0) / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        counts[i] = k;
        remaining -= k;
        mass -= p.max(0.0);
    }
    counts
}

/// `index` as an `n`-character bitstring, qubit 0 first.
pub fn bitstring(index: usize, n: usize) -> String {
    (0..n)
        .map(|q| if index & (1 << (n - 1 - q)) != 0 { '1' } else { '0' })
        .collect()
}

/// Histogram of `shots` computational-basis measurements of `state`.
/// Only outcomes that occurred appear in the map.
pub fn sample_counts(state: &StateVector, shots: u64, seed: u64) -> Result<BTreeMap<String, u64>> {
    if shots == 0 {
        return Err(QstError::InvalidArgument("shots must be >= 1".into()));
    }
    let counts = sample_multinomial(&state.probabilities(), shots, &mut rng_from(seed));
    Ok(counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (bitstring(i, state.num_qubits()), c))
        .collect())
}
