//! Principal component reconstruction through phase estimation over
//! `U = e^{-iρt}`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64 as C64;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{push_inverse_qft, run_circuit, sample_multinomial, Gate, ParameterizedCircuit};
use crate::error::{QstError, Result};
use crate::numeric::{hermitian_eig, kron, partial_trace, unitarity_defect, unitary_evolution, CMatrix, Keep, I};
use crate::rng::{derive_seed, derived_rng, rng_from, tag, Rng};
use crate::state::{embed_to_dimension, random_pure_state, uhlmann_fidelity, DensityMatrix, StateVector};
use crate::tolerance;

pub const MAX_ANCILLA: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpeConfig {
    pub ancilla_qubits: usize,
    pub t: f64,
    /// QPE rounds per reconstruction.
    pub shots: u64,
}

impl Default for QpeConfig {
    fn default() -> Self {
        Self {
            ancilla_qubits: 2,
            t: 20.3,
            shots: 100,
        }
    }
}

impl QpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ancilla_qubits == 0 || self.ancilla_qubits > MAX_ANCILLA {
            return Err(QstError::InvalidArgument(format!(
                "ancilla qubits must be in 1..={MAX_ANCILLA}, got {}",
                self.ancilla_qubits
            )));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(QstError::InvalidArgument(format!("evolution time {} must be >= 0", self.t)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub t_start: f64,
    pub t_step: f64,
    pub t_count: usize,
    pub iterations: usize,
    /// Draw a fresh random pure state of the same size for every iteration.
    pub resample_state: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            t_start: 2.0,
            t_step: 0.1,
            t_count: 280,
            iterations: 50,
            resample_state: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_step > 0.0) || !self.t_start.is_finite() {
            return Err(QstError::InvalidArgument("t_step must be > 0 and t_start finite".into()));
        }
        if self.t_count == 0 || self.iterations == 0 {
            return Err(QstError::InvalidArgument("t_count and iterations must be >= 1".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.t_count).map(|n| self.t_start + self.t_step * n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: f64,
    pub mean_fidelity: f64,
    /// Population standard deviation.
    pub std_fidelity: f64,
    pub fidelities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn from_points(times: &[f64], fidelities: Vec<Vec<f64>>) -> Self {
        let points = times
            .iter()
            .zip(fidelities)
            .map(|(&t, f)| {
                let (mean, std) = mean_std(&f);
                SweepPoint {
                    t,
                    mean_fidelity: mean,
                    std_fidelity: std,
                    fidelities: f,
                }
            })
            .collect();
        Self { points }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,mean_fidelity,std_fidelity,n_iterations")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                p.t,
                p.mean_fidelity,
                p.std_fidelity,
                p.fidelities.len()
            )?;
        }
        Ok(())
    }

    /// Index of the best mean is neither the first nor the last grid point.
    pub fn has_interior_maximum(&self) -> bool {
        match best_index(&self.points) {
            Some(i) => i > 0 && i + 1 < self.points.len(),
            None => false,
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn best_index(points: &[SweepPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        match best {
            Some(b) if p.mean_fidelity <= points[b].mean_fidelity => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalT {
    pub t: f64,
    pub mean_fidelity: f64,
    pub std_fidelity: f64,
    pub n_iterations: usize,
    /// `F̄ ± 1.96σ`
    pub ci_sigma: (f64, f64),
    /// `F̄ ± 1.96σ/√N`
    pub ci_standard_error: (f64, f64),
}

/// Best mean fidelity on the grid, ties going to the smallest `t`.
pub fn find_optimal_t(result: &SweepResult) -> Result<OptimalT> {
    let i = best_index(&result.points)
        .ok_or_else(|| QstError::InvalidArgument("empty sweep result".into()))?;
    let p = &result.points[i];
    let n = p.fidelities.len().max(1);
    let half = 1.96 * p.std_fidelity;
    let half_se = half / (n as f64).sqrt();
    Ok(OptimalT {
        t: p.t,
        mean_fidelity: p.mean_fidelity,
        std_fidelity: p.std_fidelity,
        n_iterations: p.fidelities.len(),
        ci_sigma: (p.mean_fidelity - half, p.mean_fidelity + half),
        ci_standard_error: (p.mean_fidelity - half_se, p.mean_fidelity + half_se),
    })
}

/// One partial-swap step: `Tr_1[e^{-iS dt} (ρ⊗σ) e^{iS dt}]`.
pub fn swap_exponentiation_step(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    dt: f64,
) -> Result<DensityMatrix> {
    let d = rho.dim();
    if sigma.dim() != d {
        return Err(QstError::DimensionMismatch(format!(
            "swap step on dimensions {d} and {}",
            sigma.dim()
        )));
    }
    // S² = 1, so e^{-iS dt} = cos(dt) 1 - i sin(dt) S.
    let s = swap_operator(d);
    let u = &CMatrix::identity(d * d).scale_real(dt.cos()) - &s.scale(I * dt.sin());
    let joint = kron(rho.matrix(), sigma.matrix());
    let evolved = &(&u * &joint) * &u.adjoint();
    let out = partial_trace(&evolved, (d, d), Keep::B)?;
    Ok(DensityMatrix::from_gram_unchecked(out))
}

pub fn swap_operator(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(i * d + j, j * d + i)] = C64::new(1.0, 0.0);
        }
    }
    s
}

/// `U^p` for unitary `U` by repeated squaring.
fn unitary_power(u: &CMatrix, mut p: u64) -> CMatrix {
    let mut result = CMatrix::identity(u.rows());
    let mut base = u.clone();
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
        }
        base = &base * &base;
        p >>= 1;
    }
    result
}

/// Phase-estimation circuit: ancillas `0..m` (first most significant),
/// system qubits after them.
pub fn qpe_circuit(u: &CMatrix, m: usize) -> Result<ParameterizedCircuit> {
    let d = u.rows();
    if !d.is_power_of_two() || d < 2 {
        return Err(QstError::DimensionMismatch(format!("unitary dimension {d} is not 2^n")));
    }
    let n = d.trailing_zeros() as usize;
    let mut c = ParameterizedCircuit::new(m + n);
    for a in 0..m {
        c.push(Gate::H(a))?;
    }
    let targets: Vec<usize> = (m..m + n).collect();
    for a in 0..m {
        c.push(Gate::ControlledU {
            control: a,
            targets: targets.clone(),
            matrix: unitary_power(u, 1u64 << (m - 1 - a)),
        })?;
    }
    let anc: Vec<usize> = (0..m).collect();
    push_inverse_qft(&mut c, &anc)?;
    Ok(c)
}

/// Exact outcome distribution of one phase-estimation round together with
/// the normalized system state conditioned on each outcome.
#[derive(Debug, Clone)]
pub struct QpeTable {
    pub probabilities: Vec<f64>,
    /// `None` where the outcome has zero probability.
    pub conditional_states: Vec<Option<CMatrix>>,
}

pub fn qpe_table(rho_input: &DensityMatrix, u: &CMatrix, m: usize) -> Result<QpeTable> {
    if m == 0 || m > MAX_ANCILLA {
        return Err(QstError::InvalidArgument(format!("ancilla qubits must be in 1..={MAX_ANCILLA}")));
    }
    let defect = unitarity_defect(u);
    if defect > tolerance::UNITARY {
        return Err(QstError::NotUnitary(defect));
    }
    let d = rho_input.dim();
    if u.rows() != d {
        return Err(QstError::DimensionMismatch(format!(
            "unitary of dimension {} for a {d}-dimensional state",
            u.rows()
        )));
    }
    let circuit = qpe_circuit(u, m)?;
    let k_count = 1usize << m;
    let eig = hermitian_eig(rho_input.matrix())?;
    let mut probabilities = vec![0.0; k_count];
    let mut unnormalized = vec![CMatrix::zeros(d, d); k_count];
    let anc_zero = StateVector::zero(m);
    for (i, &p) in eig.eigenvalues.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let input = anc_zero.tensor(&StateVector::new(eig.vector(i))?);
        let out = run_circuit(&circuit, &[], &input)?;
        let amps = out.amplitudes();
        for k in 0..k_count {
            let block = &amps[k * d..(k + 1) * d];
            let w: f64 = block.iter().map(|a| a.norm_sqr()).sum();
            if w == 0.0 {
                continue;
            }
            probabilities[k] += p * w;
            let proj = CMatrix::outer(block).scale_real(p);
            unnormalized[k] = &unnormalized[k] + &proj;
        }
    }
    let conditional_states = unnormalized
        .into_iter()
        .zip(&probabilities)
        .map(|(m, &pk)| (pk > 1e-15).then(|| m.scale_real(1.0 / pk).hermitian_part()))
        .collect();
    Ok(QpeTable {
        probabilities,
        conditional_states,
    })
}

/// One simulated phase-estimation round: measured outcome `k` and the
/// post-measurement system state.
pub fn qpe_round(
    rho_input: &DensityMatrix,
    u: &CMatrix,
    cfg: &QpeConfig,
    seed: u64,
) -> Result<(usize, DensityMatrix)> {
    cfg.validate()?;
    let table = qpe_table(rho_input, u, cfg.ancilla_qubits)?;
    let k = sample_index(&table.probabilities, &mut rng_from(seed));
    let state = table.conditional_states[k]
        .clone()
        .expect("sampled outcome has positive probability");
    Ok((k, DensityMatrix::from_gram_unchecked(state)))
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut r = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = i;
        if r < p {
            return i;
        }
        r -= p;
    }
    last
}

/// Eigenvalue read off outcome `k`: `U = e^{-iλt}` has phase `-λt/2π mod 1`.
pub fn eigenvalue_from_outcome(k: usize, m: usize, t: f64) -> f64 {
    let n = 1usize << m;
    let j = (n - k % n) % n;
    2.0 * PI * j as f64 / (n as f64 * t)
}

/// Runs `cfg.shots` phase-estimation rounds on `rho_original` and rebuilds
/// the state. Each outcome `k` contributes its principal conditional
/// eigenvector with eigenvalue estimate `λ̃_k` (clipped to `[0,1]`), the rest
/// of its weight spread evenly over the orthogonal complement.
pub fn reconstruct_from_qpe(rho_original: &DensityMatrix, cfg: &QpeConfig, seed: u64) -> Result<DensityMatrix> {
    cfg.validate()?;
    if cfg.shots == 0 {
        return Err(QstError::InvalidArgument("reconstruction needs at least one shot".into()));
    }
    let u = unitary_evolution(rho_original.matrix(), cfg.t)?;
    let table = qpe_table(rho_original, &u, cfg.ancilla_qubits)?;
    let counts = sample_multinomial(&table.probabilities, cfg.shots, &mut rng_from(seed));
    assemble(&table, &counts, cfg)
}

fn assemble(table: &QpeTable, counts: &[u64], cfg: &QpeConfig) -> Result<DensityMatrix> {
    let total: u64 = counts.iter().sum();
    let mut out: Option<CMatrix> = None;
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let cond = table.conditional_states[k]
            .as_ref()
            .expect("observed outcome has positive probability");
        let d = cond.rows();
        let eig = hermitian_eig(cond)?;
        let chi = CMatrix::outer(&eig.vector(0));
        let lambda = if cfg.t > 0.0 {
            eigenvalue_from_outcome(k, cfg.ancilla_qubits, cfg.t).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let rest = &CMatrix::identity(d) - &chi;
        let term = &chi.scale_real(lambda) + &rest.scale_real((1.0 - lambda) / (d - 1) as f64);
        let term = term.scale_real(c as f64 / total as f64);
        out = Some(match out {
            Some(acc) => &acc + &term,
            None => term,
        });
    }
    Ok(DensityMatrix::from_gram_unchecked(out.expect("at least one shot")))
}

/// Mean and spread of reconstruction fidelity over a grid of evolution times.
pub fn fidelity_sweep(
    rho_original: &DensityMatrix,
    sweep: &SweepConfig,
    qpe: &QpeConfig,
    seed: u64,
) -> Result<SweepResult> {
    sweep.validate()?;
    qpe.validate()?;
    let times = sweep.times();
    let qubits = rho_original
        .num_qubits()
        .ok_or_else(|| QstError::DimensionMismatch("state dimension is not 2^n".into()))?;
    let states: Vec<DensityMatrix> = if sweep.resample_state {
        (0..sweep.iterations)
            .map(|j| {
                random_pure_state(qubits, derive_seed(seed, &[tag("qpca-state"), j as u64]))
                    .map(|s| s.to_density())
            })
            .collect::<Result<_>>()?
    } else {
        vec![rho_original.clone()]
    };
    let jobs: Vec<(usize, usize)> = (0..times.len())
        .flat_map(|i| (0..sweep.iterations).map(move |j| (i, j)))
        .collect();
    let flat: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let rho = &states[j % states.len()];
            let cfg = QpeConfig { t: times[i], ..*qpe };
            let s = derived_rng(seed, &[tag("qpca"), i as u64, j as u64]).random::<u64>();
            let rec = reconstruct_from_qpe(rho, &cfg, s)?;
            let (a, b) = embed_to_dimension(rho, &rec)?;
            uhlmann_fidelity(&a, &b)
        })
        .collect::<Result<_>>()?;
    let per_t = flat.chunks(sweep.iterations).map(|c| c.to_vec()).collect();
    Ok(SweepResult::from_points(&times, per_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{pauli, ONE, ZERO};

    fn ket(a: C64, b: C64) -> DensityMatrix {
        StateVector::new(vec![a, b]).unwrap().to_density()
    }

    #[test]
    fn swap_step_identities() {
        let rho = ket(ONE, ZERO);
        let sigma = ket(ONE, ONE);
        let same = swap_exponentiation_step(&sigma, &sigma, 0.05).unwrap();
        assert!(same.matrix().max_abs_diff(sigma.matrix()) < 1e-12);
        let zero = swap_exponentiation_step(&rho, &sigma, 0.0).unwrap();
        assert!(zero.matrix().max_abs_diff(sigma.matrix()) < 1e-15);
        assert!(swap_exponentiation_step(&rho, &DensityMatrix::maximally_mixed(4), 0.1).is_err());
    }

    #[test]
    fn swap_step_matches_first_order_expansion() {
        let rho = ket(ONE, ZERO);
        let sigma = ket(ONE, ONE);
        let dt = 0.01;
        let out = swap_exponentiation_step(&rho, &sigma, dt).unwrap();
        let comm = rho.matrix().commutator(sigma.matrix()).unwrap();
        let first = sigma.matrix() - &comm.scale(I * dt);
        assert!(out.matrix().max_abs_diff(&first) < 1e-3);
    }

    #[test]
    fn closed_form_swap_exponential() {
        let s = swap_operator(2);
        let dense = unitary_evolution(&s, 0.3).unwrap();
        let closed = &CMatrix::identity(4).scale_real(0.3f64.cos()) - &s.scale(I * 0.3f64.sin());
        assert!(dense.max_abs_diff(&closed) < 1e-12);
    }

    #[test]
    fn identity_unitary_gives_zero_phase() {
        let rho = ket(ONE, C64::new(0.3, 0.4));
        let cfg = QpeConfig::default();
        for seed in 0..5 {
            let (k, post) = qpe_round(&rho, &CMatrix::identity(2), &cfg, seed).unwrap();
            assert_eq!(k, 0);
            assert!(post.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        }
    }

    #[test]
    fn half_phase_reads_binary_ten() {
        let rho = ket(ZERO, ONE);
        let u = unitary_evolution(rho.matrix(), PI).unwrap();
        let table = qpe_table(&rho, &u, 2).unwrap();
        assert!((table.probabilities[2] - 1.0).abs() < 1e-12);
        let (k, post) = qpe_round(&rho, &u, &QpeConfig::default(), 3).unwrap();
        assert_eq!(k, 2);
        assert!(post.matrix().max_abs_diff(rho.matrix()) < 1e-8);
    }

    #[test]
    fn qpe_distribution_matches_textbook_formula() {
        // Eigenstate with phase φ: P(k) = |Σ_x e^{2πi x(φ - k/N)}|² / N².
        let rho = ket(ONE, ZERO);
        let t = 2.3;
        let u = unitary_evolution(rho.matrix(), t).unwrap();
        let m = 3;
        let n = 8usize;
        let table = qpe_table(&rho, &u, m).unwrap();
        let phi = (-t / (2.0 * PI)).rem_euclid(1.0);
        for k in 0..n {
            let s: C64 = (0..n)
                .map(|x| (I * 2.0 * PI * x as f64 * (phi - k as f64 / n as f64)).exp())
                .sum();
            let expected = s.norm_sqr() / (n * n) as f64;
            assert!((table.probabilities[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let rho = ket(ONE, ZERO);
        let bad = pauli::z().scale_real(2.0);
        assert!(matches!(
            qpe_round(&rho, &bad, &QpeConfig::default(), 0),
            Err(QstError::NotUnitary(_))
        ));
    }

    #[test]
    fn exact_resolution_recovers_basis_state() {
        let rho = ket(ONE, ZERO);
        let cfg = QpeConfig {
            t: PI,
            ..QpeConfig::default()
        };
        let rec = reconstruct_from_qpe(&rho, &cfg, 1).unwrap();
        assert!(uhlmann_fidelity(&rho, &rec).unwrap() >= 0.99);
    }

    #[test]
    fn maximally_mixed_reconstruction() {
        let rho = DensityMatrix::maximally_mixed(2);
        let cfg = QpeConfig {
            t: PI,
            shots: 1000,
            ..QpeConfig::default()
        };
        let rec = reconstruct_from_qpe(&rho, &cfg, 4).unwrap();
        assert!(rec.trace_distance(&rho).unwrap() < 0.2);
        assert!(rec.is_physical(tolerance::PHYSICAL_EIGENVALUE));
    }

    #[test]
    fn zero_shots_rejected() {
        let cfg = QpeConfig {
            shots: 0,
            ..QpeConfig::default()
        };
        assert!(reconstruct_from_qpe(&DensityMatrix::maximally_mixed(2), &cfg, 0).is_err());
    }

    #[test]
    fn eigenvalue_map() {
        assert_eq!(eigenvalue_from_outcome(0, 2, 1.0), 0.0);
        assert!((eigenvalue_from_outcome(2, 2, PI) - 1.0).abs() < 1e-15);
        assert!((eigenvalue_from_outcome(3, 2, PI) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn optimal_t_argmax_and_ties() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let r = SweepResult::from_points(
            &times,
            vec![vec![0.2], vec![0.9, 0.7], vec![0.8], vec![0.8]],
        );
        let o = find_optimal_t(&r).unwrap();
        assert_eq!(o.t, 2.0);
        assert!((o.mean_fidelity - 0.8).abs() < 1e-12);
        assert!((o.std_fidelity - 0.1).abs() < 1e-12);
        let half = 1.96 * 0.1;
        assert!((o.ci_sigma.0 - (0.8 - half)).abs() < 1e-12);
        assert!((o.ci_standard_error.1 - (0.8 + half / 2f64.sqrt())).abs() < 1e-12);
        assert!(r.has_interior_maximum());

        let tie = SweepResult::from_points(&times, vec![vec![0.5], vec![0.9], vec![0.9], vec![0.1]]);
        assert_eq!(find_optimal_t(&tie).unwrap().t, 2.0);
        let single = SweepResult::from_points(&[7.0], vec![vec![0.4]]);
        assert_eq!(find_optimal_t(&single).unwrap().t, 7.0);
        assert!(!single.has_interior_maximum());
        assert!(find_optimal_t(&SweepResult { points: vec![] }).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_bounded() {
        let rho = random_pure_state(1, 5).unwrap().to_density();
        let sweep = SweepConfig {
            t_start: 2.0,
            t_step: 1.0,
            t_count: 6,
            iterations: 4,
            resample_state: false,
        };
        let qpe = QpeConfig::default();
        let a = fidelity_sweep(&rho, &sweep, &qpe, 11).unwrap();
        let b = fidelity_sweep(&rho, &sweep, &qpe, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.points.len(), 6);
        for p in &a.points {
            assert!((0.0..=1.0).contains(&p.mean_fidelity));
            assert!(p.std_fidelity >= 0.0);
        }
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("t,mean_fidelity,std_fidelity,n_iterations"));
    }
}
