//! Variational reconstructors: purification-based VQC for mixed states and
//! the two-circuit amplitude/phase model (QVCS) for pure states.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::circuit::{build_ansatz, run_circuit, AnsatzKind, ParameterizedCircuit};
use crate::cobyla::{cobyla_minimize, DEFAULT_RHOEND};
use crate::error::{QstError, Result};
use crate::measurement::{born_probabilities, MeasurementDataset};
use crate::numeric::CMatrix;
use crate::result::ReconstructionResult;
use crate::rng::rng_from;
use crate::state::{pure_fidelity, DensityMatrix, StateVector};
use crate::tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMethod {
    GradientDescent,
    Cobyla,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub learning_rate: f64,
    /// Halve the learning rate and retry whenever a step raises the loss.
    pub backtracking: bool,
    pub rhobeg: f64,
    pub rhoend: f64,
    /// COBYLA evaluation budget.
    pub maxiter: usize,
    /// Gradient-descent iteration budget.
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: OptimizerMethod::GradientDescent,
            learning_rate: 0.1,
            backtracking: true,
            rhobeg: 30.0,
            rhoend: DEFAULT_RHOEND,
            maxiter: 150,
            max_iters: 200,
            tol: 1e-10,
        }
    }
}

impl OptimizerConfig {
    pub fn cobyla(rhobeg: f64, maxiter: usize) -> Self {
        Self {
            method: OptimizerMethod::Cobyla,
            rhobeg,
            maxiter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(QstError::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.maxiter == 0 || self.max_iters == 0 {
            return Err(QstError::InvalidArgument("iteration budgets must be >= 1".into()));
        }
        if !(self.rhobeg > 0.0 && self.rhoend > 0.0 && self.rhoend <= self.rhobeg) {
            return Err(QstError::InvalidArgument(format!(
                "need 0 < rhoend <= rhobeg, got {} and {}",
                self.rhoend, self.rhobeg
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(QstError::InvalidArgument(format!("tolerance {} is negative", self.tol)));
        }
        Ok(())
    }
}

/// Exact gradient of a circuit expectation whose parameters each enter one
/// Pauli rotation: `∂f/∂θ_i = [f(θ + π/2 e_i) - f(θ - π/2 e_i)] / 2`.
pub fn parameter_shift_gradient<F>(f: F, theta: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut shifted = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        shifted[i] = theta[i] + FRAC_PI_2;
        let plus = f(&shifted)?;
        shifted[i] = theta[i] - FRAC_PI_2;
        let minus = f(&shifted)?;
        shifted[i] = theta[i];
        grad.push(0.5 * (plus - minus));
    }
    Ok(grad)
}

fn uniform_angles(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..len).map(|_| rng.random_range(0.0..2.0 * PI)).collect()
}

/// Purification problem: a `2n`-qubit ansatz whose first `n` qubits should
/// reproduce `target` after tracing out the auxiliary half.
#[derive(Debug, Clone)]
pub struct VqcProblem {
    pub target: DensityMatrix,
    pub ansatz: ParameterizedCircuit,
    pub theta: Vec<f64>,
}

impl VqcProblem {
    pub fn new(target: DensityMatrix, ansatz: ParameterizedCircuit, theta: Vec<f64>) -> Result<Self> {
        let n = target.num_qubits().ok_or_else(|| {
            QstError::DimensionMismatch(format!("target dimension {} is not a qubit register", target.dim()))
        })?;
        if ansatz.num_qubits() != 2 * n {
            return Err(QstError::DimensionMismatch(format!(
                "{}-qubit ansatz for a {n}-qubit target",
                ansatz.num_qubits()
            )));
        }
        if theta.len() != ansatz.num_parameters() {
            return Err(QstError::InvalidArgument(format!(
                "ansatz has {} parameters, got {}",
                ansatz.num_parameters(),
                theta.len()
            )));
        }
        Ok(Self { target, ansatz, theta })
    }

    /// Problem on a fresh ansatz with angles drawn uniformly from `[0, 2π)`.
    pub fn random(target: DensityMatrix, kind: AnsatzKind, seed: u64) -> Result<Self> {
        let n = target.num_qubits().unwrap_or(0);
        let ansatz = build_ansatz(kind, 2 * n)?;
        let theta = uniform_angles(ansatz.num_parameters(), seed);
        Self::new(target, ansatz, theta)
    }

    fn half_dim(&self) -> usize {
        self.target.dim()
    }

    /// Output amplitudes reshaped as `M[s][a]` (system row, auxiliary column).
    fn purification(&self, theta: &[f64]) -> Result<CMatrix> {
        let d = self.half_dim();
        let psi = run_circuit(&self.ansatz, theta, &StateVector::zero(self.ansatz.num_qubits()))?;
        CMatrix::from_vec(d, d, psi.amplitudes().to_vec())
    }

    fn fidelity_at(&self, theta: &[f64]) -> Result<f64> {
        let m = self.purification(theta)?;
        let rho_m = self.target.matrix() * &m;
        Ok(m.adjoint().trace_product(&rho_m).re)
    }
}

/// `A(θ) = ⟨Ψ(θ)| ρ̂ ⊗ I |Ψ(θ)⟩`
pub fn vqc_fidelity(problem: &VqcProblem) -> Result<f64> {
    problem.fidelity_at(&problem.theta)
}

/// Reduced state of the system half, `Tr_aux |Ψ⟩⟨Ψ|`.
pub fn vqc_reduced_state(problem: &VqcProblem) -> Result<DensityMatrix> {
    let m = problem.purification(&problem.theta)?;
    Ok(DensityMatrix::from_gram_unchecked(&m * &m.adjoint()))
}

/// `a = 1 - √A`
pub fn loss_from_fidelity(a: f64) -> f64 {
    1.0 - a.max(0.0).sqrt()
}

pub fn vqc_loss(problem: &VqcProblem) -> Result<f64> {
    Ok(loss_from_fidelity(vqc_fidelity(problem)?))
}

/// Parameter-shift gradient of `A(θ)`.
pub fn vqc_fidelity_gradient(problem: &VqcProblem) -> Result<Vec<f64>> {
    parameter_shift_gradient(|t| problem.fidelity_at(t), &problem.theta)
}

/// Gradient of the loss, `-1/(2√A) · ∂A/∂θ`.
pub fn vqc_gradient(problem: &VqcProblem) -> Result<Vec<f64>> {
    let a = vqc_fidelity(problem)?;
    if !(a > tolerance::VANISHING_OVERLAP) {
        return Err(QstError::Singular(format!("loss gradient undefined at A = {a:e}")));
    }
    let factor = -0.5 / a.sqrt();
    Ok(vqc_fidelity_gradient(problem)?
        .into_iter()
        .map(|g| factor * g)
        .collect())
}

#[derive(Debug, Clone)]
pub struct VqcOutcome {
    pub theta: Vec<f64>,
    /// Loss before the first step and after each accepted step.
    pub loss_trace: Vec<f64>,
    /// `A(θ*)`
    pub fidelity: f64,
    pub result: ReconstructionResult,
}

/// Gradient descent `θ ← θ - η ∇a`. With backtracking on, a step that raises
/// the loss is retried with `η/2` (the reduced rate is kept). An empty
/// `problem.theta` is replaced by uniform random angles from `seed`.
pub fn optimize_vqc(problem: &VqcProblem, cfg: &OptimizerConfig, seed: u64) -> Result<VqcOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut p = problem.clone();
    if p.theta.is_empty() && p.ansatz.num_parameters() > 0 {
        p.theta = uniform_angles(p.ansatz.num_parameters(), seed);
    }
    let mut eta = cfg.learning_rate;
    let mut loss = vqc_loss(&p)?;
    let mut loss_trace = vec![loss];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = match vqc_gradient(&p) {
            Ok(g) => g,
            Err(QstError::Singular(_)) => {
                // Zero overlap: the loss is flat at its maximum, nudge via A itself.
                vqc_fidelity_gradient(&p)?.into_iter().map(|g| -g).collect()
            }
            Err(e) => return Err(e),
        };
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < cfg.tol {
            break;
        }
        let mut accepted = None;
        loop {
            let trial: Vec<f64> = p.theta.iter().zip(&grad).map(|(t, g)| t - eta * g).collect();
            let trial_loss = loss_from_fidelity(p.fidelity_at(&trial)?);
            if !cfg.backtracking || trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            eta *= 0.5;
            if eta < 1e-12 {
                break;
            }
        }
        let Some((theta, new_loss)) = accepted else {
            break;
        };
        let change = (loss - new_loss).abs();
        p.theta = theta;
        loss = new_loss;
        loss_trace.push(loss);
        if change < cfg.tol {
            break;
        }
    }
    let fidelity = vqc_fidelity(&p)?;
    let rho = vqc_reduced_state(&p)?;
    Ok(VqcOutcome {
        theta: p.theta.clone(),
        loss_trace: loss_trace.clone(),
        fidelity,
        result: ReconstructionResult {
            method: "vqc".into(),
            rho,
            fidelity: Some(fidelity),
            loss_trace,
            iterations,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Two circuits on `n` qubits: Born probabilities of the first give the
/// amplitudes' moduli squared, those of the second give phases `2π q`.
#[derive(Debug, Clone)]
pub struct QvcsModel {
    pub lambda_circuit: ParameterizedCircuit,
    pub mu_circuit: ParameterizedCircuit,
    pub theta_lambda: Vec<f64>,
    pub theta_mu: Vec<f64>,
}

impl QvcsModel {
    pub fn new(
        lambda_circuit: ParameterizedCircuit,
        mu_circuit: ParameterizedCircuit,
        theta_lambda: Vec<f64>,
        theta_mu: Vec<f64>,
    ) -> Result<Self> {
        if lambda_circuit.num_qubits() != mu_circuit.num_qubits() {
            return Err(QstError::DimensionMismatch(format!(
                "amplitude circuit on {} qubits, phase circuit on {}",
                lambda_circuit.num_qubits(),
                mu_circuit.num_qubits()
            )));
        }
        if theta_lambda.len() != lambda_circuit.num_parameters()
            || theta_mu.len() != mu_circuit.num_parameters()
        {
            return Err(QstError::InvalidArgument(format!(
                "parameter counts ({}, {}) do not match circuits ({}, {})",
                theta_lambda.len(),
                theta_mu.len(),
                lambda_circuit.num_parameters(),
                mu_circuit.num_parameters()
            )));
        }
        Ok(Self {
            lambda_circuit,
            mu_circuit,
            theta_lambda,
            theta_mu,
        })
    }

    /// Both circuits from the same template; `theta` holds the amplitude
    /// parameters followed by the phase parameters.
    pub fn from_flat(kind: AnsatzKind, n: usize, theta: &[f64]) -> Result<Self> {
        let c = build_ansatz(kind, n)?;
        let k = c.num_parameters();
        if theta.len() != 2 * k {
            return Err(QstError::InvalidArgument(format!(
                "expected {} parameters, got {}",
                2 * k,
                theta.len()
            )));
        }
        Self::new(c.clone(), c, theta[..k].to_vec(), theta[k..].to_vec())
    }

    pub fn num_qubits(&self) -> usize {
        self.lambda_circuit.num_qubits()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.theta_lambda.iter().chain(&self.theta_mu).copied().collect()
    }
}

/// `|Φ⟩ = Σ_i √p_λ^i e^{2πi q_μ^i} |i⟩`
pub fn qvcs_state(model: &QvcsModel) -> Result<StateVector> {
    let n = model.num_qubits();
    let zero = StateVector::zero(n);
    let p = run_circuit(&model.lambda_circuit, &model.theta_lambda, &zero)?.probabilities();
    let q = run_circuit(&model.mu_circuit, &model.theta_mu, &zero)?.probabilities();
    let amps = p
        .iter()
        .zip(&q)
        .map(|(pi, qi)| C64::from_polar(pi.sqrt(), 2.0 * PI * qi))
        .collect();
    StateVector::new(amps)
}

/// Negative log-likelihood `-Σ_b Σ_i f_i log P_i` of a pure state, with
/// probabilities floored at [`tolerance::LOG_FLOOR`].
pub fn pure_state_nll(psi: &StateVector, data: &MeasurementDataset) -> Result<f64> {
    if data.bases().is_empty() {
        return Err(QstError::InvalidArgument("empty dataset".into()));
    }
    let mut e = 0.0;
    for (basis, freqs) in data.bases().iter().zip(data.freqs()) {
        let probs = born_probabilities(psi, basis)?;
        for (f, p) in freqs.iter().zip(probs) {
            if *f > 0.0 {
                e -= f * p.max(tolerance::LOG_FLOOR).ln();
            }
        }
    }
    Ok(e)
}

pub fn qvcs_loss(model: &QvcsModel, data: &MeasurementDataset) -> Result<f64> {
    pure_state_nll(&qvcs_state(model)?, data)
}

#[derive(Debug, Clone)]
pub struct QvcsOutcome {
    pub model: QvcsModel,
    pub state: StateVector,
    pub final_loss: f64,
    pub evals: usize,
    pub result: ReconstructionResult,
}

/// Random initial angles, then COBYLA on [`qvcs_loss`]. Fidelity is filled in
/// when `truth` is given.
pub fn optimize_qvcs(
    data: &MeasurementDataset,
    kind: AnsatzKind,
    cfg: &OptimizerConfig,
    truth: Option<&StateVector>,
    seed: u64,
) -> Result<QvcsOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let n = data.num_qubits();
    let circuit = build_ansatz(kind, n)?;
    let k = circuit.num_parameters();
    let x0 = uniform_angles(2 * k, seed);
    let objective = |x: &[f64]| -> f64 {
        QvcsModel::new(circuit.clone(), circuit.clone(), x[..k].to_vec(), x[k..].to_vec())
            .and_then(|m| qvcs_loss(&m, data))
            .unwrap_or(f64::INFINITY)
    };
    let out = cobyla_minimize(objective, &x0, cfg.rhobeg, cfg.rhoend, cfg.maxiter)?;
    let model = QvcsModel::from_flat(kind, n, &out.x)?;
    let state = qvcs_state(&model)?;
    let fidelity = truth.map(|t| pure_fidelity(&state, t));
    Ok(QvcsOutcome {
        result: ReconstructionResult {
            method: "qvcs".into(),
            rho: state.to_density(),
            fidelity,
            loss_trace: out.history.clone(),
            iterations: out.evals,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
        model,
        state,
        final_loss: out.fx,
        evals: out.evals,
    })
}
