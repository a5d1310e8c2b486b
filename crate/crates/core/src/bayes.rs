//! Metropolis-Hastings sampling of density matrices.
//!
//! Two parameterizations share one driver: a Gamma–Gaussian mixture scored
//! by a Frobenius pseudo-likelihood against the least-squares estimate
//! (pCN moves on the Gaussian part), and Cholesky angles scored by the
//! multinomial likelihood of the raw data (random-walk moves).

use std::io::Write;

use num_complex::Complex64 as C64;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classical::{angles_to_t, cholesky_to_density, project_to_physical, ObservedEstimate};
use crate::error::{QstError, Result};
use crate::measurement::MeasurementDataset;
use crate::numeric::{hermitian_eig, CMatrix};
use crate::rng::{rng_from, Rng};
use crate::state::{uhlmann_fidelity, DensityMatrix};

/// Effective number of shots per basis assumed for noiseless data.
pub const NOISELESS_EFFECTIVE_SHOTS: f64 = 1024.0;

/// Mixture parameters `θ = (y_1..y_N; z_1..z_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGaussianParams {
    pub y: Vec<f64>,
    pub z: Vec<Vec<C64>>,
}

impl GammaGaussianParams {
    pub fn new(y: Vec<f64>, z: Vec<Vec<C64>>) -> Result<Self> {
        if y.is_empty() || y.len() != z.len() {
            return Err(QstError::DimensionMismatch(format!(
                "{} weights for {} vectors",
                y.len(),
                z.len()
            )));
        }
        if let Some(bad) = y.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(QstError::InvalidArgument(format!("mixture weight {bad} is not positive")));
        }
        let d = z[0].len();
        if d == 0 || z.iter().any(|v| v.len() != d) {
            return Err(QstError::DimensionMismatch("mixture vectors differ in length".into()));
        }
        Ok(Self { y, z })
    }

    /// Draw from the prior: `y_i ~ Gamma(a, 1)`, `z_i` standard complex normal.
    pub fn sample_prior(components: usize, dim: usize, shape: f64, rng: &mut Rng) -> Result<Self> {
        let gamma = Gamma::new(shape, 1.0)
            .map_err(|e| QstError::InvalidArgument(format!("gamma shape {shape}: {e}")))?;
        let y = (0..components)
            .map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE))
            .collect();
        let z = (0..components)
            .map(|_| (0..dim).map(|_| complex_normal(rng)).collect())
            .collect();
        Self::new(y, z)
    }

    pub fn dim(&self) -> usize {
        self.z[0].len()
    }

    pub fn components(&self) -> usize {
        self.y.len()
    }

    /// `y_i / Σ y_l`
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.y.iter().sum();
        self.y.iter().map(|v| v / total).collect()
    }
}

fn complex_normal(rng: &mut Rng) -> C64 {
    C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub gamma_shape: f64,
    pub pcn_beta: f64,
    pub proposal_step: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            gamma_shape: 1.0,
            pcn_beta: 0.2,
            proposal_step: 0.3,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_shape > 0.0) {
            return Err(QstError::InvalidArgument(format!(
                "gamma shape {} must be positive",
                self.gamma_shape
            )));
        }
        if !(0.0..1.0).contains(&self.pcn_beta) {
            return Err(QstError::InvalidArgument(format!(
                "pcn beta {} outside [0, 1)",
                self.pcn_beta
            )));
        }
        if !(self.proposal_step > 0.0) {
            return Err(QstError::InvalidArgument(format!(
                "proposal step {} must be positive",
                self.proposal_step
            )));
        }
        Ok(())
    }
}

/// `ρ = Σ_i (y_i/Σy) z_i z_i† / ‖z_i‖²`
pub fn density_from_mixture(p: &GammaGaussianParams) -> Result<DensityMatrix> {
    let d = p.dim();
    let mut m = CMatrix::zeros(d, d);
    for (w, z) in p.weights().into_iter().zip(&p.z) {
        let norm2: f64 = z.iter().map(|c| c.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(QstError::InvalidArgument("zero mixture vector".into()));
        }
        m = &m + &CMatrix::outer(z).scale_real(w / norm2);
    }
    Ok(DensityMatrix::from_gram_unchecked(m))
}

/// `Σ_i [(a-1) log y_i - y_i] - ½ Σ_i z_i†z_i`, dropping `N log Γ(a)` and the
/// Gaussian normalization `N d log(2π)`. Any `y_i ≤ 0` gives `-∞`.
pub fn log_prior(p: &GammaGaussianParams, cfg: &PriorConfig) -> f64 {
    let a = cfg.gamma_shape;
    let mut acc = 0.0;
    for &y in &p.y {
        if !(y > 0.0) {
            return f64::NEG_INFINITY;
        }
        acc += (a - 1.0) * y.ln() - y;
    }
    let zz: f64 = p.z.iter().flatten().map(|c| c.norm_sqr()).sum();
    acc - 0.5 * zz
}

/// `-(N/2) ‖P_M(ρ(θ)) - ρ_LS‖_F²`
pub fn log_likelihood_frobenius(
    p: &GammaGaussianParams,
    target: &ObservedEstimate,
    n_meas: f64,
) -> Result<f64> {
    let rho = density_from_mixture(p)?;
    frobenius_term(rho.matrix(), target, n_meas)
}

fn frobenius_term(rho: &CMatrix, target: &ObservedEstimate, n_meas: f64) -> Result<f64> {
    if rho.rows() != target.estimate.rows() {
        return Err(QstError::DimensionMismatch(format!(
            "model dimension {} against estimate dimension {}",
            rho.rows(),
            target.estimate.rows()
        )));
    }
    let diff = &target.project(rho) - &target.estimate;
    Ok(-0.5 * n_meas * diff.frobenius_norm().powi(2))
}

/// `Σ_j n_j log Tr(ρ(θ) E_j)` with `ρ(θ)` from the Cholesky angle map and
/// the multinomial coefficient dropped. Noiseless data uses frequencies as
/// weights. An observed outcome with zero model probability gives `-∞`.
pub fn log_likelihood_multinomial(theta: &[f64], data: &MeasurementDataset) -> Result<f64> {
    let d = data.dim();
    if theta.len() != d * d {
        return Err(QstError::DimensionMismatch(format!(
            "{} angles for dimension {d}",
            theta.len()
        )));
    }
    let rho = match cholesky_to_density(&angles_to_t(theta)) {
        Ok(r) => r,
        Err(QstError::InvalidArgument(_)) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let scale = if data.is_noiseless() {
        1.0
    } else {
        data.shots_per_basis() as f64
    };
    let mut acc = 0.0;
    for (basis, i, f) in data.outcomes() {
        if f == 0.0 {
            continue;
        }
        let p = rho.matrix().trace_product(&basis.projector(i)).re;
        if !(p > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        acc += scale * f * p.ln();
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainParams {
    Mixture(GammaGaussianParams),
    Angles(Vec<f64>),
}

impl ChainParams {
    pub fn density(&self) -> Result<DensityMatrix> {
        match self {
            ChainParams::Mixture(p) => density_from_mixture(p),
            ChainParams::Angles(theta) => cholesky_to_density(&angles_to_t(theta)),
        }
    }

    fn log_prior(&self, cfg: &PriorConfig) -> f64 {
        match self {
            ChainParams::Mixture(p) => log_prior(p, cfg),
            ChainParams::Angles(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub params: ChainParams,
    pub log_likelihood: f64,
    pub log_posterior: f64,
    pub accept_count: usize,
    pub step_index: usize,
}

impl ChainState {
    pub fn new<F>(params: ChainParams, log_likelihood: F, cfg: &PriorConfig) -> Result<Self>
    where
        F: Fn(&ChainParams) -> f64,
    {
        let ll = log_likelihood(&params);
        let lp = ll + params.log_prior(cfg);
        if !lp.is_finite() {
            return Err(QstError::InvalidArgument(
                "initial chain state has non-finite log posterior".into(),
            ));
        }
        Ok(Self {
            params,
            log_likelihood: ll,
            log_posterior: lp,
            accept_count: 0,
            step_index: 0,
        })
    }
}

/// One Metropolis-Hastings step.
///
/// Mixture states propose `z' = √(1-β²) z + β ξ` and `log y' = log y + s η`;
/// the Gaussian prior cancels for the `z` part, the Gamma prior and the
/// log-scale Jacobian enter the ratio for `y`. Angle states use a Gaussian
/// random walk of width `s` under a flat prior. Returns whether the
/// proposal was accepted.
pub fn mh_step<F>(chain: &mut ChainState, log_likelihood: F, cfg: &PriorConfig, rng: &mut Rng) -> bool
where
    F: Fn(&ChainParams) -> f64,
{
    let s = cfg.proposal_step;
    let (proposal, log_correction) = match &chain.params {
        ChainParams::Mixture(p) => {
            let beta = cfg.pcn_beta;
            let keep = (1.0 - beta * beta).sqrt();
            let z: Vec<Vec<C64>> = p
                .z
                .iter()
                .map(|v| {
                    v.iter()
                        .map(|c| c * keep + complex_normal(rng) * beta)
                        .collect()
                })
                .collect();
            let a = cfg.gamma_shape;
            let mut corr = 0.0;
            let y: Vec<f64> = p
                .y
                .iter()
                .map(|&old| {
                    let eta: f64 = StandardNormal.sample(rng);
                    let new = old * (s * eta).exp();
                    corr += a * (new.ln() - old.ln()) - (new - old);
                    new
                })
                .collect();
            (ChainParams::Mixture(GammaGaussianParams { y, z }), corr)
        }
        ChainParams::Angles(theta) => {
            let next = theta
                .iter()
                .map(|t| {
                    let eta: f64 = StandardNormal.sample(rng);
                    t + s * eta
                })
                .collect();
            (ChainParams::Angles(next), 0.0)
        }
    };
    let ll = log_likelihood(&proposal);
    let delta = ll - chain.log_likelihood + log_correction;
    let u: f64 = rng.random();
    chain.step_index += 1;
    let accepted = delta.is_finite() && (delta >= 0.0 || u.ln() < delta);
    if accepted {
        chain.log_posterior = ll + proposal.log_prior(cfg);
        chain.log_likelihood = ll;
        chain.params = proposal;
        chain.accept_count += 1;
    }
    accepted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BayesModel {
    /// Gamma–Gaussian mixture with the Frobenius pseudo-likelihood.
    Mixture,
    /// Cholesky angles with the multinomial likelihood.
    Angles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub model: BayesModel,
    pub prior: PriorConfig,
    /// Total number of MH steps, burn-in included.
    pub n_samples: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in state.
    pub thin: usize,
    /// Tune the proposal scales during burn-in towards `target_acceptance`.
    pub adapt: bool,
    pub target_acceptance: f64,
    /// Mixture components; `None` means the Hilbert-space dimension.
    pub components: Option<usize>,
    /// `N` in the Frobenius likelihood; `None` derives it from the data.
    pub n_meas: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            model: BayesModel::Mixture,
            prior: PriorConfig::default(),
            n_samples: 10_000,
            burn_in: 2_000,
            thin: 1,
            adapt: true,
            target_acceptance: 0.25,
            components: None,
            n_meas: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.n_samples <= self.burn_in {
            return Err(QstError::InvalidArgument(format!(
                "n_samples {} must exceed burn_in {}",
                self.n_samples, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(QstError::InvalidArgument("thin must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(QstError::InvalidArgument(format!(
                "target acceptance {} outside (0, 1)",
                self.target_acceptance
            )));
        }
        if self.components == Some(0) {
            return Err(QstError::InvalidArgument("zero mixture components".into()));
        }
        Ok(())
    }
}

/// One recorded chain step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub step: usize,
    pub log_posterior: f64,
    pub accepted: bool,
    pub fidelity_to_truth: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Acceptance rate over the post-burn-in steps.
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub final_pcn_beta: f64,
    pub final_proposal_step: f64,
    pub trace: Vec<ChainRecord>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub samples: Vec<DensityMatrix>,
    pub mean: DensityMatrix,
    pub diagnostics: ChainDiagnostics,
}

fn initial_mixture(estimate: &CMatrix, components: usize) -> Result<GammaGaussianParams> {
    let d = estimate.rows();
    let eig = hermitian_eig(&project_to_physical(estimate)?.into_matrix())?;
    let scale = (2.0 * d as f64).sqrt();
    let mut y = Vec::with_capacity(components);
    let mut z = Vec::with_capacity(components);
    for k in 0..components {
        let j = k % d;
        y.push(eig.eigenvalues[j].max(1e-3) * components as f64);
        z.push(eig.vector(j).into_iter().map(|c| c * scale).collect());
    }
    GammaGaussianParams::new(y, z)
}

/// Runs one chain and averages the kept states.
///
/// The posterior mean is the average of the kept density matrices. When
/// `truth` is given every recorded step carries its fidelity to it.
pub fn run_chain(
    data: &MeasurementDataset,
    cfg: &ChainConfig,
    truth: Option<&DensityMatrix>,
    seed: u64,
) -> Result<ChainOutput> {
    cfg.validate()?;
    let mut rng = rng_from(seed);
    let d = data.dim();
    let estimate = ObservedEstimate::new(data)?;

    let n_meas = cfg.n_meas.unwrap_or_else(|| {
        let shots = if data.is_noiseless() {
            NOISELESS_EFFECTIVE_SHOTS
        } else {
            data.shots_per_basis() as f64
        };
        shots * data.bases().len() as f64
    });

    let likelihood = |p: &ChainParams| -> f64 {
        let value = match p {
            ChainParams::Mixture(m) => density_from_mixture(m)
                .and_then(|rho| frobenius_term(rho.matrix(), &estimate, n_meas)),
            ChainParams::Angles(theta) => log_likelihood_multinomial(theta, data),
        };
        value.unwrap_or(f64::NEG_INFINITY)
    };

    let start = match cfg.model {
        BayesModel::Mixture => {
            ChainParams::Mixture(initial_mixture(&estimate.estimate, cfg.components.unwrap_or(d))?)
        }
        BayesModel::Angles => ChainParams::Angles(
            (0..d * d)
                .map(|_| rng.random_range(0.2..std::f64::consts::FRAC_PI_2 - 0.2))
                .collect(),
        ),
    };
    let mut chain = ChainState::new(start, likelihood, &cfg.prior)?;
    let mut prior = cfg.prior;
    let mut log_scale = 0.0f64;

    let mut samples = Vec::new();
    let mut trace = Vec::new();
    let mut burn_accepts = 0usize;
    let mut post_accepts = 0usize;
    for step in 0..cfg.n_samples {
        let accepted = mh_step(&mut chain, likelihood, &prior, &mut rng);
        let burning = step < cfg.burn_in;
        if burning {
            burn_accepts += accepted as usize;
            if cfg.adapt {
                let gain = 1.0 / (1.0 + step as f64 / 100.0).powf(0.6);
                let hit = if accepted { 1.0 } else { 0.0 };
                log_scale = (log_scale + gain * (hit - cfg.target_acceptance)).clamp(-20.0, 5.0);
                prior.pcn_beta = (cfg.prior.pcn_beta * log_scale.exp()).min(0.99);
                prior.proposal_step = cfg.prior.proposal_step * log_scale.exp();
            }
        } else {
            post_accepts += accepted as usize;
        }
        let keep = !burning && (step - cfg.burn_in) % cfg.thin == 0;
        if !keep && step % cfg.thin != 0 && step + 1 != cfg.n_samples {
            continue;
        }
        let rho = if keep || truth.is_some() {
            Some(chain.params.density()?)
        } else {
            None
        };
        let fidelity = match (truth, &rho) {
            (Some(t), Some(r)) => Some(uhlmann_fidelity(r, t)?),
            _ => None,
        };
        trace.push(ChainRecord {
            step,
            log_posterior: chain.log_posterior,
            accepted,
            fidelity_to_truth: fidelity,
        });
        if keep {
            samples.push(rho.expect("kept states are evaluated"));
        }
    }

    let mean = mean_density(&samples)?;
    let post_steps = cfg.n_samples - cfg.burn_in;
    Ok(ChainOutput {
        samples,
        mean,
        diagnostics: ChainDiagnostics {
            acceptance_rate: post_accepts as f64 / post_steps as f64,
            burn_in_acceptance_rate: if cfg.burn_in == 0 {
                0.0
            } else {
                burn_accepts as f64 / cfg.burn_in as f64
            },
            final_pcn_beta: prior.pcn_beta,
            final_proposal_step: prior.proposal_step,
            trace,
        },
    })
}

fn mean_density(samples: &[DensityMatrix]) -> Result<DensityMatrix> {
    let first = samples
        .first()
        .ok_or_else(|| QstError::InvalidArgument("no samples kept".into()))?;
    let d = first.dim();
    let sum = samples
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, s| &acc + s.matrix());
    Ok(DensityMatrix::from_gram_unchecked(sum.scale_real(1.0 / samples.len() as f64)))
}

/// CSV with header `step,log_posterior,accepted,fidelity_to_truth`; the last
/// column is present only when every record carries a fidelity.
pub fn write_chain_csv<W: Write>(trace: &[ChainRecord], mut out: W) -> Result<()> {
    let with_truth = !trace.is_empty() && trace.iter().all(|r| r.fidelity_to_truth.is_some());
    if with_truth {
        writeln!(out, "step,log_posterior,accepted,fidelity_to_truth")?;
    } else {
        writeln!(out, "step,log_posterior,accepted")?;
    }
    for r in trace {
        write!(out, "{},{},{}", r.step, r.log_posterior, r.accepted as u8)?;
        match r.fidelity_to_truth {
            Some(f) if with_truth => writeln!(out, ",{f}")?,
            _ => writeln!(out)?,
        }
    }
    Ok(())
}
