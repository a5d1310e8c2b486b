//! Classical reconstructors: linear inversion, iterative maximum likelihood,
//! generic least squares and the Cholesky parameterization.

use num_complex::Complex64 as C64;

use crate::error::{QstError, Result};
use crate::measurement::MeasurementDataset;
use crate::numeric::{hermitian_eig, CMatrix};
use crate::state::{pauli_matrix, DensityMatrix, Pauli, PauliString};
use crate::tolerance;

/// Orthonormal Hermitian operator basis `Γ_μ = P_μ/√d` over Pauli strings.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    dim: usize,
    labels: Vec<PauliString>,
    elements: Vec<CMatrix>,
}

impl OperatorBasis {
    pub fn pauli(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        let labels = PauliString::all(num_qubits);
        let norm = 1.0 / (dim as f64).sqrt();
        let elements = labels.iter().map(|p| pauli_matrix(p).scale_real(norm)).collect();
        Self {
            dim,
            labels,
            elements,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn labels(&self) -> &[PauliString] {
        &self.labels
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    /// `ρ = Σ S_μ Γ_μ`
    pub fn assemble(&self, s: &StokesVector) -> CMatrix {
        self.elements
            .iter()
            .zip(&s.0)
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, (g, &c)| {
                &acc + &g.scale_real(c)
            })
    }

    /// `S_μ = Tr(ρ Γ_μ)`
    pub fn decompose(&self, m: &CMatrix) -> StokesVector {
        StokesVector(self.elements.iter().map(|g| m.trace_product(g).re).collect())
    }
}

/// Real expansion coefficients in an [`OperatorBasis`].
#[derive(Debug, Clone, PartialEq)]
pub struct StokesVector(pub Vec<f64>);

/// `Tr(Π Γ)` for a Pauli-basis projector and a normalized Pauli string.
fn projector_overlap(basis: &PauliString, outcome: usize, gamma: &PauliString, dim: usize) -> f64 {
    let n = basis.num_qubits();
    let mut v = 1.0;
    for (q, (&b, &g)) in basis.letters().iter().zip(gamma.letters()).enumerate() {
        if g == Pauli::I {
            continue;
        }
        if g != b {
            return 0.0;
        }
        if outcome & (1 << (n - 1 - q)) != 0 {
            v = -v;
        }
    }
    v / (dim as f64).sqrt()
}

/// Least-squares estimate restricted to the Pauli directions a dataset
/// determines.
#[derive(Debug, Clone)]
pub struct ObservedEstimate {
    basis: OperatorBasis,
    observed: Vec<bool>,
    pub estimate: CMatrix,
}

impl ObservedEstimate {
    pub fn new(data: &MeasurementDataset) -> Result<Self> {
        let basis = OperatorBasis::pauli(data.num_qubits());
        let d = data.dim();
        let mut design = Vec::with_capacity(data.bases().len() * d);
        let mut target = Vec::with_capacity(design.capacity());
        for (b, i, f) in data.outcomes() {
            design.push(
                basis
                    .labels()
                    .iter()
                    .map(|g| projector_overlap(b.label(), i, g, d))
                    .collect::<Vec<f64>>(),
            );
            target.push(f);
        }
        let observed: Vec<bool> = (0..basis.len())
            .map(|k| design.iter().any(|row| row[k] != 0.0))
            .collect();
        let reduced: Vec<Vec<f64>> = design
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&observed)
                    .filter(|(_, &o)| o)
                    .map(|(&x, _)| x)
                    .collect()
            })
            .collect();
        let fit = least_squares_fit(&reduced, &target)?;
        let mut s = vec![0.0; basis.len()];
        let mut it = fit.into_iter();
        for (k, &o) in observed.iter().enumerate() {
            if o {
                s[k] = it.next().unwrap_or(0.0);
            }
        }
        let estimate = basis.assemble(&StokesVector(s)).hermitian_part();
        Ok(Self {
            basis,
            observed,
            estimate,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn missing(&self) -> Vec<String> {
        self.basis
            .labels()
            .iter()
            .zip(&self.observed)
            .filter(|(_, &o)| !o)
            .map(|(p, _)| p.to_string())
            .collect()
    }

    /// Orthogonal projection of `m` onto the observed directions.
    pub fn project(&self, m: &CMatrix) -> CMatrix {
        if self.is_complete() {
            return m.clone();
        }
        let d = self.basis.dim();
        self.basis
            .elements()
            .iter()
            .zip(&self.observed)
            .filter(|(_, &o)| o)
            .fold(CMatrix::zeros(d, d), |acc, (g, _)| {
                &acc + &g.scale_real(m.trace_product(g).re)
            })
    }
}

/// Unprojected linear-inversion estimate: the Hermitian matrix whose Stokes
/// vector solves `B s = f` in the least-squares sense.
pub fn linear_inversion_estimate(data: &MeasurementDataset) -> Result<CMatrix> {
    let est = ObservedEstimate::new(data)?;
    if !est.is_complete() {
        return Err(QstError::InformationallyIncomplete(est.missing()));
    }
    Ok(est.estimate)
}

/// Linear inversion followed by projection onto the physical states.
pub fn linear_inversion(data: &MeasurementDataset) -> Result<DensityMatrix> {
    project_to_physical(&linear_inversion_estimate(data)?)
}

/// Clips negative eigenvalues and renormalizes the trace.
pub fn project_to_physical(m: &CMatrix) -> Result<DensityMatrix> {
    let eig = hermitian_eig(m)?;
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(QstError::Unphysical("no positive eigenvalues to keep".into()));
    }
    let out = eig.reassemble(|l| C64::new(l.max(0.0) / total, 0.0));
    Ok(DensityMatrix::from_gram_unchecked(out))
}

/// Ordinary least squares `Q = (XᵀX)⁻¹ XᵀY` via Cholesky of the normal
/// equations. Rejects condition numbers above [`tolerance::MAX_CONDITION`].
pub fn least_squares_fit(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.is_empty() {
        return Err(QstError::DimensionMismatch(format!(
            "{} design rows for {} observations",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(QstError::DimensionMismatch("ragged design matrix".into()));
    }
    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a * p + b] += row[a] * row[b];
            }
        }
    }
    let gram = CMatrix::from_vec(p, p, xtx.iter().map(|&v| C64::new(v, 0.0)).collect())?;
    let spectrum = hermitian_eig(&gram)?.eigenvalues;
    let (hi, lo) = (spectrum[0], *spectrum.last().unwrap());
    if !(lo > 0.0) || hi / lo > tolerance::MAX_CONDITION {
        return Err(QstError::Singular(format!(
            "normal equations have condition number {:e}",
            hi / lo
        )));
    }
    // Cholesky: XᵀX = L Lᵀ
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = xtx[i * p + j] - (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum::<f64>();
            if i == j {
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut z = vec![0.0; p];
    for i in 0..p {
        z[i] = (xty[i] - (0..i).map(|k| l[i * p + k] * z[k]).sum::<f64>()) / l[i * p + i];
    }
    let mut q = vec![0.0; p];
    for i in (0..p).rev() {
        q[i] = (z[i] - (i + 1..p).map(|k| l[k * p + i] * q[k]).sum::<f64>()) / l[i * p + i];
    }
    Ok(q)
}

/// Residual sum of squares `J(Q) = Σ (y - XQ)²`.
pub fn least_squares_residual(x: &[Vec<f64>], y: &[f64], q: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(row, yi)| {
            let pred: f64 = row.iter().zip(q).map(|(a, b)| a * b).sum();
            (yi - pred).powi(2)
        })
        .sum()
}

/// Pooled projector POVM of a dataset: every basis outcome weighted `1/N_B`.
struct PooledPovm {
    projectors: Vec<CMatrix>,
    freqs: Vec<f64>,
    num_bases: usize,
}

impl PooledPovm {
    fn new(data: &MeasurementDataset) -> Self {
        let mut projectors = Vec::new();
        let mut freqs = Vec::new();
        for (b, i, f) in data.outcomes() {
            projectors.push(b.projector(i));
            freqs.push(f);
        }
        Self {
            projectors,
            freqs,
            num_bases: data.bases().len(),
        }
    }

    fn probabilities(&self, rho: &CMatrix) -> Vec<f64> {
        self.projectors.iter().map(|p| rho.trace_product(p).re).collect()
    }

    /// Per-basis averaged negative log-likelihood.
    fn loss(&self, probs: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (&f, &p) in self.freqs.iter().zip(probs) {
            if f > 0.0 {
                if p <= 0.0 {
                    return Err(QstError::LikelihoodSingular(format!(
                        "outcome observed with frequency {f} has model probability {p:e}"
                    )));
                }
                acc -= f * p.ln();
            }
        }
        Ok(acc / self.num_bases as f64)
    }

    /// `R = Σ_j (f_j/p_j) Π_j` with pooled weights.
    fn r_operator(&self, probs: &[f64], dim: usize) -> Result<CMatrix> {
        let mut r = CMatrix::zeros(dim, dim);
        let w = 1.0 / self.num_bases as f64;
        for ((proj, &f), &p) in self.projectors.iter().zip(&self.freqs).zip(probs) {
            if f == 0.0 {
                continue;
            }
            if p <= 0.0 {
                return Err(QstError::LikelihoodSingular(format!(
                    "outcome observed with frequency {f} has model probability {p:e}"
                )));
            }
            r = &r + &proj.scale_real(w * f / p);
        }
        Ok(r)
    }
}

/// Negative log-likelihood `-(1/N_B) Σ_b Σ_i f_i log Tr(ρ Π_i)`.
pub fn mle_loss(rho: &DensityMatrix, data: &MeasurementDataset) -> Result<f64> {
    let povm = PooledPovm::new(data);
    povm.loss(&povm.probabilities(rho.matrix()))
}

#[derive(Debug, Clone)]
pub struct MleOutput {
    pub rho: DensityMatrix,
    /// Negative log-likelihood after each iteration, starting with `I/d`.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub const MLE_DEFAULT_TOL: f64 = 1e-10;
pub const MLE_DEFAULT_MAX_ITER: usize = 2000;

fn sandwich(a: &CMatrix, rho: &CMatrix) -> CMatrix {
    let m = &(a * rho) * a;
    let tr = m.trace().re;
    m.hermitian_part().scale_real(1.0 / tr)
}

/// Shift `θ` such that `max(v_i - θ, 0)` is the Euclidean projection of `v`
/// onto the probability simplex.
fn simplex_shift(v: &[f64]) -> f64 {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    theta
}

fn project_density(m: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eig(&m.hermitian_part())?;
    let theta = simplex_shift(&eig.eigenvalues);
    Ok(eig
        .reassemble(|l| C64::new((l - theta).max(0.0), 0.0))
        .hermitian_part())
}

/// Iterative `ρ ← α R ρ R` maximum likelihood, starting from `I/d`.
///
/// If a full `RρR` step would raise the loss, the step is diluted to
/// `(I + εR) ρ (I + εR)` with halving `ε` until it does not. Each iteration
/// also tries a projected-gradient step `P(ρ + sR)` with an adaptive step
/// size and keeps whichever candidate has the lower loss, so progress stays
/// linear near rank-deficient optima. The loss trace is non-increasing.
/// Stops once the fixed-point residual `‖αRρR - ρ‖_F` drops below `tol`.
pub fn mle_iterate(data: &MeasurementDataset, max_iter: usize, tol: f64) -> Result<MleOutput> {
    let d = data.dim();
    let povm = PooledPovm::new(data);
    let mut rho = CMatrix::identity(d).scale_real(1.0 / d as f64);
    let mut probs = povm.probabilities(&rho);
    let mut loss = povm.loss(&probs)?;
    let mut loss_trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    let identity = CMatrix::identity(d);
    let mut pg_step = 1.0 / d as f64;
    let slack = |l: f64| 1e-14 * l.abs().max(1.0);

    for _ in 0..max_iter {
        iterations += 1;
        let r = povm.r_operator(&probs, d)?;
        let mut candidate = sandwich(&r, &rho);
        if (&candidate - &rho).frobenius_norm() < tol {
            converged = true;
            break;
        }
        let mut cand_probs = povm.probabilities(&candidate);
        let mut cand_loss = povm.loss(&cand_probs).unwrap_or(f64::INFINITY);
        let mut eps = 1.0;
        while cand_loss > loss + slack(loss) && eps > 1e-8 {
            let a = &identity + &r.scale_real(eps);
            candidate = sandwich(&a, &rho);
            cand_probs = povm.probabilities(&candidate);
            cand_loss = povm.loss(&cand_probs).unwrap_or(f64::INFINITY);
            eps *= 0.5;
        }

        let mut s = pg_step * 2.0;
        while s > 1e-12 {
            let pg = project_density(&(&rho + &r.scale_real(s)))?;
            let pg_probs = povm.probabilities(&pg);
            let pg_loss = povm.loss(&pg_probs).unwrap_or(f64::INFINITY);
            if pg_loss < loss {
                pg_step = s;
                if pg_loss < cand_loss {
                    candidate = pg;
                    cand_probs = pg_probs;
                    cand_loss = pg_loss;
                }
                break;
            }
            s *= 0.5;
        }

        if cand_loss > loss + slack(loss) {
            // No improving step exists at this resolution.
            break;
        }
        rho = candidate;
        probs = cand_probs;
        loss = cand_loss;
        loss_trace.push(loss);
    }
    Ok(MleOutput {
        rho: DensityMatrix::from_gram_unchecked(rho),
        loss_trace,
        iterations,
        converged,
    })
}

/// Real parameters of an upper-triangular `T` with `ρ = TT†/Tr(TT†)`.
///
/// Layout for dimension `d`: `t[0..d]` is the diagonal; the remaining
/// `d(d-1)` entries fill the strictly upper part one superdiagonal at a
/// time (first superdiagonal top to bottom, then the second, ...), each
/// entry as a `(re, im)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyParams(pub Vec<f64>);

impl CholeskyParams {
    pub fn dim(&self) -> Result<usize> {
        let d = (self.0.len() as f64).sqrt().round() as usize;
        if d * d != self.0.len() || d == 0 {
            return Err(QstError::DimensionMismatch(format!(
                "{} Cholesky parameters is not a perfect square",
                self.0.len()
            )));
        }
        Ok(d)
    }

    pub fn triangular(&self) -> Result<CMatrix> {
        let d = self.dim()?;
        let t = &self.0;
        let mut m = CMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = C64::new(t[i], 0.0);
        }
        let mut k = d;
        for offset in 1..d {
            for row in 0..d - offset {
                m[(row, row + offset)] = C64::new(t[k], t[k + 1]);
                k += 2;
            }
        }
        Ok(m)
    }
}

pub fn cholesky_to_density(t: &CholeskyParams) -> Result<DensityMatrix> {
    if t.0.iter().all(|&x| x == 0.0) {
        return Err(QstError::InvalidArgument("all-zero Cholesky parameters".into()));
    }
    let tri = t.triangular()?;
    Ok(DensityMatrix::from_gram_unchecked(&tri * &tri.adjoint()))
}

/// `t_i = cos θ_i · Π_{j>i} sin θ_j` (hyperspherical map onto `t_i ≥ 0`,
/// `‖t‖ ≤ 1`).
pub fn angles_to_t(theta: &[f64]) -> CholeskyParams {
    let k = theta.len();
    let mut t = vec![0.0; k];
    let mut tail = 1.0;
    for i in (0..k).rev() {
        t[i] = theta[i].cos() * tail;
        tail *= theta[i].sin();
    }
    CholeskyParams(t)
}
