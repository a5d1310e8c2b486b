//! Numerical tolerances shared across the crate.

/// Maximum entrywise asymmetry `|M_ij - conj(M_ji)|` accepted as Hermitian.
pub const HERMITIAN: f64 = 1e-12;

/// Jacobi sweeps stop once the off-diagonal Frobenius norm drops below this
/// (relative to the input Frobenius norm).
pub const JACOBI_OFF_DIAGONAL: f64 = 1e-12;

/// Upper bound on cyclic Jacobi sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigenvalues above `-SQRT_CLIP` are clipped to zero before a square root.
pub const SQRT_CLIP: f64 = 1e-10;

/// Minimum eigenvalue accepted for a physical density matrix.
pub const PHYSICAL_EIGENVALUE: f64 = 1e-8;

/// Trace and Hermiticity tolerance for density matrices.
pub const DENSITY_TRACE: f64 = 1e-10;

/// Statevector normalization tolerance.
pub const NORM: f64 = 1e-10;

/// Unitarity tolerance for QPE inputs.
pub const UNITARY: f64 = 1e-10;

/// Allowed fidelity overshoot above 1 before clipping is considered an error.
pub const FIDELITY_OVERSHOOT: f64 = 1e-8;

/// Eigenvalues at or below this count as outside a state's support when
/// evaluating fidelity.
pub const FIDELITY_RANK: f64 = 1e-13;

/// Frequency vectors must sum to one within this tolerance.
pub const FREQUENCY_SUM: f64 = 1e-9;

/// Floor applied to model probabilities inside logarithms of the QVCS loss.
pub const LOG_FLOOR: f64 = 1e-12;

/// Normal equations with condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Overlaps below this are treated as zero where `1/√A` appears.
pub const VANISHING_OVERLAP: f64 = 1e-24;
