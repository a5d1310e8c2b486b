use serde::{Deserialize, Serialize};

use crate::state::DensityMatrix;

/// Output of any reconstructor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub method: String,
    pub rho: DensityMatrix,
    /// Fidelity to the true state, when it is known.
    pub fidelity: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub wall_ms: f64,
}

impl ReconstructionResult {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
