use crate::error::MilpError;

/// Tolerances and limits shared by the LP and branch-and-bound layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    pub relative_gap: f64,
    pub max_nodes: usize,
    /// Per LP solve.
    pub max_simplex_iters: usize,
    /// Node evaluation is sequential either way; kept so configurations round-trip.
    pub deterministic: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            integrality_tol: 1e-6,
            relative_gap: 1e-6,
            max_nodes: 1_000_000,
            max_simplex_iters: 100_000,
            deterministic: true,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), MilpError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(MilpError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("feasibility_tol", self.feasibility_tol)?;
        positive("integrality_tol", self.integrality_tol)?;
        positive("relative_gap", self.relative_gap)?;
        if self.max_nodes == 0 || self.max_simplex_iters == 0 {
            return Err(MilpError::Config("node and iteration limits must be positive".into()));
        }
        Ok(())
    }
}
