use std::collections::BTreeMap;
use std::sync::Arc;

use crate::branch::{self, MilpSolution};
use crate::config::SolverConfig;
use crate::error::MilpError;
use crate::model::MilpModel;

pub const DEFAULT_BACKEND: &str = "branch-and-bound";

/// A MILP solving strategy selectable by name.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, model: &MilpModel, config: &SolverConfig) -> Result<MilpSolution, MilpError>;
}

/// The built-in best-first branch-and-bound solver.
#[derive(Debug, Default, Clone, Copy)]
pub struct BranchAndBound;

impl MilpBackend for BranchAndBound {
    fn name(&self) -> &'static str {
        DEFAULT_BACKEND
    }

    fn solve(&self, model: &MilpModel, config: &SolverConfig) -> Result<MilpSolution, MilpError> {
        branch::solve(model, config)
    }
}

#[derive(Clone)]
pub struct BackendRegistry {
    backends: BTreeMap<&'static str, Arc<dyn MilpBackend>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            backends: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        Self::empty().with_backend(Arc::new(BranchAndBound))
    }

    pub fn with_backend(mut self, backend: Arc<dyn MilpBackend>) -> Self {
        self.register(backend);
        self
    }

    /// Registers `backend`, replacing any backend of the same name.
    pub fn register(&mut self, backend: Arc<dyn MilpBackend>) {
        self.backends.insert(backend.name(), backend);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn MilpBackend>, MilpError> {
        self.backends
            .get(name)
            .cloned()
            .ok_or_else(|| MilpError::UnknownBackend(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.backends.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_backend_is_registered() {
        let reg = BackendRegistry::with_builtin();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec![DEFAULT_BACKEND]);
        assert_eq!(reg.get(DEFAULT_BACKEND).unwrap().name(), DEFAULT_BACKEND);
        assert!(matches!(reg.get("gurobi"), Err(MilpError::UnknownBackend(_))));
    }
}
