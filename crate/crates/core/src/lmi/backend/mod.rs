//! Conic solver backends, registered by name and selected at runtime.

mod clarabel;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use self::clarabel::ClarabelBackend;
use super::problem::{ConicProblem, ConicSolution};
use crate::error::{Error, Result};

/// Environment variable naming the backend to use.
pub const BACKEND_ENV: &str = "SATSEEK_BACKEND";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub semidefinite: bool,
    pub linear_equalities: bool,
    /// Exponential cones, used by the log-determinant objective.
    pub log_determinant: bool,
    /// Power cones, used by the geometric-mean objective.
    pub power: bool,
}

pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn capabilities(&self) -> Capabilities;

    /// Solves `problem`; infeasibility is reported through the status, not as an error.
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution>;
}

/// Rejects problems using cones the backend cannot handle.
pub fn check_capabilities(backend: &dyn ConicBackend, problem: &ConicProblem) -> Result<()> {
    let caps = backend.capabilities();
    let missing = if !problem.lmis.is_empty() && !caps.semidefinite {
        Some("semidefinite cones")
    } else if problem.needs_exponential() && !caps.log_determinant {
        Some("exponential cones")
    } else if problem.needs_power() && !caps.power {
        Some("power cones")
    } else if problem.needs_equalities() && !caps.linear_equalities {
        Some("linear equalities")
    } else {
        None
    };
    match missing {
        Some(missing) => Err(Error::Capability {
            backend: backend.name().to_string(),
            missing,
        }),
        None => Ok(()),
    }
}

#[derive(Clone)]
pub struct BackendRegistry {
    backends: Vec<Arc<dyn ConicBackend>>,
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self { backends: Vec::new() }
    }

    /// Every backend compiled into this build; the first is the default.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(ClarabelBackend::default()));
        r
    }

    /// Adds a backend, replacing any previous one with the same name.
    pub fn register(&mut self, backend: Arc<dyn ConicBackend>) {
        self.backends.retain(|b| b.name() != backend.name());
        self.backends.push(backend);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.backends.iter().map(|b| b.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ConicBackend>> {
        self.backends
            .iter()
            .find(|b| b.name().eq_ignore_ascii_case(name))
            .cloned()
            .ok_or_else(|| Error::UnknownBackend(name.to_string()))
    }

    pub fn default_backend(&self) -> Result<Arc<dyn ConicBackend>> {
        self.backends
            .first()
            .cloned()
            .ok_or_else(|| Error::UnknownBackend("<none registered>".into()))
    }

    /// Backend named by `SATSEEK_BACKEND`, else the default.
    pub fn from_env(&self) -> Result<Arc<dyn ConicBackend>> {
        match std::env::var(BACKEND_ENV) {
            Ok(name) if !name.trim().is_empty() => self.get(name.trim()),
            _ => self.default_backend(),
        }
    }
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl std::fmt::Debug for BackendRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup() {
        let r = BackendRegistry::builtin();
        assert_eq!(r.names(), vec!["clarabel"]);
        assert!(r.get("Clarabel").is_ok());
        assert!(matches!(r.get("mosek"), Err(Error::UnknownBackend(_))));
        assert!(BackendRegistry::empty().default_backend().is_err());
    }
}
