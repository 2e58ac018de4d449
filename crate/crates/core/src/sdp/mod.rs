//! Dual SDP assembly and solvers.

mod admm;
pub mod cone;
pub mod problem;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{domain, Result};
use crate::model::{CMatrix, CVector};

pub use admm::AdmmSolver;
pub use cone::{hermitian_psd_project, psd_project, realify};
pub use problem::{assemble_dual_sdp, assemble_dual_sdp_with, ConicProblem, PsdBlock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub adaptive_rho: bool,
    /// Over-relaxation, in `[1, 2)`.
    pub alpha: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            eps_abs: 1e-7,
            eps_rel: 1e-6,
            rho: 1.0,
            adaptive_rho: true,
            alpha: 1.6,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn check(&self) -> Result<()> {
        if !(self.eps_abs > 0.0 && self.eps_rel > 0.0) {
            return domain("solver tolerances must be positive");
        }
        if !(1.0..2.0).contains(&self.alpha) {
            return domain(format!("over-relaxation {} outside [1, 2)", self.alpha));
        }
        if !(self.rho > 0.0) {
            return domain("rho must be positive");
        }
        if self.max_iters == 0 {
            return domain("max_iters must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    InfeasibleSuspect,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    #[serde(with = "codec::serde_vector")]
    pub lambda: CVector,
    #[serde(rename = "Q", with = "codec::serde_matrix")]
    pub q: CMatrix,
    /// `Re <lambda, y>`.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: Residuals,
}

impl DualSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| crate::Error::Parse {
            key: e.path().to_string(),
            msg: e.inner().to_string(),
        })
    }
}

/// A conic solver for [`ConicProblem`]. Implementations must honour the same
/// post-conditions as [`AdmmSolver`]: an `Optimal` status means the equality
/// constraints hold to `eps_abs`, every PSD block has minimum eigenvalue at
/// least `-eps_abs`, and the objective has stopped moving.
pub trait SolverBackend {
    fn name(&self) -> &str;

    fn solve(
        &self,
        problem: &ConicProblem,
        opts: &SolverOptions,
        warm: Option<&DualSolution>,
    ) -> Result<DualSolution>;
}

/// Solve with the default backend.
pub fn solve(problem: &ConicProblem, opts: &SolverOptions) -> Result<DualSolution> {
    AdmmSolver.solve(problem, opts, None)
}
