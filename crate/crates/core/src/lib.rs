//! Gridless blind deconvolution and demixing.
//!
//! Several users push a codebook-encoded message through their own sparse
//! multipath channel; a receiver sees one (possibly compressed) vector of
//! frequency samples of the superposition. This crate recovers every user's
//! continuous path delays, path amplitudes and message from that single
//! vector by lifting the bilinear model to a matrix tuple, solving the dual of
//! an atomic-norm minimization as a semidefinite program, and reading the
//! delays off the unit-norm peaks of the resulting vector-valued dual
//! polynomials.
//!
//! Module map:
//!
//! * [`model`]: domain types, the steering atom, Hermitian Toeplitz lifting.
//! * [`operators`]: the lifted measurement map, its composition with the
//!   sensing matrix and the adjoint.
//! * [`scenario`]: seeded scenario generation, measurement synthesis, JSON I/O.
//! * [`sdp`]: assembly of the dual SDP and the in-repo ADMM conic solver.
//! * [`localize`]: dual polynomial evaluation and peak extraction.
//! * [`recover`]: message/amplitude recovery, ambiguity handling, delay
//!   matching, metrics and optimality certificates.

pub mod codec;
pub mod error;
pub mod localize;
pub mod model;
pub mod operators;
pub mod recover;
pub mod scenario;
pub mod sdp;

pub use error::{Error, Result};
pub use localize::{DelayEstimates, DualPolynomialSet, LocalizeOptions};
pub use model::{
    steering_vector, toeplitz_lift, wrap_distance, ChannelSpec, Codebook, CMatrix, CVector,
    MatrixTuple, Message, Path, Scenario, SensingMatrix, ValidationReport, C64,
};
pub use operators::{lift_ground_truth, MeasurementModel};
pub use recover::{CertificateReport, RecoveryResult};
pub use scenario::{generate_scenario, synthesize_measurements, GenConfig};
pub use sdp::{
    assemble_dual_sdp, AdmmSolver, ConicProblem, DualSolution, SolveStatus, SolverBackend,
    SolverOptions,
};
