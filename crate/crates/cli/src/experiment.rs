//! One pipeline run per (N, seed) and the aggregates over repetitions.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use demix::recover::{certify, recover, CertificateReport, RecoveryResult};
use demix::sdp::{AdmmSolver, SolveStatus, SolverBackend};
use demix::{
    assemble_dual_sdp, generate_scenario, synthesize_measurements, CVector, DelayEstimates,
    DualPolynomialSet, DualSolution, MeasurementModel, Result, Scenario,
};

use crate::config::ResolvedConfig;

/// Matched delays within this wrap distance count as recovered.
pub const SUCCESS_DELAY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl SolverStats {
    fn of(sol: &DualSolution) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            objective: sol.objective,
            primal_residual: sol.residuals.primal,
            dual_residual: sol.residuals.dual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n_samples: usize,
    pub solver: SolverStats,
    pub detected: Vec<usize>,
    pub recovery: RecoveryResult,
    pub certificate: CertificateReport,
    /// Mean over users of the aligned message MSE.
    pub mse: f64,
    pub max_delay_error: Option<f64>,
    pub mean_delay_error: Option<f64>,
    /// Every delay found exactly once within tolerance and every message
    /// estimated.
    pub success: bool,
}

/// Everything a run produced, for the plot-data writers.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub y: CVector,
    pub solution: DualSolution,
    pub polys: DualPolynomialSet,
    pub estimates: DelayEstimates,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub artifacts: RunArtifacts,
    pub seconds: f64,
}

/// synthesize, solve, localize, recover, certify.
pub fn run_instance(cfg: &ResolvedConfig, n: usize, seed: u64) -> Result<RunOutcome> {
    let start = Instant::now();
    let gen = cfg.scenario_for(n, seed)?;
    let scenario = generate_scenario(&gen)?;
    let y = synthesize_measurements(&scenario)?;
    let model = MeasurementModel::from_scenario(&scenario)?;
    let problem = assemble_dual_sdp(&model, &y)?;
    let solution = AdmmSolver.solve(&problem, &cfg.solver, None)?;
    let polys = DualPolynomialSet::from_solution(&model, &solution)?;
    let estimates = polys.localize(&cfg.localize)?;
    let mut recovery = recover(&y, &model, &estimates)?;
    recovery.evaluate(&scenario)?;
    let certificate = certify(&scenario, &y, &solution.lambda, cfg.cert_tol)?;

    let mse = recovery.mse_mean().unwrap_or(f64::NAN);
    let max_delay_error = recovery.max_delay_error();
    let success = recovery.recovered_all()
        && recovery.misses() == 0
        && recovery.false_alarms() == 0
        && max_delay_error.is_some_and(|e| e <= SUCCESS_DELAY_TOL);
    let record = RunRecord {
        seed,
        n_samples: n,
        solver: SolverStats::of(&solution),
        detected: estimates.per_user.iter().map(Vec::len).collect(),
        mse,
        max_delay_error,
        mean_delay_error: recovery.mean_delay_error(),
        success,
        recovery,
        certificate,
    };
    Ok(RunOutcome {
        record,
        artifacts: RunArtifacts {
            scenario,
            y,
            solution,
            polys,
            estimates,
        },
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// A repetition that failed outright (generation or a solver error).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub seed: u64,
    pub n_samples: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RunEntry {
    Done(Box<RunRecord>),
    Failed(FailedRun),
}

impl RunEntry {
    pub fn record(&self) -> Option<&RunRecord> {
        match self {
            RunEntry::Done(r) => Some(r),
            RunEntry::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_samples: usize,
    pub repetitions: usize,
    pub mse_mean: f64,
    pub mse_median: f64,
    pub success_rate: f64,
    pub delay_err_mean: f64,
    pub certified_rate: f64,
    pub optimal_rate: f64,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        (v[h - 1] + v[h]) / 2.0
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Aggregate the runs at one `N`. Failed runs count against the success
/// rate and are left out of the error means.
pub fn summarize(n: usize, runs: &[&RunEntry]) -> Summary {
    let done: Vec<&RunRecord> = runs.iter().filter_map(|r| r.record()).collect();
    let mut mses: Vec<f64> = done.iter().map(|r| r.mse).filter(|m| m.is_finite()).collect();
    let delay: Vec<f64> = done.iter().filter_map(|r| r.mean_delay_error).collect();
    let total = runs.len().max(1) as f64;
    let rate = |f: &dyn Fn(&RunRecord) -> bool| done.iter().filter(|r| f(r)).count() as f64 / total;
    Summary {
        n_samples: n,
        repetitions: runs.len(),
        mse_mean: mean(&mses),
        mse_median: median(&mut mses),
        success_rate: rate(&|r| r.success),
        delay_err_mean: mean(&delay),
        certified_rate: rate(&|r| r.certificate.certified),
        optimal_rate: rate(&|r| r.solver.status == SolveStatus::Optimal),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ResolvedConfig,
    /// Ordered by `(N, repetition)`.
    pub runs: Vec<RunEntry>,
    pub summary: Vec<Summary>,
}

impl ExperimentResult {
    pub fn all_optimal(&self) -> bool {
        self.runs
            .iter()
            .all(|r| r.record().is_some_and(|r| r.solver.status == SolveStatus::Optimal))
    }
}

/// One timing row per run; kept apart from the result so that the result is
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub n_samples: usize,
    pub seed: u64,
    pub seconds: f64,
}

/// Run every `(N, seed)` pair of the config. Repetitions run concurrently;
/// the output order is fixed by `(N, repetition)`.
pub fn run_experiment(cfg: &ResolvedConfig) -> (ExperimentResult, Vec<RunOutcome>, Vec<Timing>) {
    let jobs: Vec<(usize, u64)> = cfg
        .n_values
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results: Vec<(usize, u64, Result<RunOutcome>)> = jobs
        .par_iter()
        .map(|&(n, s)| (n, s, run_instance(cfg, n, s)))
        .collect();

    let mut runs = Vec::with_capacity(results.len());
    let mut outcomes = Vec::new();
    let mut timing = Vec::new();
    for (n, seed, r) in results {
        match r {
            Ok(o) => {
                timing.push(Timing {
                    n_samples: n,
                    seed,
                    seconds: o.seconds,
                });
                runs.push(RunEntry::Done(Box::new(o.record.clone())));
                outcomes.push(o);
            }
            Err(e) => {
                log::warn!("N={n} seed={seed}: {e}");
                runs.push(RunEntry::Failed(FailedRun {
                    seed,
                    n_samples: n,
                    error: e.to_string(),
                }));
            }
        }
    }
    let summary = cfg
        .n_values
        .iter()
        .map(|&n| {
            let at: Vec<&RunEntry> = runs
                .iter()
                .filter(|r| match r {
                    RunEntry::Done(d) => d.n_samples == n,
                    RunEntry::Failed(f) => f.n_samples == n,
                })
                .collect();
            summarize(n, &at)
        })
        .collect();
    (
        ExperimentResult {
            config: cfg.clone(),
            runs,
            summary,
        },
        outcomes,
        timing,
    )
}
