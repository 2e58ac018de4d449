//! Operator-splitting solver for the dual SDP.
//!
//! Each PSD block gets a slack copy `S_b` and a scaled multiplier `U_b`:
//!
//! ```text
//! minimize  -Re<lambda, y> + sum_b indicator_PSD(S_b)
//! s.t.      P_b(lambda, Q) = S_b,   Q in {diagonal sums fixed}
//! ```
//!
//! where `P_b` is the block `[[Q, G_b^H], [G_b, I]]`. The `(lambda, Q)` step
//! separates: `Q` is the Frobenius projection of the averaged top-left slack
//! blocks onto the diagonal-sum affine set, and `lambda` solves
//! `(D W D^H) lambda = sum_b B_b(W_b) + y / (2 rho)` with `W = diag(w)`,
//! `w_n = sum_b ||c_n^b||^2`, a fixed matrix factored once. The slack step is
//! one Hermitian eigendecomposition per block.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::model::{CMatrix, CVector, C64};
use crate::operators::adjoint_block;
use crate::sdp::cone::{hermitian_eigen, hermitian_psd_project};
use crate::sdp::problem::{assemble_block, ConicProblem};
use crate::sdp::{DualSolution, Residuals, SolveStatus, SolverBackend, SolverOptions};

const CHECK_EVERY: usize = 10;
const RHO_UPDATE_EVERY: usize = 50;
const STATIONARY_WINDOW: usize = 100;
const MONOTONE_WINDOW: usize = 500;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const DIVERGED: f64 = 1e12;

/// The in-repo ADMM backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdmmSolver;

impl SolverBackend for AdmmSolver {
    fn name(&self) -> &str {
        "admm"
    }

    fn solve(
        &self,
        problem: &ConicProblem,
        opts: &SolverOptions,
        warm: Option<&DualSolution>,
    ) -> Result<DualSolution> {
        opts.check()?;
        Admm::new(problem, opts, warm)?.run()
    }
}

enum NormalSolve {
    Diagonal(Vec<f64>),
    Dense(Cholesky<C64, nalgebra::Dyn>),
}

struct Admm<'a> {
    problem: &'a ConicProblem,
    opts: &'a SolverOptions,
    n: usize,
    /// Unit-norm copy of the measurements.
    y: CVector,
    y_norm: f64,
    /// Codebooks multiplied by `scale`.
    codebooks: Vec<CMatrix>,
    /// Internal lambda times `scale` is the caller's lambda.
    scale: f64,
    normal: NormalSolve,
    lambda: CVector,
    q: CMatrix,
    slack: Vec<CMatrix>,
    mult: Vec<CMatrix>,
    rho: f64,
}

impl<'a> Admm<'a> {
    fn new(problem: &'a ConicProblem, opts: &'a SolverOptions, warm: Option<&DualSolution>) -> Result<Self> {
        let n = problem.n_samples();
        let m = problem.measurement_count();
        let y_norm = problem.measurements().norm();
        let y = if y_norm > 0.0 {
            problem.measurements() / C64::new(y_norm, 0.0)
        } else {
            problem.measurements().clone()
        };

        // Equilibrate: scale the codebooks so that D diag(w) D^H has unit
        // average diagonal.
        let raw_w: Vec<f64> = (0..n)
            .map(|i| problem.blocks().iter().map(|b| b.codebook.row(i).norm_squared()).sum())
            .collect();
        let d = problem.sensing();
        let mean_diag = if d.is_identity() {
            raw_w.iter().sum::<f64>() / n as f64
        } else {
            let e = d.entries();
            (0..m)
                .map(|r| (0..n).map(|c| e[(r, c)].norm_sqr() * raw_w[c]).sum::<f64>())
                .sum::<f64>()
                / m as f64
        };
        if !(mean_diag > 0.0) {
            return Err(Error::Solver("codebooks carry no energy".into()));
        }
        let scale = 1.0 / mean_diag.sqrt();
        let codebooks: Vec<CMatrix> = problem
            .blocks()
            .iter()
            .map(|b| &b.codebook * C64::new(scale, 0.0))
            .collect();
        let w: Vec<f64> = raw_w.iter().map(|x| x * scale * scale).collect();

        let normal = if d.is_identity() {
            // rows with no energy leave lambda unconstrained there; pin them
            NormalSolve::Diagonal(w.iter().map(|&x| if x > 0.0 { x } else { 1.0 }).collect())
        } else {
            let e = d.entries();
            let mut h = CMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    h[(i, j)] = (0..n).map(|c| e[(i, c)] * e[(j, c)].conj() * w[c]).sum();
                }
            }
            let reg = 1e-12 * h.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
            for i in 0..m {
                h[(i, i)] += C64::new(reg, 0.0);
            }
            NormalSolve::Dense(
                Cholesky::new(h)
                    .ok_or_else(|| Error::Solver("normal matrix is not positive definite".into()))?,
            )
        };

        let (lambda, q) = match warm {
            Some(ws) if ws.lambda.len() == m && ws.q.shape() == (n, n) => {
                (&ws.lambda / C64::new(scale, 0.0), ws.q.clone())
            }
            _ => (
                CVector::zeros(m),
                CMatrix::identity(n, n) / C64::new(n as f64, 0.0),
            ),
        };

        let mut me = Self {
            problem,
            opts,
            n,
            y,
            y_norm,
            codebooks,
            scale,
            normal,
            lambda,
            q,
            slack: Vec::new(),
            mult: Vec::new(),
            rho: opts.rho,
        };
        let mut slack = Vec::with_capacity(me.codebooks.len());
        for b in 0..me.codebooks.len() {
            slack.push(hermitian_psd_project(&me.block(b))?);
        }
        me.mult = slack.iter().map(|s| CMatrix::zeros(s.nrows(), s.ncols())).collect();
        me.slack = slack;
        Ok(me)
    }

    fn coupling(&self, b: usize) -> CMatrix {
        let lt = self.problem.sensing().apply_adjoint(&self.lambda);
        adjoint_block(&self.codebooks[b], &lt)
    }

    fn block(&self, b: usize) -> CMatrix {
        assemble_block(&self.q, &self.coupling(b))
    }

    fn objective(&self) -> f64 {
        self.y.dotc(&self.lambda).re
    }

    fn solve_normal(&self, rhs: &CVector) -> CVector {
        match &self.normal {
            NormalSolve::Diagonal(w) => CVector::from_fn(rhs.len(), |i, _| rhs[i] / w[i]),
            NormalSolve::Dense(ch) => ch.solve(rhs),
        }
    }

    /// Minimize the augmented Lagrangian over `(lambda, Q)`.
    fn update_primal(&mut self) {
        let n = self.n;
        let nb = self.codebooks.len();
        let mut qbar = CMatrix::zeros(n, n);
        let mut back = CVector::zeros(n);
        for b in 0..nb {
            let w = &self.slack[b] - &self.mult[b];
            let mb = w.nrows() - n;
            qbar += w.view((0, 0), (n, n));
            let lower = (w.view((n, 0), (mb, n)) + w.view((0, n), (n, mb)).adjoint()) * C64::new(0.5, 0.0);
            let cb = &self.codebooks[b];
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..mb {
                    acc += cb[(i, j)].conj() * lower[(j, i)];
                }
                back[i] += acc;
            }
        }
        qbar /= C64::new(nb as f64, 0.0);
        self.q = project_diagonal_sums(&qbar);

        let rhs = self.problem.sensing().apply(&back) + &self.y * C64::new(0.5 / self.rho, 0.0);
        self.lambda = self.solve_normal(&rhs);
    }

    fn run(mut self) -> Result<DualSolution> {
        let m = self.problem.measurement_count();
        if self.y_norm == 0.0 {
            return Ok(DualSolution {
                lambda: CVector::zeros(m),
                q: CMatrix::identity(self.n, self.n) / C64::new(self.n as f64, 0.0),
                objective: 0.0,
                status: SolveStatus::Optimal,
                iterations: 0,
                residuals: Residuals::default(),
            });
        }

        let alpha = self.opts.alpha;
        let nb = self.codebooks.len();
        let dim: usize = self.slack.iter().map(|s| s.nrows() * s.nrows()).sum();
        let sqrt_dim = (dim as f64).sqrt();
        let mut history: Vec<f64> = Vec::new();
        let mut window_sum = 0.0;
        let mut last_window: Option<f64> = None;
        let mut status = SolveStatus::MaxIters;
        let mut residuals = Residuals::default();
        let mut iterations = 0;

        for it in 1..=self.opts.max_iters {
            iterations = it;
            self.update_primal();

            let mut r_prim2 = 0.0;
            let mut r_dual2 = 0.0;
            let mut p_norm2 = 0.0;
            let mut s_norm2 = 0.0;
            let mut u_norm2 = 0.0;
            for b in 0..nb {
                let p = self.block(b);
                let relaxed = &p * C64::new(alpha, 0.0) + &self.slack[b] * C64::new(1.0 - alpha, 0.0);
                let s_new = hermitian_psd_project(&(&relaxed + &self.mult[b]))?;
                self.mult[b] += &relaxed - &s_new;
                r_prim2 += (&p - &s_new).norm_squared();
                r_dual2 += (&s_new - &self.slack[b]).norm_squared();
                p_norm2 += p.norm_squared();
                s_norm2 += s_new.norm_squared();
                u_norm2 += self.mult[b].norm_squared();
                self.slack[b] = s_new;
            }
            let r_prim = r_prim2.sqrt();
            let r_dual = self.rho * r_dual2.sqrt();
            let u_norm = self.rho * u_norm2.sqrt();
            let obj = self.objective();
            history.push(obj);
            residuals = Residuals {
                primal: r_prim,
                dual: r_dual,
            };

            if !obj.is_finite() || !r_prim.is_finite() || self.lambda.norm() > DIVERGED {
                status = SolveStatus::InfeasibleSuspect;
                break;
            }

            window_sum += r_prim;
            if it % MONOTONE_WINDOW == 0 {
                let avg = window_sum / MONOTONE_WINDOW as f64;
                if let Some(prev) = last_window {
                    if avg > prev {
                        log::debug!("primal residual window average rose from {prev:.3e} to {avg:.3e} at {it}");
                    }
                }
                last_window = Some(avg);
                window_sum = 0.0;
            }

            let eps_prim = self.opts.eps_abs * sqrt_dim + self.opts.eps_rel * p_norm2.sqrt().max(s_norm2.sqrt());
            let eps_dual = self.opts.eps_abs * sqrt_dim + self.opts.eps_rel * u_norm;

            if self.opts.verbose && (it == 1 || it % 500 == 0) {
                eprintln!(
                    "{it:>6}  obj {:+.9e}  r_p {r_prim:.2e}/{eps_prim:.1e}  r_d {r_dual:.2e}/{eps_dual:.1e}  rho {:.2e}",
                    obj * self.scale * self.y_norm,
                    self.rho
                );
            }

            if it % CHECK_EVERY == 0 && r_prim <= eps_prim && r_dual <= eps_dual && it > STATIONARY_WINDOW {
                let old = history[it - 1 - STATIONARY_WINDOW];
                if (obj - old).abs() <= self.opts.eps_rel * obj.abs().max(old.abs()) + self.opts.eps_abs {
                    status = SolveStatus::Optimal;
                    break;
                }
            }

            if self.opts.adaptive_rho && it % RHO_UPDATE_EVERY == 0 {
                let prim_rel = r_prim / p_norm2.sqrt().max(s_norm2.sqrt()).max(1e-30);
                let dual_rel = r_dual / u_norm.max(1e-30);
                let ratio = (prim_rel / dual_rel.max(1e-30)).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (self.rho * ratio).clamp(RHO_MIN, RHO_MAX);
                    let f = C64::new(self.rho / new_rho, 0.0);
                    for u in &mut self.mult {
                        *u *= f;
                    }
                    self.rho = new_rho;
                }
            }
        }

        if status == SolveStatus::InfeasibleSuspect {
            return Ok(DualSolution {
                lambda: &self.lambda * C64::new(self.scale, 0.0),
                q: self.q.clone(),
                objective: f64::NAN,
                status,
                iterations,
                residuals,
            });
        }

        let (lambda, q) = self.restore_feasibility()?;
        let lambda = lambda * C64::new(self.scale, 0.0);
        let objective = self.problem.objective(&lambda);
        if status == SolveStatus::Optimal {
            let (eq, min_eig) = self.problem.constraint_violation(&lambda, &q)?;
            if eq > self.opts.eps_abs || min_eig < -self.opts.eps_abs {
                log::warn!("converged iterate violates constraints: equality {eq:.2e}, min eigenvalue {min_eig:.2e}");
                status = SolveStatus::MaxIters;
            }
        }
        Ok(DualSolution {
            lambda,
            q,
            objective,
            status,
            iterations,
            residuals,
        })
    }

    /// Push the iterate into the feasible set. With
    /// `delta = max_b max(0, -lambda_min(Q - G_b^H G_b))`, the pair
    /// `((Q + delta I) / (1 + N delta), lambda / sqrt(1 + N delta))` keeps the
    /// diagonal sums and makes every Schur complement PSD.
    fn restore_feasibility(&self) -> Result<(CVector, CMatrix)> {
        let n = self.n;
        let mut delta = 0.0f64;
        for b in 0..self.codebooks.len() {
            let g = self.coupling(b);
            let schur = &self.q - g.adjoint() * &g;
            let schur = (&schur + schur.adjoint()) * C64::new(0.5, 0.0);
            let (vals, _) = hermitian_eigen(&schur)?;
            delta = delta.max(-vals[0]);
        }
        if delta <= 0.0 {
            return Ok((self.lambda.clone(), self.q.clone()));
        }
        // a hair of slack absorbs rounding in the rescaling below
        let delta = delta * (1.0 + 1e-9) + 1e-15;
        let shrink = 1.0 + n as f64 * delta;
        let mut q = &self.q + CMatrix::identity(n, n) * C64::new(delta, 0.0);
        q /= C64::new(shrink, 0.0);
        Ok((&self.lambda / C64::new(shrink.sqrt(), 0.0), q))
    }
}

/// Frobenius projection of a Hermitian matrix onto
/// `{Q : trace Q = 1, every off-diagonal sum = 0}`: shift each diagonal by
/// its mean defect.
pub(crate) fn project_diagonal_sums(q: &CMatrix) -> CMatrix {
    let n = q.nrows();
    let mut out = (q + q.adjoint()) * C64::new(0.5, 0.0);
    for off in 0..n {
        let len = (n - off) as f64;
        let sum: C64 = (0..n - off).map(|i| out[(i, i + off)]).sum();
        let target = if off == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        let shift = (target - sum) / len;
        for i in 0..n - off {
            if off == 0 {
                out[(i, i)] = C64::new(out[(i, i)].re + shift.re, 0.0);
            } else {
                out[(i, i + off)] += shift;
                out[(i + off, i)] = out[(i, i + off)].conj();
            }
        }
    }
    out
}
