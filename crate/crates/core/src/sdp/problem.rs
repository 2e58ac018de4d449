//! The dual semidefinite program.
//!
//! ```text
//! maximize   Re <lambda, y>
//! over       lambda in C^M, Q Hermitian N x N
//! subject to [[Q, G_k^H], [G_k, I_{M_k}]] >= 0        for every user k
//!            sum of diagonal q of Q = 1 if q == 0 else 0,  q = 0..N-1
//! ```
//!
//! with `G_k = (B* lambda)_k`. The Schur complement of each block reads
//! `Q - G_k^H G_k >= 0`; sandwiching with `a*(tau)` and using the diagonal
//! sums gives `||G_k a*(tau)||_2 <= 1` for every `tau`, the dual atomic-norm
//! constraint.
//!
//! Real decision vector layout: `[Re lambda, Im lambda, diag Q, (Re Q_ij,
//! Im Q_ij) for i < j in row-major order]`, `2M + N^2` entries in total.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape, Result};
use crate::model::{diag_sum, CMatrix, CVector, SensingMatrix, C64};
use crate::operators::{adjoint_block, MeasurementModel};
use crate::sdp::cone::{hermitian_min_eigenvalue, realify};

/// One PSD constraint; several users share it when their codebooks coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub users: Vec<usize>,
    pub codebook: CMatrix,
}

impl PsdBlock {
    pub fn message_dim(&self) -> usize {
        self.codebook.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    n_samples: usize,
    y: CVector,
    sensing: SensingMatrix,
    blocks: Vec<PsdBlock>,
    user_count: usize,
}

/// Assemble the dual SDP, collapsing users with identical codebooks into one
/// PSD block.
pub fn assemble_dual_sdp(model: &MeasurementModel, y: &CVector) -> Result<ConicProblem> {
    assemble_dual_sdp_with(model, y, true)
}

pub fn assemble_dual_sdp_with(
    model: &MeasurementModel,
    y: &CVector,
    collapse_shared_codebooks: bool,
) -> Result<ConicProblem> {
    if y.len() != model.measurement_count() {
        return shape(format!(
            "measurement vector has length {}, model expects {}",
            y.len(),
            model.measurement_count()
        ));
    }
    let mut blocks: Vec<PsdBlock> = Vec::new();
    for (k, cb) in model.codebooks().iter().enumerate() {
        if collapse_shared_codebooks {
            if let Some(b) = blocks.iter_mut().find(|b| b.codebook == *cb) {
                b.users.push(k);
                continue;
            }
        }
        blocks.push(PsdBlock {
            users: vec![k],
            codebook: cb.clone(),
        });
    }
    let problem = ConicProblem {
        n_samples: model.n_samples(),
        y: y.clone(),
        sensing: model.sensing().clone(),
        blocks,
        user_count: model.user_count(),
    };
    if !problem.equality_rows_independent() {
        log::warn!("equality constraints are numerically rank deficient");
    }
    Ok(problem)
}

impl ConicProblem {
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn measurement_count(&self) -> usize {
        self.y.len()
    }

    pub fn measurements(&self) -> &CVector {
        &self.y
    }

    pub fn sensing(&self) -> &SensingMatrix {
        &self.sensing
    }

    pub fn blocks(&self) -> &[PsdBlock] {
        &self.blocks
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn is_collapsed(&self) -> bool {
        self.blocks.len() < self.user_count
    }

    pub fn decision_dim(&self) -> usize {
        2 * self.measurement_count() + self.n_samples * self.n_samples
    }

    /// Sizes of the real symmetric embeddings of the PSD blocks.
    pub fn psd_block_dims(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|b| 2 * (self.n_samples + b.message_dim()))
            .collect()
    }

    pub fn equality_count(&self) -> usize {
        2 * self.n_samples - 1
    }

    /// `Re <lambda, y>`.
    pub fn objective(&self, lambda: &CVector) -> f64 {
        self.y.dotc(lambda).re
    }

    /// Coefficients of the objective over the real decision vector.
    pub fn objective_vector(&self) -> DVector<f64> {
        let m = self.measurement_count();
        let mut c = DVector::zeros(self.decision_dim());
        for i in 0..m {
            c[i] = self.y[i].re;
            c[m + i] = self.y[i].im;
        }
        c
    }

    pub fn encode(&self, lambda: &CVector, q: &CMatrix) -> DVector<f64> {
        let (m, n) = (self.measurement_count(), self.n_samples);
        let mut v = DVector::zeros(self.decision_dim());
        for i in 0..m {
            v[i] = lambda[i].re;
            v[m + i] = lambda[i].im;
        }
        let mut at = 2 * m;
        for i in 0..n {
            v[at] = q[(i, i)].re;
            at += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                v[at] = q[(i, j)].re;
                v[at + 1] = q[(i, j)].im;
                at += 2;
            }
        }
        v
    }

    pub fn decode(&self, v: &DVector<f64>) -> (CVector, CMatrix) {
        let (m, n) = (self.measurement_count(), self.n_samples);
        let lambda = CVector::from_fn(m, |i, _| C64::new(v[i], v[m + i]));
        let mut q = CMatrix::zeros(n, n);
        let mut at = 2 * m;
        for i in 0..n {
            q[(i, i)] = C64::new(v[at], 0.0);
            at += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                let z = C64::new(v[at], v[at + 1]);
                q[(i, j)] = z;
                q[(j, i)] = z.conj();
                at += 2;
            }
        }
        (lambda, q)
    }

    /// `G_b = C_b^T diag(D^H lambda)` for PSD block `b`.
    pub fn coupling(&self, b: usize, lambda: &CVector) -> CMatrix {
        let lt = self.sensing.apply_adjoint(lambda);
        adjoint_block(&self.blocks[b].codebook, &lt)
    }

    /// The Hermitian block `[[Q, G_b^H], [G_b, I]]`.
    pub fn block_matrix(&self, b: usize, lambda: &CVector, q: &CMatrix) -> CMatrix {
        let g = self.coupling(b, lambda);
        assemble_block(q, &g)
    }

    /// Real symmetric embedding of PSD block `b`, an affine function of the
    /// decision vector.
    pub fn real_block(&self, b: usize, v: &DVector<f64>) -> DMatrix<f64> {
        let (lambda, q) = self.decode(v);
        realify(&self.block_matrix(b, &lambda, &q)).expect("block is Hermitian by construction")
    }

    /// Rows of the real equality system `A v = rhs`: the trace row, then the
    /// real and imaginary parts of each upper diagonal sum.
    pub fn equality_system(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (m, n) = (self.measurement_count(), self.n_samples);
        let rows = self.equality_count();
        let mut a = DMatrix::zeros(rows, self.decision_dim());
        let mut rhs = DVector::zeros(rows);
        for i in 0..n {
            a[(0, 2 * m + i)] = 1.0;
        }
        rhs[0] = 1.0;
        let mut at = 2 * m + n;
        for i in 0..n {
            for j in i + 1..n {
                let q = j - i;
                a[(2 * q - 1, at)] = 1.0;
                a[(2 * q, at + 1)] = 1.0;
                at += 2;
            }
        }
        (a, rhs)
    }

    /// `trace(Q) - 1` followed by real and imaginary parts of each upper
    /// diagonal sum.
    pub fn equality_residual(&self, q: &CMatrix) -> Vec<f64> {
        let n = self.n_samples;
        let mut r = Vec::with_capacity(self.equality_count());
        r.push(q.trace().re - 1.0);
        for off in 1..n as isize {
            let s = diag_sum(q, -off).expect("offset in range");
            r.push(s.re);
            r.push(s.im);
        }
        r
    }

    fn equality_rows_independent(&self) -> bool {
        // Gram matrix of the rows; each row touches its own diagonal so this
        // is diagonal, but check numerically rather than assume.
        let (a, _) = self.equality_system();
        let gram = &a * a.transpose();
        nalgebra::Cholesky::new(gram).is_some_and(|c| {
            c.l().diagonal().iter().all(|&d| d > 1e-12)
        })
    }

    /// Worst violation of the constraints at `(lambda, q)`: the largest
    /// equality residual and the most negative block eigenvalue.
    pub fn constraint_violation(&self, lambda: &CVector, q: &CMatrix) -> Result<(f64, f64)> {
        let eq = self
            .equality_residual(q)
            .iter()
            .fold(0.0f64, |a, r| a.max(r.abs()));
        let mut min_eig = f64::INFINITY;
        for b in 0..self.blocks.len() {
            min_eig = min_eig.min(hermitian_min_eigenvalue(&self.block_matrix(b, lambda, q))?);
        }
        Ok((eq, min_eig))
    }

    pub fn is_feasible(&self, lambda: &CVector, q: &CMatrix, tol: f64) -> Result<bool> {
        let (eq, min_eig) = self.constraint_violation(lambda, q)?;
        // summing N entries of a diagonal costs up to N ulps
        let slack = self.n_samples as f64 * f64::EPSILON;
        Ok(eq <= tol + slack && min_eig >= -tol)
    }
}

pub(crate) fn assemble_block(q: &CMatrix, g: &CMatrix) -> CMatrix {
    let n = q.nrows();
    let m = g.nrows();
    let mut s = CMatrix::zeros(n + m, n + m);
    s.view_mut((0, 0), (n, n)).copy_from(q);
    s.view_mut((n, 0), (m, n)).copy_from(g);
    s.view_mut((0, n), (n, m)).copy_from(&g.adjoint());
    for i in 0..m {
        s[(n + i, n + i)] = C64::new(1.0, 0.0);
    }
    s
}
