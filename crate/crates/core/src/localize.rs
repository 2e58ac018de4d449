//! Delay localization from the vector-valued dual polynomials
//! `q_k(tau) = G_k a*(tau) = sum_n g_n exp(+j 2 pi n tau)`, with `g_n` the
//! n-th column of `G_k = (B* lambda)_k`. Delays sit where `||q_k||_2` touches
//! one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{check_delay, wrap_distance, wrap_unit, CMatrix, CVector, C64};
use crate::operators::MeasurementModel;
use crate::sdp::DualSolution;

const NEWTON_ITERS: usize = 20;
const GOLDEN_ITERS: usize = 100;

/// `q(tau) = G a*(tau)`.
pub fn eval_dual_poly(g: &CMatrix, tau: f64) -> Result<CVector> {
    check_delay(tau)?;
    Ok(horner(g, tau).0)
}

/// `q`, `q'` and `q''` at `tau` (derivatives with respect to `tau`).
fn horner(g: &CMatrix, tau: f64) -> (CVector, CVector, CVector) {
    let (m, n) = g.shape();
    let z = C64::from_polar(1.0, 2.0 * PI * tau);
    let mut q = CVector::zeros(m);
    let mut dq = CVector::zeros(m);
    let mut d2q = CVector::zeros(m);
    let mut zn = C64::new(1.0, 0.0);
    for col in 0..n {
        let w = 2.0 * PI * col as f64;
        let d1 = C64::new(0.0, w) * zn;
        let d2 = C64::new(-w * w, 0.0) * zn;
        for r in 0..m {
            let gv = g[(r, col)];
            q[r] += gv * zn;
            dq[r] += gv * d1;
            d2q[r] += gv * d2;
        }
        zn *= z;
    }
    (q, dq, d2q)
}

fn norm_sq(g: &CMatrix, tau: f64) -> f64 {
    let (m, n) = g.shape();
    let z = C64::from_polar(1.0, 2.0 * PI * tau);
    let mut q = CVector::zeros(m);
    // Horner from the highest power down
    for col in (0..n).rev() {
        for r in 0..m {
            q[r] = q[r] * z + g[(r, col)];
        }
    }
    q.norm_squared()
}

/// `f = ||q||^2` with its first two derivatives.
fn power_and_derivatives(g: &CMatrix, tau: f64) -> (f64, f64, f64) {
    let (q, dq, d2q) = horner(g, tau);
    let f = q.norm_squared();
    let f1 = 2.0 * q.dotc(&dq).re;
    let f2 = 2.0 * (dq.norm_squared() + q.dotc(&d2q).re);
    (f, f1, f2)
}

/// Coefficients `r_d`, `d = -(N-1)..=(N-1)`, of the trigonometric expansion
/// `||q(tau)||^2 = sum_d r_d exp(j 2 pi d tau)`; index `d + N - 1`.
pub fn power_coefficients(g: &CMatrix) -> Vec<C64> {
    let n = g.ncols();
    let mut r = vec![C64::new(0.0, 0.0); 2 * n - 1];
    for a in 0..n {
        for b in 0..n {
            let d = a as isize - b as isize;
            r[(d + n as isize - 1) as usize] += g.column(b).dotc(&g.column(a));
        }
    }
    r
}

/// Maximize `||q||^2` near a grid-local maximum `tau0`, staying within
/// `half_width` of it. Newton on the analytic derivatives, golden-section on
/// the cell if Newton misbehaves. Never returns a point worse than `tau0`.
pub fn refine_peak(g: &CMatrix, tau0: f64, half_width: f64) -> f64 {
    let (lo, hi) = (tau0 - half_width, tau0 + half_width);
    let f0 = norm_sq(g, wrap_unit(tau0));
    let mut t = tau0;
    let mut ok = true;
    for _ in 0..NEWTON_ITERS {
        let (_, f1, f2) = power_and_derivatives(g, wrap_unit(t));
        if f1.abs() < 1e-12 {
            break;
        }
        if f2 >= 0.0 {
            ok = false;
            break;
        }
        let step = f1 / f2;
        let next = t - step;
        if !(lo..=hi).contains(&next) {
            ok = false;
            break;
        }
        t = next;
        if step.abs() < 1e-15 {
            break;
        }
    }
    if !ok {
        t = golden_section(g, lo, hi);
    }
    let t = t.clamp(lo, hi);
    if norm_sq(g, wrap_unit(t)) >= f0 {
        wrap_unit(t)
    } else {
        wrap_unit(tau0)
    }
}

fn golden_section(g: &CMatrix, mut a: f64, mut b: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = norm_sq(g, wrap_unit(c));
    let mut fd = norm_sq(g, wrap_unit(d));
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = norm_sq(g, wrap_unit(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = norm_sq(g, wrap_unit(d));
        }
    }
    (a + b) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeOptions {
    /// Scan grid size as a multiple of `N`; at least 4.
    pub grid_factor: usize,
    /// Minimum refined `||q_k||_2` for a peak to count as a delay.
    pub threshold: f64,
    /// Peaks closer than this collapse to the stronger one; `0.5/N` if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub merge_radius: Option<f64>,
    /// Keep only the strongest `P_k` peaks per user when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_counts: Option<Vec<usize>>,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            grid_factor: 16,
            threshold: 1.0 - 1e-3,
            merge_radius: None,
            expected_counts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub tau: f64,
    /// `||q_k(tau)||_2`.
    pub value: f64,
}

/// Peaks of `||q||_2` on the circle: grid scan, refinement, thresholding and
/// merging. Sorted by delay.
pub fn scan_peaks(g: &CMatrix, opts: &LocalizeOptions) -> Result<Vec<Peak>> {
    let n = g.ncols();
    if opts.grid_factor < 4 {
        return domain(format!("grid factor {} below 4", opts.grid_factor));
    }
    let grid = opts.grid_factor * n;
    let h = 1.0 / grid as f64;
    let vals: Vec<f64> = (0..grid).map(|i| norm_sq(g, i as f64 * h).sqrt()).collect();
    // The grid can sit up to half a cell off the peak, so gate loosely before
    // refining and apply the real threshold afterwards.
    let gate = 0.9 * opts.threshold;
    let mut found = Vec::new();
    for i in 0..grid {
        let prev = vals[(i + grid - 1) % grid];
        let next = vals[(i + 1) % grid];
        let v = vals[i];
        if v >= gate && v >= prev && v > next {
            let tau = refine_peak(g, i as f64 * h, h);
            let value = norm_sq(g, tau).sqrt();
            if value >= opts.threshold {
                found.push(Peak { tau, value });
            }
        }
    }
    let radius = opts.merge_radius.unwrap_or(0.5 / n as f64);
    Ok(merge_peaks(found, radius))
}

/// Keep the stronger of any two peaks within `radius`; result sorted by delay.
pub fn merge_peaks(mut peaks: Vec<Peak>, radius: f64) -> Vec<Peak> {
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.tau.total_cmp(&b.tau)));
    let mut kept: Vec<Peak> = Vec::new();
    for p in peaks {
        if kept.iter().all(|k| wrap_distance(k.tau, p.tau) > radius) {
            kept.push(p);
        }
    }
    kept.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    kept
}

/// `G_k = (B* lambda)_k` for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolynomialSet {
    blocks: Vec<CMatrix>,
}

impl DualPolynomialSet {
    pub fn from_lambda(model: &MeasurementModel, lambda: &CVector) -> Result<Self> {
        Ok(Self {
            blocks: model.adjoint(lambda)?.blocks,
        })
    }

    pub fn from_solution(model: &MeasurementModel, sol: &DualSolution) -> Result<Self> {
        Self::from_lambda(model, &sol.lambda)
    }

    pub fn user_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_samples(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.ncols())
    }

    pub fn block(&self, k: usize) -> &CMatrix {
        &self.blocks[k]
    }

    pub fn eval(&self, k: usize, tau: f64) -> Result<CVector> {
        eval_dual_poly(&self.blocks[k], tau)
    }

    /// `||q_k(tau)||_2`; `tau` is wrapped onto `[0, 1)`.
    pub fn magnitude(&self, k: usize, tau: f64) -> f64 {
        norm_sq(&self.blocks[k], wrap_unit(tau)).sqrt()
    }

    /// `max_k max_i ||q_k(i / (factor N))||_2`.
    pub fn grid_max(&self, factor: usize) -> f64 {
        let grid = factor * self.n_samples();
        (0..self.user_count())
            .flat_map(|k| (0..grid).map(move |i| (k, i as f64 / grid as f64)))
            .map(|(k, t)| self.magnitude(k, t))
            .fold(0.0, f64::max)
    }

    pub fn localize(&self, opts: &LocalizeOptions) -> Result<DelayEstimates> {
        let mut per_user = Vec::with_capacity(self.user_count());
        for (k, g) in self.blocks.iter().enumerate() {
            let mut peaks = scan_peaks(g, opts)?;
            if let Some(p) = opts.expected_counts.as_ref().and_then(|c| c.get(k)).copied() {
                if peaks.len() > p {
                    peaks.sort_by(|a, b| b.value.total_cmp(&a.value));
                    peaks.truncate(p);
                    peaks.sort_by(|a, b| a.tau.total_cmp(&b.tau));
                }
            }
            per_user.push(peaks);
        }
        Ok(DelayEstimates { per_user })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimates {
    pub per_user: Vec<Vec<Peak>>,
}

impl DelayEstimates {
    pub fn delays(&self, k: usize) -> Vec<f64> {
        self.per_user[k].iter().map(|p| p.tau).collect()
    }

    pub fn total(&self) -> usize {
        self.per_user.iter().map(Vec::len).sum()
    }
}
