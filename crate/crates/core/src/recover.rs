//! Message and amplitude recovery once delays are known, phase alignment,
//! spike matching, error metrics and the optimality certificate check.

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{shape, Error, Result};
use crate::localize::{DelayEstimates, DualPolynomialSet};
use crate::model::{min_pairwise_distance, steering_vector, wrap_distance, CMatrix, CVector, Scenario, C64};
use crate::operators::MeasurementModel;

/// Relative pivot size below which the least-squares design counts as rank
/// deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PathCoefficients {
    /// `b[k]` is `M_k x P_k`, column `l` the coefficient vector of path `l`.
    pub blocks: Vec<CMatrix>,
    /// `||y - Phi b|| / ||y||` (absolute when `y = 0`).
    pub residual: f64,
    pub rank_deficient: bool,
}

/// Column `(k, l)` block of the design: `D diag(a(tau_l^k)) conj(C_k)`.
fn design_matrix(model: &MeasurementModel, delays: &DelayEstimates) -> Result<CMatrix> {
    let n = model.n_samples();
    let cols: usize = model
        .message_dims()
        .iter()
        .enumerate()
        .map(|(k, m)| m * delays.per_user[k].len())
        .sum();
    let mut phi = CMatrix::zeros(model.measurement_count(), cols);
    let mut c = 0;
    for (k, cb) in model.codebooks().iter().enumerate() {
        let conj_cb = cb.map(|z| z.conj());
        for p in &delays.per_user[k] {
            let a = steering_vector(p.tau, n)?;
            for m in 0..cb.ncols() {
                let col = a.component_mul(&conj_cb.column(m));
                phi.set_column(c, &model.sensing().apply(&col));
                c += 1;
            }
        }
    }
    Ok(phi)
}

/// Least-squares fit of `y ~ sum_{k,l} D diag(a(tau_l^k)) conj(C_k) b_{k,l}`,
/// columns user-major then path-minor. Uses Householder QR; falls back to the
/// minimum-norm SVD solution when the design is wide or rank deficient.
pub fn least_squares_paths(
    y: &CVector,
    model: &MeasurementModel,
    delays: &DelayEstimates,
) -> Result<PathCoefficients> {
    if delays.per_user.len() != model.user_count() {
        return shape(format!(
            "delay estimates for {} users, model has {}",
            delays.per_user.len(),
            model.user_count()
        ));
    }
    if y.len() != model.measurement_count() {
        return shape(format!("y has length {}, expected {}", y.len(), model.measurement_count()));
    }
    let phi = design_matrix(model, delays)?;
    let (rows, cols) = phi.shape();
    let mut b = CVector::zeros(cols);
    let mut rank_deficient = false;
    if cols > 0 {
        let mut solved = false;
        if cols <= rows {
            let qr = phi.clone().qr();
            let r = qr.r();
            let big = (0..cols).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
            let small = (0..cols).map(|i| r[(i, i)].norm()).fold(f64::INFINITY, f64::min);
            if big > 0.0 && small > RANK_TOL * big {
                let rhs = qr.q().adjoint() * y;
                if let Some(sol) = r.solve_upper_triangular(&rhs) {
                    b = sol;
                    solved = true;
                }
            }
        }
        if !solved {
            rank_deficient = true;
            log::warn!("least-squares design is {rows}x{cols} and rank deficient; using minimum-norm solution");
            let svd = phi.clone().svd(true, true);
            let eps = RANK_TOL * svd.singular_values.max();
            b = svd
                .solve(y, eps)
                .map_err(|e| Error::Solver(format!("minimum-norm solve failed: {e}")))?;
        }
    }
    let resid = (y - &phi * &b).norm();
    let yn = y.norm();
    let residual = if yn > 0.0 { resid / yn } else { resid };

    let mut blocks = Vec::with_capacity(model.user_count());
    let mut c = 0;
    for (k, m) in model.message_dims().into_iter().enumerate() {
        let p = delays.per_user[k].len();
        let mut blk = CMatrix::zeros(m, p);
        for l in 0..p {
            for i in 0..m {
                blk[(i, l)] = b[c];
                c += 1;
            }
        }
        blocks.push(blk);
    }
    Ok(PathCoefficients {
        blocks,
        residual,
        rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneFactor {
    pub message: CVector,
    pub gains: CVector,
    /// `sigma_2 / sigma_1`; zero for an exact rank-one input.
    pub fit_ratio: f64,
}

/// Best rank-one split `B ~ x g^T` with `x` unit norm.
pub fn factor_rank_one(b: &CMatrix, user: usize) -> Result<RankOneFactor> {
    if b.ncols() == 0 || b.nrows() == 0 || b.norm() == 0.0 {
        return Err(Error::NoEnergy(user));
    }
    let svd = b.clone().svd(true, true);
    let s = &svd.singular_values;
    let lead = s.imax();
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^H");
    let sigma = s[lead];
    let message: CVector = u.column(lead).into_owned();
    // row `lead` of V^H is v^H, so sigma * conj(v) is sigma times that row
    let gains = CVector::from_fn(b.ncols(), |l, _| vt[(lead, l)] * sigma);
    let second = s
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != lead)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    Ok(RankOneFactor {
        message,
        gains,
        fit_ratio: second / sigma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Rotate so the coordinate sum is real and positive.
    Positivity,
    /// Rotate onto the true message; for metrics only.
    Oracle(#[serde(with = "codec::serde_vector")] CVector),
}

/// Remove the common phase between `x` and `g`. Returns `(x e^{j phi},
/// g e^{-j phi}, phi)`, so `x g^T` is unchanged.
pub fn align_ambiguity(x: &CVector, g: &CVector, convention: &Alignment) -> (CVector, CVector, f64) {
    let anchor: C64 = match convention {
        Alignment::Positivity => x.iter().sum(),
        Alignment::Oracle(truth) => truth.dotc(x),
    };
    let phi = if anchor.norm() > 0.0 { -anchor.arg() } else { 0.0 };
    let rot = C64::from_polar(1.0, phi);
    (x * rot, g * rot.conj(), phi)
}

/// `||x - x_true||^2 / M`, no alignment applied here.
pub fn message_mse(x: &CVector, truth: &CVector) -> Result<f64> {
    if x.len() != truth.len() || x.is_empty() {
        return shape(format!("message lengths {} and {} differ", x.len(), truth.len()));
    }
    Ok((x - truth).norm_squared() / x.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub estimated: usize,
    pub truth: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayMatch {
    pub pairs: Vec<MatchedPair>,
    /// True delays left without an estimate.
    pub misses: Vec<usize>,
    /// Estimates left without a true delay.
    pub false_alarms: Vec<usize>,
    pub total_error: f64,
}

impl DelayMatch {
    pub fn max_error(&self) -> f64 {
        self.pairs.iter().map(|p| p.error).fold(0.0, f64::max)
    }
}

/// Minimum-cost assignment for a `rows x cols` cost matrix with
/// `rows <= cols`; returns the column given to each row.
fn hungarian(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    // 1-based potentials, column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=cols {
        if owner[j] != 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// Optimal one-to-one matching of estimated to true delays under wrap-around
/// distance. Surplus entries on either side are reported, not matched.
pub fn match_delays(estimated: &[f64], truth: &[f64]) -> DelayMatch {
    let mut pairs = Vec::new();
    if !estimated.is_empty() && !truth.is_empty() {
        let est_rows = estimated.len() <= truth.len();
        let (rows, cols) = if est_rows { (estimated, truth) } else { (truth, estimated) };
        let cost: Vec<Vec<f64>> = rows
            .iter()
            .map(|&a| cols.iter().map(|&b| wrap_distance(a, b)).collect())
            .collect();
        for (r, c) in hungarian(&cost, cols.len()).into_iter().enumerate() {
            let (e, t) = if est_rows { (r, c) } else { (c, r) };
            pairs.push(MatchedPair {
                estimated: e,
                truth: t,
                error: cost[r][c],
            });
        }
    }
    pairs.sort_by_key(|p| p.truth);
    let misses = (0..truth.len()).filter(|t| pairs.iter().all(|p| p.truth != *t)).collect();
    let false_alarms = (0..estimated.len())
        .filter(|e| pairs.iter().all(|p| p.estimated != *e))
        .collect();
    let total_error = pairs.iter().map(|p| p.error).sum();
    DelayMatch {
        pairs,
        misses,
        false_alarms,
        total_error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecovery {
    pub delays: Vec<f64>,
    /// Unit-norm message, positivity-aligned.
    #[serde(with = "codec::serde_vector")]
    pub message: CVector,
    #[serde(with = "codec::serde_vector")]
    pub gains: CVector,
    pub fit_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub delay_match: DelayMatch,
    /// Largest matched error; absent when nothing matched.
    pub max_delay_error: Option<f64>,
    /// After oracle alignment. A user without an estimate scores `2 / M_k`,
    /// the aligned error of a unit vector orthogonal to the truth.
    pub message_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// `None` for a user with no detected delay (or no energy on them).
    pub users: Vec<Option<UserRecovery>>,
    /// `||y - y_hat|| / ||y||`.
    pub residual: f64,
    pub rank_deficient: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<Vec<UserMetrics>>,
}

impl RecoveryResult {
    pub fn recovered_all(&self) -> bool {
        self.users.iter().all(Option::is_some)
    }

    pub fn mse_mean(&self) -> Option<f64> {
        let m = self.metrics.as_ref()?;
        if m.is_empty() {
            return None;
        }
        Some(m.iter().map(|u| u.message_mse).sum::<f64>() / m.len() as f64)
    }

    /// Largest matched delay error over all users.
    pub fn max_delay_error(&self) -> Option<f64> {
        self.metrics
            .as_ref()?
            .iter()
            .filter_map(|u| u.max_delay_error)
            .reduce(f64::max)
    }

    /// Mean matched delay error over all matched pairs.
    pub fn mean_delay_error(&self) -> Option<f64> {
        let errs: Vec<f64> = self
            .metrics
            .as_ref()?
            .iter()
            .flat_map(|u| u.delay_match.pairs.iter().map(|p| p.error))
            .collect();
        if errs.is_empty() {
            None
        } else {
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        }
    }

    pub fn misses(&self) -> usize {
        self.metrics.as_ref().map_or(0, |m| m.iter().map(|u| u.delay_match.misses.len()).sum())
    }

    pub fn false_alarms(&self) -> usize {
        self.metrics
            .as_ref()
            .map_or(0, |m| m.iter().map(|u| u.delay_match.false_alarms.len()).sum())
    }

    /// Attach delay and message metrics against the true scenario.
    pub fn evaluate(&mut self, truth: &Scenario) -> Result<()> {
        if truth.user_count() != self.users.len() {
            return shape("scenario and recovery disagree on the user count");
        }
        let mut out = Vec::with_capacity(self.users.len());
        for (u, (ch, msg)) in self.users.iter().zip(truth.channels.iter().zip(&truth.messages)) {
            let true_delays = ch.delays();
            let metrics = match u {
                Some(u) => {
                    let delay_match = match_delays(&u.delays, &true_delays);
                    let oracle = Alignment::Oracle(msg.coords.clone());
                    let (aligned, _, _) = align_ambiguity(&u.message, &u.gains, &oracle);
                    UserMetrics {
                        max_delay_error: (!delay_match.pairs.is_empty()).then(|| delay_match.max_error()),
                        delay_match,
                        message_mse: message_mse(&aligned, &msg.coords)?,
                    }
                }
                None => UserMetrics {
                    delay_match: match_delays(&[], &true_delays),
                    max_delay_error: None,
                    message_mse: 2.0 / msg.dim() as f64,
                },
            };
            out.push(metrics);
        }
        self.metrics = Some(out);
        Ok(())
    }
}

/// Least squares on the detected delays, then per-user rank-one factoring
/// and positivity alignment. Users without delays are left out of the fit.
pub fn recover(y: &CVector, model: &MeasurementModel, delays: &DelayEstimates) -> Result<RecoveryResult> {
    let fit = least_squares_paths(y, model, delays)?;
    let mut users = Vec::with_capacity(fit.blocks.len());
    for (k, b) in fit.blocks.iter().enumerate() {
        let user = match factor_rank_one(b, k) {
            Ok(f) => {
                let (message, gains, _) = align_ambiguity(&f.message, &f.gains, &Alignment::Positivity);
                Some(UserRecovery {
                    delays: delays.delays(k),
                    message,
                    gains,
                    fit_ratio: f.fit_ratio,
                })
            }
            Err(Error::NoEnergy(_)) => {
                log::warn!("user {k}: nothing to factor, no message estimate");
                None
            }
            Err(e) => return Err(e),
        };
        users.push(user);
    }
    Ok(RecoveryResult {
        users,
        residual: fit.residual,
        rank_deficient: fit.rank_deficient,
        metrics: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserCertificate {
    /// `max_l ||q_k(tau_l) - sgn(g_l) x_k||`.
    pub on_support_deviation: f64,
    /// Max of `||q_k||` on a `32N` grid away from the support.
    pub off_support_max: f64,
    pub separation_ok: bool,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub users: Vec<UserCertificate>,
    pub certified: bool,
    pub cert_tol: f64,
    /// `Re <lambda, y>`.
    pub dual_objective: f64,
    /// `sum_k sum_l |g_l^k|`.
    pub gain_l1: f64,
    /// `|dual_objective - gain_l1| / gain_l1`.
    pub duality_gap: f64,
}

pub const DEFAULT_CERT_TOL: f64 = 1e-2;
const CERT_GRID_FACTOR: usize = 32;

/// Check the interpolation and strict-bound conditions of the dual
/// certificate against the true scenario.
pub fn certify(scenario: &Scenario, y: &CVector, lambda: &CVector, cert_tol: f64) -> Result<CertificateReport> {
    let model = MeasurementModel::from_scenario(scenario)?;
    let polys = DualPolynomialSet::from_lambda(&model, lambda)?;
    let n = scenario.n_samples;
    let grid = CERT_GRID_FACTOR * n;
    let exclusion = 0.5 / n as f64;
    let mut users = Vec::with_capacity(scenario.user_count());
    for (k, (ch, msg)) in scenario.channels.iter().zip(&scenario.messages).enumerate() {
        let mut on = 0.0f64;
        for p in &ch.paths {
            let sgn = if p.gain.norm() > 0.0 { p.gain / p.gain.norm() } else { C64::new(0.0, 0.0) };
            let q = polys.eval(k, p.tau)?;
            on = on.max((q - &msg.coords * sgn).norm());
        }
        let support = ch.delays();
        let off = (0..grid)
            .map(|i| i as f64 / grid as f64)
            .filter(|&t| support.iter().all(|&s| wrap_distance(s, t) > exclusion))
            .map(|t| polys.magnitude(k, t))
            .fold(0.0, f64::max);
        let separation_ok = min_pairwise_distance(&support).map_or(true, |d| d >= 1.0 / n as f64);
        users.push(UserCertificate {
            on_support_deviation: on,
            off_support_max: off,
            separation_ok,
            certified: on <= cert_tol && off < 1.0 && separation_ok,
        });
    }
    let dual_objective = y.dotc(lambda).re;
    let gain_l1 = scenario.gain_l1();
    let duality_gap = if gain_l1 > 0.0 {
        (dual_objective - gain_l1).abs() / gain_l1
    } else {
        dual_objective.abs()
    };
    Ok(CertificateReport {
        certified: users.iter().all(|u| u.certified),
        users,
        cert_tol,
        dual_objective,
        gain_l1,
        duality_gap,
    })
}
