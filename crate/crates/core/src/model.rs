//! Domain types shared by every stage of the pipeline.
//!
//! Delays are stored as fractions of the observation window, `tau in [0, 1)`.
//! Complex scalars are `Complex<f64>` throughout.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance on `||x||_2 = 1` for messages.
pub const MESSAGE_NORM_TOL: f64 = 1e-12;

/// Fourier steering atom `a(tau)`, entry `i` (0-based) is `exp(-j 2 pi i tau)`.
pub fn steering_vector(tau: f64, n: usize) -> Result<CVector> {
    check_delay(tau)?;
    if n == 0 {
        return domain("steering vector needs at least one sample");
    }
    Ok(CVector::from_fn(n, |i, _| C64::from_polar(1.0, -2.0 * PI * i as f64 * tau)))
}

/// Entrywise conjugate of [`steering_vector`]: entry `i` is `exp(+j 2 pi i tau)`.
pub fn conj_steering_vector(tau: f64, n: usize) -> Result<CVector> {
    Ok(steering_vector(tau, n)?.map(|z| z.conj()))
}

pub(crate) fn check_delay(tau: f64) -> Result<()> {
    if !(0.0..1.0).contains(&tau) {
        return domain(format!("delay {tau} outside [0, 1)"));
    }
    Ok(())
}

/// Map any real onto `[0, 1)`.
pub fn wrap_unit(tau: f64) -> f64 {
    let w = tau.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Distance on the unit circle of normalized delays.
pub fn wrap_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Hermitian Toeplitz matrix whose first row is `x`; entries below the
/// diagonal are conjugates of the mirrored entries above it.
pub fn toeplitz_lift(x: &[C64]) -> Result<CMatrix> {
    let n = x.len();
    if n == 0 {
        return domain("toeplitz lift of an empty vector");
    }
    let mut t = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            t[(i, j)] = if j >= i { x[j - i] } else { x[i - j].conj() };
        }
    }
    // the diagonal must be real for exact Hermitian symmetry
    for i in 0..n {
        t[(i, i)] = C64::new(x[0].re, 0.0);
    }
    Ok(t)
}

/// Sum of the entries of `q` on diagonal offset `offset`: entries
/// `q[i + offset, i]` for `offset >= 0` and `q[i, i - offset]` otherwise.
pub fn diag_sum(q: &CMatrix, offset: isize) -> Result<C64> {
    let n = q.nrows();
    if q.ncols() != n {
        return domain("diag_sum needs a square matrix");
    }
    if offset.unsigned_abs() >= n {
        return domain(format!("diagonal offset {offset} out of range for {n}x{n}"));
    }
    let k = offset.unsigned_abs();
    let sum = if offset >= 0 {
        (0..n - k).map(|i| q[(i + k, i)]).sum()
    } else {
        (0..n - k).map(|i| q[(i, i + k)]).sum()
    };
    Ok(sum)
}

/// Known linear encoder of one user: `N x M_k`, rows indexed by frequency
/// sample, columns by message coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub user_index: usize,
    pub entries: CMatrix,
}

impl Codebook {
    pub fn new(user_index: usize, entries: CMatrix) -> Self {
        Self {
            user_index,
            entries,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.entries.nrows()
    }

    pub fn message_dim(&self) -> usize {
        self.entries.ncols()
    }
}

/// Receiver-side linear system `D` (M x N).
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    entries: CMatrix,
    identity: bool,
}

impl SensingMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            entries: CMatrix::identity(n, n),
            identity: true,
        }
    }

    /// Arbitrary dense sensing matrix. The identity flag is derived from the
    /// entries so that the two always agree.
    pub fn from_entries(entries: CMatrix) -> Self {
        let identity = entries.is_square() && entries == CMatrix::identity(entries.nrows(), entries.ncols());
        Self { entries, identity }
    }

    /// Uniform sub-sampling: rows of `I_N` at indices `floor(i * N / M)`,
    /// `i = 0..M`.
    pub fn uniform_subsample(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return domain(format!("cannot subsample {m} of {n} samples"));
        }
        let mut d = CMatrix::zeros(m, n);
        for i in 0..m {
            d[(i, i * n / m)] = C64::new(1.0, 0.0);
        }
        Ok(Self::from_entries(d))
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        if self.identity {
            v.clone()
        } else {
            &self.entries * v
        }
    }

    /// `D^H w`.
    pub fn apply_adjoint(&self, w: &CVector) -> CVector {
        if self.identity {
            w.clone()
        } else {
            self.entries.ad_mul(w)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub tau: f64,
    pub gain: C64,
}

/// Sparse multipath channel `h(t) = sum_l g_l delta(t - tau_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub paths: Vec<Path>,
}

impl ChannelSpec {
    pub fn new(paths: Vec<Path>) -> Self {
        Self { paths }
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    pub fn delays(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.tau).collect()
    }

    /// `sum_l |g_l|`, the atomic norm of the lifted block when the message has
    /// unit norm.
    pub fn gain_l1(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub coords: CVector,
    /// Entries are known to be real and nonnegative.
    pub positive: bool,
}

impl Message {
    pub fn new(coords: CVector, positive: bool) -> Self {
        Self { coords, positive }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Ground truth of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_samples: usize,
    pub codebooks: Vec<Codebook>,
    pub channels: Vec<ChannelSpec>,
    pub messages: Vec<Message>,
    pub sensing: SensingMatrix,
    /// Generation seed, 0 for hand-built scenarios.
    pub seed: u64,
}

impl Scenario {
    pub fn user_count(&self) -> usize {
        self.codebooks.len()
    }

    pub fn message_dims(&self) -> Vec<usize> {
        self.codebooks.iter().map(Codebook::message_dim).collect()
    }

    pub fn measurement_count(&self) -> usize {
        self.sensing.rows()
    }

    /// `sum_k sum_l |g_l^k|`.
    pub fn gain_l1(&self) -> f64 {
        self.channels.iter().map(ChannelSpec::gain_l1).sum()
    }

    /// Smallest wrap-around distance between two delays of the same user.
    /// `None` when no user has two paths.
    pub fn min_separation(&self) -> Option<f64> {
        self.channels
            .iter()
            .filter_map(|c| min_pairwise_distance(&c.delays()))
            .reduce(f64::min)
    }

    /// Smallest wrap-around distance between any two delays, users pooled.
    pub fn min_separation_all_users(&self) -> Option<f64> {
        let all: Vec<f64> = self.channels.iter().flat_map(ChannelSpec::delays).collect();
        min_pairwise_distance(&all)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_scenario(self)
    }
}

pub(crate) fn min_pairwise_distance(delays: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, &a) in delays.iter().enumerate() {
        for &b in &delays[i + 1..] {
            let d = wrap_distance(a, b);
            best = Some(best.map_or(d, |m: f64| m.min(d)));
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    /// Per-user minimum separation, if any user has two or more paths.
    pub min_separation: Option<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let n = s.n_samples;
    let k = s.codebooks.len();

    if n == 0 {
        v.push("n_samples must be at least 1".into());
    }
    if k == 0 {
        v.push("scenario has no users".into());
    }
    if s.channels.len() != k || s.messages.len() != k {
        v.push(format!(
            "user list lengths disagree: {k} codebooks, {} channels, {} messages",
            s.channels.len(),
            s.messages.len()
        ));
    }

    for (i, cb) in s.codebooks.iter().enumerate() {
        if cb.n_samples() != n {
            v.push(format!("user {i}: codebook has {} rows, expected {n}", cb.n_samples()));
        }
        if cb.message_dim() == 0 || cb.message_dim() > n {
            v.push(format!(
                "user {i}: message dimension {} outside [1, {n}]",
                cb.message_dim()
            ));
        }
        if cb.entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            v.push(format!("user {i}: codebook has non-finite entries"));
        }
    }

    for (i, ch) in s.channels.iter().enumerate() {
        if ch.paths.is_empty() {
            v.push(format!("user {i}: channel has no paths"));
        }
        for (l, p) in ch.paths.iter().enumerate() {
            if !(0.0..1.0).contains(&p.tau) {
                v.push(format!("user {i} path {l}: delay {} outside [0, 1)", p.tau));
            }
            if !p.gain.re.is_finite() || !p.gain.im.is_finite() {
                v.push(format!("user {i} path {l}: non-finite amplitude"));
            } else if p.gain.norm() == 0.0 {
                v.push(format!("user {i} path {l}: zero amplitude"));
            }
        }
        let delays = ch.delays();
        if let Some(d) = min_pairwise_distance(&delays) {
            if d == 0.0 {
                v.push(format!("user {i}: duplicate delays"));
            }
        }
    }

    for (i, msg) in s.messages.iter().enumerate() {
        if let Some(cb) = s.codebooks.get(i) {
            if msg.dim() != cb.message_dim() {
                v.push(format!(
                    "user {i}: message length {} does not match codebook columns {}",
                    msg.dim(),
                    cb.message_dim()
                ));
            }
        }
        if msg.coords.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            v.push(format!("user {i}: message has non-finite entries"));
        } else if (msg.coords.norm() - 1.0).abs() > MESSAGE_NORM_TOL {
            v.push(format!(
                "user {i}: message not unit norm (norm {})",
                msg.coords.norm()
            ));
        }
        if msg.positive && msg.coords.iter().any(|z| z.re < 0.0 || z.im != 0.0) {
            v.push(format!("user {i}: message violates positivity convention"));
        }
    }

    if s.sensing.cols() != n {
        v.push(format!(
            "sensing matrix has {} columns, expected {n}",
            s.sensing.cols()
        ));
    }
    if s.sensing.rows() == 0 || s.sensing.rows() > s.sensing.cols() {
        v.push(format!(
            "sensing matrix has {} rows, expected between 1 and {}",
            s.sensing.rows(),
            s.sensing.cols()
        ));
    }
    if s.sensing.entries().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        v.push("sensing matrix has non-finite entries".into());
    }

    report.min_separation = s.min_separation();
    if let Some(delta) = report.min_separation {
        if n > 0 && delta < 1.0 / n as f64 {
            report.warnings.push(format!(
                "minimum separation {delta} is below 1/N = {}",
                1.0 / n as f64
            ));
        }
    }
    report
}

/// The lifted unknown: one `M_k x N` block per user.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTuple {
    pub blocks: Vec<CMatrix>,
}

impl MatrixTuple {
    pub fn new(blocks: Vec<CMatrix>) -> Self {
        Self { blocks }
    }

    pub fn zeros(message_dims: &[usize], n: usize) -> Self {
        Self {
            blocks: message_dims.iter().map(|&m| CMatrix::zeros(m, n)).collect(),
        }
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| b.shape()).collect()
    }

    /// `<self, other> = sum_k Tr(other_k^H self_k)`.
    pub fn inner(&self, other: &MatrixTuple) -> C64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| b.iter().zip(a.iter()).map(|(bv, av)| bv.conj() * av).sum::<C64>())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn scale(&self, alpha: C64) -> MatrixTuple {
        MatrixTuple::new(self.blocks.iter().map(|b| b * alpha).collect())
    }

    pub fn add(&self, other: &MatrixTuple) -> MatrixTuple {
        MatrixTuple::new(self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn steering_examples() {
        let a = steering_vector(0.0, 4).unwrap();
        assert!(a.iter().all(|z| *z == c(1.0, 0.0)));

        let a = steering_vector(0.5, 2).unwrap();
        assert!(close(a[0], c(1.0, 0.0)) && close(a[1], c(-1.0, 0.0)));

        let a = steering_vector(0.25, 4).unwrap();
        let want = [c(1.0, 0.0), c(0.0, -1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        for (z, w) in a.iter().zip(want) {
            assert!(close(*z, w), "{z} vs {w}");
        }
        assert_abs_diff_eq!(a.norm(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_domain_errors() {
        assert!(steering_vector(1.0, 4).is_err());
        assert!(steering_vector(-0.1, 4).is_err());
        assert!(steering_vector(0.2, 0).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let t = toeplitz_lift(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(t, CMatrix::identity(3, 3));

        let t = toeplitz_lift(&[c(1.0, 0.0), c(2.0, 1.0), c(3.0, 0.0)]).unwrap();
        let want = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0), c(2.0, 1.0), c(3.0, 0.0),
                c(2.0, -1.0), c(1.0, 0.0), c(2.0, 1.0),
                c(3.0, 0.0), c(2.0, -1.0), c(1.0, 0.0),
            ],
        );
        assert_eq!(t, want);
        assert_eq!(t, t.adjoint());

        // <T(e_1), I_N> = trace = N
        let mut e1 = vec![c(0.0, 0.0); 5];
        e1[0] = c(1.0, 0.0);
        let t = toeplitz_lift(&e1).unwrap();
        assert_eq!(t.trace(), c(5.0, 0.0));

        assert!(toeplitz_lift(&[]).is_err());
    }

    #[test]
    fn diag_sum_examples() {
        let i3 = CMatrix::identity(3, 3);
        assert_eq!(diag_sum(&i3, 0).unwrap(), c(3.0, 0.0));
        assert_eq!(diag_sum(&i3, 1).unwrap(), c(0.0, 0.0));
        let t = toeplitz_lift(&[c(1.0, 0.0), c(2.0, 1.0), c(3.0, 0.0)]).unwrap();
        assert_eq!(diag_sum(&t, 1).unwrap(), c(4.0, -2.0));
        assert!(diag_sum(&i3, 3).is_err());
        assert!(diag_sum(&i3, -3).is_err());
    }

    #[test]
    fn subsample_rows() {
        let d = SensingMatrix::uniform_subsample(8, 3).unwrap();
        let picked: Vec<usize> = (0..3)
            .map(|i| (0..8).find(|&j| d.entries()[(i, j)] != c(0.0, 0.0)).unwrap())
            .collect();
        assert_eq!(picked, vec![0, 2, 5]);
        assert!(!d.is_identity());
        assert!(SensingMatrix::uniform_subsample(4, 4).unwrap().is_identity());
        assert!(SensingMatrix::uniform_subsample(4, 5).is_err());
    }

    fn one_user(n: usize, delays: &[f64], coords: Vec<C64>) -> Scenario {
        let m = coords.len();
        Scenario {
            n_samples: n,
            codebooks: vec![Codebook::new(0, CMatrix::from_element(n, m, c(1.0, 0.0)))],
            channels: vec![ChannelSpec::new(
                delays.iter().map(|&tau| Path { tau, gain: c(1.0, 0.0) }).collect(),
            )],
            messages: vec![Message::new(CVector::from_vec(coords), false)],
            sensing: SensingMatrix::identity(n),
            seed: 0,
        }
    }

    #[test]
    fn validation_examples() {
        let s = one_user(16, &[0.1, 0.6], vec![c(1.0, 0.0)]);
        let r = validate_scenario(&s);
        assert!(r.is_valid() && r.warnings.is_empty(), "{r:?}");

        let s = one_user(16, &[0.1], vec![c(2.0, 0.0)]);
        let r = validate_scenario(&s);
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].contains("message not unit norm"));

        let n = 64;
        let s = one_user(n, &[0.2, 0.2 + 0.4 / n as f64], vec![c(1.0, 0.0)]);
        let r = validate_scenario(&s);
        assert!(r.is_valid());
        assert_eq!(r.warnings.len(), 1);
        assert_abs_diff_eq!(r.min_separation.unwrap(), 0.00625, epsilon = 1e-15);
    }

    #[test]
    fn validation_rejects_zero_gain_and_positivity() {
        let mut s = one_user(8, &[0.3], vec![c(0.0, 1.0)]);
        s.channels[0].paths[0].gain = c(0.0, 0.0);
        s.messages[0].positive = true;
        let r = validate_scenario(&s);
        assert!(r.violations.iter().any(|v| v.contains("zero amplitude")));
        assert!(r.violations.iter().any(|v| v.contains("positivity")));
    }

    #[test]
    fn wrap_distance_wraps() {
        assert_abs_diff_eq!(wrap_distance(0.05, 0.95), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_distance(0.3, 0.3), 0.0);
        assert_abs_diff_eq!(wrap_distance(0.0, 0.5), 0.5);
    }

    proptest! {
        #[test]
        fn steering_entries_unit_modulus(tau in 0.0f64..1.0, n in 1usize..40) {
            let a = steering_vector(tau, n).unwrap();
            prop_assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }

        #[test]
        fn wrap_distance_is_metric(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            prop_assert_eq!(wrap_distance(a, a), 0.0);
            prop_assert_eq!(wrap_distance(a, b), wrap_distance(b, a));
            prop_assert!(wrap_distance(a, b) <= 0.5);
            prop_assert!(wrap_distance(a, c) <= wrap_distance(a, b) + wrap_distance(b, c) + 1e-15);
        }

        #[test]
        fn toeplitz_structure_and_diag_sums(
            vals in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..10)
        ) {
            let x: Vec<C64> = vals.iter().map(|&(r, i)| C64::new(r, i)).collect();
            let t = toeplitz_lift(&x).unwrap();
            let n = x.len();
            prop_assert_eq!(&t, &t.adjoint());
            for i in 0..n {
                for j in 0..n {
                    if i > 0 && j > 0 {
                        prop_assert_eq!(t[(i, j)], t[(i - 1, j - 1)]);
                    }
                }
            }
            // each diagonal sum divided by its length recovers the generator
            for q in 0..n as isize {
                let len = (n - q as usize) as f64;
                let upper = diag_sum(&t, -q).unwrap() / len;
                let want = if q == 0 { C64::new(x[0].re, 0.0) } else { x[q as usize] };
                prop_assert!((upper - want).norm() < 1e-12);
                let lower = diag_sum(&t, q).unwrap();
                prop_assert!((lower - diag_sum(&t.adjoint(), -q).unwrap().conj()).norm() < 1e-12);
            }
        }
    }
}
