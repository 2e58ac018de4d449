//! The lifted measurement map `C`, the composed map `B = D C` and its adjoint.
//!
//! Inner products are conjugate-linear in the second argument,
//! `<A, B> = Tr(B^H A)`, so `C` reads each column of a block through the
//! conjugated codebook row: `C(X)_n = sum_k (c_n^k)^H X_k[:, n]`. With that
//! choice the adjoint has no conjugation on the codebook:
//! `(B* lambda)_k[:, n] = (D^H lambda)_n c_n^k`.

use crate::error::{shape, Result};
use crate::model::{CMatrix, CVector, Codebook, MatrixTuple, Scenario, SensingMatrix, C64};

#[derive(Debug, Clone)]
pub struct MeasurementModel {
    n_samples: usize,
    codebooks: Vec<CMatrix>,
    sensing: SensingMatrix,
}

impl MeasurementModel {
    pub fn new(codebooks: Vec<CMatrix>, sensing: SensingMatrix) -> Result<Self> {
        let n_samples = sensing.cols();
        if let Some((k, cb)) = codebooks.iter().enumerate().find(|(_, c)| c.nrows() != n_samples) {
            return shape(format!(
                "codebook {k} has {} rows but the sensing matrix has {n_samples} columns",
                cb.nrows()
            ));
        }
        Ok(Self {
            n_samples,
            codebooks,
            sensing,
        })
    }

    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        Self::new(
            s.codebooks.iter().map(|c: &Codebook| c.entries.clone()).collect(),
            s.sensing.clone(),
        )
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn measurement_count(&self) -> usize {
        self.sensing.rows()
    }

    pub fn user_count(&self) -> usize {
        self.codebooks.len()
    }

    pub fn message_dims(&self) -> Vec<usize> {
        self.codebooks.iter().map(|c| c.ncols()).collect()
    }

    pub fn codebooks(&self) -> &[CMatrix] {
        &self.codebooks
    }

    pub fn sensing(&self) -> &SensingMatrix {
        &self.sensing
    }

    fn check_tuple(&self, x: &MatrixTuple) -> Result<()> {
        if x.blocks.len() != self.codebooks.len() {
            return shape(format!(
                "tuple has {} blocks, model has {} users",
                x.blocks.len(),
                self.codebooks.len()
            ));
        }
        for (k, (b, c)) in x.blocks.iter().zip(&self.codebooks).enumerate() {
            if b.shape() != (c.ncols(), self.n_samples) {
                return shape(format!(
                    "block {k} is {:?}, expected ({}, {})",
                    b.shape(),
                    c.ncols(),
                    self.n_samples
                ));
            }
        }
        Ok(())
    }

    /// `C(X)`, a vector of length `N`.
    pub fn apply_c(&self, x: &MatrixTuple) -> Result<CVector> {
        self.check_tuple(x)?;
        let mut v = CVector::zeros(self.n_samples);
        for (block, cb) in x.blocks.iter().zip(&self.codebooks) {
            for n in 0..self.n_samples {
                let mut acc = C64::new(0.0, 0.0);
                for m in 0..cb.ncols() {
                    acc += cb[(n, m)].conj() * block[(m, n)];
                }
                v[n] += acc;
            }
        }
        Ok(v)
    }

    /// `B(X) = D C(X)`, a vector of length `M`.
    pub fn forward(&self, x: &MatrixTuple) -> Result<CVector> {
        Ok(self.sensing.apply(&self.apply_c(x)?))
    }

    /// `B*(lambda)`; block `k` is `C_k^T diag(D^H lambda)`.
    pub fn adjoint(&self, lambda: &CVector) -> Result<MatrixTuple> {
        if lambda.len() != self.measurement_count() {
            return shape(format!(
                "lambda has length {}, expected {}",
                lambda.len(),
                self.measurement_count()
            ));
        }
        let lt = self.sensing.apply_adjoint(lambda);
        Ok(MatrixTuple::new(
            self.codebooks.iter().map(|cb| adjoint_block(cb, &lt)).collect(),
        ))
    }

    /// Diagonal of `C C*`: `w_n = sum_k ||c_n^k||^2`.
    pub fn row_energy(&self) -> Vec<f64> {
        (0..self.n_samples)
            .map(|n| {
                self.codebooks
                    .iter()
                    .map(|cb| cb.row(n).norm_squared())
                    .sum()
            })
            .collect()
    }
}

/// `C^T diag(lt)` for one codebook, given `lt = D^H lambda`.
pub(crate) fn adjoint_block(cb: &CMatrix, lt: &CVector) -> CMatrix {
    CMatrix::from_fn(cb.ncols(), cb.nrows(), |m, n| lt[n] * cb[(n, m)])
}

/// `X_k = sum_l g_l x_k a(tau_l)^T`, the lifted ground truth.
pub fn lift_ground_truth(s: &Scenario) -> Result<MatrixTuple> {
    let n = s.n_samples;
    let mut blocks = Vec::with_capacity(s.user_count());
    for (ch, msg) in s.channels.iter().zip(&s.messages) {
        let mut row = CVector::zeros(n);
        for p in &ch.paths {
            row += crate::model::steering_vector(p.tau, n)? * p.gain;
        }
        blocks.push(&msg.coords * row.transpose());
    }
    Ok(MatrixTuple::new(blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelSpec, Message, Path};
    use crate::scenario::rng::SeededRng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn single_user(cb: CMatrix, sensing: SensingMatrix) -> MeasurementModel {
        MeasurementModel::new(vec![cb], sensing).unwrap()
    }

    #[test]
    fn lift_examples() {
        let s = Scenario {
            n_samples: 3,
            codebooks: vec![Codebook::new(0, CMatrix::from_element(3, 1, c(1.0, 0.0)))],
            channels: vec![ChannelSpec::new(vec![Path { tau: 0.0, gain: c(1.0, 0.0) }])],
            messages: vec![Message::new(CVector::from_vec(vec![c(1.0, 0.0)]), false)],
            sensing: SensingMatrix::identity(3),
            seed: 0,
        };
        let x = lift_ground_truth(&s).unwrap();
        assert_eq!(x.blocks[0], CMatrix::from_element(1, 3, c(1.0, 0.0)));

        let s = Scenario {
            n_samples: 2,
            codebooks: vec![Codebook::new(0, CMatrix::from_element(2, 2, c(1.0, 0.0)))],
            channels: vec![ChannelSpec::new(vec![Path { tau: 0.5, gain: c(2.0, 0.0) }])],
            messages: vec![Message::new(CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]), false)],
            sensing: SensingMatrix::identity(2),
            seed: 0,
        };
        let x = lift_ground_truth(&s).unwrap();
        let want = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!((&x.blocks[0] - want).norm() < 1e-12);
    }

    #[test]
    fn lift_shared_message_is_rank_one() {
        let mut rng = SeededRng::new(3);
        let n = 12;
        let coords = CVector::from_fn(3, |_, _| rng.complex_normal()).normalize();
        let s = Scenario {
            n_samples: n,
            codebooks: vec![Codebook::new(0, CMatrix::from_fn(n, 3, |_, _| rng.complex_normal()))],
            channels: vec![ChannelSpec::new(vec![
                Path { tau: 0.1, gain: c(1.0, 0.5) },
                Path { tau: 0.6, gain: c(-0.3, 0.2) },
            ])],
            messages: vec![Message::new(coords, false)],
            sensing: SensingMatrix::identity(n),
            seed: 0,
        };
        let x = lift_ground_truth(&s).unwrap();
        let sv = x.blocks[0].clone().singular_values();
        assert!(sv[0] > 1.0);
        assert!(sv[1] < 1e-12 * sv[0], "{sv}");
    }

    #[test]
    fn apply_c_examples() {
        let model = single_user(CMatrix::from_element(2, 1, c(1.0, 0.0)), SensingMatrix::identity(2));
        let zero = MatrixTuple::zeros(&[1], 2);
        assert_eq!(model.apply_c(&zero).unwrap(), CVector::zeros(2));

        let x = MatrixTuple::new(vec![CMatrix::from_element(1, 2, c(1.0, 0.0))]);
        assert_eq!(model.apply_c(&x).unwrap(), CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]));

        let model = single_user(
            CMatrix::from_column_slice(2, 1, &[c(0.0, 1.0), c(1.0, 0.0)]),
            SensingMatrix::identity(2),
        );
        assert_eq!(model.apply_c(&x).unwrap(), CVector::from_vec(vec![c(0.0, -1.0), c(1.0, 0.0)]));

        let bad = MatrixTuple::zeros(&[2], 2);
        assert!(model.apply_c(&bad).is_err());
    }

    #[test]
    fn forward_examples() {
        let cb = CMatrix::from_element(2, 1, c(1.0, 0.0));
        let x = MatrixTuple::new(vec![CMatrix::from_element(1, 2, c(1.0, 0.0))]);
        let ident = single_user(cb.clone(), SensingMatrix::identity(2));
        assert_eq!(ident.forward(&x).unwrap(), ident.apply_c(&x).unwrap());

        let select = SensingMatrix::from_entries(CMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]));
        let model = single_user(cb, select);
        assert_eq!(model.forward(&x).unwrap(), CVector::from_vec(vec![c(1.0, 0.0)]));
        assert_eq!(model.forward(&MatrixTuple::zeros(&[1], 2)).unwrap(), CVector::zeros(1));
    }

    #[test]
    fn adjoint_examples() {
        let mut rng = SeededRng::new(11);
        let cb = CMatrix::from_fn(4, 2, |_, _| rng.complex_normal());
        let model = single_user(cb.clone(), SensingMatrix::identity(4));
        let zero = model.adjoint(&CVector::zeros(4)).unwrap();
        assert_eq!(zero, MatrixTuple::zeros(&[2], 4));

        let mut e1 = CVector::zeros(4);
        e1[0] = c(1.0, 0.0);
        let g = model.adjoint(&e1).unwrap();
        for m in 0..2 {
            assert_eq!(g.blocks[0][(m, 0)], cb[(0, m)]);
            for n in 1..4 {
                assert_eq!(g.blocks[0][(m, n)], c(0.0, 0.0));
            }
        }
        assert!(model.adjoint(&CVector::zeros(3)).is_err());
    }

    fn random_model(rng: &mut SeededRng) -> MeasurementModel {
        let n = 1 + (rng.next_u64() % 12) as usize;
        let k = 1 + (rng.next_u64() % 3) as usize;
        let m = 1 + (rng.next_u64() % n as u64) as usize;
        let codebooks = (0..k)
            .map(|_| {
                let mk = 1 + (rng.next_u64() % n as u64) as usize;
                CMatrix::from_fn(n, mk, |_, _| rng.complex_normal())
            })
            .collect();
        let sensing = if rng.uniform() < 0.3 {
            SensingMatrix::identity(n)
        } else {
            SensingMatrix::from_entries(CMatrix::from_fn(m, n, |_, _| rng.complex_normal()))
        };
        MeasurementModel::new(codebooks, sensing).unwrap()
    }

    fn random_tuple(model: &MeasurementModel, rng: &mut SeededRng) -> MatrixTuple {
        MatrixTuple::new(
            model
                .message_dims()
                .iter()
                .map(|&m| CMatrix::from_fn(m, model.n_samples(), |_, _| rng.complex_normal()))
                .collect(),
        )
    }

    #[test]
    fn adjoint_identity_random() {
        let mut rng = SeededRng::new(2024);
        for _ in 0..150 {
            let model = random_model(&mut rng);
            let x = random_tuple(&model, &mut rng);
            let lambda = CVector::from_fn(model.measurement_count(), |_, _| rng.complex_normal());
            // <forward(X), lambda> = lambda^H forward(X)
            let lhs = lambda.dotc(&model.forward(&x).unwrap());
            let rhs = x.inner(&model.adjoint(&lambda).unwrap());
            assert!((lhs - rhs).norm() <= 1e-10 * x.norm() * lambda.norm());
        }
    }

    #[test]
    fn forward_is_linear() {
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let model = random_model(&mut rng);
            let x = random_tuple(&model, &mut rng);
            let y = random_tuple(&model, &mut rng);
            let (a, b) = (rng.complex_normal(), rng.complex_normal());
            let lhs = model.forward(&x.scale(a).add(&y.scale(b))).unwrap();
            let rhs = model.forward(&x).unwrap() * a + model.forward(&y).unwrap() * b;
            assert!((&lhs - &rhs).norm() <= 1e-12 * lhs.norm().max(rhs.norm()).max(1.0));
        }
    }
}
