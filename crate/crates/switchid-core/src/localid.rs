//! Fast-timescale recursive identification of one affine/linear local model.
//!
//! Each mode is a parameter matrix `Theta` (m x d) fitted by stochastic
//! gradient descent on the one-step prediction error
//! `eps = Theta * phi - psi`, i.e. the rank-one recursion
//! `Theta <- Theta - alpha * eps * phi^T`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters of one affine/linear subsystem, stored row-major (m x d).
///
/// The vectorized view `vec(Theta)` is column-major, so that
/// `[phi^T (x) I_m] vec(Theta) = Theta * phi` holds exactly; the matrix form
/// is what the recursions operate on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    m: usize,
    d: usize,
    /// Row-major entries, length m*d.
    data: Vec<f64>,
}

impl LocalModel {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            m,
            d,
            data: vec![0.0; m * d],
        }
    }

    /// Build from row-major entries.
    pub fn from_rows(m: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * d || m == 0 || d == 0 {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite model entry"));
        }
        Ok(Self { m, d, data })
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.d + c]
    }

    /// Row-major entries as stored.
    pub fn rows(&self) -> &[f64] {
        &self.data
    }

    /// Column-major vectorization `vec(Theta)` of length m*d.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.m * self.d);
        for c in 0..self.d {
            for r in 0..self.m {
                v.push(self.entry(r, c));
            }
        }
        v
    }

    /// Inverse of [`to_vec`](Self::to_vec).
    pub fn from_vec(m: usize, d: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                got: theta.len(),
            });
        }
        let mut data = vec![0.0; m * d];
        for c in 0..d {
            for r in 0..m {
                data[r * d + c] = theta[c * m + r];
            }
        }
        Self::from_rows(m, d, data)
    }

    /// `Theta * phi`.
    pub fn predict(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: phi.len(),
            });
        }
        Ok((0..self.m)
            .map(|r| {
                self.data[r * self.d..(r + 1) * self.d]
                    .iter()
                    .zip(phi.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect())
    }

    /// One SGD step on the prediction error; returns `||eps||`.
    ///
    /// No projection or clipping is applied: a divergent stepsize surfaces as
    /// a `NonFinite` error.
    pub fn sgd_update(&mut self, phi: &[f64], psi: &[f64], alpha: f64) -> Result<f64> {
        if psi.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: psi.len(),
            });
        }
        if !(alpha > 0.0) || !phi.iter().chain(psi.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("sgd_update: bad stepsize or input"));
        }
        let pred = self.predict(phi)?;
        let mut err_sq = 0.0;
        for r in 0..self.m {
            let eps = pred[r] - psi[r];
            err_sq += eps * eps;
            for c in 0..self.d {
                self.data[r * self.d + c] -= alpha * eps * phi[c];
            }
        }
        if !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("local model parameters diverged"));
        }
        Ok(libm::sqrt(err_sq))
    }

    /// Frobenius norm of the difference to `other`.
    pub fn frobenius_distance(&self, other: &LocalModel) -> f64 {
        libm::sqrt(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        )
    }

    /// Max-abs entry difference to `other`.
    pub fn max_abs_distance(&self, other: &LocalModel) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

/// Stepsize schedules for the stochastic approximation recursions. Values are
/// in (0, 1] and nonincreasing in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepSchedule {
    /// 1 / (1 + c*t)
    Harmonic { c: f64 },
    /// 1 / (1 + c*t*ln(t+1)); the log argument is shifted so the value at
    /// t = 0 is 1 rather than undefined.
    HarmonicLog { c: f64 },
    /// 1 / (1+t)^p
    Power { p: f64 },
    Constant { gamma: f64 },
}

impl StepSchedule {
    pub fn value(&self, t: u64) -> f64 {
        let t = t as f64;
        match *self {
            StepSchedule::Harmonic { c } => 1.0 / (1.0 + c * t),
            StepSchedule::HarmonicLog { c } => 1.0 / (1.0 + c * t * libm::log(t + 1.0)),
            StepSchedule::Power { p } => libm::pow(1.0 + t, -p),
            StepSchedule::Constant { gamma } => gamma,
        }
    }
}

/// Run the recursion over a sample stream; when a reference matrix is given,
/// also return the Frobenius error history (one entry per step).
pub fn converge_single<I>(
    samples: I,
    schedule: StepSchedule,
    initial: LocalModel,
    reference: Option<&LocalModel>,
) -> Result<(LocalModel, Vec<f64>)>
where
    I: IntoIterator<Item = (Vec<f64>, Vec<f64>)>,
{
    let mut model = initial;
    let mut history = Vec::new();
    for (t, (phi, psi)) in samples.into_iter().enumerate() {
        model.sgd_update(&phi, &psi, schedule.value(t as u64))?;
        if let Some(truth) = reference {
            history.push(model.frobenius_distance(truth));
        }
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn predict_examples() {
        let ident = LocalModel::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(ident.predict(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
        let zero = LocalModel::zeros(2, 2);
        assert_eq!(zero.predict(&[3.0, -1.0]).unwrap(), vec![0.0, 0.0]);
        // exp1 mode with theta = [1, 2]: 1*3 + 2*1 = 5
        let th = LocalModel::from_rows(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(th.predict(&[3.0, 1.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn sgd_update_examples() {
        // zero error is a fixed point
        let mut m = LocalModel::from_rows(1, 1, vec![2.0]).unwrap();
        m.sgd_update(&[1.0], &[2.0], 0.1).unwrap();
        assert_eq!(m.rows(), &[2.0]);

        // eps = 2 - 1 = 1, Theta' = 2 - 0.1*1*1 = 1.9
        let mut m = LocalModel::from_rows(1, 1, vec![2.0]).unwrap();
        let err = m.sgd_update(&[1.0], &[1.0], 0.1).unwrap();
        assert!((err - 1.0).abs() < 1e-15);
        assert!((m.rows()[0] - 1.9).abs() < 1e-15);

        // rank-one update, m = 2
        let mut m = LocalModel::zeros(2, 1);
        m.sgd_update(&[1.0], &[1.0, -1.0], 0.5).unwrap();
        assert_eq!(m.rows(), &[0.5, -0.5]);
    }

    #[test]
    fn vectorization_identity() {
        // Theta * phi == [phi^T (x) I_m] vec(Theta) for column-major vec
        let mut rng = SplitMix64::new(3);
        for _ in 0..50 {
            let m = 1 + (rng.next_u64() % 3) as usize;
            let d = 1 + (rng.next_u64() % 4) as usize;
            let data: Vec<f64> = (0..m * d).map(|_| rng.next_gaussian()).collect();
            let model = LocalModel::from_rows(m, d, data).unwrap();
            let phi: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            let theta = model.to_vec();
            // [phi^T (x) I_m] theta: entry r = sum_c phi[c] * theta[c*m + r]
            let via_kron: Vec<f64> = (0..m)
                .map(|r| (0..d).map(|c| phi[c] * theta[c * m + r]).sum())
                .collect();
            let via_mat = model.predict(&phi).unwrap();
            for (a, b) in via_kron.iter().zip(via_mat.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
            // round trip
            assert_eq!(LocalModel::from_vec(m, d, &theta).unwrap(), model);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..100 {
            let m = 1 + (rng.next_u64() % 2) as usize;
            let d = 1 + (rng.next_u64() % 3) as usize;
            let data: Vec<f64> = (0..m * d).map(|_| rng.next_gaussian()).collect();
            let model = LocalModel::from_rows(m, d, data.clone()).unwrap();
            let phi: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            let psi: Vec<f64> = (0..m).map(|_| rng.next_gaussian()).collect();

            let loss = |entries: &[f64]| -> f64 {
                let mdl = LocalModel::from_rows(m, d, entries.to_vec()).unwrap();
                let pred = mdl.predict(&phi).unwrap();
                0.5 * pred
                    .iter()
                    .zip(psi.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            };

            // analytic gradient = eps * phi^T, recovered from one unit step
            let mut stepped = model.clone();
            stepped.sgd_update(&phi, &psi, 1.0).unwrap();
            let h = 1e-6;
            for idx in 0..m * d {
                let grad_analytic = model.rows()[idx] - stepped.rows()[idx];
                let mut plus = data.clone();
                plus[idx] += h;
                let mut minus = data.clone();
                minus[idx] -= h;
                let grad_fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let scale = grad_fd.abs().max(1e-3);
                assert!(
                    (grad_analytic - grad_fd).abs() / scale < 1e-5,
                    "grad mismatch: {grad_analytic} vs {grad_fd}"
                );
            }
        }
    }

    #[test]
    fn small_step_decreases_error() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..50 {
            let d = 1 + (rng.next_u64() % 3) as usize;
            let data: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            let mut model = LocalModel::from_rows(1, d, data).unwrap();
            let phi: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            let psi = [rng.next_gaussian()];
            let before = model.sgd_update(&phi, &psi, 1e-4).unwrap();
            let pred = model.predict(&phi).unwrap();
            let after = (pred[0] - psi[0]).abs();
            if before > 1e-9 {
                assert!(after < before);
            }
        }
    }

    #[test]
    fn schedules_start_at_one_and_decrease() {
        let schedules = [
            StepSchedule::Harmonic { c: 0.01 },
            StepSchedule::HarmonicLog { c: 0.9 },
            StepSchedule::Power { p: 0.7 },
        ];
        for s in schedules {
            assert_eq!(s.value(0), 1.0);
            let mut prev = 1.0;
            for t in 1..1000 {
                let v = s.value(t);
                assert!(v > 0.0 && v <= prev);
                prev = v;
            }
        }
        assert_eq!(StepSchedule::Constant { gamma: 0.3 }.value(123), 0.3);
    }

    #[test]
    fn converge_single_zero_trajectory_stalls() {
        let init = LocalModel::from_rows(1, 2, vec![1.0, 1.0]).unwrap();
        let truth = LocalModel::zeros(1, 2);
        let stream = (0..100).map(|_| (vec![0.0, 0.0], vec![0.0]));
        let (model, hist) =
            converge_single(stream, StepSchedule::Constant { gamma: 0.1 }, init.clone(), Some(&truth))
                .unwrap();
        assert_eq!(model, init);
        assert!(hist.iter().all(|e| (*e - hist[0]).abs() < 1e-15));
    }
}
