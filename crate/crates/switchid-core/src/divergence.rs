//! Dissimilarity measures for the prototype partition.
//!
//! Only the squared Euclidean distance is implemented. It is a Bregman
//! divergence, so the induced nearest-prototype cells are separated by
//! hyperplanes and the partition is polyhedral on a bounded domain.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bregman divergence selector. An enumeration (not an open trait) so merge
/// thresholds and the hyperplane cell test can be specialized per instance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divergence {
    #[default]
    SquaredEuclidean,
}

impl Divergence {
    /// d(x, mu). Nonnegative, zero iff `x == mu` for squared Euclidean.
    pub fn eval(&self, x: &[f64], mu: &[f64]) -> Result<f64> {
        if x.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: mu.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("empty vectors in divergence"));
        }
        if !x.iter().chain(mu.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in divergence"));
        }
        match self {
            Divergence::SquaredEuclidean => Ok(x
                .iter()
                .zip(mu.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum()),
        }
    }

    /// Index of the closest prototype; ties break to the lowest index.
    pub fn nearest(&self, x: &[f64], prototypes: &[Vec<f64>]) -> Result<usize> {
        if prototypes.is_empty() {
            return Err(Error::InvalidInput("nearest: empty prototype list"));
        }
        let mut best = 0;
        let mut best_d = self.eval(x, &prototypes[0])?;
        for (i, p) in prototypes.iter().enumerate().skip(1) {
            let d = self.eval(x, p)?;
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        Ok(best)
    }
}

/// Affine function `a^T phi - b` whose sign decides the cell boundary between
/// two squared-Euclidean prototypes: negative means `phi` is strictly closer
/// to `p_i`, positive strictly closer to `p_j`.
pub fn separating_hyperplane(p_i: &[f64], p_j: &[f64]) -> (Vec<f64>, f64) {
    let a: Vec<f64> = p_i.iter().zip(p_j.iter()).map(|(i, j)| 2.0 * (j - i)).collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let b = sq(p_j) - sq(p_i);
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        let d = Divergence::SquaredEuclidean;
        assert_eq!(d.eval(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(d.eval(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        // hand sum of squares 1 + 4 + 9
        assert_eq!(d.eval(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap(), 14.0);
    }

    #[test]
    fn eval_rejects_bad_input() {
        let d = Divergence::SquaredEuclidean;
        assert!(matches!(
            d.eval(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(d.eval(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn nearest_examples() {
        let d = Divergence::SquaredEuclidean;
        let protos = alloc::vec![alloc::vec![0.0], alloc::vec![5.0]];
        assert_eq!(d.nearest(&[0.0], &protos).unwrap(), 0);
        // compare 9 vs 4
        assert_eq!(d.nearest(&[3.0], &protos).unwrap(), 1);
        // exact tie goes to the lowest index
        assert_eq!(d.nearest(&[2.5], &protos).unwrap(), 0);
        assert!(d.nearest(&[0.0], &[]).is_err());
    }

    #[test]
    fn hyperplane_matches_divergence_sign() {
        let d = Divergence::SquaredEuclidean;
        let mut rng = crate::rng::SplitMix64::new(42);
        for _ in 0..200 {
            let dim = 1 + (rng.next_u64() % 4) as usize;
            let pi: Vec<f64> = (0..dim).map(|_| rng.next_gaussian() * 3.0).collect();
            let pj: Vec<f64> = (0..dim).map(|_| rng.next_gaussian() * 3.0).collect();
            let (a, b) = separating_hyperplane(&pi, &pj);
            for _ in 0..20 {
                let phi: Vec<f64> = (0..dim).map(|_| rng.next_gaussian() * 5.0).collect();
                let gap = d.eval(&phi, &pi).unwrap() - d.eval(&phi, &pj).unwrap();
                let aff: f64 = a.iter().zip(phi.iter()).map(|(x, y)| x * y).sum::<f64>() - b;
                assert_eq!(gap.signum(), aff.signum());
            }
        }
    }
}
