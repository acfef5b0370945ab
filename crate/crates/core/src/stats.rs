//! Gradient vectors and the covariance / standard deviation / Pearson kernel.
//!
//! Statistics use the population convention (divide by `n`): the Pearson
//! ratio is identical under either convention, and fixing one keeps the
//! oracle comparisons exact. The implementation is Welford's online update;
//! the tests check it against a two-pass direct-summation oracle.

use crate::error::NumericError;
use crate::fixed::{encode_fixed, FixedPoint};

/// A gradient (or median) vector of fixed-point entries sharing one scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatVector {
    entries: Vec<FixedPoint>,
}

impl StatVector {
    pub fn from_raw(raw: Vec<i64>, scale_bits: u32) -> Self {
        Self {
            entries: raw
                .into_iter()
                .map(|r| FixedPoint::from_raw(r, scale_bits))
                .collect(),
        }
    }

    pub fn from_f64(values: &[f64], scale_bits: u32) -> Result<Self, NumericError> {
        let entries = values
            .iter()
            .map(|&v| encode_fixed(v, scale_bits))
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FixedPoint] {
        &self.entries
    }

    pub fn raw(&self) -> Vec<i64> {
        self.entries.iter().map(|f| f.raw).collect()
    }

    pub fn decoded(&self) -> Vec<f64> {
        self.entries.iter().map(|f| f.to_f64()).collect()
    }
}

/// Population covariance and standard deviations of two equal-length vectors,
/// computed with Welford's paired online update.
///
/// Satisfies `Cov(c·x, d·y) = c·d·Cov(x, y)` and `σ(c·x) = |c|·σ(x)`.
pub fn cov_and_sigma(x: &StatVector, y: &StatVector) -> Result<(f64, f64, f64), NumericError> {
    cov_and_sigma_f64(&x.decoded(), &y.decoded())
}

pub(crate) fn cov_and_sigma_f64(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64), NumericError> {
    if x.len() != y.len() {
        return Err(NumericError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(NumericError::TooShort(x.len()));
    }
    let mut mean_x = 0.0;
    let mut mean_y = 0.0;
    let mut m2_x = 0.0;
    let mut m2_y = 0.0;
    let mut co = 0.0;
    for (k, (&xv, &yv)) in x.iter().zip(y).enumerate() {
        let n = (k + 1) as f64;
        let dx = xv - mean_x;
        let dy = yv - mean_y;
        mean_x += dx / n;
        mean_y += dy / n;
        m2_x += dx * (xv - mean_x);
        m2_y += dy * (yv - mean_y);
        co += dx * (yv - mean_y);
    }
    let n = x.len() as f64;
    Ok(((co / n), (m2_x / n).sqrt(), (m2_y / n).sqrt()))
}

/// Pearson correlation `Cov(x,y) / (σ(x)·σ(y))` on the decoded values.
///
/// Result lies in `[-1, 1]` up to ~1e-12 rounding. Constant vectors are
/// rejected with [`NumericError::DegenerateVector`].
pub fn pearson(x: &StatVector, y: &StatVector) -> Result<f64, NumericError> {
    pearson_f64(&x.decoded(), &y.decoded())
}

pub(crate) fn pearson_f64(x: &[f64], y: &[f64]) -> Result<f64, NumericError> {
    let (cov, sx, sy) = cov_and_sigma_f64(x, y)?;
    if sx == 0.0 || sy == 0.0 {
        return Err(NumericError::DegenerateVector);
    }
    Ok(cov / (sx * sy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sv(values: &[f64]) -> StatVector {
        StatVector::from_f64(values, 16).unwrap()
    }

    /// Two-pass direct-summation oracle, independent of the Welford path.
    fn oracle_cov_sigma(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov = x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (a - mx) * (b - my))
            .sum::<f64>()
            / n;
        let vx = x.iter().map(|&a| (a - mx) * (a - mx)).sum::<f64>() / n;
        let vy = y.iter().map(|&b| (b - my) * (b - my)).sum::<f64>() / n;
        (cov, vx.sqrt(), vy.sqrt())
    }

    #[test]
    fn cov_examples() {
        let (cov, sx, sy) = cov_and_sigma(&sv(&[0.0, 2.0]), &sv(&[0.0, 2.0])).unwrap();
        assert_eq!((cov, sx, sy), (1.0, 1.0, 1.0));

        let (_, sx, _) = cov_and_sigma(&sv(&[0.0, 6.0]), &sv(&[0.0, 2.0])).unwrap();
        assert_eq!(sx, 3.0);
    }

    #[test]
    fn pearson_examples() {
        let x = sv(&[1.0, 2.0, 3.0]);
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y = sv(&[3.0, 2.0, 1.0]);
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = sv(&[0.5, -1.25, 2.0, 0.0, 3.5]);
        let y = sv(&[1.0, 0.25, -0.5, 2.0, 1.5]);
        let ax = sv(&[
            0.5 * 3.0 + 7.0,
            -1.25 * 3.0 + 7.0,
            2.0 * 3.0 + 7.0,
            0.0 * 3.0 + 7.0,
            3.5 * 3.0 + 7.0,
        ]);
        let base = pearson(&x, &y).unwrap();
        assert!((pearson(&ax, &y).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn degenerate_vector_rejected() {
        let c = sv(&[2.0, 2.0, 2.0]);
        let x = sv(&[1.0, 2.0, 3.0]);
        assert_eq!(pearson(&c, &x), Err(NumericError::DegenerateVector));
        assert_eq!(pearson(&x, &c), Err(NumericError::DegenerateVector));
    }

    #[test]
    fn length_preconditions() {
        let x = sv(&[1.0, 2.0]);
        let y = sv(&[1.0]);
        assert_eq!(pearson(&x, &y), Err(NumericError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&y, &y), Err(NumericError::TooShort(1)));
    }

    proptest! {
        #[test]
        fn welford_matches_direct_summation_oracle(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..60)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (cov, sx, sy) = cov_and_sigma_f64(&x, &y).unwrap();
            let (ocov, osx, osy) = oracle_cov_sigma(&x, &y);
            prop_assert!((cov - ocov).abs() < 1e-9);
            prop_assert!((sx - osx).abs() < 1e-9);
            prop_assert!((sy - osy).abs() < 1e-9);
        }

        // Scale invariance up to the sign of c*d: the property SecPear's
        // positive per-user pads rely on.
        #[test]
        fn pearson_scale_invariance(
            pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..40),
            c in prop::sample::select(vec![-7.0f64, -1.0, 0.5, 2.0, 11.0]),
            d in prop::sample::select(vec![-3.0f64, -0.25, 1.0, 5.0]),
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let sxv: Vec<f64> = x.iter().map(|v| v * c).collect();
            let syv: Vec<f64> = y.iter().map(|v| v * d).collect();
            match pearson_f64(&x, &y) {
                Ok(rho) => {
                    let scaled = pearson_f64(&sxv, &syv).unwrap();
                    let expected = (c * d).signum() * rho;
                    prop_assert!((scaled - expected).abs() < 1e-9);
                    prop_assert!(rho.abs() <= 1.0 + 1e-12);
                }
                Err(NumericError::DegenerateVector) => {}
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }

        // Cov bilinearity and sigma homogeneity.
        #[test]
        fn cov_scaling_identities(
            pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..40),
            c in -8i32..8,
        ) {
            let c = f64::from(c);
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let (cov, sx, _) = cov_and_sigma_f64(&x, &y).unwrap();
            let (cov_s, sx_s, _) = cov_and_sigma_f64(&xs, &y).unwrap();
            prop_assert!((cov_s - c * cov).abs() < 1e-7);
            prop_assert!((sx_s - c.abs() * sx).abs() < 1e-7);
        }
    }
}
