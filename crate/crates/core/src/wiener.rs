//! Linear FIR (Wiener) baseline.
//!
//! The filter predicts `x_t` as `c + Σ_j w_j z_{t+offset-j}` for
//! `j = 0..L`. Coefficients solve the Toeplitz normal equations built from
//! empirical auto- and cross-covariances of a training pair, and the
//! intercept matches the training means.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Ridge added to the diagonal when the normal equations are near-singular.
pub const RIDGE: f64 = 1e-8;

/// Relative determinant below which the covariance matrix counts as
/// near-singular.
const CONDITION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WienerFilter {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Position of the newest window sample relative to `t`: negative for
    /// delay, positive for lookahead.
    pub offset: i64,
    /// Value substituted for samples outside the data.
    pub pad: f64,
}

/// Means and covariances of a training pair, computed once and reused for
/// every window and offset up to `max_lag`.
#[derive(Debug, Clone)]
pub struct WienerStats {
    mean_x: f64,
    mean_z: f64,
    max_lag: usize,
    /// `auto[m] = Cov(z_t, z_{t+m})`.
    auto: Vec<f64>,
    /// `cross[m + max_lag] = Cov(x_t, z_{t+m})`.
    cross: Vec<f64>,
}

impl WienerStats {
    pub fn new(x: &[f64], z: &[f64], max_lag: usize) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: z.len(),
            });
        }
        let n = x.len();
        if n <= max_lag + 1 {
            return Err(Error::InvalidParameter(format!(
                "training length {n} too short for lag {max_lag}"
            )));
        }
        if x.iter().chain(z).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("training data must be finite".into()));
        }
        let mean_x = x.iter().sum::<f64>() / n as f64;
        let mean_z = z.iter().sum::<f64>() / n as f64;
        let xc: Vec<f64> = x.iter().map(|v| v - mean_x).collect();
        let zc: Vec<f64> = z.iter().map(|v| v - mean_z).collect();
        // Biased estimates (divide by n) keep the Toeplitz matrix
        // positive semidefinite.
        let lagged = |a: &[f64], b: &[f64], m: usize| -> f64 {
            a[..n - m].iter().zip(&b[m..]).map(|(u, v)| u * v).sum::<f64>() / n as f64
        };
        let auto = (0..=max_lag).map(|m| lagged(&zc, &zc, m)).collect();
        let mut cross = Vec::with_capacity(2 * max_lag + 1);
        for m in (1..=max_lag).rev() {
            // Cov(x_t, z_{t-m}) = Cov(z_s, x_{s+m}).
            cross.push(lagged(&zc, &xc, m));
        }
        for m in 0..=max_lag {
            cross.push(lagged(&xc, &zc, m));
        }
        Ok(Self {
            mean_x,
            mean_z,
            max_lag,
            auto,
            cross,
        })
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// Solves for a window of `window` taps ending at `t + offset`.
    pub fn fit(&self, window: usize, offset: i64) -> Result<WienerFilter> {
        if window == 0 {
            return Err(Error::InvalidParameter("window must be at least 1".into()));
        }
        let lag = self.max_lag as i64;
        let oldest = offset - window as i64 + 1;
        if window > self.max_lag + 1 || offset > lag || oldest < -lag {
            return Err(Error::InvalidParameter(format!(
                "window {window} at offset {offset} exceeds lag {lag}"
            )));
        }
        let mut r = Matrix::zeros(window, window);
        for i in 0..window {
            for j in 0..window {
                r[(i, j)] = self.auto[i.abs_diff(j)];
            }
        }
        let rhs: Vec<f64> = (0..window)
            .map(|j| self.cross[(offset - j as i64 + lag) as usize])
            .collect();
        let scale = self.auto[0].abs().max(f64::MIN_POSITIVE);
        let coefficients = match r.inverse_with_det() {
            Ok((inv, det)) if (det / libm::pow(scale, window as f64)).abs() > CONDITION_FLOOR => {
                inv.mul_vec(&rhs)
            }
            _ => {
                for i in 0..window {
                    r[(i, i)] += RIDGE * scale.max(1.0);
                }
                r.solve(&rhs)?
            }
        };
        let intercept = self.mean_x - self.mean_z * coefficients.iter().sum::<f64>();
        Ok(WienerFilter {
            coefficients,
            intercept,
            offset,
            pad: self.mean_z,
        })
    }
}

impl WienerFilter {
    /// Fits a single filter; see [`WienerStats::fit`].
    pub fn fit(x: &[f64], z: &[f64], window: usize, offset: i64) -> Result<Self> {
        let lag = (window as i64 - 1 - offset).max(offset).max(0) as usize;
        WienerStats::new(x, z, lag.max(window - 1))?.fit(window, offset)
    }

    pub fn window(&self) -> usize {
        self.coefficients.len()
    }

    /// Estimate at every position of `z`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len() as i64;
        (0..n)
            .map(|t| {
                let newest = t + self.offset;
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(j, w)| {
                            let i = newest - j as i64;
                            w * if (0..n).contains(&i) {
                                z[i as usize]
                            } else {
                                self.pad
                            }
                        })
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Mean squared error between two equal-length sequences.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, uniform01};
    use alloc::vec;

    fn signs(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed, 0);
        (0..n)
            .map(|_| if uniform01(&mut rng) < 0.5 { -1.0 } else { 1.0 })
            .collect()
    }

    #[test]
    fn identity_pair() {
        let x = signs(1000, 1);
        let f = WienerFilter::fit(&x, &x, 1, 0).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 1e-12);
        assert!(f.intercept.abs() < 1e-12);
        assert!(mse(&f.apply(&x), &x) < 1e-20);
    }

    #[test]
    fn independent_noise_gives_variance() {
        let x = signs(100_000, 2);
        let z = signs(100_000, 3);
        let f = WienerFilter::fit(&x, &z, 4, 0).unwrap();
        assert!(f.coefficients.iter().all(|w| w.abs() < 0.02));
        let var = {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
        };
        assert!((mse(&f.apply(&z), &x) - var).abs() < 0.01);
    }

    #[test]
    fn recovers_known_fir() {
        // x_t = 0.5 z_t - 0.25 z_{t-1} + 1 exactly.
        let z = signs(5000, 4);
        let x: Vec<f64> = (0..z.len())
            .map(|t| 0.5 * z[t] - if t > 0 { 0.25 * z[t - 1] } else { 0.0 } + 1.0)
            .collect();
        let f = WienerFilter::fit(&x, &z, 3, 0).unwrap();
        assert!((f.coefficients[0] - 0.5).abs() < 0.01);
        assert!((f.coefficients[1] + 0.25).abs() < 0.01);
        assert!(f.coefficients[2].abs() < 0.01);
        assert!((f.intercept - 1.0).abs() < 0.01);
    }

    #[test]
    fn lookahead_offset_uses_future() {
        // x_t = z_{t+2}: only the newest tap of a window ending at t+2
        // matters.
        let z = signs(5000, 5);
        let x: Vec<f64> = (0..z.len()).map(|t| *z.get(t + 2).unwrap_or(&0.0)).collect();
        let f = WienerFilter::fit(&x, &z, 3, 2).unwrap();
        assert!((f.coefficients[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn apply_is_affine() {
        let x = signs(2000, 6);
        let z: Vec<f64> = x.iter().zip(signs(2000, 7)).map(|(a, b)| a + b).collect();
        let f = WienerFilter::fit(&x, &z, 4, 1).unwrap();
        let (a, b) = (2.5, -0.75);
        let z2: Vec<f64> = z.iter().map(|v| a * v + b).collect();
        let y = f.apply(&z);
        let y2 = f.apply(&z2);
        let wsum: f64 = f.coefficients.iter().sum();
        // Interior positions only: padding does not scale.
        for t in 3..z.len() - 1 {
            let want = a * (y[t] - f.intercept) + f.intercept + b * wsum;
            assert!((y2[t] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_input_uses_ridge() {
        let x = vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0];
        let z = vec![0.0; 6];
        let f = WienerFilter::fit(&x, &z, 2, 0).unwrap();
        assert!(f.coefficients.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn rejects_out_of_range_window() {
        let x = signs(100, 8);
        let s = WienerStats::new(&x, &x, 3).unwrap();
        assert!(s.fit(5, 0).is_err());
        assert!(s.fit(2, 4).is_err());
        assert!(s.fit(0, 0).is_err());
    }
}
