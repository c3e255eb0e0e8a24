//! Discrete memoryless channels and the maps between noisy-symbol and
//! clean-symbol distributions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::types::{Alphabet, ScoreVector, PMF_TOLERANCE};

/// Channels with `|det Π|` below this are rejected as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

/// Square invertible channel `Π(x, z) = P(Z = z | X = x)` with its cached
/// inverse transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    input: Alphabet,
    output: Alphabet,
    pi: Matrix,
    pi_inv_t: Matrix,
    c1: f64,
}

/// Constants in the excess-loss bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `|Π^{-T}|_max · |A_X|`.
    pub c1: f64,
    /// `3√2 · c1`.
    pub c2: f64,
    /// `c1 · 2^{|A_Z|} · √(π/2)`.
    pub c3: f64,
}

impl ChannelMatrix {
    pub fn new(input: Alphabet, output: Alphabet, rows: &[Vec<f64>]) -> Result<Self> {
        let pi = Matrix::from_rows(rows)?;
        if pi.rows() != input.size() {
            return Err(Error::DimensionMismatch {
                expected: input.size(),
                found: pi.rows(),
            });
        }
        if pi.cols() != output.size() {
            return Err(Error::DimensionMismatch {
                expected: output.size(),
                found: pi.cols(),
            });
        }
        for r in 0..pi.rows() {
            let row = pi.row(r);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidMatrix(format!("row {r} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > PMF_TOLERANCE {
                return Err(Error::InvalidMatrix(format!("row {r} sums to {s}")));
            }
        }
        if pi.rows() != pi.cols() {
            return Err(Error::InvalidMatrix(format!(
                "channel must be square, got {}x{}",
                pi.rows(),
                pi.cols()
            )));
        }
        let (inv, det) = pi.inverse_with_det()?;
        if det.abs() < SINGULARITY_THRESHOLD {
            return Err(Error::SingularMatrix { det });
        }
        let pi_inv_t = inv.transpose();
        let c1 = pi_inv_t.max_abs() * input.size() as f64;
        Ok(Self {
            input,
            output,
            pi,
            pi_inv_t,
            c1,
        })
    }

    /// Noiseless channel on `{0, .., size-1}`.
    pub fn identity(size: usize) -> Result<Self> {
        let a = Alphabet::indexed(size)?;
        let rows = Matrix::identity(size).to_rows();
        Self::new(a.clone(), a, &rows)
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn output(&self) -> &Alphabet {
        &self.output
    }

    #[inline]
    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    #[inline]
    pub fn output_size(&self) -> usize {
        self.output.size()
    }

    pub fn pi(&self) -> &Matrix {
        &self.pi
    }

    pub fn pi_inv_t(&self) -> &Matrix {
        &self.pi_inv_t
    }

    #[inline]
    pub fn prob(&self, x: usize, z: usize) -> f64 {
        self.pi[(x, z)]
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn bound_constants(&self) -> BoundConstants {
        bound_constants(self, self.output_size())
    }

    /// `Πᵀ p_x`: the output law induced by an input law.
    pub fn push_forward(&self, px: &[f64]) -> Vec<f64> {
        self.pi.tr_mul_vec(px)
    }

    /// `Π^{-T} q` without validation or allocation checks.
    pub(crate) fn inv_t_mul(&self, q: &[f64]) -> Vec<f64> {
        self.pi_inv_t.mul_vec(q)
    }

    /// `F(pz, Π, z) = Π(·, z) ⊙ (Π^{-T} pz) / pz(z)`.
    pub fn posterior(&self, pz: &[f64], z: usize) -> Result<ScoreVector> {
        let mut out = vec![0.0; self.input_size()];
        self.posterior_into(pz, z, &mut out)?;
        Ok(ScoreVector::from_raw(out))
    }

    pub(crate) fn posterior_into(&self, pz: &[f64], z: usize, out: &mut [f64]) -> Result<()> {
        if pz.len() != self.output_size() {
            return Err(Error::DimensionMismatch {
                expected: self.output_size(),
                found: pz.len(),
            });
        }
        if z >= self.output_size() {
            return Err(Error::SymbolOutOfRange {
                position: 0,
                symbol: z,
                size: self.output_size(),
            });
        }
        let denom = pz[z];
        if denom <= 0.0 {
            return Err(Error::ZeroProbabilityObservation {
                symbol: z,
                position: None,
            });
        }
        for (x, o) in out.iter_mut().enumerate() {
            let px: f64 = self
                .pi_inv_t
                .row(x)
                .iter()
                .zip(pz)
                .map(|(a, b)| a * b)
                .sum();
            *o = self.pi[(x, z)] * px / denom;
        }
        Ok(())
    }

    /// `Π^{-T} qz`, passed through without clamping negative entries.
    pub fn delayed_prior(&self, qz: &[f64]) -> Result<ScoreVector> {
        if qz.len() != self.output_size() {
            return Err(Error::DimensionMismatch {
                expected: self.output_size(),
                found: qz.len(),
            });
        }
        Ok(ScoreVector::from_raw(self.inv_t_mul(qz)))
    }
}

/// `F(pz, Π, z)`; see [`ChannelMatrix::posterior`].
pub fn posterior_f(pz: &[f64], ch: &ChannelMatrix, z: usize) -> Result<ScoreVector> {
    ch.posterior(pz, z)
}

/// `Π^{-T} qz`; see [`ChannelMatrix::delayed_prior`].
pub fn delayed_prior(qz: &[f64], ch: &ChannelMatrix) -> Result<ScoreVector> {
    ch.delayed_prior(qz)
}

pub fn bound_constants(ch: &ChannelMatrix, az_size: usize) -> BoundConstants {
    let c1 = ch.c1;
    BoundConstants {
        c1,
        c2: 3.0 * core::f64::consts::SQRT_2 * c1,
        c3: c1 * libm::pow(2.0, az_size as f64) * crate::math::sqrt(core::f64::consts::PI / 2.0),
    }
}

/// How [`estimate_channel`] treats input symbols without observations and
/// zero counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateOptions {
    /// Added to every `(x, z)` count before normalizing. Zero reproduces raw
    /// frequencies.
    pub additive_smoothing: f64,
    /// Row used for input symbols that never occur. `None` makes such
    /// symbols an error.
    pub unobserved_row: Option<Vec<f64>>,
}

/// Empirical channel `Π(x, z) = Count(x, z) / Count(x)` from paired samples.
pub fn estimate_channel(
    pairs: &[(usize, usize)],
    ax: Alphabet,
    az: Alphabet,
    options: &EstimateOptions,
) -> Result<ChannelMatrix> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no (x, z) pairs to estimate from".into()));
    }
    let (nx, nz) = (ax.size(), az.size());
    let mut counts = vec![vec![0u64; nz]; nx];
    for (i, &(x, z)) in pairs.iter().enumerate() {
        if x >= nx {
            return Err(Error::SymbolOutOfRange {
                position: i,
                symbol: x,
                size: nx,
            });
        }
        if z >= nz {
            return Err(Error::SymbolOutOfRange {
                position: i,
                symbol: z,
                size: nz,
            });
        }
        counts[x][z] += 1;
    }
    let alpha = options.additive_smoothing;
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidParameter("smoothing must be nonnegative".into()));
    }
    let mut rows = Vec::with_capacity(nx);
    for (x, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            match &options.unobserved_row {
                Some(fill) => {
                    if fill.len() != nz {
                        return Err(Error::DimensionMismatch {
                            expected: nz,
                            found: fill.len(),
                        });
                    }
                    rows.push(fill.clone());
                    continue;
                }
                None if alpha == 0.0 => return Err(Error::UnobservedSymbol { symbol: x }),
                None => {}
            }
        }
        let denom = total as f64 + alpha * nz as f64;
        rows.push(row.iter().map(|&c| (c as f64 + alpha) / denom).collect());
    }
    ChannelMatrix::new(ax, az, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq25() -> ChannelMatrix {
        let ax = Alphabet::new(vec![-1, 0, 1]).unwrap();
        let az = Alphabet::new(vec![-2, 0, 2]).unwrap();
        let t = 1.0 / 3.0;
        ChannelMatrix::new(
            ax,
            az,
            &[vec![0.5, 0.5, 0.0], vec![t, t, t], vec![0.0, 0.5, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn estimate_by_counting() {
        let a = Alphabet::indexed(2).unwrap();
        let ch = estimate_channel(
            &[(0, 0), (0, 1), (1, 1), (1, 1)],
            a.clone(),
            a.clone(),
            &EstimateOptions::default(),
        );
        // [[1/2, 1/2], [0, 1]] is invertible (det 1/2).
        let ch = ch.unwrap();
        assert_eq!(ch.pi().to_rows(), vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
    }

    #[test]
    fn estimate_noiseless_is_identity() {
        let a = Alphabet::indexed(3).unwrap();
        let pairs: Vec<_> = (0..30).map(|i| (i % 3, i % 3)).collect();
        let ch = estimate_channel(&pairs, a.clone(), a, &EstimateOptions::default()).unwrap();
        assert_eq!(ch.pi(), &Matrix::identity(3));
    }

    #[test]
    fn estimate_missing_symbol_is_named() {
        let a = Alphabet::indexed(3).unwrap();
        let err = estimate_channel(&[(0, 0), (2, 2)], a.clone(), a, &EstimateOptions::default());
        assert_eq!(err.unwrap_err(), Error::UnobservedSymbol { symbol: 1 });
    }

    #[test]
    fn estimate_singular_rejected() {
        let a = Alphabet::indexed(2).unwrap();
        let err = estimate_channel(&[(0, 0), (1, 0)], a.clone(), a, &EstimateOptions::default());
        assert!(matches!(err, Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn estimate_fills_unobserved_row() {
        let a = Alphabet::indexed(2).unwrap();
        let opts = EstimateOptions {
            additive_smoothing: 0.0,
            unobserved_row: Some(vec![0.25, 0.75]),
        };
        let ch = estimate_channel(&[(0, 0)], a.clone(), a, &opts).unwrap();
        assert_eq!(ch.pi().row(1), &[0.25, 0.75]);
    }

    #[test]
    fn identity_posterior_is_one_hot() {
        let ch = ChannelMatrix::identity(3).unwrap();
        let p = ch.posterior(&[0.2, 0.3, 0.5], 1).unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn eq25_posteriors_match_bayes_rule() {
        let ch = eq25();
        let pz = [0.25, 0.5, 0.25];
        let p = ch.posterior(&pz, 0).unwrap();
        for (a, b) in p.as_slice().iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
        let p = ch.posterior(&pz, 1).unwrap();
        for (a, b) in p.as_slice().iter().zip([0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn zero_probability_observation() {
        let ch = eq25();
        assert!(matches!(
            ch.posterior(&[0.0, 0.5, 0.5], 0),
            Err(Error::ZeroProbabilityObservation { symbol: 0, .. })
        ));
    }

    #[test]
    fn delayed_prior_examples() {
        let id = ChannelMatrix::identity(3).unwrap();
        assert_eq!(id.delayed_prior(&[0.1, 0.2, 0.7]).unwrap().as_slice(), &[0.1, 0.2, 0.7]);
        let ch = eq25();
        let p = ch.delayed_prior(&[0.25, 0.5, 0.25]).unwrap();
        for (a, b) in p.as_slice().iter().zip([0.5, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let inconsistent = ch.delayed_prior(&[1.0, 0.0, 0.0]).unwrap();
        assert!(inconsistent.as_slice().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn identity_constants() {
        let k = ChannelMatrix::identity(2).unwrap().bound_constants();
        assert_eq!(k.c1, 2.0);
        assert!((k.c2 - 6.0 * core::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((k.c2 - 8.485).abs() < 1e-3);
    }

    #[test]
    fn non_square_rejected() {
        let ax = Alphabet::indexed(2).unwrap();
        let az = Alphabet::indexed(3).unwrap();
        let r = ChannelMatrix::new(ax, az, &[vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]]);
        assert!(matches!(r, Err(Error::InvalidMatrix(_))));
    }
}
