//! The two-state Markov source observed through additive `±1` noise.
//!
//! `X` takes values in `{-1, 1}` and `Z = X + N` with `N` uniform on
//! `{-1, 1}`, so `Z ∈ {-2, 0, 2}`. The filters need a square invertible
//! channel, so the input alphabet is padded with a symbol `0` that never
//! occurs and whose channel row is uniform.

use udfilt_core::{Alphabet, ChannelMatrix, HmmModel};

pub const X_LABELS: [i64; 3] = [-1, 0, 1];
pub const Z_LABELS: [i64; 3] = [-2, 0, 2];
/// Row used for the padding symbol, in the channel and in estimates of it.
pub const PAD_ROW: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

pub fn x_alphabet() -> Alphabet {
    Alphabet::new(X_LABELS.to_vec()).expect("static labels")
}

pub fn z_alphabet() -> Alphabet {
    Alphabet::new(Z_LABELS.to_vec()).expect("static labels")
}

/// The true channel over the padded input alphabet.
pub fn noise_channel() -> ChannelMatrix {
    ChannelMatrix::new(
        x_alphabet(),
        z_alphabet(),
        &[vec![0.5, 0.5, 0.0], PAD_ROW.to_vec(), vec![0.0, 0.5, 0.5]],
    )
    .expect("channel is invertible")
}

/// Padded three-state model: the padding state is never entered.
pub fn markov_hmm(p: f64) -> udfilt_core::Result<HmmModel> {
    check_p(p)?;
    HmmModel::with_channel(
        &[
            vec![1.0 - p, 0.0, p],
            vec![0.5, 0.0, 0.5],
            vec![p, 0.0, 1.0 - p],
        ],
        &noise_channel(),
        vec![0.5, 0.0, 0.5],
    )
}

/// Two-state model with a 2x3 emission, for quantities that need the hidden
/// alphabet to be exactly `{-1, 1}` (subtractive losses mod 2).
pub fn binary_markov_hmm(p: f64) -> udfilt_core::Result<HmmModel> {
    check_p(p)?;
    HmmModel::new(
        &[vec![1.0 - p, p], vec![p, 1.0 - p]],
        &[vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5]],
        vec![0.5, 0.5],
    )
}

fn check_p(p: f64) -> udfilt_core::Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(udfilt_core::Error::InvalidParameter(format!("p must lie in (0, 1), got {p}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_state_is_never_visited() {
        let h = markov_hmm(0.3).unwrap();
        for t in 0..5 {
            assert_eq!(h.marginal_x(t)[1], 0.0);
        }
    }

    #[test]
    fn rejects_bad_p() {
        assert!(markov_hmm(0.0).is_err());
        assert!(binary_markov_hmm(1.0).is_err());
    }
}
