//! Universal filters: an SPA over the noisy alphabet, a channel and a loss
//! combine into causal, delayed and lookahead estimators of `X^n`.

use alloc::vec;
use alloc::vec::Vec;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::spa::{
    delayed_exact_from_state, delayed_mc_from_state, gap_sequences, lookahead_from_state,
    MonteCarlo, Spa, DEFAULT_EXACT_BUDGET,
};
use crate::types::{validate_symbols, LossMatrix};

/// How the delayed filter obtains `Q(Z_t | Z^{t-d})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    /// Enumerate every gap sequence, up to `budget` of them.
    Exact { budget: u64 },
    /// `trials` rollouts per position; position `t` draws from stream `t`
    /// of `seed`, so results do not depend on evaluation order.
    MonteCarlo { trials: usize, seed: u64, gamma: f64 },
}

impl Default for Marginal {
    fn default() -> Self {
        Marginal::Exact {
            budget: DEFAULT_EXACT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterMode {
    /// Estimate `X_t` from `Z^t`.
    Causal,
    /// Estimate `X_t` from `Z^{t-d}`, `d >= 1`.
    Delay { d: usize, marginal: Marginal },
    /// Estimate `X_t` from `Z^{t+l}`, with the window cut at the end of the
    /// data.
    Lookahead { l: usize },
}

impl FilterMode {
    /// Signed offset: negative for delay, nonnegative for lookahead.
    pub fn from_offset(k: i64) -> Self {
        if k < 0 {
            FilterMode::Delay {
                d: k.unsigned_abs() as usize,
                marginal: Marginal::default(),
            }
        } else if k == 0 {
            FilterMode::Causal
        } else {
            FilterMode::Lookahead { l: k as usize }
        }
    }

    pub fn offset(&self) -> i64 {
        match *self {
            FilterMode::Causal => 0,
            FilterMode::Delay { d, .. } => -(d as i64),
            FilterMode::Lookahead { l } => l as i64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub estimates: Vec<usize>,
    /// Score vectors the estimates respond to, `|A_X|` per position. These
    /// are posteriors of `X_t`, or `Π^{-T} Q` in delay mode.
    pub posteriors: Option<Vec<f64>>,
}

impl FilterOutput {
    pub fn posterior(&self, t: usize, nx: usize) -> Option<&[f64]> {
        self.posteriors
            .as_ref()
            .map(|p| &p[t * nx..(t + 1) * nx])
    }
}

/// Runs the filter in `mode` over `z`. With `keep_posteriors` the score
/// vector behind every decision is returned too.
pub fn filter<S: Spa>(
    z: &[usize],
    spa: &S,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    mode: FilterMode,
    keep_posteriors: bool,
) -> Result<FilterOutput> {
    let (nx, nz) = (ch.input_size(), ch.output_size());
    if spa.alphabet_size() != nz {
        return Err(Error::DimensionMismatch {
            expected: nz,
            found: spa.alphabet_size(),
        });
    }
    if loss.rows() != nx {
        return Err(Error::DimensionMismatch {
            expected: nx,
            found: loss.rows(),
        });
    }
    validate_symbols(z, nz)?;
    let n = z.len();
    let mut estimates = Vec::with_capacity(n);
    let mut posteriors = keep_posteriors.then(|| Vec::with_capacity(n * nx));
    let mut score = vec![0.0; nx];
    let mut pz = vec![0.0; nz];
    let mut emit = |score: &[f64], est: &mut Vec<usize>| {
        est.push(loss.bayes_response_unchecked(score));
        if let Some(p) = posteriors.as_mut() {
            p.extend_from_slice(score);
        }
    };
    let at = |t: usize| move |e: Error| with_position(e, t);

    match mode {
        FilterMode::Causal => {
            let mut state = spa.start();
            for (t, &zt) in z.iter().enumerate() {
                spa.predict_into(&state, &mut pz);
                ch.posterior_into(&pz, zt, &mut score).map_err(at(t))?;
                emit(&score, &mut estimates);
                state = spa.advance(&state, zt);
            }
        }
        FilterMode::Lookahead { l } => {
            let mut state = spa.start();
            for (t, &zt) in z.iter().enumerate() {
                let future = &z[t + 1..(t + 1 + l).min(n)];
                let q = lookahead_from_state(spa, &state, future).map_err(at(t))?;
                ch.posterior_into(q.as_slice(), zt, &mut score)
                    .map_err(at(t))?;
                emit(&score, &mut estimates);
                state = spa.advance(&state, zt);
            }
        }
        FilterMode::Delay { d, marginal } => {
            if d == 0 {
                return Err(Error::InvalidParameter("delay must be at least 1".into()));
            }
            if let Marginal::Exact { budget } = marginal {
                // Fail before doing any work rather than at position d.
                match gap_sequences(nz, d) {
                    Some(c) if c <= budget => {}
                    c => {
                        return Err(Error::BudgetExceeded {
                            required: c.map_or(f64::INFINITY, |c| c as f64),
                            budget: budget as f64,
                            hint: "use Monte Carlo marginalization for this delay",
                        })
                    }
                }
            }
            // `state` summarizes z^{t-d}, the context available at t.
            let mut state = spa.start();
            for t in 0..n {
                // 0-based t sees z[..t + 1 - d]; before that the context is
                // empty and X_t is t + 1 steps from the start.
                let eff = if t >= d {
                    state = spa.advance(&state, z[t - d]);
                    d
                } else {
                    t + 1
                };
                let q = match marginal {
                    Marginal::Exact { budget } => {
                        delayed_exact_from_state(spa, &state, eff, budget).map_err(at(t))?
                    }
                    Marginal::MonteCarlo {
                        trials,
                        seed,
                        gamma,
                    } => {
                        let mut rng = seeded(seed, t as u64);
                        delayed_mc_from_state(spa, &state, eff, MonteCarlo { trials, gamma }, &mut rng)
                            .map_err(at(t))?
                    }
                };
                let s = ch.inv_t_mul(q.as_slice());
                score.copy_from_slice(&s);
                emit(&score, &mut estimates);
            }
        }
    }
    Ok(FilterOutput {
        estimates,
        posteriors,
    })
}

fn with_position(e: Error, t: usize) -> Error {
    match e {
        Error::ZeroProbabilityObservation { symbol, .. } => Error::ZeroProbabilityObservation {
            symbol,
            position: Some(t),
        },
        Error::DegenerateLookahead { .. } => Error::DegenerateLookahead { position: Some(t) },
        other => other,
    }
}

pub fn filter_causal<S: Spa>(z: &[usize], spa: &S, ch: &ChannelMatrix, loss: &LossMatrix) -> Result<Vec<usize>> {
    Ok(filter(z, spa, ch, loss, FilterMode::Causal, false)?.estimates)
}

pub fn filter_delayed<S: Spa>(
    z: &[usize],
    spa: &S,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    d: usize,
    marginal: Marginal,
) -> Result<Vec<usize>> {
    Ok(filter(z, spa, ch, loss, FilterMode::Delay { d, marginal }, false)?.estimates)
}

pub fn filter_lookahead<S: Spa>(
    z: &[usize],
    spa: &S,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    l: usize,
) -> Result<Vec<usize>> {
    Ok(filter(z, spa, ch, loss, FilterMode::Lookahead { l }, false)?.estimates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::HmmModel;
    use crate::lz78::{Growth, Lz78Tree};
    use crate::rng::seeded;
    use crate::spa::IidSpa;
    use crate::types::{Alphabet, Pmf};
    use rand_core::RngCore;

    fn eq25() -> ChannelMatrix {
        ChannelMatrix::new(
            Alphabet::new(vec![-1, 0, 1]).unwrap(),
            Alphabet::new(vec![-2, 0, 2]).unwrap(),
            &[
                vec![0.5, 0.5, 0.0],
                vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                vec![0.0, 0.5, 0.5],
            ],
        )
        .unwrap()
    }

    fn model(p: f64) -> HmmModel {
        HmmModel::with_channel(
            &[
                vec![1.0 - p, 0.0, p],
                vec![0.5, 0.0, 0.5],
                vec![p, 0.0, 1.0 - p],
            ],
            &eq25(),
            vec![0.5, 0.0, 0.5],
        )
        .unwrap()
    }

    fn random_seq(k: u32, n: usize, seed: u64) -> Vec<usize> {
        let mut rng = seeded(seed, 0);
        (0..n).map(|_| (rng.next_u32() % k) as usize).collect()
    }

    #[test]
    fn noiseless_pass_through() {
        let ch = ChannelMatrix::identity(3).unwrap();
        let loss = LossMatrix::hamming(3);
        let z = random_seq(3, 300, 1);
        let tree = Lz78Tree::build_shifted(&z, Alphabet::indexed(3).unwrap(), 0.5, Growth::OneLeaf).unwrap();
        let spa = tree.spa();
        assert_eq!(filter_causal(&z, &spa, &ch, &loss).unwrap(), z);
        for l in [0, 1, 3] {
            assert_eq!(filter_lookahead(&z, &spa, &ch, &loss, l).unwrap(), z);
        }
    }

    #[test]
    fn minus_two_under_iid_spas() {
        // Uniform Z is explained entirely by the padding row: the delayed
        // prior is (0, 1, 0), so the estimate is the padding symbol.
        let spa = IidSpa::new(Pmf::uniform(3));
        let out = filter_causal(&[0], &spa, &eq25(), &LossMatrix::hamming(3)).unwrap();
        assert_eq!(out, vec![1]);
        let spa = IidSpa::new(Pmf::new(vec![0.25, 0.5, 0.25]).unwrap());
        let out = filter_causal(&[0], &spa, &eq25(), &LossMatrix::hamming(3)).unwrap();
        assert_eq!(out, vec![0]);
    }

    #[test]
    fn lookahead_zero_is_causal() {
        let h = model(0.2);
        let (_, z) = h.sample(500, &mut seeded(3, 0));
        let loss = LossMatrix::squared_error_labels(eq25().input());
        let a = filter(&z, &h.true_spa(), &eq25(), &loss, FilterMode::Causal, true).unwrap();
        let b = filter(&z, &h.true_spa(), &eq25(), &loss, FilterMode::Lookahead { l: 0 }, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delay_one_unfolds_definition() {
        let q = Pmf::new(vec![0.2, 0.5, 0.3]).unwrap();
        let spa = IidSpa::new(q.clone());
        let ch = eq25();
        let loss = LossMatrix::squared_error_labels(ch.input());
        let z = random_seq(3, 20, 7);
        let out = filter_delayed(&z, &spa, &ch, &loss, 1, Marginal::default()).unwrap();
        let want = loss
            .bayes_response(ch.delayed_prior(q.as_slice()).unwrap().as_slice())
            .unwrap();
        assert!(out.iter().all(|&e| e == want));
    }

    fn max_l1(a: &[f64], b: &[f64], nx: usize) -> f64 {
        a.chunks(nx)
            .zip(b.chunks(nx))
            .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    #[test]
    fn true_spa_reproduces_bayes_optimum() {
        let ch = eq25();
        let loss = LossMatrix::squared_error_labels(ch.input());
        for p in [0.1, 0.2, 0.4] {
            let h = model(p);
            let (_, z) = h.sample(400, &mut seeded(11, 0));
            let spa = h.true_spa();
            for k in -2..=2 {
                let u = filter(&z, &spa, &ch, &loss, FilterMode::from_offset(k), true).unwrap();
                let o = h.optimal_filter(&z, &loss, k).unwrap();
                assert_eq!(u.estimates, o.estimates, "p={p} k={k}");
                assert!(max_l1(u.posteriors.as_ref().unwrap(), &o.posteriors, 3) < 1e-9);
            }
        }
    }

    #[test]
    fn mc_delay_is_reproducible_and_close() {
        let h = model(0.2);
        let (_, z) = h.sample(300, &mut seeded(5, 0));
        let ch = eq25();
        let loss = LossMatrix::squared_error_labels(ch.input());
        let mc = Marginal::MonteCarlo {
            trials: 2000,
            seed: 9,
            gamma: 0.5,
        };
        let a = filter_delayed(&z, &h.true_spa(), &ch, &loss, 2, mc).unwrap();
        let b = filter_delayed(&z, &h.true_spa(), &ch, &loss, 2, mc).unwrap();
        assert_eq!(a, b);
        let exact = filter_delayed(&z, &h.true_spa(), &ch, &loss, 2, Marginal::default()).unwrap();
        let agree = a.iter().zip(&exact).filter(|(x, y)| x == y).count();
        assert!(agree as f64 / z.len() as f64 > 0.95);
    }

    #[test]
    fn errors_carry_positions() {
        let spa = IidSpa::new(Pmf::new(vec![0.5, 0.5, 0.0]).unwrap());
        let err = filter_causal(&[0, 1, 2], &spa, &eq25(), &LossMatrix::hamming(3)).unwrap_err();
        assert_eq!(
            err,
            Error::ZeroProbabilityObservation {
                symbol: 2,
                position: Some(2)
            }
        );
        let spa = IidSpa::new(Pmf::uniform(3));
        assert!(matches!(
            filter_delayed(&[0], &spa, &eq25(), &LossMatrix::hamming(3), 20, Marginal::default()),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn output_length_matches_input() {
        let spa = IidSpa::new(Pmf::uniform(3));
        let z = random_seq(3, 57, 2);
        let ch = eq25();
        let loss = LossMatrix::hamming(3);
        for k in -3..=3 {
            let out = filter(&z, &spa, &ch, &loss, FilterMode::from_offset(k), false).unwrap();
            assert_eq!(out.estimates.len(), z.len());
            assert!(out.estimates.iter().all(|&e| e < 3));
        }
    }
}
