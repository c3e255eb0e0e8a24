//! Sequential probability assignments and the conditionals derived from them.
//!
//! An SPA is modelled as a state machine over the noisy alphabet: the state
//! summarizes the context `z^{t-1}`, and [`Spa::predict_into`] gives
//! `Q(· | z^{t-1})`. Delay and lookahead conditionals only ever extend a
//! context, so they work from a cloned state instead of replaying the
//! context from scratch.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::error::{Error, Result};
use crate::math::{self, KahanSum};
use crate::rng::sample_index;
use crate::types::{validate_symbols, Pmf};

/// Default cap on the number of gap sequences enumerated by
/// [`delayed_marginal_exact`].
pub const DEFAULT_EXACT_BUDGET: u64 = 1_000_000;

pub trait Spa {
    type State: Clone;

    fn alphabet_size(&self) -> usize;

    /// State for the empty context.
    fn start(&self) -> Self::State;

    /// State after appending `symbol` to the context summarized by `state`.
    fn advance(&self, state: &Self::State, symbol: usize) -> Self::State;

    /// Writes `Q(· | context)` into `out` (length [`Spa::alphabet_size`]).
    fn predict_into(&self, state: &Self::State, out: &mut [f64]);

    fn predict(&self, state: &Self::State) -> Pmf {
        let mut out = vec![0.0; self.alphabet_size()];
        self.predict_into(state, &mut out);
        Pmf::from_normalized(out)
    }

    fn state_after(&self, context: &[usize]) -> Self::State {
        context
            .iter()
            .fold(self.start(), |s, &sym| self.advance(&s, sym))
    }

    /// `Q(Z_t | z^{t-1} = context)`.
    fn prob_next(&self, context: &[usize]) -> Pmf {
        self.predict(&self.state_after(context))
    }
}

impl<S: Spa + ?Sized> Spa for &S {
    type State = S::State;

    fn alphabet_size(&self) -> usize {
        (**self).alphabet_size()
    }
    fn start(&self) -> Self::State {
        (**self).start()
    }
    fn advance(&self, state: &Self::State, symbol: usize) -> Self::State {
        (**self).advance(state, symbol)
    }
    fn predict_into(&self, state: &Self::State, out: &mut [f64]) {
        (**self).predict_into(state, out)
    }
}

/// Context-free SPA: the same distribution at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct IidSpa {
    probs: Pmf,
}

impl IidSpa {
    pub fn new(probs: Pmf) -> Self {
        Self { probs }
    }
}

impl Spa for IidSpa {
    type State = ();

    fn alphabet_size(&self) -> usize {
        self.probs.len()
    }
    fn start(&self) {}
    fn advance(&self, _: &(), _: usize) {}
    fn predict_into(&self, _: &(), out: &mut [f64]) {
        out.copy_from_slice(self.probs.as_slice());
    }
}

/// Draws the next symbol from `Q(· | context)` by inverse CDF over the
/// alphabet order.
pub fn sample_next<S: Spa, R: RngCore + ?Sized>(
    spa: &S,
    context: &[usize],
    rng: &mut R,
) -> Result<usize> {
    validate_symbols(context, spa.alphabet_size())?;
    let p = spa.prob_next(context);
    Ok(sample_index(p.as_slice(), rng))
}

/// `Q(Z_t | z^{t-1}, z_{t+1}^{t+l})` by the chain rule:
/// `Q(a | past) · Π_k Q(future_k | past, a, future_{<k})`, normalized over `a`.
pub fn lookahead_conditional<S: Spa>(spa: &S, past: &[usize], future: &[usize]) -> Result<Pmf> {
    validate_symbols(past, spa.alphabet_size())?;
    validate_symbols(future, spa.alphabet_size())?;
    lookahead_from_state(spa, &spa.state_after(past), future)
}

/// [`lookahead_conditional`] starting from the state of the past context.
pub fn lookahead_from_state<S: Spa>(spa: &S, past: &S::State, future: &[usize]) -> Result<Pmf> {
    let k = spa.alphabet_size();
    let mut head = vec![0.0; k];
    spa.predict_into(past, &mut head);
    if future.is_empty() {
        return Ok(Pmf::from_normalized(head));
    }
    let mut buf = vec![0.0; k];
    // Accumulate in log space; long windows underflow otherwise.
    let mut logw = vec![f64::NEG_INFINITY; k];
    for (a, lw) in logw.iter_mut().enumerate() {
        if head[a] <= 0.0 {
            continue;
        }
        let mut acc = math::ln(head[a]);
        let mut s = spa.advance(past, a);
        for (i, &f) in future.iter().enumerate() {
            spa.predict_into(&s, &mut buf);
            if buf[f] <= 0.0 {
                acc = f64::NEG_INFINITY;
                break;
            }
            acc += math::ln(buf[f]);
            if i + 1 < future.len() {
                s = spa.advance(&s, f);
            }
        }
        *lw = acc;
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateLookahead { position: None });
    }
    let w: Vec<f64> = logw.iter().map(|&l| math::exp(l - max)).collect();
    Pmf::from_weights(w)
}

/// `Q(Z_t | z^{t-d})`: marginalizes the `d - 1` unseen symbols between the
/// context and `Z_t` by enumerating every gap sequence. Fails when
/// `|A_Z|^{d-1}` exceeds `budget`.
pub fn delayed_marginal_exact<S: Spa>(spa: &S, past: &[usize], d: usize, budget: u64) -> Result<Pmf> {
    validate_symbols(past, spa.alphabet_size())?;
    delayed_exact_from_state(spa, &spa.state_after(past), d, budget)
}

/// Number of gap sequences enumerated for delay `d`, or `None` on overflow.
pub fn gap_sequences(alphabet_size: usize, d: usize) -> Option<u64> {
    (alphabet_size as u64).checked_pow(u32::try_from(d.saturating_sub(1)).ok()?)
}

/// [`delayed_marginal_exact`] starting from the state of the past context.
pub fn delayed_exact_from_state<S: Spa>(
    spa: &S,
    past: &S::State,
    d: usize,
    budget: u64,
) -> Result<Pmf> {
    if d == 0 {
        return Err(Error::InvalidParameter("delay must be at least 1".into()));
    }
    let k = spa.alphabet_size();
    match gap_sequences(k, d) {
        Some(n) if n <= budget => {}
        n => {
            return Err(Error::BudgetExceeded {
                required: n.map_or(f64::INFINITY, |n| n as f64),
                budget: budget as f64,
                hint: "use Monte Carlo marginalization for this delay",
            })
        }
    }
    let mut acc = vec![KahanSum::new(); k];
    let mut buf = vec![0.0; k];
    // Depth-first over gap symbols; each frame holds the state reached and
    // the probability of the gap prefix that led there.
    let mut stack: Vec<(S::State, f64, usize)> = vec![(past.clone(), 1.0, d - 1)];
    while let Some((state, weight, remaining)) = stack.pop() {
        spa.predict_into(&state, &mut buf);
        if remaining == 0 {
            for (a, p) in acc.iter_mut().zip(&buf) {
                a.add(weight * p);
            }
            continue;
        }
        // Pushed in reverse so symbols are visited in alphabet order.
        let probs = buf.clone();
        for sym in (0..k).rev() {
            let w = weight * probs[sym];
            if w > 0.0 {
                stack.push((spa.advance(&state, sym), w, remaining - 1));
            }
        }
    }
    let w: Vec<f64> = acc.iter().map(KahanSum::value).collect();
    Pmf::from_weights(w)
}

/// Monte Carlo settings for delayed marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    /// Number of rollouts `M`.
    pub trials: usize,
    /// Additive smoothing applied to the terminal-symbol counts.
    pub gamma: f64,
}

/// Monte Carlo `Q(Z_t | z^{t-d})`: `trials` rollouts of `d` sampled symbols
/// from the context, returning `(N_a + γ) / (M + γ|A_Z|)` over the terminal
/// symbols.
pub fn delayed_marginal_mc<S: Spa, R: RngCore + ?Sized>(
    spa: &S,
    past: &[usize],
    d: usize,
    mc: MonteCarlo,
    rng: &mut R,
) -> Result<Pmf> {
    validate_symbols(past, spa.alphabet_size())?;
    delayed_mc_from_state(spa, &spa.state_after(past), d, mc, rng)
}

/// [`delayed_marginal_mc`] starting from the state of the past context.
pub fn delayed_mc_from_state<S: Spa, R: RngCore + ?Sized>(
    spa: &S,
    past: &S::State,
    d: usize,
    mc: MonteCarlo,
    rng: &mut R,
) -> Result<Pmf> {
    if d == 0 || mc.trials == 0 {
        return Err(Error::InvalidParameter(
            "Monte Carlo needs d >= 1 and at least one trial".into(),
        ));
    }
    if mc.gamma < 0.0 || !mc.gamma.is_finite() {
        return Err(Error::InvalidParameter("gamma must be finite and nonnegative".into()));
    }
    let k = spa.alphabet_size();
    let mut counts = vec![0u64; k];
    let mut buf = vec![0.0; k];
    for _ in 0..mc.trials {
        let mut s = past.clone();
        for step in 0..d {
            spa.predict_into(&s, &mut buf);
            let sym = sample_index(&buf, rng);
            if step + 1 == d {
                counts[sym] += 1;
            } else {
                s = spa.advance(&s, sym);
            }
        }
    }
    let denom = mc.trials as f64 + mc.gamma * k as f64;
    Ok(Pmf::from_normalized(
        counts
            .iter()
            .map(|&c| (c as f64 + mc.gamma) / denom)
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// First-order Markov law over the noisy alphabet, used as an exact SPA.
    struct MarkovSpa {
        init: Vec<f64>,
        trans: Vec<Vec<f64>>,
    }

    impl Spa for MarkovSpa {
        type State = Option<usize>;
        fn alphabet_size(&self) -> usize {
            self.init.len()
        }
        fn start(&self) -> Option<usize> {
            None
        }
        fn advance(&self, _: &Option<usize>, symbol: usize) -> Option<usize> {
            Some(symbol)
        }
        fn predict_into(&self, state: &Option<usize>, out: &mut [f64]) {
            match state {
                None => out.copy_from_slice(&self.init),
                Some(s) => out.copy_from_slice(&self.trans[*s]),
            }
        }
    }

    fn chain() -> MarkovSpa {
        MarkovSpa {
            init: vec![0.2, 0.5, 0.3],
            trans: vec![
                vec![0.7, 0.2, 0.1],
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.3, 0.4],
            ],
        }
    }

    /// Joint probability of a full sequence under the chain.
    fn joint(m: &MarkovSpa, seq: &[usize]) -> f64 {
        let mut p = m.init[seq[0]];
        for w in seq.windows(2) {
            p *= m.trans[w[0]][w[1]];
        }
        p
    }

    #[test]
    fn lookahead_empty_future_is_prob_next() {
        let m = chain();
        let a = lookahead_conditional(&m, &[0, 2], &[]).unwrap();
        assert_eq!(a, m.prob_next(&[0, 2]));
    }

    #[test]
    fn lookahead_iid_ignores_future() {
        let q = Pmf::new(vec![0.1, 0.6, 0.3]).unwrap();
        let spa = IidSpa::new(q.clone());
        let out = lookahead_conditional(&spa, &[1, 2], &[0, 0, 2]).unwrap();
        for (a, b) in out.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn lookahead_matches_joint_enumeration() {
        let m = chain();
        let past = [1, 0];
        let future = [2, 1];
        let out = lookahead_conditional(&m, &past, &future).unwrap();
        let w: Vec<f64> = (0..3)
            .map(|a| {
                let mut s = past.to_vec();
                s.push(a);
                s.extend_from_slice(&future);
                joint(&m, &s)
            })
            .collect();
        let total: f64 = w.iter().sum();
        for (a, b) in out.as_slice().iter().zip(&w) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }

    #[test]
    fn delayed_exact_d1_is_prob_next() {
        let m = chain();
        let out = delayed_marginal_exact(&m, &[2], 1, DEFAULT_EXACT_BUDGET).unwrap();
        assert_eq!(out.as_slice(), m.prob_next(&[2]).as_slice());
    }

    #[test]
    fn delayed_exact_matches_joint_enumeration() {
        let m = chain();
        for d in 2..=4 {
            let past = [0, 1];
            let out = delayed_marginal_exact(&m, &past, d, DEFAULT_EXACT_BUDGET).unwrap();
            let mut w = [0.0; 3];
            let total_paths = 3usize.pow(d as u32);
            for code in 0..total_paths {
                let mut s = past.to_vec();
                let mut c = code;
                for _ in 0..d {
                    s.push(c % 3);
                    c /= 3;
                }
                w[*s.last().unwrap()] += joint(&m, &s);
            }
            let total: f64 = w.iter().sum();
            for (a, b) in out.as_slice().iter().zip(w) {
                assert!((a - b / total).abs() < 1e-12, "d={d}");
            }
        }
    }

    #[test]
    fn delayed_exact_iid_is_marginal() {
        let q = Pmf::new(vec![0.25, 0.25, 0.5]).unwrap();
        let spa = IidSpa::new(q.clone());
        let out = delayed_marginal_exact(&spa, &[0], 5, DEFAULT_EXACT_BUDGET).unwrap();
        for (a, b) in out.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn delayed_exact_budget() {
        let m = chain();
        assert!(matches!(
            delayed_marginal_exact(&m, &[], 14, DEFAULT_EXACT_BUDGET),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(delayed_marginal_exact(&m, &[], 13, DEFAULT_EXACT_BUDGET).is_ok());
    }

    #[test]
    fn mc_deterministic_spa() {
        let spa = IidSpa::new(Pmf::point_mass(3, 1));
        for trials in [1, 10, 1000] {
            let mut rng = seeded(3, 0);
            let mc = MonteCarlo { trials, gamma: 0.5 };
            let out = delayed_marginal_mc(&spa, &[], 3, mc, &mut rng).unwrap();
            let denom = trials as f64 + 1.5;
            assert_eq!(
                out.as_slice(),
                &[0.5 / denom, (trials as f64 + 0.5) / denom, 0.5 / denom]
            );
        }
    }

    #[test]
    fn mc_reproducible() {
        let m = chain();
        let mc = MonteCarlo { trials: 500, gamma: 0.5 };
        let a = delayed_marginal_mc(&m, &[1], 3, mc, &mut seeded(11, 2)).unwrap();
        let b = delayed_marginal_mc(&m, &[1], 3, mc, &mut seeded(11, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_next_frequencies() {
        let spa = IidSpa::new(Pmf::uniform(3));
        let mut rng = seeded(5, 0);
        let mut counts = [0usize; 3];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_next(&spa, &[], &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn context_validation() {
        let m = chain();
        assert!(matches!(
            lookahead_conditional(&m, &[0, 3], &[]),
            Err(Error::SymbolOutOfRange { position: 1, .. })
        ));
    }
}
