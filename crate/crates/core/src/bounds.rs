//! Numerical evaluation of the excess-loss bounds, the mutual-information
//! upper bounds and the φ-based lower bounds, with exhaustive enumeration
//! supplying both sides of each inequality for small `n`.
//!
//! Entropies and divergences are accumulated in nats. Functions whose name
//! ends in `_bits` convert at the boundary; KL inputs to the excess-loss
//! formulas stay in nats because Pinsker's inequality is stated that way.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use crate::channel::ChannelMatrix;
use crate::enumerate::{count, Odometer};
use crate::error::{Error, Result};
use crate::filters::{filter, FilterMode, Marginal};
use crate::hmm::HmmModel;
use crate::math::{self, KahanSum};
use crate::rng::{mix_seed, seeded};
use crate::spa::Spa;
use crate::types::LossMatrix;

/// Default cap on enumerated joint outcomes.
pub const DEFAULT_BUDGET: f64 = 1e8;

/// Loss of the form `Λ(x, x') = ρ((x - x') mod m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtractiveLoss {
    rho: Vec<f64>,
}

impl SubtractiveLoss {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.len() < 2 {
            return Err(Error::InvalidParameter("need at least two difference classes".into()));
        }
        if rho[0] != 0.0 {
            return Err(Error::InvalidParameter("rho(0) must be 0".into()));
        }
        if rho.iter().any(|&r| r < 0.0 || !r.is_finite()) {
            return Err(Error::InvalidParameter("rho must be finite and nonnegative".into()));
        }
        Ok(Self { rho })
    }

    pub fn hamming(m: usize) -> Self {
        let mut rho = vec![1.0; m.max(2)];
        rho[0] = 0.0;
        Self { rho }
    }

    pub fn m(&self) -> usize {
        self.rho.len()
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `(1/m) Σ ρ(i)`: the loss of a uniform difference, where φ tops out.
    pub fn mean(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.m() as f64
    }

    pub fn loss_matrix(&self) -> LossMatrix {
        let m = self.m();
        let entries = (0..m)
            .flat_map(|x| (0..m).map(move |e| (x, e)))
            .map(|(x, e)| self.rho[(x + m - e) % m])
            .collect();
        LossMatrix::new(m, m, entries).expect("subtractive loss is a valid loss matrix")
    }

    /// `p_i ∝ exp(-μ ρ_i)`; returns the expected ρ and the entropy in nats.
    fn tilt(&self, mu: f64) -> (f64, f64) {
        let w: Vec<f64> = self.rho.iter().map(|&r| math::exp(-mu * r)).collect();
        let z: f64 = w.iter().sum();
        let mut mean = 0.0;
        let mut h = 0.0;
        for (&wi, &r) in w.iter().zip(&self.rho) {
            let p = wi / z;
            mean += p * r;
            if p > 0.0 {
                h -= p * math::ln(p);
            }
        }
        (mean, h)
    }

    fn zero_classes(&self) -> usize {
        self.rho.iter().filter(|&&r| r == 0.0).count()
    }
}

const BISECTION_STEPS: usize = 200;

/// Smallest `μ` bracket end with tilted mean at most `target`.
fn mu_upper(loss: &SubtractiveLoss, below: impl Fn(f64, f64) -> bool) -> f64 {
    let mut hi = 1.0;
    while hi < 1e12 {
        let (mean, h) = loss.tilt(hi);
        if below(mean, h) {
            break;
        }
        hi *= 2.0;
    }
    hi
}

/// `φ(D)`: the largest entropy, in bits, of a difference `U` with
/// `E ρ(U) <= D`.
pub fn phi(d: f64, loss: &SubtractiveLoss) -> Result<f64> {
    if d < 0.0 || d.is_nan() {
        return Err(Error::InvalidParameter(format!("phi needs D >= 0, got {d}")));
    }
    if d >= loss.mean() {
        return Ok(math::log2(loss.m() as f64));
    }
    if d == 0.0 {
        return Ok(math::log2(loss.zero_classes() as f64));
    }
    let (mut lo, mut hi) = (0.0, mu_upper(loss, |mean, _| mean <= d));
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if loss.tilt(mid).0 > d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(math::nats_to_bits(loss.tilt(0.5 * (lo + hi)).1))
}

/// Inverse of [`phi`] on its increasing branch `[0, mean ρ]`.
pub fn phi_inverse(h: f64, loss: &SubtractiveLoss) -> Result<f64> {
    let top = math::log2(loss.m() as f64);
    if !(0.0..=top + 1e-12).contains(&h) {
        return Err(Error::InvalidParameter(format!(
            "phi_inverse needs 0 <= h <= {top}, got {h}"
        )));
    }
    Ok(phi_inverse_clamped(h, loss).0)
}

/// [`phi_inverse`] with out-of-range entropies clamped to the branch ends.
/// The flag reports whether clamping happened.
pub fn phi_inverse_clamped(h: f64, loss: &SubtractiveLoss) -> (f64, bool) {
    let top = math::log2(loss.m() as f64);
    let floor = math::log2(loss.zero_classes() as f64);
    if h >= top {
        return (loss.mean(), h > top + 1e-12);
    }
    if h <= floor {
        return (0.0, h < 0.0);
    }
    let target = math::bits_to_nats(h);
    // Entropy falls as μ grows.
    let (mut lo, mut hi) = (0.0, mu_upper(loss, |_, ent| ent <= target));
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if loss.tilt(mid).1 > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (loss.tilt(0.5 * (lo + hi)).0, false)
}

fn check_budget(outcomes: f64, budget: f64) -> Result<()> {
    if outcomes > budget {
        Err(Error::BudgetExceeded {
            required: outcomes,
            budget,
            hint: "reduce n or use sampled evaluation",
        })
    } else {
        Ok(())
    }
}

/// `β[s * nx + x] = P(Z_{t+1..t+len} = s | X_t = x)` for every `s` in
/// lexicographic order.
fn future_table(hmm: &HmmModel, len: usize) -> Vec<f64> {
    let (nx, nz) = (hmm.nx(), hmm.nz());
    let mut beta = vec![1.0; nx];
    for _ in 0..len {
        let rest = beta.len() / nx;
        let mut next = vec![0.0; nz * rest * nx];
        for s1 in 0..nz {
            for r in 0..rest {
                let idx = s1 * rest + r;
                for x in 0..nx {
                    let mut acc = 0.0;
                    for x2 in 0..nx {
                        acc += hmm.transition()[(x, x2)]
                            * hmm.emission()[(x2, s1)]
                            * beta[r * nx + x2];
                    }
                    next[idx * nx + x] = acc;
                }
            }
        }
        beta = next;
    }
    beta
}

/// Probability of stepping into `x` from `prev` (`None` at the start).
#[inline]
fn step_prob(hmm: &HmmModel, prev: Option<usize>, x: usize) -> f64 {
    match prev {
        None => hmm.initial()[x],
        Some(p) => hmm.transition()[(p, x)],
    }
}

/// Visits every positive-probability `(x^len, z^len)` prefix, passing the
/// last hidden state and the joint probability.
fn each_prefix(hmm: &HmmModel, len: usize, f: &mut impl FnMut(Option<usize>, f64)) {
    fn go(hmm: &HmmModel, left: usize, prev: Option<usize>, w: f64, f: &mut impl FnMut(Option<usize>, f64)) {
        if left == 0 {
            f(prev, w);
            return;
        }
        for x in 0..hmm.nx() {
            let wx = w * step_prob(hmm, prev, x);
            if wx == 0.0 {
                continue;
            }
            for z in 0..hmm.nz() {
                let wz = wx * hmm.emission()[(x, z)];
                if wz > 0.0 {
                    go(hmm, left - 1, Some(x), wz, f);
                }
            }
        }
    }
    go(hmm, len, None, 1.0, f);
}

/// `H(X^n, Z^{n+l})` in nats by enumeration of `(x^n, z^n)` with the
/// trailing `l` observations handled through [`future_table`].
fn joint_entropy_nats(hmm: &HmmModel, n: usize, l: usize) -> f64 {
    let nx = hmm.nx();
    let beta = future_table(hmm, l);
    // Entropy of the trailing observations given X_n.
    let tail: Vec<f64> = (0..nx)
        .map(|x| {
            beta.chunks_exact(nx)
                .map(|b| b[x])
                .filter(|&p| p > 0.0)
                .map(|p| -p * math::ln(p))
                .sum()
        })
        .collect();
    let mut acc = KahanSum::new();
    each_prefix(hmm, n, &mut |last, w| {
        acc.add(-w * math::ln(w));
        if let Some(x) = last {
            acc.add(w * tail[x]);
        }
    });
    acc.value()
}

/// `H(Z^len)` in nats, enumerating observation sequences with an
/// unnormalized forward vector.
fn observation_entropy_nats(hmm: &HmmModel, len: usize) -> f64 {
    fn go(hmm: &HmmModel, left: usize, alpha: Option<&[f64]>, acc: &mut KahanSum) {
        let pred = match alpha {
            None => hmm.initial().as_slice().to_vec(),
            Some(a) => hmm.step(a),
        };
        for z in 0..hmm.nz() {
            let next: Vec<f64> = pred
                .iter()
                .enumerate()
                .map(|(x, p)| p * hmm.emission()[(x, z)])
                .collect();
            let p: f64 = next.iter().sum();
            if p <= 0.0 {
                continue;
            }
            if left == 1 {
                acc.add(-p * math::ln(p));
            } else {
                go(hmm, left - 1, Some(&next), acc);
            }
        }
    }
    if len == 0 {
        return 0.0;
    }
    let mut acc = KahanSum::new();
    go(hmm, len, None, &mut acc);
    acc.value()
}

/// `H(X^n)` in nats by enumeration of hidden paths.
fn hidden_entropy_nats(hmm: &HmmModel, n: usize) -> f64 {
    fn go(hmm: &HmmModel, left: usize, prev: Option<usize>, w: f64, acc: &mut KahanSum) {
        if left == 0 {
            acc.add(-w * math::ln(w));
            return;
        }
        for x in 0..hmm.nx() {
            let wx = w * step_prob(hmm, prev, x);
            if wx > 0.0 {
                go(hmm, left - 1, Some(x), wx, acc);
            }
        }
    }
    let mut acc = KahanSum::new();
    go(hmm, n, None, 1.0, &mut acc);
    acc.value()
}

/// `(1/n) H(X^n ‖ Z^{n+l}) = (1/n) Σ_t H(X_t | X^{t-1}, Z^{t+l})` in bits
/// per symbol, by enumerating every conditioning prefix.
pub fn causally_conditioned_entropy(hmm: &HmmModel, n: usize, l: usize, budget: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let (nx, nz) = (hmm.nx(), hmm.nz());
    check_budget(count(nx, n) * count(nz, n + l), budget)?;
    let beta = future_table(hmm, l);
    let mut total = KahanSum::new();
    let mut p = vec![0.0; nx];
    for t in 1..=n {
        each_prefix(hmm, t - 1, &mut |prev, w| {
            for zt in 0..nz {
                for fut in beta.chunks_exact(nx) {
                    let mut q = 0.0;
                    for x in 0..nx {
                        p[x] = w * step_prob(hmm, prev, x) * hmm.emission()[(x, zt)] * fut[x];
                        q += p[x];
                    }
                    for &px in &p {
                        if px > 0.0 {
                            total.add(px * math::ln(q / px));
                        }
                    }
                }
            }
        });
    }
    Ok(math::nats_to_bits(total.value()) / n as f64)
}

/// `(1/n) H(X^n | Z^n)` in bits per symbol.
pub fn conditional_entropy_full(hmm: &HmmModel, n: usize, budget: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    check_budget(count(hmm.nx() * hmm.nz(), n), budget)?;
    let h = joint_entropy_nats(hmm, n, 0) - observation_entropy_nats(hmm, n);
    Ok(math::nats_to_bits(h) / n as f64)
}

/// `(1/n) I(X^n ; Z^{n+l})` in bits per symbol.
pub fn mutual_information(hmm: &HmmModel, n: usize, l: usize, budget: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    check_budget(count(hmm.nx() * hmm.nz(), n) * count(hmm.nz(), l), budget)?;
    let i = hidden_entropy_nats(hmm, n) + observation_entropy_nats(hmm, n + l)
        - joint_entropy_nats(hmm, n, l);
    Ok(math::nats_to_bits(i.max(0.0)) / n as f64)
}

/// Divergence estimate between the law of `Z^n` and an SPA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    /// `D(P_{Z^n} ‖ Q_{Z^n})` in nats.
    pub total_nats: f64,
    pub per_symbol_nats: f64,
    /// Standard error of `total_nats`; `None` for exact evaluation.
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Exact { budget: f64 },
    Sampled { runs: usize, seed: u64 },
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation::Exact {
            budget: DEFAULT_BUDGET,
        }
    }
}

/// `D(P_{Z^n} ‖ Q_{Z^n})` for the observation law of `hmm` against `spa`.
/// Sampled mode averages `ln P(z^n) / Q(z^n)` over draws from the model.
pub fn kl_rate<S: Spa>(hmm: &HmmModel, spa: &S, n: usize, mode: Evaluation) -> Result<KlEstimate> {
    if spa.alphabet_size() != hmm.nz() {
        return Err(Error::DimensionMismatch {
            expected: hmm.nz(),
            found: spa.alphabet_size(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let total = match mode {
        Evaluation::Exact { budget } => {
            check_budget(count(hmm.nz(), n), budget)?;
            let mut acc = KahanSum::new();
            kl_exact(hmm, spa, n, None, &spa.start(), 0.0, &mut acc);
            let total = acc.value();
            KlEstimate {
                total_nats: if total.is_nan() { f64::INFINITY } else { total.max(0.0) },
                per_symbol_nats: 0.0,
                stderr: None,
            }
        }
        Evaluation::Sampled { runs, seed } => {
            if runs < 2 {
                return Err(Error::InvalidParameter("sampled KL needs at least two runs".into()));
            }
            let mut samples = Vec::with_capacity(runs);
            let mut q = vec![0.0; hmm.nz()];
            for r in 0..runs {
                let mut rng = seeded(seed, r as u64);
                let (_, z) = hmm.sample(n, &mut rng);
                let fwd = hmm.forward(&z)?;
                let mut s = spa.start();
                let mut llr = 0.0;
                for (t, &zt) in z.iter().enumerate() {
                    spa.predict_into(&s, &mut q);
                    llr += math::ln(fwd.pred_z(t)[zt]) - math::ln(q[zt]);
                    s = spa.advance(&s, zt);
                }
                samples.push(llr);
            }
            let (mean, se) = mean_stderr(&samples);
            KlEstimate {
                total_nats: mean,
                per_symbol_nats: 0.0,
                stderr: Some(se),
            }
        }
    };
    Ok(KlEstimate {
        per_symbol_nats: total.total_nats / n as f64,
        ..total
    })
}

fn kl_exact<S: Spa>(
    hmm: &HmmModel,
    spa: &S,
    left: usize,
    alpha: Option<&[f64]>,
    state: &S::State,
    log_ratio: f64,
    acc: &mut KahanSum,
) {
    let pred = match alpha {
        None => hmm.initial().as_slice().to_vec(),
        Some(a) => hmm.step(a),
    };
    let mut q = vec![0.0; hmm.nz()];
    spa.predict_into(state, &mut q);
    let mass: f64 = alpha.map_or(1.0, |a| a.iter().sum());
    for (z, &qz) in q.iter().enumerate() {
        let next: Vec<f64> = pred
            .iter()
            .enumerate()
            .map(|(x, p)| p * hmm.emission()[(x, z)])
            .collect();
        let p: f64 = next.iter().sum();
        if p <= 0.0 {
            continue;
        }
        if qz <= 0.0 {
            acc.add(f64::INFINITY);
            return;
        }
        let lr = log_ratio + math::ln(p / mass) - math::ln(qz);
        if left == 1 {
            acc.add(p * lr);
        } else {
            kl_exact(hmm, spa, left - 1, Some(&next), &spa.advance(state, z), lr, acc);
        }
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var / n))
}

/// Which excess-loss bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcessKind {
    Causal,
    Delay { d: usize },
    Lookahead { l: usize },
    MonteCarlo { d: usize, trials: usize },
}

/// Right-hand side of the excess-loss bounds. `kl_total` is
/// `D(P_{Z^n} ‖ Q_{Z^n})` in nats, or the `n + l` version for lookahead.
pub fn excess_bound(kind: ExcessKind, ch: &ChannelMatrix, lambda_max: f64, n: usize, kl_total: f64) -> f64 {
    let c = ch.bound_constants();
    let rate = kl_total / n as f64;
    let sqrt2 = core::f64::consts::SQRT_2;
    match kind {
        ExcessKind::Causal => sqrt2 * c.c1 * lambda_max * math::sqrt(rate),
        ExcessKind::Delay { d } => sqrt2 * c.c1 * lambda_max * math::sqrt(d as f64 * rate),
        ExcessKind::Lookahead { l } => sqrt2 * c.c1 * lambda_max * math::sqrt((l + 1) as f64 * rate),
        ExcessKind::MonteCarlo { d, trials } => {
            lambda_max * (c.c2 * math::sqrt(d as f64 * rate) + c.c3 / math::sqrt(trials as f64))
        }
    }
}

/// Right-hand side of the mutual-information bounds; `info_bits` is
/// `(1/n) I(X^n; Z^n)` (or `Z^{n+l}`) in bits per symbol.
pub fn mutual_information_bound(kind: ExcessKind, ch: &ChannelMatrix, lambda_max: f64, info_bits: f64) -> f64 {
    excess_bound(kind, ch, lambda_max, 1, math::bits_to_nats(info_bits))
}

/// Bound on the mean L1 error of an `M`-trial empirical marginal.
pub fn mc_l1_bound(alphabet_size: usize, trials: usize) -> f64 {
    libm::pow(2.0, alphabet_size as f64) * math::sqrt(core::f64::consts::PI / 2.0) / math::sqrt(trials as f64)
}

/// Expected per-symbol losses of a universal filter and of the
/// Bayes-optimal filter with the same information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPair {
    pub universal: f64,
    pub optimal: f64,
    /// Standard error of `universal - optimal` in sampled mode.
    pub stderr: Option<f64>,
}

impl LossPair {
    pub fn excess(&self) -> f64 {
        self.universal - self.optimal
    }
}

/// Expected losses over the first `n` positions when `truth` generates the
/// data and `spa` drives the filter in `mode`. Lookahead filters see
/// `Z^{n+l}`, so no window is cut short inside the scored range.
pub fn expected_losses<S: Spa>(
    truth: &HmmModel,
    spa: &S,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    mode: FilterMode,
    n: usize,
    eval: Evaluation,
) -> Result<LossPair> {
    let k = mode.offset();
    let len = n + k.max(0) as usize;
    let score = |z: &[usize], seed_salt: u64| -> Result<(f64, f64)> {
        let mode = match mode {
            FilterMode::Delay {
                d,
                marginal: Marginal::MonteCarlo { trials, seed, gamma },
            } => FilterMode::Delay {
                d,
                marginal: Marginal::MonteCarlo {
                    trials,
                    seed: mix_seed(seed, seed_salt),
                    gamma,
                },
            },
            m => m,
        };
        let post = truth.posteriors(z, k)?;
        let u = filter(z, spa, ch, loss, mode, false)?.estimates;
        let nx = truth.nx();
        let (mut lu, mut lo) = (0.0, 0.0);
        for t in 0..n {
            let p = &post[t * nx..(t + 1) * nx];
            lu += loss.expected_loss(u[t], p);
            lo += loss.expected_loss(loss.bayes_response_unchecked(p), p);
        }
        Ok((lu / n as f64, lo / n as f64))
    };
    match eval {
        Evaluation::Exact { budget } => {
            check_budget(count(truth.nz(), len), budget)?;
            let (mut su, mut so) = (KahanSum::new(), KahanSum::new());
            let mut zs = Odometer::new(truth.nz(), len);
            let mut index = 0u64;
            while let Some(z) = zs.next() {
                index += 1;
                let Ok(fwd) = truth.forward(z) else { continue };
                let p: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(t, &zt)| fwd.pred_z(t)[zt])
                    .product();
                if p == 0.0 {
                    continue;
                }
                let (lu, lo) = score(z, index)?;
                su.add(p * lu);
                so.add(p * lo);
            }
            Ok(LossPair {
                universal: su.value(),
                optimal: so.value(),
                stderr: None,
            })
        }
        Evaluation::Sampled { runs, seed } => {
            let mut us = Vec::with_capacity(runs);
            let mut os = Vec::with_capacity(runs);
            let mut diffs = Vec::with_capacity(runs);
            for r in 0..runs {
                let (_, z) = truth.sample(len, &mut seeded(seed, r as u64));
                let (lu, lo) = score(&z, r as u64)?;
                us.push(lu);
                os.push(lo);
                diffs.push(lu - lo);
            }
            Ok(LossPair {
                universal: mean_stderr(&us).0,
                optimal: mean_stderr(&os).0,
                stderr: Some(mean_stderr(&diffs).1),
            })
        }
    }
}

/// Expected per-symbol loss of the Bayes-optimal filter at offset `k`
/// (delay for `k < 0`), by enumeration of `Z^{n + max(k, 0)}`.
pub fn optimal_expected_loss(hmm: &HmmModel, loss: &LossMatrix, n: usize, k: i64, budget: f64) -> Result<f64> {
    let len = n + k.max(0) as usize;
    check_budget(count(hmm.nz(), len), budget)?;
    let nx = hmm.nx();
    let mut acc = KahanSum::new();
    let mut zs = Odometer::new(hmm.nz(), len);
    while let Some(z) = zs.next() {
        let Ok(fwd) = hmm.forward(z) else { continue };
        let p: f64 = z
            .iter()
            .enumerate()
            .map(|(t, &zt)| fwd.pred_z(t)[zt])
            .product();
        if p == 0.0 {
            continue;
        }
        let post = hmm.posteriors(z, k)?;
        let l: f64 = post
            .chunks_exact(nx)
            .take(n)
            .map(|q| loss.expected_loss(loss.bayes_response_unchecked(q), q))
            .sum();
        acc.add(p * l / n as f64);
    }
    Ok(acc.value())
}

/// Expected per-symbol loss of the full-sequence (non-causal) Bayes
/// denoiser, `X_t` estimated from all of `Z^n`.
pub fn denoiser_expected_loss(hmm: &HmmModel, loss: &LossMatrix, n: usize, budget: f64) -> Result<f64> {
    check_budget(count(hmm.nz(), n), budget)?;
    let nx = hmm.nx();
    let mut acc = KahanSum::new();
    let mut zs = Odometer::new(hmm.nz(), n);
    while let Some(z) = zs.next() {
        let Ok(fwd) = hmm.forward(z) else { continue };
        let p: f64 = z
            .iter()
            .enumerate()
            .map(|(t, &zt)| fwd.pred_z(t)[zt])
            .product();
        let post = hmm.smooth_from(&fwd, n);
        let l: f64 = post
            .chunks_exact(nx)
            .map(|q| loss.expected_loss(loss.bayes_response_unchecked(q), q))
            .sum();
        acc.add(p * l / n as f64);
    }
    Ok(acc.value())
}

/// Theorems and corollaries the driver can check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TheoremId {
    /// Causal excess loss.
    T1,
    /// Delayed excess loss.
    T2,
    /// Lookahead excess loss.
    T3,
    /// Mutual-information bound, causal.
    T4,
    /// Mutual-information bound, delay or lookahead.
    T5,
    /// Causally conditioned entropy lower bound.
    T6,
    /// Monte Carlo delayed excess loss.
    T8,
    /// Individual-sequence excess loss.
    C1,
    /// Full-sequence conditional entropy lower bound.
    C2,
}

impl TheoremId {
    pub const ALL: [TheoremId; 9] = [
        TheoremId::T1,
        TheoremId::T2,
        TheoremId::T3,
        TheoremId::T4,
        TheoremId::T5,
        TheoremId::T6,
        TheoremId::T8,
        TheoremId::C1,
        TheoremId::C2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TheoremId::T1 => "1",
            TheoremId::T2 => "2",
            TheoremId::T3 => "3",
            TheoremId::T4 => "4",
            TheoremId::T5 => "5",
            TheoremId::T6 => "6",
            TheoremId::T8 => "8",
            TheoremId::C1 => "c1",
            TheoremId::C2 => "c2",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().trim_start_matches(['t', 'T']);
        TheoremId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(key) || id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown theorem {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `measured <= bound`.
    Upper,
    /// `measured >= bound`.
    Lower,
}

/// Both sides of one inequality. `slack >= 0` means it holds: for upper
/// bounds `slack = bound - measured`, for lower bounds
/// `slack = measured - bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub theorem: TheoremId,
    pub direction: Direction,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    /// Standard error of `measured` when it was estimated by sampling.
    pub stderr: Option<f64>,
    /// Named intermediate quantities (divergences, entropies, constants).
    pub details: Vec<(&'static str, f64)>,
}

impl BoundReport {
    fn new(theorem: TheoremId, direction: Direction, measured: f64, bound: f64) -> Self {
        let slack = match direction {
            Direction::Upper => bound - measured,
            Direction::Lower => measured - bound,
        };
        Self {
            theorem,
            direction,
            measured,
            bound,
            slack,
            stderr: None,
            details: Vec::new(),
        }
    }

    fn with(mut self, name: &'static str, value: f64) -> Self {
        self.details.push((name, value));
        self
    }

    pub fn detail(&self, name: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }

    /// Holds within `tol`, widened to two standard errors when sampled.
    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol - 2.0 * self.stderr.unwrap_or(0.0)
    }
}

/// Inputs to [`verify_theorem`]. `model` is the law behind the SPA the
/// filter uses; leaving it `None` uses the truth itself.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub truth: HmmModel,
    pub model: Option<HmmModel>,
    /// Channel the universal filter inverts. The lower bounds do not use
    /// it, so it may be absent for models without a square emission.
    pub channel: Option<ChannelMatrix>,
    pub loss: LossMatrix,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub trials: usize,
    pub seed: u64,
    /// Clean sequence for the individual-sequence bound.
    pub x: Option<Vec<usize>>,
    pub eval: Evaluation,
}

impl Scenario {
    pub fn new(truth: HmmModel, channel: Option<ChannelMatrix>, loss: LossMatrix, n: usize) -> Self {
        Self {
            truth,
            model: None,
            channel,
            loss,
            n,
            d: 1,
            l: 0,
            trials: 1000,
            seed: 0,
            x: None,
            eval: Evaluation::default(),
        }
    }

    fn budget(&self) -> f64 {
        match self.eval {
            Evaluation::Exact { budget } => budget,
            Evaluation::Sampled { .. } => DEFAULT_BUDGET,
        }
    }
}

/// Excess-loss bound check for any SPA.
#[allow(clippy::too_many_arguments)]
pub fn verify_excess<S: Spa>(
    theorem: TheoremId,
    kind: ExcessKind,
    truth: &HmmModel,
    spa: &S,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    n: usize,
    seed: u64,
    eval: Evaluation,
) -> Result<BoundReport> {
    let (mode, kl_len) = match kind {
        ExcessKind::Causal => (FilterMode::Causal, n),
        ExcessKind::Delay { d } => (
            FilterMode::Delay {
                d,
                marginal: Marginal::default(),
            },
            n,
        ),
        ExcessKind::Lookahead { l } => (FilterMode::Lookahead { l }, n + l),
        ExcessKind::MonteCarlo { d, trials } => (
            FilterMode::Delay {
                d,
                marginal: Marginal::MonteCarlo {
                    trials,
                    seed,
                    gamma: 0.5,
                },
            },
            n,
        ),
    };
    let kl_eval = match eval {
        Evaluation::Exact { budget } if count(truth.nz(), kl_len) <= budget => eval,
        Evaluation::Exact { .. } => Evaluation::Sampled {
            runs: 1000,
            seed: mix_seed(seed, 1),
        },
        s => s,
    };
    let kl = kl_rate(truth, spa, kl_len, kl_eval)?;
    let losses = expected_losses(truth, spa, ch, loss, mode, n, eval)?;
    let bound = excess_bound(kind, ch, loss.lambda_max(), n, kl.total_nats);
    let mut r = BoundReport::new(theorem, Direction::Upper, losses.excess(), bound)
        .with("kl_nats", kl.total_nats)
        .with("universal_loss", losses.universal)
        .with("optimal_loss", losses.optimal)
        .with("c1", ch.c1());
    r.stderr = losses.stderr;
    Ok(r)
}

/// Individual-sequence check: expected loss of the causal filter on a
/// fixed clean sequence, over channel noise only.
pub fn verify_individual<S: Spa>(x: &[usize], spa: &S, ch: &ChannelMatrix, loss: &LossMatrix, budget: f64) -> Result<BoundReport> {
    if !loss.has_zero_per_row() {
        return Err(Error::InvalidParameter("loss needs a zero in every row".into()));
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidParameter("clean sequence is empty".into()));
    }
    let nz = ch.output_size();
    check_budget(count(nz, n), budget)?;
    let (mut el, mut kl) = (KahanSum::new(), KahanSum::new());
    let mut zs = Odometer::new(nz, n);
    let mut q = vec![0.0; nz];
    while let Some(z) = zs.next() {
        let p: f64 = x.iter().zip(z).map(|(&xi, &zi)| ch.prob(xi, zi)).product();
        if p == 0.0 {
            continue;
        }
        let mut s = spa.start();
        let mut lq = 0.0;
        for &zt in z {
            spa.predict_into(&s, &mut q);
            lq += math::ln(q[zt]);
            s = spa.advance(&s, zt);
        }
        kl.add(p * (math::ln(p) - lq));
        let est = filter(z, spa, ch, loss, FilterMode::Causal, false)?.estimates;
        let l: f64 = x.iter().zip(&est).map(|(&xi, &e)| loss.get(xi, e)).sum();
        el.add(p * l / n as f64);
    }
    let kl = kl.value().max(0.0);
    let bound = excess_bound(ExcessKind::Causal, ch, loss.lambda_max(), n, kl);
    Ok(BoundReport::new(TheoremId::C1, Direction::Upper, el.value(), bound).with("kl_nats", kl))
}

/// Mutual-information upper bound on the optimal loss at offset `k`.
pub fn verify_mutual_information(
    hmm: &HmmModel,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    n: usize,
    k: i64,
    budget: f64,
) -> Result<BoundReport> {
    if !loss.has_zero_per_row() {
        return Err(Error::InvalidParameter("loss needs a zero in every row".into()));
    }
    let (kind, extra, theorem) = match k {
        0 => (ExcessKind::Causal, 0, TheoremId::T4),
        k if k < 0 => (ExcessKind::Delay { d: k.unsigned_abs() as usize }, 0, TheoremId::T5),
        k => (ExcessKind::Lookahead { l: k as usize }, k as usize, TheoremId::T5),
    };
    let info = mutual_information(hmm, n, extra, budget)?;
    let measured = optimal_expected_loss(hmm, loss, n, k, budget)?;
    let bound = mutual_information_bound(kind, ch, loss.lambda_max(), info);
    Ok(BoundReport::new(theorem, Direction::Upper, measured, bound)
        .with("info_bits", info)
        .with("c1", ch.c1()))
}

/// Lower bound via φ. `l = Some(l)` checks the causally conditioned
/// entropy with lookahead `l`; `None` checks the full-sequence denoiser
/// against `H(X^n | Z^n)`.
pub fn verify_lower(hmm: &HmmModel, loss: &SubtractiveLoss, n: usize, l: Option<usize>, budget: f64) -> Result<BoundReport> {
    if hmm.nx() != loss.m() {
        return Err(Error::DimensionMismatch {
            expected: hmm.nx(),
            found: loss.m(),
        });
    }
    let lm = loss.loss_matrix();
    let (theorem, entropy, measured) = match l {
        Some(l) => (
            TheoremId::T6,
            causally_conditioned_entropy(hmm, n, l, budget)?,
            optimal_expected_loss(hmm, &lm, n, l as i64, budget)?,
        ),
        None => (
            TheoremId::C2,
            conditional_entropy_full(hmm, n, budget)?,
            denoiser_expected_loss(hmm, &lm, n, budget)?,
        ),
    };
    let (bound, clamped) = phi_inverse_clamped(entropy, loss);
    let phi_measured = phi(measured, loss)?;
    Ok(BoundReport::new(theorem, Direction::Lower, measured, bound)
        .with("entropy_bits", entropy)
        .with("phi_of_measured", phi_measured)
        .with("clamped", if clamped { 1.0 } else { 0.0 }))
}

/// Umbrella driver: evaluates both sides of the named inequality.
pub fn verify_theorem(theorem: TheoremId, sc: &Scenario) -> Result<BoundReport> {
    let model = sc.model.as_ref().unwrap_or(&sc.truth);
    let spa = model.true_spa();
    let budget = sc.budget();
    let channel = || {
        sc.channel
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("theorem {theorem} needs a channel")))
    };
    match theorem {
        TheoremId::T1 => verify_excess(theorem, ExcessKind::Causal, &sc.truth, &spa, channel()?, &sc.loss, sc.n, sc.seed, sc.eval),
        TheoremId::T2 => verify_excess(theorem, ExcessKind::Delay { d: sc.d }, &sc.truth, &spa, channel()?, &sc.loss, sc.n, sc.seed, sc.eval),
        TheoremId::T3 => verify_excess(theorem, ExcessKind::Lookahead { l: sc.l }, &sc.truth, &spa, channel()?, &sc.loss, sc.n, sc.seed, sc.eval),
        TheoremId::T8 => verify_excess(
            theorem,
            ExcessKind::MonteCarlo {
                d: sc.d,
                trials: sc.trials,
            },
            &sc.truth,
            &spa,
            channel()?,
            &sc.loss,
            sc.n,
            sc.seed,
            sc.eval,
        ),
        TheoremId::C1 => {
            let x = match &sc.x {
                Some(x) => x.clone(),
                None => {
                    let mut rng = seeded(sc.seed, 0);
                    sc.truth.sample(sc.n, &mut rng).0
                }
            };
            verify_individual(&x, &spa, channel()?, &sc.loss, budget)
        }
        TheoremId::T4 => verify_mutual_information(&sc.truth, channel()?, &sc.loss, sc.n, 0, budget),
        TheoremId::T5 => {
            let k = if sc.l > 0 { sc.l as i64 } else { -(sc.d as i64) };
            verify_mutual_information(&sc.truth, channel()?, &sc.loss, sc.n, k, budget)
        }
        TheoremId::T6 | TheoremId::C2 => {
            let m = sc.truth.nx();
            let rho: Vec<f64> = (0..m).map(|i| sc.loss.get(i, 0)).collect();
            let sub = SubtractiveLoss::new(rho)?;
            if sub.loss_matrix() != sc.loss {
                return Err(Error::InvalidParameter("loss is not subtractive".into()));
            }
            let l = (theorem == TheoremId::T6).then_some(sc.l);
            verify_lower(&sc.truth, &sub, sc.n, l, budget)
        }
    }
}

/// Draws a random HMM with an invertible square channel, for property
/// checks of the bounds.
pub fn random_hmm<R: RngCore + ?Sized>(nx: usize, rng: &mut R) -> Result<(HmmModel, ChannelMatrix)> {
    use crate::rng::uniform01;
    use crate::types::Alphabet;
    let row = |rng: &mut R, boost: Option<usize>| -> Vec<f64> {
        let mut w: Vec<f64> = (0..nx).map(|_| uniform01(rng) + 0.05).collect();
        if let Some(i) = boost {
            w[i] += nx as f64;
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    };
    for _ in 0..100 {
        let trans: Vec<Vec<f64>> = (0..nx).map(|_| row(rng, None)).collect();
        let emis: Vec<Vec<f64>> = (0..nx).map(|i| row(rng, Some(i))).collect();
        let init = row(rng, None);
        let alphabet = Alphabet::indexed(nx)?;
        if let Ok(ch) = ChannelMatrix::new(alphabet.clone(), alphabet, &emis) {
            return Ok((HmmModel::with_channel(&trans, &ch, init)?, ch));
        }
    }
    Err(Error::InvalidParameter("could not draw an invertible channel".into()))
}
