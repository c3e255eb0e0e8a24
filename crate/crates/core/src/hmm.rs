//! Hidden Markov reference models: the Bayes-optimal filters obtained from
//! forward and backward recursions, and the true predictive law of the
//! noisy process exposed as an SPA.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::sample_index;
use crate::spa::Spa;
use crate::types::{validate_symbols, LossMatrix, Pmf, PMF_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    transition: Matrix,
    emission: Matrix,
    initial: Pmf,
}

/// Output of [`HmmModel::forward`]; all posteriors flattened row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    nx: usize,
    nz: usize,
    /// `α(X_t | Z^t)`.
    pub alpha: Vec<f64>,
    /// `P(X_t | Z^{t-1})`.
    pub pred_x: Vec<f64>,
    /// `P(Z_t | Z^{t-1})`.
    pub pred_z: Vec<f64>,
}

impl ForwardPass {
    pub fn len(&self) -> usize {
        self.alpha.len() / self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self, t: usize) -> &[f64] {
        &self.alpha[t * self.nx..(t + 1) * self.nx]
    }

    pub fn pred_x(&self, t: usize) -> &[f64] {
        &self.pred_x[t * self.nx..(t + 1) * self.nx]
    }

    pub fn pred_z(&self, t: usize) -> &[f64] {
        &self.pred_z[t * self.nz..(t + 1) * self.nz]
    }
}

fn check_stochastic(m: &Matrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        let row = m.row(r);
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidMatrix(alloc::format!(
                "{what} row {r} has a negative or non-finite entry"
            )));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvalidMatrix(alloc::format!(
                "{what} row {r} sums to {s}"
            )));
        }
    }
    Ok(())
}

impl HmmModel {
    pub fn new(transition: &[Vec<f64>], emission: &[Vec<f64>], initial: Vec<f64>) -> Result<Self> {
        let transition = Matrix::from_rows(transition)?;
        let emission = Matrix::from_rows(emission)?;
        let nx = transition.rows();
        if transition.cols() != nx {
            return Err(Error::InvalidMatrix("transition matrix must be square".into()));
        }
        if emission.rows() != nx {
            return Err(Error::DimensionMismatch {
                expected: nx,
                found: emission.rows(),
            });
        }
        if initial.len() != nx {
            return Err(Error::DimensionMismatch {
                expected: nx,
                found: initial.len(),
            });
        }
        check_stochastic(&transition, "transition")?;
        check_stochastic(&emission, "emission")?;
        Ok(Self {
            transition,
            emission,
            initial: Pmf::new(initial)?,
        })
    }

    /// Model whose emission is the channel matrix.
    pub fn with_channel(transition: &[Vec<f64>], channel: &ChannelMatrix, initial: Vec<f64>) -> Result<Self> {
        Self::new(transition, &channel.pi().to_rows(), initial)
    }

    pub fn nx(&self) -> usize {
        self.transition.rows()
    }

    pub fn nz(&self) -> usize {
        self.emission.cols()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn emission(&self) -> &Matrix {
        &self.emission
    }

    pub fn initial(&self) -> &Pmf {
        &self.initial
    }

    /// One chain step: `aᵀ p`.
    pub fn step(&self, p: &[f64]) -> Vec<f64> {
        self.transition.tr_mul_vec(p)
    }

    /// `P(X_t)` for 0-based `t`.
    pub fn marginal_x(&self, t: usize) -> Vec<f64> {
        let mut p = self.initial.as_slice().to_vec();
        for _ in 0..t {
            p = self.step(&p);
        }
        p
    }

    /// `Σ_x p(x) b(z | x)`.
    pub fn emit(&self, px: &[f64]) -> Vec<f64> {
        self.emission.tr_mul_vec(px)
    }

    /// Normalized forward recursion over `z`.
    pub fn forward(&self, z: &[usize]) -> Result<ForwardPass> {
        validate_symbols(z, self.nz())?;
        let (nx, nz) = (self.nx(), self.nz());
        let n = z.len();
        let mut out = ForwardPass {
            nx,
            nz,
            alpha: Vec::with_capacity(n * nx),
            pred_x: Vec::with_capacity(n * nx),
            pred_z: Vec::with_capacity(n * nz),
        };
        let mut pred = self.initial.as_slice().to_vec();
        let mut alpha = vec![0.0; nx];
        for (t, &zt) in z.iter().enumerate() {
            out.pred_x.extend_from_slice(&pred);
            out.pred_z.extend(self.emit(&pred));
            let norm = update(&pred, &self.emission, zt, &mut alpha);
            if norm <= 0.0 {
                return Err(Error::ImpossibleObservation { position: t });
            }
            out.alpha.extend_from_slice(&alpha);
            pred = self.step(&alpha);
        }
        Ok(out)
    }

    /// `P(X_t | Z^{t-d})` from `α(X_{t-d} | Z^{t-d})`: `d` chain steps.
    pub fn delayed_posterior(&self, alpha: &[f64], d: usize) -> Vec<f64> {
        let mut p = alpha.to_vec();
        for _ in 0..d {
            p = self.step(&p);
        }
        p
    }

    /// `P(X_t | Z^{min(t+l, n)})` for every `t`, flattened.
    pub fn backward_smooth(&self, z: &[usize], l: usize) -> Result<Vec<f64>> {
        let fwd = self.forward(z)?;
        Ok(self.smooth_from(&fwd, l))
    }

    /// Windowed smoothing from a completed forward pass. Each window runs
    /// the backward recursion
    /// `P(X_s | Z^T) = α_s(x) Σ_{x'} a(x, x') P(X_{s+1}=x' | Z^T) / P(X_{s+1}=x' | Z^s)`
    /// from `T = min(t+l, n)` down to `t`. Terms with a zero predictive
    /// probability carry zero smoothed mass and are skipped.
    pub fn smooth_from(&self, fwd: &ForwardPass, l: usize) -> Vec<f64> {
        let nx = self.nx();
        let n = fwd.len();
        let mut out = vec![0.0; n * nx];
        if n == 0 {
            return out;
        }
        if l >= n - 1 {
            // Every window reaches the end: one pass gives all of them.
            let mut g = fwd.alpha(n - 1).to_vec();
            out[(n - 1) * nx..].copy_from_slice(&g);
            for s in (0..n - 1).rev() {
                g = self.back_step(fwd, s, &g);
                out[s * nx..(s + 1) * nx].copy_from_slice(&g);
            }
            return out;
        }
        for t in 0..n {
            let end = (t + l).min(n - 1);
            let mut g = fwd.alpha(end).to_vec();
            for s in (t..end).rev() {
                g = self.back_step(fwd, s, &g);
            }
            out[t * nx..(t + 1) * nx].copy_from_slice(&g);
        }
        out
    }

    fn back_step(&self, fwd: &ForwardPass, s: usize, next: &[f64]) -> Vec<f64> {
        let nx = self.nx();
        let pred = fwd.pred_x(s + 1);
        let ratio: Vec<f64> = next
            .iter()
            .zip(pred)
            .map(|(&g, &p)| if p > 0.0 { g / p } else { 0.0 })
            .collect();
        let alpha = fwd.alpha(s);
        let mut g: Vec<f64> = (0..nx)
            .map(|x| {
                if alpha[x] == 0.0 {
                    return 0.0;
                }
                let row = self.transition.row(x);
                alpha[x] * row.iter().zip(&ratio).map(|(a, r)| a * r).sum::<f64>()
            })
            .collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            g.iter_mut().for_each(|v| *v /= s);
        }
        g
    }

    /// Posteriors used by the Bayes-optimal filter at offset `k`:
    /// `P(X_t | Z^{t+k})`, with `k < 0` a delay of `|k|`. For `t + k < 1`
    /// the posterior is the prior `P(X_t)`.
    pub fn posteriors(&self, z: &[usize], k: i64) -> Result<Vec<f64>> {
        let fwd = self.forward(z)?;
        if k >= 0 {
            return Ok(self.smooth_from(&fwd, k as usize));
        }
        let d = k.unsigned_abs() as usize;
        let nx = self.nx();
        let mut out = Vec::with_capacity(z.len() * nx);
        let mut prior = self.initial.as_slice().to_vec();
        for t in 0..z.len() {
            if t >= d {
                out.extend(self.delayed_posterior(fwd.alpha(t - d), d));
            } else {
                out.extend_from_slice(&prior);
                prior = self.step(&prior);
            }
        }
        Ok(out)
    }

    /// Bayes response to [`HmmModel::posteriors`] at every position.
    pub fn optimal_filter(&self, z: &[usize], loss: &LossMatrix, k: i64) -> Result<OptimalOutput> {
        if loss.rows() != self.nx() {
            return Err(Error::DimensionMismatch {
                expected: self.nx(),
                found: loss.rows(),
            });
        }
        let posteriors = self.posteriors(z, k)?;
        let estimates = posteriors
            .chunks_exact(self.nx())
            .map(|p| loss.bayes_response_unchecked(p))
            .collect();
        Ok(OptimalOutput {
            estimates,
            posteriors,
        })
    }

    /// Draws `(x^n, z^n)`.
    pub fn sample<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let mut xs = Vec::with_capacity(n);
        let mut zs = Vec::with_capacity(n);
        let mut x = sample_index(self.initial.as_slice(), rng);
        for t in 0..n {
            if t > 0 {
                x = sample_index(self.transition.row(x), rng);
            }
            xs.push(x);
            zs.push(sample_index(self.emission.row(x), rng));
        }
        (xs, zs)
    }

    /// The model's own predictive law of `Z`, as an SPA.
    pub fn true_spa(&self) -> TrueSpa<'_> {
        TrueSpa { hmm: self }
    }
}

/// Decisions plus the posteriors they respond to (flattened).
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalOutput {
    pub estimates: Vec<usize>,
    pub posteriors: Vec<f64>,
}

/// `α = pred ⊙ b(z | ·)` normalized into `out`; returns the normalizer.
fn update(pred: &[f64], emission: &Matrix, z: usize, out: &mut [f64]) -> f64 {
    let mut norm = 0.0;
    for (x, o) in out.iter_mut().enumerate() {
        *o = pred[x] * emission[(x, z)];
        norm += *o;
    }
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// SPA whose state is `P(X_t | z^{t-1})`. Contexts the model deems
/// impossible land in a dead state that predicts uniformly.
#[derive(Debug, Clone, Copy)]
pub struct TrueSpa<'a> {
    hmm: &'a HmmModel,
}

impl Spa for TrueSpa<'_> {
    /// Predictive law of the hidden state; empty once the context became
    /// impossible.
    type State = Vec<f64>;

    fn alphabet_size(&self) -> usize {
        self.hmm.nz()
    }

    fn start(&self) -> Vec<f64> {
        self.hmm.initial.as_slice().to_vec()
    }

    fn advance(&self, state: &Vec<f64>, symbol: usize) -> Vec<f64> {
        if state.is_empty() {
            return Vec::new();
        }
        let mut alpha = vec![0.0; state.len()];
        if update(state, &self.hmm.emission, symbol, &mut alpha) <= 0.0 {
            return Vec::new();
        }
        self.hmm.step(&alpha)
    }

    fn predict_into(&self, state: &Vec<f64>, out: &mut [f64]) {
        if state.is_empty() {
            let u = 1.0 / out.len() as f64;
            out.iter_mut().for_each(|v| *v = u);
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (x, &p) in state.iter().enumerate() {
            if p != 0.0 {
                for (o, &b) in out.iter_mut().zip(self.hmm.emission.row(x)) {
                    *o += p * b;
                }
            }
        }
    }
}
