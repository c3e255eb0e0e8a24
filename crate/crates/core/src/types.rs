//! Alphabets, probability vectors, loss matrices and the Bayes response.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, KahanSum};

/// Tolerance on `|sum - 1|` for a vector to count as a probability vector.
pub const PMF_TOLERANCE: f64 = 1e-9;
/// Deviations up to this are renormalized by [`Pmf::new`]; larger ones are rejected.
pub const PMF_RENORMALIZE_LIMIT: f64 = 1e-6;
/// Relative gap below which two expected losses are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Ordered set of distinct integer symbol labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<i64>,
}

impl Alphabet {
    pub fn new(labels: Vec<i64>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidAlphabet(format!(
                "need at least 2 symbols, got {}",
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::InvalidAlphabet(format!("duplicate label {a}")));
            }
        }
        Ok(Self { labels })
    }

    /// Alphabet `{0, 1, ..., size - 1}`.
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size as i64).collect())
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, index: usize) -> i64 {
        self.labels[index]
    }

    pub fn index_of(&self, label: i64) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(Error::UnknownLabel(label))
    }
}

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Validates `probs`, renormalizing small deviations from unit mass.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidPmf("empty".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPmf(format!("entry {bad} is negative or not finite")));
        }
        let total: f64 = probs.iter().copied().collect::<KahanSum>().value();
        let dev = (total - 1.0).abs();
        if dev > PMF_RENORMALIZE_LIMIT {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        if dev > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Ok(Self { probs })
    }

    /// Wraps a vector already known to be a distribution (e.g. produced by
    /// normalizing). Checked only in debug builds.
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() < 1e-6,
            "not normalized: {probs:?}"
        );
        Self { probs }
    }

    /// Normalizes nonnegative weights. Fails when every weight is zero.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPmf("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().copied().collect::<KahanSum>().value();
        if total <= 0.0 {
            return Err(Error::InvalidPmf("weights sum to zero".into()));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            probs: alloc::vec![1.0 / size as f64; size],
        }
    }

    pub fn point_mass(size: usize, index: usize) -> Self {
        let mut probs = alloc::vec![0.0; size];
        probs[index] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Index of the largest entry, smallest index on ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * math::log2(p))
            .collect::<KahanSum>()
            .value()
    }
}

impl core::ops::Index<usize> for Pmf {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

/// Arbitrary finite real vector over an alphabet. Posterior maps fed by a
/// mismatched SPA can produce unnormalized or negative entries, and those
/// flow into [`LossMatrix::bayes_response`] unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("score vector entries must be finite".into()));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reinterprets the scores as a distribution, if they are one.
    pub fn to_pmf(&self) -> Result<Pmf> {
        Pmf::new(self.values.clone())
    }
}

impl From<Pmf> for ScoreVector {
    fn from(p: Pmf) -> Self {
        Self { values: p.probs }
    }
}

/// Loss `Λ(x, x̂)`: rows index the clean alphabet, columns the estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    lambda_max: f64,
}

impl LossMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix("loss matrix must be nonempty".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if entries.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::InvalidMatrix("loss entries must be finite and nonnegative".into()));
        }
        let lambda_max = entries.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            rows,
            cols,
            entries,
            lambda_max,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: r.len(),
            });
        }
        Self::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    /// 0-1 loss on an alphabet of `size` symbols.
    pub fn hamming(size: usize) -> Self {
        let entries = (0..size * size)
            .map(|k| if k / size == k % size { 0.0 } else { 1.0 })
            .collect();
        Self::new(size, size, entries).expect("hamming loss is valid")
    }

    /// `Λ(x, x̂) = (value(x) - value(x̂))^2`.
    pub fn squared_error(x_values: &[f64], estimate_values: &[f64]) -> Result<Self> {
        let entries = x_values
            .iter()
            .flat_map(|&x| estimate_values.iter().map(move |&e| (x - e) * (x - e)))
            .collect();
        Self::new(x_values.len(), estimate_values.len(), entries)
    }

    /// Squared error over the labels of an alphabet, estimating on the same labels.
    pub fn squared_error_labels(alphabet: &Alphabet) -> Self {
        let v: Vec<f64> = alphabet.labels().iter().map(|&l| l as f64).collect();
        Self::squared_error(&v, &v).expect("finite labels")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    #[inline]
    pub fn get(&self, x: usize, estimate: usize) -> f64 {
        self.entries[x * self.cols + estimate]
    }

    /// Column `λ_k`: the loss of estimating `k` for every clean symbol.
    pub fn column(&self, estimate: usize) -> Vec<f64> {
        (0..self.rows).map(|x| self.get(x, estimate)).collect()
    }

    /// Whether every clean symbol has some zero-loss estimate.
    pub fn has_zero_per_row(&self) -> bool {
        (0..self.rows).all(|x| (0..self.cols).any(|j| self.get(x, j) == 0.0))
    }

    /// `λ_k^T v`.
    #[inline]
    pub fn expected_loss(&self, estimate: usize, v: &[f64]) -> f64 {
        v.iter()
            .enumerate()
            .map(|(x, &w)| self.entries[x * self.cols + estimate] * w)
            .sum()
    }

    /// `argmin_k λ_k^T v`. Expected losses within a relative
    /// [`TIE_TOLERANCE`] of the minimum count as ties and resolve to the
    /// smallest estimate index, so routes that differ by rounding agree.
    pub fn bayes_response(&self, v: &[f64]) -> Result<usize> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        Ok(self.bayes_response_unchecked(v))
    }

    pub(crate) fn bayes_response_unchecked(&self, v: &[f64]) -> usize {
        let mut min = f64::INFINITY;
        let mut scale = 0.0f64;
        for k in 0..self.cols {
            let l = self.expected_loss(k, v);
            min = min.min(l);
            scale = scale.max(l.abs());
        }
        let window = TIE_TOLERANCE * scale;
        (0..self.cols)
            .find(|&k| self.expected_loss(k, v) <= min + window)
            .unwrap_or(0)
    }
}

/// Bayes response of a score vector under a loss.
pub fn bayes_response(v: &ScoreVector, loss: &LossMatrix) -> Result<usize> {
    loss.bayes_response(v.as_slice())
}

/// `Σ |p_i - q_i|`.
pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Relative entropy `D(p‖q)` in nats; `+∞` when `p` is not absolutely
/// continuous with respect to `q`.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut acc = KahanSum::new();
    for (&a, &b) in p.as_slice().iter().zip(q.as_slice()) {
        let term = math::xlogy_ratio(a, b);
        if term.is_infinite() {
            return Ok(f64::INFINITY);
        }
        acc.add(term);
    }
    // Rounding can leave a tiny negative total for p ≈ q.
    Ok(acc.value().max(0.0))
}

/// [`kl_divergence`] in bits.
pub fn kl_divergence_bits(p: &Pmf, q: &Pmf) -> Result<f64> {
    kl_divergence(p, q).map(math::nats_to_bits)
}

/// Sequence of alphabet indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    alphabet: Alphabet,
    symbols: Vec<usize>,
}

impl SymbolSequence {
    pub fn new(alphabet: Alphabet, symbols: Vec<usize>) -> Result<Self> {
        validate_symbols(&symbols, alphabet.size())?;
        Ok(Self { alphabet, symbols })
    }

    pub fn from_labels(alphabet: Alphabet, labels: &[i64]) -> Result<Self> {
        let symbols = labels
            .iter()
            .map(|&l| alphabet.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { alphabet, symbols })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> + '_ {
        self.symbols.iter().map(|&s| self.alphabet.label(s))
    }
}

/// Checks every index is below `size`, reporting the first offender.
pub fn validate_symbols(symbols: &[usize], size: usize) -> Result<()> {
    match symbols.iter().position(|&s| s >= size) {
        Some(position) => Err(Error::SymbolOutOfRange {
            position,
            symbol: symbols[position],
            size,
        }),
        None => Ok(()),
    }
}
