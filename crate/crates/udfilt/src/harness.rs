//! Experiment orchestration for the Markov-plus-noise source.
//!
//! Each seed draws independent training and test streams, estimates the
//! channel from a held-out slice of the training pairs, trains an LZ78 SPA
//! on the rest of the noisy training data and scores three estimators on
//! the test stream at every offset `k`: the universal filter, the best
//! Wiener filter over a window sweep, and the Bayes-optimal filter that
//! knows the source (the theoretical limit).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use udfilt_core::channel::{estimate_channel, EstimateOptions};
use udfilt_core::filters::{filter, Marginal};
use udfilt_core::lz78::Growth;
use udfilt_core::rng::{mix_seed, seeded, uniform01};
use udfilt_core::spa::{delayed_exact_from_state, delayed_mc_from_state, MonteCarlo, DEFAULT_EXACT_BUDGET};
use udfilt_core::wiener::{mse, WienerStats};
use udfilt_core::{
    Alphabet, ChannelMatrix, FilterMode, HmmModel, LossMatrix, Lz78Spa, Lz78Tree, Spa, SymbolSequence,
};

use crate::presets;

/// How estimates are scored and which values they may take.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    /// Squared error with estimates on `points` evenly spaced values over
    /// the range of the input labels.
    SquaredGrid { points: usize },
    /// Squared error with estimates restricted to the input labels.
    SquaredLabels,
    Hamming,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::SquaredGrid { points: 101 }
    }
}

impl LossSpec {
    /// Loss matrix and the numeric value of each estimate column.
    pub fn build(&self, x: &Alphabet) -> Result<(LossMatrix, Vec<f64>)> {
        let xv: Vec<f64> = x.labels().iter().map(|&l| l as f64).collect();
        Ok(match *self {
            LossSpec::SquaredGrid { points } => {
                if points < 2 {
                    bail!("estimate grid needs at least two points");
                }
                let (lo, hi) = (xv[0], xv[xv.len() - 1]);
                let grid: Vec<f64> = (0..points)
                    .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                    .collect();
                (LossMatrix::squared_error(&xv, &grid)?, grid)
            }
            LossSpec::SquaredLabels => (LossMatrix::squared_error_labels(x), xv),
            LossSpec::Hamming => (LossMatrix::hamming(x.size()), xv),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Flip probability of the Markov source.
    pub p: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Negative values are delays, nonnegative values lookaheads.
    pub k_values: Vec<i64>,
    pub loss: LossSpec,
    pub seeds: Vec<u64>,
    /// Rollout counts for [`run_mc_sweep`].
    pub mc_trials: Option<Vec<usize>>,
    pub gamma: f64,
    /// Pruning threshold; 0 keeps the whole tree.
    pub n_th: u64,
    /// Pruning threshold as a fraction of the training length, overriding
    /// `n_th` when set.
    pub prune_rate: Option<f64>,
    pub shifting: bool,
    /// Fraction of the training pairs used only for channel estimation.
    pub holdout_fraction: f64,
    pub wiener_windows: Vec<usize>,
    /// Drive the universal filter with the true source law and channel.
    pub true_spa: bool,
    /// Observe `X` directly instead of `X + N`.
    pub noiseless: bool,
    pub exact_budget: u64,
    /// Per-seed CSV (`method,k,seed,mse`).
    pub output: Option<PathBuf>,
    /// Aggregated CSV.
    pub summary: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p: 0.1,
            n_train: 1_000_000,
            n_test: 100_000,
            k_values: (-3..=3).collect(),
            loss: LossSpec::default(),
            seeds: (0..10).collect(),
            mc_trials: None,
            gamma: udfilt_core::lz78::DEFAULT_GAMMA,
            n_th: 4096,
            prune_rate: None,
            shifting: true,
            holdout_fraction: 0.1,
            wiener_windows: vec![1, 2, 4, 8, 16],
            true_spa: false,
            noiseless: false,
            exact_budget: DEFAULT_EXACT_BUDGET,
            output: None,
            summary: None,
        }
    }
}

impl ExperimentConfig {
    /// The large experiment: 9.92·10⁶ training and 8·10⁴ test symbols.
    pub fn full_scale() -> Self {
        Self {
            n_train: 9_920_000,
            n_test: 80_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            bail!("p must lie in (0, 1), got {}", self.p);
        }
        if self.n_train == 0 || self.n_test == 0 {
            bail!("n_train and n_test must be positive");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            bail!("holdout_fraction must lie in (0, 1)");
        }
        let holdout = (self.n_train as f64 * self.holdout_fraction) as usize;
        if holdout == 0 || holdout >= self.n_train {
            bail!("training set too small to hold out a channel-estimation slice");
        }
        if self.wiener_windows.is_empty() || self.wiener_windows.contains(&0) {
            bail!("wiener_windows must be nonempty and positive");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bail!("gamma must be positive");
        }
        if let Some(r) = self.prune_rate {
            if !(0.0..1.0).contains(&r) {
                bail!("prune_rate must lie in [0, 1)");
            }
        }
        Ok(())
    }

    /// Pruning threshold in effect for this training length.
    pub fn pruning_threshold(&self) -> u64 {
        match self.prune_rate {
            Some(r) => (r * self.n_train as f64).round() as u64,
            None => self.n_th,
        }
    }

    fn z_alphabet(&self) -> Alphabet {
        if self.noiseless {
            presets::x_alphabet()
        } else {
            presets::z_alphabet()
        }
    }

    fn true_channel(&self) -> ChannelMatrix {
        if self.noiseless {
            ChannelMatrix::new(
                presets::x_alphabet(),
                presets::x_alphabet(),
                &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            )
            .expect("invertible")
        } else {
            presets::noise_channel()
        }
    }

    /// The source as a hidden Markov model over the padded alphabet.
    pub fn truth(&self) -> Result<HmmModel> {
        let p = self.p;
        Ok(HmmModel::with_channel(
            &[
                vec![1.0 - p, 0.0, p],
                vec![0.5, 0.0, 0.5],
                vec![p, 0.0, 1.0 - p],
            ],
            &self.true_channel(),
            vec![0.5, 0.0, 0.5],
        )?)
    }
}

/// Symmetric two-state Markov chain on `{-1, 1}` started uniformly.
pub fn gen_markov(p: f64, n: usize, seed: u64) -> Result<SymbolSequence> {
    if !(p > 0.0 && p < 1.0) {
        bail!("p must lie in (0, 1), got {p}");
    }
    let mut rng = seeded(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut s = usize::from(uniform01(&mut rng) < 0.5);
    for t in 0..n {
        if t > 0 && uniform01(&mut rng) < p {
            s ^= 1;
        }
        x.push(s);
    }
    Ok(SymbolSequence::new(Alphabet::new(vec![-1, 1])?, x)?)
}

/// `z_t = x_t + n_t` with `n_t` uniform on `{-1, 1}`.
pub fn add_noise(x: &SymbolSequence, seed: u64) -> Result<SymbolSequence> {
    if x.alphabet().labels().iter().any(|l| !matches!(l, -1 | 1)) {
        bail!("add_noise needs inputs in {{-1, 1}}, got alphabet {:?}", x.alphabet().labels());
    }
    let mut rng = seeded(seed, 1);
    let z: Vec<i64> = x
        .labels()
        .map(|l| l + if uniform01(&mut rng) < 0.5 { -1 } else { 1 })
        .collect();
    Ok(SymbolSequence::from_labels(presets::z_alphabet(), &z)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub k: i64,
    pub seed: u64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub k: i64,
    pub mean_mse: f64,
    pub stderr: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    /// Sorted by method, then `k`, then seed.
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Seeds that failed, with the reason.
    pub aborted: Vec<(u64, String)>,
}

impl ExperimentResult {
    fn from_runs(runs: Vec<(u64, Result<Vec<ResultRow>>)>) -> Result<Self> {
        let total = runs.len();
        let mut rows = Vec::new();
        let mut aborted = Vec::new();
        for (seed, r) in runs {
            match r {
                Ok(mut v) => rows.append(&mut v),
                Err(e) => {
                    warn!("seed {seed} aborted: {e:#}");
                    aborted.push((seed, format!("{e:#}")));
                }
            }
        }
        if aborted.len() * 5 > total {
            bail!(
                "{} of {total} seeds aborted; first failure (seed {}): {}",
                aborted.len(),
                aborted[0].0,
                aborted[0].1
            );
        }
        rows.sort_by(|a, b| (&a.method, a.k, a.seed).cmp(&(&b.method, b.k, b.seed)));
        let summary = summarize(&rows);
        Ok(Self {
            rows,
            summary,
            aborted,
        })
    }

    pub fn mean(&self, method: &str, k: i64) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.k == k)
            .map(|s| s.mean_mse)
    }

    pub fn row(&self, method: &str, k: i64) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.k == k)
    }

    pub fn write_rows<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.summary {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes whichever of the two CSV files the config names.
    pub fn save(&self, rows: Option<&Path>, summary: Option<&Path>) -> Result<()> {
        if let Some(p) = rows {
            let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            self.write_rows(f)?;
        }
        if let Some(p) = summary {
            let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            self.write_summary(f)?;
        }
        Ok(())
    }
}

fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(&str, i64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((&r.method, r.k)).or_default().push(r.mse);
    }
    groups
        .into_iter()
        .map(|((method, k), v)| {
            let (mean_mse, stderr) = udfilt_core::bounds::mean_stderr(&v);
            SummaryRow {
                method: method.to_string(),
                k,
                mean_mse,
                stderr,
                seeds: v.len(),
            }
        })
        .collect()
}

/// One seed's data in padded-alphabet indices plus numeric labels.
pub struct SeedData {
    pub x_train: Vec<usize>,
    pub z_train: Vec<usize>,
    pub x_test: Vec<usize>,
    pub z_test: Vec<usize>,
}

impl SeedData {
    pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let (x_train, z_train) = draw(cfg, cfg.n_train, mix_seed(seed, 1))?;
        let (x_test, z_test) = draw(cfg, cfg.n_test, mix_seed(seed, 2))?;
        Ok(Self {
            x_train,
            z_train,
            x_test,
            z_test,
        })
    }

    fn holdout_start(&self, cfg: &ExperimentConfig) -> usize {
        self.x_train.len() - (self.x_train.len() as f64 * cfg.holdout_fraction) as usize
    }
}

fn draw(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let x = gen_markov(cfg.p, n, seed)?;
    let z = if cfg.noiseless {
        x.labels().collect::<Vec<_>>()
    } else {
        add_noise(&x, seed)?.labels().collect()
    };
    let xa = presets::x_alphabet();
    let za = cfg.z_alphabet();
    let xi = x.labels().map(|l| xa.index_of(l)).collect::<udfilt_core::Result<_>>()?;
    let zi = z.iter().map(|&l| za.index_of(l)).collect::<udfilt_core::Result<_>>()?;
    Ok((xi, zi))
}

fn labels_of(idx: &[usize], a: &Alphabet) -> Vec<f64> {
    idx.iter().map(|&i| a.label(i) as f64).collect()
}

fn score(estimates: &[usize], values: &[f64], x: &[f64]) -> f64 {
    let e: Vec<f64> = estimates.iter().map(|&i| values[i]).collect();
    mse(&e, x)
}

/// Channel estimate from the held-out training slice; the padding symbol
/// gets the uniform row, or the identity row when there is no noise.
pub fn estimate_from_holdout(cfg: &ExperimentConfig, data: &SeedData) -> Result<ChannelMatrix> {
    let start = data.holdout_start(cfg);
    let pairs: Vec<(usize, usize)> = data.x_train[start..]
        .iter()
        .copied()
        .zip(data.z_train[start..].iter().copied())
        .collect();
    let opts = EstimateOptions {
        additive_smoothing: 0.0,
        unobserved_row: Some(if cfg.noiseless {
            vec![0.0, 1.0, 0.0]
        } else {
            presets::PAD_ROW.to_vec()
        }),
    };
    Ok(estimate_channel(&pairs, presets::x_alphabet(), cfg.z_alphabet(), &opts)?)
}

/// LZ78 tree on the noisy training data outside the held-out slice.
pub fn train_tree(cfg: &ExperimentConfig, z: &[usize]) -> Result<Lz78Tree> {
    let a = cfg.z_alphabet();
    let tree = if cfg.shifting {
        Lz78Tree::build_shifted(z, a, cfg.gamma, Growth::OneLeaf)?
    } else {
        Lz78Tree::build(z, a, cfg.gamma)?
    };
    let n_th = cfg.pruning_threshold();
    Ok(if n_th > 0 { tree.prune(n_th) } else { tree })
}

fn universal_estimates<S: Spa>(
    cfg: &ExperimentConfig,
    z: &[usize],
    spa: &S,
    ch: &ChannelMatrix,
    loss: &LossMatrix,
    k: i64,
) -> Result<Vec<usize>> {
    let mode = match FilterMode::from_offset(k) {
        FilterMode::Delay { d, .. } => FilterMode::Delay {
            d,
            marginal: Marginal::Exact {
                budget: cfg.exact_budget,
            },
        },
        m => m,
    };
    Ok(filter(z, spa, ch, loss, mode, false)?.estimates)
}

/// Best test MSE over the window sweep, with the window that achieved it.
pub fn best_wiener(
    windows: &[usize],
    k: i64,
    x_train: &[f64],
    z_train: &[f64],
    x_test: &[f64],
    z_test: &[f64],
) -> Result<(f64, usize)> {
    let widest = *windows.iter().max().expect("validated nonempty");
    let lag = widest - 1 + k.unsigned_abs() as usize;
    let stats = WienerStats::new(x_train, z_train, lag)?;
    let mut best = (f64::INFINITY, 0);
    for &w in windows {
        let f = stats.fit(w, k)?;
        let m = mse(&f.apply(z_test), x_test);
        if m < best.0 {
            best = (m, w);
        }
    }
    Ok(best)
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRow>> {
    let data = SeedData::generate(cfg, seed)?;
    let truth = cfg.truth()?;
    let xa = presets::x_alphabet();
    let za = cfg.z_alphabet();
    let (loss, values) = cfg.loss.build(&xa)?;
    let x_test = labels_of(&data.x_test, &xa);
    let x_train_l = labels_of(&data.x_train, &xa);
    let z_train_l = labels_of(&data.z_train, &za);
    let z_test_l = labels_of(&data.z_test, &za);

    let universal: Box<dyn Fn(i64) -> Result<Vec<usize>> + Sync> = if cfg.true_spa {
        let ch = cfg.true_channel();
        let truth = truth.clone();
        let loss = loss.clone();
        let z = data.z_test.clone();
        let cfg = cfg.clone();
        Box::new(move |k| universal_estimates(&cfg, &z, &truth.true_spa(), &ch, &loss, k))
    } else {
        let ch = estimate_from_holdout(cfg, &data)?;
        let tree = train_tree(cfg, &data.z_train[..data.holdout_start(cfg)])?;
        info!(
            "seed {seed}: tree with {} nodes, depth {}",
            tree.node_count(),
            tree.depth()
        );
        let spa: Lz78Spa = tree.spa();
        drop(tree);
        let loss = loss.clone();
        let z = data.z_test.clone();
        let cfg = cfg.clone();
        Box::new(move |k| universal_estimates(&cfg, &z, &spa, &ch, &loss, k))
    };

    let mut rows = Vec::new();
    let mut push = |method: &str, k: i64, mse: f64| {
        rows.push(ResultRow {
            method: method.into(),
            k,
            seed,
            mse,
        })
    };
    for &k in &cfg.k_values {
        let theory = truth.optimal_filter(&data.z_test, &loss, k)?.estimates;
        push("theory", k, score(&theory, &values, &x_test));
        push("universal", k, score(&universal(k)?, &values, &x_test));
        let (w, window) = best_wiener(&cfg.wiener_windows, k, &x_train_l, &z_train_l, &x_test, &z_test_l)?;
        log::debug!("seed {seed} k {k}: best Wiener window {window}");
        push("wiener", k, w);
    }
    Ok(rows)
}

/// Runs `f` for every seed on a pool capped by `UDFILT_THREADS`.
fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> T + Sync + Send) -> Result<Vec<(u64, T)>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("UDFILT_THREADS").ok().and_then(|v| v.parse().ok()) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    Ok(pool.install(|| seeds.par_iter().map(|&s| (s, f(s))).collect()))
}

/// Scores the universal, Wiener and optimal filters at every `k`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let runs = per_seed(&cfg.seeds, |s| run_seed(cfg, s))?;
    let res = ExperimentResult::from_runs(runs)?;
    res.save(cfg.output.as_deref(), cfg.summary.as_deref())?;
    Ok(res)
}

fn run_mc_seed(cfg: &ExperimentConfig, seed: u64, d: usize, trials: &[usize]) -> Result<Vec<ResultRow>> {
    let data = SeedData::generate(cfg, seed)?;
    let xa = presets::x_alphabet();
    let (loss, values) = cfg.loss.build(&xa)?;
    let x_test = labels_of(&data.x_test, &xa);
    let ch = estimate_from_holdout(cfg, &data)?;
    let spa = train_tree(cfg, &data.z_train[..data.holdout_start(cfg)])?.spa();
    let k = -(d as i64);
    let mut rows = Vec::new();
    let exact = universal_estimates(cfg, &data.z_test, &spa, &ch, &loss, k)?;
    rows.push(ResultRow {
        method: "exact".into(),
        k,
        seed,
        mse: score(&exact, &values, &x_test),
    });
    for &m in trials {
        let mode = FilterMode::Delay {
            d,
            marginal: Marginal::MonteCarlo {
                trials: m,
                seed: mix_seed(seed, 3),
                gamma: cfg.gamma,
            },
        };
        let est = filter(&data.z_test, &spa, &ch, &loss, mode, false)?.estimates;
        rows.push(ResultRow {
            method: format!("mc{m}"),
            k,
            seed,
            mse: score(&est, &values, &x_test),
        });
    }
    Ok(rows)
}

/// Delayed filter with Monte Carlo marginals for each rollout count in
/// `cfg.mc_trials`, next to the exact-marginal filter. Methods are named
/// `exact` and `mc{M}`.
pub fn run_mc_sweep(cfg: &ExperimentConfig, d: usize) -> Result<ExperimentResult> {
    cfg.validate()?;
    if d == 0 {
        bail!("the Monte Carlo sweep needs d >= 1");
    }
    let trials = cfg.mc_trials.clone().unwrap_or_else(|| vec![100, 1000, 10_000]);
    if trials.contains(&0) {
        bail!("rollout counts must be positive");
    }
    let runs = per_seed(&cfg.seeds, |s| run_mc_seed(cfg, s, d, &trials))?;
    let res = ExperimentResult::from_runs(runs)?;
    res.save(cfg.output.as_deref(), cfg.summary.as_deref())?;
    Ok(res)
}

/// Mean L1 distance between Monte Carlo and exact delayed marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct L1Check {
    pub trials: usize,
    pub mean_l1: f64,
    pub bound: f64,
}

/// Compares `M`-rollout marginals with exact ones at `contexts` random
/// positions of `z`, each position conditioning on everything before it.
/// Counts are unsmoothed, matching the empirical distribution the bound is
/// stated for.
pub fn mc_l1_check<S: Spa + Sync>(
    spa: &S,
    z: &[usize],
    d: usize,
    trials: usize,
    contexts: usize,
    seed: u64,
) -> Result<L1Check>
where
    S::State: Send,
{
    if z.is_empty() || contexts == 0 {
        bail!("need a nonempty sequence and at least one context");
    }
    let mut rng = seeded(seed, 0);
    let mut positions: Vec<usize> = (0..contexts)
        .map(|_| (uniform01(&mut rng) * z.len() as f64) as usize)
        .collect();
    positions.sort_unstable();
    // States along z, captured at the sampled positions.
    let mut states = Vec::with_capacity(contexts);
    let mut s = spa.start();
    let mut next = 0;
    for (t, &zt) in z.iter().enumerate() {
        while next < positions.len() && positions[next] == t {
            states.push(s.clone());
            next += 1;
        }
        s = spa.advance(&s, zt);
    }
    let dists: Vec<f64> = states
        .into_par_iter()
        .enumerate()
        .map(|(i, st)| -> Result<f64> {
            let exact = delayed_exact_from_state(spa, &st, d, DEFAULT_EXACT_BUDGET)?;
            let mc = delayed_mc_from_state(
                spa,
                &st,
                d,
                MonteCarlo { trials, gamma: 0.0 },
                &mut seeded(mix_seed(seed, 1), i as u64),
            )?;
            Ok(udfilt_core::types::l1_distance(exact.as_slice(), mc.as_slice())?)
        })
        .collect::<Result<_>>()?;
    Ok(L1Check {
        trials,
        mean_l1: dists.iter().sum::<f64>() / dists.len() as f64,
        bound: udfilt_core::bounds::mc_l1_bound(spa.alphabet_size(), trials),
    })
}

/// KL rate and causal MSE gap for one training length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendPoint {
    pub n_train: usize,
    /// Mean over seeds of `D(P_{Z^n} ‖ Q_{Z^n}) / n`, nats per symbol.
    pub kl_rate: f64,
    /// Mean over seeds of universal minus theory MSE at `k = 0`.
    pub mse_gap: f64,
}

/// Universality trend: how close the trained SPA gets to the true law of
/// `Z` as the training length grows, measured by an exact KL rate over
/// `Z^{kl_n}` and by the causal MSE gap on the test stream.
pub fn universality_trend(cfg: &ExperimentConfig, sizes: &[usize], kl_n: usize) -> Result<Vec<TrendPoint>> {
    let truth = cfg.truth()?;
    let xa = presets::x_alphabet();
    let (loss, values) = cfg.loss.build(&xa)?;
    let mut out = Vec::new();
    for &n in sizes {
        let c = ExperimentConfig {
            n_train: n,
            ..cfg.clone()
        };
        c.validate()?;
        let per = per_seed(&c.seeds, |seed| -> Result<(f64, f64)> {
            let data = SeedData::generate(&c, seed)?;
            let spa = train_tree(&c, &data.z_train[..data.holdout_start(&c)])?.spa();
            let kl = udfilt_core::bounds::kl_rate(&truth, &spa, kl_n, Default::default())?;
            let ch = estimate_from_holdout(&c, &data)?;
            let x_test = labels_of(&data.x_test, &xa);
            let u = universal_estimates(&c, &data.z_test, &spa, &ch, &loss, 0)?;
            let t = truth.optimal_filter(&data.z_test, &loss, 0)?.estimates;
            Ok((kl.per_symbol_nats, score(&u, &values, &x_test) - score(&t, &values, &x_test)))
        })?;
        let vals: Vec<(f64, f64)> = per.into_iter().map(|(_, r)| r).collect::<Result<_>>()?;
        let m = vals.len() as f64;
        out.push(TrendPoint {
            n_train: n,
            kl_rate: vals.iter().map(|v| v.0).sum::<f64>() / m,
            mse_gap: vals.iter().map(|v| v.1).sum::<f64>() / m,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markov_flip_rate() {
        let x = gen_markov(0.2, 200_000, 5).unwrap();
        let s = x.symbols();
        let flips = s.windows(2).filter(|w| w[0] != w[1]).count();
        assert!((flips as f64 / (s.len() - 1) as f64 - 0.2).abs() < 0.005);
    }

    #[test]
    fn noise_keeps_sign_information() {
        let x = gen_markov(0.3, 10_000, 1).unwrap();
        let z = add_noise(&x, 1).unwrap();
        for (xl, zl) in x.labels().zip(z.labels()) {
            assert!((zl - xl).abs() == 1);
            if zl == -2 {
                assert_eq!(xl, -1);
            }
        }
    }

    #[test]
    fn add_noise_rejects_other_alphabets() {
        let x = SymbolSequence::from_labels(Alphabet::new(vec![0, 1]).unwrap(), &[0, 1]).unwrap();
        assert!(add_noise(&x, 0).is_err());
    }

    #[test]
    fn grid_loss_shape() {
        let (l, v) = LossSpec::SquaredGrid { points: 5 }.build(&presets::x_alphabet()).unwrap();
        assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(l.rows(), 3);
        assert_eq!(l.cols(), 5);
        assert_eq!(l.get(0, 4), 4.0);
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.p = 1.0;
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            seeds: vec![],
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            n_train: 3,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"p": 0.2, "seeds": [1, 2]}"#).unwrap();
        assert_eq!(c.p, 0.2);
        assert_eq!(c.n_test, 100_000);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
