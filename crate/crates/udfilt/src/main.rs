use std::fs::File;
use std::io::{stdout, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use udfilt::harness::{self, ExperimentConfig, LossSpec};
use udfilt::io::{self, TreeFile};
use udfilt::scenario::{self, ScenarioSet};
use udfilt_core::bounds::TheoremId;
use udfilt_core::filters::{filter, Marginal};
use udfilt_core::lz78::{Growth, Lz78Tree};
use udfilt_core::wiener::WienerFilter;
use udfilt_core::{FilterMode, SymbolSequence};

#[derive(Parser)]
#[command(name = "udfilt", version, about = "Universal discrete filtering with LZ78 predictors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a Markov source and its noisy observation.
    Simulate(SimulateArgs),
    /// Build an LZ78 tree from a symbol file.
    Train(TrainArgs),
    /// Run the universal filter over a noisy symbol file.
    Filter(FilterArgs),
    /// Run a baseline filter (Wiener or Bayes-optimal).
    Baseline(BaselineArgs),
    /// Evaluate both sides of a bound on small scenarios.
    Bounds(BoundsArgs),
    /// Compare the universal, Wiener and optimal filters across offsets.
    Bench(BenchArgs),
    /// Compare Monte Carlo and exact delayed marginals.
    McSweep(McSweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clean sequence output.
    #[arg(long)]
    clean: PathBuf,
    /// Noisy sequence output.
    #[arg(long)]
    noisy: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// Pruning threshold; 0 disables pruning.
    #[arg(long, default_value_t = 0)]
    n_th: u64,
    /// Parse once from the start instead of from every offset.
    #[arg(long)]
    no_shift: bool,
    /// With shifting, extend each traversal by up to this many nodes
    /// instead of one.
    #[arg(long)]
    full_path_depth: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    /// Squared error over a 101-point estimate grid.
    SquaredGrid,
    /// Squared error with estimates restricted to the input labels.
    Squared,
    Hamming,
}

impl LossArg {
    fn spec(self) -> LossSpec {
        match self {
            LossArg::SquaredGrid => LossSpec::default(),
            LossArg::Squared => LossSpec::SquaredLabels,
            LossArg::Hamming => LossSpec::Hamming,
        }
    }
}

#[derive(Args)]
struct FilterArgs {
    /// Noisy symbol file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    tree: PathBuf,
    /// Channel JSON; defaults to the Markov-plus-noise channel.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Offset: negative for delay, nonnegative for lookahead.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    k: i64,
    #[arg(long, value_enum, default_value_t = LossArg::Squared)]
    loss: LossArg,
    /// Monte Carlo rollouts for delayed marginals instead of enumeration.
    #[arg(long)]
    mc_trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimates, one value per line; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Wiener,
    Optimal,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: BaselineMethod,
    /// Noisy symbol file to filter.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    k: i64,
    /// Wiener: clean training sequence.
    #[arg(long)]
    train_clean: Option<PathBuf>,
    /// Wiener: noisy training sequence.
    #[arg(long)]
    train_noisy: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    window: usize,
    /// Optimal: model JSON; defaults to the Markov preset with `--p`.
    #[arg(long)]
    hmm: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, value_enum, default_value_t = LossArg::Squared)]
    loss: LossArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// One of 1, 2, 3, 4, 5, 6, 8, c1, c2.
    #[arg(long)]
    theorem: TheoremId,
    /// Scenario JSON: one object or a list.
    #[arg(long)]
    scenario: PathBuf,
    /// Also write one CSV row per scenario.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Config JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    n_th: Option<u64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Use the full training and test sizes.
    #[arg(long)]
    full_scale: bool,
    /// Per-seed CSV.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Aggregated CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.full_scale) {
            (Some(p), _) => io::load_json(p)?,
            (None, true) => ExperimentConfig::full_scale(),
            (None, false) => ExperimentConfig::default(),
        };
        if self.full_scale {
            let ps = ExperimentConfig::full_scale();
            cfg.n_train = ps.n_train;
            cfg.n_test = ps.n_test;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = &self.$f { cfg.$f = v.clone(); })*};
        }
        set!(p, n_train, n_test, seeds, n_th);
        if let Some(l) = self.loss {
            cfg.loss = l.spec();
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        if self.summary.is_some() {
            cfg.summary = self.summary.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Comma-separated offsets.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    k: Option<Vec<i64>>,
}

#[derive(Args)]
struct McSweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Comma-separated rollout counts.
    #[arg(long, value_delimiter = ',')]
    trials: Option<Vec<usize>>,
}

fn writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(stdout())),
    })
}

fn write_values(path: Option<&PathBuf>, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let mut w = writer(path)?;
    let res = values
        .into_iter()
        .try_for_each(|v| writeln!(w, "{v}"))
        .and_then(|_| w.flush());
    match res {
        // A closed pipe (`| head`) is not a failure.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let x = harness::gen_markov(a.p, a.n, a.seed)?;
    let z = harness::add_noise(&x, a.seed)?;
    io::save_symbols(&a.clean, &x)?;
    io::save_symbols(&a.noisy, &z)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let z = io::load_symbols(&a.input)?;
    let growth = match a.full_path_depth {
        Some(max_depth) => Growth::FullPath { max_depth },
        None => Growth::OneLeaf,
    };
    let mut tree = if a.no_shift {
        Lz78Tree::build(z.symbols(), z.alphabet().clone(), a.gamma)?
    } else {
        Lz78Tree::build_shifted(z.symbols(), z.alphabet().clone(), a.gamma, growth)?
    };
    if a.n_th > 0 {
        tree = tree.prune(a.n_th);
    }
    info!("tree: {} nodes, depth {}", tree.node_count(), tree.depth());
    io::save_json(&a.output, &TreeFile::from_tree(&tree))
}

fn run_filter(a: FilterArgs) -> Result<()> {
    let z = io::load_symbols(&a.input)?;
    let tree = io::load_tree(&a.tree)?;
    let ch = match &a.channel {
        Some(p) => io::load_channel(p)?,
        None => udfilt::presets::noise_channel(),
    };
    if tree.alphabet() != ch.output() {
        bail!("tree alphabet {:?} differs from channel output {:?}", tree.alphabet().labels(), ch.output().labels());
    }
    let z = SymbolSequence::from_labels(ch.output().clone(), &z.labels().collect::<Vec<_>>())?;
    let (loss, values) = a.loss.spec().build(ch.input())?;
    let mode = match (FilterMode::from_offset(a.k), a.mc_trials) {
        (FilterMode::Delay { d, .. }, Some(trials)) => FilterMode::Delay {
            d,
            marginal: Marginal::MonteCarlo {
                trials,
                seed: a.seed,
                gamma: tree.gamma(),
            },
        },
        (m, _) => m,
    };
    let out = filter(z.symbols(), &tree.spa(), &ch, &loss, mode, false)?;
    write_values(a.output.as_ref(), out.estimates.iter().map(|&i| values[i]))
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let z = io::load_symbols(&a.input)?;
    match a.method {
        BaselineMethod::Wiener => {
            let (Some(tc), Some(tn)) = (&a.train_clean, &a.train_noisy) else {
                bail!("the Wiener baseline needs --train-clean and --train-noisy");
            };
            let xl: Vec<f64> = io::load_symbols(tc)?.labels().map(|l| l as f64).collect();
            let zl: Vec<f64> = io::load_symbols(tn)?.labels().map(|l| l as f64).collect();
            let f = WienerFilter::fit(&xl, &zl, a.window, a.k)?;
            let zt: Vec<f64> = z.labels().map(|l| l as f64).collect();
            write_values(a.output.as_ref(), f.apply(&zt))
        }
        BaselineMethod::Optimal => {
            let (hmm, xa) = match (&a.hmm, a.p) {
                (Some(p), _) => {
                    let h = io::load_json::<io::HmmFile>(p)?.to_model()?;
                    let xa = udfilt_core::Alphabet::indexed(h.nx())?;
                    (h, xa)
                }
                (None, Some(p)) => (udfilt::presets::markov_hmm(p)?, udfilt::presets::x_alphabet()),
                (None, None) => bail!("the optimal baseline needs --hmm or --p"),
            };
            let (loss, values) = a.loss.spec().build(&xa)?;
            let out = hmm.optimal_filter(z.symbols(), &loss, a.k)?;
            write_values(a.output.as_ref(), out.estimates.iter().map(|&i| values[i]))
        }
    }
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let set: ScenarioSet = io::load_json(&a.scenario)?;
    let mut reports = Vec::new();
    for s in set.into_vec() {
        reports.push(scenario::run(a.theorem, &s)?);
    }
    println!("{}", serde_json::to_string_pretty(&reports)?);
    if let Some(p) = &a.csv {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["name", "theorem", "direction", "measured", "bound", "slack", "holds"])?;
        for r in &reports {
            w.write_record([
                r.name.clone().unwrap_or_default(),
                r.theorem.clone(),
                r.direction.clone(),
                r.measured.to_string(),
                r.bound.to_string(),
                r.slack.to_string(),
                r.holds.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn print_summary(res: &harness::ExperimentResult) -> Result<()> {
    res.write_summary(stdout())?;
    for (seed, why) in &res.aborted {
        eprintln!("seed {seed} aborted: {why}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Filter(a) => run_filter(a),
        Command::Baseline(a) => baseline(a),
        Command::Bounds(a) => bounds(a),
        Command::Bench(a) => {
            let mut cfg = a.exp.config()?;
            if let Some(k) = a.k {
                cfg.k_values = k;
            }
            print_summary(&harness::run_experiment(&cfg)?)
        }
        Command::McSweep(a) => {
            let mut cfg = a.exp.config()?;
            if a.trials.is_some() {
                cfg.mc_trials = a.trials;
            }
            print_summary(&harness::run_mc_sweep(&cfg, a.d)?)
        }
    }
}
