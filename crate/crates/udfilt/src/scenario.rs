//! JSON scenarios for the `bounds` subcommand.
//!
//! A scenario names the true model (a file-format HMM or the Markov preset
//! by flip probability), optionally a mismatched model whose predictive law
//! drives the universal filter, the loss and the sizes. Fields left out take
//! the defaults below.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use udfilt_core::bounds::{verify_theorem, BoundReport, Direction, Evaluation, Scenario, TheoremId, DEFAULT_BUDGET};
use udfilt_core::{Alphabet, ChannelMatrix, HmmModel, LossMatrix};

use crate::io::{ChannelFile, HmmFile};
use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioLoss {
    Hamming,
    /// Squared error between input labels.
    SquaredLabels,
    Matrix { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    /// Label for the CSV row.
    pub name: Option<String>,
    pub hmm: Option<HmmFile>,
    /// Markov preset flip probability, used when `hmm` is absent.
    pub markov_p: Option<f64>,
    /// Use the two-state preset instead of the padded one.
    pub binary: bool,
    pub model: Option<HmmFile>,
    pub model_markov_p: Option<f64>,
    pub channel: Option<ChannelFile>,
    pub loss: ScenarioLoss,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub trials: usize,
    pub seed: u64,
    pub x: Option<Vec<usize>>,
    pub budget: f64,
    /// Estimate expectations from this many simulated runs instead of
    /// enumerating.
    pub sampled_runs: Option<usize>,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            name: None,
            hmm: None,
            markov_p: None,
            binary: false,
            model: None,
            model_markov_p: None,
            channel: None,
            loss: ScenarioLoss::Hamming,
            n: 6,
            d: 1,
            l: 0,
            trials: 1000,
            seed: 0,
            x: None,
            budget: DEFAULT_BUDGET,
            sampled_runs: None,
        }
    }
}

/// One scenario or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSet {
    One(Box<ScenarioFile>),
    Many(Vec<ScenarioFile>),
}

impl ScenarioSet {
    pub fn into_vec(self) -> Vec<ScenarioFile> {
        match self {
            ScenarioSet::One(s) => vec![*s],
            ScenarioSet::Many(v) => v,
        }
    }
}

fn preset(p: f64, binary: bool) -> Result<HmmModel> {
    Ok(if binary {
        presets::binary_markov_hmm(p)?
    } else {
        presets::markov_hmm(p)?
    })
}

impl ScenarioFile {
    pub fn build(&self) -> Result<Scenario> {
        let truth = match (&self.hmm, self.markov_p) {
            (Some(h), _) => h.to_model()?,
            (None, Some(p)) => preset(p, self.binary)?,
            (None, None) => bail!("scenario needs either `hmm` or `markov_p`"),
        };
        let model = match (&self.model, self.model_markov_p) {
            (Some(h), _) => Some(h.to_model()?),
            (None, Some(p)) => Some(preset(p, self.binary)?),
            (None, None) => None,
        };
        let channel = match &self.channel {
            Some(c) => Some(c.to_channel()?),
            None if self.hmm.is_none() && !self.binary => Some(presets::noise_channel()),
            None => square_channel(&truth),
        };
        let x_alphabet = match &channel {
            Some(c) => c.input().clone(),
            None if self.hmm.is_none() => Alphabet::new(vec![-1, 1])?,
            None => Alphabet::indexed(truth.nx())?,
        };
        let loss = match &self.loss {
            ScenarioLoss::Hamming => LossMatrix::hamming(truth.nx()),
            ScenarioLoss::SquaredLabels => LossMatrix::squared_error_labels(&x_alphabet),
            ScenarioLoss::Matrix { rows } => LossMatrix::from_rows(rows)?,
        };
        let mut sc = Scenario::new(truth, channel, loss, self.n);
        sc.model = model;
        sc.d = self.d;
        sc.l = self.l;
        sc.trials = self.trials;
        sc.seed = self.seed;
        sc.x = self.x.clone();
        sc.eval = match self.sampled_runs {
            Some(runs) => Evaluation::Sampled { runs, seed: self.seed },
            None => Evaluation::Exact { budget: self.budget },
        };
        Ok(sc)
    }
}

/// The emission as a channel when it is square and invertible.
fn square_channel(h: &HmmModel) -> Option<ChannelMatrix> {
    if h.nx() != h.nz() {
        return None;
    }
    let a = Alphabet::indexed(h.nx()).ok()?;
    ChannelMatrix::new(a.clone(), a, &h.emission().to_rows()).ok()
}

/// Serializable form of a [`BoundReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub name: Option<String>,
    pub theorem: String,
    pub direction: String,
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub stderr: Option<f64>,
    pub holds: bool,
    pub details: BTreeMap<String, f64>,
}

impl ReportJson {
    pub fn new(name: Option<String>, r: &BoundReport) -> Self {
        Self {
            name,
            theorem: r.theorem.to_string(),
            direction: match r.direction {
                Direction::Upper => "upper".into(),
                Direction::Lower => "lower".into(),
            },
            measured: r.measured,
            bound: r.bound,
            slack: r.slack,
            stderr: r.stderr,
            holds: r.holds(1e-9),
            details: r.details.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

pub fn run(theorem: TheoremId, file: &ScenarioFile) -> Result<ReportJson> {
    let sc = file.build()?;
    let r = verify_theorem(theorem, &sc)?;
    Ok(ReportJson::new(file.name.clone(), &r))
}
