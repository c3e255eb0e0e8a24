//! File formats.
//!
//! Symbol files hold one integer label per line after a header naming the
//! alphabet:
//!
//! ```text
//! # alphabet: -2 0 2
//! 0
//! -2
//! ```
//!
//! Channels, models and trees are JSON. Tree files carry a version number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use udfilt_core::lz78::NodeParts;
use udfilt_core::{Alphabet, ChannelMatrix, HmmModel, Lz78Tree, SymbolSequence};

const HEADER: &str = "# alphabet:";

pub const TREE_FORMAT_VERSION: u32 = 1;

pub fn read_symbols<R: Read>(reader: R) -> Result<SymbolSequence> {
    let mut alphabet = None;
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(HEADER) {
            let l: Vec<i64> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad alphabet header on line {}", i + 1))?;
            alphabet = Some(Alphabet::new(l)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        labels.push(
            line.parse::<i64>()
                .with_context(|| format!("line {}: not an integer: {line:?}", i + 1))?,
        );
    }
    let alphabet = match alphabet {
        Some(a) => a,
        None => {
            // No header: the sorted distinct labels.
            let mut l = labels.clone();
            l.sort_unstable();
            l.dedup();
            Alphabet::new(l)?
        }
    };
    Ok(SymbolSequence::from_labels(alphabet, &labels)?)
}

pub fn write_symbols<W: Write>(mut writer: W, seq: &SymbolSequence) -> Result<()> {
    let labels: Vec<String> = seq.alphabet().labels().iter().map(i64::to_string).collect();
    writeln!(writer, "{HEADER} {}", labels.join(" "))?;
    for l in seq.labels() {
        writeln!(writer, "{l}")?;
    }
    Ok(())
}

pub fn load_symbols(path: &Path) -> Result<SymbolSequence> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_symbols(f).with_context(|| format!("reading {}", path.display()))
}

pub fn save_symbols(path: &Path, seq: &SymbolSequence) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_symbols(&mut w, seq)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub ax: Vec<i64>,
    pub az: Vec<i64>,
    pub pi: Vec<Vec<f64>>,
}

impl ChannelFile {
    pub fn from_channel(ch: &ChannelMatrix) -> Self {
        Self {
            ax: ch.input().labels().to_vec(),
            az: ch.output().labels().to_vec(),
            pi: ch.pi().to_rows(),
        }
    }

    pub fn to_channel(&self) -> Result<ChannelMatrix> {
        Ok(ChannelMatrix::new(
            Alphabet::new(self.ax.clone())?,
            Alphabet::new(self.az.clone())?,
            &self.pi,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmFile {
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl HmmFile {
    pub fn from_model(h: &HmmModel) -> Self {
        Self {
            transition: h.transition().to_rows(),
            emission: h.emission().to_rows(),
            initial: h.initial().as_slice().to_vec(),
        }
    }

    pub fn to_model(&self) -> Result<HmmModel> {
        Ok(HmmModel::new(&self.transition, &self.emission, self.initial.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub version: u32,
    pub alphabet: Vec<i64>,
    pub gamma: f64,
    pub phrase_count: u64,
    pub traversals: u64,
    pub nodes: Vec<NodeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFile {
    pub count: u64,
    /// `(symbol index, child node id)` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<(usize, usize)>,
    pub edges: Vec<u64>,
}

impl TreeFile {
    pub fn from_tree(t: &Lz78Tree) -> Self {
        Self {
            version: TREE_FORMAT_VERSION,
            alphabet: t.alphabet().labels().to_vec(),
            gamma: t.gamma(),
            phrase_count: t.phrase_count(),
            traversals: t.traversals(),
            nodes: t
                .nodes()
                .map(|n| NodeFile {
                    count: n.count,
                    children: n.children().collect(),
                    edges: n.edges.to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_tree(&self) -> Result<Lz78Tree> {
        if self.version != TREE_FORMAT_VERSION {
            bail!(
                "tree file version {} is not supported (expected {TREE_FORMAT_VERSION})",
                self.version
            );
        }
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeParts {
                count: n.count,
                children: n.children.clone(),
                edges: n.edges.clone(),
            })
            .collect();
        Ok(Lz78Tree::from_parts(
            Alphabet::new(self.alphabet.clone())?,
            self.gamma,
            self.phrase_count,
            self.traversals,
            nodes,
        )?)
    }
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_tree(path: &Path) -> Result<Lz78Tree> {
    load_json::<TreeFile>(path)?.to_tree()
}

pub fn load_channel(path: &Path) -> Result<ChannelMatrix> {
    load_json::<ChannelFile>(path)?.to_channel()
}

/// Reads a file of real values, one per line; `#` lines are skipped.
pub fn load_reals(path: &Path) -> Result<Vec<f64>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(
            line.parse()
                .map_err(|e| anyhow!("{}:{}: {e}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

pub fn save_reals(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use udfilt_core::lz78::Growth;

    #[test]
    fn symbols_round_trip() {
        let a = Alphabet::new(vec![-2, 0, 2]).unwrap();
        let seq = SymbolSequence::from_labels(a, &[0, -2, 2, 2, 0]).unwrap();
        let mut buf = Vec::new();
        write_symbols(&mut buf, &seq).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("# alphabet: -2 0 2\n"));
        assert_eq!(read_symbols(&buf[..]).unwrap(), seq);
    }

    #[test]
    fn header_is_optional() {
        let seq = read_symbols(&b"1\n-1\n\n1\n"[..]).unwrap();
        assert_eq!(seq.alphabet().labels(), &[-1, 1]);
        assert_eq!(seq.symbols(), &[1, 0, 1]);
    }

    #[test]
    fn rejects_label_outside_header() {
        assert!(read_symbols(&b"# alphabet: 0 1\n0\n2\n"[..]).is_err());
        assert!(read_symbols(&b"# alphabet: 0 1\nx\n"[..]).is_err());
    }

    #[test]
    fn tree_round_trip() {
        let a = Alphabet::indexed(3).unwrap();
        let tree = Lz78Tree::build_shifted(&[0, 1, 2, 2, 1, 0, 0, 1, 2, 0], a, 0.5, Growth::OneLeaf)
            .unwrap()
            .prune(2);
        let json = serde_json::to_string(&TreeFile::from_tree(&tree)).unwrap();
        let back: TreeFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_tree().unwrap(), tree);
    }

    #[test]
    fn tree_version_checked() {
        let a = Alphabet::indexed(2).unwrap();
        let mut f = TreeFile::from_tree(&Lz78Tree::new(a, 0.5).unwrap());
        f.version = 99;
        assert!(f.to_tree().is_err());
    }

    #[test]
    fn channel_and_model_round_trip() {
        let ch = crate::presets::noise_channel();
        assert_eq!(ChannelFile::from_channel(&ch).to_channel().unwrap(), ch);
        let h = crate::presets::markov_hmm(0.2).unwrap();
        assert_eq!(HmmFile::from_model(&h).to_model().unwrap(), h);
    }
}
