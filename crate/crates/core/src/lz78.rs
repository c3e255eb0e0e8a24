//! LZ78 prefix trees and the sequential probability assignments built on them.
//!
//! [`Lz78Tree`] is the mutable training structure: an arena of nodes indexed
//! by `u32` ids, where node `v` keeps its traversal count and, per symbol
//! `a`, the number of training traversals that left `v` through `a`. The
//! edge counts are what the SPA normalizes. They stay on the parent when
//! pruning removes the child, so pruning never changes the prediction at a
//! surviving node.
//!
//! [`Lz78Spa`] freezes a tree for inference. A context is walked along its
//! longest suffix that is a path in the tree (Aho-Corasick style suffix
//! links), and predictions come from the deepest such node that has seen at
//! least one continuation.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::spa::Spa;
use crate::types::{validate_symbols, Alphabet, Pmf};

/// Dirichlet parameter used when none is given.
pub const DEFAULT_GAMMA: f64 = 0.5;

const NONE: u32 = u32::MAX;
const ROOT: u32 = 0;

/// How training traversals grow the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Growth {
    /// Each traversal stops after adding one leaf.
    OneLeaf,
    /// Each traversal keeps adding nodes until `max_depth` or the end of
    /// the data.
    FullPath { max_depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lz78Tree {
    alphabet: Alphabet,
    gamma: f64,
    phrase_count: u64,
    traversals: u64,
    /// `children[v * k + a]`, `NONE` when absent.
    children: Vec<u32>,
    counts: Vec<u64>,
    /// `edges[v * k + a]`: traversals that continued from `v` with `a`.
    edges: Vec<u64>,
}

impl Lz78Tree {
    /// A tree holding only the root.
    pub fn new(alphabet: Alphabet, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let k = alphabet.size();
        Ok(Self {
            alphabet,
            gamma,
            phrase_count: 0,
            traversals: 0,
            children: vec![NONE; k],
            counts: vec![0],
            edges: vec![0; k],
        })
    }

    /// Classic LZ78 incremental parsing. Each complete phrase adds one node;
    /// a trailing partial phrase only updates counts.
    pub fn build(seq: &[usize], alphabet: Alphabet, gamma: f64) -> Result<Self> {
        let mut tree = Self::new(alphabet, gamma)?;
        tree.check_input(seq)?;
        let mut i = 0;
        while i < seq.len() {
            let (consumed, added) = tree.traverse(&seq[i..], Growth::OneLeaf);
            tree.phrase_count += added as u64;
            i += consumed;
        }
        Ok(tree)
    }

    /// Input-shifted training: one root-started traversal per start
    /// position, so a sequence of length `n` performs `n` traversals.
    pub fn build_shifted(seq: &[usize], alphabet: Alphabet, gamma: f64, growth: Growth) -> Result<Self> {
        let mut tree = Self::new(alphabet, gamma)?;
        tree.train_shifted(seq, growth)?;
        Ok(tree)
    }

    /// Adds shifted traversals for `seq` to an existing tree.
    pub fn train_shifted(&mut self, seq: &[usize], growth: Growth) -> Result<()> {
        self.check_input(seq)?;
        if let Growth::FullPath { max_depth: 0 } = growth {
            return Err(Error::InvalidParameter("max_depth must be positive".into()));
        }
        for i in 0..seq.len() {
            let (_, added) = self.traverse(&seq[i..], growth);
            self.phrase_count += added as u64;
        }
        Ok(())
    }

    fn check_input(&self, seq: &[usize]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::InvalidParameter("training sequence is empty".into()));
        }
        validate_symbols(seq, self.k())
    }

    /// One traversal from the root. Returns the number of symbols consumed
    /// and the number of nodes added.
    fn traverse(&mut self, data: &[usize], growth: Growth) -> (usize, usize) {
        let k = self.k();
        self.traversals += 1;
        self.counts[ROOT as usize] += 1;
        let mut node = ROOT as usize;
        let mut added = 0;
        for (depth, &sym) in data.iter().enumerate() {
            let slot = node * k + sym;
            self.edges[slot] += 1;
            let child = self.children[slot];
            if child == NONE {
                let id = self.push_node();
                self.children[slot] = id;
                self.counts[id as usize] = 1;
                added += 1;
                node = id as usize;
                match growth {
                    Growth::OneLeaf => return (depth + 1, added),
                    Growth::FullPath { max_depth } if depth + 1 >= max_depth => {
                        return (depth + 1, added)
                    }
                    Growth::FullPath { .. } => {}
                }
            } else {
                node = child as usize;
                self.counts[node] += 1;
            }
        }
        (data.len(), added)
    }

    fn push_node(&mut self) -> u32 {
        let id = self.counts.len();
        assert!(id < NONE as usize, "LZ78 tree exceeds u32 node ids");
        self.counts.push(0);
        self.children.extend(core::iter::repeat_n(NONE, self.k()));
        self.edges.extend(core::iter::repeat_n(0, self.k()));
        id as u32
    }

    /// Removes every node whose count is below `n_th`, with its subtree.
    /// The root always survives. Surviving nodes keep their relative order.
    pub fn prune(&self, n_th: u64) -> Self {
        let k = self.k();
        let n = self.node_count();
        // Children always have larger ids than their parents, so one
        // ascending pass settles every node.
        let mut remap = vec![NONE; n];
        remap[0] = ROOT;
        let mut next_id = 1u32;
        for v in 0..n {
            if remap[v] == NONE {
                continue;
            }
            for a in 0..k {
                let c = self.children[v * k + a];
                if c != NONE && self.counts[c as usize] >= n_th {
                    remap[c as usize] = 0;
                }
            }
            if v > 0 {
                remap[v] = next_id;
                next_id += 1;
            }
        }
        let kept = next_id as usize;
        let mut out = Self {
            alphabet: self.alphabet.clone(),
            gamma: self.gamma,
            phrase_count: self.phrase_count,
            traversals: self.traversals,
            children: Vec::with_capacity(kept * k),
            counts: Vec::with_capacity(kept),
            edges: Vec::with_capacity(kept * k),
        };
        for v in (0..n).filter(|&v| remap[v] != NONE) {
            out.counts.push(self.counts[v]);
            out.edges.extend_from_slice(&self.edges[v * k..(v + 1) * k]);
            out.children.extend(self.children[v * k..(v + 1) * k].iter().map(|&c| {
                if c == NONE {
                    NONE
                } else {
                    remap[c as usize]
                }
            }));
        }
        out
    }

    #[inline]
    fn k(&self) -> usize {
        self.alphabet.size()
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(())
    }

    /// Nodes added by training, summed over all traversals. Equals
    /// [`Lz78Tree::node_count`] minus one for an unpruned tree.
    pub fn phrase_count(&self) -> u64 {
        self.phrase_count
    }

    /// Training traversals performed.
    pub fn traversals(&self) -> u64 {
        self.traversals
    }

    /// Nodes including the root.
    pub fn node_count(&self) -> usize {
        self.counts.len()
    }

    pub fn root(&self) -> usize {
        ROOT as usize
    }

    pub fn count(&self, node: usize) -> u64 {
        self.counts[node]
    }

    pub fn child(&self, node: usize, symbol: usize) -> Option<usize> {
        match self.children[node * self.k() + symbol] {
            NONE => None,
            c => Some(c as usize),
        }
    }

    /// Per-symbol continuation counts at `node`.
    pub fn edge_counts(&self, node: usize) -> &[u64] {
        let k = self.k();
        &self.edges[node * k..(node + 1) * k]
    }

    pub fn depth(&self) -> usize {
        let k = self.k();
        let mut best = 0;
        let mut stack = vec![(ROOT, 0usize)];
        while let Some((v, d)) = stack.pop() {
            best = best.max(d);
            for a in 0..k {
                let c = self.children[v as usize * k + a];
                if c != NONE {
                    stack.push((c, d + 1));
                }
            }
        }
        best
    }

    /// Node reached by walking `path` from the root, if it exists.
    pub fn find(&self, path: &[usize]) -> Option<usize> {
        path.iter()
            .try_fold(ROOT as usize, |v, &a| self.child(v, a))
    }

    /// Node whose counts drive the prediction after `context`: the deepest
    /// tree path matching a suffix of the context that has seen at least
    /// one continuation, or the root.
    pub fn context_node(&self, context: &[usize]) -> Result<usize> {
        validate_symbols(context, self.k())?;
        for start in 0..context.len() {
            if let Some(v) = self.find(&context[start..]) {
                if self.edge_counts(v).iter().any(|&c| c > 0) {
                    return Ok(v);
                }
            }
        }
        Ok(ROOT as usize)
    }

    /// `(N_a + γ) / (Σ_b N_b + γ|A|)` at the context node.
    pub fn dirichlet_prob(&self, context: &[usize]) -> Result<Pmf> {
        let v = self.context_node(context)?;
        Ok(dirichlet(self.edge_counts(v), self.gamma))
    }

    /// Counts at the context node normalized by their sum.
    pub fn naive_prob(&self, context: &[usize]) -> Result<Pmf> {
        validate_symbols(context, self.k())?;
        // Deepest matching suffix, without skipping nodes that have no
        // continuations: that is exactly where the naive rule breaks down.
        let v = (0..=context.len())
            .find_map(|s| self.find(&context[s..]))
            .unwrap_or(ROOT as usize);
        naive(self.edge_counts(v))
    }

    /// Raw arena for serialization: per node, its count, its children as
    /// `(symbol, child id)` and its edge counts.
    pub fn nodes(&self) -> impl Iterator<Item = NodeView<'_>> + '_ {
        let k = self.k();
        (0..self.node_count()).map(move |v| NodeView {
            count: self.counts[v],
            children: &self.children[v * k..(v + 1) * k],
            edges: &self.edges[v * k..(v + 1) * k],
        })
    }

    /// Rebuilds a tree from serialized parts, checking that the links form
    /// a tree rooted at node 0 with every child id above its parent's.
    pub fn from_parts(
        alphabet: Alphabet,
        gamma: f64,
        phrase_count: u64,
        traversals: u64,
        nodes: Vec<NodeParts>,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        let k = alphabet.size();
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidParameter("tree has no root".into()));
        }
        let mut tree = Self {
            alphabet,
            gamma,
            phrase_count,
            traversals,
            children: vec![NONE; n * k],
            counts: Vec::with_capacity(n),
            edges: Vec::with_capacity(n * k),
        };
        let mut has_parent = vec![false; n];
        for (v, node) in nodes.into_iter().enumerate() {
            if node.edges.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: node.edges.len(),
                });
            }
            for (sym, c) in node.children {
                if sym >= k || c <= v || c >= n || has_parent[c] {
                    return Err(Error::InvalidParameter(format!(
                        "bad child link {sym} -> {c} at node {v}"
                    )));
                }
                has_parent[c] = true;
                tree.children[v * k + sym] = c as u32;
            }
            tree.counts.push(node.count);
            tree.edges.extend(node.edges);
        }
        // Every non-root node has one parent; reachability rules out cycles.
        let mut seen = 1;
        let mut stack = vec![ROOT as usize];
        while let Some(v) = stack.pop() {
            for a in 0..k {
                if let Some(c) = tree.child(v, a) {
                    seen += 1;
                    stack.push(c);
                }
            }
        }
        if seen != n || has_parent.iter().skip(1).any(|p| !p) {
            return Err(Error::InvalidParameter("node links do not form a tree".into()));
        }
        Ok(tree)
    }

    /// Frozen SPA over this tree with the default walk.
    pub fn spa(&self) -> Lz78Spa {
        Lz78Spa::new(self, Walk::LongestSuffix)
    }
}

/// Borrowed view of one arena node.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    pub count: u64,
    children: &'a [u32],
    pub edges: &'a [u64],
}

impl NodeView<'_> {
    pub fn children(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.children
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != NONE)
            .map(|(a, &c)| (a, c as usize))
    }
}

/// Owned node data for [`Lz78Tree::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParts {
    pub count: u64,
    pub children: Vec<(usize, usize)>,
    pub edges: Vec<u64>,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma must be positive and finite, got {gamma}")))
    }
}

/// Dirichlet-smoothed normalization of counts.
pub fn dirichlet(counts: &[u64], gamma: f64) -> Pmf {
    let total: u64 = counts.iter().sum();
    let denom = total as f64 + gamma * counts.len() as f64;
    Pmf::from_normalized(
        counts
            .iter()
            .map(|&c| (c as f64 + gamma) / denom)
            .collect(),
    )
}

/// Counts normalized by their sum.
pub fn naive(counts: &[u64]) -> Result<Pmf> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NaiveUndefined);
    }
    Ok(Pmf::from_normalized(
        counts.iter().map(|&c| c as f64 / total as f64).collect(),
    ))
}

/// Inference-time traversal convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Walk {
    /// Track the longest suffix of the context that is a tree path.
    LongestSuffix,
    /// Follow child links; when the next symbol has no child, restart from
    /// the root and take that symbol's root edge if there is one.
    RestartAtRoot,
}

/// A frozen LZ78 tree with precomputed transitions and predictions.
#[derive(Debug, Clone)]
pub struct Lz78Spa {
    k: usize,
    gamma: f64,
    walk: Walk,
    /// `next[v * k + a]`: state after reading `a` in state `v`.
    next: Vec<u32>,
    /// Dirichlet prediction per state, flattened.
    probs: Vec<f64>,
}

impl Lz78Spa {
    pub fn new(tree: &Lz78Tree, walk: Walk) -> Self {
        let k = tree.k();
        let n = tree.node_count();
        let mut next = vec![ROOT; n * k];
        let mut link = vec![ROOT; n];
        // Breadth-first order guarantees a node's link is final before its
        // children are processed.
        let mut queue = VecDeque::from([ROOT]);
        while let Some(v) = queue.pop_front() {
            let vu = v as usize;
            for a in 0..k {
                let c = tree.children[vu * k + a];
                let fallback = if v == ROOT {
                    ROOT
                } else {
                    next[link[vu] as usize * k + a]
                };
                if c == NONE {
                    next[vu * k + a] = fallback;
                } else {
                    next[vu * k + a] = c;
                    link[c as usize] = fallback;
                    queue.push_back(c);
                }
            }
        }
        if walk == Walk::RestartAtRoot {
            for v in 0..n {
                for a in 0..k {
                    if tree.children[v * k + a] == NONE {
                        next[v * k + a] = match tree.children[a] {
                            NONE => ROOT,
                            r => r,
                        };
                    }
                }
            }
        }
        // Predicting node: nearest suffix-link ancestor (self included) with
        // continuation counts. Links point to shallower nodes, so resolving
        // in BFS order sees every link target first.
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([ROOT]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for a in 0..k {
                let c = tree.children[v as usize * k + a];
                if c != NONE {
                    queue.push_back(c);
                }
            }
        }
        let mut source = vec![ROOT; n];
        for &v in &order {
            let vu = v as usize;
            source[vu] = if v == ROOT || tree.edge_counts(vu).iter().any(|&c| c > 0) {
                v
            } else {
                source[link[vu] as usize]
            };
        }
        let mut probs = vec![0.0; n * k];
        for v in 0..n {
            let p = dirichlet(tree.edge_counts(source[v] as usize), tree.gamma);
            probs[v * k..(v + 1) * k].copy_from_slice(p.as_slice());
        }
        Self {
            k,
            gamma: tree.gamma,
            walk,
            next,
            probs,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn walk(&self) -> Walk {
        self.walk
    }

    pub fn states(&self) -> usize {
        self.probs.len() / self.k
    }
}

impl Spa for Lz78Spa {
    type State = u32;

    fn alphabet_size(&self) -> usize {
        self.k
    }

    fn start(&self) -> u32 {
        ROOT
    }

    #[inline]
    fn advance(&self, state: &u32, symbol: usize) -> u32 {
        self.next[*state as usize * self.k + symbol]
    }

    #[inline]
    fn predict_into(&self, state: &u32, out: &mut [f64]) {
        let s = *state as usize * self.k;
        out.copy_from_slice(&self.probs[s..s + self.k]);
    }
}
