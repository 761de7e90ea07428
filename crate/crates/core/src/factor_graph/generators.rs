//! Random binary pairwise models in the spin convention.
//!
//! State 0 is spin −1 and state 1 is spin +1. A coupling `w` on edge
//! `(i, j)` gives the factor `exp(w·s_i·s_j)` and a bias `b` on node `i`
//! gives `exp(b·s_i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Factor, FactorGraph, VariableDecl};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialStyle {
    /// Couplings `Normal(0, 1)·strength`, biases `Normal(0, 1)·strength`.
    /// A stand-in for the tree-EP benchmark generator, whose exact recipe
    /// is not published.
    MinkaQi { strength: f64 },
    /// Couplings uniform on `[0, 0.1]`, biases uniform on `[0, 0.3]`.
    UniformSmall,
    /// Each candidate edge kept with probability `edge_prob`; couplings
    /// `Normal(0, 1/√(n−1))`, biases `Normal(0, 1)`.
    Gaussian { edge_prob: f64 },
}

impl Default for PotentialStyle {
    fn default() -> Self {
        PotentialStyle::UniformSmall
    }
}

impl PotentialStyle {
    fn coupling(&self, rng: &mut ChaCha8Rng, n: usize) -> f64 {
        match *self {
            PotentialStyle::MinkaQi { strength } => std_normal(rng) * strength,
            PotentialStyle::UniformSmall => rng.random_range(0.0..=0.1),
            PotentialStyle::Gaussian { .. } => {
                let sd = 1.0 / ((n.max(2) - 1) as f64).sqrt();
                std_normal(rng) * sd
            }
        }
    }

    fn bias(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            PotentialStyle::MinkaQi { strength } => std_normal(rng) * strength,
            PotentialStyle::UniformSmall => rng.random_range(0.0..=0.3),
            PotentialStyle::Gaussian { .. } => std_normal(rng),
        }
    }

    fn keep_edge(&self, rng: &mut ChaCha8Rng) -> bool {
        match *self {
            PotentialStyle::Gaussian { edge_prob } => rng.random::<f64>() < edge_prob,
            _ => true,
        }
    }
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

pub(crate) fn coupling_table(w: f64) -> Vec<f64> {
    vec![w.exp(), (-w).exp(), (-w).exp(), w.exp()]
}

pub(crate) fn bias_table(b: f64) -> Vec<f64> {
    vec![(-b).exp(), b.exp()]
}

fn binary_vars(n: usize) -> Vec<VariableDecl> {
    (0..n).map(|id| VariableDecl { id, cardinality: 2 }).collect()
}

/// Builds pairwise factors for `edges` followed by one bias factor per node.
fn assemble(
    n: usize,
    edges: &[(usize, usize)],
    style: PotentialStyle,
    rng: &mut ChaCha8Rng,
) -> Result<FactorGraph> {
    let mut factors = Vec::with_capacity(edges.len() + n);
    for &(i, j) in edges {
        let w = style.coupling(rng, n);
        factors.push(Factor::new(factors.len(), vec![i, j], coupling_table(w)));
    }
    for i in 0..n {
        let b = style.bias(rng);
        factors.push(Factor::new(factors.len(), vec![i], bias_table(b)));
    }
    FactorGraph::new(binary_vars(n), factors)
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Random pairwise model on the complete graph `K_n` (or a random subgraph
/// of it for [`PotentialStyle::Gaussian`]).
///
/// Pairwise factors come first in lexicographic edge order, then one bias
/// factor per node. Gaussian graphs that come out disconnected are redrawn
/// from the same stream until connected.
pub fn random_complete_model(n: usize, seed: u64, style: PotentialStyle) -> Result<FactorGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("complete model needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let edges = loop {
        let kept: Vec<(usize, usize)> = all.iter().copied().filter(|_| style.keep_edge(&mut rng)).collect();
        if connected(n, &kept) {
            break kept;
        }
    };
    assemble(n, &edges, style, &mut rng)
}

/// Random pairwise model on a random recursive tree: node `i ≥ 1` attaches
/// to a uniformly chosen earlier node.
pub fn random_tree_model(n: usize, seed: u64, style: PotentialStyle) -> Result<FactorGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("tree model needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    edges.sort();
    assemble(n, &edges, style, &mut rng)
}

/// Random pairwise model on the complete bipartite graph `K_{l,r}`.
///
/// Left nodes are `0..l`, right nodes `l..l+r`.
pub fn random_bipartite_model(
    n_left: usize,
    n_right: usize,
    seed: u64,
    style: PotentialStyle,
) -> Result<FactorGraph> {
    if n_left < 1 || n_right < 1 {
        return Err(Error::InvalidSize(format!(
            "bipartite model needs both sides >= 1, got {n_left}x{n_right}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = (0..n_left)
        .flat_map(|i| (n_left..n_left + n_right).map(move |j| (i, j)))
        .collect();
    assemble(n_left + n_right, &edges, style, &mut rng)
}

/// Random pairwise model on a `rows × cols` grid; node `(r, c)` has index
/// `r·cols + c`.
///
/// Only edge factors are produced: each node's bias is folded into the
/// first (lowest-id) edge factor touching it, so a `4×4` grid has exactly 24
/// factors and a `1×1` grid has none.
pub fn grid_model(rows: usize, cols: usize, seed: u64, style: PotentialStyle) -> Result<FactorGraph> {
    if rows < 1 || cols < 1 {
        return Err(Error::InvalidSize(format!("grid needs positive dimensions, got {rows}x{cols}")));
    }
    let n = rows * cols;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    edges.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = edges.iter().map(|_| style.coupling(&mut rng, n)).collect();
    let biases: Vec<f64> = (0..n).map(|_| style.bias(&mut rng)).collect();
    let mut absorbed = vec![false; n];
    let factors = edges
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(id, (&(i, j), &w))| {
            let mut t = coupling_table(w);
            for (pos, v) in [(0usize, i), (1usize, j)] {
                if !absorbed[v] {
                    absorbed[v] = true;
                    let bt = bias_table(biases[v]);
                    for (k, x) in t.iter_mut().enumerate() {
                        let s = if pos == 0 { k / 2 } else { k % 2 };
                        *x *= bt[s];
                    }
                }
            }
            Factor::new(id, vec![i, j], t)
        })
        .collect();
    FactorGraph::new(binary_vars(n), factors)
}
