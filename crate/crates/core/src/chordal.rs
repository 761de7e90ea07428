//! Undirected variable graphs, maximum-cardinality search, decomposable
//! clique sets and junction trees.

use std::collections::{BTreeMap, BTreeSet};

use crate::factor_graph::VarId;

pub type VarSet = BTreeSet<VarId>;

/// Simple undirected graph over variable ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UGraph {
    adj: BTreeMap<VarId, BTreeSet<VarId>>,
}

impl UGraph {
    pub fn with_nodes(nodes: impl IntoIterator<Item = VarId>) -> Self {
        UGraph {
            adj: nodes.into_iter().map(|v| (v, BTreeSet::new())).collect(),
        }
    }

    /// Union graph of a family of variable sets: every set becomes a clique.
    pub fn from_sets<'a>(sets: impl IntoIterator<Item = &'a VarSet>) -> Self {
        let mut g = UGraph::default();
        for s in sets {
            g.add_clique(s);
        }
        g
    }

    pub fn add_node(&mut self, v: VarId) {
        self.adj.entry(v).or_default();
    }

    pub fn add_edge(&mut self, a: VarId, b: VarId) {
        if a == b {
            self.add_node(a);
            return;
        }
        self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
    }

    pub fn add_clique(&mut self, s: &VarSet) {
        for &a in s {
            self.add_node(a);
            for &b in s {
                if a < b {
                    self.add_edge(a, b);
                }
            }
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = VarId> + '_ {
        self.adj.keys().copied()
    }

    pub fn node_set(&self) -> VarSet {
        self.adj.keys().copied().collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: VarId) -> &BTreeSet<VarId> {
        static EMPTY: BTreeSet<VarId> = BTreeSet::new();
        self.adj.get(&v).unwrap_or(&EMPTY)
    }

    pub fn has_edge(&self, a: VarId, b: VarId) -> bool {
        self.neighbors(a).contains(&b)
    }

    /// Edges as ordered pairs `(a, b)` with `a < b`.
    pub fn edges(&self) -> BTreeSet<(VarId, VarId)> {
        self.adj
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    pub fn is_clique(&self, s: &VarSet) -> bool {
        s.iter()
            .all(|&a| s.iter().all(|&b| a == b || self.has_edge(a, b)))
    }

    /// Connected components after deleting `removed`, sorted by minimum id.
    pub fn components_without(&self, removed: &VarSet) -> Vec<VarSet> {
        let mut seen: VarSet = removed.clone();
        let mut out = Vec::new();
        for &start in self.adj.keys() {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = VarSet::new();
            let mut stack = vec![start];
            seen.insert(start);
            while let Some(v) = stack.pop() {
                comp.insert(v);
                for &w in self.neighbors(v) {
                    if seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    pub fn components(&self) -> Vec<VarSet> {
        self.components_without(&VarSet::new())
    }

    /// True when no edge joins `a` and `b` directly.
    pub fn separates(&self, a: &VarSet, b: &VarSet) -> bool {
        a.iter()
            .all(|&x| self.neighbors(x).iter().all(|y| !b.contains(y)))
    }

    /// Maximum-cardinality search order; ties go to the lowest id.
    pub fn mcs_order(&self) -> Vec<VarId> {
        let mut weight: BTreeMap<VarId, usize> = self.adj.keys().map(|&v| (v, 0)).collect();
        let mut order = Vec::with_capacity(self.adj.len());
        while !weight.is_empty() {
            let (&v, _) = weight
                .iter()
                .max_by(|(a, wa), (b, wb)| wa.cmp(wb).then(b.cmp(a)))
                .expect("nonempty");
            weight.remove(&v);
            for w in self.neighbors(v) {
                if let Some(x) = weight.get_mut(w) {
                    *x += 1;
                }
            }
            order.push(v);
        }
        order
    }

    /// Chordality test via the MCS order: every vertex's earlier neighbours
    /// must form a clique.
    pub fn is_chordal(&self) -> bool {
        let order = self.mcs_order();
        let pos: BTreeMap<VarId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        order.iter().all(|&v| {
            let earlier: VarSet = self
                .neighbors(v)
                .iter()
                .copied()
                .filter(|w| pos[w] < pos[&v])
                .collect();
            self.is_clique(&earlier)
        })
    }

    /// Maximal cliques of a chordal graph, ordered by MCS rank. The result
    /// satisfies the running intersection property. Returns `None` when the
    /// graph is not chordal.
    pub fn chordal_maximal_cliques(&self) -> Option<Vec<VarSet>> {
        if !self.is_chordal() {
            return None;
        }
        let order = self.mcs_order();
        let pos: BTreeMap<VarId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let candidates: Vec<VarSet> = order
            .iter()
            .map(|&v| {
                let mut c: VarSet = self
                    .neighbors(v)
                    .iter()
                    .copied()
                    .filter(|w| pos[w] < pos[&v])
                    .collect();
                c.insert(v);
                c
            })
            .collect();
        let mut out: Vec<VarSet> = Vec::new();
        for (i, c) in candidates.iter().enumerate() {
            let dominated = candidates
                .iter()
                .enumerate()
                .any(|(j, d)| j != i && c.is_subset(d) && (c != d || j < i));
            if !dominated {
                out.push(c.clone());
            }
        }
        Some(out)
    }

    /// Fill-in edges from greedy min-degree elimination (lowest id breaks
    /// ties). Adding them makes the graph chordal.
    pub fn min_degree_fill(&self) -> BTreeSet<(VarId, VarId)> {
        let mut g = self.clone();
        let mut fill = BTreeSet::new();
        let mut remaining: VarSet = g.node_set();
        while let Some(&v) = remaining
            .iter()
            .min_by_key(|&&v| (g.neighbors(v).iter().filter(|w| remaining.contains(w)).count(), v))
        {
            let nb: Vec<VarId> = g
                .neighbors(v)
                .iter()
                .copied()
                .filter(|w| remaining.contains(w))
                .collect();
            for (i, &a) in nb.iter().enumerate() {
                for &b in &nb[i + 1..] {
                    if !g.has_edge(a, b) {
                        g.add_edge(a, b);
                        fill.insert((a.min(b), a.max(b)));
                    }
                }
            }
            remaining.remove(&v);
        }
        fill
    }
}

/// True iff `cliques` are exactly the maximal cliques of a chordal graph.
pub fn is_decomposable<'a>(cliques: impl IntoIterator<Item = &'a VarSet>) -> bool {
    let given: BTreeSet<VarSet> = cliques.into_iter().cloned().collect();
    if given.iter().any(|c| c.is_empty()) {
        return false;
    }
    let g = UGraph::from_sets(given.iter());
    match g.chordal_maximal_cliques() {
        Some(m) => m.into_iter().collect::<BTreeSet<_>>() == given,
        None => false,
    }
}

/// A junction forest over a decomposable clique set.
#[derive(Debug, Clone)]
pub struct JunctionTree {
    /// Cliques in running-intersection order.
    pub cliques: Vec<VarSet>,
    /// `attach[k]` is the earlier clique that clique `k` hangs from
    /// (`None` for the first clique).
    pub attach: Vec<Option<usize>>,
    /// `separators[k]` is `cliques[k] ∩ cliques[attach[k]]` (empty between
    /// components).
    pub separators: Vec<VarSet>,
}

impl JunctionTree {
    /// Builds a junction forest; `None` when the cliques are not
    /// decomposable.
    pub fn build<'a>(cliques: impl IntoIterator<Item = &'a VarSet>) -> Option<Self> {
        let given: Vec<VarSet> = cliques.into_iter().cloned().collect();
        if !is_decomposable(given.iter()) {
            return None;
        }
        let g = UGraph::from_sets(given.iter());
        let ordered = g.chordal_maximal_cliques()?;
        if ordered.is_empty() {
            return Some(JunctionTree {
                cliques: Vec::new(),
                attach: Vec::new(),
                separators: Vec::new(),
            });
        }
        let mut attach = vec![None];
        let mut separators = vec![VarSet::new()];
        let mut seen: VarSet = ordered[0].clone();
        for k in 1..ordered.len() {
            let sep: VarSet = ordered[k].intersection(&seen).copied().collect();
            let host = (0..k).find(|&j| sep.is_subset(&ordered[j]))?;
            attach.push(Some(host));
            separators.push(sep);
            seen.extend(ordered[k].iter().copied());
        }
        Some(JunctionTree {
            cliques: ordered,
            attach,
            separators,
        })
    }

    /// Cliques in the subtree hanging from clique `k` (inclusive).
    pub fn subtree(&self, k: usize) -> BTreeSet<usize> {
        let mut out: BTreeSet<usize> = [k].into_iter().collect();
        // attach points to earlier cliques, so one forward pass suffices
        for j in (k + 1)..self.cliques.len() {
            if let Some(h) = self.attach[j] {
                if out.contains(&h) {
                    out.insert(j);
                }
            }
        }
        out
    }

    /// The two variable sets obtained by cutting the edge above clique `k`.
    pub fn cut(&self, k: usize) -> (VarSet, VarSet, VarSet) {
        let below = self.subtree(k);
        let mut upper = VarSet::new();
        let mut lower = VarSet::new();
        for (j, c) in self.cliques.iter().enumerate() {
            if below.contains(&j) {
                lower.extend(c.iter().copied());
            } else {
                upper.extend(c.iter().copied());
            }
        }
        let s = self.separators[k].clone();
        let a = upper.difference(&s).copied().collect();
        let b = lower.difference(&s).copied().collect();
        (a, b, s)
    }
}
