use std::collections::{BTreeMap, BTreeSet};

use super::{add_factor_logs, damp_into, log_marginal, normalize_floor, BeliefSet, Engine, Layout};
use crate::error::Result;
use crate::factor_graph::{FactorGraph, VarId};
use crate::region_graph::{RegionGraph, RegionId};
use crate::table;

/// Messages on every edge `P → C` over the child's variables. The belief of
/// `R` multiplies the factors owned inside `E(R)` (R and its descendants) by
/// every message entering `E(R)` from outside; an update rescales `P → C` by
/// the ratio of the parent's marginal on `C` to the child's belief.
pub(crate) struct ParentToChild {
    layout: Layout,
    log_pot: Vec<Vec<f64>>,
    edges: Vec<(usize, usize)>,
    edge_proj: Vec<Vec<usize>>,
    /// Messages entering `E(R)` from outside: (edge, region state → child state).
    incoming: Vec<Vec<(usize, Vec<usize>)>>,
    msgs: Vec<Vec<f64>>,
}

impl ParentToChild {
    pub fn new(rg: &RegionGraph, fg: &FactorGraph, layout: Layout) -> Result<Self> {
        let card = |v: VarId| fg.cardinality(v);
        let mut edges = Vec::new();
        let mut edge_index = BTreeMap::new();
        for (k, &id) in layout.ids.iter().enumerate() {
            for c in rg.children(id) {
                edge_index.insert((k, layout.index[c]), edges.len());
                edges.push((k, layout.index[c]));
            }
        }
        let edge_proj = edges
            .iter()
            .map(|&(p, c)| table::projection(&layout.vars[p], &layout.vars[c], card))
            .collect();
        let mut log_pot = Vec::with_capacity(layout.ids.len());
        let mut incoming = Vec::with_capacity(layout.ids.len());
        for (k, &id) in layout.ids.iter().enumerate() {
            let mut inside: BTreeSet<RegionId> = rg.descendants(id);
            inside.insert(id);
            let mut pot = vec![0.0; layout.states(k)];
            for &d in &inside {
                add_factor_logs(fg, &layout.vars[k], rg.region(d)?.factors.iter().copied(), &mut pot);
            }
            log_pot.push(pot);
            let mut inc = Vec::new();
            for &d in &inside {
                for p in rg.parents(d) {
                    if !inside.contains(p) {
                        let di = layout.index[&d];
                        let e = edge_index[&(layout.index[p], di)];
                        inc.push((e, table::projection(&layout.vars[k], &layout.vars[di], card)));
                    }
                }
            }
            incoming.push(inc);
        }
        let msgs = edges
            .iter()
            .map(|&(_, c)| {
                let n = layout.states(c);
                vec![-(n as f64).ln(); n]
            })
            .collect();
        Ok(ParentToChild {
            layout,
            log_pot,
            edges,
            edge_proj,
            incoming,
            msgs,
        })
    }

    fn log_belief(&self, k: usize) -> Vec<f64> {
        let mut b = self.log_pot[k].clone();
        for (e, proj) in &self.incoming[k] {
            let m = &self.msgs[*e];
            for (x, &s) in b.iter_mut().zip(proj) {
                *x += m[s];
            }
        }
        b
    }
}

impl Engine for ParentToChild {
    fn units(&self) -> usize {
        self.edges.len()
    }

    fn update(&mut self, e: usize, damping: f64) -> f64 {
        let (p, c) = self.edges[e];
        let marg = log_marginal(&self.log_belief(p), &self.edge_proj[e], self.layout.states(c));
        let bc = self.log_belief(c);
        let old = &self.msgs[e];
        let mut cand: Vec<f64> = (0..bc.len()).map(|s| old[s] + marg[s] - bc[s]).collect();
        normalize_floor(&mut cand);
        damp_into(&mut self.msgs[e], &cand, damping)
    }

    fn keys(&self) -> Vec<(RegionId, RegionId)> {
        self.edges
            .iter()
            .map(|&(p, c)| (self.layout.ids[p], self.layout.ids[c]))
            .collect()
    }

    fn messages_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.msgs
    }

    fn beliefs(&self) -> BeliefSet {
        (0..self.layout.ids.len())
            .map(|k| (self.layout.ids[k], self.layout.belief(k, &self.log_belief(k))))
            .collect()
    }
}
