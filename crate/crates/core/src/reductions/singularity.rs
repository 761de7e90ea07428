use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::reduce::Reducer;
use super::{first_valid_split, shrink_to_children_in};
use crate::chordal::{UGraph, VarSet};
use crate::error::{Error, Result};
use crate::factor_graph::VarId;
use crate::region_graph::{Clique, RegionGraph, RegionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    NonSingular,
    Singular,
    Unknown,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NonSingular => "non-singular",
            Verdict::Singular => "singular",
            Verdict::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone)]
pub enum Witness {
    /// The factor-free graph left when no operator applies any more.
    Residual(RegionGraph),
    /// Loop regions whose edges are all shared by at least two of them.
    Loops(Vec<RegionId>),
}

#[derive(Debug, Clone)]
pub struct SingularityVerdict {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

impl SingularityVerdict {
    pub fn is_singular(&self) -> bool {
        self.verdict == Verdict::Singular
    }

    pub fn is_nonsingular(&self) -> bool {
        self.verdict == Verdict::NonSingular
    }
}

/// Strips all factors and applies reduction operators until none applies:
/// drops, merges, link-deaths, shrinking outer regions to their children's
/// cliques, and splits of any region.
///
/// Single-variable regions only ⇒ non-singular. Stuck with complete inner
/// regions ⇒ singular. Stuck otherwise ⇒ unknown.
pub fn nonsingular_general(srg: &RegionGraph) -> SingularityVerdict {
    let mut rg = srg.clone();
    for id in rg.ids() {
        let r = rg.region_mut(id).expect("listed region");
        r.factors.clear();
        let covered: VarSet = r.cliques.iter().flat_map(|c| c.0.iter().copied()).collect();
        let loose: Vec<VarId> = r.vars.difference(&covered).copied().collect();
        for v in loose {
            r.cliques.insert(Clique::new([v]));
        }
    }
    let mut red = Reducer::new(rg);
    loop {
        red.cleanup(true);
        let mut changed = false;
        for id in red.rg.outer_regions() {
            if shrink_to_children_in(&mut red.rg, id, false).unwrap_or(false) {
                changed = true;
            }
        }
        if !changed {
            for id in red.rg.ids() {
                if let Some(p) = first_valid_split(&red.rg, id) {
                    if red.split(id, &p).is_ok() {
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let rg = red.rg;
    if rg.regions().all(|r| r.vars.len() <= 1) {
        return SingularityVerdict {
            verdict: Verdict::NonSingular,
            witness: None,
        };
    }
    let verdict = if rg.is_ordinary() {
        Verdict::Singular
    } else {
        Verdict::Unknown
    };
    SingularityVerdict {
        verdict,
        witness: Some(Witness::Residual(rg)),
    }
}

type Edge = (VarId, VarId);

fn cycle_of_edges(edges: &BTreeSet<Edge>) -> bool {
    let mut deg: BTreeMap<VarId, usize> = BTreeMap::new();
    for &(a, b) in edges {
        *deg.entry(a).or_insert(0) += 1;
        *deg.entry(b).or_insert(0) += 1;
    }
    if edges.len() < 3 || deg.values().any(|&d| d != 2) {
        return false;
    }
    let mut g = UGraph::default();
    for &(a, b) in edges {
        g.add_edge(a, b);
    }
    g.components().len() == 1
}

/// Loop regions of a loop-graph with their edge sets. A loop region is an
/// outer region with at least three variables whose cliques are the edges
/// of one cycle; a complete three-variable region counts as a triangle.
pub fn loop_cycles(rg: &RegionGraph) -> Result<Vec<(RegionId, BTreeSet<Edge>)>> {
    let mut out = Vec::new();
    for r in rg.regions() {
        if r.vars.len() < 3 {
            continue;
        }
        if !rg.is_outer(r.id) {
            return Err(Error::NotALoopGraph(format!("inner region {} has {} variables", r.id, r.vars.len())));
        }
        let edges: BTreeSet<Edge> = if r.is_complete() && r.vars.len() == 3 {
            let v: Vec<VarId> = r.vars.iter().copied().collect();
            [(v[0], v[1]), (v[0], v[2]), (v[1], v[2])].into_iter().collect()
        } else if r.cliques.iter().all(|c| c.0.len() == 2) {
            r.cliques
                .iter()
                .map(|c| {
                    let v: Vec<VarId> = c.0.iter().copied().collect();
                    (v[0], v[1])
                })
                .collect()
        } else {
            return Err(Error::NotALoopGraph(format!("region {} is neither a loop nor an edge", r.id)));
        };
        if !cycle_of_edges(&edges) {
            return Err(Error::NotALoopGraph(format!("cliques of region {} do not form a cycle", r.id)));
        }
        out.push((r.id, edges));
    }
    Ok(out)
}

/// Repeatedly removes any loop owning an edge that no other remaining loop
/// uses. Returns the indices of the loops that survive; the result does not
/// depend on the removal order.
pub fn peel_loops(loops: &[BTreeSet<Edge>]) -> Vec<usize> {
    let mut alive: BTreeSet<usize> = (0..loops.len()).collect();
    loop {
        let mut uses: BTreeMap<Edge, usize> = BTreeMap::new();
        for &k in &alive {
            for &e in &loops[k] {
                *uses.entry(e).or_insert(0) += 1;
            }
        }
        let peel: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&k| loops[k].iter().any(|e| uses[e] == 1))
            .collect();
        if peel.is_empty() {
            return alive.into_iter().collect();
        }
        for k in peel {
            alive.remove(&k);
        }
    }
}

/// Singularity of a loop-graph by loop peeling: singular iff some nonempty
/// set of loops shares every one of its edges.
pub fn loop_graph_singular(rg: &RegionGraph) -> Result<SingularityVerdict> {
    let loops = loop_cycles(rg)?;
    let sets: Vec<BTreeSet<Edge>> = loops.iter().map(|(_, e)| e.clone()).collect();
    let residual = peel_loops(&sets);
    Ok(if residual.is_empty() {
        SingularityVerdict {
            verdict: Verdict::NonSingular,
            witness: None,
        }
    } else {
        SingularityVerdict {
            verdict: Verdict::Singular,
            witness: Some(Witness::Loops(residual.into_iter().map(|k| loops[k].0).collect())),
        }
    })
}

/// True iff the loops' edge-incidence vectors are linearly dependent over
/// GF(2). Each loop is an ordered vertex cycle of `base_edges`.
pub fn cycle_space_dependent(loops: &[Vec<VarId>], base_edges: &BTreeSet<Edge>) -> Result<bool> {
    let index: BTreeMap<Edge, usize> = base_edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let words = base_edges.len().div_ceil(64).max(1);
    let mut rows: Vec<Vec<u64>> = Vec::with_capacity(loops.len());
    for cycle in loops {
        let distinct: BTreeSet<VarId> = cycle.iter().copied().collect();
        if cycle.len() < 3 || distinct.len() != cycle.len() {
            return Err(Error::NotACycle(cycle.clone()));
        }
        let mut row = vec![0u64; words];
        for i in 0..cycle.len() {
            let (a, b) = (cycle[i], cycle[(i + 1) % cycle.len()]);
            let k = *index.get(&(a.min(b), a.max(b))).ok_or_else(|| Error::NotACycle(cycle.clone()))?;
            row[k / 64] ^= 1 << (k % 64);
        }
        rows.push(row);
    }
    let mut rank = 0;
    for bit in 0..base_edges.len() {
        let (w, m) = (bit / 64, 1u64 << (bit % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & m != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & m != 0 {
                for (x, y) in row.iter_mut().zip(&pivot) {
                    *x ^= y;
                }
            }
        }
        rank += 1;
    }
    Ok(rank < loops.len())
}
