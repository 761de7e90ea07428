use std::collections::BTreeMap;

use super::{
    check_link_death, check_merge, drop_in, duplicate_merge, find_split, first_valid_split, fmt_set, grow_shrink_in,
    merge_in, shrink_to_children_in, split_in, Operator, Partition, ReductionStep,
};
use crate::chordal::{JunctionTree, VarSet};
use crate::error::{Error, Result};
use crate::region_graph::{Clique, RegionGraph, RegionId};

/// A reduced graph together with the operators that produced it.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub graph: RegionGraph,
    pub trace: Vec<ReductionStep>,
}

pub(crate) struct Reducer {
    pub rg: RegionGraph,
    pub trace: Vec<ReductionStep>,
}

impl Reducer {
    pub fn new(rg: RegionGraph) -> Self {
        Reducer { rg, trace: Vec::new() }
    }

    fn log(&mut self, operator: Operator, targets: Vec<RegionId>, detail: String) {
        self.trace.push(ReductionStep {
            operator,
            targets,
            detail,
        });
    }

    pub fn prune_all(&mut self) {
        for id in self.rg.ids() {
            if let Ok(r) = self.rg.region_mut(id) {
                r.prune_cliques();
            }
        }
    }

    pub fn split(&mut self, id: RegionId, p: &Partition) -> Result<(RegionId, RegionId, Option<RegionId>)> {
        let out = split_in(&mut self.rg, id, p)?;
        let mut targets = vec![id, out.0, out.1];
        targets.extend(out.2);
        self.log(Operator::Split, targets, p.to_string());
        Ok(out)
    }

    pub fn grow_shrink(&mut self, id: RegionId, add: &[VarSet], remove: &[VarSet]) -> Result<()> {
        grow_shrink_in(&mut self.rg, id, add, remove)?;
        let fmt = |v: &[VarSet]| v.iter().map(fmt_set).collect::<Vec<_>>().join(" ");
        self.log(Operator::GrowShrink, vec![id], format!("add [{}] remove [{}]", fmt(add), fmt(remove)));
        Ok(())
    }

    pub fn shrink_to_children(&mut self, id: RegionId, keep_factor_scopes: bool) -> Result<bool> {
        let changed = shrink_to_children_in(&mut self.rg, id, keep_factor_scopes)?;
        if changed {
            self.log(Operator::GrowShrink, vec![id], "shrink to children".into());
        }
        Ok(changed)
    }

    fn try_merge(&mut self) -> bool {
        for (r, d) in self.rg.edges() {
            if check_merge(&self.rg, r, d).is_ok() && merge_in(&mut self.rg, r, d).is_ok() {
                self.log(Operator::Merge, vec![r, d], String::new());
                return true;
            }
        }
        false
    }

    fn try_drop(&mut self) -> bool {
        for id in self.rg.ids() {
            if self.rg.parents(id).len() == 1 && drop_in(&mut self.rg, id).is_ok() {
                self.log(Operator::Drop, vec![id], String::new());
                return true;
            }
        }
        false
    }

    fn try_link_death(&mut self, general: bool) -> bool {
        for (p, c) in self.rg.edges() {
            let ok = if general {
                check_link_death(&self.rg, p, c).is_ok()
            } else {
                self.rg.reachable_avoiding_edge(p, c)
            };
            if ok {
                self.rg.remove_edge(p, c);
                self.log(Operator::LinkDeath, vec![p, c], String::new());
                return true;
            }
        }
        false
    }

    fn try_duplicates(&mut self) -> bool {
        let before = self.rg.len();
        let next = duplicate_merge(&self.rg);
        if next.len() < before {
            let fused = before - next.len();
            self.rg = next;
            self.log(Operator::DuplicateMerge, Vec::new(), format!("{fused} fused"));
            return true;
        }
        false
    }

    /// Merge, drop, link-death and duplicate fusion until none applies.
    pub fn cleanup(&mut self, general_link_death: bool) {
        loop {
            self.prune_all();
            let changed = self.try_merge()
                || self.try_drop()
                || self.try_link_death(general_link_death)
                || self.try_duplicates();
            if !changed {
                break;
            }
        }
    }

    fn bottom_incomplete_inner(&self) -> Result<Option<RegionId>> {
        let order = self.rg.topological_order()?;
        for &id in order.iter().rev() {
            let r = self.rg.region(id)?;
            if self.rg.is_outer(id) || r.is_complete() {
                continue;
            }
            let children_complete = self
                .rg
                .children(id)
                .iter()
                .all(|&c| self.rg.region(c).map(|x| x.is_complete()).unwrap_or(false));
            if children_complete {
                return Ok(Some(id));
            }
        }
        Ok(None)
    }

    pub fn finish(self) -> Reduction {
        Reduction {
            graph: self.rg,
            trace: self.trace,
        }
    }
}

/// Reduces a structured region graph with decomposable inner regions to an
/// ordinary region graph (all inner regions complete).
///
/// Inner regions are split bottom-up along junction-tree separators; outer
/// regions are then split along complete separators wherever the children
/// allow it. Merges, drops, transitive link removal and duplicate fusion
/// run after every split.
pub fn reduce_to_ordinary(srg: &RegionGraph) -> Result<Reduction> {
    let mut red = Reducer::new(srg.clone());
    red.prune_all();
    red.cleanup(false);
    loop {
        while let Some(id) = red.bottom_incomplete_inner()? {
            let region = red.rg.region(id)?.clone();
            let p = find_split(&region).map_err(|e| match e {
                Error::NotDecomposable(_) => Error::NonDecomposableInnerRegion(id),
                other => other,
            })?;
            red.split(id, &p)?;
            red.cleanup(false);
        }
        let mut progressed = false;
        for id in red.rg.outer_regions() {
            if let Some(p) = first_valid_split(&red.rg, id) {
                red.split(id, &p)?;
                red.cleanup(false);
                progressed = true;
                break;
            }
        }
        if !progressed {
            break;
        }
    }
    if let Some(id) = red
        .rg
        .inner_regions()
        .into_iter()
        .find(|&id| !red.rg.region(id).map(|r| r.is_complete()).unwrap_or(true))
    {
        return Err(Error::NonDecomposableInnerRegion(id));
    }
    Ok(red.finish())
}

fn refine(red: &mut Reducer) -> Result<()> {
    let mut queue: Vec<RegionId> = red.rg.outer_regions();
    queue.reverse();
    while let Some(id) = queue.pop() {
        if !red.rg.contains(id) || !red.rg.is_outer(id) {
            continue;
        }
        let r = red.rg.region(id)?.clone();
        let g = r.structure_graph(red.rg.scopes());
        if g.is_clique(&r.vars) {
            continue;
        }
        let mut h = g.clone();
        for (a, b) in g.min_degree_fill() {
            h.add_edge(a, b);
        }
        let Some(maximal) = h.chordal_maximal_cliques() else {
            continue;
        };
        let current: Vec<VarSet> = r.cliques.iter().map(|c| c.0.clone()).collect();
        let mut sorted_max = maximal.clone();
        sorted_max.sort();
        let mut sorted_cur = current.clone();
        sorted_cur.sort();
        if sorted_max != sorted_cur {
            let remove: Vec<VarSet> = current.iter().filter(|c| !maximal.contains(c)).cloned().collect();
            red.grow_shrink(id, &maximal, &remove)?;
        }
        let Some(jt) = JunctionTree::build(maximal.iter()) else {
            continue;
        };
        for k in 1..jt.cliques.len() {
            let (a, b, s) = jt.cut(k);
            let p = Partition { a, b, s };
            if super::check_split(&red.rg, id, &p).is_ok() {
                let (ra, rb, _) = red.split(id, &p)?;
                red.cleanup(false);
                queue.push(rb);
                queue.push(ra);
                break;
            }
        }
    }
    Ok(())
}

/// Triangulates each outer region (min-degree fill, growing the maximal
/// cliques of the filled structure) and splits it along junction-tree
/// separators that respect its children.
pub fn refine_outer_regions(rg: &RegionGraph) -> Result<Reduction> {
    let mut red = Reducer::new(rg.clone());
    red.prune_all();
    refine(&mut red)?;
    red.cleanup(false);
    Ok(red.finish())
}

/// Shrinks every outer region to its children's cliques plus its own factor
/// scopes, then refines as [`refine_outer_regions`]. On grid boxes this
/// replaces each box by a triangulation of its grid structure.
pub fn triangulate_outer_regions(rg: &RegionGraph) -> Result<Reduction> {
    let mut red = Reducer::new(rg.clone());
    red.prune_all();
    for id in red.rg.outer_regions() {
        red.shrink_to_children(id, true)?;
    }
    refine(&mut red)?;
    red.cleanup(false);
    Ok(red.finish())
}

type StructKey = (VarSet, Option<Vec<VarSet>>);

fn structure_key(rg: &RegionGraph, id: RegionId) -> StructKey {
    let r = rg.region(id).expect("listed region");
    let cliques = (!rg.is_outer(id)).then(|| {
        let mut r = r.clone();
        r.prune_cliques();
        r.cliques.into_iter().map(|Clique(c)| c).collect()
    });
    (r.vars.clone(), cliques)
}

/// Compares two region graphs up to region ids: the multisets of regions
/// (variables, plus cliques for inner regions) and of links between them
/// must agree. Outer-region cliques and factor placement are ignored, since
/// grow/shrink and factor-move change them freely.
pub fn same_structure(a: &RegionGraph, b: &RegionGraph) -> bool {
    fn census(rg: &RegionGraph) -> (BTreeMap<StructKey, usize>, BTreeMap<(StructKey, StructKey), usize>) {
        let mut nodes = BTreeMap::new();
        for id in rg.ids() {
            *nodes.entry(structure_key(rg, id)).or_insert(0) += 1;
        }
        let mut edges = BTreeMap::new();
        for (p, c) in rg.edges() {
            *edges.entry((structure_key(rg, p), structure_key(rg, c))).or_insert(0) += 1;
        }
        (nodes, edges)
    }
    a.len() == b.len() && a.num_edges() == b.num_edges() && census(a) == census(b)
}
