//! Fixed-point-preserving rewrites of structured region graphs.
//!
//! Every operator validates its preconditions before touching the graph and
//! returns a new graph; the input is never modified.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::chordal::{JunctionTree, VarSet};
use crate::error::{precondition, Error, Result};
use crate::factor_graph::FactorId;
use crate::region_graph::{is_decomposable, subsumes, Clique, Region, RegionGraph, RegionId};

mod reduce;
mod singularity;

pub use reduce::{reduce_to_ordinary, refine_outer_regions, same_structure, triangulate_outer_regions, Reduction};
pub use singularity::{
    cycle_space_dependent, loop_cycles, loop_graph_singular, nonsingular_general, peel_loops, SingularityVerdict,
    Verdict, Witness,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operator {
    LinkDeath,
    GrowShrink,
    Drop,
    FactorMove,
    Merge,
    Split,
    DuplicateMerge,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Operator::LinkDeath => "link-death",
            Operator::GrowShrink => "grow-shrink",
            Operator::Drop => "drop",
            Operator::FactorMove => "factor-move",
            Operator::Merge => "merge",
            Operator::Split => "split",
            Operator::DuplicateMerge => "duplicate-merge",
        };
        f.write_str(s)
    }
}

/// One applied operator, recorded for replay and inspection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionStep {
    pub operator: Operator,
    pub targets: Vec<RegionId>,
    pub detail: String,
}

impl fmt::Display for ReductionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.targets.iter().map(|t| t.to_string()).collect();
        write!(f, "{} [{}]", self.operator, ids.join(", "))?;
        if !self.detail.is_empty() {
            write!(f, " {}", self.detail)?;
        }
        Ok(())
    }
}

/// A split of a region's variables into two sides and a separator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub a: VarSet,
    pub b: VarSet,
    pub s: VarSet,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A={:?} B={:?} S={:?}", self.a, self.b, self.s)
    }
}

pub(crate) fn fmt_set(s: &VarSet) -> String {
    let v: Vec<String> = s.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", v.join(","))
}

/// The induced subregion `R[V]`: cliques of `r` restricted to `v` (empty
/// restrictions dropped, non-maximal ones pruned) and the factors whose
/// scope lies inside `v`.
pub fn induced_subregion(r: &Region, v: &VarSet, scopes: &BTreeMap<FactorId, VarSet>) -> Region {
    let cliques = r
        .cliques
        .iter()
        .map(|c| Clique(c.0.intersection(v).copied().collect()))
        .filter(|c| !c.0.is_empty());
    let mut out = Region::from_cliques(cliques);
    for &f in &r.factors {
        if scopes.get(&f).is_some_and(|s| s.is_subset(v)) {
            out.factors.insert(f);
            out.vars.extend(scopes[&f].iter().copied());
        }
    }
    out.prune_cliques();
    out
}

fn covered_vars(r: &Region, scopes: &BTreeMap<FactorId, VarSet>) -> VarSet {
    let mut v: VarSet = r.cliques.iter().flat_map(|c| c.0.iter().copied()).collect();
    for f in &r.factors {
        if let Some(s) = scopes.get(f) {
            v.extend(s.iter().copied());
        }
    }
    v
}

// ---------------------------------------------------------------- link-death

pub(crate) fn check_link_death(rg: &RegionGraph, r: RegionId, d: RegionId) -> Result<()> {
    if !rg.has_edge(r, d) {
        return Err(precondition("link-death", format!("no edge {r} -> {d}")));
    }
    if rg.reachable_avoiding_edge(r, d) {
        return Ok(());
    }
    let others: Vec<RegionId> = rg.parents(d).iter().copied().filter(|&p| p != r).collect();
    let an_r = rg.ancestors(r);
    let an_others: Vec<BTreeSet<RegionId>> = others.iter().map(|&p| rg.ancestors(p)).collect();
    let unrelated = others
        .iter()
        .zip(&an_others)
        .all(|(p, an_p)| !an_r.contains(p) && !an_p.contains(&r));
    if unrelated {
        for an_p in &an_others {
            for &a in an_r.intersection(an_p) {
                let mut allowed = rg.ancestors(a);
                allowed.insert(a);
                let isolated = an_others
                    .iter()
                    .all(|an_q| an_q.intersection(&an_r).all(|x| allowed.contains(x)));
                if isolated {
                    let mut trial = rg.clone();
                    trial.remove_edge(r, d);
                    if trial.counting_numbers()? == rg.counting_numbers()? {
                        return Ok(());
                    }
                }
            }
        }
    }
    Err(precondition(
        "link-death",
        format!("{d} is not reachable from {r} by another path and no common ancestor isolates the loop"),
    ))
}

/// Deletes the link `parent -> child`.
pub fn link_death(rg: &RegionGraph, parent: RegionId, child: RegionId) -> Result<RegionGraph> {
    check_link_death(rg, parent, child)?;
    let mut out = rg.clone();
    out.remove_edge(parent, child);
    Ok(out)
}

// --------------------------------------------------------------- grow/shrink

pub(crate) fn grow_shrink_in(rg: &mut RegionGraph, id: RegionId, add: &[VarSet], remove: &[VarSet]) -> Result<()> {
    let r = rg.region(id)?;
    if !rg.is_outer(id) {
        return Err(Error::NotOuterRegion(id));
    }
    let mut cliques = r.cliques.clone();
    for c in add {
        if c.is_empty() || !c.is_subset(&r.vars) {
            return Err(precondition(
                "grow-shrink",
                format!("added clique {} is empty or outside region {id}", fmt_set(c)),
            ));
        }
        cliques.insert(Clique(c.clone()));
    }
    for c in remove {
        if !r.cliques.contains(&Clique(c.clone())) {
            return Err(precondition(
                "grow-shrink",
                format!("region {id} has no clique {}", fmt_set(c)),
            ));
        }
        cliques.remove(&Clique(c.clone()));
    }
    for &ch in rg.children(id) {
        for dc in &rg.region(ch)?.cliques {
            if !cliques.iter().any(|c| dc.is_subset(c)) {
                let lost = remove
                    .iter()
                    .find(|c| dc.0.is_subset(c))
                    .cloned()
                    .unwrap_or_default();
                return Err(Error::ChildCliqueOrphaned {
                    region: id,
                    clique: lost.into_iter().collect(),
                });
            }
        }
    }
    let mut next = r.clone();
    next.cliques = cliques;
    let covered = covered_vars(&next, rg.scopes());
    for &v in next.vars.difference(&covered) {
        next.cliques.insert(Clique::new([v]));
    }
    *rg.region_mut(id)? = next;
    Ok(())
}

/// Adds and removes cliques of an outer region. Variables left without a
/// clique or factor keep a singleton clique, so the variable set never
/// changes.
pub fn grow_shrink(rg: &RegionGraph, id: RegionId, add: &[VarSet], remove: &[VarSet]) -> Result<RegionGraph> {
    let mut out = rg.clone();
    grow_shrink_in(&mut out, id, add, remove)?;
    Ok(out)
}

/// Replaces an outer region's cliques by the maximal cliques of its
/// children plus the scopes of its own factors; variables covered by none
/// of these keep singleton cliques.
pub(crate) fn shrink_to_children_in(rg: &mut RegionGraph, id: RegionId, keep_factor_scopes: bool) -> Result<bool> {
    let r = rg.region(id)?.clone();
    let mut target: BTreeSet<Clique> = BTreeSet::new();
    for &c in rg.children(id) {
        target.extend(rg.region(c)?.cliques.iter().cloned());
    }
    if keep_factor_scopes {
        for f in &r.factors {
            target.insert(Clique(rg.scopes()[f].clone()));
        }
    }
    let mut probe = Region::from_cliques(target);
    probe.prune_cliques();
    let covered: VarSet = probe.vars.clone();
    for &v in r.vars.difference(&covered) {
        probe.cliques.insert(Clique::new([v]));
    }
    if probe.cliques == r.cliques {
        return Ok(false);
    }
    let add: Vec<VarSet> = probe.cliques.iter().map(|c| c.0.clone()).collect();
    let remove: Vec<VarSet> = r
        .cliques
        .iter()
        .filter(|c| !probe.cliques.contains(*c))
        .map(|c| c.0.clone())
        .collect();
    grow_shrink_in(rg, id, &add, &remove)?;
    Ok(true)
}

// ---------------------------------------------------------------------- drop

pub(crate) fn drop_in(rg: &mut RegionGraph, id: RegionId) -> Result<()> {
    rg.region(id)?;
    let parents: Vec<RegionId> = rg.parents(id).iter().copied().collect();
    if parents.len() != 1 {
        return Err(if parents.is_empty() {
            precondition("drop", format!("region {id} has no parent"))
        } else {
            Error::MultipleParents(id)
        });
    }
    let children: Vec<RegionId> = rg.children(id).iter().copied().collect();
    rg.remove_region(id)?;
    for c in children {
        rg.add_edge(parents[0], c)?;
    }
    Ok(())
}

/// Removes a region with a unique parent, linking the parent to its
/// children.
pub fn drop_region(rg: &RegionGraph, id: RegionId) -> Result<RegionGraph> {
    let mut out = rg.clone();
    drop_in(&mut out, id)?;
    Ok(out)
}

// --------------------------------------------------------------- factor-move

/// Moves factor `f` between two outer regions sharing a child whose clique
/// covers the factor's scope.
pub fn factor_move(rg: &RegionGraph, f: FactorId, from: RegionId, to: RegionId) -> Result<RegionGraph> {
    for id in [from, to] {
        rg.region(id)?;
        if !rg.is_outer(id) {
            return Err(Error::NotOuterRegion(id));
        }
    }
    if !rg.region(from)?.factors.contains(&f) {
        return Err(precondition("factor-move", format!("region {from} does not hold factor {f}")));
    }
    let scope = rg
        .scope(f)
        .cloned()
        .ok_or_else(|| precondition("factor-move", format!("unknown factor {f}")))?;
    let shared = rg.children(from).intersection(rg.children(to)).any(|&c| {
        rg.region(c)
            .map(|d| d.cliques.iter().any(|cl| scope.is_subset(&cl.0)))
            .unwrap_or(false)
    });
    if from == to || !shared {
        return Err(Error::NoCoveringSharedChildClique { factor: f, from, to });
    }
    let mut out = rg.clone();
    out.region_mut(from)?.factors.remove(&f);
    let dest = out.region_mut(to)?;
    dest.factors.insert(f);
    dest.vars.extend(scope);
    Ok(out)
}

// --------------------------------------------------------------------- merge

pub(crate) fn check_merge(rg: &RegionGraph, r: RegionId, d: RegionId) -> Result<()> {
    if !rg.has_edge(r, d) {
        return Err(precondition("merge", format!("no edge {r} -> {d}")));
    }
    let (rr, dd) = (rg.region(r)?, rg.region(d)?);
    if !rr.factors.is_empty() {
        return Err(precondition("merge", "clause 1: parent carries factors"));
    }
    if !(subsumes(rr, dd) && subsumes(dd, rr)) {
        return Err(precondition("merge", "clause 2: regions do not subsume each other"));
    }
    let an_d = rg.ancestors(d);
    let mut allowed = rg.ancestors(r);
    allowed.insert(r);
    let de_d = rg.descendants(d);
    for &x in rg.children(r) {
        if x == d {
            continue;
        }
        if an_d.contains(&x) || de_d.contains(&x) {
            return Err(precondition(
                "merge",
                format!("clause 3: sibling {x} is related to {d} by ancestry"),
            ));
        }
        let an_x = rg.ancestors(x);
        if an_x.intersection(&an_d).any(|a| !allowed.contains(a)) {
            return Err(precondition(
                "merge",
                format!("clause 3: sibling {x} shares an ancestor with {d} outside the parent's ancestry"),
            ));
        }
    }
    Ok(())
}

pub(crate) fn merge_in(rg: &mut RegionGraph, r: RegionId, d: RegionId) -> Result<()> {
    check_merge(rg, r, d)?;
    let before = rg.counting_numbers()?;
    let expected = before.get(r) + before.get(d);
    let mut trial = rg.clone();
    let parents: Vec<RegionId> = trial.parents(r).iter().copied().collect();
    let children: Vec<RegionId> = trial.children(r).iter().copied().filter(|&c| c != d).collect();
    trial.remove_region(r)?;
    for p in parents {
        trial.add_edge(p, d)?;
    }
    for c in children {
        trial.add_edge(d, c)?;
    }
    let after = trial.counting_numbers()?;
    if after.get(d) != expected {
        return Err(precondition(
            "merge",
            format!("merged counting number {} differs from {expected}", after.get(d)),
        ));
    }
    *rg = trial;
    Ok(())
}

/// Merges factor-free parent `r` into its mutually subsuming child `d`. The
/// merged region keeps `d`'s id.
pub fn merge(rg: &RegionGraph, r: RegionId, d: RegionId) -> Result<RegionGraph> {
    let mut out = rg.clone();
    merge_in(&mut out, r, d)?;
    Ok(out)
}

// --------------------------------------------------------------------- split

struct SplitPlan {
    ra: Region,
    rb: Region,
    rs: Option<Region>,
}

fn plan_split(rg: &RegionGraph, id: RegionId, p: &Partition) -> Result<SplitPlan> {
    let r = rg.region(id)?;
    let disjoint = p.a.is_disjoint(&p.b) && p.a.is_disjoint(&p.s) && p.b.is_disjoint(&p.s);
    let union: VarSet = p.a.iter().chain(&p.b).chain(&p.s).copied().collect();
    if p.a.is_empty() || p.b.is_empty() || !disjoint || union != r.vars {
        return Err(precondition("split", format!("({p}) is not a partition of region {id}")));
    }
    let g = r.structure_graph(rg.scopes());
    if !g.separates(&p.a, &p.b) {
        return Err(Error::NotASeparator);
    }
    if !p.s.is_empty() && !r.cliques.iter().any(|c| p.s.is_subset(&c.0)) {
        return Err(Error::SeparatorNotComplete(p.s.iter().copied().collect()));
    }
    let side = |v: &VarSet| -> Region {
        let vs: VarSet = v.union(&p.s).copied().collect();
        let cl = r
            .cliques
            .iter()
            .map(|c| Clique(c.0.intersection(&vs).copied().collect()))
            .filter(|c| !c.0.is_empty());
        let mut out = Region::from_cliques(cl);
        out.prune_cliques();
        out
    };
    let (mut ra, mut rb) = (side(&p.a), side(&p.b));
    let a_s: VarSet = p.a.union(&p.s).copied().collect();
    let b_s: VarSet = p.b.union(&p.s).copied().collect();
    for &f in &r.factors {
        let scope = &rg.scopes()[&f];
        let target = if scope.is_subset(&a_s) {
            &mut ra
        } else if scope.is_subset(&b_s) {
            &mut rb
        } else {
            return Err(Error::FactorUncovered(f));
        };
        target.factors.insert(f);
        target.vars.extend(scope.iter().copied());
    }
    if ra.vars != a_s || rb.vars != b_s {
        return Err(precondition("split", "a side has variables covered by no clique or factor"));
    }
    for &c in rg.children(id) {
        let child = rg.region(c)?;
        if !subsumes(&ra, child) && !subsumes(&rb, child) {
            return Err(Error::ChildStraddlesSplit(c));
        }
    }
    let rs = (!p.s.is_empty()).then(|| Region::complete(p.s.clone()));
    Ok(SplitPlan { ra, rb, rs })
}

/// Checks every split precondition without applying it.
pub fn check_split(rg: &RegionGraph, id: RegionId, p: &Partition) -> Result<()> {
    plan_split(rg, id, p).map(|_| ())
}

/// Applies a split in place; returns the ids of `R[A∪S]`, `R[B∪S]` and, for
/// a nonempty separator, `R[S]`.
pub(crate) fn split_in(
    rg: &mut RegionGraph,
    id: RegionId,
    p: &Partition,
) -> Result<(RegionId, RegionId, Option<RegionId>)> {
    let plan = plan_split(rg, id, p)?;
    let parents: Vec<RegionId> = rg.parents(id).iter().copied().collect();
    let children: Vec<RegionId> = rg.children(id).iter().copied().collect();
    let descendants = rg.descendants(id);
    let ra = rg.add_region(plan.ra);
    let rb = rg.add_region(plan.rb);
    for &q in &parents {
        rg.add_edge(q, ra)?;
        rg.add_edge(q, rb)?;
    }
    let mut from_s = BTreeSet::new();
    let rs = match plan.rs {
        Some(region) => {
            let rs = rg.add_region(region);
            rg.add_edge(ra, rs)?;
            rg.add_edge(rb, rs)?;
            for &x in &descendants {
                if subsumes(rg.region(rs)?, rg.region(x)?) {
                    rg.add_edge(rs, x)?;
                    from_s.insert(x);
                }
            }
            Some(rs)
        }
        None => None,
    };
    for c in children {
        if from_s.contains(&c) {
            continue;
        }
        let target = if subsumes(rg.region(ra)?, rg.region(c)?) { ra } else { rb };
        rg.add_edge(target, c)?;
    }
    rg.remove_region(id)?;
    Ok((ra, rb, rs))
}

/// Replaces a region by `R[A∪S]`, `R[B∪S]` and (for nonempty `S`) the
/// factor-free complete region `R[S]`.
pub fn split(rg: &RegionGraph, id: RegionId, p: &Partition) -> Result<RegionGraph> {
    let mut out = rg.clone();
    split_in(&mut out, id, p)?;
    Ok(out)
}

/// A complete separator of a decomposable, incomplete region, taken from
/// the first edge of its junction tree.
pub fn find_split(r: &Region) -> Result<Partition> {
    let mut p = r.clone();
    p.prune_cliques();
    if p.is_complete() {
        return Err(Error::RegionComplete(r.id));
    }
    if !is_decomposable(&p.cliques) {
        return Err(Error::NotDecomposable(r.id));
    }
    let sets: Vec<VarSet> = p.cliques.iter().map(|c| c.0.clone()).collect();
    let jt = JunctionTree::build(sets.iter()).ok_or(Error::NotDecomposable(r.id))?;
    if jt.cliques.len() < 2 {
        return Err(Error::RegionComplete(r.id));
    }
    let (a, b, s) = jt.cut(1);
    Ok(Partition { a, b, s })
}

/// Candidate partitions of a region, in a fixed order: empty separators
/// when the structure is disconnected, then single cut vertices, then
/// larger complete separators drawn from subsets of cliques.
pub(crate) fn candidate_partitions(rg: &RegionGraph, id: RegionId) -> Vec<Partition> {
    let Ok(r) = rg.region(id) else {
        return Vec::new();
    };
    let g = r.structure_graph(rg.scopes());
    let mut seps: Vec<VarSet> = vec![VarSet::new()];
    seps.extend(r.vars.iter().map(|&v| [v].into_iter().collect::<VarSet>()));
    let mut larger: BTreeSet<VarSet> = BTreeSet::new();
    for c in &r.cliques {
        let items: Vec<usize> = c.0.iter().copied().collect();
        if items.len() > 12 {
            continue;
        }
        for mask in 1u32..(1 << items.len()) {
            if mask.count_ones() >= 2 {
                larger.insert((0..items.len()).filter(|i| mask >> i & 1 == 1).map(|i| items[i]).collect());
            }
        }
    }
    let mut larger: Vec<VarSet> = larger.into_iter().collect();
    larger.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    seps.extend(larger);

    let mut out = Vec::new();
    for s in seps {
        if !s.is_empty() && !r.cliques.iter().any(|c| s.is_subset(&c.0)) {
            continue;
        }
        let comps = g.components_without(&s);
        if comps.len() < 2 {
            continue;
        }
        for comp in &comps {
            let b: VarSet = r.vars.difference(comp).filter(|v| !s.contains(v)).copied().collect();
            out.push(Partition {
                a: comp.clone(),
                b,
                s: s.clone(),
            });
        }
    }
    out
}

/// First candidate partition satisfying every split precondition.
pub(crate) fn first_valid_split(rg: &RegionGraph, id: RegionId) -> Option<Partition> {
    candidate_partitions(rg, id)
        .into_iter()
        .find(|p| check_split(rg, id, p).is_ok())
}

// ----------------------------------------------------------- duplicate-merge

fn duplicate_pair(rg: &RegionGraph) -> Option<RegionGraph> {
    let mut classes: BTreeMap<_, Vec<RegionId>> = BTreeMap::new();
    for r in rg.regions() {
        if r.factors.is_empty() {
            classes.entry(r.content_key()).or_default().push(r.id);
        }
    }
    let total = rg.total_counting_number().ok()?;
    let valid = rg.validate().overall;
    for ids in classes.values().filter(|v| v.len() > 1) {
        for (i, &x) in ids.iter().enumerate() {
            for &y in &ids[i + 1..] {
                if rg.parents(x).is_disjoint(rg.parents(y))
                    || rg.ancestors(x).contains(&y)
                    || rg.ancestors(y).contains(&x)
                {
                    continue;
                }
                let mut trial = rg.clone();
                let ps: Vec<RegionId> = trial.parents(y).iter().copied().collect();
                let cs: Vec<RegionId> = trial.children(y).iter().copied().collect();
                trial.remove_region(y).ok()?;
                for p in ps {
                    trial.add_edge(p, x).ok()?;
                }
                for c in cs {
                    trial.add_edge(x, c).ok()?;
                }
                if trial.total_counting_number().ok() == Some(total) && (!valid || trial.validate().overall) {
                    return Some(trial);
                }
            }
        }
    }
    None
}

/// Fuses duplicate factor-free regions (same variables and cliques) that
/// share a parent and are therefore constrained to identical beliefs. A
/// fusion is applied only when it keeps the total counting number and the
/// validity of the graph.
pub fn duplicate_merge(rg: &RegionGraph) -> RegionGraph {
    let mut cur = rg.clone();
    while let Some(next) = duplicate_pair(&cur) {
        cur = next;
    }
    cur
}
