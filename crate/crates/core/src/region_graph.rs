//! Structured region graphs: a DAG of regions, each carrying variables,
//! cliques (the discrete exponential family) and, for outer regions, the
//! model factors assigned to it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::chordal::{self, UGraph, VarSet};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, FactorId, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionId(pub usize);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A clique of a region: a nonempty variable set whose joint configurations
/// are features of the region's family.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clique(pub VarSet);

impl Clique {
    pub fn new(vars: impl IntoIterator<Item = VarId>) -> Self {
        Clique(vars.into_iter().collect())
    }

    pub fn vars(&self) -> &VarSet {
        &self.0
    }

    pub fn is_subset(&self, other: &Clique) -> bool {
        self.0.is_subset(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub id: RegionId,
    pub vars: VarSet,
    pub cliques: BTreeSet<Clique>,
    pub factors: BTreeSet<FactorId>,
}

impl Region {
    /// A complete region: one clique over all of `vars`.
    pub fn complete(vars: VarSet) -> Self {
        Region {
            id: RegionId(usize::MAX),
            cliques: [Clique(vars.clone())].into_iter().collect(),
            vars,
            factors: BTreeSet::new(),
        }
    }

    /// A region whose variables are the union of its cliques.
    pub fn from_cliques(cliques: impl IntoIterator<Item = Clique>) -> Self {
        let cliques: BTreeSet<Clique> = cliques.into_iter().collect();
        let vars = cliques.iter().flat_map(|c| c.0.iter().copied()).collect();
        Region {
            id: RegionId(usize::MAX),
            vars,
            cliques,
            factors: BTreeSet::new(),
        }
    }

    pub fn with_factors(mut self, factors: impl IntoIterator<Item = FactorId>) -> Self {
        self.factors = factors.into_iter().collect();
        self
    }

    /// One clique covering exactly the region's variables.
    pub fn is_complete(&self) -> bool {
        self.cliques.len() == 1 && self.cliques.iter().next().map(|c| &c.0) == Some(&self.vars)
    }

    /// Removes empty cliques and cliques contained in another clique. The
    /// discrete family is unchanged.
    pub fn prune_cliques(&mut self) {
        let all: Vec<Clique> = self.cliques.iter().filter(|c| !c.0.is_empty()).cloned().collect();
        self.cliques = all
            .iter()
            .filter(|c| !all.iter().any(|d| d != *c && c.is_subset(d)))
            .cloned()
            .collect();
    }

    /// Content key: two regions with the same key are duplicates.
    pub fn content_key(&self) -> (VarSet, BTreeSet<Clique>, BTreeSet<FactorId>) {
        (self.vars.clone(), self.cliques.clone(), self.factors.clone())
    }

    /// The structure graph linking variables that share a clique or an
    /// assigned factor.
    pub fn structure_graph(&self, scopes: &BTreeMap<FactorId, VarSet>) -> UGraph {
        let mut g = UGraph::with_nodes(self.vars.iter().copied());
        for c in &self.cliques {
            g.add_clique(&c.0);
        }
        for f in &self.factors {
            if let Some(s) = scopes.get(f) {
                g.add_clique(s);
            }
        }
        g
    }
}

/// True iff every clique of `d` lies inside some clique of `r`.
pub fn subsumes(r: &Region, d: &Region) -> bool {
    d.cliques
        .iter()
        .all(|dc| r.cliques.iter().any(|rc| dc.is_subset(rc)))
}

/// True iff `cliques` are exactly the maximal cliques of a chordal graph.
pub fn is_decomposable(cliques: &BTreeSet<Clique>) -> bool {
    chordal::is_decomposable(cliques.iter().map(|c| &c.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CountingNumbers(pub BTreeMap<RegionId, i64>);

impl CountingNumbers {
    pub fn get(&self, id: RegionId) -> i64 {
        self.0[&id]
    }

    pub fn total(&self) -> i64 {
        self.0.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityReport {
    pub connected_per_variable: BTreeMap<VarId, bool>,
    pub balanced_per_variable: BTreeMap<VarId, bool>,
    pub hierarchy_ok: BTreeMap<(RegionId, RegionId), bool>,
    /// Violations of the structural invariants (acyclicity, factor
    /// assignment, variable coverage).
    pub structural: Vec<String>,
    pub overall: bool,
}

impl ValidityReport {
    /// Human-readable list of every failed check.
    pub fn failures(&self) -> Vec<String> {
        let mut out = self.structural.clone();
        for (v, ok) in &self.connected_per_variable {
            if !ok {
                out.push(format!("connectedness fails for variable {v}"));
            }
        }
        for (v, ok) in &self.balanced_per_variable {
            if !ok {
                out.push(format!("balancedness fails for variable {v}"));
            }
        }
        for ((p, c), ok) in &self.hierarchy_ok {
            if !ok {
                out.push(format!("hierarchy fails on edge {p} -> {c}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionGraph {
    regions: BTreeMap<RegionId, Region>,
    parents: BTreeMap<RegionId, BTreeSet<RegionId>>,
    children: BTreeMap<RegionId, BTreeSet<RegionId>>,
    scopes: BTreeMap<FactorId, VarSet>,
    next_id: usize,
}

impl RegionGraph {
    /// Empty graph for a model with the given factor scopes.
    pub fn new(scopes: BTreeMap<FactorId, VarSet>) -> Self {
        RegionGraph {
            scopes,
            ..Default::default()
        }
    }

    pub fn for_model(fg: &FactorGraph) -> Self {
        RegionGraph::new(fg.factors().iter().map(|f| (f.id, f.scope_set())).collect())
    }

    pub fn scopes(&self) -> &BTreeMap<FactorId, VarSet> {
        &self.scopes
    }

    pub fn scope(&self, f: FactorId) -> Option<&VarSet> {
        self.scopes.get(&f)
    }

    /// Adds a region, assigning it a fresh id.
    pub fn add_region(&mut self, mut region: Region) -> RegionId {
        let id = RegionId(self.next_id);
        self.next_id += 1;
        region.id = id;
        self.regions.insert(id, region);
        self.parents.insert(id, BTreeSet::new());
        self.children.insert(id, BTreeSet::new());
        id
    }

    /// Adds a region under a caller-chosen id (used by parsers).
    pub fn insert_region(&mut self, region: Region) -> Result<()> {
        let id = region.id;
        if self.regions.contains_key(&id) {
            return Err(Error::InvalidRegionGraph(format!("duplicate region id {id}")));
        }
        self.next_id = self.next_id.max(id.0 + 1);
        self.regions.insert(id, region);
        self.parents.insert(id, BTreeSet::new());
        self.children.insert(id, BTreeSet::new());
        Ok(())
    }

    pub fn remove_region(&mut self, id: RegionId) -> Result<Region> {
        let r = self.regions.remove(&id).ok_or(Error::UnknownRegion(id))?;
        for p in self.parents.remove(&id).unwrap_or_default() {
            self.children.get_mut(&p).map(|s| s.remove(&id));
        }
        for c in self.children.remove(&id).unwrap_or_default() {
            self.parents.get_mut(&c).map(|s| s.remove(&id));
        }
        Ok(r)
    }

    pub fn add_edge(&mut self, parent: RegionId, child: RegionId) -> Result<()> {
        if !self.regions.contains_key(&parent) {
            return Err(Error::UnknownRegion(parent));
        }
        if !self.regions.contains_key(&child) {
            return Err(Error::UnknownRegion(child));
        }
        if parent == child {
            return Err(Error::CyclicGraph);
        }
        self.children.get_mut(&parent).expect("present").insert(child);
        self.parents.get_mut(&child).expect("present").insert(parent);
        Ok(())
    }

    pub fn remove_edge(&mut self, parent: RegionId, child: RegionId) -> bool {
        let a = self.children.get_mut(&parent).map(|s| s.remove(&child)).unwrap_or(false);
        let b = self.parents.get_mut(&child).map(|s| s.remove(&parent)).unwrap_or(false);
        a && b
    }

    pub fn has_edge(&self, parent: RegionId, child: RegionId) -> bool {
        self.children.get(&parent).is_some_and(|s| s.contains(&child))
    }

    pub fn region(&self, id: RegionId) -> Result<&Region> {
        self.regions.get(&id).ok_or(Error::UnknownRegion(id))
    }

    pub fn region_mut(&mut self, id: RegionId) -> Result<&mut Region> {
        self.regions.get_mut(&id).ok_or(Error::UnknownRegion(id))
    }

    pub fn contains(&self, id: RegionId) -> bool {
        self.regions.contains_key(&id)
    }

    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.regions.values()
    }

    pub fn ids(&self) -> Vec<RegionId> {
        self.regions.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn edges(&self) -> Vec<(RegionId, RegionId)> {
        self.children
            .iter()
            .flat_map(|(&p, cs)| cs.iter().map(move |&c| (p, c)))
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.children.values().map(|s| s.len()).sum()
    }

    pub fn parents(&self, id: RegionId) -> &BTreeSet<RegionId> {
        static EMPTY: BTreeSet<RegionId> = BTreeSet::new();
        self.parents.get(&id).unwrap_or(&EMPTY)
    }

    pub fn children(&self, id: RegionId) -> &BTreeSet<RegionId> {
        static EMPTY: BTreeSet<RegionId> = BTreeSet::new();
        self.children.get(&id).unwrap_or(&EMPTY)
    }

    pub fn is_outer(&self, id: RegionId) -> bool {
        self.parents(id).is_empty()
    }

    pub fn outer_regions(&self) -> Vec<RegionId> {
        self.regions.keys().copied().filter(|&r| self.is_outer(r)).collect()
    }

    pub fn inner_regions(&self) -> Vec<RegionId> {
        self.regions.keys().copied().filter(|&r| !self.is_outer(r)).collect()
    }

    /// All variables mentioned by regions or factor scopes.
    pub fn variables(&self) -> VarSet {
        let mut v: VarSet = self.regions.values().flat_map(|r| r.vars.iter().copied()).collect();
        for s in self.scopes.values() {
            v.extend(s.iter().copied());
        }
        v
    }

    pub fn ancestors(&self, id: RegionId) -> BTreeSet<RegionId> {
        self.reach(id, |g, r| g.parents(r))
    }

    pub fn descendants(&self, id: RegionId) -> BTreeSet<RegionId> {
        self.reach(id, |g, r| g.children(r))
    }

    fn reach<'a>(
        &'a self,
        id: RegionId,
        next: impl Fn(&'a Self, RegionId) -> &'a BTreeSet<RegionId>,
    ) -> BTreeSet<RegionId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<RegionId> = next(self, id).iter().copied().collect();
        while let Some(r) = stack.pop() {
            if r != id && out.insert(r) {
                stack.extend(next(self, r).iter().copied());
            } else if r == id {
                // cycle through `id`; record it so callers can notice
                out.insert(r);
            }
        }
        out
    }

    /// True when `to` can be reached from `from` along directed edges
    /// without using the direct edge `from -> to`.
    pub fn reachable_avoiding_edge(&self, from: RegionId, to: RegionId) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<RegionId> = self
            .children(from)
            .iter()
            .copied()
            .filter(|&c| c != to)
            .collect();
        while let Some(r) = stack.pop() {
            if r == to {
                return true;
            }
            if seen.insert(r) {
                stack.extend(self.children(r).iter().copied());
            }
        }
        false
    }

    /// Kahn topological order (parents first, ties by id).
    pub fn topological_order(&self) -> Result<Vec<RegionId>> {
        let mut indeg: BTreeMap<RegionId, usize> =
            self.regions.keys().map(|&r| (r, self.parents(r).len())).collect();
        let mut ready: BTreeSet<RegionId> =
            indeg.iter().filter(|(_, &d)| d == 0).map(|(&r, _)| r).collect();
        let mut order = Vec::with_capacity(self.regions.len());
        while let Some(r) = ready.pop_first() {
            order.push(r);
            for &c in self.children(r) {
                let d = indeg.get_mut(&c).expect("known child");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != self.regions.len() {
            return Err(Error::CyclicGraph);
        }
        Ok(order)
    }

    /// Counting numbers `c_R = 1 − Σ_{A ∈ an(R)} c_A`, computed top-down.
    pub fn counting_numbers(&self) -> Result<CountingNumbers> {
        let order = self.topological_order()?;
        let mut anc: BTreeMap<RegionId, BTreeSet<RegionId>> = BTreeMap::new();
        let mut c: BTreeMap<RegionId, i64> = BTreeMap::new();
        for r in order {
            let mut a = BTreeSet::new();
            for &p in self.parents(r) {
                a.insert(p);
                a.extend(anc[&p].iter().copied());
            }
            let s: i64 = a.iter().map(|x| c[x]).sum();
            c.insert(r, 1 - s);
            anc.insert(r, a);
        }
        Ok(CountingNumbers(c))
    }

    pub fn total_counting_number(&self) -> Result<i64> {
        Ok(self.counting_numbers()?.total())
    }

    /// No undirected cycle among regions (the region graph is a forest).
    pub fn is_acyclic(&self) -> bool {
        let mut parent: BTreeMap<RegionId, RegionId> = self.regions.keys().map(|&r| (r, r)).collect();
        fn find(p: &mut BTreeMap<RegionId, RegionId>, x: RegionId) -> RegionId {
            let mut r = x;
            while p[&r] != r {
                r = p[&r];
            }
            r
        }
        for (a, b) in self.edges() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return false;
            }
            parent.insert(ra, rb);
        }
        true
    }

    /// Every inner region is complete (an ordinary region graph).
    pub fn is_ordinary(&self) -> bool {
        self.inner_regions()
            .iter()
            .all(|&r| self.regions[&r].is_complete())
    }

    pub fn structure_graph(&self, id: RegionId) -> Result<UGraph> {
        Ok(self.region(id)?.structure_graph(&self.scopes))
    }

    /// Checks connectedness and balancedness per variable, hierarchy per
    /// edge, and the structural invariants. Failures are reported, not
    /// raised.
    pub fn validate(&self) -> ValidityReport {
        let mut rep = ValidityReport::default();
        for (&p, cs) in &self.children {
            for &c in cs {
                rep.hierarchy_ok
                    .insert((p, c), subsumes(&self.regions[&p], &self.regions[&c]));
            }
        }
        // factor assignment and region coverage
        let mut owner: BTreeMap<FactorId, Vec<RegionId>> = BTreeMap::new();
        for r in self.regions.values() {
            for &f in &r.factors {
                owner.entry(f).or_default().push(r.id);
                match self.scopes.get(&f) {
                    None => rep.structural.push(format!("region {} holds unknown factor {f}", r.id)),
                    Some(s) if !s.is_subset(&r.vars) => rep
                        .structural
                        .push(format!("factor {f} scope not inside region {}", r.id)),
                    _ => {}
                }
            }
            if !r.factors.is_empty() && !self.is_outer(r.id) {
                rep.structural
                    .push(format!("inner region {} carries factors", r.id));
            }
            let mut covered: VarSet = r.cliques.iter().flat_map(|c| c.0.iter().copied()).collect();
            for f in &r.factors {
                if let Some(s) = self.scopes.get(f) {
                    covered.extend(s.iter().copied());
                }
            }
            if covered != r.vars {
                rep.structural.push(format!(
                    "region {} variables do not match its cliques and factors",
                    r.id
                ));
            }
            if r.cliques.iter().any(|c| c.0.is_empty()) {
                rep.structural.push(format!("region {} has an empty clique", r.id));
            }
        }
        for &f in self.scopes.keys() {
            match owner.get(&f).map(|v| v.len()).unwrap_or(0) {
                1 => {}
                0 => rep.structural.push(format!("factor {f} is not assigned")),
                k => rep.structural.push(format!("factor {f} is assigned to {k} regions")),
            }
        }
        let counting = match self.counting_numbers() {
            Ok(c) => Some(c),
            Err(_) => {
                rep.structural.push("region graph has a directed cycle".into());
                None
            }
        };
        for v in self.variables() {
            let members: BTreeSet<RegionId> = self
                .regions
                .values()
                .filter(|r| r.vars.contains(&v))
                .map(|r| r.id)
                .collect();
            rep.connected_per_variable
                .insert(v, !members.is_empty() && self.induced_connected(&members));
            let balanced = counting
                .as_ref()
                .map(|c| members.iter().map(|&r| c.get(r)).sum::<i64>() == 1)
                .unwrap_or(false);
            rep.balanced_per_variable.insert(v, balanced);
        }
        rep.overall = rep.structural.is_empty()
            && rep.connected_per_variable.values().all(|&b| b)
            && rep.balanced_per_variable.values().all(|&b| b)
            && rep.hierarchy_ok.values().all(|&b| b);
        rep
    }

    fn induced_connected(&self, members: &BTreeSet<RegionId>) -> bool {
        let Some(&start) = members.iter().next() else {
            return true;
        };
        let mut seen: BTreeSet<RegionId> = [start].into_iter().collect();
        let mut queue = VecDeque::from([start]);
        while let Some(r) = queue.pop_front() {
            for &n in self.parents(r).iter().chain(self.children(r)) {
                if members.contains(&n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == members.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> VarSet {
        v.iter().copied().collect()
    }

    fn clique(v: &[usize]) -> Clique {
        Clique::new(v.iter().copied())
    }

    fn scopes(edges: &[&[usize]]) -> BTreeMap<FactorId, VarSet> {
        edges.iter().enumerate().map(|(i, e)| (i, set(e))).collect()
    }

    /// Bethe graph of the triangle 0-1-2 built by hand.
    fn triangle_bethe() -> (RegionGraph, Vec<RegionId>) {
        let mut g = RegionGraph::new(scopes(&[&[0, 1], &[1, 2], &[0, 2]]));
        let mut ids = Vec::new();
        for (f, e) in [[0, 1], [1, 2], [0, 2]].iter().enumerate() {
            ids.push(g.add_region(Region::complete(set(e)).with_factors([f])));
        }
        for v in 0..3 {
            let n = g.add_region(Region::complete(set(&[v])));
            for (k, e) in [[0, 1], [1, 2], [0, 2]].iter().enumerate() {
                if e.contains(&v) {
                    g.add_edge(ids[k], n).unwrap();
                }
            }
            ids.push(n);
        }
        (g, ids)
    }

    #[test]
    fn bethe_triangle_counting_numbers() {
        let (g, ids) = triangle_bethe();
        let c = g.counting_numbers().unwrap();
        let got: Vec<i64> = ids.iter().map(|&r| c.get(r)).collect();
        assert_eq!(got, vec![1, 1, 1, -1, -1, -1]);
        assert_eq!(c.total(), 0);
        assert!(g.validate().overall);
        assert!(!g.is_acyclic());
    }

    #[test]
    fn deleting_a_node_region_breaks_balance() {
        let (mut g, ids) = triangle_bethe();
        g.remove_region(ids[3]).unwrap();
        let rep = g.validate();
        assert!(!rep.overall);
        assert!(!rep.balanced_per_variable[&0]);
        assert!(rep.balanced_per_variable[&1]);
    }

    #[test]
    fn hierarchy_failure_is_reported() {
        let mut g = RegionGraph::new(scopes(&[&[1, 2]]));
        let p = g.add_region(Region::from_cliques([clique(&[1, 2]), clique(&[3])]).with_factors([0]));
        let c = g.add_region(Region::from_cliques([clique(&[1, 3])]));
        g.add_edge(p, c).unwrap();
        let rep = g.validate();
        assert_eq!(rep.hierarchy_ok[&(p, c)], false);
        assert!(!rep.overall);
    }

    #[test]
    fn subsumption_examples() {
        let r = Region::from_cliques([clique(&[1, 2, 3])]);
        let d = Region::from_cliques([clique(&[1, 2]), clique(&[3])]);
        assert!(subsumes(&r, &d));
        let r = Region::from_cliques([clique(&[1, 2]), clique(&[2, 3])]);
        let d = Region::from_cliques([clique(&[1, 3])]);
        assert!(!subsumes(&r, &d));
        assert!(subsumes(&r, &r));
    }

    #[test]
    fn structure_graph_examples() {
        let r = Region::from_cliques([clique(&[1, 2]), clique(&[2, 3])]);
        let g = r.structure_graph(&BTreeMap::new());
        assert_eq!(g.edges(), [(1, 2), (2, 3)].into_iter().collect());
        let tri = Region::from_cliques([clique(&[1, 2, 3])]);
        assert_eq!(tri.structure_graph(&BTreeMap::new()).edges().len(), 3);
        let sc = scopes(&[&[], &[], &[], &[], &[4, 5]]);
        let mut r = Region::from_cliques([]);
        r.vars = set(&[4, 5]);
        r.factors = [4].into_iter().collect();
        assert_eq!(r.structure_graph(&sc).edges(), [(4, 5)].into_iter().collect());
    }

    #[test]
    fn cycles_are_detected() {
        let mut g = RegionGraph::new(BTreeMap::new());
        let a = g.add_region(Region::complete(set(&[0])));
        let b = g.add_region(Region::complete(set(&[0])));
        g.add_edge(a, b).unwrap();
        g.add_edge(b, a).unwrap();
        assert_eq!(g.counting_numbers(), Err(Error::CyclicGraph));
        assert!(!g.validate().overall);
    }

    #[test]
    fn completeness_and_pruning() {
        let mut r = Region::from_cliques([clique(&[1, 2]), clique(&[1]), clique(&[2, 3])]);
        assert!(!r.is_complete());
        r.prune_cliques();
        assert_eq!(r.cliques.len(), 2);
        assert!(Region::complete(set(&[1, 2])).is_complete());
    }
}
