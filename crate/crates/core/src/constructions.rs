//! Builders for the standard region graphs: Bethe, cluster-variation
//! closures, width-w star graphs, overlapping grid boxes, loop-graphs and
//! two-layer EP-graphs.

use std::collections::{BTreeMap, BTreeSet};

use crate::chordal::VarSet;
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, FactorId, VarId};
use crate::region_graph::{is_decomposable, Clique, Region, RegionGraph, RegionId};

fn set(vars: impl IntoIterator<Item = VarId>) -> VarSet {
    vars.into_iter().collect()
}

/// One outer region per factor, one inner region per variable.
pub fn bethe(fg: &FactorGraph) -> RegionGraph {
    let mut rg = RegionGraph::for_model(fg);
    let nodes: Vec<RegionId> = (0..fg.num_vars())
        .map(|v| rg.add_region(Region::complete(set([v]))))
        .collect();
    for f in fg.factors() {
        let r = rg.add_region(Region::complete(f.scope_set()).with_factors([f.id]));
        for &v in &f.scope {
            rg.add_edge(r, nodes[v]).expect("fresh regions");
        }
    }
    rg
}

/// Closes `clusters` under intersection and links the result by the Hasse
/// diagram of set inclusion. Every region is complete; each factor goes to
/// the first listed cluster covering it.
pub fn cluster_variation(fg: &FactorGraph, clusters: &[VarSet]) -> Result<RegionGraph> {
    for (i, a) in clusters.iter().enumerate() {
        if a.is_empty() {
            return Err(Error::InvalidRegionGraph("empty outer cluster".into()));
        }
        for (j, b) in clusters.iter().enumerate() {
            if i != j && a.is_subset(b) {
                return Err(Error::InvalidRegionGraph(format!(
                    "outer cluster {i} is contained in outer cluster {j}"
                )));
            }
        }
    }
    let mut owner: BTreeMap<usize, Vec<FactorId>> = BTreeMap::new();
    for f in fg.factors() {
        let scope = f.scope_set();
        let k = clusters
            .iter()
            .position(|c| scope.is_subset(c))
            .ok_or(Error::UncoveredFactor(f.id))?;
        owner.entry(k).or_default().push(f.id);
    }

    let mut all: BTreeSet<VarSet> = clusters.iter().cloned().collect();
    loop {
        let current: Vec<VarSet> = all.iter().cloned().collect();
        let mut grew = false;
        for (i, a) in current.iter().enumerate() {
            for b in &current[i + 1..] {
                let x: VarSet = a.intersection(b).copied().collect();
                if !x.is_empty() && all.insert(x) {
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }

    let mut rg = RegionGraph::for_model(fg);
    let mut id_of: BTreeMap<VarSet, RegionId> = BTreeMap::new();
    for (k, c) in clusters.iter().enumerate() {
        let r = Region::complete(c.clone()).with_factors(owner.get(&k).cloned().unwrap_or_default());
        id_of.insert(c.clone(), rg.add_region(r));
    }
    let mut inner: Vec<VarSet> = all.iter().filter(|s| !id_of.contains_key(*s)).cloned().collect();
    inner.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    for s in inner {
        let id = rg.add_region(Region::complete(s.clone()));
        id_of.insert(s, id);
    }
    let sets: Vec<&VarSet> = all.iter().collect();
    for a in &sets {
        for b in &sets {
            if b.len() < a.len() && b.is_subset(a) {
                let covered = sets
                    .iter()
                    .any(|c| c.len() > b.len() && c.len() < a.len() && b.is_subset(c) && c.is_subset(a));
                if !covered {
                    rg.add_edge(id_of[*a], id_of[*b])?;
                }
            }
        }
    }
    Ok(rg)
}

fn check_pairwise(fg: &FactorGraph) -> Result<()> {
    match fg.first_non_pairwise() {
        Some(f) => Err(Error::NotPairwise(f)),
        None => Ok(()),
    }
}

/// Outer clusters of the width-`w` star construction: `roots ∪ {i, j}` for
/// every pairwise factor with both ends outside the root set, plus
/// `roots ∪ scope` for any factor not yet covered.
pub fn star_clusters(fg: &FactorGraph, width: usize, node_order: &[VarId]) -> Result<Vec<VarSet>> {
    check_pairwise(fg)?;
    let n = fg.num_vars();
    if width < 1 || width + 2 > n {
        return Err(Error::WidthTooLarge { width, n });
    }
    let order: Vec<VarId> = if node_order.is_empty() {
        (0..n).collect()
    } else {
        node_order.to_vec()
    };
    if set(order.iter().copied()) != set(0..n) || order.len() != n {
        return Err(Error::InvalidModel("node order must be a permutation of the variables".into()));
    }
    let roots: VarSet = order[..width].iter().copied().collect();
    let mut clusters: Vec<VarSet> = Vec::new();
    for (i, j) in fg.pair_edges() {
        if !roots.contains(&i) && !roots.contains(&j) {
            let mut c = roots.clone();
            c.extend([i, j]);
            clusters.push(c);
        }
    }
    for f in fg.factors() {
        let scope = f.scope_set();
        if !clusters.iter().any(|c| scope.is_subset(c)) {
            let mut c = roots.clone();
            c.extend(scope.iter().copied());
            clusters.push(c);
        }
    }
    Ok(maximal_distinct(clusters))
}

/// Deduplicates, drops sets contained in another, keeps first-seen order.
pub fn maximal_distinct(sets: Vec<VarSet>) -> Vec<VarSet> {
    let mut out: Vec<VarSet> = Vec::new();
    for s in &sets {
        if out.contains(s) {
            continue;
        }
        if sets.iter().any(|t| t != s && s.is_subset(t)) {
            continue;
        }
        out.push(s.clone());
    }
    out
}

/// Width-`w` star region graph: the cluster-variation closure of
/// [`star_clusters`].
pub fn star_rg(fg: &FactorGraph, width: usize, node_order: &[VarId]) -> Result<RegionGraph> {
    let clusters = star_clusters(fg, width, node_order)?;
    cluster_variation(fg, &clusters)
}

fn box_positions(dim: usize, size: usize) -> Vec<usize> {
    if size >= dim {
        return vec![0];
    }
    let step = size - 1;
    let mut p = vec![0];
    while p.last().unwrap() + step + size <= dim {
        let next = p.last().unwrap() + step;
        p.push(next);
    }
    if p.last().unwrap() + size < dim {
        p.push(dim - size);
    }
    p
}

/// Outer clusters for `box_rows × box_cols` boxes on a `rows × cols` grid,
/// stepping by one less than the box size so neighbours share a side. When
/// the boxes do not tile exactly, a final placement flush with the border is
/// added.
pub fn grid_box_clusters(rows: usize, cols: usize, box_rows: usize, box_cols: usize) -> Result<Vec<VarSet>> {
    let ok = |dim: usize, size: usize| size >= 1 && size <= dim && (size >= 2 || dim == 1);
    if !ok(rows, box_rows) || !ok(cols, box_cols) {
        return Err(Error::InvalidDims(format!(
            "box {box_rows}x{box_cols} does not fit grid {rows}x{cols}"
        )));
    }
    let mut out = Vec::new();
    for &r0 in &box_positions(rows, box_rows) {
        for &c0 in &box_positions(cols, box_cols) {
            out.push(set((r0..r0 + box_rows).flat_map(|r| (c0..c0 + box_cols).map(move |c| r * cols + c))));
        }
    }
    Ok(out)
}

/// Overlapping-boxes region graph on a grid model.
pub fn grid_boxes(
    fg: &FactorGraph,
    rows: usize,
    cols: usize,
    box_rows: usize,
    box_cols: usize,
) -> Result<RegionGraph> {
    if fg.num_vars() != rows * cols {
        return Err(Error::InvalidDims(format!(
            "model has {} variables, grid {rows}x{cols} needs {}",
            fg.num_vars(),
            rows * cols
        )));
    }
    cluster_variation(fg, &grid_box_clusters(rows, cols, box_rows, box_cols)?)
}

/// A set of loops, each an ordered cycle of variables.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopSpec {
    pub loops: Vec<Vec<VarId>>,
}

impl LoopSpec {
    pub fn new(loops: Vec<Vec<VarId>>) -> Self {
        LoopSpec { loops }
    }

    /// Edges of loop `k` as ordered pairs `(a, b)` with `a < b`.
    pub fn loop_edges(cycle: &[VarId]) -> Vec<(VarId, VarId)> {
        (0..cycle.len())
            .map(|i| {
                let (a, b) = (cycle[i], cycle[(i + 1) % cycle.len()]);
                (a.min(b), a.max(b))
            })
            .collect()
    }
}

/// Unit squares of a `rows × cols` grid as loops.
pub fn grid_faces(rows: usize, cols: usize) -> Result<LoopSpec> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidDims(format!("grid faces need at least 2x2, got {rows}x{cols}")));
    }
    let mut loops = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let v = r * cols + c;
            loops.push(vec![v, v + 1, v + cols + 1, v + cols]);
        }
    }
    Ok(LoopSpec { loops })
}

/// Three-layer loop-graph: loop regions parent their edge regions, edge
/// regions parent node regions for variables shared by two or more edge
/// regions.
///
/// Pairwise factors go to the first loop containing their edge, otherwise
/// to their own outer edge region. Unary factors go to the first outer
/// region containing the variable. `extra_edges` adds factor-free edge
/// regions (overlaps).
pub fn loop_graph(fg: &FactorGraph, spec: &LoopSpec, extra_edges: &[(VarId, VarId)]) -> Result<RegionGraph> {
    check_pairwise(fg)?;
    let model_edges = fg.pair_edges();
    let mut seen_loops: BTreeSet<VarSet> = BTreeSet::new();
    for cycle in &spec.loops {
        let distinct = set(cycle.iter().copied());
        let simple = cycle.len() >= 3 && distinct.len() == cycle.len();
        if !simple || !LoopSpec::loop_edges(cycle).iter().all(|e| model_edges.contains(e)) {
            return Err(Error::NotACycle(cycle.clone()));
        }
        if !seen_loops.insert(distinct) {
            return Err(Error::InvalidRegionGraph(format!("duplicate loop {cycle:?}")));
        }
    }
    let mut rg = RegionGraph::for_model(fg);

    let loop_ids: Vec<RegionId> = spec
        .loops
        .iter()
        .map(|cycle| {
            let cliques = LoopSpec::loop_edges(cycle).into_iter().map(|(a, b)| Clique::new([a, b]));
            rg.add_region(Region::from_cliques(cliques))
        })
        .collect();

    let mut edge_set: BTreeSet<(VarId, VarId)> = BTreeSet::new();
    for cycle in &spec.loops {
        edge_set.extend(LoopSpec::loop_edges(cycle));
    }
    edge_set.extend(model_edges.iter().copied());
    for &(a, b) in extra_edges {
        if a == b {
            return Err(Error::InvalidRegionGraph(format!("degenerate extra edge ({a}, {a})")));
        }
        edge_set.insert((a.min(b), a.max(b)));
    }
    let mut edge_ids: BTreeMap<(VarId, VarId), RegionId> = BTreeMap::new();
    for &(a, b) in &edge_set {
        let id = rg.add_region(Region::complete(set([a, b])));
        edge_ids.insert((a, b), id);
    }
    for (k, cycle) in spec.loops.iter().enumerate() {
        for e in LoopSpec::loop_edges(cycle) {
            rg.add_edge(loop_ids[k], edge_ids[&e])?;
        }
    }

    // factor assignment
    for f in fg.factors() {
        let target = match f.scope.len() {
            2 => {
                let e = (f.scope[0].min(f.scope[1]), f.scope[0].max(f.scope[1]));
                spec.loops
                    .iter()
                    .position(|c| LoopSpec::loop_edges(c).contains(&e))
                    .map(|k| loop_ids[k])
                    .unwrap_or(edge_ids[&e])
            }
            1 => {
                let v = f.scope[0];
                let in_loop = spec.loops.iter().position(|c| c.contains(&v)).map(|k| loop_ids[k]);
                let in_edge = edge_ids
                    .iter()
                    .find(|(&(a, b), &id)| (a == v || b == v) && rg.is_outer(id))
                    .map(|(_, &id)| id);
                in_loop.or(in_edge).ok_or(Error::UnassignedFactor(f.id))?
            }
            _ => return Err(Error::UnassignedFactor(f.id)),
        };
        rg.region_mut(target)?.factors.insert(f.id);
    }

    for v in 0..fg.num_vars() {
        let holders: Vec<RegionId> = edge_ids
            .iter()
            .filter(|(&(a, b), _)| a == v || b == v)
            .map(|(_, &id)| id)
            .collect();
        if holders.len() >= 2 {
            let n = rg.add_region(Region::complete(set([v])));
            for h in holders {
                rg.add_edge(h, n)?;
            }
        } else if holders.is_empty() {
            // isolated variable: its own outer region, holding its unary factors
            let factors: Vec<FactorId> = fg.factors().iter().filter(|f| f.scope == [v]).map(|f| f.id).collect();
            rg.add_region(Region::complete(set([v])).with_factors(factors));
        }
    }
    Ok(rg)
}

/// Outer region of an EP-graph: cliques added on top of the base, and the
/// factors it owns.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OuterSpec {
    pub added_cliques: Vec<VarSet>,
    pub factors: Vec<FactorId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EpGraphSpec {
    pub base_cliques: Vec<VarSet>,
    pub outers: Vec<OuterSpec>,
}

/// Two-layer SRG: every outer region has the base cliques plus its own
/// additions and parents the single base region.
pub fn ep_graph(fg: &FactorGraph, spec: &EpGraphSpec) -> Result<RegionGraph> {
    let base_cliques: BTreeSet<Clique> = spec.base_cliques.iter().map(|c| Clique(c.clone())).collect();
    if !is_decomposable(&base_cliques) {
        return Err(Error::BaseNotDecomposable);
    }
    let base = Region::from_cliques(base_cliques.iter().cloned());
    if base.vars != set(0..fg.num_vars()) {
        return Err(Error::InvalidRegionGraph(
            "base cliques must cover every variable".into(),
        ));
    }
    let mut owner: BTreeMap<FactorId, usize> = BTreeMap::new();
    for (k, o) in spec.outers.iter().enumerate() {
        for &f in &o.factors {
            if f >= fg.num_factors() {
                return Err(Error::InvalidModel(format!("unknown factor {f}")));
            }
            if owner.insert(f, k).is_some() {
                return Err(Error::InvalidRegionGraph(format!("factor {f} assigned twice")));
            }
        }
    }
    if let Some(f) = (0..fg.num_factors()).find(|f| !owner.contains_key(f)) {
        return Err(Error::UncoveredFactor(f));
    }
    let mut rg = RegionGraph::for_model(fg);
    let base_id = rg.add_region(base.clone());
    for (k, o) in spec.outers.iter().enumerate() {
        let mut r = Region::from_cliques(
            base_cliques
                .iter()
                .cloned()
                .chain(o.added_cliques.iter().map(|c| Clique(c.clone()))),
        )
        .with_factors(o.factors.iter().copied());
        r.prune_cliques();
        for f in &o.factors {
            r.vars.extend(fg.factor(*f).scope.iter().copied());
        }
        if r.vars != base.vars || !crate::region_graph::subsumes(&r, &base) {
            return Err(Error::OuterDoesNotSubsumeBase(k));
        }
        let id = rg.add_region(r);
        rg.add_edge(id, base_id)?;
    }
    Ok(rg)
}

/// EP-graph with a fully factorized base: one outer region per factor,
/// adding the factor's scope as a clique.
pub fn factorized_ep_spec(fg: &FactorGraph) -> EpGraphSpec {
    EpGraphSpec {
        base_cliques: (0..fg.num_vars()).map(|v| set([v])).collect(),
        outers: fg
            .factors()
            .iter()
            .map(|f| OuterSpec {
                added_cliques: vec![f.scope_set()],
                factors: vec![f.id],
            })
            .collect(),
    }
}

/// Tree-base EP-graph on a `rows × cols` grid model.
///
/// The base tree holds every horizontal edge plus the first column's
/// vertical edges. Outer region `k` adds the remaining vertical edges
/// between rows `k` and `k+1`, closing one row of unit squares. Factors on
/// row `r` go to outer `max(r, 1) − 1`; vertical factors go to the outer of
/// their row band.
pub fn grid_tree_ep_spec(fg: &FactorGraph, rows: usize, cols: usize) -> Result<EpGraphSpec> {
    if rows < 2 || cols < 2 || fg.num_vars() != rows * cols {
        return Err(Error::InvalidDims(format!("tree EP-graph needs a grid model of at least 2x2, got {rows}x{cols}")));
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut base = Vec::new();
    for r in 0..rows {
        for c in 0..cols - 1 {
            base.push(set([idx(r, c), idx(r, c + 1)]));
        }
    }
    for r in 0..rows - 1 {
        base.push(set([idx(r, 0), idx(r + 1, 0)]));
    }
    let mut outers: Vec<OuterSpec> = (0..rows - 1)
        .map(|k| OuterSpec {
            added_cliques: (1..cols).map(|c| set([idx(k, c), idx(k + 1, c)])).collect(),
            factors: Vec::new(),
        })
        .collect();
    for f in fg.factors() {
        let band = match f.scope.as_slice() {
            &[a, b] => {
                let (a, b) = (a.min(b), a.max(b));
                let (ra, ca, rb, cb) = (a / cols, a % cols, b / cols, b % cols);
                if ra == rb && cb == ca + 1 {
                    ra.max(1) - 1
                } else if ca == cb && rb == ra + 1 {
                    ra
                } else {
                    return Err(Error::InvalidModel(format!("factor {} is not a grid edge", f.id)));
                }
            }
            &[a] => (a / cols).min(rows - 2),
            _ => return Err(Error::NotPairwise(f.id)),
        };
        outers[band].factors.push(f.id);
    }
    Ok(EpGraphSpec {
        base_cliques: base,
        outers,
    })
}

/// EP-graph on `K_{2,3}` (left `0, 1`, right `2, 3, 4`) with a tree base
/// through node 3 plus isolated nodes 2 and 4, and two loop outer regions:
/// `0-2-1-3` and `0-4-1-3`. Pairwise factors go to the loop containing
/// their edge (edges at node 3 split between the two); unary factors on
/// node 4 go to the second loop, the rest to the first.
pub fn k23_ep_spec(fg: &FactorGraph) -> Result<EpGraphSpec> {
    let expected: BTreeSet<(VarId, VarId)> = [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)].into_iter().collect();
    if fg.num_vars() != 5 || fg.pair_edges() != expected {
        return Err(Error::InvalidModel("expected the complete bipartite graph K_{2,3} on 0,1 | 2,3,4".into()));
    }
    let mut outers = vec![
        OuterSpec {
            added_cliques: vec![set([0, 2]), set([1, 2])],
            factors: Vec::new(),
        },
        OuterSpec {
            added_cliques: vec![set([0, 4]), set([1, 4])],
            factors: Vec::new(),
        },
    ];
    for f in fg.factors() {
        let k = match f.scope_set().into_iter().collect::<Vec<_>>().as_slice() {
            [0, 4] | [1, 4] | [1, 3] | [4] => 1,
            [_, _] | [_] => 0,
            _ => return Err(Error::NotPairwise(f.id)),
        };
        outers[k].factors.push(f.id);
    }
    Ok(EpGraphSpec {
        base_cliques: vec![set([0, 3]), set([1, 3]), set([2]), set([4])],
        outers,
    })
}
